import json
import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lerayns.bounds import (
    BETA_QUARTER,
    CONSTANTS,
    BoundReport,
    all_scalar_reports,
    bound_heatflow_pair,
    bound_semigroup_l2,
    bound_semigroup_sup,
    certified_quad,
    constant_reports,
    regularity_time_bound,
    triple_gradient_sum,
    verify_semigroup_estimate,
    verify_sng,
)
from lerayns.fields import VelocityField
from lerayns.grid import Grid
from lerayns.initial_data import localized_random
from lerayns.norms import NormSpec, compute_norm

mp.mp.dps = 30

# Oracles evaluated once with mpmath at 30 digits.
K_ORACLE = float(mp.power(8 * mp.pi, mp.mpf(-3) / 4))
GAMMA_ORACLE = float(mp.power(4 * mp.pi, mp.mpf(-3) / 2))
BETA_ORACLE = float(mp.beta(mp.mpf(1) / 4, mp.mpf(1) / 4))


class TestConstants:
    def test_against_mpmath(self):
        assert CONSTANTS.K == pytest.approx(K_ORACLE, rel=1e-15)
        assert CONSTANTS.Gamma == pytest.approx(GAMMA_ORACLE, rel=1e-15)
        assert BETA_QUARTER == pytest.approx(BETA_ORACLE, rel=1e-14)

    def test_frozen_values(self):
        assert K_ORACLE == pytest.approx(0.0890881838, abs=1e-10)
        assert GAMMA_ORACLE == pytest.approx(0.0224483902, abs=1e-10)
        assert BETA_ORACLE == pytest.approx(7.4162987092, abs=1e-10)

    def test_k2_and_regularity_coefficient(self):
        assert CONSTANTS.K2 < 1
        k3_12 = float(mp.mpf("0.581862001307") ** 12 / 2)
        assert k3_12 <= CONSTANTS.t_reg_coeff
        assert CONSTANTS.t_reg_coeff - k3_12 < 1e-10

    def test_constant_reports_pass(self):
        assert all(r.status == "pass" for r in constant_reports())


class TestClosedForms:
    def test_semigroup_examples(self):
        assert bound_semigroup_l2(1.0, 1.0, 1.0) == pytest.approx(K_ORACLE, rel=1e-15)
        assert bound_semigroup_l2(16.0, 1.0, 1.0) == pytest.approx(K_ORACLE / 8, rel=1e-15)
        assert bound_semigroup_l2(2.0, 1.0, 0.0) == 0.0
        assert bound_semigroup_sup(1.0, 1.0, 1.0) == pytest.approx(K_ORACLE, rel=1e-15)
        assert bound_semigroup_sup(3.0, 0.0, 2.0) == 0.0
        assert bound_semigroup_sup(3.0, 1.5, 4.0) == pytest.approx(2 * bound_semigroup_sup(3.0, 1.5, 2.0))

    @pytest.mark.parametrize("dt", [0.0, -1.0])
    def test_semigroup_rejects_gap(self, dt):
        with pytest.raises(ValueError):
            bound_semigroup_l2(dt, 1.0, 1.0)
        with pytest.raises(ValueError):
            bound_semigroup_sup(dt, 1.0, 1.0)

    def test_heatflow_pair_examples(self):
        assert bound_heatflow_pair(2.0, 0.0, 1.0, 1.0, "l2") == pytest.approx(K_ORACLE / math.sqrt(2), rel=1e-15)
        assert bound_heatflow_pair(2.0, 0.0, 1.0, 1.0, "sup") == pytest.approx(GAMMA_ORACLE / math.sqrt(2), rel=1e-15)
        assert bound_heatflow_pair(5.0, 0.0, 1.0, 0.0) == 0.0

    @pytest.mark.parametrize("args", [(1.0, 0.0, 1.0), (2.0, 1.0, 1.0), (2.0, 1.0, 0.5), (2.0, -1.0, 1.0)])
    def test_heatflow_pair_ordering(self, args):
        with pytest.raises(ValueError):
            bound_heatflow_pair(*args, 1.0)

    def test_regularity_time(self):
        assert regularity_time_bound(0.0) == 0.0
        assert regularity_time_bound(1.0) == 0.000753026
        assert regularity_time_bound(2.0) == pytest.approx(0.012048416, rel=1e-12)
        with pytest.raises(ValueError):
            regularity_time_bound(-1.0)

    @given(st.floats(1e-3, 1e3), st.floats(1e-3, 1e3))
    def test_semigroup_bound_scaling(self, dt, lam):
        # dt^{-3/4} homogeneity
        a = bound_semigroup_l2(dt, 1.0, 1.0)
        b = bound_semigroup_l2(lam * dt, 1.0, 1.0)
        assert b == pytest.approx(a * lam**-0.75, rel=1e-12)


class TestReport:
    def test_margin_and_status(self):
        r = BoundReport("x", {}, 1.0, 2.0)
        assert r.margin == 1.0 and r.passed and r.status == "pass"
        r = BoundReport("x", {}, 2.0, 1.0, tolerance=0.5)
        assert not r.passed and r.status == "fail"

    def test_json(self):
        r = BoundReport("x", {"a": np.float64(1.5)}, np.float64(1.0), 2.0)
        d = json.loads(json.dumps(r.to_dict()))
        assert d["pass"] is True and d["params"]["a"] == 1.5


class TestQuadrature:
    @pytest.mark.parametrize("t0, t", [(0.01, 1.01), (1.0, 2.5), (10.0, 1e3)])
    def test_kernel_integral_vs_mpmath(self, t0, t):
        # x = t - s turns the integral into an incomplete beta, i.e. a 2F1
        span, t_ = mp.mpf(t) - t0, mp.mpf(t)
        exact = t_**-0.5 * 4 * span**0.25 * mp.hyp2f1(0.5, 0.25, 1.25, span / t_)
        q = certified_quad(lambda s: s**-0.5, t0, t, 0.0, -0.75)
        assert q.converged
        assert q.value == pytest.approx(float(exact), rel=1e-10)

    def test_beta_kernel(self):
        q = certified_quad(lambda s: 1.0, 0.0, 1.0, -0.75, -0.75)
        assert q.value == pytest.approx(BETA_ORACLE, abs=1e-10)

    def test_scalar_reports(self):
        reports = all_scalar_reports()
        names = {r.name for r in reports}
        for expected in (
            "kernel_integral_6_root4_2",
            "beta_quarter_identity",
            "beta_quarter_ceiling_8_root2",
            "decay_coefficient_0.636",
            "middle_interval_0.090",
            "final_interval_0.713",
            "sup_contraction_0.504",
        ):
            assert expected in names
        assert all(r.status == "pass" for r in reports), [r.to_dict() for r in reports if r.status != "pass"]
        json.dumps([r.to_dict() for r in reports])


def single_mode(grid, m=2):
    x, y, z = grid.coordinates
    k = m * grid.fundamental
    v = np.cos(k * z) + 0 * (x + y)
    return VelocityField.from_physical(grid, np.stack([v, 0 * v, 0 * v]), divergence_free=True)


class TestFieldVerifiers:
    def test_sng_gradient_saturated_by_single_mode(self):
        u = single_mode(Grid(3, 16))
        rep = {r.name: r for r in verify_sng(u)}["sng_gradient"]
        assert abs(rep.margin) < 1e-10 * rep.rhs
        assert rep.passed

    @given(st.integers(0, 2**20))
    def test_sng_on_localized_fields(self, seed):
        g = Grid(3, 32, 8 * math.pi)
        u = localized_random(g, seed, k0=1.0, energy=1.0, width=2.0)
        for r in verify_sng(u):
            assert r.status == "pass", r.to_dict()

    def test_sng_requires_3d(self, tg2):
        with pytest.raises(ValueError):
            verify_sng(tg2)

    def test_triple_sum_single_mode(self):
        # only D_3 u_1 is non-zero, so the sum reduces to int |D_3 u_1|^2 |D_1 u_1| = 0
        u = single_mode(Grid(3, 16))
        assert triple_gradient_sum(u) == 0.0

    def test_semigroup_zero_field(self, grid3):
        for r in verify_semigroup_estimate(VelocityField.zeros(grid3), [0.1, 1.0]):
            assert r.lhs == 0.0 and r.rhs == 0.0 and r.passed

    @pytest.mark.parametrize("which", ["l2", "sup"])
    def test_semigroup_on_localized_field(self, blob, which):
        reports = verify_semigroup_estimate(blob, [0.1, 1.0, 10.0], which)
        assert all(r.status == "pass" for r in reports)

    def test_spread_field_is_box_limited(self, tg3):
        reports = verify_semigroup_estimate(tg3, [1.0])
        assert reports[0].status == "box-limited"

    def test_semigroup_rejects_unknown_norm(self, blob):
        with pytest.raises(ValueError):
            verify_semigroup_estimate(blob, [1.0], "l3")
