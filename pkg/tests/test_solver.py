import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lerayns.checkpoint import CheckpointError, decode, encode, read_checkpoint, write_checkpoint
from lerayns.fields import VelocityField, divergence_residual
from lerayns.grid import Grid
from lerayns.initial_data import InitialDataSpec, generate_initial_data, localized_random
from lerayns.norms import NormSpec, compute_norm, outer_shell_fraction
from lerayns.operators import MollifierSpec
from lerayns.solver import (
    SolverAbort,
    SolverConfig,
    SolverState,
    Trajectory,
    energy_audit,
    initial_state,
    run,
    step,
)


def tg_config(**kw):
    base = dict(grid=Grid(2, 32), t_end=0.5, initial_data=InitialDataSpec("taylor_green_2d"), delta=0.0, dt=0.05)
    base.update(kw)
    return SolverConfig(**base)


class TestInitialData:
    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            InitialDataSpec("vortex_ring")

    def test_checkpoint_kind_needs_path(self):
        with pytest.raises(ValueError):
            InitialDataSpec("from_checkpoint")

    @given(st.integers(0, 2**20))
    def test_localized_random_contract(self, seed):
        g = Grid(3, 16, 8 * math.pi)
        u = localized_random(g, seed, k0=0.6, energy=2.5, width=2.0)
        assert u.divergence_free
        assert compute_norm(u, NormSpec.l2()) == pytest.approx(math.sqrt(5.0), rel=1e-12)
        assert outer_shell_fraction(g, u.physical()) < 0.01
        assert np.max(np.abs(u.coeffs * ~g.dealias_mask)) == 0.0

    def test_seed_determinism(self, box3):
        a = localized_random(box3, 5, 1.0, 1.0, 2.0)
        b = localized_random(box3, 5, 1.0, 1.0, 2.0)
        c = localized_random(box3, 6, 1.0, 1.0, 2.0)
        assert np.array_equal(a.coeffs, b.coeffs)
        assert not np.array_equal(a.coeffs, c.coeffs)

    def test_peak_beyond_cutoff(self):
        g = Grid(3, 16)
        with pytest.raises(ValueError, match="dealiasing cutoff"):
            localized_random(g, 0, k0=20.0, energy=1.0, width=1.0)

    def test_envelope_narrows_until_localized(self):
        g = Grid(3, 16, 4 * math.pi)
        u = localized_random(g, 0, k0=1.0, energy=1.0, width=50.0)
        assert outer_shell_fraction(g, u.physical()) < 0.01

    def test_from_checkpoint(self, tmp_path, tg3):
        path = tmp_path / "u.lray"
        write_checkpoint(path, tg3, 0.0)
        u = generate_initial_data(InitialDataSpec("from_checkpoint", path=str(path)), tg3.grid)
        assert np.array_equal(u.coeffs, tg3.coeffs)
        with pytest.raises(ValueError):
            generate_initial_data(InitialDataSpec("from_checkpoint", path=str(path)), Grid(3, 32))


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path, blob):
        path = tmp_path / "c.lray"
        write_checkpoint(path, blob, 1.25)
        ck = read_checkpoint(path, certify=True)
        assert ck.t == 1.25
        assert ck.field.grid == blob.grid
        assert ck.field.coeffs.tobytes() == blob.coeffs.tobytes()

    @pytest.mark.parametrize(
        "corrupt, reason",
        [
            (lambda b: b[:10], "truncated"),
            (lambda b: b[:-1], "truncated"),
            (lambda b: b"XXXX" + b[4:], "bad magic"),
            (lambda b: b[:4] + (9).to_bytes(4, "little") + b[8:], "unsupported version"),
            (lambda b: b[:100] + bytes([b[100] ^ 1]) + b[101:], "digest mismatch"),
        ],
    )
    def test_corruption_is_named(self, tg3, corrupt, reason):
        blob = encode(tg3, 0.0)
        with pytest.raises(CheckpointError) as info:
            decode(corrupt(blob))
        assert info.value.reason == reason


class TestStep:
    def test_taylor_green_exact_decay(self):
        cfg = tg_config()
        state, _ = initial_state(cfg)
        for _ in range(10):
            state = step(state, 0.05)
        u0 = compute_norm(initial_state(cfg)[0].u, NormSpec.l2())
        assert compute_norm(state.u, NormSpec.l2()) == pytest.approx(u0 * math.exp(-2 * 0.5), rel=1e-13)

    def test_rejects_nonpositive_dt(self):
        state, _ = initial_state(tg_config())
        with pytest.raises(ValueError):
            step(state, 0.0)

    def test_cfl_violation(self):
        state, _ = initial_state(tg_config())
        with pytest.raises(ValueError, match="CFL"):
            step(state, 10.0, cfl=0.5)

    def test_instability_aborts_with_last_state(self):
        g = Grid(2, 16)
        coeffs = np.zeros((2,) + g.spectral_shape, complex)
        state = SolverState(VelocityField(g, coeffs, True), 0.0, 0, MollifierSpec(0.0))
        bad = state.u.coeffs.copy()
        bad[0, 1, 1] = np.inf
        broken = replace(state, u=VelocityField(g, bad))
        with pytest.raises(SolverAbort) as info:
            step(broken, 0.1)
        assert info.value.last_state is broken
        assert "blow-up or instability" in str(info.value)

    def test_solenoidal_after_step(self, blob):
        state = SolverState(blob, 0.0, 0, MollifierSpec(0.5))
        out = step(state, 0.05)
        assert divergence_residual(out.u.grid, out.u.coeffs) < 1e-12


class TestRun:
    def test_zero_data(self):
        traj = run(SolverConfig(Grid(3, 16), 0.5, InitialDataSpec("zero"), dt_max=0.25))
        assert np.all(traj.norms["l2"] == 0.0)
        assert energy_audit(traj).max_abs_defect == 0.0

    def test_snapshot_targets(self):
        cfg = tg_config(t_end=1.0, snapshot_start=0.25, snapshot_ratio=2.0)
        assert cfg.snapshot_targets() == [0.0, 0.25, 0.5, 1.0]
        cfg = tg_config(t_end=1.0, snapshot_interval=0.3)
        assert cfg.snapshot_targets() == pytest.approx([0.0, 0.3, 0.6, 0.9, 1.0])

    def test_snapshots_land_exactly(self):
        cfg = tg_config(t_end=1.0, dt=None, dt_max=0.07, snapshot_interval=0.25)
        traj = run(cfg)
        assert list(traj.snapshots.times) == [0.0, 0.25, 0.5, 0.75, 1.0]
        assert set(traj.snapshots.times) <= set(traj.norms.times)

    def test_taylor_green_energy(self):
        traj = run(tg_config(t_end=1.0, dt=0.01))
        s = traj.norms
        assert np.max(np.abs(s["l2"] / s["l2"][0] - np.exp(-2 * s.times))) < 1e-12
        rep = energy_audit(traj)
        assert rep.identity_holds and rep.inequality_holds

    def test_default_mollifier_width(self):
        cfg = SolverConfig(Grid(3, 16), 1.0, InitialDataSpec("taylor_green_3d"))
        assert cfg.mollifier.delta == 2 * cfg.grid.spacing

    def test_config_round_trip(self):
        cfg = tg_config(extra_norms=("l4",))
        assert SolverConfig.from_dict(cfg.to_dict()) == cfg

    def test_invalid_config(self):
        with pytest.raises(ValueError):
            tg_config(cfl=1.5)
        with pytest.raises(ValueError):
            tg_config(extra_norms=("bogus",))

    def test_save_load(self, tmp_path):
        traj = run(tg_config(extra_norms=("l4",)))
        files = traj.save(tmp_path)
        assert "norms.csv" in files and "trajectory.json" in files
        back = Trajectory.load(tmp_path)
        assert np.array_equal(back.norms.times, traj.norms.times)
        assert np.array_equal(back.norms["l4"], traj.norms["l4"])
        for t in traj.snapshots.times:
            assert np.array_equal(back.snapshot(t).coeffs, traj.snapshot(t).coeffs)

    def test_snapshot_lookup_suggests_nearest(self):
        traj = run(tg_config())
        with pytest.raises(KeyError, match="nearest snapshot"):
            traj.snapshot(0.2)

    @pytest.mark.parametrize("method", ["stage", "spline"])
    def test_energy_audit_localized(self, method):
        cfg = SolverConfig(Grid(3, 16, 8 * math.pi), 1.0,
                           InitialDataSpec("localized_random", seed=2, k0=0.6, energy=5.0, width=2.0))
        rep = energy_audit(run(cfg), method)
        assert rep.identity_holds

    def test_unknown_audit_method(self):
        with pytest.raises(ValueError):
            energy_audit(run(tg_config()), "simpson")
