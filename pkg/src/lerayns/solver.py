"""Time integration of the mollified Navier-Stokes system on the periodic box.

The state obeys ``du/dt = Lap u + P(-(G_delta * u) . grad u)`` with unit
viscosity.  Steps use a fourth-order integrating-factor Runge-Kutta scheme, so
the diffusive part is exact and only advection limits the step size.
"""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline

from .checkpoint import read_checkpoint, write_checkpoint
from .fields import VelocityField
from .grid import Grid
from .initial_data import InitialDataSpec, generate_initial_data
from .norms import NormKind, NormSpec, norm_of_array, outer_shell_fraction
from .operators import MollifierSpec, mollifier_multiplier, source_array
from .series import NormSeries

log = logging.getLogger(__name__)

ENERGY_TOLERANCE = 1e-6
GEOMETRIC_RATIO = 2.0**0.25


class SolverAbort(RuntimeError):
    """Raised when a step produces non-finite values.

    ``last_state`` is the last finite state; ``trajectory`` (when raised from
    :func:`run`) holds everything recorded up to that point.
    """

    def __init__(self, message: str, last_state: "SolverState", trajectory: "Trajectory | None" = None):
        super().__init__(message)
        self.last_state = last_state
        self.trajectory = trajectory


@dataclass(frozen=True)
class SolverConfig:
    """Run parameters.

    ``dt`` fixes the step; when it is ``None`` the step is ``cfl * h / |u|_inf``
    capped at ``dt_max``.  ``delta = None`` selects two grid spacings.
    Snapshots are kept at ``0``, at ``snapshot_start * snapshot_ratio**j`` (or
    every ``snapshot_interval`` when that is set) and at ``t_end``.
    """

    grid: Grid
    t_end: float
    initial_data: InitialDataSpec
    delta: float | None = None
    dt: float | None = None
    cfl: float = 0.5
    dt_max: float = 0.1
    dealias: bool = True
    record_every: int = 1
    snapshot_start: float = 0.0625
    snapshot_ratio: float = GEOMETRIC_RATIO
    snapshot_interval: float | None = None
    extra_norms: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not (math.isfinite(self.t_end) and self.t_end >= 0):
            raise ValueError("t_end must be finite and >= 0")
        if self.dt is not None and not self.dt > 0:
            raise ValueError("fixed dt must be positive")
        if not 0 < self.cfl <= 1:
            raise ValueError("CFL target must lie in (0, 1]")
        if not self.dt_max > 0:
            raise ValueError("dt_max must be positive")
        if self.delta is not None and not self.delta >= 0:
            raise ValueError("delta must be >= 0")
        if int(self.record_every) != self.record_every or self.record_every < 1:
            raise ValueError("record_every must be a positive integer")
        if not self.snapshot_start > 0 or not self.snapshot_ratio > 1:
            raise ValueError("geometric snapshots need start > 0 and ratio > 1")
        if self.snapshot_interval is not None and not self.snapshot_interval > 0:
            raise ValueError("snapshot_interval must be positive")
        object.__setattr__(self, "extra_norms", tuple(self.extra_norms))
        for label in self.extra_norms:
            NormSpec.parse(label)

    @property
    def mollifier(self) -> MollifierSpec:
        d = 2.0 * self.grid.spacing if self.delta is None else self.delta
        return MollifierSpec(d)

    def snapshot_targets(self) -> list[float]:
        targets = [0.0]
        if self.snapshot_interval is not None:
            j = 1
            while j * self.snapshot_interval < self.t_end * (1 - 1e-12):
                targets.append(j * self.snapshot_interval)
                j += 1
        else:
            j = 0
            while True:
                # rounded so that powers of the ratio land on round numbers
                t = float(f"{self.snapshot_start * self.snapshot_ratio**j:.12g}")
                if t >= self.t_end * (1 - 1e-12):
                    break
                targets.append(t)
                j += 1
        if self.t_end > 0:
            targets.append(float(self.t_end))
        return targets

    def to_dict(self) -> dict:
        return {
            "grid": self.grid.to_dict(),
            "t_end": self.t_end,
            "initial_data": self.initial_data.to_dict(),
            "delta": self.delta,
            "dt": self.dt,
            "cfl": self.cfl,
            "dt_max": self.dt_max,
            "dealias": self.dealias,
            "record_every": self.record_every,
            "snapshot_start": self.snapshot_start,
            "snapshot_ratio": self.snapshot_ratio,
            "snapshot_interval": self.snapshot_interval,
            "extra_norms": list(self.extra_norms),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SolverConfig":
        d = dict(d)
        grid = Grid(**d.pop("grid"))
        init = InitialDataSpec(**d.pop("initial_data"))
        d["extra_norms"] = tuple(d.get("extra_norms", ()))
        return cls(grid=grid, initial_data=init, **d)


@dataclass(frozen=True, eq=False)
class SolverState:
    """Velocity at time ``t`` plus the running dissipation ``2 int_0^t |Du|^2 ds``."""

    u: VelocityField
    t: float
    step_count: int
    delta: MollifierSpec
    dissipation: float = 0.0


def _dissipation_rate(grid: Grid, uh: np.ndarray) -> float:
    return 2.0 * grid.spectral_sum(grid.k_squared * (uh.real**2 + uh.imag**2))


def _ifrk4(grid: Grid, uh: np.ndarray, dt: float, delta: float, dealias: bool) -> tuple[np.ndarray, float]:
    e_full = np.exp(-dt * grid.k_squared)
    e_half = np.exp(-0.5 * dt * grid.k_squared)

    def rhs(v):
        return source_array(grid, v, delta, dealias)

    k1 = rhs(uh)
    s2 = e_half * (uh + 0.5 * dt * k1)
    k2 = rhs(s2)
    s3 = e_half * uh + 0.5 * dt * k2
    k3 = rhs(s3)
    s4 = e_full * uh + dt * (e_half * k3)
    k4 = rhs(s4)
    new = e_full * (uh + (dt / 6.0) * k1) + (dt / 3.0) * (e_half * (k2 + k3)) + (dt / 6.0) * k4
    # The dissipation integral rides along as an extra ODE component, sharing
    # the stage values so that it is fourth-order accurate as well.
    diss = (dt / 6.0) * (
        _dissipation_rate(grid, uh)
        + 2.0 * _dissipation_rate(grid, s2)
        + 2.0 * _dissipation_rate(grid, s3)
        + _dissipation_rate(grid, s4)
    )
    return new, diss


def cfl_step(grid: Grid, sup: float, cfl: float, dt_max: float) -> float:
    if sup <= 0:
        return dt_max
    return min(dt_max, cfl * grid.spacing / sup)


def step(state: SolverState, dt: float, *, dealias: bool = True, cfl: float | None = None) -> SolverState:
    """Advance one integrating-factor RK4 step.

    With ``cfl`` given, ``dt`` is checked against ``cfl * h / |u|_inf`` first.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    grid = state.u.grid
    if cfl is not None:
        sup = norm_of_array(grid, state.u.coeffs, NormSpec.sup())
        limit = cfl * grid.spacing / sup if sup > 0 else math.inf
        if dt > limit * (1 + 1e-12):
            raise ValueError(f"dt={dt:.4g} violates the advective CFL limit {limit:.4g}")
    with np.errstate(over="ignore", invalid="ignore"):
        new, diss = _ifrk4(grid, state.u.coeffs, dt, state.delta.delta, dealias)
    if not (np.all(np.isfinite(new)) and math.isfinite(diss)):
        raise SolverAbort(
            f"blow-up or instability: non-finite velocity after step {state.step_count + 1} "
            f"at t={state.t + dt:.6g} (dt={dt:.3g})",
            state,
        )
    u = VelocityField(grid, new, divergence_free=True)
    return SolverState(u, state.t + dt, state.step_count + 1, state.delta, state.dissipation + diss)


# ---------------------------------------------------------------------------
# snapshots and trajectories


class SnapshotStore:
    """Time-indexed velocity snapshots, held in memory or as checkpoint files."""

    def __init__(self, directory: str | Path | None = None, cache: int = 6):
        self.directory = Path(directory) if directory is not None else None
        if self.directory is not None:
            self.directory.mkdir(parents=True, exist_ok=True)
        self._times: list[float] = []
        self._items: list[VelocityField | Path] = []
        self.digests: list[str | None] = []
        self._cache: dict[int, VelocityField] = {}
        self._cache_size = cache

    def __len__(self) -> int:
        return len(self._times)

    @property
    def times(self) -> np.ndarray:
        return np.array(self._times)

    def add(self, t: float, u: VelocityField) -> None:
        if self._times and not t > self._times[-1]:
            raise ValueError(f"snapshot times must increase: {t} after {self._times[-1]}")
        if self.directory is None:
            self._items.append(u)
            self.digests.append(None)
        else:
            path = self.directory / f"snap_{len(self._times):04d}.lray"
            self.digests.append(write_checkpoint(path, u, t))
            self._items.append(path)
        self._times.append(float(t))

    def add_file(self, t: float, path: Path, digest: str | None = None) -> None:
        if self._times and not t > self._times[-1]:
            raise ValueError("snapshot times must increase")
        self._times.append(float(t))
        self._items.append(Path(path))
        self.digests.append(digest)

    def get(self, i: int) -> VelocityField:
        item = self._items[i]
        if isinstance(item, VelocityField):
            return item
        if i in self._cache:
            return self._cache[i]
        ck = read_checkpoint(item, certify=True)
        if len(self._cache) >= self._cache_size:
            self._cache.pop(next(iter(self._cache)))
        self._cache[i] = ck.field
        return ck.field

    def index_of(self, t: float, rtol: float = 1e-9) -> int:
        times = self.times
        i = int(np.argmin(np.abs(times - t)))
        if abs(times[i] - t) > rtol * max(1.0, abs(t)):
            raise KeyError(
                f"t={t:g} is not a snapshot time; nearest snapshot is t={times[i]:.6g}"
            )
        return i

    def at(self, t: float) -> VelocityField:
        return self.get(self.index_of(t))

    def nearest(self, t: float) -> float:
        times = self.times
        return float(times[int(np.argmin(np.abs(times - t)))])

    def path(self, i: int) -> Path | None:
        item = self._items[i]
        return item if isinstance(item, Path) else None


@dataclass(eq=False)
class Trajectory:
    config: SolverConfig
    norms: NormSeries
    snapshots: SnapshotStore
    u0_l2: float
    step_sizes: np.ndarray
    nominal_dt0: float
    aborted: str | None = None
    wall_time: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def grid(self) -> Grid:
        return self.config.grid

    @property
    def delta(self) -> float:
        return self.config.mollifier.delta

    def snapshot(self, t: float) -> VelocityField:
        return self.snapshots.at(t)

    def save(self, directory: str | Path, snapshots: bool = True) -> dict[str, str]:
        """Write ``norms.csv``, ``steps.csv``, snapshots and ``trajectory.json``.

        Returns a mapping of relative file names to SHA-256 digests.
        """
        import hashlib

        directory = Path(directory)
        snap_dir = directory / "snapshots"
        directory.mkdir(parents=True, exist_ok=True)
        if snapshots:
            snap_dir.mkdir(exist_ok=True)
        files: dict[str, str] = {}
        index = []
        for i, t in enumerate(self.snapshots.times if snapshots else []):
            src = self.snapshots.path(i)
            name = f"snap_{i:04d}.lray"
            dst = snap_dir / name
            if src is None or src.resolve() != dst.resolve():
                digest = write_checkpoint(dst, self.snapshots.get(i), float(t))
            else:
                digest = self.snapshots.digests[i] or hashlib.sha256(dst.read_bytes()).hexdigest()
            files[f"snapshots/{name}"] = digest
            index.append({"t": float(t), "file": f"snapshots/{name}", "sha256": digest})
        text = self.norms.to_csv()
        (directory / "norms.csv").write_text(text)
        files["norms.csv"] = hashlib.sha256(text.encode()).hexdigest()
        steps = "dt\n" + "".join(f"{float(x)!r}\n" for x in self.step_sizes)
        (directory / "steps.csv").write_text(steps)
        files["steps.csv"] = hashlib.sha256(steps.encode()).hexdigest()
        meta = {
            "format": "lerayns-trajectory/1",
            "config": self.config.to_dict(),
            "u0_l2": self.u0_l2,
            "nominal_dt0": self.nominal_dt0,
            "aborted": self.aborted,
            "provenance": self.norms.provenance,
            "snapshots": index,
        }
        body = json.dumps(meta, indent=2, sort_keys=True) + "\n"
        (directory / "trajectory.json").write_text(body)
        files["trajectory.json"] = hashlib.sha256(body.encode()).hexdigest()
        return files

    @classmethod
    def load(cls, directory: str | Path) -> "Trajectory":
        directory = Path(directory)
        meta_path = directory / "trajectory.json"
        if not meta_path.exists():
            raise FileNotFoundError(f"{directory} does not contain trajectory.json")
        meta = json.loads(meta_path.read_text())
        config = SolverConfig.from_dict(meta["config"])
        store = SnapshotStore()
        for entry in meta["snapshots"]:
            store.add_file(entry["t"], directory / entry["file"], entry.get("sha256"))
        norms = NormSeries.from_csv(directory / "norms.csv", meta.get("provenance", ""))
        steps_path = directory / "steps.csv"
        steps = np.array(
            [float(x) for x in steps_path.read_text().split()[1:]] if steps_path.exists() else []
        )
        return cls(config, norms, store, meta["u0_l2"], steps, meta["nominal_dt0"], meta.get("aborted"))


class _Recorder:
    def __init__(self, grid: Grid, extra: tuple[str, ...]):
        self.grid = grid
        self.extra = [(label, NormSpec.parse(label)) for label in extra]
        self.times: list[float] = []
        self.rows: dict[str, list[float]] = {
            n: [] for n in ["l2", "dl2", "d2l2", "sup"] + [l for l, _ in self.extra] + ["diss", "shell"]
        }
        self.last_sup = 0.0

    def measure(self, state: SolverState) -> float:
        """Sup norm only; used by the CFL controller between records."""
        self.last_sup = norm_of_array(self.grid, state.u.coeffs, NormSpec.sup())
        return self.last_sup

    def record(self, state: SolverState) -> None:
        if self.times and state.t <= self.times[-1]:
            return
        g = self.grid
        c = state.u.coeffs
        values = g.inverse(c)
        row = {
            "l2": norm_of_array(g, c, NormSpec.l2()),
            "dl2": norm_of_array(g, c, NormSpec.dl2()),
            "d2l2": norm_of_array(g, c, NormSpec.d2l2()),
            "sup": norm_of_array(g, c, NormSpec.sup(), values),
            "diss": state.dissipation,
            "shell": outer_shell_fraction(g, values),
        }
        for label, spec in self.extra:
            row[label] = norm_of_array(g, c, spec, values)
        self.times.append(state.t)
        for k, v in row.items():
            self.rows[k].append(v)

    def series(self, provenance: str) -> NormSeries:
        return NormSeries(np.array(self.times), {k: np.array(v) for k, v in self.rows.items()}, provenance)


def config_hash(config: SolverConfig) -> str:
    import hashlib

    body = json.dumps(config.to_dict(), sort_keys=True).encode()
    return hashlib.sha256(body).hexdigest()[:16]


def initial_state(config: SolverConfig) -> tuple[SolverState, float]:
    """Mollified, band-limited initial state and the norm of the unmollified data."""
    grid = config.grid
    moll = config.mollifier
    moll.check_resolution(grid)
    u0 = generate_initial_data(config.initial_data, grid)
    u0_l2 = norm_of_array(grid, u0.coeffs, NormSpec.l2())
    coeffs = u0.coeffs * mollifier_multiplier(grid, moll.delta)
    if config.dealias:
        coeffs = coeffs * grid.dealias_mask
    return SolverState(VelocityField(grid, coeffs, divergence_free=True), 0.0, 0, moll), u0_l2


def run(config: SolverConfig, snapshot_dir: str | Path | None = None) -> Trajectory:
    """Integrate from the configured data to ``t_end``.

    Snapshots go to ``snapshot_dir`` as checkpoint files when it is given and
    stay in memory otherwise.  On instability a :class:`SolverAbort` carrying
    the partial trajectory is raised.
    """
    started = time.perf_counter()
    grid = config.grid
    state, u0_l2 = initial_state(config)
    store = SnapshotStore(snapshot_dir)
    rec = _Recorder(grid, config.extra_norms)
    targets = config.snapshot_targets()
    provenance = config_hash(config)

    rec.record(state)
    store.add(0.0, state.u)
    next_target = 1
    steps: list[float] = []
    sup = rec.measure(state)
    nominal_dt0 = config.dt if config.dt is not None else cfl_step(grid, sup, config.cfl, config.dt_max)

    def finish(aborted: str | None) -> Trajectory:
        traj = Trajectory(
            config, rec.series(provenance), store, u0_l2, np.array(steps), nominal_dt0, aborted,
            time.perf_counter() - started,
        )
        return traj

    while next_target < len(targets):
        target = targets[next_target]
        dt = config.dt if config.dt is not None else cfl_step(grid, sup, config.cfl, config.dt_max)
        landing = state.t + dt >= target - 1e-12 * max(1.0, target)
        if landing:
            dt = target - state.t
        try:
            state = step(state, dt, dealias=config.dealias)
        except SolverAbort as exc:
            exc.trajectory = finish(str(exc))
            log.error("%s", exc)
            raise
        steps.append(dt)
        if landing:
            state = replace(state, t=target)
            store.add(target, state.u)
            next_target += 1
            rec.record(state)
        elif state.step_count % config.record_every == 0:
            rec.record(state)
        if config.dt is None:
            sup = rec.measure(state)
    return finish(None)


# ---------------------------------------------------------------------------
# energy accounting


@dataclass(frozen=True)
class EnergyReport:
    """Energy identity ``|u(t)|^2 + 2 int_0^t |Du|^2 - |u(0)|^2`` along a run.

    ``defect`` is measured against the energy of the (mollified) initial state,
    for which equality holds; it is normalised by the energy of the raw data.
    ``data_defect`` uses the raw data energy instead and can only be <= 0 up to
    time-stepping error.
    """

    times: np.ndarray
    energy: np.ndarray
    dissipation: np.ndarray
    defect: np.ndarray
    data_defect: np.ndarray
    reference_energy: float
    data_energy: float
    tolerance: float
    method: str

    @property
    def max_abs_defect(self) -> float:
        return float(np.max(np.abs(self.defect))) if self.defect.size else 0.0

    @property
    def max_defect(self) -> float:
        return float(np.max(self.defect)) if self.defect.size else 0.0

    @property
    def inequality_holds(self) -> bool:
        return self.max_defect <= self.tolerance and float(np.max(self.data_defect, initial=0.0)) <= self.tolerance

    @property
    def identity_holds(self) -> bool:
        return self.max_abs_defect <= self.tolerance

    @property
    def flagged_times(self) -> np.ndarray:
        return self.times[self.defect > self.tolerance]

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "tolerance": self.tolerance,
            "reference_energy": self.reference_energy,
            "data_energy": self.data_energy,
            "max_defect": self.max_defect,
            "max_abs_defect": self.max_abs_defect,
            "inequality_holds": self.inequality_holds,
            "identity_holds": self.identity_holds,
            "flagged_times": self.flagged_times.tolist(),
        }


def energy_audit(traj: Trajectory, method: str = "stage", tolerance: float = ENERGY_TOLERANCE) -> EnergyReport:
    """Audit the energy identity.

    ``stage`` uses the dissipation integral carried through the RK4 stages;
    ``trapezoid`` and ``spline`` integrate the recorded ``|Du|^2`` series.
    """
    s = traj.norms
    t = s.times
    energy = s["l2"] ** 2
    rate = 2.0 * s["dl2"] ** 2
    if method == "stage":
        diss = s["diss"]
    elif method == "trapezoid":
        diss = np.concatenate([[0.0], np.cumsum(0.5 * (rate[1:] + rate[:-1]) * np.diff(t))])
    elif method == "spline":
        if t.size >= 4:
            diss = CubicSpline(t, rate).antiderivative()(t)
        else:
            diss = np.concatenate([[0.0], np.cumsum(0.5 * (rate[1:] + rate[:-1]) * np.diff(t))])
    else:
        raise ValueError(f"unknown energy quadrature {method!r}")
    reference = float(energy[0]) if energy.size else 0.0
    data_energy = traj.u0_l2**2
    scale = data_energy if data_energy > 0 else 1.0
    defect = (energy + diss - reference) / scale
    data_defect = (energy + diss - data_energy) / scale
    return EnergyReport(t, energy, diss, defect, data_defect, reference, data_energy, tolerance, method)
