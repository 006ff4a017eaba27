"""Run a configured experiment: solve, analyse, write files and a manifest."""

from __future__ import annotations

import datetime as _dt
import hashlib
import json
import logging
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .bounds import BoundReport, all_scalar_reports, verify_heatflow_pair, verify_semigroup_estimate, verify_sng
from .config import AnalysisSpec, ExperimentConfig, serialize_config
from .decay import (
    detect_monotone_onset,
    duhamel_residual,
    duhamel_self_convergence,
    fit_decay_exponent,
    heat_flow_difference_series,
    interpolation_consistency,
    validity_window,
)
from .solver import SolverAbort, Trajectory, config_hash, energy_audit, run

log = logging.getLogger(__name__)

OUTPUT_ENV = "LERAYNS_OUTPUT_DIR"
DUHAMEL_TOLERANCE = 1e-3
ORDER_TOLERANCE = 0.3

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_ANALYSIS = 2
EXIT_ABORT = 3


@dataclass
class AnalysisResult:
    """Outcome of one analysis.

    ``status`` is ``pass``, ``fail``, ``box-limited``, ``info`` (nothing to
    assert) or ``error`` (the analysis could not run).  Only ``fail`` and
    ``error`` count against the run.
    """

    kind: str
    status: str
    payload: dict
    series: object | None = None

    @property
    def failed(self) -> bool:
        return self.status in ("fail", "error")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "status": self.status, **self.payload}


@dataclass
class RunManifest:
    config_hash: str
    version: str
    started: str
    finished: str
    files: dict[str, str] = field(default_factory=dict)
    analyses: list[dict] = field(default_factory=list)
    aborted: str | None = None
    solver_ran: bool = True
    wall_seconds: float = 0.0

    @property
    def exit_code(self) -> int:
        if self.aborted:
            return EXIT_ABORT
        if any(a["status"] in ("fail", "error") for a in self.analyses):
            return EXIT_ANALYSIS
        return EXIT_OK

    def to_dict(self) -> dict:
        return {
            "format": "lerayns-manifest/1",
            "config_hash": self.config_hash,
            "version": self.version,
            "started": self.started,
            "finished": self.finished,
            "wall_seconds": self.wall_seconds,
            "solver_ran": self.solver_ran,
            "aborted": self.aborted,
            "exit_code": self.exit_code,
            "analyses": self.analyses,
            "files": dict(sorted(self.files.items())),
        }

    def write(self, directory: Path) -> Path:
        path = directory / "manifest.json"
        path.write_text(json.dumps(self.to_dict(), indent=2) + "\n")
        return path

    @classmethod
    def read(cls, path: str | Path) -> "RunManifest":
        d = json.loads(Path(path).read_text())
        return cls(
            d["config_hash"], d["version"], d["started"], d["finished"], d["files"], d["analyses"],
            d.get("aborted"), d.get("solver_ran", True), d.get("wall_seconds", 0.0),
        )

    def verify(self, directory: str | Path) -> list[str]:
        """Names of files whose digest no longer matches (missing files included)."""
        directory = Path(directory)
        bad = []
        for name, digest in self.files.items():
            p = directory / name
            if not p.exists() or hashlib.sha256(p.read_bytes()).hexdigest() != digest:
                bad.append(name)
        return bad


def _reports_result(kind: str, reports: list[BoundReport], extra: dict | None = None) -> AnalysisResult:
    statuses = {r.status for r in reports}
    if "fail" in statuses:
        status = "fail"
    elif "box-limited" in statuses:
        status = "box-limited"
    elif "pass" in statuses:
        status = "pass"
    else:
        status = "info"
    return AnalysisResult(kind, status, {**(extra or {}), "reports": [r.to_dict() for r in reports]})


def _fit_window(traj: Trajectory, spec) -> tuple[float, float]:
    if spec == "validity":
        vw = validity_window(traj)
        return vw.t_a, vw.t_b
    return float(spec[0]), float(spec[1])


def run_analysis(traj: Trajectory | None, spec: AnalysisSpec) -> AnalysisResult:
    p = spec.params
    kind = spec.kind
    if kind == "scalar_bounds":
        return _reports_result(kind, all_scalar_reports())
    if traj is None:
        raise ValueError(f"analysis {kind!r} needs a trajectory")
    times = traj.snapshots.times

    if kind == "energy_audit":
        rep = energy_audit(traj, p.get("method", "stage"), p.get("tolerance", 1e-6))
        return AnalysisResult(kind, "pass" if rep.identity_holds else "fail", rep.to_dict())

    if kind == "duhamel":
        t = p.get("t") if p.get("t") is not None else float(times[-1])
        t0 = p["t0"]
        levels = p.get("levels", 1)
        if levels >= 3:
            sc = duhamel_self_convergence(traj, t0, t, [p["n_quad"] * 2**i for i in range(levels)])
            residual = sc.residuals[-1]
            ok = residual < DUHAMEL_TOLERANCE and abs(sc.order - sc.expected_order) <= ORDER_TOLERANCE
            payload = {"t0": t0, "t": t, "residual": residual, "self_convergence": sc.to_dict()}
        else:
            residual = duhamel_residual(traj, t0, t, p["n_quad"])
            ok = residual < DUHAMEL_TOLERANCE
            payload = {"t0": t0, "t": t, "n_quad": p["n_quad"], "residual": residual}
        payload["tolerance"] = DUHAMEL_TOLERANCE
        return AnalysisResult(kind, "pass" if ok else "fail", payload)

    if kind == "heatflow":
        series = heat_flow_difference_series(traj, p["t0"], p.get("norms", ("l2", "sup")))
        return AnalysisResult(kind, "info", {"t0": p["t0"], "samples": len(series)}, series)

    if kind == "fits":
        window = _fit_window(traj, p.get("window", "validity"))
        source = p.get("series", "solution")
        if source == "solution":
            series = traj.norms
            column = p["norm"]
        else:
            series = heat_flow_difference_series(traj, p["t0"], (p["norm"],))
            column = p["norm"] if source == "difference" else "v_" + p["norm"]
        payload = {"series": source, "window": list(window)}
        if not window[1] > window[0]:
            return AnalysisResult(kind, "info", {**payload, "note": "validity window is empty"})
        try:
            fit = fit_decay_exponent(series, column, window)
        except ValueError as exc:
            return AnalysisResult(kind, "info", {**payload, "note": str(exc)})
        return AnalysisResult(kind, "info", {**payload, "fit": fit.to_dict()})

    if kind == "onset":
        rep = detect_monotone_onset(traj.norms, traj.u0_l2)
        ok = rep.onset_detected is not None and rep.gate_satisfied is not False
        return AnalysisResult(kind, "pass" if ok else "fail", rep.to_dict())

    if kind == "sng":
        sample = p.get("times") or [float(times[0]), float(times[-1])]
        reports = []
        for t in sample:
            for r in verify_sng(traj.snapshots.at(t)):
                r.params["t"] = float(t)
                reports.append(r)
        return _reports_result(kind, reports)

    if kind == "semigroup":
        u = traj.snapshots.at(p.get("t", 0.0))
        which = p.get("which", "both")
        reports = []
        for w in ("l2", "sup") if which == "both" else (which,):
            reports += verify_semigroup_estimate(u, p["taus"], w, traj.delta)
        return _reports_result(kind, reports, {"t": p.get("t", 0.0)})

    if kind == "pair_bounds":
        return _reports_result(kind, verify_heatflow_pair(traj, p["t0"], p["t0_tilde"]),
                               {"t0": p["t0"], "t0_tilde": p["t0_tilde"]})

    if kind == "interpolation":
        return _reports_result(kind, interpolation_consistency(traj, p["q_list"]))

    raise ValueError(f"unknown analysis kind {kind!r}")


def _safe_run_analysis(traj, spec) -> AnalysisResult:
    try:
        return run_analysis(traj, spec)
    except (KeyError, ValueError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else str(exc)
        return AnalysisResult(spec.kind, "error", {"error": str(msg)})


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialise {type(o).__name__}")


def _clean(o):
    """Replace non-finite floats by strings so the JSON stays standard."""
    if isinstance(o, float) and not math.isfinite(o):
        return str(o)
    if isinstance(o, dict):
        return {k: _clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_clean(v) for v in o]
    if isinstance(o, np.generic):
        return _clean(o.item())
    return o


def dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=2, default=_json_default) + "\n"


def write_analyses(results: list[AnalysisResult], directory: Path) -> dict[str, str]:
    files = {}
    adir = directory / "analyses"
    adir.mkdir(parents=True, exist_ok=True)
    for i, res in enumerate(results):
        stem = f"{i:02d}_{res.kind}"
        body = dumps(res.to_dict())
        (adir / f"{stem}.json").write_text(body)
        files[f"analyses/{stem}.json"] = hashlib.sha256(body.encode()).hexdigest()
        if res.series is not None:
            text = res.series.to_csv()
            (adir / f"{stem}.csv").write_text(text)
            files[f"analyses/{stem}.csv"] = hashlib.sha256(text.encode()).hexdigest()
    return files


def resolve_output_dir(cfg: ExperimentConfig, override: str | Path | None = None) -> Path:
    if override is not None:
        return Path(override)
    env = os.environ.get(OUTPUT_ENV)
    if env:
        return Path(env)
    if cfg.output_dir:
        return Path(cfg.output_dir)
    return Path("runs") / config_hash(cfg.solver)


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def run_experiment(cfg: ExperimentConfig, output_dir: str | Path | None = None) -> tuple[RunManifest, list[AnalysisResult]]:
    """Solve (unless only scalar analyses are requested), analyse and write everything.

    Data files are deterministic functions of the configuration; wall times
    appear only in ``manifest.json``.
    """
    out = resolve_output_dir(cfg, output_dir)
    out.mkdir(parents=True, exist_ok=True)
    started, t_start = _now(), time.perf_counter()
    manifest = RunManifest(config_hash(cfg.solver), __version__, started, started, solver_ran=cfg.needs_solver)
    text = serialize_config(cfg)
    (out / "config.toml").write_text(text)
    manifest.files["config.toml"] = hashlib.sha256(text.encode()).hexdigest()

    traj = None
    if cfg.needs_solver:
        snap_dir = out / "snapshots" if cfg.write_snapshots else None
        try:
            traj = run(cfg.solver, snap_dir)
        except SolverAbort as exc:
            manifest.aborted = str(exc)
            if exc.trajectory is not None:
                manifest.files.update(exc.trajectory.save(out, cfg.write_snapshots))
            manifest.finished = _now()
            manifest.wall_seconds = time.perf_counter() - t_start
            manifest.write(out)
            return manifest, []
        manifest.files.update(traj.save(out, cfg.write_snapshots))

    results = [_safe_run_analysis(traj, a) for a in cfg.analyses]
    manifest.files.update(write_analyses(results, out))
    manifest.analyses = [{"kind": r.kind, "status": r.status} for r in results]
    manifest.finished = _now()
    manifest.wall_seconds = time.perf_counter() - t_start
    manifest.write(out)
    return manifest, results
