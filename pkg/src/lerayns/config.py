"""Experiment configuration files.

The format is TOML restricted to one level of tables:

* ``[grid]``: ``dim``, ``n``, ``length``
* ``[solver]``: ``t_end`` plus optional stepping and snapshot controls
* ``[initial]``: ``kind`` plus the parameters of that kind
* ``[output]``: ``directory``, ``snapshots``
* ``[[analysis]]`` (repeatable): ``kind`` plus per-kind keys

See ``docs/config.md`` for every key.  :func:`parse_config` reports all
violations at once, each with the line it came from.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import tomlkit
from tomlkit.exceptions import ParseError

from .grid import Grid
from .initial_data import KINDS, InitialDataSpec
from .norms import NormSpec
from .solver import GEOMETRIC_RATIO, SolverConfig

REQUIRED = object()


@dataclass(frozen=True)
class Violation:
    line: int | None
    key: str
    message: str

    def __str__(self) -> str:
        where = f"line {self.line}: " if self.line else ""
        return f"{where}{self.key}: {self.message}"


class ConfigError(ValueError):
    def __init__(self, violations: list[Violation]):
        self.violations = list(violations)
        super().__init__("invalid configuration:\n" + "\n".join(f"  {v}" for v in self.violations))


# ---------------------------------------------------------------------------
# key schemas


@dataclass(frozen=True)
class Key:
    kind: str  # int, float, bool, str, floats, strs, window
    default: Any = REQUIRED
    check: Callable[[Any], str | None] | None = None


def _gt(lo):
    return lambda v: None if v > lo else f"must be > {lo:g}"


def _ge(lo):
    return lambda v: None if v >= lo else f"must be >= {lo:g}"


def _one_of(options):
    return lambda v: None if v in options else f"must be one of {list(options)}"


def _each(check):
    def run(values):
        for v in values:
            msg = check(v)
            if msg:
                return f"entry {v!r} {msg}"
        return None

    return run


def _power_of_two(v):
    return None if v >= 8 and not v & (v - 1) else "must be a power of two >= 8"


def _cfl(v):
    return None if 0 < v <= 1 else "must lie in (0, 1]"


def _norm_label(v):
    try:
        NormSpec.parse(v)
    except ValueError as exc:
        return str(exc)
    return None


def _q(v):
    return None if v >= 1 else "must be >= 1"


GRID_KEYS = {
    "dim": Key("int", REQUIRED, _one_of((2, 3))),
    "n": Key("int", REQUIRED, _power_of_two),
    "length": Key("float", 2.0 * math.pi, _gt(0)),
}

SOLVER_KEYS = {
    "t_end": Key("float", REQUIRED, _ge(0)),
    "delta": Key("float", None, _ge(0)),
    "dt": Key("float", None, _gt(0)),
    "cfl": Key("float", 0.5, _cfl),
    "dt_max": Key("float", 0.1, _gt(0)),
    "dealias": Key("bool", True),
    "record_every": Key("int", 1, _ge(1)),
    "snapshot_start": Key("float", 0.0625, _gt(0)),
    "snapshot_ratio": Key("float", GEOMETRIC_RATIO, _gt(1)),
    "snapshot_interval": Key("float", None, _gt(0)),
    "extra_norms": Key("strs", [], _each(_norm_label)),
}

INITIAL_KEYS = {
    "kind": Key("str", REQUIRED, _one_of(KINDS)),
    "seed": Key("int", 0, _ge(0)),
    "k0": Key("float", 1.0, _gt(0)),
    "energy": Key("float", 1.0, _ge(0)),
    "width": Key("float", 4.0, _gt(0)),
    "amplitude": Key("float", 1.0),
    "path": Key("str", None),
}

OUTPUT_KEYS = {
    "directory": Key("str", None),
    "snapshots": Key("bool", True),
}

ANALYSIS_KEYS: dict[str, dict[str, Key]] = {
    "energy_audit": {
        "method": Key("str", "stage", _one_of(("stage", "trapezoid", "spline"))),
        "tolerance": Key("float", 1e-6, _gt(0)),
    },
    "duhamel": {
        "t0": Key("float", REQUIRED, _ge(0)),
        "t": Key("float", None, _ge(0)),
        "n_quad": Key("int", REQUIRED, _ge(1)),
        "levels": Key("int", 1, _ge(1)),
    },
    "heatflow": {
        "t0": Key("float", REQUIRED, _ge(0)),
        "norms": Key("strs", ["l2", "sup"], _each(_norm_label)),
    },
    "fits": {
        "norm": Key("str", REQUIRED),
        "window": Key("window", "validity"),
        "series": Key("str", "solution", _one_of(("solution", "difference", "heat"))),
        "t0": Key("float", None, _ge(0)),
    },
    "onset": {},
    "sng": {
        "times": Key("floats", None, _each(_ge(0))),
    },
    "semigroup": {
        "taus": Key("floats", REQUIRED, _each(_gt(0))),
        "which": Key("str", "both", _one_of(("l2", "sup", "both"))),
        "t": Key("float", 0.0, _ge(0)),
    },
    "pair_bounds": {
        "t0": Key("float", REQUIRED, _ge(0)),
        "t0_tilde": Key("float", REQUIRED, _ge(0)),
    },
    "scalar_bounds": {},
    "interpolation": {
        "q_list": Key("floats", REQUIRED, _each(_q)),
    },
}

# analysis keys holding times that must fall inside [0, t_end]
TIME_KEYS = ("t0", "t", "t0_tilde")


# ---------------------------------------------------------------------------
# config objects


@dataclass(frozen=True)
class AnalysisSpec:
    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in ANALYSIS_KEYS:
            raise ValueError(f"unknown analysis kind {self.kind!r}")

    @property
    def needs_trajectory(self) -> bool:
        return self.kind != "scalar_bounds"

    def to_dict(self) -> dict:
        return {"kind": self.kind, **self.params}


@dataclass(frozen=True)
class ExperimentConfig:
    solver: SolverConfig
    analyses: tuple[AnalysisSpec, ...] = ()
    output_dir: str | None = None
    write_snapshots: bool = True

    @property
    def seed(self) -> int:
        return self.solver.initial_data.seed

    @property
    def needs_solver(self) -> bool:
        return not self.analyses or any(a.needs_trajectory for a in self.analyses)

    def to_dict(self) -> dict:
        return {
            "solver": self.solver.to_dict(),
            "analyses": [a.to_dict() for a in self.analyses],
            "output_dir": self.output_dir,
            "write_snapshots": self.write_snapshots,
        }


# ---------------------------------------------------------------------------
# parsing


_HEADER = re.compile(r"^\s*(\[\[?)\s*([A-Za-z0-9_\-]+)\s*\]\]?")
_ASSIGN = re.compile(r"^\s*([A-Za-z0-9_\-]+)\s*=")


def _line_index(text: str) -> dict[tuple, int]:
    """Map ``(table, occurrence, key)`` to 1-based line numbers; key ``None`` is the header."""
    index: dict[tuple, int] = {}
    table, occ = "", 0
    counts: dict[str, int] = {}
    for no, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0]
        m = _HEADER.match(stripped)
        if m:
            table = m.group(2)
            occ = counts.get(table, 0)
            counts[table] = occ + 1
            index.setdefault((table, occ, None), no)
            continue
        m = _ASSIGN.match(stripped)
        if m:
            index.setdefault((table, occ, m.group(1)), no)
    return index


def _coerce(kind: str, value: Any) -> tuple[Any, str | None]:
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            return None, "must be an integer"
        return int(value), None
    if kind == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            return None, "must be a number"
        value = float(value)
        return (value, None) if math.isfinite(value) else (None, "must be finite")
    if kind == "bool":
        return (bool(value), None) if isinstance(value, bool) else (None, "must be true or false")
    if kind == "str":
        return (str(value), None) if isinstance(value, str) else (None, "must be a string")
    if kind == "strs":
        if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
            return None, "must be a list of strings"
        return [str(v) for v in value], None
    if kind == "floats":
        if not isinstance(value, list) or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in value
        ):
            return None, "must be a list of numbers"
        out = [float(v) for v in value]
        if not out:
            return None, "must not be empty"
        return out, None
    if kind == "window":
        if value == "validity":
            return "validity", None
        if (
            isinstance(value, list)
            and len(value) == 2
            and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value)
        ):
            a, b = float(value[0]), float(value[1])
            return ([a, b], None) if b > a > 0 else (None, "must satisfy 0 < t_a < t_b")
        return None, 'must be "validity" or [t_a, t_b]'
    raise AssertionError(kind)


def _read_table(
    data: dict, schema: dict[str, Key], table: str, occ: int, lines: dict, errors: list[Violation], skip=()
) -> dict:
    out: dict[str, Any] = {}
    prefix = f"{table}[{occ}]" if table == "analysis" else table
    header_line = lines.get((table, occ, None))
    for key, value in data.items():
        if key in skip:
            continue
        line = lines.get((table, occ, key), header_line)
        spec = schema.get(key)
        if spec is None:
            errors.append(Violation(line, f"{prefix}.{key}", "unknown key"))
            continue
        coerced, msg = _coerce(spec.kind, _plain(value))
        if msg is None and spec.check is not None:
            msg = spec.check(coerced)
        if msg:
            errors.append(Violation(line, f"{prefix}.{key}", msg))
            continue
        out[key] = coerced
    for key, spec in schema.items():
        if key in out or key in data:
            continue
        if spec.default is REQUIRED:
            errors.append(Violation(header_line, f"{prefix}.{key}", "missing required key"))
        elif spec.default is not None:
            out[key] = list(spec.default) if isinstance(spec.default, list) else spec.default
    return out


def _plain(value: Any) -> Any:
    if hasattr(value, "unwrap"):
        return value.unwrap()
    return value


def _read_analyses(data: dict, lines: dict, t_end: float | None, errors: list[Violation]) -> list[AnalysisSpec]:
    raw_analyses = data.get("analysis", [])
    if not isinstance(raw_analyses, list):
        errors.append(Violation(lines.get(("", 0, "analysis")), "analysis", "use [[analysis]] tables"))
        raw_analyses = []
    analyses = []
    for i, entry in enumerate(raw_analyses):
        header = lines.get(("analysis", i, None))
        if not isinstance(entry, dict):
            errors.append(Violation(header, f"analysis[{i}]", "must be a table"))
            continue
        kind = entry.get("kind")
        if kind is None:
            errors.append(Violation(header, f"analysis[{i}].kind", "missing required key"))
            continue
        if kind not in ANALYSIS_KEYS:
            errors.append(
                Violation(lines.get(("analysis", i, "kind"), header), f"analysis[{i}].kind",
                          f"must be one of {list(ANALYSIS_KEYS)}")
            )
            continue
        params = _read_table(entry, ANALYSIS_KEYS[kind], "analysis", i, lines, errors, skip=("kind",))
        for key in TIME_KEYS:
            value = params.get(key)
            if value is not None and t_end is not None and value > t_end:
                errors.append(
                    Violation(lines.get(("analysis", i, key), header), f"analysis[{i}].{key}",
                              f"{value:g} lies beyond t_end = {t_end:g}")
                )
        for value in params.get("times") or []:
            if t_end is not None and value > t_end:
                errors.append(
                    Violation(lines.get(("analysis", i, "times"), header), f"analysis[{i}].times",
                              f"{value:g} lies beyond t_end = {t_end:g}")
                )
        if kind == "pair_bounds" and params.get("t0_tilde", math.inf) < params.get("t0", -math.inf):
            errors.append(Violation(lines.get(("analysis", i, "t0_tilde"), header),
                                    f"analysis[{i}].t0_tilde", "must be >= t0"))
        if kind == "duhamel" and params.get("t") is not None and params["t"] < params.get("t0", -math.inf):
            errors.append(Violation(lines.get(("analysis", i, "t"), header), f"analysis[{i}].t", "must be >= t0"))
        if kind == "fits" and params.get("series", "solution") != "solution" and params.get("t0") is None:
            errors.append(Violation(header, f"analysis[{i}].t0", "required when series is not 'solution'"))
        analyses.append(AnalysisSpec(kind, params))
    return analyses


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a configuration, raising :class:`ConfigError` listing every problem."""
    try:
        doc = tomlkit.parse(text)
    except ParseError as exc:
        raise ConfigError([Violation(exc.line, "syntax", str(exc))]) from None
    data = doc.unwrap()
    lines = _line_index(text)
    errors: list[Violation] = []

    known = {"grid", "solver", "initial", "output", "analysis"}
    for name in data:
        if name not in known:
            errors.append(Violation(lines.get((name, 0, None)) or lines.get(("", 0, name)), name, "unknown table"))
    for name in ("grid", "solver", "initial"):
        if name in data and not isinstance(data[name], dict):
            errors.append(Violation(lines.get(("", 0, name)), name, "must be a table"))
        elif name not in data:
            errors.append(Violation(None, name, "missing required table"))

    def table(name):
        v = data.get(name, {})
        return v if isinstance(v, dict) else {}

    grid_d = _read_table(table("grid"), GRID_KEYS, "grid", 0, lines, errors)
    solver_d = _read_table(table("solver"), SOLVER_KEYS, "solver", 0, lines, errors)
    init_d = _read_table(table("initial"), INITIAL_KEYS, "initial", 0, lines, errors)
    out_d = _read_table(table("output"), OUTPUT_KEYS, "output", 0, lines, errors)

    if init_d.get("kind") == "from_checkpoint" and "path" not in init_d:
        errors.append(Violation(lines.get(("initial", 0, "kind")), "initial.path", "required for from_checkpoint"))
    if grid_d.get("dim") == 2 and init_d.get("kind") == "taylor_green_3d":
        errors.append(Violation(lines.get(("initial", 0, "kind")), "initial.kind", "taylor_green_3d needs dim = 3"))
    if grid_d.get("dim") == 3 and init_d.get("kind") == "taylor_green_2d":
        errors.append(Violation(lines.get(("initial", 0, "kind")), "initial.kind", "taylor_green_2d needs dim = 2"))

    analyses = _read_analyses(data, lines, solver_d.get("t_end"), errors)

    if errors:
        raise ConfigError(errors)

    try:
        grid = Grid(**grid_d)
        init = InitialDataSpec(**init_d)
        solver = SolverConfig(grid=grid, initial_data=init, **{**solver_d, "extra_norms": tuple(solver_d["extra_norms"])})
    except ValueError as exc:
        raise ConfigError([Violation(None, "config", str(exc))]) from None
    return ExperimentConfig(solver, tuple(analyses), out_d.get("directory"), out_d.get("snapshots", True))


def parse_analysis_config(text: str, t_end: float | None = None) -> list[AnalysisSpec]:
    """Only the ``[[analysis]]`` tables of ``text``; other tables are ignored."""
    try:
        doc = tomlkit.parse(text)
    except ParseError as exc:
        raise ConfigError([Violation(exc.line, "syntax", str(exc))]) from None
    errors: list[Violation] = []
    analyses = _read_analyses(doc.unwrap(), _line_index(text), t_end, errors)
    if errors:
        raise ConfigError(errors)
    return analyses


def serialize_config(cfg: ExperimentConfig) -> str:
    """TOML text that :func:`parse_config` maps back to ``cfg``."""
    doc = tomlkit.document()
    s = cfg.solver
    doc["grid"] = {"dim": s.grid.dim, "n": s.grid.n, "length": s.grid.length}
    solver = {}
    for key in SOLVER_KEYS:
        value = getattr(s, key)
        if value is None:
            continue
        solver[key] = list(value) if isinstance(value, tuple) else value
    doc["solver"] = solver
    doc["initial"] = s.initial_data.to_dict()
    output = {"snapshots": cfg.write_snapshots}
    if cfg.output_dir is not None:
        output["directory"] = cfg.output_dir
    doc["output"] = output
    if cfg.analyses:
        aot = tomlkit.aot()
        for a in cfg.analyses:
            aot.append(tomlkit.item(a.to_dict()))
        doc["analysis"] = aot
    return tomlkit.dumps(doc)


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))
