"""Time-stamped norm records."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

# Columns the solver always writes, in CSV order.
CORE_COLUMNS = ("l2", "dl2", "d2l2", "sup")


@dataclass(eq=False)
class NormSeries:
    """Columns of named norms sampled at strictly increasing times."""

    times: np.ndarray
    columns: dict[str, np.ndarray]
    provenance: str = ""
    notes: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.times = np.asarray(self.times, dtype=np.float64)
        self.columns = {k: np.asarray(v, dtype=np.float64) for k, v in self.columns.items()}
        if self.times.ndim != 1:
            raise ValueError("times must be one-dimensional")
        if self.times.size > 1 and not np.all(np.diff(self.times) > 0):
            raise ValueError("times must be strictly increasing")
        for name, col in self.columns.items():
            if col.shape != self.times.shape:
                raise ValueError(f"column {name!r} has {col.size} entries for {self.times.size} times")

    def __len__(self) -> int:
        return int(self.times.size)

    def __getitem__(self, name: str) -> np.ndarray:
        try:
            return self.columns[name]
        except KeyError:
            raise KeyError(f"series has no column {name!r}; available: {sorted(self.columns)}") from None

    def __contains__(self, name: str) -> bool:
        return name in self.columns

    @property
    def names(self) -> list[str]:
        return list(self.columns)

    def select(self, mask: np.ndarray) -> "NormSeries":
        return NormSeries(self.times[mask], {k: v[mask] for k, v in self.columns.items()}, self.provenance)

    def window(self, t_a: float, t_b: float) -> "NormSeries":
        return self.select((self.times >= t_a) & (self.times <= t_b))

    def validate_norms(self, names: list[str] | None = None) -> None:
        for name in names or self.names:
            col = self[name]
            if not np.all(np.isfinite(col)) or np.any(col < 0):
                raise ValueError(f"column {name!r} has negative or non-finite entries")

    def ordered_names(self) -> list[str]:
        core = [c for c in CORE_COLUMNS if c in self.columns]
        hs = sorted((c for c in self.columns if c.startswith("hs_")), key=lambda c: float(c[3:]))
        rest = [c for c in self.columns if c not in core and c not in hs]
        return core + hs + rest

    def to_csv(self, path: str | Path | None = None) -> str:
        names = self.ordered_names()
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["t"] + names)
        for i, t in enumerate(self.times):
            writer.writerow([repr(float(t))] + [repr(float(self.columns[n][i])) for n in names])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, path: str | Path, provenance: str = "") -> "NormSeries":
        return cls.from_csv_text(Path(path).read_text(), provenance)

    @classmethod
    def from_csv_text(cls, text: str, provenance: str = "") -> "NormSeries":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or rows[0][0] != "t":
            raise ValueError("CSV header must start with 't'")
        names = rows[0][1:]
        data = np.array([[float(x) for x in r] for r in rows[1:]], dtype=np.float64).reshape(-1, len(names) + 1)
        return cls(data[:, 0], {n: data[:, i + 1] for i, n in enumerate(names)}, provenance)


def scaled_norm_series(series: NormSeries, exponent: float, offset: float = 0.0) -> NormSeries:
    """Multiply every column by ``(t - offset)^exponent``; entries with ``t <= offset`` are dropped.

    The number of dropped entries is stored in ``notes["dropped"]``.
    """
    if not offset >= 0:
        raise ValueError("offset must be >= 0")
    keep = series.times > offset
    dropped = int(np.count_nonzero(~keep))
    kept = series.select(keep)
    weight = (kept.times - offset) ** exponent
    out = NormSeries(kept.times, {k: v * weight for k, v in kept.columns.items()}, series.provenance)
    out.notes["dropped"] = dropped
    return out
