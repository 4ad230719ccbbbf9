"""Time-stamped observables, velocity histograms and their on-disk formats."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import AnalysisError

SERIES_COLUMNS = ["t", "M11", "M12", "M13", "M22", "M23", "M33", "trace", "heat_flux",
                  "beta_current", "log_scale", "collisions"]


def velocity_weight(v, l):
    """``(1 + |v|^2)^l``."""
    v = np.asarray(v, dtype=float)
    return (1.0 + np.sum(v * v, axis=-1)) ** l


@dataclass
class DiagnosticsRecord:
    t: float
    M: np.ndarray
    beta_current: float = 0.0
    log_scale: float = 0.0
    collisions: int = 0
    speed_moments: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    @property
    def trace(self) -> float:
        return float(np.trace(self.M))

    @property
    def heat_flux(self) -> float:
        return float(self.M[0, 1])

    def row(self) -> dict:
        M = self.M
        out = {"t": self.t, "M11": M[0, 0], "M12": M[0, 1], "M13": M[0, 2],
               "M22": M[1, 1], "M23": M[1, 2], "M33": M[2, 2], "trace": self.trace,
               "heat_flux": self.heat_flux, "beta_current": self.beta_current,
               "log_scale": self.log_scale, "collisions": self.collisions}
        for p, value in sorted(self.speed_moments.items()):
            out[f"mom_p{_fmt_order(p)}"] = value
        out.update(self.extra)
        return out


def _fmt_order(p):
    return str(int(p)) if float(p).is_integer() else str(p)


def records_to_frame(records) -> pd.DataFrame:
    return pd.DataFrame([r.row() for r in records])


def speed_moment_columns(frame: pd.DataFrame) -> dict:
    """Map order ``p`` to its ``mom_p*`` column name."""
    return {float(c[len("mom_p"):]): c for c in frame.columns if c.startswith("mom_p")}


def write_csv(frame: pd.DataFrame, path):
    # repr-exact floats keep reruns byte-identical
    frame.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")


def read_series(path) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise AnalysisError("series file not found", path=str(path))
    return pd.read_csv(path)


def write_json(obj, path):
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        value = float(obj)
        return value if np.isfinite(value) else str(value)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


@dataclass
class Histogram2D:
    """Counts of ``(xi_1, xi_2)`` accumulated over one or more snapshots.

    ``mass`` is the fraction of all counted samples per bin; whatever fell
    outside the edges is ``overflow`` so that ``mass.sum() + overflow == 1``.
    """

    edges_x: np.ndarray
    edges_y: np.ndarray
    counts: np.ndarray = None
    n_samples: int = 0
    n_snapshots: int = 0

    def __post_init__(self):
        self.edges_x = np.asarray(self.edges_x, dtype=float)
        self.edges_y = np.asarray(self.edges_y, dtype=float)
        if self.counts is None:
            self.counts = np.zeros((self.edges_x.size - 1, self.edges_y.size - 1))

    @classmethod
    def uniform(cls, bins: int, half_width: float):
        edges = np.linspace(-half_width, half_width, bins + 1)
        return cls(edges, edges.copy())

    def add(self, velocities):
        c, _, _ = np.histogram2d(velocities[:, 0], velocities[:, 1],
                                 bins=[self.edges_x, self.edges_y])
        self.counts += c
        self.n_samples += velocities.shape[0]
        self.n_snapshots += 1

    @property
    def mass(self) -> np.ndarray:
        if self.n_samples == 0:
            return np.zeros_like(self.counts)
        return self.counts / self.n_samples

    @property
    def overflow(self) -> float:
        return 1.0 - float(self.mass.sum()) if self.n_samples else 0.0

    def to_frame(self) -> pd.DataFrame:
        xl, yl = np.meshgrid(self.edges_x[:-1], self.edges_y[:-1], indexing="ij")
        xh, yh = np.meshgrid(self.edges_x[1:], self.edges_y[1:], indexing="ij")
        return pd.DataFrame({"x_lo": xl.ravel(), "x_hi": xh.ravel(), "y_lo": yl.ravel(),
                             "y_hi": yh.ravel(), "count": self.counts.ravel(),
                             "mass": self.mass.ravel()})

    def write(self, path):
        with open(path, "w") as fh:
            fh.write(f"# n_samples={self.n_samples} n_snapshots={self.n_snapshots}\n")
        with open(path, "a") as fh:
            self.to_frame().to_csv(fh, index=False, float_format="%.17g", lineterminator="\n")

    @classmethod
    def read(cls, path):
        path = Path(path)
        if not path.exists():
            raise AnalysisError("histogram file not found", path=str(path))
        meta = _read_meta(path)
        df = pd.read_csv(path, comment="#")
        ex = np.unique(np.concatenate([df.x_lo.to_numpy(), df.x_hi.to_numpy()]))
        ey = np.unique(np.concatenate([df.y_lo.to_numpy(), df.y_hi.to_numpy()]))
        counts = df["count"].to_numpy().reshape(ex.size - 1, ey.size - 1)
        return cls(ex, ey, counts, meta.get("n_samples", int(counts.sum())),
                   meta.get("n_snapshots", 1))


@dataclass
class Histogram1D:
    edges: np.ndarray
    counts: np.ndarray = None
    n_samples: int = 0
    n_snapshots: int = 0

    def __post_init__(self):
        self.edges = np.asarray(self.edges, dtype=float)
        if self.counts is None:
            self.counts = np.zeros(self.edges.size - 1)

    def add(self, values):
        c, _ = np.histogram(values, bins=self.edges)
        self.counts += c
        self.n_samples += len(values)
        self.n_snapshots += 1

    @property
    def mass(self):
        return self.counts / self.n_samples if self.n_samples else np.zeros_like(self.counts)

    def write(self, path):
        df = pd.DataFrame({"lo": self.edges[:-1], "hi": self.edges[1:],
                           "count": self.counts, "mass": self.mass})
        with open(path, "w") as fh:
            fh.write(f"# n_samples={self.n_samples} n_snapshots={self.n_snapshots}\n")
            df.to_csv(fh, index=False, float_format="%.17g", lineterminator="\n")


def _read_meta(path):
    with open(path) as fh:
        first = fh.readline()
    meta = {}
    if first.startswith("#"):
        for token in first[1:].split():
            key, _, value = token.partition("=")
            meta[key] = int(value)
    return meta
