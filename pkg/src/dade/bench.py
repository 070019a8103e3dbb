"""Sweep and feasibility harnesses behind the command line.

Every run produces rows of plain values; :func:`write_csv` turns them into
the versioned CSV the CLI emits. All randomness comes from the seeds on the
spec, so two runs with the same spec produce identical rows apart from the
timing columns.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .calibration import DEFAULT_P_S, calibrate
from .errors import ConfigurationError, InvalidInputError
from .estimator import ADSampling, DADE, DEFAULT_DELTA_D, DEFAULT_EPS0, DcoStats, FDScanning, FixedDim
from .hnsw import DEFAULT_EF_CONSTRUCTION, DEFAULT_M, HnswGraph, build_hnsw, search_hnsw
from .io import GroundTruth, compute_ground_truth, recall
from .ivf import IvfIndex, build_ivf, search_ivf
from .search import linear_scan
from .transform import OrthoTransform, apply_transform, fit_pca, fit_random_orthogonal

__all__ = [
    "CSV_VERSION",
    "CSV_COLUMNS",
    "SweepSpec",
    "Workspace",
    "run_sweep",
    "run_feasibility",
    "write_csv",
    "DEFAULT_P_S_GRID",
    "DEFAULT_EPS0_GRID",
]

CSV_VERSION = 1
CSV_COLUMNS = [
    "index", "mode", "dco", "param", "value", "p_s", "eps0", "delta_d", "d_fixed",
    "recall", "dim_fraction", "failure_rate", "latency_ms", "qps",
]
TIMING_COLUMNS = ("latency_ms", "qps")
INDEX_KINDS = ("ivf", "hnsw", "linear")
DCO_KINDS = ("fd", "ads", "dade", "fixed-pca", "fixed-random")
DEFAULT_P_S_GRID = (0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6)
DEFAULT_EPS0_GRID = (0.5, 1.0, 1.5, 2.1, 2.5, 3.0, 4.0)


@dataclass
class SweepSpec:
    """One experiment grid. Lists are swept as a cartesian product; a
    parameter only multiplies rows for the strategies that use it."""

    index: str = "ivf"
    dcos: tuple[str, ...] = ("fd", "dade")
    k: int = 10
    n_probe: tuple[int, ...] = (20,)
    ef: tuple[int, ...] = (100,)
    p_s: tuple[float, ...] = (DEFAULT_P_S,)
    eps0: tuple[float, ...] = (DEFAULT_EPS0,)
    delta_d: tuple[int, ...] = (DEFAULT_DELTA_D,)
    d_fixed: tuple[int, ...] = (32,)
    layout: str = "contiguous"
    decoupled: bool = False
    n_clusters: int | None = None
    m: int = DEFAULT_M
    ef_construction: int = DEFAULT_EF_CONSTRUCTION
    n_pairs: int | None = None
    transform_seed: int = 0
    calibration_seed: int = 0
    index_seed: int = 0
    timing: bool = True

    def __post_init__(self):
        if self.index not in INDEX_KINDS:
            raise ConfigurationError(f"unknown index kind {self.index!r}; expected one of {INDEX_KINDS}")
        bad = [d for d in self.dcos if d not in DCO_KINDS]
        if bad or not self.dcos:
            raise ConfigurationError(f"unknown or empty dco kinds {bad}; expected from {DCO_KINDS}")
        if self.k < 1:
            raise ConfigurationError("k must be >= 1")
        grids = {"n_probe": self.n_probe, "ef": self.ef, "p_s": self.p_s, "eps0": self.eps0,
                 "delta_d": self.delta_d, "d_fixed": self.d_fixed}
        for name, grid in grids.items():
            if len(grid) == 0:
                raise ConfigurationError(f"parameter grid {name} is empty")


@dataclass
class Workspace:
    """Raw vectors plus the rotations and calibrations derived from them.

    Rotated copies and calibration tables are computed on first use and
    cached, so a sweep touching many strategies fits each of them once.
    """

    data: np.ndarray
    queries: np.ndarray
    pca: OrthoTransform | None = None
    random: OrthoTransform | None = None
    transform_seed: int = 0
    calibration_seed: int = 0
    n_pairs: int | None = None
    calibrations: dict = field(default_factory=dict)
    _rotated: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float32)
        self.queries = np.asarray(self.queries, dtype=np.float32)
        if self.data.shape[1] != self.queries.shape[1]:
            raise ConfigurationError(
                f"data dimension {self.data.shape[1]} differs from query dimension {self.queries.shape[1]}"
            )
        for t in (self.pca, self.random):
            if t is not None and t.dim != self.dim:
                raise ConfigurationError(f"transform dimension {t.dim} differs from data dimension {self.dim}")

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def transform(self, kind: str) -> OrthoTransform:
        if kind == "pca":
            if self.pca is None:
                self.pca = fit_pca(self.data)
            return self.pca
        if self.random is None:
            self.random = fit_random_orthogonal(self.dim, self.transform_seed, self.data)
        return self.random

    def rotated(self, kind: str) -> tuple[np.ndarray, np.ndarray]:
        if kind not in self._rotated:
            t = self.transform(kind)
            self._rotated[kind] = (apply_transform(t, self.data), apply_transform(t, self.queries))
        return self._rotated[kind]

    def calibration(self, p_s: float, delta_d: int):
        key = (float(p_s), int(delta_d))
        if key not in self.calibrations:
            t = self.transform("pca")
            data, _ = self.rotated("pca")
            self.calibrations[key] = calibrate(t, data, p_s, delta_d, self.n_pairs, self.calibration_seed)
        return self.calibrations[key]

    def add_calibration(self, cal) -> None:
        if cal.dim is not None and cal.dim != self.dim:
            raise ConfigurationError(f"calibration dimension {cal.dim} differs from data dimension {self.dim}")
        self.calibrations[(float(cal.p_s), int(cal.delta_d))] = cal


def _strategy_points(kind: str, spec: SweepSpec):
    """Yield ``(p_s, eps0, delta_d, d_fixed)`` for the parameters ``kind`` uses."""
    if kind == "fd":
        yield (None, None, None, None)
    elif kind == "dade":
        for delta_d, p_s in itertools.product(spec.delta_d, spec.p_s):
            yield (p_s, None, delta_d, None)
    elif kind == "ads":
        for delta_d, eps0 in itertools.product(spec.delta_d, spec.eps0):
            yield (None, eps0, delta_d, None)
    else:
        for d in spec.d_fixed:
            yield (None, None, None, d)


def _make_strategy(ws: Workspace, kind: str, p_s, eps0, delta_d, d_fixed):
    dim = ws.dim
    if kind == "fd":
        return FDScanning()
    if kind == "dade":
        return DADE(ws.transform("pca"), ws.calibration(p_s, delta_d), delta_d)
    if kind == "ads":
        return ADSampling(dim, delta_d, eps0)
    if d_fixed > dim:
        raise ConfigurationError(f"d_fixed {d_fixed} exceeds dimension {dim}")
    if kind == "fixed-pca":
        return FixedDim(dim, d_fixed, "pca_eq13", ws.transform("pca"))
    return FixedDim(dim, d_fixed, "random_D_over_d")


def _space(kind: str) -> str:
    return "random" if kind in ("ads", "fixed-random") else "pca"


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return "nan" if math.isnan(value) else f"{value:.6f}"
    return str(value)


def _run_queries(search, queries, truth: GroundTruth | None, dim: int, timing: bool):
    stats = DcoStats()
    ids = []
    start = time.perf_counter()
    for q in queries:
        res = search(q)
        ids.append(res.ids)
        stats.merge(res.stats)
    elapsed = time.perf_counter() - start
    row = {
        "recall": recall(ids, truth) if truth is not None else float("nan"),
        "dim_fraction": stats.dimension_fraction(dim),
        "failure_rate": stats.failure_rate() if truth is not None else float("nan"),
    }
    if timing:
        row["latency_ms"] = 1000.0 * elapsed / len(queries)
        row["qps"] = len(queries) / elapsed if elapsed > 0 else float("inf")
    return row, ids, stats


def build_index(spec: SweepSpec, data: np.ndarray):
    """Build the structure the sweep asks for on already rotated ``data``."""
    if spec.index == "ivf":
        prefix = min(spec.delta_d) if spec.layout == "split" else 0
        return build_ivf(data, spec.n_clusters, spec.layout, prefix or DEFAULT_DELTA_D, spec.index_seed)
    if spec.index == "hnsw":
        return build_hnsw(data, spec.m, spec.ef_construction, spec.index_seed)
    return None


def run_sweep(spec: SweepSpec, ws: Workspace, truth: GroundTruth | None = None, index=None) -> list[dict]:
    """Run every grid point of ``spec`` and return one row per point.

    ``index`` may be a prebuilt index over PCA-rotated vectors; otherwise it
    is built here. Strategies that work in the random rotation reuse the
    same structure over randomly rotated vectors. With ``truth`` the DCOs are
    audited and the failure rate is reported.
    """
    if truth is not None and len(truth) != len(ws.queries):
        raise ConfigurationError(f"ground truth has {len(truth)} queries, query file has {len(ws.queries)}")
    if truth is not None and truth.k < spec.k:
        raise ConfigurationError(f"ground truth holds {truth.k} neighbors, sweep asks for k={spec.k}")
    if truth is not None and truth.k != spec.k:
        truth = GroundTruth(truth.ids[:, :spec.k], truth.distances[:, :spec.k])
    pca_data, _ = ws.rotated("pca")
    if spec.index != "linear" and index is None:
        index = build_index(spec, pca_data)
    if spec.index == "ivf" and not isinstance(index, IvfIndex):
        raise ConfigurationError("sweep over ivf needs an IVF index")
    if spec.index == "hnsw" and not isinstance(index, HnswGraph):
        raise ConfigurationError("sweep over hnsw needs an HNSW graph")
    if index is not None and (index.dim if hasattr(index, "dim") else None) != ws.dim:
        raise ConfigurationError(f"index dimension {index.dim} differs from data dimension {ws.dim}")

    indexes = {"pca": index}
    audit = truth is not None
    rows = []
    if spec.index == "ivf":
        traversal = [("n_probe", v) for v in spec.n_probe]
        mode = spec.layout
    elif spec.index == "hnsw":
        traversal = [("ef", v) for v in spec.ef]
        mode = "decoupled" if spec.decoupled else "coupled"
    else:
        traversal = [("none", 0)]
        mode = "scan"

    for kind in spec.dcos:
        space = _space(kind)
        data, queries = ws.rotated(space)
        if space not in indexes and index is not None:
            indexes[space] = index.rebase(data)
        idx = indexes.get(space)
        for p_s, eps0, delta_d, d_fixed in _strategy_points(kind, spec):
            strategy = _make_strategy(ws, kind, p_s, eps0, delta_d, d_fixed)
            for param, value in traversal:
                if spec.index == "ivf":
                    if value > idx.n_clusters:
                        raise ConfigurationError(f"n_probe {value} exceeds n_clusters {idx.n_clusters}")
                    search = lambda q: search_ivf(idx, q, spec.k, value, strategy, audit)
                elif spec.index == "hnsw":
                    search = lambda q: search_hnsw(idx, q, spec.k, value, strategy, spec.decoupled, audit)
                else:
                    search = lambda q: linear_scan(data, q, spec.k, strategy, audit)
                metrics, _, _ = _run_queries(search, queries, truth, ws.dim, spec.timing)
                rows.append({
                    "index": spec.index, "mode": mode, "dco": kind, "param": param, "value": value,
                    "p_s": p_s, "eps0": eps0, "delta_d": delta_d, "d_fixed": d_fixed, **metrics,
                })
    return rows


def run_feasibility(
    ws: Workspace,
    k: int = 10,
    strategies=("fd", "fixed-random", "fixed-pca", "ads", "dade"),
    p_s_grid=DEFAULT_P_S_GRID,
    eps0_grid=DEFAULT_EPS0_GRID,
    d_fixed_grid=None,
    delta_d=(DEFAULT_DELTA_D,),
    truth: GroundTruth | None = None,
    timing: bool = True,
) -> list[dict]:
    """Linear-scan recall and dimension-fraction curves for each strategy."""
    if d_fixed_grid is None:
        d_fixed_grid = sorted({max(1, ws.dim * f // 16) for f in range(1, 17)})
    if truth is None:
        truth = compute_ground_truth(ws.data, ws.queries, k)
    spec = SweepSpec(index="linear", dcos=tuple(strategies), k=k, p_s=tuple(p_s_grid), eps0=tuple(eps0_grid),
                     delta_d=tuple(delta_d), d_fixed=tuple(d_fixed_grid), timing=timing)
    return run_sweep(spec, ws, truth)


def write_csv(rows: list[dict], fh=None, timing: bool = True) -> str:
    """Serialize rows under a ``# dade-sweep vN`` comment line. Returns the text
    and writes it to ``fh`` when given."""
    columns = [c for c in CSV_COLUMNS if timing or c not in TIMING_COLUMNS]
    buf = io.StringIO()
    buf.write(f"# dade-sweep v{CSV_VERSION}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(row.get(c)) for c in columns])
    text = buf.getvalue()
    if fh is not None:
        fh.write(text)
    return text


def check_ranges(rows: list[dict]) -> None:
    """Raise if any row has recall outside [0, 1] or dimension fraction outside (0, 1]."""
    for row in rows:
        rec, frac = row["recall"], row["dim_fraction"]
        if not math.isnan(rec) and not 0.0 <= rec <= 1.0:
            raise InvalidInputError(f"recall {rec} out of range in {row}")
        if not 0.0 < frac <= 1.0:
            raise InvalidInputError(f"dimension fraction {frac} out of range in {row}")
