"""Dataset files, exact ground truth, recall, and synthetic data."""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .errors import FormatError, InvalidInputError
from .transform import as_vector_set, random_orthogonal_matrix

__all__ = [
    "read_fvecs",
    "write_fvecs",
    "read_ivecs",
    "write_ivecs",
    "GroundTruth",
    "compute_ground_truth",
    "recall",
    "SyntheticConfig",
    "load_synthetic_config",
    "generate_synthetic",
]


def _read_vecs(path, dtype: str) -> np.ndarray:
    raw = np.fromfile(path, dtype=np.uint8)
    if raw.size == 0:
        return np.zeros((0, 0), dtype=dtype)
    if raw.size < 4:
        raise FormatError(f"{path}: truncated record header")
    dim = int(raw[:4].view("<i4")[0])
    if dim <= 0:
        raise FormatError(f"{path}: record dimension must be positive, got {dim}")
    record = 4 * (dim + 1)
    if raw.size % record:
        # Locate the first bad record for a useful message.
        offset = 0
        while offset + 4 <= raw.size:
            d = int(raw[offset:offset + 4].view("<i4")[0])
            if d != dim:
                raise FormatError(f"{path}: inconsistent dimension {d} at byte {offset}, expected {dim}")
            offset += record
        raise FormatError(f"{path}: truncated record at byte {offset - record if offset else 0}")
    table = raw.view("<i4").reshape(-1, dim + 1)
    bad = np.flatnonzero(table[:, 0] != dim)
    if bad.size:
        raise FormatError(
            f"{path}: inconsistent dimension {int(table[bad[0], 0])} in record {int(bad[0])}, expected {dim}"
        )
    return np.ascontiguousarray(table[:, 1:]).view(dtype)


def read_fvecs(path) -> np.ndarray:
    """Read an ``.fvecs`` file: per record a little-endian int32 dimension
    followed by that many float32 values."""
    return _read_vecs(path, "<f4").astype(np.float32)


def read_ivecs(path) -> np.ndarray:
    return _read_vecs(path, "<i4").astype(np.int32)


def _write_vecs(path, values: np.ndarray, dtype: str) -> None:
    n, dim = values.shape
    out = np.empty((n, dim + 1), dtype="<i4")
    out[:, 0] = dim
    out[:, 1:] = values.astype(dtype).view("<i4")
    Path(path).write_bytes(out.tobytes())


def write_fvecs(path, vectors) -> None:
    _write_vecs(path, as_vector_set(vectors), "<f4")


def write_ivecs(path, rows) -> None:
    arr = np.asarray(rows)
    if arr.ndim != 2 or arr.shape[1] < 1:
        raise InvalidInputError(f"expected an (N, K) integer array, got shape {arr.shape}")
    _write_vecs(path, arr, "<i4")


@dataclass
class GroundTruth:
    """Exact K nearest neighbors per query, ordered by distance then id."""

    ids: np.ndarray
    distances: np.ndarray

    @property
    def k(self) -> int:
        return self.ids.shape[1]

    def __len__(self):
        return self.ids.shape[0]


def compute_ground_truth(data, queries, k: int) -> GroundTruth:
    """Brute-force K nearest neighbors with float64 accumulation."""
    x = np.asarray(data, dtype=np.float64)
    qs = np.asarray(queries, dtype=np.float64)
    if qs.ndim == 1:
        qs = qs[None, :]
    if x.ndim != 2 or qs.shape[1] != x.shape[1]:
        raise InvalidInputError("data and queries must share one dimension")
    if not 1 <= k <= x.shape[0]:
        raise InvalidInputError(f"k must be in [1, {x.shape[0]}], got {k}")
    ids = np.empty((len(qs), k), dtype=np.int64)
    dists = np.empty((len(qs), k), dtype=np.float64)
    for row, q in enumerate(qs):
        diff = x - q
        sq = np.einsum("ij,ij->i", diff, diff)
        # A stable sort keeps equal distances in id order.
        order = np.argsort(sq, kind="stable")[:k]
        ids[row] = order
        dists[row] = np.sqrt(sq[order])
    return GroundTruth(ids, dists)


def recall(results, truth) -> float:
    """Mean over queries of ``|result ∩ truth| / K``.

    ``truth`` is a :class:`GroundTruth` or an ``(n_queries, K)`` id array;
    each entry of ``results`` is any iterable of ids.
    """
    truth_ids = truth.ids if isinstance(truth, GroundTruth) else np.asarray(truth)
    if len(results) != len(truth_ids):
        raise InvalidInputError(f"{len(results)} results for {len(truth_ids)} queries")
    if len(truth_ids) == 0:
        return 1.0
    k = truth_ids.shape[1]
    hits = sum(len(set(np.asarray(r).tolist()) & set(t.tolist())) for r, t in zip(results, truth_ids))
    return hits / (k * len(truth_ids))


@dataclass
class SyntheticConfig:
    """Seeded anisotropic Gaussian (optionally a mixture of them).

    Component variances follow ``k ** -decay`` for ``k = 1..dim`` in a hidden
    basis, which is then randomly rotated. With ``n_clusters > 0`` points are
    drawn around cluster centers whose own spread is ``cluster_spread`` times
    the same spectrum.
    """

    n: int = 10_000
    n_queries: int = 100
    dim: int = 64
    decay: float = 1.0
    n_clusters: int = 0
    cluster_spread: float = 3.0
    seed: int = 0

    def spectrum(self) -> np.ndarray:
        return np.arange(1, self.dim + 1, dtype=np.float64) ** -self.decay


def load_synthetic_config(path) -> SyntheticConfig:
    """Parse a ``key = value`` text file; ``#`` starts a comment."""
    types = {f.name: f.type for f in fields(SyntheticConfig)}
    casts = {"int": int, "float": float}
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"{path}:{lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in types:
            raise FormatError(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = casts[types[key]](value)
    return SyntheticConfig(**values)


def generate_synthetic(cfg: SyntheticConfig) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(data, queries)`` as float32 arrays from one seeded stream."""
    rng = np.random.default_rng(cfg.seed)
    scale = np.sqrt(cfg.spectrum())
    rotation = random_orthogonal_matrix(cfg.dim, cfg.seed + 7919)
    total = cfg.n + cfg.n_queries
    points = rng.standard_normal((total, cfg.dim)) * scale
    if cfg.n_clusters > 0:
        centers = rng.standard_normal((cfg.n_clusters, cfg.dim)) * scale * cfg.cluster_spread
        points += centers[rng.integers(0, cfg.n_clusters, size=total)]
    offset = rng.standard_normal(cfg.dim)
    points = points @ rotation.T + offset
    points = points.astype(np.float32)
    return points[:cfg.n], points[cfg.n:]
