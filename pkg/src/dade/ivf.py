"""Inverted-file index over k-means clusters.

Two storage layouts are available. ``contiguous`` keeps each cluster's
vectors as one ``(n, D)`` block. ``split`` stores the first ``split_prefix_dims``
components of a cluster in one block and the rest in another, so an adaptive
DCO that stops early only reads the prefix block.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, InvalidInputError
from .estimator import DcoStats
from .search import KnnHeap, SearchResult, run_dco

__all__ = ["KMeansResult", "kmeans", "IvfIndex", "build_ivf", "search_ivf", "default_n_clusters",
           "save_ivf", "load_ivf"]


def _sq_dists(x: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    return (
        np.einsum("ij,ij->i", x, x)[:, None]
        - 2.0 * x @ centroids.T
        + np.einsum("ij,ij->i", centroids, centroids)[None, :]
    ).clip(min=0.0)


@dataclass
class KMeansResult:
    centroids: np.ndarray
    assignments: np.ndarray
    distortion: list[float]
    iterations: int


def _kmeanspp(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    chosen = [int(rng.integers(n))]
    closest = ((x - x[chosen[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = closest.sum()
        if total <= 0.0:
            # Remaining points coincide with chosen centers; take unused ids.
            unused = np.setdiff1d(np.arange(n), chosen)
            idx = int(unused[0])
        else:
            idx = int(np.searchsorted(np.cumsum(closest), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        chosen.append(idx)
        closest = np.minimum(closest, ((x - x[idx]) ** 2).sum(axis=1))
    return x[chosen].copy()


def kmeans(data, n_clusters: int, max_iters: int = 25, seed: int = 0) -> KMeansResult:
    """Lloyd's algorithm with k-means++ seeding.

    Stops when assignments no longer change or after ``max_iters`` rounds.
    An empty cluster is re-seeded with the point of the largest cluster that
    lies farthest from that cluster's centroid. The returned centroids are the
    means of the returned assignments.
    """
    x = np.asarray(data, dtype=np.float64)
    n = x.shape[0]
    if not 1 <= n_clusters <= n:
        raise InvalidInputError(f"n_clusters must be in [1, {n}], got {n_clusters}")
    rng = np.random.default_rng(seed)
    centroids = _kmeanspp(x, n_clusters, rng)
    assignments = np.full(n, -1, dtype=np.int64)
    distortion: list[float] = []
    iterations = 0
    for iterations in range(1, max_iters + 1):
        d2 = _sq_dists(x, centroids)
        new = d2.argmin(axis=1)
        distortion.append(float(d2[np.arange(n), new].sum()))
        if np.array_equal(new, assignments):
            break
        assignments = new
        centroids = _update(x, assignments, n_clusters)
    else:
        d2 = _sq_dists(x, centroids)
        assignments = d2.argmin(axis=1)
        centroids = _update(x, assignments, n_clusters)
    return KMeansResult(centroids, assignments, distortion, iterations)


def _update(x: np.ndarray, assignments: np.ndarray, k: int) -> np.ndarray:
    counts = np.bincount(assignments, minlength=k)
    for empty in np.flatnonzero(counts == 0):
        largest = int(counts.argmax())
        members = np.flatnonzero(assignments == largest)
        center = x[members].mean(axis=0)
        far = members[int(((x[members] - center) ** 2).sum(axis=1).argmax())]
        assignments[far] = empty
        counts = np.bincount(assignments, minlength=k)
    sums = np.zeros((k, x.shape[1]))
    np.add.at(sums, assignments, x)
    return sums / counts[:, None]


def default_n_clusters(n: int) -> int:
    """About the square root of the cardinality."""
    return max(1, min(n, int(round(math.sqrt(n)))))


class _SplitRow:
    """Read-only view of one vector stored across the prefix and suffix blocks.

    Supports the slicing and ``len`` the DCO loops use.
    """

    __slots__ = ("prefix", "suffix", "cut")

    def __init__(self, prefix, suffix):
        self.prefix = prefix
        self.suffix = suffix
        self.cut = len(prefix)

    def __len__(self):
        return self.cut + len(self.suffix)

    def __getitem__(self, sl: slice):
        lo, hi, _ = sl.indices(len(self))
        cut = self.cut
        if hi <= cut:
            return self.prefix[lo:hi]
        if lo >= cut:
            return self.suffix[lo - cut:hi - cut]
        return np.concatenate((self.prefix[lo:], self.suffix[:hi - cut]))

    def __sub__(self, other):
        return self[0:len(self)] - other

    def __array__(self, dtype=None, copy=None):
        full = np.concatenate((self.prefix, self.suffix))
        return full if dtype is None else full.astype(dtype)


class IvfIndex:
    def __init__(self, centroids, posting_lists, data, layout: str = "contiguous", split_prefix_dims: int = 0):
        if layout not in ("contiguous", "split"):
            raise InvalidInputError(f"unknown layout {layout!r}")
        data = np.asarray(data, dtype=np.float32)
        self.dim = data.shape[1]
        self.n = data.shape[0]
        self.centroids = np.asarray(centroids, dtype=np.float32)
        self.posting_lists = [np.asarray(p, dtype=np.int64) for p in posting_lists]
        self.layout = layout
        if layout == "split":
            if not 1 <= split_prefix_dims <= self.dim:
                raise InvalidInputError("split_prefix_dims must be in [1, D]")
            self.split_prefix_dims = int(split_prefix_dims)
        else:
            self.split_prefix_dims = 0
        self.blocks = []
        for ids in self.posting_lists:
            rows = np.ascontiguousarray(data[ids])
            if layout == "split":
                cut = self.split_prefix_dims
                self.blocks.append((np.ascontiguousarray(rows[:, :cut]), np.ascontiguousarray(rows[:, cut:])))
            else:
                self.blocks.append(rows)

    @property
    def n_clusters(self) -> int:
        return len(self.posting_lists)

    def cluster_vectors(self, c: int) -> np.ndarray:
        """Materialize the ``(n, D)`` block of cluster ``c`` in posting order."""
        block = self.blocks[c]
        if self.layout == "split":
            return np.concatenate(block, axis=1)
        return block

    def rows(self, c: int):
        block = self.blocks[c]
        if self.layout == "split":
            prefix, suffix = block
            return [_SplitRow(prefix[i], suffix[i]) for i in range(len(prefix))]
        return block

    def vectors(self) -> np.ndarray:
        """All stored vectors in id order."""
        out = np.empty((self.n, self.dim), dtype=np.float32)
        for c, ids in enumerate(self.posting_lists):
            out[ids] = self.cluster_vectors(c)
        return out

    def rebase(self, data) -> "IvfIndex":
        """Same clusters over another rotation of the same vectors.

        Centroids are recomputed as member means in the new coordinates,
        which for an isometry equals rotating the old ones.
        """
        data = np.asarray(data, dtype=np.float32)
        if data.shape != (self.n, self.dim):
            raise InvalidInputError("rebase needs vectors for the same ids and dimension")
        x = data.astype(np.float64)
        centroids = np.stack([
            x[ids].mean(axis=0) if len(ids) else np.zeros(self.dim) for ids in self.posting_lists
        ])
        return IvfIndex(centroids, self.posting_lists, data, self.layout, self.split_prefix_dims)


def build_ivf(
    data,
    n_clusters: int | None = None,
    layout: str = "contiguous",
    delta_d: int = 32,
    seed: int = 0,
    max_iters: int = 25,
) -> IvfIndex:
    """Cluster ``data`` (already rotated) and lay out the posting lists.

    ``n_clusters`` defaults to about ``sqrt(N)``. For the split layout the
    prefix block holds ``delta_d`` components.
    """
    x = np.asarray(data, dtype=np.float32)
    if x.ndim != 2 or x.shape[0] < 1:
        raise InvalidInputError("data must be a non-empty (N, D) array")
    if n_clusters is None:
        n_clusters = default_n_clusters(x.shape[0])
    km = kmeans(x, n_clusters, max_iters=max_iters, seed=seed)
    posting = [np.flatnonzero(km.assignments == c) for c in range(n_clusters)]
    prefix = min(delta_d, x.shape[1]) if layout == "split" else 0
    return IvfIndex(km.centroids, posting, x, layout, prefix)


def search_ivf(index: IvfIndex, q, k: int, n_probe: int, strategy, audit: bool = False) -> SearchResult:
    """Probe the ``n_probe`` nearest clusters and run a DCO per candidate
    against the current k-th best distance."""
    if k < 1:
        raise InvalidInputError("k must be >= 1")
    if not 1 <= n_probe <= index.n_clusters:
        raise InvalidInputError(f"n_probe must be in [1, {index.n_clusters}], got {n_probe}")
    q = np.asarray(q, dtype=np.float64)
    if q.shape != (index.dim,):
        raise InvalidInputError(f"query must have dimension {index.dim}")
    cd = ((index.centroids.astype(np.float64) - q) ** 2).sum(axis=1)
    probes = np.lexsort((np.arange(index.n_clusters), cd))[:n_probe]

    heap = KnnHeap(k)
    stats = DcoStats()
    for c in probes:
        ids = index.posting_lists[c]
        rows = index.rows(c)
        for pos in range(len(ids)):
            outcome = run_dco(strategy, rows[pos], q, heap.threshold(), stats, audit)
            if not outcome.pruned:
                heap.offer(outcome.distance, int(ids[pos]))
    return SearchResult.from_pairs(heap.sorted(), k, stats)


_IVF_MAGIC = b"DIVF"
_IVF_HEADER = struct.Struct("<4sIBIIII")


def save_ivf(index: IvfIndex, path) -> None:
    """Layout in ``docs/file_formats.md``: header, centroids, posting lists,
    then per-cluster vector storage in the index's layout."""
    layout_code = 1 if index.layout == "split" else 0
    with open(path, "wb") as fh:
        fh.write(_IVF_HEADER.pack(_IVF_MAGIC, 1, layout_code, index.n, index.dim,
                                  index.n_clusters, index.split_prefix_dims))
        fh.write(index.centroids.astype("<f4").tobytes())
        for ids in index.posting_lists:
            fh.write(struct.pack("<I", len(ids)))
            fh.write(ids.astype("<u4").tobytes())
        for block in index.blocks:
            parts = block if index.layout == "split" else (block,)
            for part in parts:
                fh.write(part.astype("<f4").tobytes())


def load_ivf(path) -> IvfIndex:
    raw = Path(path).read_bytes()
    if len(raw) < _IVF_HEADER.size:
        raise FormatError(f"{path}: truncated IVF header")
    magic, version, layout_code, n, dim, n_clusters, prefix = _IVF_HEADER.unpack_from(raw)
    if magic != _IVF_MAGIC or version != 1:
        raise FormatError(f"{path}: not a version-1 IVF index")
    off = _IVF_HEADER.size
    try:
        centroids = np.frombuffer(raw, "<f4", n_clusters * dim, off).reshape(n_clusters, dim)
        off += 4 * n_clusters * dim
        posting = []
        for _ in range(n_clusters):
            (count,) = struct.unpack_from("<I", raw, off)
            off += 4
            posting.append(np.frombuffer(raw, "<u4", count, off).astype(np.int64))
            off += 4 * count
        data = np.empty((n, dim), dtype=np.float32)
        for ids in posting:
            m = len(ids)
            if layout_code == 1:
                head = np.frombuffer(raw, "<f4", m * prefix, off).reshape(m, prefix)
                off += 4 * m * prefix
                tail = np.frombuffer(raw, "<f4", m * (dim - prefix), off).reshape(m, dim - prefix)
                off += 4 * m * (dim - prefix)
                data[ids] = np.concatenate((head, tail), axis=1)
            else:
                data[ids] = np.frombuffer(raw, "<f4", m * dim, off).reshape(m, dim)
                off += 4 * m * dim
    except (ValueError, struct.error) as exc:
        raise FormatError(f"{path}: truncated IVF body") from exc
    if off != len(raw):
        raise FormatError(f"{path}: {len(raw) - off} trailing bytes")
    layout = "split" if layout_code == 1 else "contiguous"
    return IvfIndex(centroids, posting, data, layout, prefix)
