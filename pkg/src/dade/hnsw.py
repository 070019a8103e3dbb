"""Hierarchical navigable small world graph.

Construction uses exact distances throughout. At query time the upper layers
are descended greedily with exact distances, and the layer-0 beam search runs
every neighbor through a DCO strategy.

Two layer-0 modes exist:

* coupled: the DCO threshold is the largest distance in the ``ef``-bounded
  result set, so pruned neighbors are dropped.
* decoupled: the threshold is the current K-th best exact distance. The
  ``ef``-bounded set only steers traversal, and pruned neighbors enter it
  keyed by the estimate the DCO stopped at.
"""

from __future__ import annotations

import heapq
import math
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError, InvalidInputError
from .estimator import DcoStats
from .search import KnnHeap, SearchResult, run_dco

__all__ = ["HnswGraph", "build_hnsw", "search_hnsw", "save_hnsw", "load_hnsw",
           "DEFAULT_M", "DEFAULT_EF_CONSTRUCTION"]

DEFAULT_M = 16
DEFAULT_EF_CONSTRUCTION = 500


class HnswGraph:
    def __init__(self, data, m: int, ef_construction: int, levels, links, entry_point: int, seed: int = 0):
        self.data = np.ascontiguousarray(data, dtype=np.float32)
        self.m = m
        self.ef_construction = ef_construction
        self.levels = list(levels)
        # links[node][level] -> list of neighbor ids
        self.links = links
        self.entry_point = entry_point
        self.seed = seed
        self._visited = [0] * len(self.data)
        self._epoch = 0

    @property
    def n(self) -> int:
        return len(self.data)

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    @property
    def max_level(self) -> int:
        return self.levels[self.entry_point] if self.levels else -1

    def max_degree(self, level: int) -> int:
        return 2 * self.m if level == 0 else self.m

    def neighbors(self, node: int, level: int = 0) -> list[int]:
        node_links = self.links[node]
        return node_links[level] if level < len(node_links) else []

    def rebase(self, data) -> "HnswGraph":
        """Same graph over another rotation of the same vectors."""
        data = np.asarray(data, dtype=np.float32)
        if data.shape != self.data.shape:
            raise InvalidInputError("rebase needs vectors for the same ids and dimension")
        return HnswGraph(data, self.m, self.ef_construction, self.levels, self.links, self.entry_point, self.seed)

    def _new_epoch(self):
        self._epoch += 1
        return self._visited, self._epoch


def _dists(data: np.ndarray, ids, q: np.ndarray) -> np.ndarray:
    diff = data[ids].astype(np.float64) - q
    return np.sqrt(np.einsum("ij,ij->i", diff, diff))


def _search_layer_exact(g: HnswGraph, q: np.ndarray, entry: list[tuple[float, int]], ef: int, level: int):
    """Standard beam search with exact distances. Returns ``(dist, id)`` sorted."""
    visited, epoch = g._new_epoch()
    candidates = []
    results = []  # max-heap via (-dist, -id)
    for d, i in entry:
        visited[i] = epoch
        heapq.heappush(candidates, (d, i))
        heapq.heappush(results, (-d, -i))
    while len(results) > ef:
        heapq.heappop(results)
    while candidates:
        d, c = heapq.heappop(candidates)
        if d > -results[0][0]:
            break
        fresh = [e for e in g.neighbors(c, level) if visited[e] != epoch]
        if not fresh:
            continue
        for e in fresh:
            visited[e] = epoch
        for e, de in zip(fresh, _dists(g.data, fresh, q).tolist()):
            if len(results) < ef or (-de, -e) > results[0]:
                heapq.heappush(candidates, (de, e))
                heapq.heappush(results, (-de, -e))
                if len(results) > ef:
                    heapq.heappop(results)
    return sorted((-d, -i) for d, i in results)


def _select_heuristic(g: HnswGraph, candidates: list[tuple[float, int]], m: int) -> list[int]:
    """Keep a candidate only if it is closer to the base than to every
    neighbor already kept (sorted input, closest first)."""
    kept: list[int] = []
    kept_vecs = []
    for d, c in candidates:
        if len(kept) >= m:
            break
        if kept:
            vc = g.data[c].astype(np.float64)
            diff = np.asarray(kept_vecs) - vc
            if np.sqrt(np.einsum("ij,ij->i", diff, diff)).min() < d:
                continue
        kept.append(c)
        kept_vecs.append(g.data[c].astype(np.float64))
    return kept


def _shrink(g: HnswGraph, node: int, level: int) -> None:
    nbrs = g.links[node][level]
    cap = g.max_degree(level)
    if len(nbrs) <= cap:
        return
    dists = _dists(g.data, nbrs, g.data[node].astype(np.float64)).tolist()
    ranked = sorted(zip(dists, nbrs))
    g.links[node][level] = _select_heuristic(g, ranked, cap)


def build_hnsw(data, m: int = DEFAULT_M, ef_construction: int = DEFAULT_EF_CONSTRUCTION, seed: int = 0) -> HnswGraph:
    """Insert vectors in id order with levels drawn as ``floor(-ln U / ln M)``."""
    x = np.asarray(data, dtype=np.float32)
    if x.ndim != 2 or x.shape[0] < 1:
        raise InvalidInputError("data must be a non-empty (N, D) array")
    if m < 2:
        raise InvalidInputError("m must be >= 2")
    n = x.shape[0]
    rng = np.random.default_rng(seed)
    mult = 1.0 / math.log(m)
    levels = np.floor(-np.log(1.0 - rng.random(n)) * mult).astype(int).tolist()
    links = [[[] for _ in range(lv + 1)] for lv in levels]
    g = HnswGraph(x, m, ef_construction, levels, links, 0, seed)

    for node in range(1, n):
        q = x[node].astype(np.float64)
        top = g.levels[g.entry_point]
        ep = g.entry_point
        ep_d = float(_dists(x, [ep], q)[0])
        for level in range(top, levels[node], -1):
            ep_d, ep = _greedy(g, q, ep_d, ep, level)
        entry = [(ep_d, ep)]
        for level in range(min(top, levels[node]), -1, -1):
            found = _search_layer_exact(g, q, entry, ef_construction, level)
            chosen = _select_heuristic(g, found, m)
            g.links[node][level] = list(chosen)
            for nb in chosen:
                g.links[nb][level].append(node)
                _shrink(g, nb, level)
            entry = found
        if levels[node] > top:
            g.entry_point = node
    return g


def _greedy(g: HnswGraph, q: np.ndarray, d: float, node: int, level: int) -> tuple[float, int]:
    improved = True
    while improved:
        improved = False
        nbrs = g.neighbors(node, level)
        if not nbrs:
            break
        dists = _dists(g.data, nbrs, q)
        best = int(dists.argmin())
        if dists[best] < d:
            d, node = float(dists[best]), nbrs[best]
            improved = True
    return d, node


def search_hnsw(g: HnswGraph, q, k: int, ef: int, strategy, decoupled: bool = False,
                audit: bool = False) -> SearchResult:
    """Beam search at layer 0 with ``strategy`` as the DCO.

    Returns the ``k`` best candidates by exact distance, ties by id.
    """
    if k < 1:
        raise InvalidInputError("k must be >= 1")
    if k > ef:
        raise InvalidInputError(f"k ({k}) must not exceed ef ({ef})")
    q = np.asarray(q, dtype=np.float64)
    if q.shape != (g.dim,):
        raise InvalidInputError(f"query must have dimension {g.dim}")

    ep = g.entry_point
    ep_d = float(_dists(g.data, [ep], q)[0])
    for level in range(g.max_level, 0, -1):
        ep_d, ep = _greedy(g, q, ep_d, ep, level)

    stats = DcoStats()
    visited, epoch = g._new_epoch()
    visited[ep] = epoch
    candidates = [(ep_d, ep)]
    results = [(-ep_d, -ep)]  # ef-bounded, max-heap
    best = KnnHeap(k)
    best.offer(ep_d, ep)
    data = g.data
    links = g.links

    while candidates:
        d, c = heapq.heappop(candidates)
        if len(results) >= ef and d > -results[0][0]:
            break
        for e in links[c][0]:
            if visited[e] == epoch:
                continue
            visited[e] = epoch
            if decoupled:
                r = best.threshold()
            else:
                r = -results[0][0] if len(results) >= ef else math.inf
            outcome = run_dco(strategy, data[e], q, r, stats, audit)
            if outcome.pruned:
                if not decoupled:
                    continue
                key = outcome.estimate
            else:
                key = outcome.distance
                best.offer(key, e)
            if len(results) < ef or (-key, -e) > results[0]:
                heapq.heappush(candidates, (key, e))
                heapq.heappush(results, (-key, -e))
                if len(results) > ef:
                    heapq.heappop(results)

    if decoupled:
        pairs = best.sorted()
    else:
        pairs = sorted((-dd, -i) for dd, i in results)
    return SearchResult.from_pairs(pairs, k, stats)


_HNSW_MAGIC = b"DHNS"
_HNSW_HEADER = struct.Struct("<4sIIIIIiiQ")


def save_hnsw(g: HnswGraph, path) -> None:
    """Header, per-node levels, CSR adjacency per level, then the vectors.
    Byte layout in ``docs/file_formats.md``."""
    top = max(g.levels) if g.levels else -1
    with open(path, "wb") as fh:
        fh.write(_HNSW_HEADER.pack(_HNSW_MAGIC, 1, g.n, g.dim, g.m, g.ef_construction,
                                   g.entry_point, top, g.seed))
        fh.write(np.asarray(g.levels, dtype="<u4").tobytes())
        for level in range(top + 1):
            offsets = [0]
            flat: list[int] = []
            for node in range(g.n):
                flat.extend(g.neighbors(node, level))
                offsets.append(len(flat))
            fh.write(np.asarray(offsets, dtype="<u4").tobytes())
            fh.write(np.asarray(flat, dtype="<u4").tobytes())
        fh.write(g.data.astype("<f4").tobytes())


def load_hnsw(path) -> HnswGraph:
    raw = Path(path).read_bytes()
    if len(raw) < _HNSW_HEADER.size:
        raise FormatError(f"{path}: truncated HNSW header")
    magic, version, n, dim, m, efc, entry, top, seed = _HNSW_HEADER.unpack_from(raw)
    if magic != _HNSW_MAGIC or version != 1:
        raise FormatError(f"{path}: not a version-1 HNSW graph")
    off = _HNSW_HEADER.size
    try:
        levels = np.frombuffer(raw, "<u4", n, off).astype(int).tolist()
        off += 4 * n
        links = [[[] for _ in range(lv + 1)] for lv in levels]
        for level in range(top + 1):
            offsets = np.frombuffer(raw, "<u4", n + 1, off).astype(np.int64)
            off += 4 * (n + 1)
            flat = np.frombuffer(raw, "<u4", int(offsets[-1]), off).astype(int).tolist()
            off += 4 * int(offsets[-1])
            for node in range(n):
                if level <= levels[node]:
                    links[node][level] = flat[offsets[node]:offsets[node + 1]]
        data = np.frombuffer(raw, "<f4", n * dim, off).reshape(n, dim)
        off += 4 * n * dim
    except ValueError as exc:
        raise FormatError(f"{path}: truncated HNSW body") from exc
    if off != len(raw):
        raise FormatError(f"{path}: {len(raw) - off} trailing bytes")
    return HnswGraph(data, m, efc, levels, links, entry, seed)
