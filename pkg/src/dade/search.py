"""Pieces shared by every index: the bounded k-best heap, the search result,
and the DCO bookkeeping hook."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from .estimator import DcoOutcome, DcoStats

__all__ = ["KnnHeap", "SearchResult", "run_dco", "linear_scan"]


class KnnHeap:
    """Max-heap of the ``k`` best ``(distance, id)`` pairs seen so far.

    Ordering is by distance, then id, so results are reproducible when
    distances tie.
    """

    __slots__ = ("k", "_heap")

    def __init__(self, k: int):
        self.k = k
        self._heap: list[tuple[float, int]] = []

    def __len__(self):
        return len(self._heap)

    def full(self) -> bool:
        return len(self._heap) >= self.k

    def threshold(self) -> float:
        """Current k-th best distance, ``inf`` until ``k`` entries are held."""
        return -self._heap[0][0] if len(self._heap) >= self.k else math.inf

    def worst(self) -> tuple[float, int]:
        d, neg_id = self._heap[0]
        return -d, -neg_id

    def offer(self, dist: float, idx: int) -> bool:
        item = (-dist, -idx)
        if len(self._heap) < self.k:
            heapq.heappush(self._heap, item)
            return True
        if item > self._heap[0]:
            heapq.heapreplace(self._heap, item)
            return True
        return False

    def sorted(self) -> list[tuple[float, int]]:
        return sorted((-d, -i) for d, i in self._heap)


@dataclass
class SearchResult:
    ids: np.ndarray
    distances: np.ndarray
    stats: DcoStats = field(default_factory=DcoStats)
    # False when fewer than K candidates were available.
    complete: bool = True

    @classmethod
    def from_pairs(cls, pairs, k: int, stats: DcoStats) -> "SearchResult":
        pairs = pairs[:k]
        ids = np.array([i for _, i in pairs], dtype=np.int64)
        dists = np.array([d for d, _ in pairs], dtype=np.float64)
        return cls(ids, dists, stats, len(pairs) == k)


def run_dco(strategy, o, q, r: float, stats: DcoStats, audit: bool = False) -> DcoOutcome:
    """Run one DCO and record it. With ``audit`` the exact distance is also
    computed so that wrong rejections (true distance within ``r``) are counted."""
    outcome = strategy.compare(o, q, r)
    stats.total_dco += 1
    stats.dims_accumulated += outcome.dims_used
    if audit:
        if outcome.pruned or not outcome.exact:
            diff = np.asarray(o[0:len(q)], dtype=np.float64) - q
            true = math.sqrt(float(diff @ diff))
        else:
            true = outcome.distance
        if true <= r:
            stats.positives += 1
            if outcome.pruned:
                stats.failures += 1
    return outcome


def linear_scan(data, q, k: int, strategy, audit: bool = False) -> SearchResult:
    """Scan every vector in id order, keeping a k-best heap whose k-th
    distance is the DCO threshold."""
    q = np.asarray(q, dtype=np.float64)
    heap = KnnHeap(k)
    stats = DcoStats()
    for idx in range(len(data)):
        o = data[idx]
        outcome = run_dco(strategy, o, q, heap.threshold(), stats, audit)
        if not outcome.pruned:
            heap.offer(outcome.distance, idx)
    return SearchResult.from_pairs(heap.sorted(), k, stats)
