"""Distance comparison operations (DCOs).

A DCO answers "is ``dist(o, q) <= r``, and if so what is the distance".
All strategies here work on vectors that were already rotated by an
:class:`~dade.transform.OrthoTransform`; only the way they estimate the
distance from a prefix of the components differs.

Thresholds are compared on squared values to keep square roots out of the
loop. ``r`` may be ``inf`` (nothing to prune against yet).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ConfigurationError, InvalidInputError

__all__ = [
    "DcoOutcome",
    "DcoStats",
    "DegenerateSpectrumWarning",
    "fd_scanning_dco",
    "partial_sqdist",
    "dade_estimate",
    "adsampling_estimate",
    "dade_dco",
    "adsampling_dco",
    "fixed_dim_dco",
    "checkpoints",
    "FDScanning",
    "ADSampling",
    "DADE",
    "FixedDim",
    "DEFAULT_DELTA_D",
    "DEFAULT_EPS0",
]

DEFAULT_DELTA_D = 32
DEFAULT_EPS0 = 2.1


class DegenerateSpectrumWarning(RuntimeWarning):
    """The leading components carry no variance, so the estimator scale is
    undefined and 1 is used instead."""


class DcoOutcome(NamedTuple):
    """Result of one DCO.

    ``distance`` is the distance when the candidate was accepted (exact unless
    ``exact`` is false, which only fixed-dimension strategies produce below
    full dimension). ``estimate`` is the last distance value the strategy
    computed, which is also defined for pruned candidates.
    """

    pruned: bool
    distance: float | None
    dims_used: int
    estimate: float
    exact: bool = True


@dataclass
class DcoStats:
    """Per-run counters. Not thread-safe; keep one per worker and merge."""

    total_dco: int = 0
    dims_accumulated: int = 0
    failures: int = 0
    positives: int = 0

    def record(self, outcome: DcoOutcome) -> None:
        self.total_dco += 1
        self.dims_accumulated += outcome.dims_used

    def merge(self, other: "DcoStats") -> "DcoStats":
        self.total_dco += other.total_dco
        self.dims_accumulated += other.dims_accumulated
        self.failures += other.failures
        self.positives += other.positives
        return self

    def dimension_fraction(self, dim: int) -> float:
        if self.total_dco == 0:
            return 0.0
        return self.dims_accumulated / (self.total_dco * dim)

    def failure_rate(self) -> float:
        """Failures among audited candidates whose true distance was within
        the threshold; NaN when nothing was audited."""
        return self.failures / self.positives if self.positives else float("nan")


def _check_pair(o, q) -> int:
    if len(o) != len(q):
        raise InvalidInputError(f"dimension mismatch: {len(o)} vs {len(q)}")
    return len(q)


def partial_sqdist(o, q, lo: int, hi: int) -> float:
    """Squared distance restricted to components ``lo <= k < hi`` (float64)."""
    dim = _check_pair(o, q)
    if not 0 <= lo < hi <= dim:
        raise InvalidInputError(f"invalid component range [{lo}, {hi}) for dimension {dim}")
    diff = np.asarray(o[lo:hi], dtype=np.float64) - np.asarray(q[lo:hi], dtype=np.float64)
    return float(diff @ diff)


def fd_scanning_dco(o, q, r: float) -> DcoOutcome:
    """Exact full-dimension comparison."""
    dim = _check_pair(o, q)
    dist = math.sqrt(partial_sqdist(o, q, 0, dim))
    pruned = dist > r
    return DcoOutcome(pruned, None if pruned else dist, dim, dist)


def dade_estimate(t, partial: float, d: int) -> float:
    """Scale a ``d``-component squared distance up to full dimension by the
    ratio of total variance to the variance held in the first ``d`` components.

    >>> from dade.transform import OrthoTransform
    >>> import numpy as np
    >>> t = OrthoTransform("pca", np.zeros(2), np.eye(2), np.array([3.0, 1.0]))
    >>> dade_estimate(t, 6.0, 1)
    8.0
    """
    dim = t.dim
    if not 1 <= d <= dim:
        raise InvalidInputError(f"d must be in [1, {dim}], got {d}")
    if d == dim:
        return float(partial)
    head = t.lambda_prefix[d]
    if head <= 0.0:
        warnings.warn(
            f"no variance in the first {d} components; using scale 1",
            DegenerateSpectrumWarning,
            stacklevel=2,
        )
        return float(partial)
    return float(t.lambda_prefix[dim] / head * partial)


def adsampling_estimate(partial: float, d: int, dim: int) -> float:
    """``(D / d) * partial``: the random-rotation estimate of the squared distance."""
    if not 1 <= d <= dim:
        raise InvalidInputError(f"d must be in [1, {dim}], got {d}")
    if d == dim:
        return float(partial)
    return dim / d * partial


def checkpoints(dim: int, delta_d: int) -> list[int]:
    """Dimension counts visited by the expansion loop. The last step is
    clipped to ``dim``, so ``dim`` is always the final entry."""
    if delta_d < 1:
        raise InvalidInputError("delta_d must be >= 1")
    points = list(range(delta_d, dim, delta_d))
    points.append(dim)
    return points


def _plan(dim: int, delta_d: int, scale_bound) -> tuple:
    """Precompute ``(lo, hi, scale, bound_sq)`` per checkpoint below ``dim``.

    ``scale_bound(d)`` returns the estimator scale and the multiplicative
    bound ``1 + eps`` for checkpoint ``d``; a ``None`` scale or an infinite
    bound disables rejection there, and its components are folded into the
    next range. The exact full-dimension step is implied.
    """
    steps = []
    lo = 0
    for d in checkpoints(dim, delta_d)[:-1]:
        scale, bound = scale_bound(d)
        if scale is None or math.isinf(bound):
            continue
        steps.append((lo, d, scale, bound * bound))
        lo = d
    return tuple(steps), lo, dim


def _adaptive_dco(o, q, r: float, plan) -> DcoOutcome:
    steps, tail, dim = plan
    r_sq = r * r
    acc = 0.0
    for lo, hi, scale, bound_sq in steps:
        diff = o[lo:hi] - q[lo:hi]
        acc += float(diff @ diff)
        est_sq = scale * acc
        if est_sq > bound_sq * r_sq:
            return DcoOutcome(True, None, hi, math.sqrt(est_sq))
    diff = o[tail:dim] - q[tail:dim]
    dist = math.sqrt(acc + float(diff @ diff))
    pruned = dist > r
    return DcoOutcome(pruned, None if pruned else dist, dim, dist)


def _as_query(q) -> np.ndarray:
    return np.asarray(q, dtype=np.float64)


def _dade_plan(t, cal, delta_d: int) -> tuple:
    if cal.delta_d != delta_d:
        raise ConfigurationError(
            f"calibration step {cal.delta_d} does not match requested delta_d {delta_d}"
        )
    if cal.dim is not None and cal.dim != t.dim:
        raise ConfigurationError(f"calibration dimension {cal.dim} does not match transform {t.dim}")
    eps = cal.as_dict()
    total = t.lambda_prefix[t.dim]

    def scale_bound(d):
        if d not in eps:
            raise ConfigurationError(f"calibration has no error bound for checkpoint d={d}")
        head = t.lambda_prefix[d]
        if head <= 0.0:
            return None, 1.0
        return total / head, 1.0 + eps[d]

    return _plan(t.dim, delta_d, scale_bound)


def _adsampling_plan(dim: int, delta_d: int, eps0: float) -> tuple:
    return _plan(dim, delta_d, lambda d: (dim / d, 1.0 + eps0 / math.sqrt(d)))


def dade_dco(o, q, r: float, t, cal, delta_d: int) -> DcoOutcome:
    """Adaptive DCO with eigenvalue-ratio scaling and calibrated bounds.

    Components are added ``delta_d`` at a time. Before full dimension the
    candidate is pruned as soon as the scaled estimate exceeds
    ``(1 + eps_d) * r``; at full dimension the exact distance decides.
    """
    q = _as_query(q)
    _check_pair(o, q)
    return _adaptive_dco(o, q, r, _dade_plan(t, cal, delta_d))


def adsampling_dco(o, q, r: float, delta_d: int, eps0: float = DEFAULT_EPS0) -> DcoOutcome:
    """Adaptive DCO on randomly rotated vectors with the ``(1 + eps0/sqrt(d))``
    bound and ``D/d`` scaling."""
    q = _as_query(q)
    dim = _check_pair(o, q)
    return _adaptive_dco(o, q, r, _adsampling_plan(dim, delta_d, eps0))


def fixed_dim_dco(o, q, r: float, d_fixed: int, scale_rule: str, t=None) -> DcoOutcome:
    """Single estimate from the first ``d_fixed`` components, no expansion.

    ``scale_rule`` is ``"pca_eq13"`` (variance-ratio scale, needs ``t``) or
    ``"random_D_over_d"``. Accepted candidates carry the estimate, which is
    only exact when ``d_fixed`` equals the dimension.
    """
    q = _as_query(q)
    dim = _check_pair(o, q)
    scale = _fixed_scale(dim, d_fixed, scale_rule, t)
    return _fixed_dco(o, q, r, d_fixed, scale, dim)


def _fixed_scale(dim: int, d_fixed: int, scale_rule: str, t) -> float:
    if not 1 <= d_fixed <= dim:
        raise InvalidInputError(f"d_fixed must be in [1, {dim}], got {d_fixed}")
    if scale_rule == "pca_eq13":
        if t is None:
            raise InvalidInputError("pca_eq13 scaling needs the fitted transform")
        head = t.lambda_prefix[d_fixed]
        return 1.0 if head <= 0.0 else float(t.lambda_prefix[dim] / head)
    if scale_rule == "random_D_over_d":
        return dim / d_fixed
    raise InvalidInputError(f"unknown scale rule {scale_rule!r}")


def _fixed_dco(o, q, r, d_fixed, scale, dim) -> DcoOutcome:
    diff = o[:d_fixed] - q[:d_fixed]
    est = math.sqrt(scale * float(diff @ diff)) if d_fixed < dim else math.sqrt(float(diff @ diff))
    pruned = est > r
    return DcoOutcome(pruned, None if pruned else est, d_fixed, est, d_fixed == dim)


class FDScanning:
    """Strategy object for exact scanning; the baseline every index supports."""

    name = "fd"
    transform_kind = None

    def compare(self, o, q, r: float) -> DcoOutcome:
        diff = o - q
        dist = math.sqrt(float(diff @ diff))
        pruned = dist > r
        return DcoOutcome(pruned, None if pruned else dist, len(q), dist)


class ADSampling:
    """Random-rotation adaptive sampling. Vectors must be rotated by a
    ``random`` transform."""

    name = "ads"
    transform_kind = "random"

    def __init__(self, dim: int, delta_d: int = DEFAULT_DELTA_D, eps0: float = DEFAULT_EPS0):
        self.dim = dim
        self.delta_d = delta_d
        self.eps0 = eps0
        self._plan = _adsampling_plan(dim, delta_d, eps0)

    def compare(self, o, q, r: float) -> DcoOutcome:
        return _adaptive_dco(o, q, r, self._plan)


class DADE:
    """Data-aware adaptive DCO. Vectors must be rotated by ``transform``
    (normally a ``pca`` one) and ``calibration`` must have been fitted with
    the same step size."""

    name = "dade"
    transform_kind = "pca"

    def __init__(self, transform, calibration, delta_d: int | None = None):
        self.transform = transform
        self.calibration = calibration
        self.delta_d = calibration.delta_d if delta_d is None else delta_d
        self.transform_kind = transform.kind
        self._plan = _dade_plan(transform, calibration, self.delta_d)

    def compare(self, o, q, r: float) -> DcoOutcome:
        return _adaptive_dco(o, q, r, self._plan)


class FixedDim:
    """Fixed-dimension projection baseline (``fixed-pca`` / ``fixed-random``)."""

    def __init__(self, dim: int, d_fixed: int, scale_rule: str, transform=None):
        self.dim = dim
        self.d_fixed = d_fixed
        self.scale_rule = scale_rule
        self.scale = _fixed_scale(dim, d_fixed, scale_rule, transform)
        self.name = "fixed-pca" if scale_rule == "pca_eq13" else "fixed-random"
        self.transform_kind = "pca" if scale_rule == "pca_eq13" else "random"

    def compare(self, o, q, r: float) -> DcoOutcome:
        return _fixed_dco(o, q, r, self.d_fixed, self.scale, self.dim)
