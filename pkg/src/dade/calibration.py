"""Empirical error bounds for the adaptive estimator.

For each checkpoint ``d`` the bound ``eps_d`` is the ``(1 - p_s)`` quantile of
``estimate_d / exact - 1`` over uniformly sampled pairs of data vectors, so an
estimate overshoots ``(1 + eps_d) * exact`` with probability about ``p_s``.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CalibrationError, FormatError, InvalidInputError
from .estimator import checkpoints

__all__ = [
    "CalibrationTable",
    "sample_pairs",
    "pair_ratios",
    "empirical_upper_quantile",
    "calibrate",
    "validate_calibration",
    "save_calibration",
    "load_calibration",
    "DEFAULT_P_S",
    "DEFAULT_N_PAIRS",
]

DEFAULT_P_S = 0.1
DEFAULT_N_PAIRS = 100_000
_CHUNK = 8192


@dataclass(frozen=True)
class CalibrationTable:
    p_s: float
    delta_d: int
    checkpoints: tuple[int, ...]
    epsilons: tuple[float, ...]
    sample_count: int = 0
    dim: int | None = None
    # Diagnostics, not persisted: quantiles before the monotone pass and the
    # lower p_s quantile of the same ratios.
    raw_epsilons: tuple[float, ...] = field(default=(), compare=False)
    lower_epsilons: tuple[float, ...] = field(default=(), compare=False)

    def __post_init__(self):
        if len(self.checkpoints) != len(self.epsilons):
            raise InvalidInputError("one epsilon per checkpoint is required")

    def as_dict(self) -> dict[int, float]:
        return dict(zip(self.checkpoints, self.epsilons))

    def epsilon(self, d: int) -> float:
        try:
            return self.as_dict()[d]
        except KeyError:
            raise InvalidInputError(f"no calibrated bound for d={d}") from None

    def with_epsilons(self, epsilons) -> "CalibrationTable":
        return CalibrationTable(
            self.p_s, self.delta_d, self.checkpoints, tuple(float(e) for e in epsilons),
            self.sample_count, self.dim,
        )


def sample_pairs(n_vectors: int, n_pairs: int, seed: int) -> np.ndarray:
    """Draw ``n_pairs`` ordered index pairs ``(i, j)``, ``i != j``, uniformly
    with replacement. Returns an ``(n_pairs, 2)`` int64 array."""
    if n_vectors < 2:
        raise InvalidInputError("need at least 2 vectors to sample pairs")
    if n_pairs < 1:
        raise InvalidInputError("n_pairs must be >= 1")
    rng = np.random.default_rng(seed)
    i = rng.integers(0, n_vectors, size=n_pairs)
    j = rng.integers(0, n_vectors - 1, size=n_pairs)
    j += j >= i
    return np.stack([i, j], axis=1)


def pair_ratios(t, data, pairs, cps) -> tuple[np.ndarray, np.ndarray]:
    """``estimate_d / exact - 1`` for every pair and checkpoint.

    Returns ``(ratios, keep)``: ``ratios`` has one row per pair with nonzero
    exact distance and one column per checkpoint; ``keep`` masks the pairs used.
    """
    x = np.asarray(data)
    dim = x.shape[1]
    cps = np.asarray(cps, dtype=np.int64)
    scale = t.lambda_prefix[dim] / t.lambda_prefix[cps]
    out, keep = [], []
    for start in range(0, len(pairs), _CHUNK):
        chunk = pairs[start:start + _CHUNK]
        diff = x[chunk[:, 0]].astype(np.float64) - x[chunk[:, 1]]
        cum = np.cumsum(diff * diff, axis=1)
        exact = cum[:, -1]
        nonzero = exact > 0.0
        partial = cum[:, cps - 1][nonzero]
        with np.errstate(divide="ignore", invalid="ignore"):
            out.append(np.sqrt(partial * scale / exact[nonzero, None]) - 1.0)
        keep.append(nonzero)
    return np.concatenate(out), np.concatenate(keep)


def empirical_upper_quantile(values: np.ndarray, level: float, axis: int = 0) -> np.ndarray:
    """Sort-based quantile at 1-based rank ``ceil(level * n)``; no interpolation."""
    n = values.shape[axis]
    rank = math.ceil(level * n - 1e-9)
    rank = min(max(rank, 1), n)
    return np.sort(values, axis=axis).take(rank - 1, axis=axis)


def calibrate(
    t,
    data,
    p_s: float = DEFAULT_P_S,
    delta_d: int = 32,
    n_pairs: int | None = None,
    seed: int = 0,
) -> CalibrationTable:
    """Estimate ``eps_d`` for every checkpoint below full dimension.

    ``data`` must already be rotated by ``t``. Pairs with zero distance are
    skipped; if more than half are, calibration is impossible. After the
    per-checkpoint quantiles, a running minimum over increasing ``d`` makes
    the bounds nonincreasing.
    """
    if not 0.0 < p_s < 1.0:
        raise InvalidInputError(f"p_s must be in (0, 1), got {p_s}")
    x = np.asarray(data)
    n, dim = x.shape
    if dim != t.dim:
        raise InvalidInputError(f"data dimension {dim} does not match transform {t.dim}")
    if n_pairs is None:
        n_pairs = min(DEFAULT_N_PAIRS, n * (n - 1) // 2)
    cps = checkpoints(dim, delta_d)[:-1]
    if not cps:
        return CalibrationTable(p_s, delta_d, (), (), 0, dim)
    if np.any(t.lambda_prefix[cps] <= 0.0):
        raise CalibrationError("leading components carry no variance; the estimator scale is undefined")

    pairs = sample_pairs(n, n_pairs, seed)
    ratios, keep = pair_ratios(t, x, pairs, cps)
    used = int(keep.sum())
    if used == 0 or used * 2 < n_pairs:
        raise CalibrationError(
            f"{n_pairs - used} of {n_pairs} sampled pairs have zero distance; cannot calibrate"
        )
    if math.ceil((1.0 - p_s) * used - 1e-9) < 1:
        raise CalibrationError(f"{used} usable pairs are too few for p_s={p_s}")

    raw = empirical_upper_quantile(ratios, 1.0 - p_s)
    lower = empirical_upper_quantile(ratios, p_s)
    # Running minimum over increasing d: a later bound never exceeds an earlier one.
    monotone = np.minimum.accumulate(raw)
    return CalibrationTable(
        p_s=float(p_s),
        delta_d=int(delta_d),
        checkpoints=tuple(int(c) for c in cps),
        epsilons=tuple(float(e) for e in monotone),
        sample_count=used,
        dim=dim,
        raw_epsilons=tuple(float(e) for e in raw),
        lower_epsilons=tuple(float(e) for e in lower),
    )


def validate_calibration(cal: CalibrationTable, t, data, n_holdout: int = 50_000, seed: int = 1) -> np.ndarray:
    """Fraction of fresh pairs whose ratio exceeds ``eps_d``, per checkpoint.

    Use a seed different from the one given to :func:`calibrate`.
    """
    x = np.asarray(data)
    if not cal.checkpoints:
        return np.zeros(0)
    pairs = sample_pairs(x.shape[0], n_holdout, seed)
    ratios, _ = pair_ratios(t, x, pairs, cal.checkpoints)
    return (ratios > np.asarray(cal.epsilons)).mean(axis=0)


_CAL_HEADER = struct.Struct("<dII")
_CAL_RECORD = struct.Struct("<Id")


def save_calibration(cal: CalibrationTable, path) -> None:
    with open(path, "wb") as fh:
        fh.write(_CAL_HEADER.pack(cal.p_s, cal.delta_d, len(cal.checkpoints)))
        for d, eps in zip(cal.checkpoints, cal.epsilons):
            fh.write(_CAL_RECORD.pack(d, eps))


def load_calibration(path, dim: int | None = None) -> CalibrationTable:
    """Read a calibration file. The format carries no dimension, so pass the
    transform's ``dim`` to have it recorded on the table."""
    raw = Path(path).read_bytes()
    if len(raw) < _CAL_HEADER.size:
        raise FormatError(f"{path}: truncated calibration header")
    p_s, delta_d, count = _CAL_HEADER.unpack_from(raw)
    if len(raw) != _CAL_HEADER.size + count * _CAL_RECORD.size:
        raise FormatError(f"{path}: expected {count} records")
    records = [
        _CAL_RECORD.unpack_from(raw, _CAL_HEADER.size + k * _CAL_RECORD.size) for k in range(count)
    ]
    return CalibrationTable(
        p_s, delta_d, tuple(d for d, _ in records), tuple(e for _, e in records), 0, dim
    )
