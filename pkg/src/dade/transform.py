"""Orthogonal transforms fitted to data.

Two kinds are supported. ``pca`` rotates the space onto the eigenvectors of
the data covariance so that the leading components carry the most variance;
``random`` is a seeded Haar-random rotation used by the ADSampling baseline.
Both expose per-component variances and their prefix sums, which is what the
partial-distance estimators scale by.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConvergenceError, FormatError, InvalidInputError

__all__ = [
    "OrthoTransform",
    "as_vector_set",
    "compute_covariance",
    "jacobi_eigh",
    "fit_pca",
    "fit_random_orthogonal",
    "apply_transform",
    "save_transform",
    "load_transform",
]

KIND_CODES = {"pca": 0, "random": 1}
MAGIC = b"DADE"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIBI")


def as_vector_set(values, dim=None) -> np.ndarray:
    """Validate ``values`` as a vector set and return it as C-contiguous float32.

    A vector set is an ``(N, D)`` array of finite values. A 1-D input is read
    as a single vector.
    """
    arr = np.asarray(values)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise InvalidInputError(f"expected a non-empty (N, D) array, got shape {arr.shape}")
    if dim is not None and arr.shape[1] != dim:
        raise InvalidInputError(f"dimension mismatch: expected {dim}, got {arr.shape[1]}")
    arr = np.ascontiguousarray(arr, dtype=np.float32)
    if not np.isfinite(arr).all():
        raise InvalidInputError("vector set contains NaN or Inf")
    return arr


@dataclass(frozen=True)
class OrthoTransform:
    """A fitted ``D x D`` orthogonal transform.

    ``matrix[:, k]`` is the k-th component. ``eigenvalues[k]`` is the variance
    of the data along that component (for ``pca`` these are the covariance
    eigenvalues in nonincreasing order; for ``random`` they are the empirical
    projected variances in component order). ``lambda_prefix[d]`` is the sum of
    the first ``d`` of them.
    """

    kind: str
    mean: np.ndarray
    matrix: np.ndarray
    eigenvalues: np.ndarray
    lambda_prefix: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.kind not in KIND_CODES:
            raise InvalidInputError(f"unknown transform kind {self.kind!r}")
        matrix = np.array(self.matrix, dtype=np.float64)
        dim = matrix.shape[0]
        if matrix.shape != (dim, dim):
            raise InvalidInputError(f"transform matrix must be square, got {matrix.shape}")
        eig = np.array(self.eigenvalues, dtype=np.float64)
        if eig.shape != (dim,):
            raise InvalidInputError("eigenvalue count does not match dimension")
        if np.any(eig < -1e-6 * max(1.0, float(np.abs(eig).max()))):
            raise InvalidInputError("eigenvalues must be nonnegative")
        eig = np.maximum(eig, 0.0)
        mean = np.array(self.mean, dtype=np.float64).reshape(dim)
        prefix = np.concatenate(([0.0], np.cumsum(eig)))
        for name, value in (("matrix", matrix), ("eigenvalues", eig), ("mean", mean), ("lambda_prefix", prefix)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def orthogonality_error(self) -> float:
        """Max-abs entry of ``W^T W - I``."""
        gram = self.matrix.T @ self.matrix
        return float(np.abs(gram - np.eye(self.dim)).max())

    def __call__(self, vectors) -> np.ndarray:
        return apply_transform(self, vectors)


def compute_covariance(data) -> tuple[np.ndarray, np.ndarray]:
    """Mean and population covariance (``1/N`` normalization) in float64."""
    x = np.asarray(data, dtype=np.float64)
    if x.ndim != 2:
        raise InvalidInputError(f"expected an (N, D) array, got shape {x.shape}")
    if x.shape[0] < 2:
        raise InvalidInputError("covariance needs at least 2 vectors")
    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / x.shape[0]
    # The product is symmetric in exact arithmetic; remove rounding asymmetry.
    cov = 0.5 * (cov + cov.T)
    return mean, cov


def _round_robin(n: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Pairings for one cyclic sweep: every (p, q) pair exactly once, in n-1
    rounds of n/2 disjoint pairs (circle method). ``n`` must be even."""
    players = list(range(n))
    rounds = []
    for _ in range(n - 1):
        half = n // 2
        p = np.array(players[:half])
        q = np.array(players[::-1][:half])
        lo, hi = np.minimum(p, q), np.maximum(p, q)
        rounds.append((lo, hi))
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def jacobi_eigh(matrix, tol: float = 1e-10, max_sweeps: int = 100) -> tuple[np.ndarray, np.ndarray, int]:
    """Eigendecomposition of a real symmetric matrix by cyclic Jacobi rotations.

    Each sweep visits every off-diagonal pair once. Pairs are scheduled in
    rounds of disjoint index pairs, so one round is a single block-diagonal
    rotation applied with array operations.

    Converged when the off-diagonal Frobenius norm drops below
    ``tol * |trace|``.

    Returns:
        (eigenvalues, eigenvectors, sweeps) with ``eigenvectors[:, k]``
        paired to ``eigenvalues[k]``, both in the solver's diagonal order
        (unsorted).

    Raises:
        ConvergenceError: if ``max_sweeps`` sweeps do not reach tolerance.
    """
    a = np.array(matrix, dtype=np.float64)
    n = a.shape[0]
    if a.shape != (n, n):
        raise InvalidInputError(f"matrix must be square, got {a.shape}")
    if not np.allclose(a, a.T, rtol=1e-9, atol=1e-12 * max(1.0, float(np.abs(a).max()))):
        raise InvalidInputError("matrix must be symmetric")
    a = 0.5 * (a + a.T)
    v = np.eye(n)
    if n == 1:
        return a.diagonal().copy(), v, 0

    padded = n + (n % 2)
    if padded != n:
        a = np.pad(a, ((0, 1), (0, 1)))
        v = np.pad(v, ((0, 1), (0, 1)))
        v[n, n] = 1.0
    rounds = _round_robin(padded)
    threshold = tol * abs(float(np.trace(a)))

    off_mask = ~np.eye(padded, dtype=bool)

    def off_norm():
        # Summing the off-diagonal entries directly; subtracting the diagonal
        # from the full norm cancels catastrophically near convergence.
        off = a[off_mask]
        return float(np.sqrt(off @ off))

    sweeps = 0
    while off_norm() > threshold:
        if sweeps >= max_sweeps:
            raise ConvergenceError(
                f"Jacobi eigensolver did not converge after {sweeps} sweeps "
                f"(off-diagonal norm {off_norm():.3e} > {threshold:.3e})",
                sweeps,
            )
        sweeps += 1
        for p, q in rounds:
            apq = a[p, q]
            active = apq != 0.0
            if not active.any():
                continue
            app, aqq = a[p, p], a[q, q]
            theta = np.zeros_like(apq)
            theta[active] = (aqq[active] - app[active]) / (2.0 * apq[active])
            big = np.abs(theta) > 1e150
            safe = np.where(big, 0.0, theta)
            t = np.where(theta >= 0, 1.0, -1.0) / (np.abs(safe) + np.sqrt(safe * safe + 1.0))
            # tan of the rotation angle tends to 1/(2 theta) for huge theta.
            t[big] = 0.5 / theta[big]
            t[~active] = 0.0
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c

            cols_p, cols_q = a[:, p].copy(), a[:, q]
            a[:, p] = c * cols_p - s * cols_q
            a[:, q] = s * cols_p + c * cols_q
            rows_p, rows_q = a[p, :].copy(), a[q, :]
            a[p, :] = c[:, None] * rows_p - s[:, None] * rows_q
            a[q, :] = s[:, None] * rows_p + c[:, None] * rows_q
            a[p, q] = 0.0
            a[q, p] = 0.0

            vp, vq = v[:, p].copy(), v[:, q]
            v[:, p] = c * vp - s * vq
            v[:, q] = s * vp + c * vq

    return a.diagonal()[:n].copy(), v[:n, :n].copy(), sweeps


def _canonical_order(eigenvalues: np.ndarray, vectors: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sort descending (stable, so ties keep solver column order) and flip each
    vector so its first nonzero component is positive."""
    order = np.argsort(-eigenvalues, kind="stable")
    eigenvalues = eigenvalues[order]
    vectors = vectors[:, order].copy()
    for k in range(vectors.shape[1]):
        nz = np.flatnonzero(np.abs(vectors[:, k]) > 1e-12)
        if nz.size and vectors[nz[0], k] < 0:
            vectors[:, k] *= -1.0
    return eigenvalues, vectors


def fit_pca(data, tol: float = 1e-10, max_sweeps: int = 100) -> OrthoTransform:
    """Fit the PCA rotation of ``data``.

    >>> t = fit_pca([[2.0, 0.0], [-2.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
    >>> t.eigenvalues.tolist(), t.matrix[:, 0].tolist()
    ([2.0, 0.5], [1.0, 0.0])
    """
    mean, cov = compute_covariance(data)
    eigenvalues, vectors, _ = jacobi_eigh(cov, tol=tol, max_sweeps=max_sweeps)
    eigenvalues = np.where(eigenvalues < 0, 0.0, eigenvalues)
    eigenvalues, vectors = _canonical_order(eigenvalues, vectors)
    return OrthoTransform("pca", mean, vectors, eigenvalues)


def random_orthogonal_matrix(dim: int, seed: int) -> np.ndarray:
    """Haar-distributed orthogonal matrix from the QR of a seeded Gaussian."""
    if dim < 1:
        raise InvalidInputError("dim must be >= 1")
    rng = np.random.default_rng(seed)
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs


def fit_random_orthogonal(dim: int, seed: int, data) -> OrthoTransform:
    """Random rotation whose variance fields describe ``data`` projected on it.

    Components are kept in generation order, not sorted by variance, so the
    baseline stays data-oblivious.
    """
    matrix = random_orthogonal_matrix(dim, seed)
    x = np.asarray(data, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != dim:
        raise InvalidInputError(f"data must have shape (N, {dim})")
    mean = x.mean(axis=0)
    projected = (x - mean) @ matrix
    variances = (projected * projected).mean(axis=0)
    return OrthoTransform("random", mean, matrix, variances)


def apply_transform(t: OrthoTransform, vectors) -> np.ndarray:
    """Rotate each row ``v`` to ``W^T v``. No centering is applied."""
    v = np.asarray(vectors)
    single = v.ndim == 1
    v = as_vector_set(v, dim=t.dim)
    out = (v.astype(np.float64) @ t.matrix).astype(np.float32)
    return out[0] if single else out


def save_transform(t: OrthoTransform, path) -> None:
    """Write ``t`` in the little-endian binary layout documented in
    ``docs/file_formats.md``."""
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, KIND_CODES[t.kind], t.dim))
        fh.write(t.mean.astype("<f8").tobytes())
        fh.write(t.eigenvalues.astype("<f8").tobytes())
        fh.write(t.matrix.astype("<f8").tobytes(order="F"))


def load_transform(path) -> OrthoTransform:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: truncated transform header")
    magic, version, kind_code, dim = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported transform version {version}")
    kinds = {v: k for k, v in KIND_CODES.items()}
    if kind_code not in kinds:
        raise FormatError(f"{path}: unknown transform kind code {kind_code}")
    expected = _HEADER.size + 8 * (2 * dim + dim * dim)
    if len(raw) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, found {len(raw)}")
    body = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    mean = body[:dim]
    eig = body[dim:2 * dim]
    matrix = body[2 * dim:].reshape((dim, dim), order="F")
    return OrthoTransform(kinds[kind_code], mean, matrix, eig)
