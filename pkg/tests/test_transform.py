import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dade.errors import ConvergenceError, FormatError, InvalidInputError
from dade.transform import (OrthoTransform, apply_transform, as_vector_set, compute_covariance, fit_pca,
                            fit_random_orthogonal, jacobi_eigh, load_transform, random_orthogonal_matrix,
                            save_transform)


def _spd(dim, seed):
    a = np.random.default_rng(seed).standard_normal((dim, dim))
    return a @ a.T + 0.1 * np.eye(dim)


# covariance

def test_covariance_two_points():
    mean, cov = compute_covariance([[0.0, 0.0], [2.0, 0.0]])
    assert mean.tolist() == [1.0, 0.0]
    assert cov.tolist() == [[1.0, 0.0], [0.0, 0.0]]


def test_covariance_of_repeated_vector_is_zero():
    _, cov = compute_covariance(np.tile([3.0, -1.0, 7.5], (5, 1)))
    assert np.array_equal(cov, np.zeros((3, 3)))


def test_covariance_matches_generating_variances():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((1000, 2)) * np.sqrt([4.0, 1.0])
    _, cov = compute_covariance(x)
    assert cov[0, 0] == pytest.approx(4.0, rel=0.10)
    assert cov[1, 1] == pytest.approx(1.0, rel=0.10)


def test_covariance_uses_population_normalization():
    x = np.random.default_rng(1).standard_normal((7, 3))
    _, cov = compute_covariance(x)
    np.testing.assert_allclose(cov, np.cov(x, rowvar=False, bias=True), atol=1e-12)


def test_covariance_needs_two_vectors():
    with pytest.raises(InvalidInputError):
        compute_covariance([[1.0, 2.0]])


def test_vector_set_rejects_nonfinite():
    with pytest.raises(InvalidInputError):
        as_vector_set([[1.0, np.nan]])


# eigen-solver

def test_identity_covariance():
    vals, vecs, _ = jacobi_eigh(np.eye(5))
    np.testing.assert_allclose(vals, 1.0)
    np.testing.assert_allclose(vecs.T @ vecs, np.eye(5), atol=1e-12)
    assert vals.sum() == pytest.approx(5.0)


def test_diagonal_covariance():
    t = fit_pca(np.array([[2.0, 0.0], [-2.0, 0.0], [0.0, 1.0], [0.0, -1.0]]) * np.sqrt(2.0))
    np.testing.assert_allclose(t.eigenvalues, [4.0, 1.0], atol=1e-12)
    np.testing.assert_allclose(np.abs(t.matrix[:, 0]), [1.0, 0.0], atol=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_reconstruction_of_random_spd(seed):
    c = _spd(8, seed)
    vals, vecs, _ = jacobi_eigh(c)
    assert np.abs(vecs @ np.diag(vals) @ vecs.T - c).max() <= 1e-6


@pytest.mark.parametrize("seed", range(3))
def test_eigenvalues_agree_with_lapack(seed):
    c = _spd(40, seed)
    vals, _, _ = jacobi_eigh(c)
    np.testing.assert_allclose(np.sort(vals), np.linalg.eigvalsh(c), rtol=1e-9, atol=1e-9)


def test_nonconvergence_reports_sweeps():
    with pytest.raises(ConvergenceError) as err:
        jacobi_eigh(_spd(20, 0), max_sweeps=1)
    assert err.value.sweeps == 1
    assert "1" in str(err.value)


def test_eigen_reconstruction_on_fitted_data(aniso64):
    _, cov = compute_covariance(aniso64.raw)
    t = aniso64.pca
    w = t.matrix
    assert np.abs(w @ np.diag(t.eigenvalues) @ w.T - cov).max() <= 1e-6


# fitted transform invariants

def test_pca_invariants(aniso64):
    t = aniso64.pca
    assert t.orthogonality_error() <= 1e-5
    assert np.all(np.diff(t.eigenvalues) <= 0.0)
    assert np.all(t.eigenvalues >= 0.0)
    np.testing.assert_allclose(t.lambda_prefix, np.concatenate(([0.0], np.cumsum(t.eigenvalues))))
    first_nonzero = t.matrix[np.argmax(np.abs(t.matrix) > 1e-12, axis=0), np.arange(t.dim)]
    assert np.all(first_nonzero > 0)


def test_fit_is_deterministic(small):
    again = fit_pca(small.raw)
    assert np.array_equal(again.matrix, small.pca.matrix)
    assert np.array_equal(again.eigenvalues, small.pca.eigenvalues)


def test_variance_sum_preserved(aniso64):
    raw_var = aniso64.raw.astype(np.float64).var(axis=0).sum()
    for x in (aniso64.x_pca, aniso64.x_rand):
        proj_var = x.astype(np.float64).var(axis=0).sum()
        assert abs(proj_var - raw_var) / raw_var <= 1e-6
    assert aniso64.pca.lambda_prefix[-1] == pytest.approx(raw_var, rel=1e-9)


def test_pca_prefix_dominates_random(aniso64):
    pca_prefix = aniso64.pca.lambda_prefix
    rand_eig = aniso64.rand.eigenvalues
    for eig in (rand_eig, np.sort(rand_eig)[::-1]):
        prefix = np.concatenate(([0.0], np.cumsum(eig)))
        assert np.all(pca_prefix >= prefix - 1e-9 * pca_prefix[-1])


def test_random_eigenvalues_are_projected_variances(aniso64):
    measured = aniso64.x_rand.astype(np.float64).var(axis=0)
    np.testing.assert_allclose(aniso64.rand.eigenvalues, measured, rtol=1e-4)


# random rotations

def test_random_dim_one():
    m = random_orthogonal_matrix(1, 42)
    assert abs(m[0, 0]) == 1.0


def test_random_same_seed_same_matrix():
    assert np.array_equal(random_orthogonal_matrix(16, 9), random_orthogonal_matrix(16, 9))
    assert not np.array_equal(random_orthogonal_matrix(16, 9), random_orthogonal_matrix(16, 10))


def test_random_rotation_spreads_variance_evenly():
    x = np.random.default_rng(2).standard_normal((10_000, 16))
    t = fit_random_orthogonal(16, 5, x)
    assert t.eigenvalues.max() / t.eigenvalues.min() < 1.5


# apply

def test_identity_transform_is_noop():
    x = np.random.default_rng(3).standard_normal((10, 4)).astype(np.float32)
    t = OrthoTransform("pca", np.zeros(4), np.eye(4), np.ones(4))
    assert np.array_equal(apply_transform(t, x), x)


def test_quarter_turn():
    rot = np.array([[0.0, -1.0], [1.0, 0.0]])
    t = OrthoTransform("pca", np.zeros(2), rot, np.ones(2))
    out = apply_transform(t, np.array([1.0, 0.0]))
    assert out.tolist() == [0.0, -1.0]


def test_apply_dimension_mismatch(small):
    with pytest.raises(InvalidInputError):
        apply_transform(small.pca, np.zeros((2, small.dim + 1)))


def test_isometry_on_pairs(aniso64):
    rng = np.random.default_rng(4)
    i, j = rng.integers(0, len(aniso64.raw), (2, 1000))
    keep = i != j
    raw = np.linalg.norm(aniso64.raw[i[keep]].astype(np.float64) - aniso64.raw[j[keep]], axis=1)
    for x in (aniso64.x_pca, aniso64.x_rand):
        rot = np.linalg.norm(x[i[keep]].astype(np.float64) - x[j[keep]], axis=1)
        assert np.max(np.abs(rot - raw) / raw) <= 1e-4


@settings(max_examples=50, deadline=None)
@given(
    seed=st.integers(0, 2**31),
    a=arrays(np.float64, 12, elements=st.floats(-1e3, 1e3)),
    b=arrays(np.float64, 12, elements=st.floats(-1e3, 1e3)),
)
def test_isometry_property(seed, a, b):
    # float32 storage is the dominant error; compare against the float32-rounded inputs.
    a32, b32 = a.astype(np.float32), b.astype(np.float32)
    exact = np.linalg.norm(a32.astype(np.float64) - b32)
    if exact < 1e-2:
        return
    t = fit_random_orthogonal(12, seed, np.random.default_rng(seed).standard_normal((4, 12)))
    got = np.linalg.norm(apply_transform(t, a32).astype(np.float64) - apply_transform(t, b32))
    scale = max(np.abs(a32).max(), np.abs(b32).max())
    assert abs(got - exact) <= 1e-4 * exact + 1e-6 * scale


# persistence

def test_round_trip(tmp_path, small):
    for t in (small.pca, small.rand):
        path = tmp_path / f"{t.kind}.bin"
        save_transform(t, path)
        back = load_transform(path)
        assert back.kind == t.kind
        assert np.array_equal(back.matrix, t.matrix)
        assert np.array_equal(back.eigenvalues, t.eigenvalues)
        assert np.array_equal(back.mean, t.mean)


def test_file_layout(tmp_path):
    t = OrthoTransform("random", [1.0, 2.0], [[0.0, 1.0], [1.0, 0.0]], [3.0, 4.0])
    path = tmp_path / "t.bin"
    save_transform(t, path)
    raw = path.read_bytes()
    assert raw[:4] == b"DADE"
    assert raw[4:8] == (1).to_bytes(4, "little")
    assert raw[8] == 1
    assert raw[9:13] == (2).to_bytes(4, "little")
    assert len(raw) == 13 + 8 * (2 + 2 + 4)


@pytest.mark.parametrize("cut", [3, 20, -1])
def test_truncated_file(tmp_path, small, cut):
    path = tmp_path / "t.bin"
    save_transform(small.pca, path)
    path.write_bytes(path.read_bytes()[:cut])
    with pytest.raises(FormatError):
        load_transform(path)


def test_bad_magic(tmp_path, small):
    path = tmp_path / "t.bin"
    save_transform(small.pca, path)
    path.write_bytes(b"XXXX" + path.read_bytes()[4:])
    with pytest.raises(FormatError):
        load_transform(path)
