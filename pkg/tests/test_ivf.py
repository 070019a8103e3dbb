import numpy as np
import pytest

from dade.errors import FormatError, InvalidInputError
from dade.estimator import DADE, FDScanning
from dade.io import compute_ground_truth, recall
from dade.ivf import build_ivf, default_n_clusters, kmeans, load_ivf, save_ivf, search_ivf


class Recording:
    """Wraps a strategy and records every threshold it is asked about."""

    def __init__(self, inner):
        self.inner = inner
        self.thresholds = []

    def compare(self, o, q, r):
        self.thresholds.append(r)
        return self.inner.compare(o, q, r)


@pytest.fixture(scope="module")
def small_ivf(small):
    return build_ivf(small.x_pca, n_clusters=20, seed=0)


def test_kmeans_one_cluster_per_point():
    x = np.random.default_rng(0).standard_normal((40, 3)).astype(np.float32)
    km = kmeans(x, 40, seed=1)
    assert km.distortion[-1] == pytest.approx(0.0, abs=1e-9)
    assert sorted(km.assignments.tolist()) == list(range(40))


def test_kmeans_two_blobs():
    rng = np.random.default_rng(1)
    a = rng.standard_normal((200, 4)) + 20.0
    b = rng.standard_normal((200, 4)) - 20.0
    km = kmeans(np.vstack([a, b]).astype(np.float32), 2, seed=3)
    labels = km.assignments
    assert len(set(labels[:200])) == 1 and len(set(labels[200:])) == 1
    assert labels[0] != labels[200]


def test_kmeans_distortion_nonincreasing():
    x = np.random.default_rng(2).standard_normal((2000, 8)).astype(np.float32)
    history = kmeans(x, 16, max_iters=50, seed=4).distortion
    assert len(history) > 3
    assert all(b <= a + 1e-9 * a for a, b in zip(history, history[1:]))


def test_kmeans_too_many_clusters():
    with pytest.raises(InvalidInputError):
        kmeans(np.zeros((3, 2), dtype=np.float32), 4)


def test_default_cluster_count():
    assert default_n_clusters(10_000) == 100
    assert default_n_clusters(1) == 1


def test_posting_lists_partition_ids(small_ivf, small):
    ids = np.concatenate(small_ivf.posting_lists)
    assert len(ids) == len(small.x_pca)
    assert sorted(ids.tolist()) == list(range(len(small.x_pca)))


def test_split_layout_round_trip(small):
    idx = build_ivf(small.x_pca, n_clusters=20, layout="split", delta_d=8, seed=0)
    assert idx.split_prefix_dims == 8
    for c in range(idx.n_clusters):
        prefix, suffix = idx.blocks[c]
        assert prefix.shape[1] == 8 and suffix.shape[1] == 24
        assert prefix.flags.c_contiguous and suffix.flags.c_contiguous
    assert np.array_equal(idx.vectors(), small.x_pca)


def test_build_is_deterministic(small, small_ivf):
    again = build_ivf(small.x_pca, n_clusters=20, seed=0)
    assert np.array_equal(again.centroids, small_ivf.centroids)
    assert all(np.array_equal(a, b) for a, b in zip(again.posting_lists, small_ivf.posting_lists))


def test_exhaustive_fd_matches_oracle(small, small_ivf):
    truth = compute_ground_truth(small.raw, small.queries, 10)
    for q, want in zip(small.q_pca, truth.ids):
        res = search_ivf(small_ivf, q, 10, small_ivf.n_clusters, FDScanning())
        assert set(res.ids.tolist()) == set(want.tolist())
        assert np.all(np.diff(res.distances) >= 0)


def test_fd_matches_oracle_restricted_to_probed_clusters(small, small_ivf):
    for q in small.q_pca:
        cd = ((small_ivf.centroids.astype(np.float64) - q) ** 2).sum(axis=1)
        probed = np.argsort(cd, kind="stable")[:4]
        members = np.concatenate([small_ivf.posting_lists[c] for c in probed])
        d = np.linalg.norm(small.x_pca[members].astype(np.float64) - q, axis=1)
        want = set(members[np.lexsort((members, d))[:10]].tolist())
        res = search_ivf(small_ivf, q, 10, 4, FDScanning())
        assert set(res.ids.tolist()) == want


def test_dade_exhaustive_recall(aniso128, aniso128_truth, aniso128_cal):
    idx = build_ivf(aniso128.x_pca, seed=0)
    strategy = DADE(aniso128.pca, aniso128_cal)
    ids = [search_ivf(idx, q, 10, idx.n_clusters, strategy).ids for q in aniso128.q_pca[:20]]
    assert recall(ids, aniso128_truth.ids[:20]) >= 0.95


def test_stored_vector_found_at_zero(small, small_ivf):
    for i in (0, 17, 999):
        res = search_ivf(small_ivf, small.x_pca[i], 1, 3, FDScanning())
        assert res.ids.tolist() == [i] and res.distances[0] == 0.0


def test_threshold_nonincreasing(small, small_ivf):
    cal_strategy = Recording(FDScanning())
    search_ivf(small_ivf, small.q_pca[0], 10, 8, cal_strategy)
    r = cal_strategy.thresholds
    assert r[0] == np.inf and np.isfinite(r[-1])
    assert all(b <= a for a, b in zip(r, r[1:]))


def test_layouts_agree(small):
    from dade.calibration import calibrate

    cal = calibrate(small.pca, small.x_pca, 0.1, 8, n_pairs=20_000)
    contiguous = build_ivf(small.x_pca, n_clusters=20, layout="contiguous", delta_d=8, seed=0)
    split = build_ivf(small.x_pca, n_clusters=20, layout="split", delta_d=8, seed=0)
    for strategy in (FDScanning(), DADE(small.pca, cal)):
        for q in small.q_pca:
            a = search_ivf(contiguous, q, 10, 5, strategy)
            b = search_ivf(split, q, 10, 5, strategy)
            assert a.ids.tolist() == b.ids.tolist()
            assert a.distances.tolist() == b.distances.tolist()
            assert a.stats == b.stats


def test_fewer_candidates_than_k(small):
    idx = build_ivf(small.x_pca[:30], n_clusters=10, seed=0)
    res = search_ivf(idx, small.q_pca[0], 25, 1, FDScanning())
    assert not res.complete and len(res.ids) < 25


def test_search_argument_errors(small_ivf, small):
    q = small.q_pca[0]
    with pytest.raises(InvalidInputError):
        search_ivf(small_ivf, q, 0, 1, FDScanning())
    with pytest.raises(InvalidInputError):
        search_ivf(small_ivf, q, 1, small_ivf.n_clusters + 1, FDScanning())
    with pytest.raises(InvalidInputError):
        search_ivf(small_ivf, q[:5], 1, 1, FDScanning())


@pytest.mark.parametrize("layout", ["contiguous", "split"])
def test_persistence(tmp_path, small, layout):
    idx = build_ivf(small.x_pca, n_clusters=20, layout=layout, delta_d=8, seed=0)
    path = tmp_path / "ivf.bin"
    save_ivf(idx, path)
    back = load_ivf(path)
    assert back.layout == layout and back.split_prefix_dims == idx.split_prefix_dims
    assert np.array_equal(back.centroids, idx.centroids)
    assert np.array_equal(back.vectors(), idx.vectors())
    q = small.q_pca[1]
    assert search_ivf(back, q, 10, 5, FDScanning()).ids.tolist() == search_ivf(idx, q, 10, 5, FDScanning()).ids.tolist()


def test_truncated_index(tmp_path, small_ivf):
    path = tmp_path / "ivf.bin"
    save_ivf(small_ivf, path)
    path.write_bytes(path.read_bytes()[:-10])
    with pytest.raises(FormatError):
        load_ivf(path)


def test_rebase_keeps_clusters(small, small_ivf):
    moved = small_ivf.rebase(small.x_rand)
    assert all(np.array_equal(a, b) for a, b in zip(moved.posting_lists, small_ivf.posting_lists))
    assert np.array_equal(moved.vectors(), small.x_rand)
