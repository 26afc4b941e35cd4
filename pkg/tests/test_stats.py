import numpy as np
import pytest

from mvmlfs.dataset import MultiViewDataset, ViewBlock
from mvmlfs.errors import LengthMismatch
from mvmlfs.stats import (
    DiscreteColumn,
    compute_mi_matrices,
    discretize,
    load_or_compute_mi,
    mutual_information,
)
from mvmlfs.synth import make_random_dataset


def brute_force_mi(x: np.ndarray, y: np.ndarray) -> float:
    """Independent oracle: explicit joint histogram, scalar loops."""
    n = len(x)
    joint = {}
    px = {}
    py = {}
    for a, b in zip(x, y):
        joint[(a, b)] = joint.get((a, b), 0) + 1
        px[a] = px.get(a, 0) + 1
        py[b] = py.get(b, 0) + 1
    mi = 0.0
    for (a, b), count in joint.items():
        p_ab = count / n
        mi += p_ab * np.log(p_ab / ((px[a] / n) * (py[b] / n)))
    return mi


class TestDiscretize:
    def test_equal_frequency_by_rank(self):
        assert discretize(np.array([1.0, 2, 3, 4]), 2).codes.tolist() == [0, 0, 1, 1]

    def test_constant_column(self):
        col = discretize(np.full(5, 3.3), 4)
        assert col.codes.tolist() == [0, 0, 0, 0, 0]
        assert col.n_bins == 1

    def test_hand_enumerated_ranks(self):
        # sorted: 1,2,5,5,7,9 -> min-ranks 0,1,2,2,4,5 -> bins of width n/B=2
        col = discretize(np.array([5.0, 1, 5, 9, 2, 7]), 3)
        assert col.codes.tolist() == [1, 0, 1, 2, 0, 2]
        assert col.n_bins == 3

    def test_few_distinct_values_identity_coded(self):
        col = discretize(np.array([0.0, 1, 0, 1, 1]), 10)
        assert col.n_bins == 2
        assert col.codes.tolist() == [0, 1, 0, 1, 1]

    def test_bins_must_be_at_least_two(self):
        with pytest.raises(ValueError):
            discretize(np.arange(4.0), 1)

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            discretize(np.array([1.0, np.nan]), 2)


class TestMutualInformation:
    def test_self_information_is_entropy(self):
        col = DiscreteColumn(codes=np.array([0, 1, 0, 1]), n_bins=2)
        assert mutual_information(col, col) == pytest.approx(np.log(2), abs=1e-12)

    def test_exact_independence(self):
        x = DiscreteColumn(codes=np.array([0, 0, 1, 1]), n_bins=2)
        y = DiscreteColumn(codes=np.array([0, 1, 0, 1]), n_bins=2)
        assert mutual_information(x, y) == 0.0

    def test_length_mismatch(self):
        x = DiscreteColumn(codes=np.array([0, 1]), n_bins=2)
        y = DiscreteColumn(codes=np.array([0, 1, 0]), n_bins=2)
        with pytest.raises(LengthMismatch):
            mutual_information(x, y)

    def test_matches_brute_force_oracle(self):
        rng = np.random.default_rng(42)
        for _ in range(200):
            n_bins_x = int(rng.integers(2, 9))
            n_bins_y = int(rng.integers(2, 9))
            x = rng.integers(0, n_bins_x, size=50)
            y = rng.integers(0, n_bins_y, size=50)
            fast = mutual_information(
                DiscreteColumn(codes=x, n_bins=n_bins_x),
                DiscreteColumn(codes=y, n_bins=n_bins_y),
            )
            assert fast == pytest.approx(brute_force_mi(x, y), abs=1e-12)

    def test_symmetric_bit_exact(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            x = DiscreteColumn(codes=rng.integers(0, 5, size=40), n_bins=5)
            y = DiscreteColumn(codes=rng.integers(0, 3, size=40), n_bins=3)
            assert mutual_information(x, y) == mutual_information(y, x)

    def test_permuted_independent_columns_near_zero(self):
        rng = np.random.default_rng(0)
        n = 10000
        x = discretize(rng.normal(size=n), 4)
        base = rng.normal(size=n)
        values = []
        for _ in range(50):
            y = discretize(rng.permutation(base), 4)
            values.append(mutual_information(x, y))
        assert np.mean(values) < 0.01


class TestComputeMiMatrices:
    def test_identity_views_and_label(self):
        # two identical single-feature binary views; the label equals the feature
        rng = np.random.default_rng(5)
        col = (rng.random(30) < 0.4).astype(np.float64)
        label = col.astype(np.int8).reshape(-1, 1)
        views = [
            ViewBlock(view_id=0, name="a", matrix=col.reshape(-1, 1)),
            ViewBlock(view_id=1, name="b", matrix=col.reshape(-1, 1)),
        ]
        dataset = MultiViewDataset(views=views, labels=label)
        mi = compute_mi_matrices(dataset, bins=2)
        label_entropy = brute_force_mi(label[:, 0], label[:, 0])
        assert mi.fl[0, 0] == pytest.approx(label_entropy, abs=1e-12)
        assert mi.fl[1, 0] == pytest.approx(label_entropy, abs=1e-12)
        # the one feature pair is the feature against its copy
        assert mi.ff_mi.size == 1
        assert mi.ff_mi[0] == pytest.approx(label_entropy, abs=1e-12)
        assert np.allclose(mi.vl, mi.fl.reshape(2, 1), atol=1e-12)

    def test_cooc_by_inspection(self):
        labels = np.array([[1, 1], [1, 0], [0, 0]], dtype=np.int8)
        views = [ViewBlock(view_id=0, name="a", matrix=np.random.default_rng(0).normal(size=(3, 2)))]
        dataset = MultiViewDataset(views=views, labels=labels)
        mi = compute_mi_matrices(dataset, bins=2)
        assert mi.cooc[0, 1] == 1
        assert mi.cooc[1, 0] == 1
        assert mi.cooc[0, 0] == 2
        assert mi.cooc[1, 1] == 1

    def test_shapes_and_pair_count(self):
        dataset, _ = make_random_dataset(seed=9, n=25, view_widths=(6, 4), n_labels=3)
        mi = compute_mi_matrices(dataset, bins=4)
        d = 10
        assert mi.fl.shape == (d, 3)
        assert mi.vl.shape == (2, 3)
        assert mi.ff_mi.size == d * (d - 1) // 2
        assert (mi.ff_i < mi.ff_j).all()

    def test_matches_scalar_path(self):
        dataset, _ = make_random_dataset(seed=13, n=40, view_widths=(5, 3), n_labels=4)
        mi = compute_mi_matrices(dataset, bins=3)
        stacked = dataset.stacked()
        cols = [discretize(stacked[:, f], 3) for f in range(8)]
        labels = [
            DiscreteColumn(codes=dataset.labels[:, j].astype(np.int64), n_bins=2)
            for j in range(4)
        ]
        for f in range(8):
            for j in range(4):
                assert mi.fl[f, j] == pytest.approx(
                    mutual_information(cols[f], labels[j]), abs=1e-12
                )
        for idx in range(mi.ff_mi.size):
            expected = mutual_information(cols[mi.ff_i[idx]], cols[mi.ff_j[idx]])
            assert mi.ff_mi[idx] == pytest.approx(expected, abs=1e-12)

    def test_block_size_invariance(self):
        dataset, _ = make_random_dataset(seed=21, n=30, view_widths=(7, 6), n_labels=3)
        a = compute_mi_matrices(dataset, bins=4, block_size=3)
        b = compute_mi_matrices(dataset, bins=4, block_size=256)
        assert np.array_equal(a.fl, b.fl)
        assert np.array_equal(a.ff_mi, b.ff_mi)

    def test_vl_is_mean_of_fl_rows(self):
        dataset, _ = make_random_dataset(seed=2, n=35, view_widths=(4, 5), n_labels=4)
        mi = compute_mi_matrices(dataset, bins=4)
        assert np.allclose(mi.vl[0], mi.fl[:4].mean(axis=0), atol=1e-12)
        assert np.allclose(mi.vl[1], mi.fl[4:].mean(axis=0), atol=1e-12)

    def test_nonnegative(self):
        dataset, _ = make_random_dataset(seed=3, n=50, view_widths=(8,), n_labels=5)
        mi = compute_mi_matrices(dataset, bins=5)
        assert (mi.fl >= 0).all()
        assert (mi.ff_mi >= 0).all()
        assert (mi.vl >= 0).all()

    def test_top_m_cap(self):
        dataset, _ = make_random_dataset(seed=4, n=30, view_widths=(10,), n_labels=2)
        capped = compute_mi_matrices(dataset, bins=3, ff_top_m=2)
        full = compute_mi_matrices(dataset, bins=3)
        assert capped.ff_mi.size < full.ff_mi.size
        # every kept pair is in one endpoint's top-2
        pairs_full = {
            (i, j): v for i, j, v in zip(full.ff_i, full.ff_j, full.ff_mi)
        }
        for i, j, v in zip(capped.ff_i, capped.ff_j, capped.ff_mi):
            assert pairs_full[(i, j)] == v


class TestCache:
    def test_round_trip_and_hit(self, tmp_path):
        dataset, _ = make_random_dataset(seed=6, n=20, view_widths=(3, 2), n_labels=2)
        path = tmp_path / "mi.npz"
        first, hit1 = load_or_compute_mi(dataset, path, bins=3)
        second, hit2 = load_or_compute_mi(dataset, path, bins=3)
        assert not hit1 and hit2
        assert np.array_equal(first.fl, second.fl)
        assert first.dataset_digest == second.dataset_digest

    def test_bin_change_invalidates(self, tmp_path):
        dataset, _ = make_random_dataset(seed=6, n=20, view_widths=(3,), n_labels=2)
        path = tmp_path / "mi.npz"
        load_or_compute_mi(dataset, path, bins=3)
        _, hit = load_or_compute_mi(dataset, path, bins=4)
        assert not hit

    def test_dataset_change_invalidates(self, tmp_path):
        a, _ = make_random_dataset(seed=6, n=20, view_widths=(3,), n_labels=2)
        b, _ = make_random_dataset(seed=7, n=20, view_widths=(3,), n_labels=2)
        path = tmp_path / "mi.npz"
        load_or_compute_mi(a, path, bins=3)
        _, hit = load_or_compute_mi(b, path, bins=3)
        assert not hit
