import numpy as np
import pytest

from mvmlfs.dataset import (
    MultiViewDataset,
    ViewBlock,
    is_bare_number_name,
    load_dataset,
    pseudo_name,
    split,
    subset_rows,
    write_dataset,
)
from mvmlfs.errors import (
    DegenerateSplit,
    MissingFile,
    NonBinaryLabel,
    ParseError,
    RowCountMismatch,
)
from mvmlfs.synth import make_random_dataset


def write_files(tmp_path, manifest, files):
    for name, content in files.items():
        (tmp_path / name).write_text(content, encoding="utf-8")
    path = tmp_path / "d.manifest"
    path.write_text(manifest, encoding="utf-8")
    return path


MINIMAL = """{"views": [{"name": "GE", "matrix": "x.csv"}], "labels": "y.csv"}"""


class TestLoadDataset:
    def test_minimal_single_feature(self, tmp_path):
        path = write_files(
            tmp_path, MINIMAL, {"x.csv": "1.5\n-2.0\n", "y.csv": "1\n0\n"}
        )
        dataset, catalog = load_dataset(path)
        assert dataset.n == 2
        assert dataset.n_features == 1
        assert dataset.n_labels == 1
        assert dataset.global_id(0, 0) == 0
        assert catalog.feature_texts[0] == ["GE feature 1"]

    def test_row_count_mismatch_names_view(self, tmp_path):
        path = write_files(
            tmp_path, MINIMAL, {"x.csv": "1\n2\n3\n", "y.csv": "1\n0\n"}
        )
        with pytest.raises(RowCountMismatch, match="GE"):
            load_dataset(path)

    def test_non_binary_label(self, tmp_path):
        path = write_files(tmp_path, MINIMAL, {"x.csv": "1\n2\n", "y.csv": "1\n2\n"})
        with pytest.raises(NonBinaryLabel):
            load_dataset(path)

    def test_parse_error_carries_line_number(self, tmp_path):
        path = write_files(
            tmp_path, MINIMAL, {"x.csv": "1\nfoo\n", "y.csv": "1\n0\n"}
        )
        with pytest.raises(ParseError, match=":2"):
            load_dataset(path)

    def test_nan_rejected(self, tmp_path):
        path = write_files(
            tmp_path, MINIMAL, {"x.csv": "1\nnan\n", "y.csv": "1\n0\n"}
        )
        with pytest.raises(ParseError, match="NaN"):
            load_dataset(path)

    def test_missing_matrix_file(self, tmp_path):
        path = write_files(tmp_path, MINIMAL, {"y.csv": "1\n0\n"})
        with pytest.raises(MissingFile):
            load_dataset(path)

    def test_all_zero_label_column_warns(self, tmp_path):
        manifest = (
            '{"views": [{"name": "GE", "matrix": "x.csv"}], "labels": "y.csv"}'
        )
        path = write_files(
            tmp_path, manifest, {"x.csv": "1\n2\n", "y.csv": "1,0\n0,0\n"}
        )
        with pytest.warns(UserWarning, match="no positive samples"):
            load_dataset(path)

    def test_round_trip_bit_exact(self, tmp_path):
        dataset, catalog = make_random_dataset(seed=3, n=17, view_widths=(4, 2), n_labels=3)
        manifest = write_dataset(dataset, catalog, tmp_path / "rt")
        loaded, loaded_catalog = load_dataset(manifest)
        assert loaded.n == dataset.n
        for original, reloaded in zip(dataset.views, loaded.views):
            assert np.array_equal(original.matrix, reloaded.matrix)
        assert np.array_equal(loaded.labels, dataset.labels)
        assert loaded_catalog.label_texts == catalog.label_texts
        assert loaded.digest() == dataset.digest()


class TestGlobalIndex:
    def test_bijection(self):
        dataset, _ = make_random_dataset(seed=5, n=10, view_widths=(3, 4, 2), n_labels=2)
        d = dataset.n_features
        assert d == 9
        seen = set()
        for gid in range(d):
            view, local = dataset.locate(gid)
            assert dataset.global_id(view, local) == gid
            seen.add((view, local))
        assert len(seen) == d

    def test_subset_rows_keeps_structure(self):
        dataset, _ = make_random_dataset(seed=5, n=10, view_widths=(3, 2), n_labels=2)
        sub = subset_rows(dataset, np.array([0, 3, 4]))
        assert sub.n == 3
        assert sub.n_features == dataset.n_features
        assert np.array_equal(sub.views[1].matrix, dataset.views[1].matrix[[0, 3, 4]])


class TestPseudoName:
    def test_stated_format(self):
        assert pseudo_name("GE", 0) == "GE feature 1"
        assert pseudo_name("Color Histogram", 63) == "Color Histogram feature 64"

    def test_negative_index_rejected(self):
        with pytest.raises(ValueError):
            pseudo_name("GE", -1)

    def test_bare_number_trigger_uses_index_not_digits(self, tmp_path):
        # a feature literally named "f17" at position 0 becomes "PP feature 1"
        manifest = (
            '{"views": [{"name": "PP", "matrix": "x.csv", '
            '"feature_texts": "t.txt"}], "labels": "y.csv"}'
        )
        path = write_files(
            tmp_path,
            manifest,
            {"x.csv": "1,2\n3,4\n", "y.csv": "1\n0\n", "t.txt": "f17\nreal name\n"},
        )
        _, catalog = load_dataset(path)
        assert catalog.feature_texts[0] == ["PP feature 1", "real name"]

    def test_bare_number_pattern(self):
        assert is_bare_number_name("")
        assert is_bare_number_name("174")
        assert is_bare_number_name("f17")
        assert not is_bare_number_name("ff17")
        assert not is_bare_number_name("color histogram")


class TestSplit:
    def test_cardinalities(self):
        indices = split(10, 0.7, 42)
        assert indices.train_ids.size == 7
        assert indices.test_ids.size == 3
        assert not set(indices.train_ids) & set(indices.test_ids)

    def test_yeast_scale_train_count(self):
        # round(0.7 * 2417) = 1692 by direct arithmetic
        indices = split(2417, 0.7, 0)
        assert indices.train_ids.size == 1692

    def test_deterministic_over_many_seeds(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            n = int(rng.integers(5, 500))
            seed = int(rng.integers(0, 2**31))
            a = split(n, 0.7, seed)
            b = split(n, 0.7, seed)
            assert np.array_equal(a.train_ids, b.train_ids)
            assert np.array_equal(a.test_ids, b.test_ids)
            union = np.sort(np.concatenate([a.train_ids, a.test_ids]))
            assert np.array_equal(union, np.arange(n))

    def test_degenerate_split(self):
        with pytest.raises(DegenerateSplit):
            split(3, 0.01, 0)
        with pytest.raises(DegenerateSplit):
            split(2, 0.99, 0)


class TestInvariants:
    def test_view_rows_must_match(self):
        views = [ViewBlock(view_id=0, name="a", matrix=np.zeros((3, 2)))]
        labels = np.zeros((3, 2), dtype=np.int8)
        dataset = MultiViewDataset(views=views, labels=labels)
        assert dataset.n == 3
