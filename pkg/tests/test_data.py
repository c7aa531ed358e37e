import numpy as np
import pytest

from sumvc.data import (
    MultiViewDataset,
    from_csv,
    gen_synthetic_gmm,
    load_mvds,
    pair_by_class,
    save_mvds,
    standardize_views,
)
from sumvc.errors import ConfigError, DataError, FormatError


class TestDatasetType:
    def test_basic_properties(self):
        ds = MultiViewDataset(
            views=[np.zeros((4, 2), dtype=np.float32), np.zeros((4, 3), dtype=np.float32)],
            labels=np.array([0, 0, 1, 1]),
        )
        assert ds.n == 4
        assert ds.n_views == 2
        assert ds.dims == (2, 3)
        assert ds.n_classes == 2

    def test_views_stored_float32(self):
        ds = MultiViewDataset(views=[np.zeros((2, 2), dtype=np.float64)])
        assert ds.views[0].dtype == np.float32

    def test_row_count_mismatch(self):
        with pytest.raises(DataError):
            MultiViewDataset(views=[np.zeros((3, 2)), np.zeros((4, 2))])

    def test_label_validation(self):
        views = [np.zeros((4, 2))]
        with pytest.raises(DataError):
            MultiViewDataset(views=views, labels=np.array([0.0, 1.0, 0.0, 1.0]))
        with pytest.raises(DataError):
            MultiViewDataset(views=views, labels=np.array([0, 1, -1, 0]))
        with pytest.raises(DataError):
            # class 1 missing while class 2 present
            MultiViewDataset(views=views, labels=np.array([0, 0, 2, 2]))

    def test_equality_ignores_provenance(self):
        x = np.ones((3, 2), dtype=np.float32)
        a = MultiViewDataset(views=[x.copy()], labels=np.array([0, 0, 1]),
                             provenance="a")
        b = MultiViewDataset(views=[x.copy()], labels=np.array([0, 0, 1]),
                             provenance="b")
        assert a == b
        c = MultiViewDataset(views=[x + 1], labels=np.array([0, 0, 1]))
        assert a != c


class TestGenSyntheticGmm:
    def test_shapes_and_coverage(self):
        ds = gen_synthetic_gmm(3, 2, (5, 7), 60, separation=4.0, noise=1.0, seed=0)
        assert ds.dims == (5, 7)
        assert ds.n == 60
        assert set(np.unique(ds.labels)) == {0, 1, 2}
        assert all(v.dtype == np.float32 for v in ds.views)

    def test_deterministic(self):
        a = gen_synthetic_gmm(3, 2, (4, 4), 50, 5.0, 1.0, seed=9)
        b = gen_synthetic_gmm(3, 2, (4, 4), 50, 5.0, 1.0, seed=9)
        assert a == b

    def test_views_draw_independent_streams(self):
        ds = gen_synthetic_gmm(2, 2, (4, 4), 40, 5.0, 1.0, seed=1)
        assert not np.array_equal(ds.views[0], ds.views[1])

    def test_separation_controls_distance(self):
        near = gen_synthetic_gmm(2, 1, (6,), 100, 1.0, 1.0, seed=2)
        far = gen_synthetic_gmm(2, 1, (6,), 100, 50.0, 1.0, seed=2)
        def spread(ds):
            m0 = ds.views[0][ds.labels == 0].mean(axis=0)
            m1 = ds.views[0][ds.labels == 1].mean(axis=0)
            return np.linalg.norm(m0 - m1)
        assert spread(far) > 10 * spread(near)

    def test_validation(self):
        with pytest.raises(ConfigError):
            gen_synthetic_gmm(1, 1, (4,), 10, 1.0, 1.0, 0)
        with pytest.raises(ConfigError):
            gen_synthetic_gmm(2, 2, (4,), 10, 1.0, 1.0, 0)  # dims wrong length
        with pytest.raises(ConfigError):
            gen_synthetic_gmm(5, 2, (4, 4), 8, 1.0, 1.0, 0)  # n < k*v
        with pytest.raises(ConfigError):
            gen_synthetic_gmm(2, 1, (4,), 10, 0.0, 1.0, 0)


class TestPairByClass:
    def test_single_view_is_seeded_shuffle(self):
        rng = np.random.default_rng(3)
        feats = rng.standard_normal((10, 4)).astype(np.float32)
        labels = np.array([0, 1] * 5)
        ds = pair_by_class(feats, labels, n_views=1, seed=11)
        order = np.random.default_rng(11).permutation(10)
        np.testing.assert_array_equal(ds.views[0], feats[order])
        np.testing.assert_array_equal(ds.labels, labels[order])

    def test_same_class_distinct_rows(self):
        rng = np.random.default_rng(4)
        feats = rng.standard_normal((30, 3)).astype(np.float32)
        labels = np.repeat(np.arange(3), 10)
        ds = pair_by_class(feats, labels, n_views=3, seed=5)
        lookup = {tuple(np.round(row, 5)): lab for row, lab in zip(feats, labels)}
        for r in range(ds.n):
            rows = [tuple(np.round(ds.views[k][r], 5)) for k in range(3)]
            assert len(set(rows)) == 3  # anchor and partners all distinct
            assert {lookup[t] for t in rows} == {ds.labels[r]}

    def test_class_too_small(self):
        feats = np.zeros((4, 2), dtype=np.float32)
        labels = np.array([0, 0, 0, 1])
        with pytest.raises(DataError):
            pair_by_class(feats, labels, n_views=2, seed=0)


class TestStandardize:
    def test_zero_mean_unit_std(self):
        ds = gen_synthetic_gmm(2, 2, (4, 3), 50, 5.0, 2.0, seed=6)
        std = standardize_views(ds)
        for v in std.views:
            np.testing.assert_allclose(v.mean(axis=0), 0.0, atol=1e-5)
            np.testing.assert_allclose(v.std(axis=0), 1.0, atol=1e-5)

    def test_constant_column_safe(self):
        x = np.ones((5, 2), dtype=np.float32)
        x[:, 1] = np.arange(5)
        ds = MultiViewDataset(views=[x])
        std = standardize_views(ds)
        assert np.all(np.isfinite(std.views[0]))
        np.testing.assert_allclose(std.views[0][:, 0], 0.0)


class TestMvdsFormat:
    def make(self):
        rng = np.random.default_rng(7)
        return MultiViewDataset(
            views=[
                rng.standard_normal((3, 2)).astype(np.float32),
                rng.standard_normal((3, 4)).astype(np.float32),
            ],
            labels=np.array([0, 1, 1]),
        )

    def test_round_trip_bitwise(self, tmp_path):
        ds = self.make()
        path = tmp_path / "d.mvds"
        save_mvds(ds, path)
        back = load_mvds(path)
        assert back == ds
        save_mvds(back, tmp_path / "d2.mvds")
        assert (tmp_path / "d.mvds").read_bytes() == (tmp_path / "d2.mvds").read_bytes()

    def test_exact_file_size(self, tmp_path):
        # 4 magic + 4 version + 4 views + 8 n + 1 flag + 2*4 dims
        # + 3*8 labels + (3*2 + 3*4)*4 floats = 125
        path = tmp_path / "d.mvds"
        save_mvds(self.make(), path)
        assert path.stat().st_size == 125

    def test_unlabeled_round_trip(self, tmp_path):
        ds = MultiViewDataset(views=[np.zeros((2, 3), dtype=np.float32)])
        path = tmp_path / "u.mvds"
        save_mvds(ds, path)
        back = load_mvds(path)
        assert back.labels is None
        assert back == ds

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "d.mvds"
        save_mvds(self.make(), path)
        blob = bytearray(path.read_bytes())
        blob[:4] = b"JUNK"
        path.write_bytes(bytes(blob))
        with pytest.raises(FormatError) as err:
            load_mvds(path)
        assert err.value.offset == 0

    def test_bad_version(self, tmp_path):
        path = tmp_path / "d.mvds"
        save_mvds(self.make(), path)
        blob = bytearray(path.read_bytes())
        blob[4] = 99
        path.write_bytes(bytes(blob))
        with pytest.raises(FormatError) as err:
            load_mvds(path)
        assert err.value.offset == 4

    def test_truncation(self, tmp_path):
        path = tmp_path / "d.mvds"
        save_mvds(self.make(), path)
        blob = path.read_bytes()
        for cut in (3, 10, 40, 124):
            path.write_bytes(blob[:cut])
            with pytest.raises(FormatError):
                load_mvds(path)

    def test_trailing_bytes(self, tmp_path):
        path = tmp_path / "d.mvds"
        save_mvds(self.make(), path)
        path.write_bytes(path.read_bytes() + b"x")
        with pytest.raises(FormatError):
            load_mvds(path)


class TestCsvImport:
    def test_two_views_with_labels(self, tmp_path):
        a = tmp_path / "a.csv"
        b = tmp_path / "b.csv"
        lab = tmp_path / "labels.csv"
        a.write_text("1.0,2.0\n3.0,4.0\n")
        b.write_text("5.0\n6.0\n")
        lab.write_text("0\n1\n")
        ds = from_csv([str(a), str(b)], labels_path=str(lab))
        assert ds.dims == (2, 1)
        np.testing.assert_array_equal(ds.labels, [0, 1])
        np.testing.assert_allclose(ds.views[0], [[1, 2], [3, 4]])

    def test_unparseable(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("1.0,oops\n")
        with pytest.raises(FormatError):
            from_csv([str(bad)])
