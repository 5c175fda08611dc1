"""Dataset construction, IDX parsing, splits, and the delimited dump."""

import struct

import numpy as np
import pytest

from dropreg.data import (Dataset, SplitSpec, load_idx, one_hot, read_delimited,
                          select_classes, split, synth_blobs, truncate,
                          write_delimited)
from dropreg.errors import DomainError, ParseError


def write_idx_pair(tmp_path, images, labels):
    """Build format-correct IDX files: big-endian headers then raw bytes."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    n, rows, cols = images.shape
    img_path = tmp_path / "images.idx"
    lab_path = tmp_path / "labels.idx"
    img_path.write_bytes(struct.pack(">IIII", 0x00000803, n, rows, cols)
                         + images.tobytes())
    lab_path.write_bytes(struct.pack(">II", 0x00000801, labels.size)
                         + labels.tobytes())
    return img_path, lab_path


class TestDataset:
    def test_row_count_mismatch_rejected(self):
        with pytest.raises(DomainError):
            Dataset(np.zeros((3, 2)), np.eye(2))

    def test_features_outside_unit_interval_rejected(self):
        with pytest.raises(DomainError):
            Dataset(np.array([[1.5, 0.0]]), np.array([[1.0, 0.0]]))

    def test_labels_must_be_one_hot(self):
        with pytest.raises(DomainError):
            Dataset(np.zeros((1, 2)), np.array([[0.5, 0.5]]))
        with pytest.raises(DomainError):
            Dataset(np.zeros((1, 2)), np.array([[1.0, 1.0]]))

    def test_arrays_are_frozen(self):
        ds = Dataset(np.zeros((2, 2)), np.eye(2))
        with pytest.raises(ValueError):
            ds.features[0, 0] = 1.0

    def test_dims(self):
        ds = Dataset(np.zeros((4, 3)), one_hot([0, 1, 2, 0], 3))
        assert len(ds) == 4
        assert ds.feature_dim == 3
        assert ds.class_count == 3


class TestLoadIdx:
    def test_single_zero_image(self, tmp_path):
        img, lab = write_idx_pair(tmp_path, np.zeros((1, 2, 2)), [0])
        ds = load_idx(img, lab, class_count=2)
        assert ds.features.shape == (1, 4)
        assert np.all(ds.features == 0.0)
        assert np.array_equal(ds.labels, [[1.0, 0.0]])

    def test_pixels_scaled_by_255(self, tmp_path):
        img, lab = write_idx_pair(tmp_path, np.full((1, 1, 2), 255), [1])
        ds = load_idx(img, lab)
        assert np.all(ds.features == 1.0)
        img, lab = write_idx_pair(tmp_path, np.full((1, 1, 2), 51), [1])
        ds = load_idx(img, lab)
        assert np.allclose(ds.features, 0.2)

    def test_class_count_defaults_to_max_plus_one(self, tmp_path):
        img, lab = write_idx_pair(tmp_path, np.zeros((3, 1, 1)), [0, 2, 1])
        ds = load_idx(img, lab)
        assert ds.class_count == 3

    def test_wrong_image_magic_offset_zero(self, tmp_path):
        img, lab = write_idx_pair(tmp_path, np.zeros((1, 1, 1)), [0])
        img.write_bytes(struct.pack(">IIII", 0x00000000, 1, 1, 1) + b"\x00")
        with pytest.raises(ParseError) as err:
            load_idx(img, lab)
        assert err.value.offset == 0
        assert "0x00000000" in str(err.value)

    def test_wrong_label_magic(self, tmp_path):
        img, lab = write_idx_pair(tmp_path, np.zeros((1, 1, 1)), [0])
        lab.write_bytes(struct.pack(">II", 0x00000803, 1) + b"\x00")
        with pytest.raises(ParseError):
            load_idx(img, lab)

    def test_truncated_pixels_reports_offset(self, tmp_path):
        img, lab = write_idx_pair(tmp_path, np.zeros((2, 2, 2)), [0, 1])
        blob = img.read_bytes()
        img.write_bytes(blob[:-3])
        with pytest.raises(ParseError) as err:
            load_idx(img, lab)
        assert err.value.offset == len(blob) - 3

    def test_count_mismatch_names_both(self, tmp_path):
        (tmp_path / "a").mkdir()
        (tmp_path / "b").mkdir()
        img, _ = write_idx_pair(tmp_path / "a", np.zeros((2, 1, 1)), [0, 1])
        _, lab = write_idx_pair(tmp_path / "b", np.zeros((3, 1, 1)), [0, 1, 0])
        with pytest.raises(ParseError) as err:
            load_idx(img, lab)
        assert "2" in str(err.value) and "3" in str(err.value)


class TestSelectClasses:
    def test_relabel_in_list_order(self, tmp_path):
        img, lab = write_idx_pair(tmp_path, np.zeros((4, 1, 1)), [0, 3, 3, 1])
        ds = load_idx(img, lab)
        picked = select_classes(ds, [3, 0])
        assert len(picked) == 3
        assert picked.class_count == 2
        assert np.array_equal(np.argmax(picked.labels, axis=1), [1, 0, 0])

    def test_duplicate_classes_rejected(self):
        ds = Dataset(np.zeros((2, 1)), one_hot([0, 1], 2))
        with pytest.raises(DomainError):
            select_classes(ds, [0, 0])


class TestSynthBlobs:
    def test_deterministic_per_seed(self):
        a = synth_blobs(30, 3, 0.5, 11)
        b = synth_blobs(30, 3, 0.5, 11)
        assert np.array_equal(a.features, b.features)
        assert np.array_equal(a.labels, b.labels)
        c = synth_blobs(30, 3, 0.5, 12)
        assert not np.array_equal(a.features, c.features)

    def test_features_in_unit_interval(self):
        ds = synth_blobs(200, 4, 1.5, 0)
        assert ds.features.min() >= 0.0 and ds.features.max() <= 1.0

    def test_minimal_sizes(self):
        ds = synth_blobs(1, 2, 0.1, 0)
        assert len(ds) == 2
        assert ds.class_count == 2

    def test_rows_per_class(self):
        ds = synth_blobs(25, 3, 0.4, 5)
        assert len(ds) == 75
        assert np.all(ds.labels.sum(axis=0) == 25.0)

    def test_parameter_validation(self):
        with pytest.raises(DomainError):
            synth_blobs(10, 1, 0.5, 0)
        with pytest.raises(DomainError):
            synth_blobs(10, 2, 0.0, 0)
        with pytest.raises(DomainError):
            synth_blobs(0, 2, 0.5, 0)

    def test_tiny_spread_is_separable_by_a_small_net(self):
        from dropreg.network import LayerSpec, Network, OptimizerConfig
        from dropreg.numerics import RngStream
        from dropreg.regulation import fixed_dropout_train
        ds = synth_blobs(40, 2, 1e-6, 3)
        train, val, _ = split(ds, SplitSpec(50, 15, 15, 3))
        net = Network([LayerSpec(2, 8, "sigmoid"), LayerSpec(8, 2, "softmax")],
                      RngStream(3).child("net"))
        cfg = OptimizerConfig(learning_rate=0.5, momentum=0.9, batch_size=25,
                              epochs=200)
        out = fixed_dropout_train(net, train, val, 0.0, cfg,
                                  RngStream(3).child("train"))
        assert max(r.train_acc for r in out.trace.records) >= 0.99


class TestSplit:
    def test_sizes_and_disjointness(self):
        ds = synth_blobs(60, 2, 0.8, 9)
        train, val, test = split(ds, SplitSpec(70, 20, 30, 9))
        assert (len(train), len(val), len(test)) == (70, 20, 30)
        rows = {tuple(r) for r in ds.features}
        seen = [tuple(r) for part in (train, val, test) for r in part.features]
        assert len(seen) == 120
        assert set(seen) <= rows

    def test_union_preserves_multiset(self):
        ds = synth_blobs(20, 2, 0.8, 2)
        train, val, test = split(ds, SplitSpec(25, 10, 5, 4))
        combined = sorted(tuple(r) for part in (train, val, test)
                          for r in part.features)
        assert combined == sorted(tuple(r) for r in ds.features)

    def test_full_train_split(self):
        ds = synth_blobs(10, 2, 0.5, 1)
        train, val, test = split(ds, SplitSpec(20, 0, 0, 1))
        assert len(train) == 20 and len(val) == 0 and len(test) == 0
        assert {tuple(r) for r in train.features} == {tuple(r) for r in ds.features}

    def test_same_seed_same_split(self):
        ds = synth_blobs(30, 2, 0.8, 3)
        a = split(ds, SplitSpec(30, 15, 15, 7))
        b = split(ds, SplitSpec(30, 15, 15, 7))
        for x, y in zip(a, b):
            assert np.array_equal(x.features, y.features)

    def test_different_seed_different_split(self):
        ds = synth_blobs(30, 2, 0.8, 3)
        a = split(ds, SplitSpec(30, 15, 15, 7))
        b = split(ds, SplitSpec(30, 15, 15, 8))
        assert not np.array_equal(a[0].features, b[0].features)

    def test_infeasible_sizes_rejected(self):
        ds = synth_blobs(10, 2, 0.5, 0)
        with pytest.raises(DomainError):
            split(ds, SplitSpec(15, 5, 5, 0))


class TestTruncate:
    def test_keeps_leading_fraction(self):
        ds = synth_blobs(50, 2, 0.5, 0)
        cut = truncate(ds, 0.2)
        assert len(cut) == 20
        assert np.array_equal(cut.features, ds.features[:20])

    def test_keeps_at_least_one_row(self):
        ds = synth_blobs(1, 2, 0.5, 0)
        assert len(truncate(ds, 0.01)) == 1

    def test_full_fraction_is_identity(self):
        ds = synth_blobs(10, 2, 0.5, 0)
        assert np.array_equal(truncate(ds, 1.0).features, ds.features)

    def test_range_checked(self):
        ds = synth_blobs(10, 2, 0.5, 0)
        with pytest.raises(DomainError):
            truncate(ds, 0.0)


class TestDelimited:
    def test_round_trip_bit_exact(self, tmp_path):
        ds = synth_blobs(25, 3, 0.9, 13)
        path = tmp_path / "dump.csv"
        write_delimited(path, ds)
        back = read_delimited(path, 3)
        assert np.array_equal(back.features, ds.features)
        assert np.array_equal(back.labels, ds.labels)

    def test_layout_one_hot_then_features(self, tmp_path):
        ds = Dataset(np.array([[0.25, 0.75]]), one_hot([1], 2))
        path = tmp_path / "dump.csv"
        write_delimited(path, ds)
        text = path.read_text()
        assert text == "0.0,1.0,0.25,0.75\n"

    def test_too_few_columns_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("1.0,0.0\n")
        with pytest.raises(ParseError):
            read_delimited(path, 2)

    def test_non_numeric_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("1.0,0.0,abc\n")
        with pytest.raises(ParseError):
            read_delimited(path, 2)

    def test_empty_rejected(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("")
        with pytest.raises(ParseError):
            read_delimited(path, 2)


class TestOneHot:
    def test_encoding(self):
        out = one_hot([2, 0], 3)
        assert np.array_equal(out, [[0, 0, 1], [1, 0, 0]])

    def test_out_of_range_rejected(self):
        with pytest.raises(DomainError):
            one_hot([3], 3)
