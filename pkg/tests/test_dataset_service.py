"""Tests for synthetic data, feature CSV I/O and session splitting."""

import json

import numpy as np
import pytest

from fscil.exceptions import CapacityError, ContractError, ParseError
from fscil.schemas.config import SplitSpec
from fscil.services.dataset_service import (
    generate_gaussian_mixture,
    label_map_path,
    load_feature_csv,
    save_feature_csv,
    split_sessions,
)


def rows_of(dataset):
    return {tuple(row) for row in dataset.features.tolist()}


class TestGaussianMixture:

    def test_deterministic(self):
        a = generate_gaussian_mixture(3, 4, 5, 1.0, seed=7)
        b = generate_gaussian_mixture(3, 4, 5, 1.0, seed=7)
        assert a.features.tobytes() == b.features.tobytes()
        np.testing.assert_array_equal(a.labels, b.labels)

    def test_zero_spread_collapses_to_mean(self):
        ds = generate_gaussian_mixture(4, 3, 6, 0.0, seed=1)
        for c in ds.classes:
            rows = ds.features[ds.indices_of(c)]
            assert np.all(rows == rows[0])

    def test_shape_and_labels(self):
        ds = generate_gaussian_mixture(5, 2, 10, 0.5, seed=0)
        assert ds.features.shape == (50, 2)
        assert ds.class_counts() == {c: 10 for c in range(5)}

    def test_negative_spread(self):
        with pytest.raises(ContractError):
            generate_gaussian_mixture(2, 2, 2, -1.0, seed=0)


class TestFeatureCsv:

    def test_dense_remap(self, tmp_path):
        path = tmp_path / "f.csv"
        path.write_text("5,1.0,2.0\n9,3.0,4.0\n5,5.0,6.0\n")
        ds = load_feature_csv(path)
        assert ds.num_classes == 2
        assert ds.labels.tolist() == [0, 1, 0]
        assert ds.metadata["label_map"] == {5: 0, 9: 1}

    def test_single_row(self, tmp_path):
        path = tmp_path / "f.csv"
        path.write_text("0,1,2,3,4\n")
        assert load_feature_csv(path).features.shape == (1, 4)

    def test_empty_file(self, tmp_path):
        path = tmp_path / "f.csv"
        path.write_text("")
        with pytest.raises(ParseError, match="line 1"):
            load_feature_csv(path)

    def test_non_numeric_field(self, tmp_path):
        path = tmp_path / "f.csv"
        path.write_text("0,1.0,2.0\n1,abc,2.0\n")
        with pytest.raises(ParseError, match="line 2") as info:
            load_feature_csv(path)
        assert info.value.line == 2

    def test_ragged_rows(self, tmp_path):
        path = tmp_path / "f.csv"
        path.write_text("0,1.0,2.0\n1,1.0,2.0\n1,1.0\n")
        with pytest.raises(ParseError, match="line 3"):
            load_feature_csv(path)

    def test_comment_lines_keep_physical_line_numbers(self, tmp_path):
        path = tmp_path / "f.csv"
        path.write_text("# header\n0,1.0,2.0\n\n1,nan,2.0\n")
        with pytest.raises(ParseError) as info:
            load_feature_csv(path)
        assert info.value.line == 4

    def test_whitespace_around_fields(self, tmp_path):
        path = tmp_path / "f.csv"
        path.write_text("3, 1.5 ,2.0\n4,0.25, -1\n")
        ds = load_feature_csv(path)
        assert ds.features.tolist() == [[1.5, 2.0], [0.25, -1.0]]
        assert ds.labels.tolist() == [0, 1]

    def test_round_trip_is_exact(self, tmp_path):
        ds = generate_gaussian_mixture(3, 4, 5, 1.0, seed=2)
        path = save_feature_csv(ds, tmp_path / "features.csv")
        loaded = load_feature_csv(path)
        assert loaded.features.tobytes() == ds.features.tobytes()
        np.testing.assert_array_equal(loaded.labels, ds.labels)
        sidecar = json.loads(label_map_path(path).read_text())
        assert sidecar == {"0": 0, "1": 1, "2": 2}


class TestSplitSessions:

    def test_partition(self, stream, small_split):
        assert stream.session_count == 3
        assert stream.base_class_count == 6
        assert sorted(stream.base.classes) == sorted(stream.session_classes[0])
        all_classes = [c for classes in stream.session_classes for c in classes]
        assert len(set(all_classes)) == 12
        for b, session in enumerate(stream.sessions, start=1):
            assert session.class_counts() == {c: small_split.shot for c in stream.session_classes[b]}

    def test_cumulative_test_sets(self, stream, small_split):
        for b, test_set in enumerate(stream.test_sets):
            seen = stream.seen_classes(b)
            assert test_set.class_counts() == {c: small_split.test_per_class for c in seen}

    def test_train_and_test_are_disjoint(self, stream):
        test_rows = rows_of(stream.test_sets[-1])
        assert not test_rows & rows_of(stream.base)
        for session in stream.sessions:
            assert not test_rows & rows_of(session)

    def test_deterministic(self, small_dataset, small_split):
        a = split_sessions(small_dataset, small_split)
        b = split_sessions(small_dataset, small_split)
        assert a.class_order == b.class_order
        for x, y in zip(a.sessions + a.test_sets, b.sessions + b.test_sets):
            assert x.features.tobytes() == y.features.tobytes()

    def test_instance_seed_only_changes_shots(self, small_dataset, small_split):
        a = split_sessions(small_dataset, small_split)
        b = split_sessions(small_dataset, small_split.model_copy(update={"instance_seed": 99}))
        assert a.class_order == b.class_order
        for x, y in zip(a.test_sets, b.test_sets):
            assert x.features.tobytes() == y.features.tobytes()
        assert any(
            rows_of(x) != rows_of(y) for x, y in zip(a.sessions, b.sessions)
        )

    def test_no_incremental_sessions(self, small_dataset):
        stream = split_sessions(small_dataset, SplitSpec(base_class_count=6, session_count=0, seed=1))
        assert stream.sessions == []
        assert len(stream.test_sets) == 1

    def test_cifar_style_split(self):
        ds = generate_gaussian_mixture(100, 2, 20, 1.0, seed=0)
        spec = SplitSpec(base_class_count=60, way=5, shot=5, session_count=8, test_per_class=10, seed=3)
        stream = split_sessions(ds, spec)
        assert [len(c) for c in stream.session_classes] == [60] + [5] * 8
        assert stream.session_classes[1:] == [stream.class_order[60 + 5 * i : 65 + 5 * i] for i in range(8)]

    def test_capacity_error_names_class(self):
        ds = generate_gaussian_mixture(12, 2, 6, 1.0, seed=0)
        spec = SplitSpec(base_class_count=6, way=2, shot=3, session_count=3, test_per_class=5, seed=0)
        with pytest.raises(CapacityError) as info:
            split_sessions(ds, spec)
        assert info.value.class_id is not None

    def test_too_few_classes(self, small_dataset):
        with pytest.raises(ContractError):
            split_sessions(small_dataset, SplitSpec(base_class_count=10, way=2, session_count=2, seed=0))
