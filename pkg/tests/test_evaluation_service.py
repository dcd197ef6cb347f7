"""Tests for accuracy metrics and the incremental runner."""

import numpy as np
import pytest

from fscil.config import get_settings
from fscil.exceptions import ContractError, DimensionError
from fscil.schemas.config import FinetuneConfig, SplitSpec
from fscil.services.dataset_service import split_sessions
from fscil.services.evaluation_service import (
    EvalOptions,
    confusion_matrix,
    harmonic_mean,
    performance_drop,
    run_incremental,
    run_trials,
    split_accuracy,
    top1_accuracy,
)
from tests.conftest import make_state

PROTO = EvalOptions(method="proto", prototype=True, calibration=False)
LIMIT = EvalOptions(method="limit", prototype=True, calibration=True)


class TestMetrics:

    def test_all_correct(self):
        assert top1_accuracy(np.eye(3), [0, 1, 2]) == 100.0

    def test_ties_go_to_lowest_index(self):
        assert top1_accuracy(np.zeros((4, 4)), [0, 0, 1, 2]) == 50.0

    def test_empty_labels(self):
        with pytest.raises(ContractError):
            top1_accuracy(np.zeros((0, 2)), [])

    @pytest.mark.parametrize(
        "accuracies, expected",
        [
            ([75.89, 70.12, 65.0, 61.3, 57.41], 18.48),
            ([64.10, 30.0, 2.65], 61.45),
            ([50.0, 50.0, 50.0], 0.0),
        ],
    )
    def test_performance_drop(self, accuracies, expected):
        assert performance_drop(accuracies) == expected

    def test_harmonic_mean(self):
        assert harmonic_mean(73.6, 41.8) == pytest.approx(53.3, abs=0.05)
        assert harmonic_mean(40.0, 40.0) == pytest.approx(40.0)
        assert harmonic_mean(70.0, 0.0) == 0.0
        assert harmonic_mean(0.0, 0.0) == 0.0

    def test_perfect_confusion_is_diagonal(self):
        labels = [0, 0, 1, 2, 2, 2]
        matrix = confusion_matrix(labels, labels, 3)
        np.testing.assert_array_equal(matrix, np.diag([2, 1, 3]))

    def test_split_accuracy(self):
        matrix = np.array([[8, 2, 0], [1, 9, 0], [3, 0, 1]])
        base, inc, harmonic = split_accuracy(matrix, base_class_count=2)
        assert base == pytest.approx(85.0)
        assert inc == pytest.approx(25.0)
        assert harmonic == pytest.approx(2 * 85 * 25 / 110)


class TestRunIncremental:

    def test_report_shape(self, stream, small_state):
        report = run_incremental(small_state, stream, LIMIT)
        assert len(report.session_acc) == stream.session_count + 1
        assert report.pd == round(report.session_acc[0] - report.session_acc[-1], 2)
        assert report.class_order == stream.seen_classes(stream.session_count)
        assert len(report.top_predictions) == len(stream.test_sets[-1])
        assert report.schema_version == 1

    def test_confusion_rows_match_test_counts(self, stream, small_state):
        report = run_incremental(small_state, stream, PROTO)
        counts = report.per_session_class_counts[-1]
        row_sums = np.array(report.confusion).sum(axis=1)
        assert row_sums.tolist() == [counts[c] for c in report.class_order]

    def test_only_base_session(self, small_dataset, small_state):
        stream = split_sessions(
            small_dataset, SplitSpec(base_class_count=6, session_count=0, shot=3, test_per_class=5, seed=7)
        )
        state = make_state(stream.base.dim, stream.session_classes[0])
        report = run_incremental(state, stream, LIMIT)
        assert len(report.session_acc) == 1
        assert report.pd == 0.0

    def test_constant_predictor_scores_first_class_share(self, stream):
        state = make_state(stream.base.dim, stream.session_classes[0])
        for t in state.net.parameters().values():
            t.data = np.zeros_like(t.data)
        report = run_incremental(state, stream, PROTO)
        for b, acc in enumerate(report.session_acc):
            test_set = stream.test_sets[b]
            share = 100.0 * test_set.class_counts()[stream.session_classes[0][0]] / len(test_set)
            assert acc == round(share, 2)

    @pytest.mark.parametrize("method", ["limit", "proto", "cosine", "finetune", "kd"])
    def test_state_is_never_modified(self, stream, small_state, method):
        options = EvalOptions(
            method=method,
            prototype=method not in ("finetune", "kd"),
            calibration=method == "limit",
            cosine=method == "cosine",
            distill=method == "kd",
            finetune=FinetuneConfig(epochs=1, batch_size=4),
        )
        before = small_state.fingerprint()
        report = run_incremental(small_state, stream, options)
        assert small_state.fingerprint() == before
        assert small_state.classifier.width == stream.base_class_count
        assert all(0.0 <= acc <= 100.0 for acc in report.session_acc)

    def test_thread_pool_gives_identical_results(self, stream, small_state, monkeypatch):
        serial = run_incremental(small_state, stream, LIMIT)
        monkeypatch.setenv("LIMIT_NUM_THREADS", "3")
        monkeypatch.setenv("LIMIT_EVAL_BATCH_SIZE", "7")
        get_settings.cache_clear()
        parallel = run_incremental(small_state, stream, LIMIT)
        assert parallel.session_acc == serial.session_acc
        assert parallel.confusion == serial.confusion

    def test_top_predictions_are_sorted(self, stream, small_state):
        report = run_incremental(small_state, stream, LIMIT)
        for pred in report.top_predictions:
            assert len(pred.classes) == 5
            assert pred.probabilities == sorted(pred.probabilities, reverse=True)

    def test_feature_dimension_mismatch(self, stream):
        state = make_state(stream.base.dim + 1, stream.session_classes[0])
        with pytest.raises(DimensionError):
            run_incremental(state, stream, LIMIT)


class TestRunTrials:

    def test_one_row_per_seed(self, small_dataset, small_split, small_state):
        report = run_trials(small_state, small_dataset, small_split, PROTO, [1, 2, 3])
        assert report.instance_seeds == [1, 2, 3]
        assert len(report.session_acc) == 3
        finals = [row[-1] for row in report.session_acc]
        assert report.final_mean == round(float(np.mean(finals)), 2)
        # test sets do not depend on the instance seed
        assert len({row[0] for row in report.session_acc}) == 1

    def test_needs_a_seed(self, small_dataset, small_split, small_state):
        with pytest.raises(ContractError):
            run_trials(small_state, small_dataset, small_split, PROTO, [])
