"""Shared fixtures: a small synthetic stream, a matching model and a tiny run config."""

import numpy as np
import pytest

from fscil.config import get_settings
from fscil.models.calibration import CalibrationParams
from fscil.models.network import Classifier, EmbeddingNet, ModelState
from fscil.schemas.config import RunConfig, SplitSpec
from fscil.services.dataset_service import generate_gaussian_mixture, split_sessions


@pytest.fixture(autouse=True)
def fresh_settings(monkeypatch):
    """Settings are re-read for every test and progress bars stay off."""
    monkeypatch.setenv("LIMIT_SHOW_PROGRESS", "false")
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def small_dataset():
    """12 well-separated classes of 24 six-dimensional instances."""
    return generate_gaussian_mixture(num_classes=12, dim=6, per_class=24, spread=0.3, seed=3)


@pytest.fixture
def small_split():
    return SplitSpec(
        base_class_count=6, way=2, shot=3, session_count=3, test_per_class=5, seed=7, instance_seed=7
    )


@pytest.fixture
def stream(small_dataset, small_split):
    return split_sessions(small_dataset, small_split)


def make_state(input_dim, class_ids, seed=5, hidden=8, dim=4, attn_dim=5, dropout=0.0):
    """Randomly initialized model over the given base classes."""
    rng = np.random.default_rng(seed)
    return ModelState(
        net=EmbeddingNet.initialize([input_dim, hidden, dim], rng),
        classifier=Classifier.initialize(dim, class_ids, rng),
        calibration=CalibrationParams.initialize(dim, attn_dim, rng, dropout_p=dropout),
        base_class_ids=list(class_ids),
        seed=seed,
    )


@pytest.fixture
def small_state(stream):
    return make_state(stream.base.dim, stream.session_classes[0])


@pytest.fixture
def tiny_config(tmp_path):
    """A run configuration small enough for end-to-end command tests."""
    return RunConfig.model_validate(
        {
            "seed": 11,
            "dataset": {
                "num_classes": 12,
                "dim": 6,
                "per_class": 24,
                "spread": 0.3,
                "split": {
                    "base_class_count": 6,
                    "way": 2,
                    "shot": 3,
                    "session_count": 3,
                    "test_per_class": 5,
                },
            },
            "model": {"hidden": [8], "embed_dim": 4, "attn_dim": 4, "dropout": 0.1},
            "train": {
                "pretrain": {"epochs": 3, "batch_size": 16},
                "meta": {
                    "iterations": 3,
                    "eval_episodes": 2,
                    "log_every": 1,
                    "fake_task": {"phases": 2, "fake_way": 2, "fake_shot": 2, "query_shot": 3},
                },
                "finetune": {"epochs": 2, "batch_size": 4},
            },
            "eval": {"out_dir": str(tmp_path / "run")},
        }
    )
