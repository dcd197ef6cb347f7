"""Desk-scale ablation on the synthetic benchmark (run with ``pytest -m slow``)."""

import math
from pathlib import Path

import pytest

from fscil.commands.ablate import cmd_ablate
from fscil.commands.common import build_stream, eval_options, load_dataset
from fscil.commands.evaluate import cmd_eval
from fscil.commands.pretrain import cmd_pretrain
from fscil.config import load_run_config
from fscil.services.checkpoint_service import load_checkpoint
from fscil.services.evaluation_service import run_trials
from fscil.services.report_service import read_csv

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

pytestmark = pytest.mark.slow


@pytest.fixture(scope="module")
def run(tmp_path_factory):
    out = tmp_path_factory.mktemp("acceptance")
    config = load_run_config(CONFIGS / "acceptance.json", out_dir=out)
    state, pretrained = cmd_pretrain(config)
    report = cmd_ablate(config, pretrained, trials=5)
    return config, state, pretrained, report


def test_pretraining_converges(run):
    config, state, _, _ = run
    log = read_csv(config.eval.out_dir / "pretrain_log.csv")
    assert state.pretrained
    assert log["loss"].iloc[-1] < log["loss"].iloc[0]
    assert log["loss"].max() <= config.train.pretrain.divergence_factor * log["loss"].iloc[0]
    assert log["accuracy"].iloc[-1] > 90.0


def test_grid_has_five_rows(run):
    _, _, _, report = run
    assert [row.name for row in report.rows] == [
        "finetune",
        "prototype",
        "prototype+calibration",
        "meta-1",
        "meta-2",
    ]
    assert all(row.status == "ok" for row in report.rows)


def test_component_ordering(run):
    _, _, _, report = run
    final = {row.name: row.session_acc[-1] for row in report.rows}
    assert final["finetune"] < final["prototype"]
    assert final["prototype"] <= final["prototype+calibration"]
    assert final["prototype+calibration"] <= final["meta-1"]
    assert final["meta-1"] <= final["meta-2"]
    assert final["meta-2"] >= final["prototype"] + 1.0


def test_finetune_forgets_most(run):
    _, _, _, report = run
    drops = {row.name: row.pd for row in report.rows}
    assert drops["finetune"] == max(drops.values())


def test_finetune_loses_more_old_class_accuracy(run):
    config, _, pretrained, _ = run
    meta = config.eval.out_dir / "ablation" / "meta-2.json"
    assert load_checkpoint(meta).meta_trained
    limit = cmd_eval(config, meta)
    finetune = cmd_eval(config.model_copy(update={"method": "finetune"}), pretrained)
    assert finetune.base_acc < limit.base_acc
    assert len(build_stream(config).sessions) == 4


def test_finetune_is_stable_across_draws(tmp_path):
    config = load_run_config(CONFIGS / "default.json", out_dir=tmp_path, method="finetune")
    state, _ = cmd_pretrain(config)
    report = run_trials(
        state, load_dataset(config), config.dataset.split, eval_options(config), list(range(1, 6))
    )
    for row in report.session_acc:
        assert all(math.isfinite(acc) for acc in row)
    assert report.session_acc[0][0] > 50.0
