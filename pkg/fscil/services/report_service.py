"""JSON and CSV output of training logs and evaluation reports."""

import logging
from pathlib import Path
from typing import Dict, List, Sequence, Type, TypeVar, Union

import pandas as pd
from pydantic import BaseModel

from fscil.schemas.config import SCHEMA_VERSION
from fscil.schemas.report import (
    AblationReport,
    EvalReport,
    SweepReport,
    TrainLogEntry,
    TrialsReport,
)

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
ReportT = TypeVar("ReportT", bound=BaseModel)


def write_csv(frame: pd.DataFrame, path: PathLike, seed: int) -> Path:
    """Write a table under a ``# schema_version=N seed=S`` comment line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as handle:
        handle.write(f"# schema_version={SCHEMA_VERSION} seed={seed}\n")
        frame.to_csv(handle, index=False, lineterminator="\n")
    return path


def read_csv(path: PathLike) -> pd.DataFrame:
    """Read a table written by write_csv."""
    return pd.read_csv(path, comment="#", float_precision="round_trip")


def write_json(report: BaseModel, path: PathLike) -> Path:
    """Serialize a report model."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(report.model_dump_json(indent=2), encoding="utf-8")
    return path


def read_json(path: PathLike, model: Type[ReportT]) -> ReportT:
    """Parse a report model from JSON."""
    return model.model_validate_json(Path(path).read_text(encoding="utf-8"))


def write_train_log(entries: Sequence[TrainLogEntry], path: PathLike, seed: int) -> Path:
    """One row per logged training step."""
    columns = list(TrainLogEntry.model_fields)
    frame = pd.DataFrame([e.model_dump() for e in entries], columns=columns)
    return write_csv(frame, path, seed)


def write_eval_report(report: EvalReport, out_dir: PathLike) -> Dict[str, Path]:
    """Write report.json, sessions.csv, confusion.csv and top5.csv."""
    out_dir = Path(out_dir)
    paths = {"report": write_json(report, out_dir / "report.json")}

    sessions = pd.DataFrame(
        {
            "session": range(len(report.session_acc)),
            "accuracy": report.session_acc,
            "classes": [len(c) for c in report.per_session_class_counts],
        }
    )
    paths["sessions"] = write_csv(sessions, out_dir / "sessions.csv", report.seed)

    confusion = pd.DataFrame(
        report.confusion,
        index=pd.Index(report.class_order, name="true"),
        columns=[str(c) for c in report.class_order],
    ).reset_index()
    paths["confusion"] = write_csv(confusion, out_dir / "confusion.csv", report.seed)

    rows: List[dict] = []
    for i, pred in enumerate(report.top_predictions):
        for rank, (c, p) in enumerate(zip(pred.classes, pred.probabilities), start=1):
            rows.append({"instance": i, "label": pred.label, "rank": rank, "class": c, "probability": p})
    top = pd.DataFrame(rows, columns=["instance", "label", "rank", "class", "probability"])
    paths["top5"] = write_csv(top, out_dir / "top5.csv", report.seed)

    logger.info(f"Wrote evaluation report to {out_dir}")
    return paths


def write_ablation_report(report: AblationReport, out_dir: PathLike) -> Dict[str, Path]:
    """Write ablation.json and a wide ablation.csv with one column per session."""
    out_dir = Path(out_dir)
    records = []
    for row in report.rows:
        record = {
            "name": row.name,
            "prototype": row.prototype,
            "calibration": row.calibration,
            "meta_1": row.meta_1,
            "meta_c": row.meta_c,
            "status": row.status,
        }
        record.update({f"session_{b}": acc for b, acc in enumerate(row.session_acc)})
        record.update({"pd": row.pd, "final_std": row.final_std, "error": row.error})
        records.append(record)
    return {
        "report": write_json(report, out_dir / "ablation.json"),
        "table": write_csv(pd.DataFrame(records), out_dir / "ablation.csv", report.seed),
    }


def write_trials_report(report: TrialsReport, out_dir: PathLike) -> Dict[str, Path]:
    """Write trials.json and a trials.csv with one row per K-shot draw."""
    out_dir = Path(out_dir)
    frame = pd.DataFrame(
        report.session_acc,
        columns=[f"session_{b}" for b in range(len(report.mean_session_acc))],
    )
    frame.insert(0, "instance_seed", report.instance_seeds)
    return {
        "report": write_json(report, out_dir / "trials.json"),
        "table": write_csv(frame, out_dir / "trials.csv", report.seed),
    }


def write_sweep_report(report: SweepReport, out_dir: PathLike) -> Dict[str, Path]:
    """Write sweep_<kind>.json and a sweep_<kind>.csv with one row per setting."""
    out_dir = Path(out_dir)
    records = []
    for point in report.points:
        record = dict(point.setting)
        record.update({"status": point.status})
        record.update({f"session_{b}": acc for b, acc in enumerate(point.session_acc)})
        record.update(
            {
                "pd": point.pd,
                "final_mean": point.final_mean,
                "final_std": point.final_std,
                "error": point.error,
            }
        )
        records.append(record)
    stem = f"sweep_{report.kind}"
    return {
        "report": write_json(report, out_dir / f"{stem}.json"),
        "table": write_csv(pd.DataFrame(records), out_dir / f"{stem}.csv", report.seed),
    }
