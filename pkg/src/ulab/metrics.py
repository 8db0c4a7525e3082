"""Evaluation: accuracies over the four data quadrants, a single unlearning
score, and deterministic CSV/JSON report emission."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

from .data import ForgetSplit, LabeledDataset
from .model import SplitClassifier

REPORT_COLUMNS = (
    "method", "seed", "acc_Dr", "acc_Df", "acc_Dtr", "acc_Dtf",
    "us", "wall_seconds", "data_used",
)


def accuracy(model: SplitClassifier, dataset: LabeledDataset) -> float:
    """Percent of samples whose argmax prediction matches the label."""
    if len(dataset) == 0:
        raise ValueError("cannot score an empty dataset")
    pred = model.predict(dataset.features)
    return float((pred == dataset.labels).mean() * 100.0)


def unlearning_score(acc_retain: float, acc_forget: float) -> float:
    """Exponentially weighted blend of keeping retain accuracy high and
    forget accuracy low, normalized to [0, 1].

    Both inputs are percentages. 100/0 scores 1, 0/100 scores 0.
    """
    for name, value in (("acc_retain", acc_retain), ("acc_forget", acc_forget)):
        if not 0.0 <= value <= 100.0:
            raise ValueError(f"{name} must be in [0, 100], got {value}")
    raised = math.exp(acc_retain / 100.0) + math.exp(1.0 - acc_forget / 100.0)
    return (raised - 2.0) / (2.0 * (math.e - 1.0))


@dataclass
class EvalReport:
    """One evaluated run. Accuracies are percentages; us comes from the
    test-side pair, us_train from the train-side pair."""

    method: str
    seed: int
    acc_Dr: float
    acc_Df: float
    acc_Dtr: float
    acc_Dtf: float
    us: float
    us_train: float
    wall_seconds: float
    data_used: int
    config: dict


def evaluate(model: SplitClassifier, method: str, seed: int,
             train_split: ForgetSplit, test_split: ForgetSplit,
             wall_seconds: float, data_used: int,
             config: dict | None = None) -> EvalReport:
    acc_dr = accuracy(model, train_split.retain)
    acc_df = accuracy(model, train_split.forget)
    acc_dtr = accuracy(model, test_split.retain)
    acc_dtf = accuracy(model, test_split.forget)
    return EvalReport(
        method=method,
        seed=seed,
        acc_Dr=acc_dr,
        acc_Df=acc_df,
        acc_Dtr=acc_dtr,
        acc_Dtf=acc_dtf,
        us=unlearning_score(acc_dtr, acc_dtf),
        us_train=unlearning_score(acc_dr, acc_df),
        wall_seconds=wall_seconds,
        data_used=data_used,
        config=config if config is not None else {},
    )


def flatten_config(config: dict, prefix: str = "") -> dict:
    """Nested dict to dotted keys: {'attack': {'steps': 10}} -> attack.steps."""
    flat = {}
    for key in config:
        value = config[key]
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            flat.update(flatten_config(value, name + "."))
        else:
            flat[name] = value
    return flat


def _cell(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if value is None:
        return ""
    text = str(value)
    if any(c in text for c in ',"\n'):
        text = '"' + text.replace('"', '""') + '"'
    return text


def report_rows(reports: list[EvalReport]) -> tuple[list[str], list[list[str]]]:
    """Stable header and cell rows: fixed columns, then sorted config keys."""
    config_keys = sorted({k for r in reports
                          for k in flatten_config(r.config)})
    header = list(REPORT_COLUMNS) + [f"config.{k}" for k in config_keys]
    rows = []
    for r in reports:
        flat = flatten_config(r.config)
        row = [
            _cell(r.method),
            _cell(r.seed),
            _cell(r.acc_Dr),
            _cell(r.acc_Df),
            _cell(r.acc_Dtr),
            _cell(r.acc_Dtf),
            f"{r.us:.4f}",
            _cell(r.wall_seconds),
            _cell(r.data_used),
        ]
        row += [_cell(flat.get(k)) for k in config_keys]
        rows.append(row)
    return header, rows


def emit_report(reports: list[EvalReport], path: str, fmt: str = "csv") -> None:
    """Write runs to disk. Identical reports produce byte-identical files."""
    if fmt == "csv":
        header, rows = report_rows(reports)
        with open(path, "w", newline="") as f:
            f.write(",".join(header) + "\n")
            for row in rows:
                f.write(",".join(row) + "\n")
    elif fmt == "json":
        payload = []
        for r in reports:
            payload.append({
                "method": r.method,
                "seed": r.seed,
                "acc_Dr": r.acc_Dr,
                "acc_Df": r.acc_Df,
                "acc_Dtr": r.acc_Dtr,
                "acc_Dtf": r.acc_Dtf,
                "us": float(f"{r.us:.4f}"),
                "us_train": float(f"{r.us_train:.4f}"),
                "wall_seconds": r.wall_seconds,
                "data_used": r.data_used,
                "config": r.config,
            })
        with open(path, "w") as f:
            json.dump(payload, f, indent=2, sort_keys=True)
            f.write("\n")
    else:
        raise ValueError(f"unknown report format {fmt!r}, expected csv or json")
