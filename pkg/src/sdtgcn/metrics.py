"""MAE, MSE and explained-variance score, pooled over every (window, topic) entry."""
from __future__ import annotations

import csv
import json
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ShapeError

RESULT_COLUMNS = ("model", "T", "seed", "space", "mae", "mse", "var")


@dataclass
class EvalReport:
    mae: float
    mse: float
    var: float
    n_windows: int
    space: str = "normalized"
    constant_truth: bool = False
    runs: list[dict] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self))


def evaluate(preds, truths, space: str = "normalized") -> EvalReport:
    """Score predictions against truths of the same shape (windows x topics).

    Var is ``1 - Var(truth - pred) / Var(truth)`` with population variances;
    a constant truth yields 0 and sets ``constant_truth``.
    """
    preds = np.asarray(preds, dtype=np.float64)
    truths = np.asarray(truths, dtype=np.float64)
    if preds.shape != truths.shape:
        raise ShapeError(f"predictions {preds.shape} and truths {truths.shape} differ")
    if preds.size == 0:
        raise ValueError("cannot evaluate an empty prediction set")
    resid = truths - preds
    denom = np.var(truths)
    if denom == 0:
        warnings.warn("truth has zero variance; explained variance set to 0", RuntimeWarning, stacklevel=2)
        var = 0.0
    else:
        var = float(1.0 - np.var(resid) / denom)
    return EvalReport(
        mae=float(np.mean(np.abs(resid))),
        mse=float(np.mean(resid * resid)),
        var=var,
        n_windows=int(preds.shape[0]) if preds.ndim > 1 else 1,
        space=space,
        constant_truth=bool(denom == 0),
    )


def _mean(values: list[float]) -> float:
    # offsets from the first run, so identical runs average to themselves exactly
    base = values[0]
    return float(base + np.mean(np.asarray(values) - base))


def average_runs(reports: list[EvalReport]) -> EvalReport:
    if not reports:
        raise ValueError("average_runs needs at least one report")
    spaces = {r.space for r in reports}
    if len(spaces) != 1:
        raise ValueError(f"cannot average reports from different spaces: {sorted(spaces)}")
    if len(reports) == 1:
        return reports[0]
    return EvalReport(
        mae=_mean([r.mae for r in reports]),
        mse=_mean([r.mse for r in reports]),
        var=_mean([r.var for r in reports]),
        n_windows=reports[0].n_windows,
        space=reports[0].space,
        constant_truth=any(r.constant_truth for r in reports),
        runs=[{"mae": r.mae, "mse": r.mse, "var": r.var} for r in reports],
    )


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def append_results(path: str | Path, rows: list[dict]):
    """Append rows to a results CSV, writing the header when the file is new."""
    path = Path(path)
    new = not path.exists() or path.stat().st_size == 0
    with open(path, "a", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if new:
            writer.writerow(RESULT_COLUMNS)
        for row in rows:
            writer.writerow([row["model"], row["T"], row["seed"], row["space"],
                             fmt(row["mae"]), fmt(row["mse"]), fmt(row["var"])])


def result_row(model: str, T: int, seed, report: EvalReport) -> dict:
    return {"model": model, "T": T, "seed": seed, "space": report.space,
            "mae": report.mae, "mse": report.mse, "var": report.var}
