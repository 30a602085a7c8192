import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Union

import numpy as np
from sklearn.metrics import precision_recall_fscore_support

from ..features.fused import Scenario
from .i_classifier import IClassifier

log = logging.getLogger(__name__)

CLASSES = ("H0", "H1")
METRICS = ("precision", "recall", "f1")
SCENARIO_ORDER = tuple(scenario.value for scenario in Scenario)


@dataclass(frozen=True)
class EvalReport:
    """
    Precision, recall and F1 per class (rows H0, H1; columns P, R, F1), as mean and standard deviation
    over `n_seeds` test splits. A single evaluation has standard deviation 0.
    """
    model: str
    scenario: str
    mean: np.ndarray
    std: np.ndarray
    n_seeds: int = 1

    def __post_init__(self):
        for name in ("mean", "std"):
            values = np.asarray(getattr(self, name), dtype=float)
            if values.shape != (2, 3):
                raise ValueError(f"EvalReport.{name} must be 2 x 3, got {values.shape}.")
            if not np.isfinite(values).all() or (values < 0).any() or (values > 1).any():
                raise ValueError(f"EvalReport.{name} values must lie in [0, 1].")
            object.__setattr__(self, name, values)

    def value(self, label: str, metric: str) -> float:
        return float(self.mean[CLASSES.index(label), METRICS.index(metric)])

    def as_dict(self) -> dict:
        result = {"model": self.model, "scenario": self.scenario, "n_seeds": self.n_seeds}
        for i, label in enumerate(CLASSES):
            for j, metric in enumerate(METRICS):
                result[f"{metric}_{label.lower()}"] = round(float(self.mean[i, j]), 6)
                result[f"{metric}_{label.lower()}_std"] = round(float(self.std[i, j]), 6)
        return result

    @classmethod
    def from_dict(cls, data: dict) -> "EvalReport":
        mean = [[data[f"{metric}_{label.lower()}"] for metric in METRICS] for label in CLASSES]
        std = [[data[f"{metric}_{label.lower()}_std"] for metric in METRICS] for label in CLASSES]
        return cls(data["model"], data["scenario"], np.array(mean), np.array(std), data["n_seeds"])


def metrics_from_predictions(y_true, y_pred) -> np.ndarray:
    """
    2 x 3 matrix of precision, recall and F1 for H0 and H1; undefined values (no predictions or no
    rows of a class) are 0.
    """
    precision, recall, f1, _ = precision_recall_fscore_support(y_true, y_pred, labels=[0, 1], zero_division=0.0)
    return np.array([precision, recall, f1]).T


def evaluate(model: IClassifier, X_test: np.ndarray, y_test: np.ndarray, scenario: Union[Scenario, str] = Scenario.ALL,
             tag: str = None) -> EvalReport:
    """
    Evaluates the argmax decision of a model on a test split.

    Parameters:
        model (IClassifier): Fitted model.
        X_test (np.ndarray): Test rows.
        y_test (np.ndarray): Test labels.
        scenario (Scenario | str): Feature set the model was trained on.
        tag (str, optional): Model name in the report, the model kind by default.

    Returns:
        EvalReport: Metrics of this split.
    """
    y_test = np.asarray(y_test).astype(np.int64)
    prediction = model.predict(X_test)
    if not prediction.any():
        log.warning("%s predicts no hospitalization on %d test rows; precision(H1) is set to 0",
                    tag or model.kind, len(y_test))
    metrics = metrics_from_predictions(y_test, prediction)
    return EvalReport(tag or model.kind, Scenario(scenario).value, metrics, np.zeros((2, 3)))


def aggregate_over_seeds(reports: Sequence[EvalReport]) -> EvalReport:
    """
    Mean and (population) standard deviation of every metric across split seeds.

    Raises:
        ValueError: If there is no report or the reports mix models or scenarios.
    """
    if not reports:
        raise ValueError("No reports to aggregate.")
    if len({(report.model, report.scenario) for report in reports}) != 1:
        raise ValueError("Reports of different models or scenarios cannot be aggregated.")
    values = np.stack([report.mean for report in reports])
    return EvalReport(reports[0].model, reports[0].scenario, values.mean(axis=0), values.std(axis=0),
                      sum(report.n_seeds for report in reports))


def format_table3(reports: Sequence[EvalReport], model_order: Sequence[str] = None) -> str:
    """
    Tab-delimited table with one row per model and one column per (class, metric); every cell holds the
    three scenario values "all/gp/one-day-before" ("-" where a scenario was not run).
    """
    by_key = {(report.model, report.scenario): report for report in reports}
    models = list(model_order) if model_order else list(dict.fromkeys(report.model for report in reports))
    header = ["model"] + [f"{metric[0].upper() if metric != 'f1' else 'F1'}({label})"
                          for label in CLASSES for metric in METRICS]
    lines = ["\t".join(header)]
    for model in models:
        cells = [model]
        for i in range(len(CLASSES)):
            for j in range(len(METRICS)):
                values = []
                for scenario in SCENARIO_ORDER:
                    report = by_key.get((model, scenario))
                    values.append("-" if report is None else f"{report.mean[i, j]:.2f}")
                cells.append("/".join(values))
        lines.append("\t".join(cells))
    return "\n".join(lines) + "\n"


def write_table3(reports: Sequence[EvalReport], path: Union[str, Path], model_order: Sequence[str] = None) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(format_table3(reports, model_order))
