import csv
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from ..errors import ConfigurationError

log = logging.getLogger(__name__)

DEFAULT_TOP_K = 35
WHISKER = 1.5
SUMMARY_COLUMNS = ("rank", "feature", "median", "mean", "q1", "q3", "whisker_low", "whisker_high")

MAGIC = "HOSPRISK-SHAP"
VERSION = 1


@dataclass(frozen=True)
class ShapMatrix:
    """
    Attributions of one model on the test rows of one scenario; `base_value` is the expected model output.
    """
    values: np.ndarray
    base_value: float
    feature_names: list[str]
    model: str
    scenario: str

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or values.shape[1] != len(self.feature_names):
            raise ValueError(f"SHAP values of shape {values.shape} do not match {len(self.feature_names)} features.")
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def efficiency_residuals(self, outputs: np.ndarray) -> np.ndarray:
        """
        |output - base_value - row sum| per row.
        """
        return np.abs(np.asarray(outputs, dtype=float) - self.base_value - self.values.sum(axis=1))


@dataclass(frozen=True)
class ShapSummary:
    """
    Statistics of the absolute attributions per feature; `ranking` orders all features by decreasing
    median (ties by name) and the first `top_k` of it are reported.
    """
    feature_names: list[str]
    median: np.ndarray
    mean: np.ndarray
    q1: np.ndarray
    q3: np.ndarray
    whisker_low: np.ndarray
    whisker_high: np.ndarray
    ranking: list[str]
    top_k: int
    model: str = ""
    scenario: str = ""
    n_rows: int = 0

    @property
    def top(self) -> list[str]:
        return self.ranking[:self.top_k]

    def row(self, name: str) -> dict:
        index = self.feature_names.index(name)
        return {
            "feature": name,
            "median": float(self.median[index]),
            "mean": float(self.mean[index]),
            "q1": float(self.q1[index]),
            "q3": float(self.q3[index]),
            "whisker_low": float(self.whisker_low[index]),
            "whisker_high": float(self.whisker_high[index]),
        }


def summarize_shap(matrices: Union[ShapMatrix, Sequence[ShapMatrix]], top_k: int = DEFAULT_TOP_K) -> ShapSummary:
    """
    Pools the rows of one or more matrices (e.g. the test sets of several split seeds) and summarizes
    the absolute attributions per feature: median, mean, quartiles and whiskers at 1.5 IQR clipped to
    the observed range.

    Raises:
        ValueError: If there are no rows or the matrices disagree on the features.
    """
    if isinstance(matrices, ShapMatrix):
        matrices = [matrices]
    if not matrices:
        raise ValueError("No SHAP matrices to summarize.")
    names = matrices[0].feature_names
    if any(matrix.feature_names != names for matrix in matrices):
        raise ValueError("SHAP matrices over different features cannot be pooled.")
    values = np.abs(np.concatenate([matrix.values for matrix in matrices]))
    if len(values) == 0:
        raise ValueError("SHAP matrices have no rows.")

    q1, median, q3 = np.percentile(values, [25, 50, 75], axis=0)
    spread = WHISKER * (q3 - q1)
    low = np.maximum(q1 - spread, values.min(axis=0))
    high = np.minimum(q3 + spread, values.max(axis=0))
    ranking = [names[i] for i in sorted(range(len(names)), key=lambda i: (-median[i], names[i]))]

    models = sorted({matrix.model for matrix in matrices})
    scenarios = sorted({matrix.scenario for matrix in matrices})
    return ShapSummary(list(names), median, values.mean(axis=0), q1, q3, low, high, ranking, min(top_k, len(names)),
                       ",".join(models), ",".join(scenarios), len(values))


def top_k_overlap(summary_a: ShapSummary, summary_b: ShapSummary, k: int = DEFAULT_TOP_K) -> tuple[int, float]:
    """
    Number of shared names among the top k features of two summaries and its share of k.

    Raises:
        ValueError: If the summaries are over different feature sets.
    """
    if set(summary_a.feature_names) != set(summary_b.feature_names):
        raise ValueError("Top-k overlap needs summaries over the same features.")
    count = len(set(summary_a.ranking[:k]) & set(summary_b.ranking[:k]))
    return count, count / k


def write_shap_summary(summary: ShapSummary, path: Union[str, Path]) -> None:
    """
    Tab-delimited statistics of the top-k features, most important first.
    """
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, delimiter="\t", lineterminator="\n")
        writer.writerow(SUMMARY_COLUMNS)
        for rank, name in enumerate(summary.top, start=1):
            row = summary.row(name)
            writer.writerow([rank, name] + [f"{row[column]:.6g}" for column in SUMMARY_COLUMNS[2:]])


def write_boxplot_data(summary: ShapSummary, path: Union[str, Path]) -> None:
    """
    Plot-ready JSON: one box (whiskers, quartiles, median) per top-k feature.
    """
    boxes = []
    for name in summary.top:
        row = summary.row(name)
        boxes.append({"label": name, "whislo": row["whisker_low"], "q1": row["q1"], "med": row["median"],
                      "q3": row["q3"], "whishi": row["whisker_high"], "mean": row["mean"]})
    document = {"model": summary.model, "scenario": summary.scenario, "n_rows": summary.n_rows, "boxes": boxes}
    with open(path, "w", encoding="utf-8") as f:
        json.dump(document, f, indent=2, sort_keys=True)
        f.write("\n")


def format_overlap_report(entries: Sequence[tuple[str, str, str, int, float]], k: int = DEFAULT_TOP_K) -> str:
    """
    Plain-text overlap report from (model a, model b, scenario, count, fraction) entries.
    """
    lines = [f"Top-{k} overlap of median absolute SHAP values"]
    for model_a, model_b, scenario, count, fraction in entries:
        lines.append(f"{model_a} vs {model_b} [{scenario}]: {count}/{k} ({fraction:.0%})")
    return "\n".join(lines) + "\n"


def write_shap_matrix(matrix: ShapMatrix, path: Union[str, Path]) -> None:
    header = {"model": matrix.model, "scenario": matrix.scenario, "base_value": matrix.base_value,
              "feature_names": matrix.feature_names, "n": matrix.n}
    with open(path, "wb") as f:
        f.write(f"{MAGIC} {VERSION}\n".encode("ascii"))
        f.write(json.dumps(header, separators=(",", ":"), sort_keys=True).encode("utf-8"))
        f.write(b"\n")
        f.write(matrix.values.astype("<f8").tobytes())


def read_shap_matrix(path: Union[str, Path]) -> ShapMatrix:
    """
    Raises:
        ConfigurationError: If the file is not a SHAP matrix of a supported version.
    """
    with open(path, "rb") as f:
        magic = f.readline().decode("ascii", errors="replace").split()
        if len(magic) != 2 or magic[0] != MAGIC or magic[1] != str(VERSION):
            raise ConfigurationError(f"SHAP container error: {path} is not a version {VERSION} SHAP file.")
        header = json.loads(f.readline().decode("utf-8"))
        payload = f.read()
    k = len(header["feature_names"])
    if len(payload) != header["n"] * k * 8:
        raise ConfigurationError(f"SHAP container error: {path} is truncated.")
    values = np.frombuffer(payload, dtype="<f8").reshape(header["n"], k).astype(np.float64)
    return ShapMatrix(values, header["base_value"], header["feature_names"], header["model"], header["scenario"])
