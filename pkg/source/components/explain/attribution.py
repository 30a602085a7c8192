import logging
from concurrent.futures import ThreadPoolExecutor
from enum import Enum
from typing import Callable, Optional, Sequence

import numpy as np

from ..models.forest import ForestModel
from ..models.i_classifier import IClassifier
from ..models.i_differentiable import IDifferentiable
from .gradient_shap import gradient_shap
from .sampling_shap import sampling_shap
from .summary import ShapMatrix
from .tree_shap import TreeShapExplainer

log = logging.getLogger(__name__)

DEFAULT_BACKGROUND = 100
DEFAULT_PERMUTATIONS = 200
DEFAULT_GRADIENT_SAMPLES = 200


class ExplainMethod(Enum):
    TREE = "tree"
    SAMPLING = "sampling"
    GRADIENT = "gradient"


def default_method(model: IClassifier) -> ExplainMethod:
    return ExplainMethod.TREE if isinstance(model, ForestModel) else ExplainMethod.GRADIENT


def explained_output(model: IClassifier) -> Callable[[np.ndarray], np.ndarray]:
    """
    Output the attributions add up to: the H1 logit of differentiable models, the H1 probability otherwise.
    """
    if isinstance(model, IDifferentiable):
        return model.h1_logit
    return lambda X: model.predict_proba(X)[:, 1]


def sample_background(X_train: np.ndarray, size: int = DEFAULT_BACKGROUND, seed: int = 0) -> np.ndarray:
    """
    Reference rows drawn without replacement from the training rows.
    """
    X_train = np.asarray(X_train, dtype=float)
    if len(X_train) <= size:
        return X_train.copy()
    rows = np.sort(np.random.default_rng(seed).choice(len(X_train), size=size, replace=False))
    return X_train[rows]


def row_rng(seed: int, row: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, row]))


def explain_rows(model: IClassifier, X: np.ndarray, method: ExplainMethod, background: Optional[np.ndarray] = None,
                 n_samples: Optional[int] = None, seed: int = 0, jobs: int = 1) -> tuple[np.ndarray, float]:
    """
    Attributions of every row of X.

    Parameters:
        model (IClassifier): Fitted model.
        X (np.ndarray): n x k rows to explain.
        method (ExplainMethod): "tree" for forests, "gradient" for networks, "sampling" for any model.
        background (np.ndarray, optional): Reference rows, required by the sampling and gradient methods.
        n_samples (int, optional): Permutations or gradient samples per row.
        seed (int): Row i uses the random stream derived from (seed, i).
        jobs (int): Rows explained concurrently.

    Returns:
        tuple: n x k attributions and the base value.

    Raises:
        TypeError: If the method does not apply to the model.
        ValueError: If the background is missing or empty.
    """
    method = ExplainMethod(method)
    X = model.check_features(X)
    if method == ExplainMethod.TREE:
        if not isinstance(model, ForestModel):
            raise TypeError(f"Exact tree attributions need a forest, got {model.kind}.")
        explainer = TreeShapExplainer(model)
        return explainer.shap_values(X, jobs), explainer.base_value

    if background is None or len(background) == 0:
        raise ValueError("The sampling and gradient methods need a non-empty background set.")
    background = model.check_features(background)
    output = explained_output(model)
    if method == ExplainMethod.GRADIENT:
        if not isinstance(model, IDifferentiable):
            raise TypeError(f"Gradient attributions need a differentiable model, got {model.kind}.")
        count = n_samples or DEFAULT_GRADIENT_SAMPLES

        def explain_one(row: int) -> np.ndarray:
            return gradient_shap(model, X[row], background, count, row_rng(seed, row))
    else:
        count = n_samples or DEFAULT_PERMUTATIONS

        def explain_one(row: int) -> np.ndarray:
            return sampling_shap(output, X[row], background, count, row_rng(seed, row))

    log.debug("Explaining %d rows of %s with the %s method (%d samples per row)", len(X), model.kind,
              method.value, count)
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        values = list(pool.map(explain_one, range(len(X))))
    values = np.stack(values) if values else np.zeros((0, X.shape[1]))
    return values, float(np.mean(output(background)))


def shap_matrix(model: IClassifier, X: np.ndarray, feature_names: Sequence[str], scenario: str,
                method: Optional[ExplainMethod] = None, background: Optional[np.ndarray] = None,
                n_samples: Optional[int] = None, seed: int = 0, jobs: int = 1, tag: Optional[str] = None) -> ShapMatrix:
    """
    Explains the test rows of one scenario with the model's default method unless another is given.
    """
    method = default_method(model) if method is None else ExplainMethod(method)
    values, base_value = explain_rows(model, X, method, background, n_samples, seed, jobs)
    matrix = ShapMatrix(values, base_value, list(feature_names), tag or model.kind, scenario)
    residuals = matrix.efficiency_residuals(explained_output(model)(X)) if len(X) else np.zeros(0)
    if len(residuals):
        log.info("%s [%s] %s attributions: max efficiency residual %.3g over %d rows", matrix.model, scenario,
                 method.value, residuals.max(), len(residuals))
    return matrix
