import numpy as np

from ..models.i_differentiable import IDifferentiable
from .sampling_shap import RandomLike

MAX_BATCH_ROWS = 4096


def expected_gradient_terms(model: IDifferentiable, x: np.ndarray, background: np.ndarray, n_samples: int,
                            rng: RandomLike = None) -> np.ndarray:
    """
    Single-sample expected-gradient terms (x - b) * grad f(b + alpha (x - b)) of the model's H1 logit,
    with b a random background row and alpha uniform in [0, 1].

    Returns:
        np.ndarray: n_samples x k terms.

    Raises:
        TypeError: If the model has no input gradient.
        ValueError: If the background is empty or n_samples < 1.
    """
    if not isinstance(model, IDifferentiable):
        raise TypeError(f"Gradient attributions need a differentiable model, got {type(model).__name__}.")
    x = np.asarray(x, dtype=float).ravel()
    background = np.atleast_2d(np.asarray(background, dtype=float))
    if background.shape[0] == 0:
        raise ValueError("The background set is empty.")
    if n_samples < 1:
        raise ValueError("At least one sample is needed.")
    rng = np.random.default_rng(rng)

    baselines = background[rng.integers(0, len(background), size=n_samples)]
    alphas = rng.random((n_samples, 1))
    deltas = x[None, :] - baselines
    points = baselines + alphas * deltas
    gradients = np.concatenate([model.h1_logit_gradient(points[start:start + MAX_BATCH_ROWS])
                                for start in range(0, n_samples, MAX_BATCH_ROWS)])
    return deltas * gradients


def gradient_shap(model: IDifferentiable, x: np.ndarray, background: np.ndarray, n_samples: int,
                  rng: RandomLike = None) -> np.ndarray:
    """
    Expected-gradients estimate of the Shapley values of the H1 logit at x.

    Parameters:
        model (IDifferentiable): Network exposing input gradients.
        x (np.ndarray): Row to explain.
        background (np.ndarray): Reference rows.
        n_samples (int): Number of (baseline, alpha) draws.
        rng (np.random.Generator | int, optional): Random source or seed.

    Returns:
        np.ndarray: k attributions.
    """
    return expected_gradient_terms(model, x, background, n_samples, rng).mean(axis=0)
