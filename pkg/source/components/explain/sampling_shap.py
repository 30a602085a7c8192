from typing import Callable, Union

import numpy as np

# cells of one chunk of switched paths (permutations x (k + 1) x k)
MAX_BATCH_ELEMENTS = 1 << 22

RandomLike = Union[np.random.Generator, int, None]


def permutations_per_chunk(k: int) -> int:
    return max(1, MAX_BATCH_ELEMENTS // ((k + 1) * k))


def permutation_contributions(predict_fn: Callable[[np.ndarray], np.ndarray], x: np.ndarray, background: np.ndarray,
                              n_permutations: int, rng: RandomLike = None) -> np.ndarray:
    """
    Marginal contributions of every feature along random feature orderings.

    For each permutation a background row is drawn; the features are switched from the background
    value to x's value in permutation order and every switch is credited with the change of the output.

    Parameters:
        predict_fn (Callable): Maps an n x k matrix to n outputs.
        x (np.ndarray): Row to explain.
        background (np.ndarray): Rows that absent features are drawn from.
        n_permutations (int): Number of orderings.
        rng (np.random.Generator | int, optional): Random source or seed.

    Returns:
        np.ndarray: n_permutations x k contributions; each row sums to f(x) - f(background row).

    Raises:
        ValueError: If the background is empty or n_permutations < 1.
    """
    x = np.asarray(x, dtype=float).ravel()
    background = np.atleast_2d(np.asarray(background, dtype=float))
    if background.shape[0] == 0:
        raise ValueError("The background set is empty.")
    if background.shape[1] != len(x):
        raise ValueError(f"Background rows have {background.shape[1]} features, x has {len(x)}.")
    if n_permutations < 1:
        raise ValueError("At least one permutation is needed.")
    rng = np.random.default_rng(rng)
    k = len(x)

    orders = np.argsort(rng.random((n_permutations, k)), axis=1)
    drawn = background[rng.integers(0, len(background), size=n_permutations)]
    contributions = np.zeros((n_permutations, k))

    per_chunk = permutations_per_chunk(k)
    for start in range(0, n_permutations, per_chunk):
        order, base = orders[start:start + per_chunk], drawn[start:start + per_chunk]
        count = len(order)
        # row j of a path has the first j features of the ordering switched to x
        switched = np.zeros((count, k + 1, k), dtype=bool)
        ranks = np.argsort(order, axis=1)
        switched[:, 1:, :] = ranks[:, None, :] < np.arange(1, k + 1)[None, :, None]
        paths = np.where(switched, x[None, None, :], base[:, None, :])
        outputs = np.asarray(predict_fn(paths.reshape(-1, k)), dtype=float).reshape(count, k + 1)
        steps = np.diff(outputs, axis=1)
        np.put_along_axis(contributions[start:start + count], order, steps, axis=1)
    return contributions


def sampling_shap(predict_fn: Callable[[np.ndarray], np.ndarray], x: np.ndarray, background: np.ndarray,
                  n_permutations: int, rng: RandomLike = None) -> np.ndarray:
    """
    Monte-Carlo permutation estimate of the Shapley values of `predict_fn` at x, with absent features
    drawn from background rows. Unbiased; the variance shrinks as 1 / n_permutations.
    """
    return permutation_contributions(predict_fn, x, background, n_permutations, rng).mean(axis=0)


def sampling_shap_with_error(predict_fn: Callable[[np.ndarray], np.ndarray], x: np.ndarray, background: np.ndarray,
                             n_permutations: int, rng: RandomLike = None) -> tuple[np.ndarray, np.ndarray]:
    """
    Like `sampling_shap`, also returning the standard error of every estimate.
    """
    contributions = permutation_contributions(predict_fn, x, background, n_permutations, rng)
    if n_permutations == 1:
        return contributions[0], np.full(contributions.shape[1], np.inf)
    return contributions.mean(axis=0), contributions.std(axis=0, ddof=1) / np.sqrt(n_permutations)
