import numpy as np
from scipy.special import comb

from ..models.forest import ForestModel
from ..models.tree import DecisionTree

MAX_FEATURES = 16


def subset_values(tree: DecisionTree, x: np.ndarray) -> np.ndarray:
    """
    Path-dependent expectation of the tree's H1 probability for every subset of known features.

    Subset S is encoded as the bit mask sum(2**j for j in S). At a split on a known feature the row's
    branch is taken; on an unknown feature both children count, weighted by their training rows.

    Returns:
        np.ndarray: 2**k values, one per subset.
    """
    k = tree.n_features
    masks = np.arange(2 ** k, dtype=np.int64)
    x = np.asarray(x, dtype=np.float32)
    values = np.tile(tree.value[:, 1].astype(float)[:, None], (1, len(masks)))
    for node in np.flatnonzero(~tree.is_leaf)[::-1]:
        feature, left, right = tree.feature[node], tree.left[node], tree.right[node]
        hot = left if x[feature] <= tree.threshold[node] else right
        averaged = (tree.n_samples[left] * values[left] + tree.n_samples[right] * values[right]) \
            / (tree.n_samples[left] + tree.n_samples[right])
        known = (masks >> feature) & 1 == 1
        values[node] = np.where(known, values[hot], averaged)
    return values[0]


def shapley_from_subsets(values: np.ndarray, k: int) -> np.ndarray:
    """
    Shapley values of a set function given on all 2**k subsets.
    """
    masks = np.arange(2 ** k, dtype=np.int64)
    sizes = np.array([bin(mask).count("1") for mask in masks])
    phi = np.zeros(k)
    for j in range(k):
        without = masks[(masks >> j) & 1 == 0]
        weights = 1.0 / (k * comb(k - 1, sizes[without]))
        phi[j] = np.sum(weights * (values[without | (1 << j)] - values[without]))
    return phi


def brute_force_shap(forest: ForestModel, x: np.ndarray) -> np.ndarray:
    """
    Shapley values of the forest's H1 probability by enumerating all feature subsets. Exponential in
    the feature count; used to check the exact tree algorithm.

    Raises:
        ValueError: If `x` has the wrong length or the forest has more than 16 features.
    """
    x = forest.check_features(x)[0]
    k = forest.n_features
    if k > MAX_FEATURES:
        raise ValueError(f"Brute-force Shapley values are limited to {MAX_FEATURES} features, got {k}.")
    values = np.mean([subset_values(tree, x) for tree in forest.trees], axis=0)
    return shapley_from_subsets(values, k)
