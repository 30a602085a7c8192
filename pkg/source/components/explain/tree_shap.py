import logging
from concurrent.futures import ThreadPoolExecutor

import numba
import numpy as np

from ..models.forest import ForestModel
from ..models.tree import DecisionTree

log = logging.getLogger(__name__)

ROWS_PER_TASK = 64


# extend the decision path with a fraction of zero and one extensions
@numba.jit(
    numba.types.void(
        numba.types.int32[:],
        numba.types.float64[:],
        numba.types.float64[:],
        numba.types.float64[:],
        numba.types.int64,
        numba.types.float64,
        numba.types.float64,
        numba.types.int64,
    ),
    nopython=True,
    nogil=True,
)
def _extend_path(features, zero_fractions, one_fractions, weights, depth, zero_fraction, one_fraction, feature):
    features[depth] = feature
    zero_fractions[depth] = zero_fraction
    one_fractions[depth] = one_fraction
    weights[depth] = 1.0 if depth == 0 else 0.0
    for i in range(depth - 1, -1, -1):
        weights[i + 1] += one_fraction * weights[i] * (i + 1) / (depth + 1)
        weights[i] = zero_fraction * weights[i] * (depth - i) / (depth + 1)


# undo the extension at `index`
@numba.jit(
    numba.types.void(
        numba.types.int32[:],
        numba.types.float64[:],
        numba.types.float64[:],
        numba.types.float64[:],
        numba.types.int64,
        numba.types.int64,
    ),
    nopython=True,
    nogil=True,
)
def _unwind_path(features, zero_fractions, one_fractions, weights, depth, index):
    one_fraction = one_fractions[index]
    zero_fraction = zero_fractions[index]
    next_one_portion = weights[depth]
    for i in range(depth - 1, -1, -1):
        if one_fraction != 0:
            tmp = weights[i]
            weights[i] = next_one_portion * (depth + 1) / ((i + 1) * one_fraction)
            next_one_portion = tmp - weights[i] * zero_fraction * (depth - i) / (depth + 1)
        else:
            weights[i] = weights[i] * (depth + 1) / (zero_fraction * (depth - i))
    for i in range(index, depth):
        features[i] = features[i + 1]
        zero_fractions[i] = zero_fractions[i + 1]
        one_fractions[i] = one_fractions[i + 1]


# total permutation weight of the path if the extension at `index` were undone
@numba.jit(
    numba.types.float64(
        numba.types.int32[:],
        numba.types.float64[:],
        numba.types.float64[:],
        numba.types.float64[:],
        numba.types.int64,
        numba.types.int64,
    ),
    nopython=True,
    nogil=True,
)
def _unwound_path_sum(features, zero_fractions, one_fractions, weights, depth, index):
    one_fraction = one_fractions[index]
    zero_fraction = zero_fractions[index]
    next_one_portion = weights[depth]
    total = 0.0
    for i in range(depth - 1, -1, -1):
        if one_fraction != 0:
            tmp = next_one_portion * (depth + 1) / ((i + 1) * one_fraction)
            total += tmp
            next_one_portion = weights[i] - tmp * zero_fraction * (depth - i) / (depth + 1)
        else:
            total += weights[i] / zero_fraction / ((depth - i) / (depth + 1))
    return total


@numba.jit(
    numba.types.void(
        numba.types.int32[:],
        numba.types.float64[:],
        numba.types.int32[:],
        numba.types.int32[:],
        numba.types.float64[:],
        numba.types.float64[:],
        numba.types.float64[:],
        numba.types.float64[:],
        numba.types.int64,
        numba.types.int64,
        numba.types.int32[:],
        numba.types.float64[:],
        numba.types.float64[:],
        numba.types.float64[:],
        numba.types.float64,
        numba.types.float64,
        numba.types.int64,
    ),
    nopython=True,
    nogil=True,
)
def _recurse(feature, threshold, left, right, leaf_value, cover, x, phi, node, depth,
             parent_features, parent_zero_fractions, parent_one_fractions, parent_weights,
             zero_fraction, one_fraction, split_feature):
    # each level works on its own copy of the path, stored after the parent's
    features = parent_features[depth + 1:]
    features[:depth + 1] = parent_features[:depth + 1]
    zero_fractions = parent_zero_fractions[depth + 1:]
    zero_fractions[:depth + 1] = parent_zero_fractions[:depth + 1]
    one_fractions = parent_one_fractions[depth + 1:]
    one_fractions[:depth + 1] = parent_one_fractions[:depth + 1]
    weights = parent_weights[depth + 1:]
    weights[:depth + 1] = parent_weights[:depth + 1]

    _extend_path(features, zero_fractions, one_fractions, weights, depth, zero_fraction, one_fraction, split_feature)

    if right[node] == -1:
        for i in range(1, depth + 1):
            w = _unwound_path_sum(features, zero_fractions, one_fractions, weights, depth, i)
            phi[features[i]] += w * (one_fractions[i] - zero_fractions[i]) * leaf_value[node]
        return

    index = feature[node]
    if x[index] <= threshold[node]:
        hot, cold = left[node], right[node]
    else:
        hot, cold = right[node], left[node]
    incoming_zero, incoming_one = 1.0, 1.0

    # a feature split on earlier in the path is undone and redone here
    path_index = 0
    while path_index <= depth:
        if features[path_index] == index:
            break
        path_index += 1
    if path_index != depth + 1:
        incoming_zero = zero_fractions[path_index]
        incoming_one = one_fractions[path_index]
        _unwind_path(features, zero_fractions, one_fractions, weights, depth, path_index)
        depth -= 1

    _recurse(feature, threshold, left, right, leaf_value, cover, x, phi, hot, depth + 1,
             features, zero_fractions, one_fractions, weights,
             cover[hot] / cover[node] * incoming_zero, incoming_one, index)
    _recurse(feature, threshold, left, right, leaf_value, cover, x, phi, cold, depth + 1,
             features, zero_fractions, one_fractions, weights,
             cover[cold] / cover[node] * incoming_zero, 0.0, index)


@numba.jit(
    numba.types.void(
        numba.types.float64[:, :],
        numba.types.int32[:],
        numba.types.float64[:],
        numba.types.int32[:],
        numba.types.int32[:],
        numba.types.float64[:],
        numba.types.float64[:],
        numba.types.int64[:],
        numba.types.int64,
        numba.types.float64[:, :],
    ),
    nopython=True,
    nogil=True,
)
def _forest_rows(X, feature, threshold, left, right, leaf_value, cover, offsets, max_depth, phi):
    size = (max_depth + 2) * (max_depth + 3) // 2
    path_features = np.zeros(size, dtype=np.int32)
    zero_fractions = np.zeros(size)
    one_fractions = np.zeros(size)
    weights = np.zeros(size)
    for row in range(X.shape[0]):
        for tree in range(len(offsets) - 1):
            start, end = offsets[tree], offsets[tree + 1]
            _recurse(feature[start:end], threshold[start:end], left[start:end], right[start:end],
                     leaf_value[start:end], cover[start:end], X[row], phi[row], 0, 0,
                     path_features, zero_fractions, one_fractions, weights, 1.0, 1.0, -1)


def node_expectations(tree: DecisionTree) -> np.ndarray:
    """
    H1 probability of every node: the leaf value at leaves, the cover-weighted mean of the children elsewhere.
    The root entry is the tree's expected output.
    """
    expectations = tree.value[:, 1].astype(float)
    for node in np.flatnonzero(~tree.is_leaf)[::-1]:
        left, right = tree.left[node], tree.right[node]
        expectations[node] = (tree.n_samples[left] * expectations[left] + tree.n_samples[right] * expectations[right]) \
            / (tree.n_samples[left] + tree.n_samples[right])
    return expectations


class TreeShapExplainer(object):
    """
    Exact path-dependent Shapley values of a forest's H1 probability.

    The expectation over absent features follows the trees: at a split on an absent feature both children
    are visited, weighted by the fraction of training rows (`n_samples`) that went each way. Attributions
    and the base value of the forest are the means over its trees.
    """

    def __init__(self, forest: ForestModel) -> None:
        trees = forest.trees
        self._forest = forest
        self._offsets = np.cumsum([0] + [tree.n_nodes for tree in trees]).astype(np.int64)
        self._feature = np.concatenate([tree.feature for tree in trees]).astype(np.int32)
        self._threshold = np.concatenate([tree.threshold for tree in trees]).astype(np.float64)
        self._left = np.concatenate([tree.left for tree in trees]).astype(np.int32)
        self._right = np.concatenate([tree.right for tree in trees]).astype(np.int32)
        self._leaf_value = np.concatenate([tree.value[:, 1] for tree in trees]).astype(np.float64)
        self._cover = np.concatenate([tree.n_samples for tree in trees]).astype(np.float64)
        self._max_depth = max(tree.depth for tree in trees)
        self._base_value = float(np.mean([node_expectations(tree)[0] for tree in trees]))

    @property
    def base_value(self) -> float:
        return self._base_value

    def _rows(self, X: np.ndarray) -> np.ndarray:
        phi = np.zeros(X.shape)
        _forest_rows(X, self._feature, self._threshold, self._left, self._right, self._leaf_value, self._cover,
                     self._offsets, self._max_depth, phi)
        return phi

    def shap_values(self, X: np.ndarray, jobs: int = 1) -> np.ndarray:
        """
        Parameters:
            X (np.ndarray): n x k rows (or a single row).
            jobs (int): Row blocks explained concurrently.

        Returns:
            np.ndarray: n x k attributions; base_value + row sum equals the forest's H1 probability.

        Raises:
            ValueError: If the rows do not have the forest's feature count.
        """
        X = self._forest.check_features(X)
        # splits compare float32 inputs, as in DecisionTree.apply
        X = np.ascontiguousarray(X.astype(np.float32).astype(np.float64))
        blocks = [X[start:start + ROWS_PER_TASK] for start in range(0, len(X), ROWS_PER_TASK)]
        with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
            parts = list(pool.map(self._rows, blocks))
        phi = np.concatenate(parts) if parts else np.zeros((0, X.shape[1]))
        return phi / len(self._forest.trees)


def tree_shap(forest: ForestModel, x: np.ndarray) -> np.ndarray:
    """
    Exact Shapley values of the forest's H1 probability for one row.

    Raises:
        ValueError: If `x` does not have the forest's feature count.
    """
    return TreeShapExplainer(forest).shap_values(np.asarray(x, dtype=float).reshape(1, -1))[0]
