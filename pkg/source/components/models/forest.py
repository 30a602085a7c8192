import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields
from enum import Enum
from typing import Optional, Sequence, Union

import numpy as np
from sklearn.tree import DecisionTreeClassifier, ExtraTreeClassifier
from sklearn.utils.class_weight import compute_class_weight

from ..errors import ConfigurationError
from ..evaluate import evaluate_count
from .i_classifier import IClassifier
from .tree import DecisionTree

log = logging.getLogger(__name__)


class ForestVariant(Enum):
    RF = "rf"
    ET = "et"


@dataclass(frozen=True)
class ForestHyperparams:
    """
    `max_features` may be an expression of the feature count k, e.g. "sqrt(k)", "log2(k)" or "0.3*k".
    `max_depth` None grows trees until leaves are pure; 0 gives single-leaf trees.
    `class_weight` is "balanced" (inverse class frequency) or "none".
    """
    n_trees: int = 100
    max_features: Union[int, float, str] = "sqrt(k)"
    max_depth: Optional[int] = None
    min_samples_split: int = 2
    min_samples_leaf: int = 1
    bootstrap: bool = True
    class_weight: str = "balanced"

    def as_dict(self) -> dict:
        return {item.name: getattr(self, item.name) for item in fields(self)}


def forest_hyperparams(params: dict) -> ForestHyperparams:
    """
    Validates forest hyperparameters.

    Raises:
        ConfigurationError: If a key is unknown or a value is out of range.
    """
    known = {item.name for item in fields(ForestHyperparams)}
    unknown = set(params) - known
    if unknown:
        raise ConfigurationError(f"Forest error: unknown hyperparameters {sorted(unknown)}.")
    hyperparams = ForestHyperparams(**params)
    if not isinstance(hyperparams.n_trees, int) or hyperparams.n_trees < 1:
        raise ConfigurationError("Forest error: 'n_trees' must be a positive integer.")
    if hyperparams.max_depth is not None and (not isinstance(hyperparams.max_depth, int) or hyperparams.max_depth < 0):
        raise ConfigurationError("Forest error: 'max_depth' must be a nonnegative integer or null.")
    if not isinstance(hyperparams.min_samples_split, int) or hyperparams.min_samples_split < 2:
        raise ConfigurationError("Forest error: 'min_samples_split' must be an integer >= 2.")
    if not isinstance(hyperparams.min_samples_leaf, int) or hyperparams.min_samples_leaf < 1:
        raise ConfigurationError("Forest error: 'min_samples_leaf' must be a positive integer.")
    if hyperparams.class_weight not in ("balanced", "none"):
        raise ConfigurationError("Forest error: 'class_weight' must be 'balanced' or 'none'.")
    return hyperparams


def class_weights_for(y: np.ndarray, mode: str) -> np.ndarray:
    if mode == "none":
        return np.ones(2)
    return compute_class_weight("balanced", classes=np.array([0, 1]), y=y)


def tree_rng(seed: int, index: int) -> np.random.Generator:
    """
    Random stream of tree `index`; independent of how many trees are fitted and in which order.
    """
    return np.random.default_rng(np.random.SeedSequence([seed, index]))


class ForestModel(IClassifier):
    """
    Random forest or extra-trees ensemble. The H1 probability is the mean of the trees' probabilities.
    """

    def __init__(self, trees: Sequence[DecisionTree], variant: ForestVariant, hyperparams: ForestHyperparams,
                 class_weights: np.ndarray) -> None:
        if len(trees) == 0:
            raise ValueError("A forest needs at least one tree.")
        widths = {tree.n_features for tree in trees}
        if len(widths) != 1:
            raise ValueError(f"Trees disagree on the feature count: {sorted(widths)}.")
        self._trees = tuple(trees)
        self._variant = ForestVariant(variant)
        self._hyperparams = hyperparams
        self._class_weights = np.asarray(class_weights, dtype=float)

    @property
    def kind(self) -> str:
        return self._variant.value

    @property
    def variant(self) -> ForestVariant:
        return self._variant

    @property
    def n_features(self) -> int:
        return self._trees[0].n_features

    @property
    def trees(self) -> tuple[DecisionTree, ...]:
        return self._trees

    @property
    def hyperparams(self) -> ForestHyperparams:
        return self._hyperparams

    @property
    def class_weights(self) -> np.ndarray:
        return self._class_weights

    def with_trees(self, trees: Sequence[DecisionTree]) -> "ForestModel":
        return ForestModel(trees, self._variant, self._hyperparams, self._class_weights)

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        X = self.check_features(X)
        total = np.zeros((len(X), 2))
        for tree in self._trees:
            total += tree.value[tree.apply(X)]
        return total / len(self._trees)


def _fit_tree(X: np.ndarray, y: np.ndarray, index: int, seed: int, variant: ForestVariant,
              hyperparams: ForestHyperparams, max_features: int, class_weights: np.ndarray) -> DecisionTree:
    rng = tree_rng(seed, index)
    rows = rng.integers(0, len(X), size=len(X)) if hyperparams.bootstrap else np.arange(len(X))
    X_tree, y_tree = X[rows], y[rows]
    if hyperparams.max_depth == 0:
        return DecisionTree.leaf(y_tree, class_weights, X.shape[1])

    estimator_type = DecisionTreeClassifier if variant == ForestVariant.RF else ExtraTreeClassifier
    estimator = estimator_type(
        criterion="gini",
        max_features=max_features,
        max_depth=hyperparams.max_depth,
        min_samples_split=hyperparams.min_samples_split,
        min_samples_leaf=hyperparams.min_samples_leaf,
        class_weight={0: float(class_weights[0]), 1: float(class_weights[1])},
        random_state=int(rng.integers(2 ** 31 - 1)),
    )
    estimator.fit(X_tree, y_tree)
    return DecisionTree.from_estimator(estimator, X_tree, y_tree)


def fit_forest(X_train: np.ndarray, y_train: np.ndarray, hyperparams: Union[ForestHyperparams, dict],
               variant: Union[ForestVariant, str] = ForestVariant.RF, seed: int = 0, jobs: int = 1) -> ForestModel:
    """
    Grows a random forest (best split among the sampled features) or an extra-trees ensemble (one uniformly
    random threshold per sampled feature) with class-weighted Gini impurity.

    Parameters:
        X_train (np.ndarray): n x k rows without missing values.
        y_train (np.ndarray): 0/1 labels.
        hyperparams (ForestHyperparams | dict): Hyperparameters; expressions of k are evaluated here.
        variant (ForestVariant | str): "rf" or "et".
        seed (int): Seed; tree i uses the stream derived from (seed, i).
        jobs (int): Trees fitted concurrently. The result does not depend on it.

    Returns:
        ForestModel: Fitted ensemble.

    Raises:
        ValueError: If the training labels contain a single class or the rows have missing values.
    """
    if isinstance(hyperparams, dict):
        hyperparams = forest_hyperparams(hyperparams)
    variant = ForestVariant(variant)
    X = np.asarray(X_train, dtype=float)
    y = np.asarray(y_train).astype(np.int64)
    if np.isnan(X).any():
        raise ValueError("Forest training rows must not contain missing values.")
    if len(np.unique(y)) != 2:
        raise ValueError("Forest training needs both classes in the labels.")

    k = X.shape[1]
    max_features = min(k, evaluate_count(hyperparams.max_features, {"k": k}))
    class_weights = class_weights_for(y, hyperparams.class_weight)
    log.debug("Fitting %s with %d trees, max_features %d on %d x %d rows",
              variant.value, hyperparams.n_trees, max_features, len(X), k)

    def fit_one(index: int) -> DecisionTree:
        return _fit_tree(X, y, index, seed, variant, hyperparams, max_features, class_weights)

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        trees = list(pool.map(fit_one, range(hyperparams.n_trees)))
    return ForestModel(trees, variant, hyperparams, class_weights)
