import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from sklearn.metrics import f1_score
from sklearn.model_selection import ParameterGrid, ParameterSampler, StratifiedKFold

from ..errors import ConfigurationError
from ..event import Event
from .forest import fit_forest, forest_hyperparams
from .i_classifier import IClassifier
from .training import NetworkTrainer, TemporalLayout, training_config

log = logging.getLogger(__name__)

FAMILIES = ("rf", "et", "mlp", "fusion")
DEFAULT_FOLDS = 3
DEFAULT_BUDGET = 20

DEFAULT_FOREST_SPACE = {
    "n_trees": [100, 200, 300, 400, 500],
    "max_features": ["sqrt(k)", "log2(k)", "0.3*k"],
    "max_depth": [8, 16, 24, 32, None],
    "min_samples_split": [2, 5, 10, 20],
    "min_samples_leaf": [1, 2, 5, 10],
    "bootstrap": [True, False],
}
DEFAULT_NETWORK_SPACE = {
    "learning_rate": [0.003, 0.01, 0.03],
    "momentum": [0.8, 0.9, 0.95],
    "dropout": [0.0, 0.2, 0.4],
    "batch_size": [128, 256, 512],
    "hidden": [[128, 64, 32], [256, 128, 64], [64, 64, 64]],
}


def default_space(family: str) -> dict:
    return dict(DEFAULT_FOREST_SPACE if family in ("rf", "et") else DEFAULT_NETWORK_SPACE)


def fit_family(family: str, X: np.ndarray, y: np.ndarray, params: dict, seed: int = 0,
               layout: Optional[TemporalLayout] = None, jobs: int = 1, trainer_hook=None) -> IClassifier:
    """
    Fits one model of a family with the given hyperparameters.

    Parameters:
        family (str): "rf", "et", "mlp" or "fusion".
        X (np.ndarray): Early-fusion rows.
        y (np.ndarray): Labels.
        params (dict): Hyperparameters of the family.
        seed (int): Seed.
        layout (TemporalLayout, optional): Temporal block shape, needed by "fusion".
        jobs (int): Trees fitted concurrently.
        trainer_hook (Callable, optional): Subscribed to `epoch_completed` of network trainers.

    Raises:
        ConfigurationError: If the family or a hyperparameter is invalid.
    """
    if family in ("rf", "et"):
        return fit_forest(X, y, forest_hyperparams(params), family, seed, jobs)
    if family in ("mlp", "fusion"):
        trainer = NetworkTrainer(family, training_config(params), seed, layout if family == "fusion" else None)
        if trainer_hook is not None:
            trainer.epoch_completed += trainer_hook
        return trainer.fit(X, y)
    raise ConfigurationError(f"Model error: unknown family '{family}', expected one of {list(FAMILIES)}.")


def fold_partition(y: np.ndarray, folds: int = DEFAULT_FOLDS, seed: int = 0) -> list[tuple[np.ndarray, np.ndarray]]:
    """
    Stratified, shuffled partition of the training rows into `folds` disjoint validation folds whose
    sizes differ by at most one.

    Returns:
        list: (fit rows, validation rows) per fold.
    """
    splitter = StratifiedKFold(n_splits=folds, shuffle=True, random_state=seed)
    return [(fit_rows, validation_rows) for fit_rows, validation_rows in splitter.split(np.zeros(len(y)), y)]


@dataclass
class SearchResult:
    """
    Outcome of a randomized search; `candidates` holds (hyperparameters, validation F1 per fold).
    """
    family: str
    best_params: dict
    best_score: float
    model: IClassifier = field(repr=False)
    candidates: list = field(default_factory=list)


class RandomizedSearch(object):
    """
    Randomized hyperparameter search with stratified k-fold cross-validation.

    Configurations are sampled uniformly from the space; each is scored by the mean validation F1 of H1
    over the folds, the best one (earliest on ties) is refitted on all training rows.
    `candidate_evaluated(index, params, score)` is raised after every configuration.
    """

    def __init__(self, family: str, space: dict, budget: int = DEFAULT_BUDGET, folds: int = DEFAULT_FOLDS,
                 seed: int = 0, layout: Optional[TemporalLayout] = None, jobs: int = 1) -> None:
        if family not in FAMILIES:
            raise ConfigurationError(f"Model error: unknown family '{family}', expected one of {list(FAMILIES)}.")
        if not space or not all(isinstance(values, list) and values for values in space.values()):
            raise ConfigurationError("Model error: the search space must map hyperparameters to non-empty lists.")
        if not isinstance(budget, int) or budget < 1:
            raise ConfigurationError("Model error: the search budget must be a positive integer.")
        if folds < 2:
            raise ConfigurationError("Model error: cross-validation needs at least 2 folds.")
        self._family = family
        self._space = space
        self._budget = budget
        self._folds = folds
        self._seed = seed
        self._layout = layout
        self._jobs = jobs
        self.candidate_evaluated = Event()

    def sample(self) -> list[dict]:
        """
        Configurations to evaluate; all of them if the space holds no more than the budget.
        """
        count = min(self._budget, len(ParameterGrid(self._space)))
        sampled = ParameterSampler(self._space, n_iter=count, random_state=self._seed)
        return [dict(sorted(params.items())) for params in sampled]

    def run(self, X: np.ndarray, y: np.ndarray) -> SearchResult:
        X, y = np.asarray(X, dtype=float), np.asarray(y).astype(np.int64)
        partition = fold_partition(y, self._folds, self._seed)
        candidates = []
        best_index, best_score = 0, -1.0
        for index, params in enumerate(self.sample()):
            scores = []
            for fit_rows, validation_rows in partition:
                model = fit_family(self._family, X[fit_rows], y[fit_rows], params, self._seed, self._layout, self._jobs)
                prediction = model.predict(X[validation_rows])
                scores.append(float(f1_score(y[validation_rows], prediction, pos_label=1, zero_division=0.0)))
            score = float(np.mean(scores))
            candidates.append((params, scores))
            log.info("%s candidate %d: validation F1(H1) %.4f with %s", self._family, index, score, params)
            self.candidate_evaluated(index, params, score)
            if score > best_score:
                best_index, best_score = index, score

        best_params = candidates[best_index][0]
        model = fit_family(self._family, X, y, best_params, self._seed, self._layout, self._jobs)
        return SearchResult(self._family, best_params, best_score, model, candidates)


def cross_validate(family: str, X: np.ndarray, y: np.ndarray, search_space: dict, budget: int = DEFAULT_BUDGET,
                   seed: int = 0, layout: Optional[TemporalLayout] = None, jobs: int = 1) -> SearchResult:
    """
    Samples `budget` configurations, scores each by 3-fold cross-validated F1 of H1 on the training rows
    and refits the best one on all of them.

    Raises:
        ConfigurationError: If the space is empty or the budget is not positive.
    """
    return RandomizedSearch(family, search_space, budget, DEFAULT_FOLDS, seed, layout, jobs).run(X, y)
