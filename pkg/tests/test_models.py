import math

import numpy as np
import pytest
import torch

from components.errors import ConfigurationError, NumericalError
from components.models.container import load_model, save_model
from components.models.evaluation import (
    EvalReport, aggregate_over_seeds, evaluate, format_table3, metrics_from_predictions,
)
from components.models.forest import ForestHyperparams, fit_forest, forest_hyperparams
from components.models.i_classifier import IClassifier
from components.models.network import class_weighted_loss, default_class_weights, weighted_sampler
from components.models.selection import RandomizedSearch, cross_validate, fit_family, fold_partition
from components.models.training import (
    NetworkTrainer, TemporalLayout, TrainingConfig, check_gradients, fit_fusion, fit_mlp, training_config,
)


class ConstantModel(IClassifier):
    def __init__(self, probabilities, k=2):
        self._probabilities = np.asarray(probabilities, dtype=float)
        self._k = k

    @property
    def kind(self):
        return "constant"

    @property
    def n_features(self):
        return self._k

    def predict_proba(self, X):
        X = self.check_features(X)
        return np.tile(self._probabilities, (len(X), 1))


def separable(n=60, seed=0):
    rng = np.random.default_rng(seed)
    y = (np.arange(n) % 5 == 0).astype(int)
    X = rng.normal(size=(n, 2)) * 0.5 + 4.0 * y[:, None]
    return X, y


XOR_X = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
XOR_Y = np.array([0, 1, 1, 0])


def test_forest_fits_separable_data():
    X, y = separable()
    forest = fit_forest(X, y, ForestHyperparams(n_trees=10), "rf", seed=1)

    assert (forest.predict(X) == y).all()
    assert len(forest.trees) == 10
    assert forest.kind == "rf"


@pytest.mark.parametrize("variant", ["rf", "et"])
def test_forest_rejects_single_class(variant):
    X, _ = separable()
    with pytest.raises(ValueError, match="both classes"):
        fit_forest(X, np.zeros(len(X), dtype=int), ForestHyperparams(n_trees=3), variant)


def test_forest_solves_xor_only_with_depth():
    deep = fit_forest(XOR_X, XOR_Y, ForestHyperparams(n_trees=10, max_features=2, bootstrap=False), "rf")
    stump = fit_forest(XOR_X, XOR_Y, ForestHyperparams(n_trees=10, max_features=2, bootstrap=False, max_depth=1), "rf")

    assert (deep.predict(XOR_X) == XOR_Y).mean() == 1.0
    assert (stump.predict(XOR_X) == XOR_Y).mean() <= 0.75


def _weighted_gini(left, right):
    def gini(labels):
        p = np.mean(labels)
        return 1.0 - p ** 2 - (1 - p) ** 2
    n = len(left) + len(right)
    return len(left) / n * gini(left) + len(right) / n * gini(right)


def test_random_forest_split_is_the_best_gini_split():
    x = np.array([0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0])
    y = np.array([0, 0, 0, 0, 1, 1, 0, 1, 1, 1])
    midpoints = (x[:-1] + x[1:]) / 2
    best = min(midpoints, key=lambda threshold: _weighted_gini(y[x <= threshold], y[x > threshold]))

    forest = fit_forest(x[:, None], y, ForestHyperparams(n_trees=1, max_features=1, max_depth=1, bootstrap=False,
                                                       class_weight="none"), "rf")

    assert best == 3.5
    assert forest.trees[0].threshold[0] == best


def test_extra_trees_draw_random_thresholds():
    X, y = separable(n=80)
    forest = fit_forest(X, y, ForestHyperparams(n_trees=5, max_depth=1, bootstrap=False), "et", seed=3)
    thresholds = {tree.threshold[0] for tree in forest.trees}

    assert forest.kind == "et"
    assert len(thresholds) > 1


def test_forest_is_deterministic_and_independent_of_jobs():
    X, y = separable(n=120, seed=4)
    first = fit_forest(X, y, ForestHyperparams(n_trees=8), "rf", seed=9, jobs=1)
    second = fit_forest(X, y, ForestHyperparams(n_trees=8), "rf", seed=9, jobs=4)

    for a, b in zip(first.trees, second.trees):
        for name, array in a.arrays().items():
            np.testing.assert_array_equal(array, b.arrays()[name])


def test_forest_probability_is_the_mean_of_its_trees():
    X, y = separable(n=100, seed=6)
    forest = fit_forest(X, y, ForestHyperparams(n_trees=6, max_depth=3), "rf", seed=2)
    per_tree = np.stack([tree.predict_proba(X) for tree in forest.trees])
    duplicated = forest.with_trees(forest.trees + (forest.trees[0], forest.trees[0]))

    np.testing.assert_allclose(forest.predict_proba(X), per_tree.mean(axis=0), atol=1e-12)
    np.testing.assert_allclose(duplicated.predict_proba(X), (per_tree.sum(axis=0) + 2 * per_tree[0]) / 8, atol=1e-12)


def test_tree_invariants():
    X, y = separable(n=100, seed=8)
    tree = fit_forest(X, y, ForestHyperparams(n_trees=1), "rf", seed=0).trees[0]
    internal = ~tree.is_leaf

    np.testing.assert_allclose(tree.value[tree.is_leaf].sum(axis=1), 1.0)
    assert (tree.class_counts.sum(axis=1) == tree.n_samples).all()
    assert tree.n_samples[0] == len(X)
    assert (tree.n_samples[tree.left[internal]] + tree.n_samples[tree.right[internal]]
            == tree.n_samples[internal]).all()
    with pytest.raises(ValueError, match="Expected 2 features"):
        tree.predict_proba(np.zeros((1, 3)))


def test_zero_depth_trees_are_leaves():
    X, y = separable()
    forest = fit_forest(X, y, ForestHyperparams(n_trees=2, max_depth=0, bootstrap=False), "rf")

    assert all(tree.n_nodes == 1 for tree in forest.trees)
    np.testing.assert_allclose(forest.predict_proba(X), 0.5)


@pytest.mark.parametrize("params, message", [
    ({"n_trees": 0}, "n_trees"),
    ({"max_depth": -1}, "max_depth"),
    ({"min_samples_split": 1}, "min_samples_split"),
    ({"class_weight": "inverse"}, "class_weight"),
    ({"trees": 3}, "unknown"),
])
def test_invalid_forest_hyperparams(params, message):
    with pytest.raises(ConfigurationError, match=message):
        forest_hyperparams(params)


def test_weighted_sampler_balances_classes():
    labels = np.array([0] * 87 + [1] * 13)
    draws = np.array(list(weighted_sampler(labels, seed=1, num_samples=100000)))

    assert abs(labels[draws].mean() - 0.5) <= 0.01


def test_weighted_sampler_on_balanced_labels_is_uniform():
    labels = np.arange(100) % 2
    counts = np.bincount(list(weighted_sampler(labels, seed=2, num_samples=100000)), minlength=100)

    assert len(list(weighted_sampler(labels))) == 100
    assert counts.min() > 800 and counts.max() < 1200


def test_weighted_sampler_is_deterministic():
    labels = np.array([0] * 9 + [1])

    assert list(weighted_sampler(labels, seed=5)) == list(weighted_sampler(labels, seed=5))
    with pytest.raises(ValueError):
        weighted_sampler(np.zeros(10, dtype=int))


def test_class_weighted_loss():
    uniform = torch.zeros((2, 2))
    labels = torch.tensor([0, 1])
    ones = torch.ones(2)

    assert class_weighted_loss(uniform, labels, ones).item() == pytest.approx(math.log(2))
    assert class_weighted_loss(torch.tensor([[0.0, 60.0]]), torch.tensor([1]), ones).item() == pytest.approx(0.0, abs=1e-12)
    logits = torch.tensor([[0.3, -1.2], [2.0, 0.5]])
    assert class_weighted_loss(logits, labels, 2 * ones).item() == pytest.approx(
        2 * class_weighted_loss(logits, labels, ones).item())
    with pytest.raises(NumericalError):
        class_weighted_loss(torch.tensor([[float("nan"), 0.0]]), torch.tensor([0]), ones)


def test_default_class_weights():
    np.testing.assert_allclose(default_class_weights([0, 0, 0, 1]), [0.5, 1.5])


def linearly_separable(n=300, k=4, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, k))
    score = X[:, 0] + X[:, 1]
    keep = np.abs(score) > 0.5
    return X[keep].astype(np.float32), (score[keep] > 0).astype(int)


def test_mlp_learns_separable_data():
    X, y = linearly_separable()
    config = TrainingConfig(hidden=(16,), dropout=0.0, batch_size=32, learning_rate=0.05, epochs=100, lr_step=50)
    model = fit_mlp(X, y, config, seed=0)
    prediction = model.predict(X)
    f1 = metrics_from_predictions(y, prediction)[1, 2]

    assert f1 >= 0.99
    assert len(model.loss_curve) == 100


def test_zero_epochs_give_the_initial_network():
    X, y = linearly_separable(n=50)
    first = fit_mlp(X, y, TrainingConfig(hidden=(8,), epochs=0), seed=3)
    second = fit_mlp(X, y, TrainingConfig(hidden=(8,), epochs=0), seed=3)

    assert first.loss_curve == ()
    np.testing.assert_array_equal(first.predict_proba(X), second.predict_proba(X))


def test_network_training_is_deterministic():
    X, y = linearly_separable(n=120)
    config = TrainingConfig(hidden=(8, 4), batch_size=16, epochs=3)
    first, second = fit_mlp(X, y, config, seed=11), fit_mlp(X, y, config, seed=11)

    for (name, a), (_, b) in zip(first.net.state_dict().items(), second.net.state_dict().items()):
        assert torch.equal(a, b), name


def test_dropout_is_off_at_inference():
    X, y = linearly_separable(n=80)
    model = fit_mlp(X, y, TrainingConfig(hidden=(16, 16), dropout=0.5, epochs=2, batch_size=16), seed=1)

    np.testing.assert_array_equal(model.predict_proba(X), model.predict_proba(X))


def test_epoch_events():
    X, y = linearly_separable(n=80)
    seen = []
    trainer = NetworkTrainer("mlp", TrainingConfig(hidden=(4,), epochs=3, batch_size=16), seed=0)
    trainer.epoch_completed += lambda epoch, loss: seen.append((epoch, loss))
    model = trainer.fit(X, y)

    assert [epoch for epoch, _ in seen] == [1, 2, 3]
    assert [loss for _, loss in seen] == list(model.loss_curve)


def test_divergence_names_the_epoch():
    X, y = linearly_separable(n=40)
    X[:, 0] = np.inf

    with pytest.raises(NumericalError) as info:
        fit_mlp(X, y, TrainingConfig(hidden=(4,), epochs=3), seed=0)
    assert info.value.epoch == 1
    assert "epoch 1" in str(info.value)


def test_mlp_gradients_match_finite_differences():
    X, y = linearly_separable(n=40, k=6, seed=2)
    model = fit_mlp(X, y, TrainingConfig(hidden=(5, 4, 3), epochs=1, batch_size=8), seed=4)

    errors = check_gradients(model, X[:10], y[:10], weights=[1.0, 3.0])

    assert set(errors) == {name for name, _ in model.net.named_parameters()}
    assert max(errors.values()) < 1e-4


def test_fusion_gradients_match_finite_differences():
    rng = np.random.default_rng(5)
    n, m, t, h = 30, 3, 7, 4
    X1, X2 = rng.normal(size=(n, h)), rng.normal(size=(n, m, t))
    y = (np.arange(n) % 3 == 0).astype(int)
    config = TrainingConfig(conv_channels=(4, 3), tabular_hidden=(5,), merge_hidden=(6,), epochs=1, batch_size=8)
    model = fit_fusion(X1, X2, y, config, seed=1)
    X = np.concatenate([X2.reshape(n, -1), X1], axis=1)

    errors = check_gradients(model, X[:10], y[:10])

    assert any(name.startswith("temporal") for name in errors)
    assert max(errors.values()) < 1e-4
    assert model.net.merge_dim == 5 + 3 * 2


def test_fusion_convolves_along_time_only():
    rng = np.random.default_rng(6)
    X1, X2 = rng.normal(size=(20, 2)), rng.normal(size=(20, 4, 17))
    y = (np.arange(20) % 2).astype(int)
    model = fit_fusion(X1, X2, y, TrainingConfig(conv_channels=(8, 8), epochs=0), seed=0)
    convolutions = [layer for layer in model.net.temporal if isinstance(layer, torch.nn.Conv1d)]

    assert convolutions[0].in_channels == 4
    assert model.n_features == 4 * 17 + 2
    assert model.predict_proba(np.concatenate([X2.reshape(20, -1), X1], axis=1)).shape == (20, 2)


@pytest.mark.parametrize("params, message", [
    ({"dropout": 1.0}, "dropout"),
    ({"hidden": [16, 0]}, "hidden"),
    ({"kernel_size": 2}, "kernel_size"),
    ({"epochs": -1}, "epochs"),
    ({"optimizer": "adam"}, "unknown"),
])
def test_invalid_training_config(params, message):
    with pytest.raises(ConfigurationError, match=message):
        training_config(params)


def test_fold_partition_is_a_balanced_disjoint_cover():
    y = np.array([1] * 13 + [0] * 87)
    folds = fold_partition(y, 3, seed=0)
    validation = [rows for _, rows in folds]
    sizes = [len(rows) for rows in validation]

    assert max(sizes) - min(sizes) <= 1
    assert sorted(np.concatenate(validation).tolist()) == list(range(100))
    for fit_rows, rows in folds:
        assert not set(fit_rows) & set(rows)


def test_budget_one_is_a_single_fit():
    X, y = separable(n=90, seed=2)
    space = {"n_trees": [5, 7], "max_depth": [2, 3]}

    search = RandomizedSearch("rf", space, budget=1, seed=4)
    params = search.sample()[0]
    result = search.run(X, y)
    direct = fit_family("rf", X, y, params, seed=4)

    assert result.best_params == params
    assert len(result.candidates) == 1
    np.testing.assert_array_equal(result.model.predict_proba(X), direct.predict_proba(X))


def test_search_picks_the_dominant_configuration():
    X, y = separable(n=90, seed=3)
    scores = []
    search = RandomizedSearch("rf", {"max_depth": [0, None], "n_trees": [5], "bootstrap": [False]}, budget=5)
    search.candidate_evaluated += lambda index, params, score: scores.append(score)

    result = search.run(X, y)

    assert result.best_params["max_depth"] is None
    assert result.best_score == pytest.approx(1.0)
    assert len(scores) == 2 and min(scores) < 0.5


@pytest.mark.parametrize("space, budget", [({}, 3), ({"n_trees": []}, 3), ({"n_trees": [5]}, 0)])
def test_invalid_search(space, budget):
    X, y = separable()
    with pytest.raises(ConfigurationError):
        cross_validate("rf", X, y, space, budget)


def test_evaluate_perfect_and_constant_models(caplog):
    y = np.array([0] * 87 + [1] * 13)
    X = np.zeros((100, 2))
    perfect = evaluate(ConstantModel([0.0, 1.0]), X[y == 1], y[y == 1])

    with caplog.at_level("WARNING"):
        majority = evaluate(ConstantModel([0.9, 0.1]), X, y, scenario="gp", tag="majority")

    assert perfect.value("H1", "f1") == 1.0
    assert majority.value("H0", "recall") == 1.0
    assert majority.value("H1", "recall") == 0.0
    assert majority.value("H1", "precision") == 0.0
    assert majority.scenario == "gp" and majority.model == "majority"
    assert "predicts no hospitalization" in caplog.text


def test_f1_is_the_harmonic_mean():
    rng = np.random.default_rng(0)
    y, prediction = rng.integers(0, 2, 200), rng.integers(0, 2, 200)
    metrics = metrics_from_predictions(y, prediction)

    for precision, recall, f1 in metrics:
        assert f1 == pytest.approx(2 * precision * recall / (precision + recall))


def report(model, scenario, value):
    return EvalReport(model, scenario, np.full((2, 3), value), np.zeros((2, 3)))


def test_aggregate_over_seeds():
    aggregated = aggregate_over_seeds([report("rf", "all", 0.6), report("rf", "all", 0.8)])

    assert aggregated.value("H1", "f1") == pytest.approx(0.7)
    np.testing.assert_allclose(aggregated.std, 0.1)
    assert aggregated.n_seeds == 2
    with pytest.raises(ValueError):
        aggregate_over_seeds([report("rf", "all", 0.6), report("et", "all", 0.8)])


def test_eval_report_dict_round_trip():
    original = aggregate_over_seeds([report("mlp", "one-day-before", 0.25), report("mlp", "one-day-before", 0.75)])

    assert EvalReport.from_dict(original.as_dict()).as_dict() == original.as_dict()


def test_table3_layout():
    reports = [report(model, scenario, 0.5) for model in ("rf", "et", "mlp", "fusion")
               for scenario in ("all", "gp", "one-day-before")]
    lines = format_table3(reports).splitlines()

    assert lines[0].split("\t") == ["model", "P(H0)", "R(H0)", "F1(H0)", "P(H1)", "R(H1)", "F1(H1)"]
    assert len(lines) == 5
    assert lines[1].split("\t")[1] == "0.50/0.50/0.50"
    assert format_table3([report("rf", "all", 0.5)]).splitlines()[1].split("\t")[1] == "0.50/-/-"


@pytest.mark.parametrize("family", ["rf", "et", "mlp", "fusion"])
def test_model_container_round_trip(tmp_path, family):
    rng = np.random.default_rng(1)
    X = rng.normal(size=(60, 3 * 5 + 2))
    y = (np.arange(60) % 4 == 0).astype(int)
    params = {"n_trees": 4, "max_depth": 3} if family in ("rf", "et") else {"epochs": 1, "batch_size": 16, "hidden": [6]}
    model = fit_family(family, X, y, params, seed=2, layout=TemporalLayout(3, 5))

    save_model(model, tmp_path / "a.model")
    loaded = load_model(tmp_path / "a.model")
    save_model(loaded, tmp_path / "b.model")

    assert loaded.kind == family
    np.testing.assert_array_equal(loaded.predict_proba(X), model.predict_proba(X))
    assert (tmp_path / "a.model").read_bytes() == (tmp_path / "b.model").read_bytes()


def test_truncated_model_container(tmp_path):
    X, y = separable()
    save_model(fit_forest(X, y, ForestHyperparams(n_trees=2)), tmp_path / "forest.model")
    data = (tmp_path / "forest.model").read_bytes()
    (tmp_path / "forest.model").write_bytes(data[:-5])

    with pytest.raises(ConfigurationError, match="truncated"):
        load_model(tmp_path / "forest.model")
