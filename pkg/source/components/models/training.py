import copy
import logging
import math
from dataclasses import dataclass, fields
from typing import Optional, Sequence, Union

import numpy as np
import torch
from torch.utils.data import DataLoader, RandomSampler, TensorDataset

from ..errors import ConfigurationError, NumericalError
from ..event import Event
from .network import (
    FusionNet, MlpNet, NetworkModel, class_weighted_loss, default_class_weights, weighted_sampler,
)

log = logging.getLogger(__name__)

SMOOTHING_WINDOW = 3


@dataclass(frozen=True)
class TrainingConfig:
    """
    Architecture and optimizer settings of the networks.

    `hidden` are the dense widths of the MLP. The fusion network uses `conv_channels` and `kernel_size`
    for the temporal branch, `tabular_hidden` for the tabular branch and `merge_hidden` after the
    concatenation. The learning rate is multiplied by `lr_factor` every `lr_step` epochs.
    `class_weights` is "balanced" (inverse frequency of the classes in the batches the loss sees,
    uniform when sampling is weighted) or "none".
    """
    hidden: tuple = (128, 64, 32)
    dropout: float = 0.2
    batch_size: int = 256
    momentum: float = 0.9
    learning_rate: float = 0.01
    lr_step: int = 10
    lr_factor: float = 0.5
    epochs: int = 30
    weighted_sampling: bool = True
    class_weights: str = "balanced"
    conv_channels: tuple = (32, 32)
    kernel_size: int = 3
    tabular_hidden: tuple = (64,)
    merge_hidden: tuple = (64,)

    def as_dict(self) -> dict:
        values = {item.name: getattr(self, item.name) for item in fields(self)}
        return {key: list(value) if isinstance(value, tuple) else value for key, value in values.items()}


def training_config(params: dict) -> TrainingConfig:
    """
    Validates network hyperparameters.

    Raises:
        ConfigurationError: If a key is unknown or a value is out of range.
    """
    known = {item.name for item in fields(TrainingConfig)}
    unknown = set(params) - known
    if unknown:
        raise ConfigurationError(f"Network error: unknown hyperparameters {sorted(unknown)}.")
    params = {key: tuple(value) if isinstance(value, list) else value for key, value in params.items()}
    config = TrainingConfig(**params)

    for key in ("hidden", "conv_channels", "tabular_hidden", "merge_hidden"):
        widths = getattr(config, key)
        if not all(isinstance(width, int) and width > 0 for width in widths):
            raise ConfigurationError(f"Network error: '{key}' must be a list of positive integers.")
    if not config.conv_channels:
        raise ConfigurationError("Network error: 'conv_channels' must not be empty.")
    if not 0.0 <= config.dropout < 1.0:
        raise ConfigurationError("Network error: 'dropout' must be in [0, 1).")
    for key in ("batch_size", "lr_step"):
        if not isinstance(getattr(config, key), int) or getattr(config, key) < 1:
            raise ConfigurationError(f"Network error: '{key}' must be a positive integer.")
    if not isinstance(config.epochs, int) or config.epochs < 0:
        raise ConfigurationError("Network error: 'epochs' must be a nonnegative integer.")
    if config.learning_rate <= 0 or not 0 <= config.momentum < 1 or not 0 < config.lr_factor <= 1:
        raise ConfigurationError("Network error: 'learning_rate' must be positive, 'momentum' in [0, 1) "
                                 "and 'lr_factor' in (0, 1].")
    if not isinstance(config.kernel_size, int) or config.kernel_size < 1 or config.kernel_size % 2 == 0:
        raise ConfigurationError("Network error: 'kernel_size' must be an odd positive integer.")
    if config.class_weights not in ("balanced", "none"):
        raise ConfigurationError("Network error: 'class_weights' must be 'balanced' or 'none'.")
    return config


@dataclass(frozen=True)
class TemporalLayout:
    """
    Shape of the temporal block at the start of an early-fusion row.
    """
    m: int
    t: int


def build_net(kind: str, k: int, config: TrainingConfig, layout: Optional[TemporalLayout] = None) -> torch.nn.Module:
    if kind == "mlp":
        return MlpNet(k, config.hidden, config.dropout)
    if kind == "fusion":
        if layout is None:
            raise ValueError("The fusion network needs the temporal layout (m, t).")
        return FusionNet(layout.m, layout.t, k - layout.m * layout.t, config.conv_channels, config.kernel_size,
                         config.tabular_hidden, config.merge_hidden, config.dropout)
    raise ValueError(f"Unknown network kind '{kind}'.")


def smoothed(curve: Sequence[float], window: int = SMOOTHING_WINDOW) -> np.ndarray:
    curve = np.asarray(curve, dtype=float)
    if len(curve) < window:
        return curve
    return np.convolve(curve, np.ones(window) / window, mode="valid")


class NetworkTrainer(object):
    """
    Minibatch SGD with momentum and a step learning-rate schedule. Batches come from the weighted
    sampler (or plain shuffling); dropout is active only while training. `epoch_completed(epoch, loss)`
    is raised after every epoch with the mean training loss.
    """

    def __init__(self, kind: str, config: TrainingConfig, seed: int = 0, layout: Optional[TemporalLayout] = None) -> None:
        self._kind = kind
        self._config = config
        self._seed = int(seed)
        self._layout = layout
        self.epoch_completed = Event()

    def _loss_weights(self, y: np.ndarray) -> torch.Tensor:
        if self._config.class_weights == "none" or self._config.weighted_sampling:
            return torch.ones(2)
        return torch.as_tensor(default_class_weights(y), dtype=torch.float32)

    def fit(self, X: np.ndarray, y: np.ndarray) -> NetworkModel:
        """
        Parameters:
            X (np.ndarray): n x k normalized early-fusion rows.
            y (np.ndarray): 0/1 labels.

        Returns:
            NetworkModel: Trained network in evaluation mode.

        Raises:
            NumericalError: If the loss becomes non-finite; the error names the epoch.
            ValueError: If only one class is present.
        """
        X = np.asarray(X, dtype=np.float32)
        y = np.asarray(y).astype(np.int64)
        if len(np.unique(y)) != 2:
            raise ValueError("Network training needs both classes in the labels.")
        config = self._config

        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(self._seed)
            net = build_net(self._kind, X.shape[1], config, self._layout)
            dataset = TensorDataset(torch.from_numpy(X), torch.from_numpy(y))
            if config.weighted_sampling:
                sampler = weighted_sampler(y, self._seed)
            else:
                sampler = RandomSampler(dataset, generator=torch.Generator().manual_seed(self._seed))
            loader = DataLoader(dataset, batch_size=config.batch_size, sampler=sampler)
            weights = self._loss_weights(y)
            optimizer = torch.optim.SGD(net.parameters(), lr=config.learning_rate, momentum=config.momentum)
            scheduler = torch.optim.lr_scheduler.StepLR(optimizer, step_size=config.lr_step, gamma=config.lr_factor)

            curve = []
            for epoch in range(1, config.epochs + 1):
                net.train()
                total, count = 0.0, 0
                for inputs, labels in loader:
                    optimizer.zero_grad()
                    try:
                        loss = class_weighted_loss(net(inputs), labels, weights)
                    except NumericalError as err:
                        raise NumericalError(str(err), epoch)
                    if not torch.isfinite(loss):
                        raise NumericalError("Non-finite training loss", epoch)
                    loss.backward()
                    optimizer.step()
                    total += loss.item() * len(labels)
                    count += len(labels)
                scheduler.step()
                curve.append(total / count)
                log.debug("%s epoch %d: loss %.5f", self._kind, epoch, curve[-1])
                self.epoch_completed(epoch, curve[-1])

        if (np.diff(smoothed(curve)) > 0).any():
            log.warning("%s training loss is not monotone after smoothing over %d epochs", self._kind, SMOOTHING_WINDOW)
        return NetworkModel(net, self._kind, config, curve)


def _as_config(config: Union[TrainingConfig, dict, None]) -> TrainingConfig:
    if config is None:
        return TrainingConfig()
    return training_config(config) if isinstance(config, dict) else config


def fit_mlp(X_train: np.ndarray, y_train: np.ndarray, config: Union[TrainingConfig, dict] = None,
            seed: int = 0) -> NetworkModel:
    """
    Trains the fully connected network on early-fusion rows.
    """
    return NetworkTrainer("mlp", _as_config(config), seed).fit(X_train, y_train)


def fit_fusion(X1: np.ndarray, X2: np.ndarray, y: np.ndarray, config: Union[TrainingConfig, dict] = None,
               seed: int = 0) -> NetworkModel:
    """
    Trains the fusion network on the tabular (n x h) and temporal (n x m x t) modalities.

    The model is applied to early-fusion rows [flatten(X2) | X1] afterwards.
    """
    X2 = np.asarray(X2)
    n, m, t = X2.shape
    X = np.concatenate([X2.reshape(n, m * t), np.asarray(X1).reshape(n, -1)], axis=1)
    return NetworkTrainer("fusion", _as_config(config), seed, TemporalLayout(m, t)).fit(X, y)


def check_gradients(model: NetworkModel, X: np.ndarray, y: np.ndarray, weights=None,
                    max_entries: int = 64, epsilon: float = 1e-6, seed: int = 0) -> dict[str, float]:
    """
    Compares the backpropagated gradient of the class-weighted loss with central finite differences.

    The check runs on a float64 copy in evaluation mode. For tensors with more than `max_entries`
    parameters a random subset of entries is perturbed.

    Parameters:
        model (NetworkModel): Network to check; it is not modified.
        X (np.ndarray): Batch of early-fusion rows.
        y (np.ndarray): Their labels.
        weights: Class weights of the loss, (1, 1) by default.
        max_entries (int): Entries perturbed per tensor.
        epsilon (float): Finite-difference step.
        seed (int): Seed of the entry subset.

    Returns:
        dict[str, float]: Relative error ||analytic - numeric|| / (||analytic|| + ||numeric||) per parameter tensor.
    """
    net = copy.deepcopy(model.net).double().eval()
    inputs = torch.as_tensor(np.asarray(X, dtype=np.float64))
    labels = torch.as_tensor(np.asarray(y).astype(np.int64))
    weights = torch.ones(2, dtype=torch.float64) if weights is None else torch.as_tensor(weights, dtype=torch.float64)
    rng = np.random.default_rng(seed)

    def loss_value() -> float:
        with torch.no_grad():
            return class_weighted_loss(net(inputs), labels, weights).item()

    net.zero_grad()
    class_weighted_loss(net(inputs), labels, weights).backward()

    errors = {}
    for name, parameter in net.named_parameters():
        flat = parameter.data.view(-1)
        gradient = parameter.grad if parameter.grad is not None else torch.zeros_like(parameter)
        analytic_all = gradient.detach().view(-1)
        entries = np.arange(flat.numel())
        if len(entries) > max_entries:
            entries = np.sort(rng.choice(entries, size=max_entries, replace=False))
        analytic, numeric = [], []
        for entry in entries:
            original = flat[entry].item()
            flat[entry] = original + epsilon
            upper = loss_value()
            flat[entry] = original - epsilon
            lower = loss_value()
            flat[entry] = original
            numeric.append((upper - lower) / (2 * epsilon))
            analytic.append(analytic_all[entry].item())
        analytic, numeric = np.array(analytic), np.array(numeric)
        scale = np.linalg.norm(analytic) + np.linalg.norm(numeric)
        errors[name] = 0.0 if scale == 0 else float(np.linalg.norm(analytic - numeric) / scale)
        if not math.isfinite(errors[name]):
            raise NumericalError(f"Gradient check of '{name}' is not finite")
    return errors
