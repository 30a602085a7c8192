import logging
from typing import Optional, Sequence

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F
from torch.utils.data import WeightedRandomSampler

from ..errors import NumericalError
from .i_classifier import IClassifier
from .i_differentiable import IDifferentiable

log = logging.getLogger(__name__)


def weighted_sampler(labels, seed: int = 0, num_samples: Optional[int] = None) -> WeightedRandomSampler:
    """
    Sampler drawing training rows with replacement so that each class has total probability 1/2.

    Parameters:
        labels: 0/1 labels of the training rows.
        seed (int): Seed of the sampler's generator.
        num_samples (int, optional): Draws per epoch, the number of rows by default.

    Returns:
        WeightedRandomSampler: Index stream.

    Raises:
        ValueError: If only one class is present.
    """
    labels = np.asarray(labels).astype(np.int64)
    counts = np.bincount(labels, minlength=2)
    if len(counts) != 2 or (counts == 0).any():
        raise ValueError("Weighted sampling needs both classes in the labels.")
    weights = 1.0 / (2.0 * counts[labels])
    generator = torch.Generator().manual_seed(int(seed))
    return WeightedRandomSampler(torch.as_tensor(weights, dtype=torch.double),
                                 num_samples=len(labels) if num_samples is None else int(num_samples),
                                 replacement=True, generator=generator)


def default_class_weights(labels) -> np.ndarray:
    """
    Weights inversely proportional to the class frequencies, normalized to mean 1.
    """
    counts = np.bincount(np.asarray(labels).astype(np.int64), minlength=2).astype(float)
    if (counts == 0).any():
        raise ValueError("Class weights need both classes in the labels.")
    inverse = 1.0 / counts
    return inverse / inverse.mean()


def class_weighted_loss(logits: torch.Tensor, labels: torch.Tensor, weights: Optional[torch.Tensor] = None) -> torch.Tensor:
    """
    Cross-entropy of softmax(logits) scaled by the weight of each row's true class, averaged over the rows.

    Parameters:
        logits (torch.Tensor): n x 2 logits.
        labels (torch.Tensor): n class indices.
        weights (torch.Tensor, optional): Positive per-class weights; inverse class frequencies of `labels`
            (normalized to mean 1) when omitted.

    Returns:
        torch.Tensor: Scalar loss.

    Raises:
        NumericalError: If a logit is not finite.
        ValueError: If a weight is not positive.
    """
    if not torch.isfinite(logits).all():
        raise NumericalError("Non-finite logits")
    if weights is None:
        weights = torch.as_tensor(default_class_weights(labels.cpu().numpy()), dtype=logits.dtype)
    weights = torch.as_tensor(weights, dtype=logits.dtype)
    if (weights <= 0).any():
        raise ValueError("Class weights must be positive.")
    return (weights[labels] * F.cross_entropy(logits, labels, reduction="none")).mean()


def _dense_stack(width: int, hidden: Sequence[int], dropout: float) -> tuple[nn.Sequential, int]:
    layers = []
    for size in hidden:
        layers += [nn.Linear(width, size), nn.ReLU(), nn.Dropout(dropout)]
        width = size
    return nn.Sequential(*layers), width


class MlpNet(nn.Module):
    """
    Dense layers with ReLU and dropout followed by a linear layer producing the two class logits.
    """

    def __init__(self, k: int, hidden: Sequence[int] = (128, 64, 32), dropout: float = 0.2) -> None:
        super().__init__()
        if not 0.0 <= dropout < 1.0:
            raise ValueError("Dropout must be in [0, 1).")
        self.body, width = _dense_stack(k, hidden, dropout)
        self.head = nn.Linear(width, 2)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.head(self.body(x))


class FusionNet(nn.Module):
    """
    Model fusion of the two modalities.

    Branch A encodes the tabular columns with dense layers. Branch B convolves the m temporal channels
    along the t intervals only (1-D convolutions with ReLU and max pooling) and flattens the result.
    The hidden representations are concatenated and mapped to the two logits by dense layers.
    The input is an early-fusion row [flatten(X2) | X1], split inside the network.
    """

    def __init__(self, m: int, t: int, h: int, conv_channels: Sequence[int] = (32, 32), kernel_size: int = 3,
                 tabular_hidden: Sequence[int] = (64,), merge_hidden: Sequence[int] = (64,),
                 dropout: float = 0.2) -> None:
        super().__init__()
        if not 0.0 <= dropout < 1.0:
            raise ValueError("Dropout must be in [0, 1).")
        if kernel_size % 2 == 0:
            raise ValueError("The kernel size must be odd.")
        self.m, self.t, self.h = m, t, h

        self.tabular, self.tabular_dim = _dense_stack(h, tabular_hidden, dropout)

        layers, channels, length = [], m, t
        for size in conv_channels:
            layers += [nn.Conv1d(channels, size, kernel_size, padding=kernel_size // 2), nn.ReLU(),
                       nn.MaxPool1d(2, ceil_mode=True)]
            channels, length = size, (length + 1) // 2
        self.temporal = nn.Sequential(*layers, nn.Flatten())
        self.temporal_dim = channels * length

        merge, width = _dense_stack(self.tabular_dim + self.temporal_dim, merge_hidden, dropout)
        self.merge = nn.Sequential(*merge, nn.Linear(width, 2))

    @property
    def merge_dim(self) -> int:
        return self.tabular_dim + self.temporal_dim

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        cells = self.m * self.t
        temporal = x[:, :cells].reshape(-1, self.m, self.t)
        hidden = torch.cat([self.tabular(x[:, cells:]), self.temporal(temporal)], dim=1)
        return self.merge(hidden)


class NetworkModel(IClassifier, IDifferentiable):
    """
    Trained network with its training configuration and per-epoch loss curve. Inference runs in
    evaluation mode, so dropout is inactive and repeated predictions are identical.
    """

    def __init__(self, net: nn.Module, kind: str, config, loss_curve: Sequence[float] = ()) -> None:
        self._net = net.eval()
        self._kind = kind
        self._config = config
        self._loss_curve = tuple(float(loss) for loss in loss_curve)

    @property
    def kind(self) -> str:
        return self._kind

    @property
    def n_features(self) -> int:
        if isinstance(self._net, FusionNet):
            return self._net.m * self._net.t + self._net.h
        return self._net.body[0].in_features if len(self._net.body) else self._net.head.in_features

    @property
    def net(self) -> nn.Module:
        return self._net

    @property
    def config(self):
        return self._config

    @property
    def loss_curve(self) -> tuple[float, ...]:
        return self._loss_curve

    def _logits(self, X: np.ndarray) -> torch.Tensor:
        X = self.check_features(X)
        dtype = next(self._net.parameters()).dtype
        return self._net(torch.as_tensor(X, dtype=dtype))

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        with torch.no_grad():
            return torch.softmax(self._logits(X), dim=1).double().numpy()

    def h1_logit(self, X: np.ndarray) -> np.ndarray:
        """
        Log-odds of H1 against H0, the difference of the two logits.
        """
        with torch.no_grad():
            logits = self._logits(X)
            return (logits[:, 1] - logits[:, 0]).double().numpy()

    def h1_logit_gradient(self, X: np.ndarray) -> np.ndarray:
        X = self.check_features(X)
        dtype = next(self._net.parameters()).dtype
        inputs = torch.as_tensor(X, dtype=dtype).requires_grad_(True)
        logits = self._net(inputs)
        gradient, = torch.autograd.grad((logits[:, 1] - logits[:, 0]).sum(), inputs)
        return gradient.double().numpy()
