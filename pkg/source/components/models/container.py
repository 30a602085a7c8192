import json
from pathlib import Path
from typing import Union

import numpy as np
import torch

from ..errors import ConfigurationError
from .forest import ForestHyperparams, ForestModel, ForestVariant
from .i_classifier import IClassifier
from .network import FusionNet, NetworkModel
from .training import TemporalLayout, build_net, training_config
from .tree import DecisionTree

MAGIC = "HOSPRISK-MODEL"
VERSION = 1

# per-node tree arrays and their on-disk types
TREE_ARRAYS = {
    "feature": "<i4", "threshold": "<f8", "left": "<i4", "right": "<i4",
    "value": "<f8", "n_samples": "<f8", "class_counts": "<i8",
}


def _forest_payload(model: ForestModel) -> tuple[dict, list[tuple[str, np.ndarray]]]:
    sizes = [tree.n_nodes for tree in model.trees]
    arrays = [("node_offsets", np.cumsum([0] + sizes).astype("<i8"))]
    for name, dtype in TREE_ARRAYS.items():
        arrays.append((name, np.concatenate([tree.arrays()[name] for tree in model.trees]).astype(dtype)))
    header = {
        "hyperparams": model.hyperparams.as_dict(),
        "class_weights": [float(weight) for weight in model.class_weights],
        "n_features": model.n_features,
    }
    return header, arrays


def _network_payload(model: NetworkModel) -> tuple[dict, list[tuple[str, np.ndarray]]]:
    header = {"config": model.config.as_dict(), "n_features": model.n_features, "loss_curve": list(model.loss_curve)}
    if isinstance(model.net, FusionNet):
        header["layout"] = [model.net.m, model.net.t]
    arrays = [(name, tensor.detach().cpu().numpy().astype("<f4")) for name, tensor in model.net.state_dict().items()]
    return header, arrays


def save_model(model: IClassifier, path: Union[str, Path]) -> None:
    """
    Writes a model as "HOSPRISK-MODEL <version>", a JSON header line (kind, hyperparameters, array
    descriptors) and the raw little-endian arrays in header order. Equal models give equal bytes.
    """
    if isinstance(model, ForestModel):
        header, arrays = _forest_payload(model)
    elif isinstance(model, NetworkModel):
        header, arrays = _network_payload(model)
    else:
        raise TypeError(f"Cannot save a model of type {type(model).__name__}.")
    header["kind"] = model.kind
    header["arrays"] = [{"name": name, "dtype": array.dtype.str, "shape": list(array.shape)} for name, array in arrays]

    with open(path, "wb") as f:
        f.write(f"{MAGIC} {VERSION}\n".encode("ascii"))
        f.write(json.dumps(header, separators=(",", ":"), sort_keys=True).encode("utf-8"))
        f.write(b"\n")
        for _, array in arrays:
            f.write(np.ascontiguousarray(array).tobytes())


def _read_arrays(header: dict, payload: bytes, path) -> dict[str, np.ndarray]:
    arrays, offset = {}, 0
    for descriptor in header["arrays"]:
        dtype = np.dtype(descriptor["dtype"])
        count = int(np.prod(descriptor["shape"], dtype=np.int64))
        end = offset + count * dtype.itemsize
        if end > len(payload):
            raise ConfigurationError(f"Model container error: {path} is truncated.")
        arrays[descriptor["name"]] = np.frombuffer(payload[offset:end], dtype=dtype).reshape(descriptor["shape"])
        offset = end
    if offset != len(payload):
        raise ConfigurationError(f"Model container error: {path} has trailing bytes.")
    return arrays


def load_model(path: Union[str, Path]) -> IClassifier:
    """
    Reads a model written by `save_model`.

    Raises:
        ConfigurationError: If the file is not a model container of a supported version.
    """
    with open(path, "rb") as f:
        magic = f.readline().decode("ascii", errors="replace").split()
        if len(magic) != 2 or magic[0] != MAGIC or magic[1] != str(VERSION):
            raise ConfigurationError(f"Model container error: {path} is not a version {VERSION} model file.")
        header = json.loads(f.readline().decode("utf-8"))
        payload = f.read()
    arrays = _read_arrays(header, payload, path)
    kind = header["kind"]

    if kind in ("rf", "et"):
        offsets = arrays["node_offsets"]
        trees = [
            DecisionTree.from_arrays({name: arrays[name][start:end] for name in TREE_ARRAYS}, header["n_features"])
            for start, end in zip(offsets[:-1], offsets[1:])
        ]
        return ForestModel(trees, ForestVariant(kind), ForestHyperparams(**header["hyperparams"]),
                           np.array(header["class_weights"]))

    if kind in ("mlp", "fusion"):
        config = training_config(header["config"])
        layout = TemporalLayout(*header["layout"]) if "layout" in header else None
        net = build_net(kind, header["n_features"], config, layout)
        state = {name: torch.from_numpy(array.astype(np.float32)) for name, array in arrays.items()}
        net.load_state_dict(state)
        return NetworkModel(net, kind, config, header["loss_curve"])

    raise ConfigurationError(f"Model container error: unknown model kind '{kind}' in {path}.")
