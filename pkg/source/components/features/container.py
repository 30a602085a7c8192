import json
from pathlib import Path
from typing import Union

import numpy as np

from ..errors import ConfigurationError
from .fused import FusedFeatures, Scenario, unflatten_temporal

MAGIC = "HOSPRISK-FEATURES"
VERSION = 1


def write_features(features: FusedFeatures, path: Union[str, Path]) -> None:
    """
    Writes features as a text header line followed by binary blocks:
    X_early (float32, row-major), mask2 (packed bits), source_day2 (int32), admission offsets (int32),
    labels (packed bits). All numbers are little endian.
    """
    header = {
        "n": features.n, "h": features.h, "m": features.m, "t": features.t, "k": features.k,
        "scenario": features.scenario.value,
        "split_seed": features.split_seed,
        "tabular_names": features.tabular_names,
        "channel_names": features.channel_names,
        "interval_labels": features.interval_labels,
        "patient_ids": features.patient_ids,
    }
    with open(path, "wb") as f:
        f.write(f"{MAGIC} {VERSION}\n".encode("ascii"))
        f.write(json.dumps(header, separators=(",", ":"), sort_keys=True).encode("utf-8"))
        f.write(b"\n")
        f.write(features.X_early.astype("<f4").tobytes())
        f.write(np.packbits(features.mask2.ravel()).tobytes())
        f.write(features.source_day2.astype("<i4").tobytes())
        f.write(features.admission_offsets.astype("<i4").tobytes())
        f.write(np.packbits(features.labels.astype(bool)).tobytes())


def read_features(path: Union[str, Path]) -> FusedFeatures:
    """
    Reads a file written by `write_features`. Values come back as float64.

    Raises:
        ConfigurationError: If the file is not a feature container of a supported version.
    """
    with open(path, "rb") as f:
        magic = f.readline().decode("ascii", errors="replace").split()
        if len(magic) != 2 or magic[0] != MAGIC or magic[1] != str(VERSION):
            raise ConfigurationError(f"Feature container error: {path} is not a version {VERSION} feature file.")
        header = json.loads(f.readline().decode("utf-8"))
        payload = f.read()

    n, h, m, t, k = (header[key] for key in ("n", "h", "m", "t", "k"))
    cells = n * m * t
    sizes = [n * k * 4, (cells + 7) // 8, cells * 4, n * 4, (n + 7) // 8]
    if len(payload) != sum(sizes):
        raise ConfigurationError(f"Feature container error: {path} is truncated.")
    offsets = np.cumsum([0] + sizes)
    blocks = [payload[start:end] for start, end in zip(offsets[:-1], offsets[1:])]

    X_early = np.frombuffer(blocks[0], dtype="<f4").reshape(n, k).astype(np.float64)
    mask2 = np.unpackbits(np.frombuffer(blocks[1], dtype=np.uint8), count=cells).astype(bool).reshape(n, m, t)
    source_day2 = np.frombuffer(blocks[2], dtype="<i4").reshape(n, m, t).astype(np.int32)
    admission_offsets = np.frombuffer(blocks[3], dtype="<i4").astype(np.int32)
    labels = np.unpackbits(np.frombuffer(blocks[4], dtype=np.uint8), count=n).astype(bool)

    return FusedFeatures(
        X1=X_early[:, m * t:].copy(),
        X2=unflatten_temporal(X_early, m, t).copy(),
        mask2=mask2,
        source_day2=source_day2,
        labels=labels,
        patient_ids=header["patient_ids"],
        admission_offsets=admission_offsets,
        tabular_names=header["tabular_names"],
        channel_names=header["channel_names"],
        interval_labels=header["interval_labels"],
        scenario=Scenario(header["scenario"]),
        split_seed=header["split_seed"],
    )
