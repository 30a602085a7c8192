import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Union

from ..errors import ConfigurationError
from .sections import PipelineConfig

log = logging.getLogger(__name__)

CHUNK_SIZE = 1 << 20


@dataclass(frozen=True)
class ManifestEntry:
    """
    One completed stage: the fingerprint of the configuration it ran with, its seed and the digest of
    its outputs (paths relative to the work directory).
    """
    stage: str
    config_hash: str
    seed: int
    output_hash: str
    outputs: tuple[str, ...] = field(default_factory=tuple)

    def as_dict(self) -> dict:
        return {"stage": self.stage, "config_hash": self.config_hash, "seed": self.seed,
                "output_hash": self.output_hash, "outputs": list(self.outputs)}

    @classmethod
    def from_dict(cls, data: dict) -> "ManifestEntry":
        return cls(data["stage"], data["config_hash"], data["seed"], data["output_hash"], tuple(data["outputs"]))


def canonical_json(data) -> str:
    return json.dumps(data, separators=(",", ":"), sort_keys=True, ensure_ascii=True)


def text_digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def file_digest(path: Union[str, Path]) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(CHUNK_SIZE), b""):
            digest.update(chunk)
    return digest.hexdigest()


def outputs_digest(work_dir: Path, outputs: Iterable[str]) -> str:
    """
    Digest over the (relative path, content digest) pairs of a stage's outputs, in path order.
    """
    pairs = [[name, file_digest(work_dir / name)] for name in sorted(outputs)]
    return text_digest(canonical_json(pairs))


class Manifest(object):
    """
    The `manifest.jsonl` file of a work directory: one line per stage in the order stages first ran.
    Rerunning a stage replaces its line in place. Lines carry no timestamps so that identical runs give
    identical files.
    """

    def __init__(self, path: Union[str, Path]) -> None:
        self._path = Path(path)
        self._entries: dict[str, ManifestEntry] = {}
        if self._path.is_file():
            with open(self._path, encoding="utf-8") as f:
                for line_number, line in enumerate(f, start=1):
                    if not line.strip():
                        continue
                    try:
                        entry = ManifestEntry.from_dict(json.loads(line))
                    except (json.JSONDecodeError, KeyError, TypeError) as err:
                        raise ConfigurationError(f"Manifest error: {self._path}:{line_number} is malformed ({err}).")
                    self._entries[entry.stage] = entry

    @property
    def path(self) -> Path:
        return self._path

    def __contains__(self, stage: str) -> bool:
        return stage in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def get(self, stage: str) -> Optional[ManifestEntry]:
        return self._entries.get(stage)

    @property
    def entries(self) -> list[ManifestEntry]:
        return list(self._entries.values())

    def record(self, entry: ManifestEntry) -> None:
        self._entries[entry.stage] = entry
        self._path.parent.mkdir(parents=True, exist_ok=True)
        with open(self._path, "w", encoding="utf-8", newline="\n") as f:
            for item in self._entries.values():
                f.write(canonical_json(item.as_dict()))
                f.write("\n")


def section_payloads(config: PipelineConfig) -> dict[str, dict]:
    """
    Hashable view of every configuration section. Resource files enter through their content digest,
    not their location, so that moving a work tree keeps its fingerprints.
    """
    generator = config.generator.as_dict()
    generator["marginals"] = file_digest(generator["marginals"])
    generator["features"] = file_digest(generator["features"])
    records = ({"generator": generator} if config.generates_records
               else {"external": file_digest(config.records)})

    cohort = config.cohort
    features = config.features
    explain = config.explain
    return {
        "records": records,
        "cohort": {
            "rules": [cohort.rules.test_window_days, cohort.rules.prior_window_days, cohort.rules.followup_days,
                      cohort.rules.min_duration_hours],
            "inclusion": file_digest(cohort.inclusion),
            "exclusion": file_digest(cohort.exclusion),
            "hierarchy": file_digest(cohort.hierarchy),
        },
        "features": {
            "spec": file_digest(features.spec),
            "scheme": None if features.scheme is None else [list(pair) for pair in features.scheme],
            "split_seeds": list(features.split_seeds),
            "train_fraction": features.train_fraction,
            "stratified": features.stratified,
        },
        "models": {
            family: {"budget": config.models.budget, "params": config.models.params_for(family),
                     "space": config.models.spaces.get(family)}
            for family in config.models.families
        },
        "explain": {
            "method": None if explain.method is None else explain.method.value,
            "background": explain.background,
            "n_samples": explain.n_samples,
            "max_rows": explain.max_rows,
        },
        "report": {"top_k": explain.top_k, "families": list(config.models.families),
                   "explained": list(explain.models),
                   "scenarios": [scenario.value for scenario in features.scenarios]},
        "stats": {"alpha": config.alpha},
    }


def stage_payload(stage: str, payloads: dict[str, dict]) -> dict:
    """
    Sections a stage depends on, its own and those of every upstream stage.

    Raises:
        ValueError: If the stage key is unknown.
    """
    name, *parts = stage.split(":")
    base = {"records": payloads["records"], "cohort": payloads["cohort"]}
    if name == "generate":
        return {"records": payloads["records"]}
    if name == "cohort":
        return base
    if name == "stats":
        return {**base, "features": payloads["features"], "stats": payloads["stats"]}
    if name == "featurize":
        return {**base, "features": payloads["features"]}
    if name == "train":
        return {**base, "features": payloads["features"], "model": payloads["models"][parts[0]]}
    if name == "explain":
        return {**base, "features": payloads["features"], "model": payloads["models"][parts[0]],
                "explain": payloads["explain"]}
    if name == "report":
        return {**base, "features": payloads["features"], "models": payloads["models"],
                "explain": payloads["explain"], "report": payloads["report"]}
    raise ValueError(f"Unknown stage '{stage}'.")


def stage_config_hash(stage: str, payloads: dict[str, dict]) -> str:
    return text_digest(canonical_json({"stage": stage, **stage_payload(stage, payloads)}))
