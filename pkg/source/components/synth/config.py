import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Union

from ..errors import ConfigurationError
from ..features.spec import DEFAULT_SPEC_PATH

SYNTH_DIR = Path(__file__).resolve().parents[1] / "json" / "synth"
DEFAULT_MARGINALS_PATH = SYNTH_DIR / "marginals.json"

DEFAULT_MISSINGNESS = {"vitals": 0.55, "labs": 0.35, "inflammatory": 0.2}
DEFAULT_CODE_MIX = {"U07.1": 0.65, "U07.2": 0.2, "text": 0.1, "snomed": 0.05}

fraction_keys = [
    "noise", "ineligible_fraction", "prior_hospitalization_fraction", "missing_age_fraction",
    "early_admission_fraction", "leakage_bait_fraction",
]


@dataclass(frozen=True)
class GeneratorConfig:
    """
    Parameters of a synthetic cohort.

    `noise` is the probability that a patient's observed hospitalization disagrees with the planted label.
    `missingness` maps a quantity family to the probability that a patient has any measurement of a
    quantity of that family. `planted` replaces the parameters of single Boolean features with
    {"prevalence": pooled fraction, "log_odds": coefficient}.
    """
    n_patients: int
    target_prevalence: float = 0.125
    seed: int = 0
    signal_strength: float = 1.0
    missingness: dict = field(default_factory=lambda: dict(DEFAULT_MISSINGNESS))
    noise: float = 0.01
    covid_code_mix: dict = field(default_factory=lambda: dict(DEFAULT_CODE_MIX))
    ineligible_fraction: float = 0.03
    prior_hospitalization_fraction: float = 0.02
    missing_age_fraction: float = 0.003
    early_admission_fraction: float = 0.79
    leakage_bait_fraction: float = 0.5
    late_signal: float = 0.0
    planted: dict = field(default_factory=dict)
    marginals: str = str(DEFAULT_MARGINALS_PATH)
    features: str = str(DEFAULT_SPEC_PATH)

    def as_dict(self) -> dict:
        return {item.name: getattr(self, item.name) for item in fields(self)}


def _is_number(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _check_fraction(data: dict, key: str, low_open: bool = False, high_open: bool = False) -> None:
    value = data[key]
    if not _is_number(value):
        raise ConfigurationError(f"Generator error: '{key}' must be a number.")
    if (value < 0 or (low_open and value == 0)) or (value > 1 or (high_open and value == 1)):
        interval = f"{'(' if low_open else '['}0, 1{')' if high_open else ']'}"
        raise ConfigurationError(f"Generator error: '{key}' must be in {interval}.")


def check_generator_config(data: dict, base_dir: Union[str, Path] = None) -> GeneratorConfig:
    """
    Validates a generator section and fills in defaults.

    Parameters:
        data (dict): Decoded "generator" section.
        base_dir (str | Path, optional): Directory relative resource paths are resolved against.

    Returns:
        GeneratorConfig: Validated configuration.

    Raises:
        ConfigurationError: If a key is unknown, missing or out of range.
    """
    if not isinstance(data, dict):
        raise ConfigurationError("Generator error: the generator section must be an object.")
    known = {item.name for item in fields(GeneratorConfig)}
    unknown = set(data.keys()) - known
    if unknown:
        raise ConfigurationError(f"Generator error: unknown keys {sorted(unknown)}.")
    if "n_patients" not in data:
        raise ConfigurationError("Generator error: 'n_patients' is required.")
    data = {**GeneratorConfig(n_patients=1).as_dict(), **data}

    if not isinstance(data["n_patients"], int) or isinstance(data["n_patients"], bool) or data["n_patients"] <= 0:
        raise ConfigurationError("Generator error: 'n_patients' must be a positive integer.")
    if not isinstance(data["seed"], int) or isinstance(data["seed"], bool) or not 0 <= data["seed"] < 2 ** 64:
        raise ConfigurationError("Generator error: 'seed' must be a 64-bit nonnegative integer.")
    _check_fraction(data, "target_prevalence", low_open=True, high_open=True)
    for key in fraction_keys:
        _check_fraction(data, key)
    for key in ("signal_strength", "late_signal"):
        if not _is_number(data[key]) or data[key] < 0:
            raise ConfigurationError(f"Generator error: '{key}' must be a nonnegative number.")

    if not isinstance(data["missingness"], dict):
        raise ConfigurationError("Generator error: 'missingness' must map families to probabilities.")
    for family in data["missingness"]:
        _check_fraction(data["missingness"], family)

    mix = data["covid_code_mix"]
    if not isinstance(mix, dict) or set(mix.keys()) != set(DEFAULT_CODE_MIX.keys()):
        raise ConfigurationError(f"Generator error: 'covid_code_mix' must have the keys {sorted(DEFAULT_CODE_MIX)}.")
    for key in mix:
        _check_fraction(mix, key)
    if abs(sum(mix.values()) - 1.0) > 1e-9:
        raise ConfigurationError("Generator error: 'covid_code_mix' proportions must sum to 1.")

    if not isinstance(data["planted"], dict):
        raise ConfigurationError("Generator error: 'planted' must be an object.")
    for name, item in data["planted"].items():
        if not isinstance(item, dict) or set(item.keys()) != {"prevalence", "log_odds"}:
            raise ConfigurationError(f"Generator error: planted '{name}' needs exactly 'prevalence' and 'log_odds'.")
        _check_fraction(item, "prevalence", low_open=True, high_open=True)
        if not _is_number(item["log_odds"]):
            raise ConfigurationError(f"Generator error: planted 'log_odds' of '{name}' must be a number.")

    for key in ("marginals", "features"):
        if not isinstance(data[key], (str, Path)):
            raise ConfigurationError(f"Generator error: '{key}' must be a path.")
        path = Path(data[key])
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        data[key] = str(path)

    return GeneratorConfig(**data)


def load_generator_config(path: Union[str, Path]) -> GeneratorConfig:
    """
    Reads a generator configuration (or preset) file; relative paths are resolved against its directory.
    """
    with open(path, encoding="utf-8") as f:
        try:
            data = json.loads(f.read())
        except json.JSONDecodeError as err:
            raise ConfigurationError(f"Generator error: {path} is not valid JSON ({err}).")
    data.pop("name", None)
    return check_generator_config(data, Path(path).resolve().parent)
