import json
import logging
import os
from pathlib import Path
from typing import Mapping, Optional, Union

from ..errors import ConfigurationError
from ..explain.summary import DEFAULT_TOP_K
from ..explain.attribution import DEFAULT_BACKGROUND
from ..features.spec import DEFAULT_SPEC_PATH
from ..models.selection import FAMILIES
from ..stats.correction import DEFAULT_ALPHA
from .checker import check_pipeline_config
from .sections import PipelineConfig

log = logging.getLogger(__name__)

PIPELINE_DIR = Path(__file__).resolve().parents[1] / "json" / "pipeline"
DEFAULT_CONFIG_PATH = PIPELINE_DIR / "default.json"
PATTERN_DIR = Path(__file__).resolve().parents[1] / "patterns"
WORK_DIR_VARIABLE = "HOSPRISK_WORK_DIR"
METHOD_FAMILIES = {"tree": ("rf", "et"), "gradient": ("mlp", "fusion"), "sampling": FAMILIES}

# Built-in values of every key; a config file only lists what it changes
DEFAULTS = {
    "seed": 0,
    "paths": {"work_dir": "work", "records": None},
    "generator": {"n_patients": 2000},
    "cohort": {
        "inclusion": str(PATTERN_DIR / "inclusion.txt"),
        "exclusion": str(PATTERN_DIR / "exclusion.txt"),
        "hierarchy": str(PATTERN_DIR / "hierarchy.tsv"),
        "test_window_days": 28,
        "prior_window_days": 28,
        "followup_days": 28,
        "min_duration_hours": 24.0,
    },
    "features": {
        "spec": str(DEFAULT_SPEC_PATH),
        "scheme": None,
        "scenarios": ["all", "gp", "one-day-before"],
        "split_seeds": None,
        "train_fraction": 0.7,
        "stratified": False,
    },
    "models": {"families": list(FAMILIES), "n_seeds": 10, "budget": 0, "params": {}, "spaces": {}},
    "explain": {
        "models": list(FAMILIES),
        "method": None,
        "top_k": DEFAULT_TOP_K,
        "background": DEFAULT_BACKGROUND,
        "n_samples": None,
        "max_rows": None,
    },
    "stats": {"alpha": DEFAULT_ALPHA},
}


def read_json(path: Union[str, Path], section: str) -> dict:
    with open(path, encoding="utf-8") as f:
        try:
            data = json.loads(f.read())
        except json.JSONDecodeError as err:
            raise ConfigurationError(f"{section} error: {path} is not valid JSON ({err}).")
    if not isinstance(data, dict):
        raise ConfigurationError(f"{section} error: {path} must hold an object.")
    return data


def expand_preset(generator: dict, base_dir: Path) -> dict:
    """
    Replaces a "preset" key of the generator section by the preset file's values; keys written next to
    the preset override it. Resource paths of the preset stay relative to the preset's directory.
    """
    if "preset" not in generator:
        return generator
    generator = dict(generator)
    preset_path = Path(generator.pop("preset"))
    if not preset_path.is_absolute():
        preset_path = base_dir / preset_path
    if not preset_path.is_file():
        raise ConfigurationError(f"Generator error: preset {preset_path} does not exist.")
    preset = read_json(preset_path, "Generator")
    preset.pop("name", None)
    for key in ("marginals", "features"):
        if key in preset and not Path(preset[key]).is_absolute():
            preset[key] = str(preset_path.parent / preset[key])
    return {**preset, **generator}


def merge_sections(data: dict) -> dict:
    """
    Overlays a decoded config file on the built-in defaults, section by section.
    """
    merged = {}
    for key, default in DEFAULTS.items():
        value = data.get(key, default)
        if isinstance(default, dict) and isinstance(value, dict) and key != "generator":
            value = {**default, **value}
        merged[key] = value
    # Unknown sections are kept for the checker to report
    for key in data:
        if key not in DEFAULTS:
            merged[key] = data[key]
    return merged


def load_pipeline_config(path: Union[str, Path, None] = None, overrides: Optional[Mapping] = None,
                         environ: Optional[Mapping[str, str]] = None) -> PipelineConfig:
    """
    Loads a pipeline configuration with the precedence built-in defaults < file < environment < flags.

    Parameters:
        path (str | Path, optional): Config file, the packaged default configuration when None.
        overrides (Mapping, optional): Command-line values; recognized keys are "seed", "work_dir",
            "n_patients" and "method". None values are ignored.
        environ (Mapping, optional): Environment, os.environ when None.

    Returns:
        PipelineConfig: Validated configuration.

    Raises:
        ConfigurationError: If the file or a value is invalid.
    """
    path = Path(path) if path is not None else DEFAULT_CONFIG_PATH
    if not path.is_file():
        raise ConfigurationError(f"Pipeline error: config file {path} does not exist.")
    base_dir = path.resolve().parent
    data = merge_sections(read_json(path, "Pipeline"))
    if isinstance(data["generator"], dict):
        data["generator"] = expand_preset(data["generator"], base_dir)

    environ = os.environ if environ is None else environ
    if environ.get(WORK_DIR_VARIABLE):
        data["paths"] = {**data["paths"], "work_dir": environ[WORK_DIR_VARIABLE]}
        log.debug("Work directory taken from %s", WORK_DIR_VARIABLE)

    overrides = {key: value for key, value in (overrides or {}).items() if value is not None}
    if "seed" in overrides:
        data["seed"] = overrides["seed"]
        if isinstance(data["generator"], dict):
            data["generator"] = {**data["generator"], "seed": overrides["seed"]}
    if "work_dir" in overrides:
        data["paths"] = {**data["paths"], "work_dir": str(overrides["work_dir"])}
    if "n_patients" in overrides and isinstance(data["generator"], dict):
        data["generator"] = {**data["generator"], "n_patients": overrides["n_patients"]}
    if "method" in overrides and isinstance(data["explain"], dict):
        # Families the method does not apply to are left out of the explain stage
        compatible = METHOD_FAMILIES.get(overrides["method"], FAMILIES)
        models = [family for family in data["explain"].get("models", []) if family in compatible]
        data["explain"] = {**data["explain"], "method": overrides["method"], "models": models}

    config = check_pipeline_config(data, base_dir, path)
    log.debug("Loaded %s: work directory %s, seed %d", path, config.work_dir, config.seed)
    return config
