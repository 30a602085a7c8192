from pathlib import Path
from typing import Optional, Union

from ..cohort.selection import CohortRules
from ..errors import ConfigurationError
from ..explain.attribution import ExplainMethod
from ..features.fused import Scenario
from ..models.selection import FAMILIES
from ..synth.config import check_generator_config
from .sections import CohortSection, ExplainSection, FeatureSection, ModelSection, PipelineConfig

section_keys = ["seed", "paths", "generator", "cohort", "features", "models", "explain", "stats"]
paths_keys = ["work_dir", "records"]
cohort_keys = ["inclusion", "exclusion", "hierarchy", "test_window_days", "prior_window_days", "followup_days",
               "min_duration_hours"]
features_keys = ["spec", "scheme", "scenarios", "split_seeds", "train_fraction", "stratified"]
models_keys = ["families", "n_seeds", "budget", "params", "spaces"]
explain_keys = ["models", "method", "top_k", "background", "n_samples", "max_rows"]
stats_keys = ["alpha"]


def _is_int(value) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def _is_number(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _check_keys(data, known: list[str], section: str) -> dict:
    if not isinstance(data, dict):
        raise ConfigurationError(f"{section} error: the section must be an object.")
    unknown = set(data.keys()) - set(known)
    if unknown:
        raise ConfigurationError(f"{section} error: unknown keys {sorted(unknown)}.")
    return data


def _resolve(value, key: str, section: str, base_dir: Optional[Path], must_exist: bool = True) -> Path:
    if not isinstance(value, str) or not value:
        raise ConfigurationError(f"{section} error: '{key}' must be a path.")
    path = Path(value)
    if base_dir is not None and not path.is_absolute():
        path = base_dir / path
    if must_exist and not path.is_file():
        raise ConfigurationError(f"{section} error: '{key}' file {path} does not exist.")
    return path


def _optional_positive_int(data: dict, key: str, section: str) -> None:
    if data[key] is not None and (not _is_int(data[key]) or data[key] < 1):
        raise ConfigurationError(f"{section} error: '{key}' must be a positive integer or null.")


def check_paths(data: dict, base_dir: Optional[Path]) -> tuple[Path, Optional[Path]]:
    data = _check_keys(data, paths_keys, "Paths")
    if not isinstance(data["work_dir"], (str, Path)) or not str(data["work_dir"]):
        raise ConfigurationError("Paths error: 'work_dir' must be a path.")
    records = None
    if data["records"] is not None:
        records = _resolve(data["records"], "records", "Paths", base_dir)
    return Path(data["work_dir"]), records


def check_cohort(data: dict, base_dir: Optional[Path]) -> CohortSection:
    data = _check_keys(data, cohort_keys, "Cohort")
    for key in ("test_window_days", "prior_window_days", "followup_days"):
        if not _is_int(data[key]):
            raise ConfigurationError(f"Cohort error: '{key}' must be an integer.")
    if not _is_number(data["min_duration_hours"]) or data["min_duration_hours"] < 0:
        raise ConfigurationError("Cohort error: 'min_duration_hours' must be a nonnegative number.")
    rules = CohortRules(data["test_window_days"], data["prior_window_days"], data["followup_days"],
                        float(data["min_duration_hours"]))
    return CohortSection(
        rules=rules,
        inclusion=_resolve(data["inclusion"], "inclusion", "Cohort", base_dir),
        exclusion=_resolve(data["exclusion"], "exclusion", "Cohort", base_dir),
        hierarchy=_resolve(data["hierarchy"], "hierarchy", "Cohort", base_dir),
    )


def check_features(data: dict, base_dir: Optional[Path], seed: int, n_seeds: int) -> FeatureSection:
    """
    Explicit split seeds must cover the model section's repetitions; without them the seeds are
    seed, seed + 1, ..., seed + n_seeds - 1.
    """
    data = _check_keys(data, features_keys, "Features")
    scheme = data["scheme"]
    if scheme is not None:
        if not isinstance(scheme, list) or not all(isinstance(pair, list) and len(pair) == 2 for pair in scheme):
            raise ConfigurationError("Features error: 'scheme' must be a list of [start, end] pairs or null.")
        if not all((start is None or _is_int(start)) and _is_int(end) for start, end in scheme):
            raise ConfigurationError("Features error: 'scheme' bounds must be integers (the first start may be null).")
        scheme = tuple((start, end) for start, end in scheme)

    scenarios = data["scenarios"]
    if not isinstance(scenarios, list) or not scenarios:
        raise ConfigurationError("Features error: 'scenarios' must be a non-empty list.")
    try:
        scenarios = tuple(Scenario(value) for value in scenarios)
    except ValueError:
        raise ConfigurationError(f"Features error: 'scenarios' must be taken from {[s.value for s in Scenario]}.")
    if len(set(scenarios)) != len(scenarios):
        raise ConfigurationError("Features error: 'scenarios' must not repeat.")

    split_seeds = data["split_seeds"]
    if split_seeds is None:
        split_seeds = [seed + i for i in range(n_seeds)]
    elif not isinstance(split_seeds, list) or not all(_is_int(value) and value >= 0 for value in split_seeds):
        raise ConfigurationError("Features error: 'split_seeds' must be a list of nonnegative integers or null.")
    elif len(set(split_seeds)) != len(split_seeds) or len(split_seeds) < n_seeds:
        raise ConfigurationError(f"Features error: 'split_seeds' must hold at least {n_seeds} distinct seeds.")

    if not _is_number(data["train_fraction"]) or not 0 < data["train_fraction"] < 1:
        raise ConfigurationError("Features error: 'train_fraction' must be in (0, 1).")
    if not isinstance(data["stratified"], bool):
        raise ConfigurationError("Features error: 'stratified' must be a Boolean.")

    return FeatureSection(
        spec=_resolve(data["spec"], "spec", "Features", base_dir),
        scheme=scheme,
        scenarios=scenarios,
        split_seeds=tuple(split_seeds[:n_seeds]),
        train_fraction=float(data["train_fraction"]),
        stratified=data["stratified"],
    )


def _check_families(values, key: str, section: str) -> tuple[str, ...]:
    if not isinstance(values, list) or not all(value in FAMILIES for value in values):
        raise ConfigurationError(f"{section} error: '{key}' must be a list taken from {list(FAMILIES)}.")
    if len(set(values)) != len(values):
        raise ConfigurationError(f"{section} error: '{key}' must not repeat.")
    return tuple(values)


def check_models(data: dict) -> ModelSection:
    data = _check_keys(data, models_keys, "Models")
    families = _check_families(data["families"], "families", "Models")
    if not families:
        raise ConfigurationError("Models error: 'families' must not be empty.")
    if not _is_int(data["n_seeds"]) or data["n_seeds"] < 1:
        raise ConfigurationError("Models error: 'n_seeds' must be a positive integer.")
    if not _is_int(data["budget"]) or data["budget"] < 0:
        raise ConfigurationError("Models error: 'budget' must be a nonnegative integer.")
    for key in ("params", "spaces"):
        value = data[key]
        if not isinstance(value, dict) or not all(family in FAMILIES and isinstance(item, dict)
                                                  for family, item in value.items()):
            raise ConfigurationError(f"Models error: '{key}' must map families to objects.")
    for family, space in data["spaces"].items():
        if not space or not all(isinstance(values, list) and values for values in space.values()):
            raise ConfigurationError(f"Models error: the '{family}' space must map hyperparameters to non-empty lists.")
    return ModelSection(families, data["n_seeds"], data["budget"], data["params"], data["spaces"])


def check_explain(data: dict, families: tuple[str, ...]) -> ExplainSection:
    data = _check_keys(data, explain_keys, "Explain")
    models = _check_families(data["models"], "models", "Explain")
    if not set(models) <= set(families):
        raise ConfigurationError("Explain error: 'models' must be a subset of the trained families.")
    method = data["method"]
    if method is not None:
        try:
            method = ExplainMethod(method)
        except ValueError:
            raise ConfigurationError(f"Explain error: 'method' must be one of {[m.value for m in ExplainMethod]} or null.")
        if method == ExplainMethod.TREE and not set(models) <= {"rf", "et"}:
            raise ConfigurationError("Explain error: the 'tree' method only applies to the forest families.")
        if method == ExplainMethod.GRADIENT and not set(models) <= {"mlp", "fusion"}:
            raise ConfigurationError("Explain error: the 'gradient' method only applies to the network families.")
    if not _is_int(data["top_k"]) or data["top_k"] < 1:
        raise ConfigurationError("Explain error: 'top_k' must be a positive integer.")
    if not _is_int(data["background"]) or data["background"] < 1:
        raise ConfigurationError("Explain error: 'background' must be a positive integer.")
    _optional_positive_int(data, "n_samples", "Explain")
    _optional_positive_int(data, "max_rows", "Explain")
    return ExplainSection(models, method, data["top_k"], data["background"], data["n_samples"], data["max_rows"])


def check_stats(data: dict) -> float:
    data = _check_keys(data, stats_keys, "Stats")
    if not _is_number(data["alpha"]) or not 0 < data["alpha"] < 1:
        raise ConfigurationError("Stats error: 'alpha' must be in (0, 1).")
    return float(data["alpha"])


def check_pipeline_config(data: dict, base_dir: Union[str, Path] = None, source: Union[str, Path] = None) -> PipelineConfig:
    """
    Validates a complete pipeline configuration (defaults already merged in).

    Parameters:
        data (dict): Configuration with every section present.
        base_dir (str | Path, optional): Directory relative resource paths are resolved against.
        source (str | Path, optional): File the configuration was read from.

    Returns:
        PipelineConfig: Validated configuration.

    Raises:
        ConfigurationError: If a section is missing, has unknown keys or holds an invalid value.
    """
    if not isinstance(data, dict):
        raise ConfigurationError("Pipeline error: the configuration must be an object.")
    unknown = set(data.keys()) - set(section_keys)
    if unknown:
        raise ConfigurationError(f"Pipeline error: unknown sections {sorted(unknown)}.")
    missing = [key for key in section_keys if key not in data]
    if missing:
        raise ConfigurationError(f"Pipeline error: missing sections {missing}.")
    if not _is_int(data["seed"]) or data["seed"] < 0:
        raise ConfigurationError("Pipeline error: 'seed' must be a nonnegative integer.")

    base_dir = Path(base_dir) if base_dir is not None else None
    work_dir, records = check_paths(data["paths"], base_dir)
    generator_data = data["generator"]
    if not isinstance(generator_data, dict):
        raise ConfigurationError("Generator error: the generator section must be an object.")
    generator = check_generator_config({"seed": data["seed"], **generator_data}, base_dir)
    models = check_models(data["models"])

    return PipelineConfig(
        seed=data["seed"],
        work_dir=work_dir,
        records=records,
        generator=generator,
        cohort=check_cohort(data["cohort"], base_dir),
        features=check_features(data["features"], base_dir, data["seed"], models.n_seeds),
        models=models,
        explain=check_explain(data["explain"], models.families),
        alpha=check_stats(data["stats"]),
        source=Path(source) if source is not None else None,
    )
