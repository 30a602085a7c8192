import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Union

from ..cohort.evidence import record_matches
from ..cohort.hierarchy import CodeHierarchy
from ..cohort.patterns import PatternSet
from ..errors import ConfigurationError
from ..records.record import RawRecord, RecordKind, CodeSystem

AGGREGATES = ("last", "min", "max", "mean")
AGE_BINS = (
    "age_lt10", "age_10_20", "age_20_30", "age_30_40", "age_40_50",
    "age_50_60", "age_60_70", "age_70_80", "age_ge80", "age_unknown",
)
GENDER_COLUMN = "gender_male"

condition_keys = ["name", "scope", "icd10", "patterns"]
quantity_keys = ["name", "loinc", "family"]


class Scope(Enum):
    """
    Time span over which a condition is aggregated.

    CHRONIC: any mention before the end of the period of interest.
    ACUTE / PRESENT: mentions inside the period of interest.
    PAST: mentions before the period of interest.
    """
    CHRONIC = "chronic"
    ACUTE = "acute"
    PRESENT = "present"
    PAST = "past"


@dataclass(frozen=True)
class ConditionSpec:
    name: str
    scope: Scope
    icd10: tuple[str, ...]
    patterns: PatternSet = field(compare=False)
    gp_excluded: bool = False

    def matches(self, record: RawRecord, hierarchy: CodeHierarchy) -> bool:
        """
        ICD-10 coded diagnoses are matched by code prefix, any other diagnosis by its description
        or, for SNOMED codes, through the concept hierarchy.
        """
        if record.kind != RecordKind.DIAGNOSIS:
            return False
        if record.code_system == CodeSystem.ICD10 and record.code:
            return record.code.startswith(self.icd10) if self.icd10 else False
        return record_matches(record, self.patterns, hierarchy)

    def admits(self, day_offset: int, lower: int, upper: int) -> bool:
        """
        Whether a matching event at `day_offset` counts, given the period of interest [lower, upper).
        """
        if self.scope == Scope.CHRONIC:
            return day_offset < upper
        if self.scope == Scope.PAST:
            return day_offset < min(lower, upper)
        return lower <= day_offset < upper


@dataclass(frozen=True)
class QuantitySpec:
    name: str
    loinc: str
    family: str
    gp_excluded: bool = False


class FeatureSpec(object):
    """
    Tabular conditions and measured quantities. Column layout:

    tabular (h): conditions, age one-hots, gender;
    temporal channels (m): for each quantity the aggregates last, min, max, mean.
    """

    def __init__(self, conditions: list[ConditionSpec], quantities: list[QuantitySpec]) -> None:
        self._conditions = tuple(conditions)
        self._quantities = tuple(quantities)
        names = self.tabular_names + [quantity.name for quantity in self._quantities]
        duplicates = sorted({name for name in names if names.count(name) > 1})
        if duplicates:
            raise ConfigurationError(f"Feature error: duplicated names {duplicates}.")
        self._by_loinc = {quantity.loinc: index for index, quantity in enumerate(self._quantities)}
        if len(self._by_loinc) != len(self._quantities):
            raise ConfigurationError("Feature error: two quantities share a LOINC code.")

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "FeatureSpec":
        with open(path, encoding="utf-8") as f:
            try:
                definition = json.loads(f.read())
            except json.JSONDecodeError as err:
                raise ConfigurationError(f"Feature error: {path} is not valid JSON ({err}).")
        return check_feature_definition(definition)

    @property
    def conditions(self) -> tuple[ConditionSpec, ...]:
        return self._conditions

    @property
    def quantities(self) -> tuple[QuantitySpec, ...]:
        return self._quantities

    @property
    def tabular_names(self) -> list[str]:
        return [condition.name for condition in self._conditions] + list(AGE_BINS) + [GENDER_COLUMN]

    @property
    def channel_names(self) -> list[str]:
        return [f"{quantity.name}_{aggregate}" for quantity in self._quantities for aggregate in AGGREGATES]

    @property
    def h(self) -> int:
        return len(self._conditions) + len(AGE_BINS) + 1

    @property
    def m(self) -> int:
        return len(AGGREGATES) * len(self._quantities)

    def quantity_index(self, loinc: str) -> int:
        """
        Index of the quantity measured by `loinc`, -1 if the code is not a feature.
        """
        return self._by_loinc.get(loinc, -1)

    @property
    def gp_excluded_tabular(self) -> list[str]:
        return [condition.name for condition in self._conditions if condition.gp_excluded]

    @property
    def gp_excluded_channels(self) -> list[str]:
        return [f"{quantity.name}_{aggregate}" for quantity in self._quantities if quantity.gp_excluded
                for aggregate in AGGREGATES]


def age_bin(age_years) -> str:
    """
    Decade bin of an age (None gives the unknown bin).
    """
    if age_years is None:
        return AGE_BINS[-1]
    if age_years < 10:
        return AGE_BINS[0]
    if age_years >= 80:
        return AGE_BINS[8]
    return AGE_BINS[age_years // 10]


def _check_strings(values, message: str) -> None:
    if not isinstance(values, list) or not all(isinstance(value, str) for value in values):
        raise ConfigurationError(message)


def check_feature_definition(definition: dict) -> FeatureSpec:
    """
    Validates a feature definition dictionary and builds the FeatureSpec.

    Raises:
        ConfigurationError: If the structure does not match.
    """
    if not isinstance(definition, dict):
        raise ConfigurationError("Feature error: the definition must be an object.")
    if not isinstance(definition.get("conditions"), list) or not definition["conditions"]:
        raise ConfigurationError("Feature error: 'conditions' must be a non-empty list.")
    if not isinstance(definition.get("quantities"), list) or not definition["quantities"]:
        raise ConfigurationError("Feature error: 'quantities' must be a non-empty list.")

    conditions = []
    for item in definition["conditions"]:
        if not isinstance(item, dict) or not all(key in item for key in condition_keys):
            raise ConfigurationError(f"Feature error: each condition needs keys {condition_keys}.")
        if not isinstance(item["name"], str):
            raise ConfigurationError("Feature error: condition 'name' must be a string.")
        try:
            scope = Scope(item["scope"])
        except ValueError:
            raise ConfigurationError(f"Feature error: condition '{item['name']}' has unknown scope '{item['scope']}'.")
        _check_strings(item["icd10"], f"Feature error: 'icd10' of '{item['name']}' must be a list of strings.")
        _check_strings(item["patterns"], f"Feature error: 'patterns' of '{item['name']}' must be a list of strings.")
        _check_strings(item.get("exclusions", []), f"Feature error: 'exclusions' of '{item['name']}' must be a list of strings.")
        if not isinstance(item.get("gp_excluded", False), bool):
            raise ConfigurationError(f"Feature error: 'gp_excluded' of '{item['name']}' must be a Boolean.")
        conditions.append(ConditionSpec(
            name=item["name"],
            scope=scope,
            icd10=tuple(item["icd10"]),
            patterns=PatternSet(item["patterns"], item.get("exclusions", [])),
            gp_excluded=item.get("gp_excluded", False),
        ))

    quantities = []
    for item in definition["quantities"]:
        if not isinstance(item, dict) or not all(isinstance(item.get(key), str) for key in quantity_keys):
            raise ConfigurationError(f"Feature error: each quantity needs string keys {quantity_keys}.")
        if not isinstance(item.get("gp_excluded", False), bool):
            raise ConfigurationError(f"Feature error: 'gp_excluded' of '{item['name']}' must be a Boolean.")
        quantities.append(QuantitySpec(item["name"], item["loinc"], item["family"], item.get("gp_excluded", False)))

    return FeatureSpec(conditions, quantities)


DEFAULT_SPEC_PATH = Path(__file__).resolve().parents[1] / "json" / "features" / "default.json"


def default_feature_spec() -> FeatureSpec:
    return FeatureSpec.from_file(DEFAULT_SPEC_PATH)
