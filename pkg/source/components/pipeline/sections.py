from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from ..cohort.hierarchy import CodeHierarchy
from ..cohort.patterns import PatternSet
from ..cohort.selection import CohortRules
from ..explain.attribution import ExplainMethod
from ..features.builder import SplitConfig
from ..features.fused import Scenario
from ..features.intervals import IntervalScheme, default_interval_scheme
from ..features.spec import FeatureSpec
from ..synth.config import GeneratorConfig


@dataclass(frozen=True)
class CohortSection:
    rules: CohortRules
    inclusion: Path
    exclusion: Path
    hierarchy: Path

    def patterns(self) -> PatternSet:
        return PatternSet.from_files(self.inclusion, self.exclusion)

    def load_hierarchy(self) -> CodeHierarchy:
        return CodeHierarchy.from_file(self.hierarchy)


@dataclass(frozen=True)
class FeatureSection:
    """
    `scheme` holds explicit interval ranges or None for the default layout; `split_seeds` are already
    resolved (one per repetition of the train/test split).
    """
    spec: Path
    scheme: Optional[tuple]
    scenarios: tuple[Scenario, ...]
    split_seeds: tuple[int, ...]
    train_fraction: float = 0.7
    stratified: bool = False

    def feature_spec(self) -> FeatureSpec:
        return FeatureSpec.from_file(self.spec)

    def interval_scheme(self) -> IntervalScheme:
        return default_interval_scheme() if self.scheme is None else IntervalScheme(self.scheme)

    def split(self, seed: int) -> SplitConfig:
        return SplitConfig(seed, self.train_fraction, self.stratified)


@dataclass(frozen=True)
class ModelSection:
    """
    A budget of 0 fits `params[family]` directly; a positive budget runs the randomized search over
    `spaces[family]` (the family's default space when absent).
    """
    families: tuple[str, ...]
    n_seeds: int
    budget: int = 0
    params: dict = field(default_factory=dict)
    spaces: dict = field(default_factory=dict)

    def params_for(self, family: str) -> dict:
        return dict(self.params.get(family, {}))


@dataclass(frozen=True)
class ExplainSection:
    """
    `method` None picks exact tree attributions for forests and expected gradients for networks.
    `max_rows` caps the explained test rows per split (None explains all of them).
    """
    models: tuple[str, ...]
    method: Optional[ExplainMethod] = None
    top_k: int = 35
    background: int = 100
    n_samples: Optional[int] = None
    max_rows: Optional[int] = None


@dataclass(frozen=True)
class PipelineConfig:
    """
    Validated pipeline configuration. `records` points at an external record file; when it is None the
    `generate` stage produces the records inside the work directory.
    """
    seed: int
    work_dir: Path
    records: Optional[Path]
    generator: GeneratorConfig
    cohort: CohortSection
    features: FeatureSection
    models: ModelSection
    explain: ExplainSection
    alpha: float
    source: Optional[Path] = None

    @property
    def generates_records(self) -> bool:
        return self.records is None
