import itertools
import json
import logging
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from ..cohort.selection import CohortEntry, build_cohort, read_cohort, write_cohort
from ..errors import ConfigurationError, MissingArtifactError
from ..event import Event
from ..explain.attribution import ExplainMethod, default_method, sample_background, shap_matrix
from ..explain.graphics import save_boxplot_svg
from ..explain.summary import (
    ShapSummary, format_overlap_report, read_shap_matrix, summarize_shap, top_k_overlap, write_boxplot_data,
    write_shap_matrix, write_shap_summary,
)
from ..features.builder import RawFeatures, build_raw_features, drop_unusable_rows
from ..features.container import read_features, write_features
from ..features.fused import Scenario, count_leakage_violations
from ..features.scenario import apply_scenario
from ..features.transform import fit_transform
from ..models.container import load_model, save_model
from ..models.evaluation import EvalReport, aggregate_over_seeds, evaluate, write_table3
from ..models.selection import cross_validate, default_space, fit_family
from ..models.training import TemporalLayout
from ..records.store import RecordStore, ingest_records
from ..stats.summary import format_summary, summarize_raw, write_summary_tsv
from ..synth.generator import generate_cohort
from ..synth.planted import ground_truth_ranking
from .artifacts import ArtifactLayout
from .manifest import Manifest, ManifestEntry, outputs_digest, section_payloads, stage_config_hash
from .sections import PipelineConfig

log = logging.getLogger(__name__)

COMMANDS = ("generate", "cohort", "featurize", "train", "explain", "stats", "report", "all")
PLANTED_TOP = 5


def featurize_stage(scenario: Scenario) -> str:
    return f"featurize:{scenario.value}"


def train_stage(family: str, scenario: Scenario) -> str:
    return f"train:{family}:{scenario.value}"


def explain_stage(family: str, scenario: Scenario) -> str:
    return f"explain:{family}:{scenario.value}"


def command_hint(stage: str) -> str:
    """
    Command line that produces a stage, e.g. "train --model rf --scenario gp" for "train:rf:gp".
    """
    name, *parts = stage.split(":")
    if name == "featurize":
        return f"featurize --scenario {parts[0]}"
    if name in ("train", "explain"):
        return f"{name} --model {parts[0]} --scenario {parts[1]}"
    return name


def explained_rows(n: int, max_rows: Optional[int], seed: int) -> np.ndarray:
    """
    Test rows attributed in one split: all of them, or a seeded subset of `max_rows` in row order.
    """
    if max_rows is None or n <= max_rows:
        return np.arange(n)
    return np.sort(np.random.default_rng(seed).choice(n, size=max_rows, replace=False))


def feature_rank(ranking: Sequence[str], name: str) -> Optional[int]:
    """
    1-based rank of a planted feature among attributed columns; a quantity matches its best aggregate
    and interval column (e.g. "spo2" matches "spo2_min[d-1]").
    """
    for position, column in enumerate(ranking, start=1):
        if column == name or column.split("[", 1)[0].rsplit("_", 1)[0] == name:
            return position
    return None


def format_planted_report(top_feature: str, summaries: dict, per_split: dict) -> str:
    """
    Rank of the strongest planted feature in every pooled summary and the number of splits in which it
    is among the first PLANTED_TOP features.
    """
    lines = [f"Top planted feature: {top_feature}"]
    for (family, scenario), summary in summaries.items():
        label = f"{family} [{scenario.value}]"
        rank = feature_rank(summary.ranking, top_feature)
        if rank is None:
            lines.append(f"{label}: not in the feature set")
            continue
        ranks = [feature_rank(item.ranking, top_feature) for item in per_split[(family, scenario)]]
        hits = sum(value is not None and value <= PLANTED_TOP for value in ranks)
        lines.append(f"{label}: rank {rank} of {len(summary.ranking)} pooled, "
                     f"top {PLANTED_TOP} in {hits} of {len(ranks)} splits")
    return "\n".join(lines) + "\n"


class Pipeline(object):
    """
    Runs the stages of the pipeline inside one work directory.

    Each stage checks that its upstream stages are recorded in the manifest with the current
    configuration, is skipped when its own outputs are intact and its configuration fingerprint is
    unchanged, and otherwise runs and records a manifest line. `stage_completed(stage, skipped)` is
    raised after every stage.
    """

    def __init__(self, config: PipelineConfig, jobs: int = 1, force: bool = False) -> None:
        self._config = config
        self._jobs = max(1, jobs)
        self._force = force
        self._layout = ArtifactLayout(config.work_dir)
        self._manifest = Manifest(self._layout.manifest)
        self._payloads = None
        self._store: Optional[RecordStore] = None
        self._cohort: Optional[list[CohortEntry]] = None
        self._raw: Optional[RawFeatures] = None
        self.stage_completed = Event()

    @property
    def config(self) -> PipelineConfig:
        return self._config

    @property
    def layout(self) -> ArtifactLayout:
        return self._layout

    @property
    def manifest(self) -> Manifest:
        return self._manifest

    @property
    def records_path(self) -> Path:
        return self._layout.records if self._config.generates_records else self._config.records

    def config_hash(self, stage: str) -> str:
        if self._payloads is None:
            self._payloads = section_payloads(self._config)
        return stage_config_hash(stage, self._payloads)

    def run(self, command: str, scenarios: Optional[Sequence[str]] = None,
            families: Optional[Sequence[str]] = None, svg: bool = False) -> None:
        """
        Runs one command. `scenarios` and `families` narrow featurize, train and explain to configured
        scenarios and model families; `all` always covers the whole configuration.

        Raises:
            ConfigurationError: If the command, a scenario or a family is not configured, or an upstream
                stage ran with a different configuration (without `force`).
            MissingArtifactError: If an upstream stage has not run.
        """
        if command not in COMMANDS:
            raise ConfigurationError(f"Pipeline error: unknown command '{command}', expected one of {list(COMMANDS)}.")
        if command == "all":
            scenarios, families = None, None
        selected_scenarios = self._select_scenarios(scenarios)
        selected_families = self._select_families(families, self._config.models.families, "Models")

        if command in ("generate", "all") and self._config.generates_records:
            self.generate()
        if command in ("cohort", "all"):
            self.cohort()
        if command in ("featurize", "all"):
            for scenario in selected_scenarios:
                self.featurize(scenario)
        if command in ("train", "all"):
            for family in selected_families:
                for scenario in selected_scenarios:
                    self.train(family, scenario)
        if command in ("explain", "all"):
            explained = [family for family in selected_families if family in self._config.explain.models]
            if families is not None and not explained:
                raise ConfigurationError("Explain error: none of the selected models is configured to be explained.")
            for family in explained:
                for scenario in selected_scenarios:
                    self.explain(family, scenario)
        if command in ("stats", "all"):
            self.stats()
        if command in ("report", "all"):
            self.report(svg)
        if command == "generate" and not self._config.generates_records:
            log.info("Records are read from %s; nothing to generate", self._config.records)

    def _select_scenarios(self, values: Optional[Sequence[str]]) -> list[Scenario]:
        configured = list(self._config.features.scenarios)
        if values is None:
            return configured
        try:
            selected = [Scenario(value) for value in values]
        except ValueError:
            raise ConfigurationError(f"Features error: scenarios must be taken from {[s.value for s in Scenario]}.")
        for scenario in selected:
            if scenario not in configured:
                raise ConfigurationError(f"Features error: scenario '{scenario.value}' is not configured.")
        return selected

    @staticmethod
    def _select_families(values: Optional[Sequence[str]], configured: Sequence[str], section: str) -> list[str]:
        if values is None:
            return list(configured)
        for family in values:
            if family not in configured:
                raise ConfigurationError(f"{section} error: model '{family}' is not configured.")
        return list(values)

    # Stage bookkeeping

    def _outputs_intact(self, entry: ManifestEntry) -> bool:
        root = self._layout.root
        if not all((root / name).is_file() for name in entry.outputs):
            return False
        return outputs_digest(root, entry.outputs) == entry.output_hash

    def _require(self, stage: str, artifact: Path) -> None:
        entry = self._manifest.get(stage)
        if entry is None or not all((self._layout.root / name).is_file() for name in entry.outputs):
            raise MissingArtifactError(command_hint(stage), str(artifact))
        if entry.config_hash != self.config_hash(stage):
            if not self._force:
                raise ConfigurationError(f"Pipeline error: `{command_hint(stage)}` ran with a different configuration; "
                                         f"rerun it or pass --force.")
            log.warning("%s ran with a different configuration; continuing because of --force", stage)

    def _require_records(self) -> None:
        if self._config.generates_records:
            self._require("generate", self._layout.records)

    def _run_stage(self, stage: str, work: Callable[[], list[Path]], seed: Optional[int] = None) -> bool:
        config_hash = self.config_hash(stage)
        seed = self._config.seed if seed is None else seed
        entry = self._manifest.get(stage)
        if not self._force and entry is not None and entry.config_hash == config_hash and self._outputs_intact(entry):
            log.info("%s: up to date, skipped", stage)
            self.stage_completed(stage, True)
            return False

        log.info("%s: running", stage)
        outputs = work()
        names = tuple(sorted(self._layout.relative(path) for path in outputs))
        entry = ManifestEntry(stage, config_hash, seed, outputs_digest(self._layout.root, names), names)
        self._manifest.record(entry)
        log.info("%s: done, %d outputs", stage, len(names))
        self.stage_completed(stage, False)
        return True

    @staticmethod
    def _prepare(path: Path) -> Path:
        path.parent.mkdir(parents=True, exist_ok=True)
        return path

    # Shared inputs, loaded once per pipeline

    def _records_store(self) -> RecordStore:
        if self._store is None:
            self._store = ingest_records(self.records_path)
        return self._store

    def _cohort_entries(self) -> list[CohortEntry]:
        if self._cohort is None:
            self._cohort = read_cohort(self._layout.cohort)
        return self._cohort

    def _raw_features(self) -> RawFeatures:
        if self._raw is None:
            features = self._config.features
            self._raw = build_raw_features(self._cohort_entries(), self._records_store(), features.feature_spec(),
                                           features.interval_scheme(), self._config.cohort.load_hierarchy())
        return self._raw

    # Stages

    def generate(self) -> bool:
        def work() -> list[Path]:
            self._store, self._cohort, self._raw = None, None, None
            generate_cohort(self._config.generator, self._prepare(self._layout.records), self._layout.truth)
            return [self._layout.records, self._layout.truth]

        return self._run_stage("generate", work, self._config.generator.seed)

    def cohort(self) -> bool:
        self._require_records()

        def work() -> list[Path]:
            section = self._config.cohort
            self._cohort = build_cohort(self._records_store(), section.patterns(), section.load_hierarchy(), section.rules)
            self._raw = None
            write_cohort(self._cohort, self._prepare(self._layout.cohort))
            return [self._layout.cohort]

        return self._run_stage("cohort", work)

    def featurize(self, scenario: Scenario) -> bool:
        self._require_records()
        self._require("cohort", self._layout.cohort)

        def work() -> list[Path]:
            features = self._config.features
            spec, scheme = features.feature_spec(), features.interval_scheme()
            hierarchy = self._config.cohort.load_hierarchy()
            outputs = []
            for seed in features.split_seeds:
                train, test, _ = fit_transform(self._cohort_entries(), self._records_store(), spec, scheme,
                                               features.split(seed), hierarchy, self._raw_features())
                if scenario != Scenario.ALL:
                    train, test = apply_scenario(train, scenario), apply_scenario(test, scenario)
                violations = count_leakage_violations(train) + count_leakage_violations(test)
                if violations:
                    log.warning("Split seed %d [%s]: %d temporal cells at or after the admission day",
                                seed, scenario.value, violations)
                for split, values in (("train", train), ("test", test)):
                    path = self._prepare(self._layout.features(scenario, seed, split))
                    write_features(values, path)
                    outputs.append(path)
            return outputs

        return self._run_stage(featurize_stage(scenario), work)

    def train(self, family: str, scenario: Scenario) -> bool:
        seeds = self._config.features.split_seeds
        self._require(featurize_stage(scenario), self._layout.features(scenario, seeds[0], "train"))

        def work() -> list[Path]:
            section = self._config.models
            outputs = []
            for seed in seeds:
                train = read_features(self._layout.features(scenario, seed, "train"))
                test = read_features(self._layout.features(scenario, seed, "test"))
                temporal = TemporalLayout(train.m, train.t)
                if section.budget > 0:
                    space = section.spaces.get(family) or default_space(family)
                    result = cross_validate(family, train.X_early, train.y, space, section.budget, seed, temporal,
                                            self._jobs)
                    model, params = result.model, result.best_params
                else:
                    params = section.params_for(family)
                    model = fit_family(family, train.X_early, train.y, params, seed, temporal, self._jobs)
                report = evaluate(model, test.X_early, test.y, scenario, family)
                log.info("%s [%s] split seed %d: F1(H1) %.3f", family, scenario.value, seed, report.value("H1", "f1"))

                model_path = self._prepare(self._layout.model(family, scenario, seed))
                save_model(model, model_path)
                evaluation_path = self._layout.evaluation(family, scenario, seed)
                with open(evaluation_path, "w", encoding="utf-8", newline="\n") as f:
                    json.dump({**report.as_dict(), "params": params, "split_seed": seed}, f, indent=2, sort_keys=True)
                    f.write("\n")
                outputs += [model_path, evaluation_path]
            return outputs

        return self._run_stage(train_stage(family, scenario), work)

    def explain(self, family: str, scenario: Scenario) -> bool:
        seeds = self._config.features.split_seeds
        self._require(featurize_stage(scenario), self._layout.features(scenario, seeds[0], "test"))
        self._require(train_stage(family, scenario), self._layout.model(family, scenario, seeds[0]))

        def work() -> list[Path]:
            section = self._config.explain
            outputs = []
            for seed in seeds:
                model = load_model(self._layout.model(family, scenario, seed))
                test = read_features(self._layout.features(scenario, seed, "test"))
                method = section.method or default_method(model)
                background = None
                if method != ExplainMethod.TREE:
                    train = read_features(self._layout.features(scenario, seed, "train"))
                    background = sample_background(train.X_early, section.background, seed)
                rows = explained_rows(test.n, section.max_rows, seed)
                matrix = shap_matrix(model, test.X_early[rows], test.feature_names, scenario.value, method,
                                     background, section.n_samples, seed, self._jobs, family)
                path = self._prepare(self._layout.shap(family, scenario, seed))
                write_shap_matrix(matrix, path)
                outputs.append(path)
            return outputs

        return self._run_stage(explain_stage(family, scenario), work)

    def stats(self) -> bool:
        self._require_records()
        self._require("cohort", self._layout.cohort)

        def work() -> list[Path]:
            summary = summarize_raw(drop_unusable_rows(self._raw_features()), self._config.alpha, self._jobs)
            write_summary_tsv(summary, self._prepare(self._layout.stats_table))
            with open(self._layout.stats_text, "w", encoding="utf-8", newline="\n") as f:
                f.write(format_summary(summary))
            return [self._layout.stats_table, self._layout.stats_text]

        return self._run_stage("stats", work)

    def report(self, svg: bool = False) -> bool:
        """
        Writes the metrics table, the attribution summaries, the top-k overlaps and, for generated
        cohorts, the ranks of the strongest planted feature. SVG box plots are extra outputs that are not
        part of the manifest digest.
        """
        config = self._config
        seeds = config.features.split_seeds
        scenarios = list(config.features.scenarios)
        for family in config.models.families:
            for scenario in scenarios:
                self._require(train_stage(family, scenario), self._layout.evaluation(family, scenario, seeds[0]))
        for family in config.explain.models:
            for scenario in scenarios:
                self._require(explain_stage(family, scenario), self._layout.shap(family, scenario, seeds[0]))

        def work() -> list[Path]:
            top_k = config.explain.top_k
            reports = []
            for family in config.models.families:
                for scenario in scenarios:
                    per_seed = []
                    for seed in seeds:
                        with open(self._layout.evaluation(family, scenario, seed), encoding="utf-8") as f:
                            per_seed.append(EvalReport.from_dict(json.load(f)))
                    reports.append(aggregate_over_seeds(per_seed))
            write_table3(reports, self._prepare(self._layout.table3), config.models.families)
            outputs = [self._layout.table3]

            summaries: dict[tuple[str, Scenario], ShapSummary] = {}
            per_split: dict[tuple[str, Scenario], list[ShapSummary]] = {}
            for family in config.explain.models:
                for scenario in scenarios:
                    matrices = [read_shap_matrix(self._layout.shap(family, scenario, seed)) for seed in seeds]
                    summary = summarize_shap(matrices, top_k)
                    summaries[(family, scenario)] = summary
                    per_split[(family, scenario)] = [summarize_shap(matrix, top_k) for matrix in matrices]
                    write_shap_summary(summary, self._layout.shap_summary(family, scenario))
                    write_boxplot_data(summary, self._layout.boxplot_data(family, scenario))
                    outputs += [self._layout.shap_summary(family, scenario), self._layout.boxplot_data(family, scenario)]
                    if svg:
                        save_boxplot_svg(summary, self._layout.boxplot_svg(family, scenario))

            if len(config.explain.models) > 1:
                entries = []
                for scenario in scenarios:
                    for family_a, family_b in itertools.combinations(config.explain.models, 2):
                        count, fraction = top_k_overlap(summaries[(family_a, scenario)],
                                                        summaries[(family_b, scenario)], top_k)
                        entries.append((family_a, family_b, scenario.value, count, fraction))
                        log.info("Top-%d overlap %s vs %s [%s]: %d", top_k, family_a, family_b, scenario.value, count)
                with open(self._layout.overlap, "w", encoding="utf-8", newline="\n") as f:
                    f.write(format_overlap_report(entries, top_k))
                outputs.append(self._layout.overlap)

            if summaries and config.generates_records and self._layout.truth.is_file():
                ranking = ground_truth_ranking(self._layout.truth)
                if ranking:
                    with open(self._layout.planted, "w", encoding="utf-8", newline="\n") as f:
                        f.write(format_planted_report(ranking[0], summaries, per_split))
                    outputs.append(self._layout.planted)
            return outputs

        return self._run_stage("report", work)
