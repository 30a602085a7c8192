from pathlib import Path
from typing import Union

from ..features.fused import Scenario


class ArtifactLayout(object):
    """
    File names of every stage output inside a work directory. All names are relative to the work
    directory when recorded in the manifest.
    """

    def __init__(self, work_dir: Union[str, Path]) -> None:
        self._root = Path(work_dir)

    @property
    def root(self) -> Path:
        return self._root

    @property
    def manifest(self) -> Path:
        return self._root / "manifest.jsonl"

    @property
    def records(self) -> Path:
        return self._root / "records.jsonl"

    @property
    def truth(self) -> Path:
        return self._root / "truth.jsonl"

    @property
    def cohort(self) -> Path:
        return self._root / "cohort.jsonl"

    def features(self, scenario: Scenario, seed: int, split: str) -> Path:
        return self._root / "features" / scenario.value / f"seed{seed}.{split}.bin"

    def model(self, family: str, scenario: Scenario, seed: int) -> Path:
        return self._root / "models" / family / scenario.value / f"seed{seed}.bin"

    def evaluation(self, family: str, scenario: Scenario, seed: int) -> Path:
        return self._root / "models" / family / scenario.value / f"seed{seed}.eval.json"

    def shap(self, family: str, scenario: Scenario, seed: int) -> Path:
        return self._root / "shap" / family / scenario.value / f"seed{seed}.bin"

    @property
    def stats_table(self) -> Path:
        return self._root / "stats" / "summary.tsv"

    @property
    def stats_text(self) -> Path:
        return self._root / "stats" / "summary.txt"

    @property
    def report_dir(self) -> Path:
        return self._root / "report"

    @property
    def table3(self) -> Path:
        return self.report_dir / "table3.tsv"

    def shap_summary(self, family: str, scenario: Scenario) -> Path:
        return self.report_dir / f"shap_{family}_{scenario.value}.tsv"

    def boxplot_data(self, family: str, scenario: Scenario) -> Path:
        return self.report_dir / f"shap_{family}_{scenario.value}.json"

    def boxplot_svg(self, family: str, scenario: Scenario) -> Path:
        return self.report_dir / f"shap_{family}_{scenario.value}.svg"

    @property
    def overlap(self) -> Path:
        return self.report_dir / "overlap.txt"

    @property
    def planted(self) -> Path:
        return self.report_dir / "planted.txt"

    def relative(self, path: Path) -> str:
        return Path(path).relative_to(self._root).as_posix()
