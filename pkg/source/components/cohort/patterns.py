import re
from pathlib import Path
from typing import Iterable, Union

from ..errors import ConfigurationError

DEFAULT_INCLUSION = ("covid", "sars-cov-2", "coronavirus disease")
DEFAULT_EXCLUSION = ("ruled out", "screening", "exposure to", "negative")


def _compile(patterns: Iterable[str], kind: str) -> tuple[re.Pattern, ...]:
    compiled = []
    for pattern in patterns:
        try:
            compiled.append(re.compile(pattern, re.IGNORECASE))
        except re.error as err:
            raise ConfigurationError(f"Pattern error: {kind} pattern '{pattern}' does not compile ({err}).")
    return tuple(compiled)


class PatternSet(object):
    """
    Case-insensitive inclusion and exclusion patterns. Plain substrings are valid patterns.
    """

    def __init__(self, inclusion: Iterable[str] = DEFAULT_INCLUSION, exclusion: Iterable[str] = DEFAULT_EXCLUSION) -> None:
        self._inclusion_source = tuple(inclusion)
        self._exclusion_source = tuple(exclusion)
        self._inclusion = _compile(self._inclusion_source, "inclusion")
        self._exclusion = _compile(self._exclusion_source, "exclusion")

    @classmethod
    def from_files(cls, inclusion_path: Union[str, Path], exclusion_path: Union[str, Path]) -> "PatternSet":
        """
        Loads newline-delimited pattern files. Blank lines and lines starting with '#' are ignored.
        """
        return cls(read_patterns(inclusion_path), read_patterns(exclusion_path))

    @property
    def inclusion_patterns(self) -> tuple[str, ...]:
        return self._inclusion_source

    @property
    def exclusion_patterns(self) -> tuple[str, ...]:
        return self._exclusion_source

    def includes(self, text: str) -> bool:
        return any(pattern.search(text) for pattern in self._inclusion)

    def excludes(self, text: str) -> bool:
        return any(pattern.search(text) for pattern in self._exclusion)

    def matches(self, text: str) -> bool:
        """
        True iff the text matches an inclusion pattern and no exclusion pattern.
        """
        return self.includes(text) and not self.excludes(text)


def read_patterns(path: Union[str, Path]) -> list[str]:
    with open(path, encoding="utf-8") as f:
        lines = [line.strip() for line in f]
    return [line for line in lines if line and not line.startswith("#")]
