import logging
from pathlib import Path
from typing import Iterable, Optional, Union

from ..errors import ConfigurationError

log = logging.getLogger(__name__)


class CodeHierarchy(object):
    """
    Directed acyclic graph of concept ids with names; edges point from child to parent.
    A concept may have several parents.
    """

    def __init__(self, names: dict[str, str], edges: Iterable[tuple[str, str]]) -> None:
        """
        Parameters:
            names (dict): Concept id to concept name.
            edges (Iterable[tuple[str, str]]): (child, parent) pairs.

        Raises:
            ConfigurationError: If an endpoint has no name or the graph has a cycle.
        """
        self._names = dict(names)
        self._parents: dict[str, list[str]] = {concept: [] for concept in self._names}
        for child, parent in edges:
            for endpoint in (child, parent):
                if not self._names.get(endpoint):
                    raise ConfigurationError(f"Hierarchy error: concept '{endpoint}' has no name.")
            if parent not in self._parents[child]:
                self._parents[child].append(parent)
        self._check_acyclic()

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "CodeHierarchy":
        """
        Loads an edge-list file with lines `child<TAB>parent<TAB>name`, where the name is the child's.
        A line with an empty parent only names a root concept.
        """
        names: dict[str, str] = {}
        edges: list[tuple[str, str]] = []
        with open(path, encoding="utf-8") as f:
            for line_number, line in enumerate(f, start=1):
                line = line.rstrip("\n")
                if not line.strip() or line.startswith("#"):
                    continue
                fields = line.split("\t")
                if len(fields) != 3 or not fields[0]:
                    raise ConfigurationError(f"Hierarchy error: line {line_number} must be child<TAB>parent<TAB>name.")
                child, parent, name = fields
                if name:
                    names[child] = name
                if parent:
                    edges.append((child, parent))
        return cls(names, edges)

    def _check_acyclic(self) -> None:
        state: dict[str, int] = {}
        for start in self._parents:
            if state.get(start):
                continue
            # iterative DFS; 1 = on stack, 2 = done
            stack = [(start, iter(self._parents[start]))]
            state[start] = 1
            while stack:
                node, parents = stack[-1]
                parent = next(parents, None)
                if parent is None:
                    state[node] = 2
                    stack.pop()
                elif state.get(parent) == 1:
                    raise ConfigurationError(f"Hierarchy error: cycle through '{parent}'.")
                elif not state.get(parent):
                    state[parent] = 1
                    stack.append((parent, iter(self._parents[parent])))

    def __contains__(self, concept_id: str) -> bool:
        return concept_id in self._names

    def __len__(self) -> int:
        return len(self._names)

    def name(self, concept_id: str) -> Optional[str]:
        return self._names.get(concept_id)

    def parents(self, concept_id: str) -> list[str]:
        return list(self._parents.get(concept_id, []))

    def ancestors(self, concept_id: str) -> set[str]:
        """
        All concepts reachable through parent edges, excluding the concept itself.
        """
        found: set[str] = set()
        frontier = list(self._parents.get(concept_id, []))
        while frontier:
            concept = frontier.pop()
            if concept not in found:
                found.add(concept)
                frontier.extend(self._parents[concept])
        return found
