"""Per-user task DAGs: generation, validation, readiness and a text fixture format."""

from __future__ import annotations

import graphlib
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

MB_BITS = 8e6


@dataclass(frozen=True)
class Task:
    id: int
    data_size_bits: float
    cpu_cycles: float
    parent_ids: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if not self.data_size_bits > 0:
            raise ValueError(f"task {self.id}: data size must be positive")
        if not self.cpu_cycles > 0:
            raise ValueError(f"task {self.id}: cpu cycles must be positive")
        if self.id in self.parent_ids:
            raise ValueError(f"task {self.id} lists itself as a parent")


class CycleError(ValueError):
    """Raised by :func:`validate`; ``edges`` holds the (parent, child) pairs of one cycle."""

    def __init__(self, edges: list[tuple[int, int]]):
        super().__init__(f"task graph has a cycle through edges {edges}")
        self.edges = edges


@dataclass(frozen=True)
class TaskGraph:
    owner_user: int
    tasks: tuple[Task, ...]
    _by_id: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "_by_id", {t.id: t for t in self.tasks})
        if len(self._by_id) != len(self.tasks):
            raise ValueError("duplicate task ids")
        for t in self.tasks:
            missing = [p for p in t.parent_ids if p not in self._by_id]
            if missing:
                raise ValueError(f"task {t.id} references unknown parents {missing}")

    @property
    def edges(self) -> list[tuple[int, int]]:
        return [(p, t.id) for t in self.tasks for p in t.parent_ids]

    @property
    def ids(self) -> list[int]:
        return [t.id for t in self.tasks]

    def task(self, task_id: int) -> Task:
        return self._by_id[task_id]

    def __len__(self) -> int:
        return len(self.tasks)

    def to_text(self) -> str:
        lines = [f"# owner {self.owner_user}"]
        for t in self.tasks:
            parents = ",".join(str(p) for p in t.parent_ids) or "-"
            lines.append(f"{t.id} {t.data_size_bits!r} {t.cpu_cycles!r} {parents}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "TaskGraph":
        owner = 0
        tasks = []
        for raw in text.splitlines():
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                parts = line[1:].split()
                if len(parts) == 2 and parts[0] == "owner":
                    owner = int(parts[1])
                continue
            tid, w, f, parents = line.split()
            parent_ids = () if parents == "-" else tuple(int(p) for p in parents.split(","))
            tasks.append(Task(int(tid), float(w), float(f), parent_ids))
        return cls(owner, tuple(tasks))


def generate_dag(n_tasks: int, size_range_bits: tuple[float, float], cycles: float,
                 edge_prob: float, rng: np.random.Generator, owner_user: int = 0) -> TaskGraph:
    """Random DAG where each task draws parents only among earlier tasks."""
    if n_tasks < 1:
        raise ValueError("n_tasks must be >= 1")
    if not 0.0 <= edge_prob <= 1.0:
        raise ValueError("edge_prob must lie in [0, 1]")
    lo, hi = size_range_bits
    if not (0 < lo and lo <= hi):
        raise ValueError(f"invalid size range {size_range_bits!r}")
    tasks = []
    for i in range(n_tasks):
        size = float(rng.uniform(lo, hi)) if hi > lo else float(lo)
        draws = rng.random(i)
        parents = tuple(j for j in range(i) if draws[j] < edge_prob)
        tasks.append(Task(i, size, float(cycles), parents))
    return TaskGraph(owner_user, tuple(tasks))


def validate(graph: TaskGraph) -> None:
    """Raise :class:`CycleError` unless the graph admits a topological order."""
    sorter = graphlib.TopologicalSorter({t.id: t.parent_ids for t in graph.tasks})
    try:
        tuple(sorter.static_order())
    except graphlib.CycleError as exc:
        nodes = list(exc.args[1])
        # graphlib reports a closed node path running parent -> child.
        edges = [(nodes[k], nodes[k + 1]) for k in range(len(nodes) - 1)]
        raise CycleError(edges) from None


def ready_tasks(graph: TaskGraph, completed_ids: Iterable[int]) -> set[int]:
    done = set(completed_ids)
    unknown = done.difference(graph.ids)
    if unknown:
        raise KeyError(f"unknown task ids {sorted(unknown)}")
    return {t.id for t in graph.tasks
            if t.id not in done and all(p in done for p in t.parent_ids)}


def topological_levels(graph: TaskGraph) -> list[list[int]]:
    """Groups of task ids that become ready together when every round completes its batch."""
    done: set[int] = set()
    levels = []
    while len(done) < len(graph):
        ready = sorted(ready_tasks(graph, done))
        if not ready:
            raise CycleError(graph.edges)
        levels.append(ready)
        done.update(ready)
    return levels
