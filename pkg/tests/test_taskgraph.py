import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sagin_mec.taskgraph import (
    MB_BITS, CycleError, Task, TaskGraph, generate_dag, ready_tasks, topological_levels, validate,
)


def chain(n):
    return TaskGraph(0, tuple(Task(i, MB_BITS, 3e9, (i - 1,) if i else ()) for i in range(n)))


def test_ready_tasks_chain():
    g = chain(3)
    assert ready_tasks(g, []) == {0}
    assert ready_tasks(g, [0]) == {1}
    assert ready_tasks(g, [0, 1, 2]) == set()
    with pytest.raises(KeyError):
        ready_tasks(g, [7])


def test_levels_diamond():
    tasks = (Task(0, 1.0, 1.0), Task(1, 1.0, 1.0, (0,)), Task(2, 1.0, 1.0, (0,)),
             Task(3, 1.0, 1.0, (1, 2)))
    assert topological_levels(TaskGraph(0, tasks)) == [[0], [1, 2], [3]]


def test_cycle_reported_with_edges():
    tasks = (Task(0, 1.0, 1.0, (2,)), Task(1, 1.0, 1.0, (0,)), Task(2, 1.0, 1.0, (1,)))
    g = TaskGraph(0, tasks)
    with pytest.raises(CycleError) as exc:
        validate(g)
    edges = set(exc.value.edges)
    assert edges and edges <= set(g.edges)
    assert len(edges) == 3


def test_invalid_tasks():
    with pytest.raises(ValueError):
        Task(0, 0.0, 1.0)
    with pytest.raises(ValueError):
        Task(0, 1.0, -1.0)
    with pytest.raises(ValueError):
        Task(0, 1.0, 1.0, (0,))
    with pytest.raises(ValueError):
        TaskGraph(0, (Task(0, 1.0, 1.0, (5,)),))
    with pytest.raises(ValueError):
        generate_dag(0, (1.0, 2.0), 1.0, 0.3, np.random.default_rng(0))


def test_text_round_trip():
    g = generate_dag(6, (0.6 * MB_BITS, 1.2 * MB_BITS), 3e9, 0.4, np.random.default_rng(3), owner_user=2)
    back = TaskGraph.from_text(g.to_text())
    assert back == g
    assert back.owner_user == 2


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 15), st.floats(0.0, 1.0), st.integers(0, 2**31 - 1))
def test_generated_dags_are_acyclic_and_in_range(n, p, seed):
    g = generate_dag(n, (0.6 * MB_BITS, 1.2 * MB_BITS), 3e9, p, np.random.default_rng(seed))
    validate(g)
    levels = topological_levels(g)
    assert sorted(i for lv in levels for i in lv) == list(range(n))
    for t in g.tasks:
        assert 0.6 * MB_BITS <= t.data_size_bits <= 1.2 * MB_BITS
        assert all(p < t.id for p in t.parent_ids)


def test_generation_is_seeded():
    a = generate_dag(8, (1.0, 2.0), 1.0, 0.5, np.random.default_rng(9))
    b = generate_dag(8, (1.0, 2.0), 1.0, 0.5, np.random.default_rng(9))
    assert a == b
