"""Tests for the replica runner."""
import threading
from typing import List

import pytest

from zrpfluct.constants import WORKERS_ENVVAR
from zrpfluct.ensemble import point_of_fugacity
from zrpfluct.kmc import Observer, SimParams
from zrpfluct.rates import RateFamily
from zrpfluct.runner import ReplicaRunner, default_workers


def test_default_workers_from_environment(monkeypatch: pytest.MonkeyPatch) -> None:
    monkeypatch.setenv(WORKERS_ENVVAR, "3")
    assert default_workers() == 3
    monkeypatch.setenv(WORKERS_ENVVAR, "0")
    assert default_workers() == 1
    monkeypatch.setenv(WORKERS_ENVVAR, " ")
    assert default_workers() >= 1


def test_map_keeps_replica_order() -> None:
    names: List[str] = []

    def worker(replica: int) -> int:
        names.append(threading.current_thread().name)
        return replica * replica

    assert ReplicaRunner(4).map(worker, list(range(10))) == [r * r for r in range(10)]
    assert len(names) == 10


def test_map_serial_stays_in_thread() -> None:
    main = threading.current_thread().name
    seen = ReplicaRunner(1).map(lambda _: threading.current_thread().name, [0, 1, 2])
    assert seen == [main] * 3


def test_simulate_independent_of_workers(walkers: RateFamily) -> None:
    """Replica r always draws from its own stream."""
    point = point_of_fugacity(walkers, [1.0, 0.5])
    params = SimParams(N=8, c=0.5, T=0.05, seed=9)

    def observers() -> List[Observer]:
        return []

    serial = ReplicaRunner(1).simulate(point, params, observers, 4)
    threaded = ReplicaRunner(3).simulate(point, params, observers, 4)
    assert [r.replica for r in threaded] == [0, 1, 2, 3]
    assert [r.summary.events for r in serial] == [r.summary.events for r in threaded]
