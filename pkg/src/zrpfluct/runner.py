"""Replica runner implementation."""
import logging
import multiprocessing
import multiprocessing.pool
import os
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, TypeVar

from zrpfluct.constants import WORKERS_ENVVAR
from zrpfluct.ensemble import DensityPoint
from zrpfluct.kmc import (
    Observer,
    RunSummary,
    SimParams,
    init_stationary,
    replica_rng,
    run,
)
from zrpfluct.logger import timed_info

_logger = logging.getLogger(__name__)

T = TypeVar("T")


def default_workers() -> int:
    """Return the worker count from the environment or the CPU count."""
    value = os.environ.get(WORKERS_ENVVAR, "")
    if value.strip():
        return max(1, int(value))
    return multiprocessing.cpu_count()


@dataclass
class ReplicaResult:
    """Observers and summary of one replica."""

    replica: int
    summary: RunSummary
    observers: List[Observer] = field(default_factory=list)


class ReplicaRunner:
    """Map replica ids over a thread pool, merging in replica order."""

    def __init__(self, workers: Optional[int] = None) -> None:
        """Use ``workers`` threads, defaulting to ``default_workers()``."""
        self.workers = workers or default_workers()

    def map(self, worker: Callable[[int], T], replicas: Sequence[int]) -> List[T]:
        """Return ``[worker(r) for r in replicas]``, computed in parallel."""
        if self.workers == 1 or len(replicas) < 2:
            return [worker(r) for r in replicas]
        pool = multiprocessing.pool.ThreadPool(processes=self.workers)
        try:
            return pool.map(worker, replicas, chunksize=1)
        finally:
            pool.close()
            pool.join()

    def simulate(
        self,
        point: DensityPoint,
        params: SimParams,
        observers: Callable[[], List[Observer]],
        replicas: int,
    ) -> List[ReplicaResult]:
        """Run stationary replicas, each with fresh observers.

        Replica ``r`` draws its initial state and its events from
        ``replica_rng(params.seed, r)``.
        """

        def worker(replica: int) -> ReplicaResult:
            rng = replica_rng(params.seed, replica)
            state = init_stationary(params, point, rng)
            attached = observers()
            summary = run(state, params, attached, rng)
            _logger.debug(
                "Replica %d: %d events, stopped early: %s",
                replica,
                summary.events,
                summary.stopped_early,
            )
            return ReplicaResult(replica=replica, summary=summary, observers=attached)

        with timed_info("Simulated %d replicas of N=%d", replicas, params.N):
            return self.map(worker, list(range(replicas)))

