"""Tests for the event-driven simulator and the canonical generators."""
from typing import List

import numpy as np
import pytest

from zrpfluct.ensemble import point_of_fugacity
from zrpfluct.errors import StateSpaceTooLarge, ValidationError
from zrpfluct.kmc import (
    LatticeState,
    Observer,
    SimParams,
    canonical_generator,
    count_canonical_states,
    init_stationary,
    replica_rng,
    run,
    spectral_gap,
)
from zrpfluct.rates import (
    RateFamily,
    ScalarRate,
    independent,
    multi_color,
    perturbed_walks,
)


class JumpCounter(Observer):
    """Count jumps and keep the record times."""

    wants_events = True

    def __init__(self) -> None:
        self.jumps = 0
        self.records: List[float] = []
        self.finished = False

    def jump(self, x: int, y: int, i: int, state: LatticeState) -> None:
        assert abs(x - y) in (1, state.size - 1)
        self.jumps += 1

    def record(self, t: float, state: LatticeState) -> None:
        self.records.append(t)

    def finish(self, t: float, state: LatticeState) -> None:
        self.finished = True


def test_sim_params_lists_every_violation() -> None:
    with pytest.raises(ValidationError) as excinfo:
        SimParams(N=1, T=0.0, c=10.0)
    assert len(excinfo.value.violations) == 3


@pytest.mark.parametrize(
    'record_times',
    (
        pytest.param((0.5, 0.1), id='unsorted'),
        pytest.param((0.1, 2.0), id='past-horizon'),
    ),
)
def test_sim_params_record_times(record_times: tuple) -> None:
    with pytest.raises(ValidationError):
        SimParams(N=8, T=1.0, record_times=record_times)


def test_sim_params_scales() -> None:
    params = SimParams(N=10, gamma=0.5, c=0.5, T=2.0)
    assert params.p_right == pytest.approx(0.5 + 0.5 / np.sqrt(10))
    assert params.horizon == pytest.approx(200.0)


def test_replica_streams() -> None:
    first = replica_rng(7, 0).random(5)
    again = replica_rng(7, 0).random(5)
    other = replica_rng(7, 1).random(5)
    assert np.array_equal(first, again)
    assert not np.array_equal(first, other)


def test_lattice_state_validation(walkers: RateFamily) -> None:
    with pytest.raises(ValidationError):
        LatticeState(walkers, np.zeros((4, 3), dtype=int))
    with pytest.raises(ValidationError):
        LatticeState(walkers, -np.ones((4, 2), dtype=int))


def test_lattice_state_move(walkers: RateFamily) -> None:
    state = LatticeState(walkers, np.array([[2, 0], [0, 1], [0, 0]]))
    assert state.total_rate == 3.0
    state.move(0, 2, 0)
    assert state.occupancy.tolist() == [[1, 0], [0, 1], [1, 0]]
    assert state.check_conservation()
    assert state.total_rate == 3.0
    assert state.rebuild_tree() == 0.0


def test_empty_system_stops_early(
    walkers: RateFamily, rng: np.random.Generator
) -> None:
    state = LatticeState(walkers, np.zeros((4, 2), dtype=int))
    params = SimParams(N=4, T=1.0, record_times=(0.1, 0.5))
    counter = JumpCounter()
    summary = run(state, params, [counter], rng)
    assert summary.stopped_early
    assert summary.reason.startswith("empty system")
    assert summary.records == 2
    assert counter.records == [0.1, 0.5]
    assert summary.time == pytest.approx(1.0)
    assert counter.finished


def test_run_conserves_particles(rng: np.random.Generator) -> None:
    family = multi_color(2, ScalarRate(kind="power", exponent=0.5))
    occupancy = np.array([[3, 1], [0, 2], [1, 0], [0, 0], [2, 2], [1, 1]])
    state = LatticeState(family, occupancy)
    params = SimParams(N=6, gamma=1.0, c=1.0, T=0.5, record_times=(0.25, 0.5))
    counter = JumpCounter()
    summary = run(state, params, [counter], rng)
    assert summary.events > 0
    assert counter.jumps == summary.events
    assert counter.records == [0.25, 0.5]
    assert state.check_conservation()
    assert state.occupancy.sum(axis=0).tolist() == [7, 6]
    assert not summary.stopped_early


def test_run_is_reproducible(walkers: RateFamily) -> None:
    params = SimParams(N=8, c=0.5, T=0.2, seed=11)
    point = point_of_fugacity(walkers, [1.0, 0.5])
    finals = []
    for _ in range(2):
        rng = replica_rng(params.seed, 3)
        state = init_stationary(params, point, rng)
        summary = run(state, params, [], rng)
        finals.append((state.occupancy.tolist(), summary.events))
    assert finals[0] == finals[1]


def test_run_rejects_size_mismatch(
    walkers: RateFamily, rng: np.random.Generator
) -> None:
    state = LatticeState(walkers, np.zeros((4, 2), dtype=int))
    with pytest.raises(ValidationError):
        run(state, SimParams(N=5), [], rng)


@pytest.mark.parametrize(
    ('n_sites', 'totals', 'count'),
    ((3, (1, 1), 9), (3, (2, 1), 18), (4, (0, 2), 10)),
)
def test_count_canonical_states(n_sites: int, totals: tuple, count: int) -> None:
    assert count_canonical_states(n_sites, totals) == count


def test_canonical_walkers_uniform(walkers: RateFamily) -> None:
    generator = canonical_generator(walkers, 3, (1, 1))
    assert generator.n_states == 9
    assert generator.nu == pytest.approx(np.full(9, 1 / 9))
    assert np.abs(np.asarray(generator.Q.sum(axis=1))).max() < 1e-12


@pytest.mark.parametrize(
    'family',
    (
        pytest.param(perturbed_walks(3.0, -0.5), id='perturbed-walks'),
        pytest.param(
            multi_color(2, ScalarRate(kind="power", exponent=2.0)), id='multi-color'
        ),
    ),
)
def test_product_measure_is_stationary(family: RateFamily) -> None:
    """The conditioned product weights stay invariant under asymmetry."""
    generator = canonical_generator(family, 3, (2, 2), p_right=0.8)
    assert np.max(np.abs(generator.Q.T @ generator.nu)) < 1e-10
    assert np.max(np.abs(generator.S.T @ generator.nu)) < 1e-10


def test_canonical_generator_rejects(walkers: RateFamily) -> None:
    with pytest.raises(StateSpaceTooLarge):
        canonical_generator(walkers, 30, (30, 30))
    with pytest.raises(ValidationError):
        canonical_generator(walkers, 3, (1,))
    with pytest.raises(ValidationError):
        canonical_generator(walkers, 3, (1, 1), geometry="sphere")


def test_spectral_gap_single_walker() -> None:
    gap = spectral_gap(independent(1), (1,), 1)
    assert gap.gap == pytest.approx(0.5, rel=1e-10)
    assert gap.inverse == pytest.approx(2.0, rel=1e-10)
    assert gap.n_states == 3


def test_spectral_gap_rejects() -> None:
    with pytest.raises(ValidationError):
        spectral_gap(independent(1), (0,), 1)
    with pytest.raises(ValidationError):
        spectral_gap(independent(1), (1,), 0)
