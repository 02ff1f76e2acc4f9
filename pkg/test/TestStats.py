"""Tests for the equivalence of ensembles and Boltzmann-Gibbs diagnostics."""
import math

import numpy as np
import pytest

from zrpfluct.ensemble import fugacity_of_density, point_of_fugacity
from zrpfluct.errors import ValidationError
from zrpfluct.fields import fourier_cos
from zrpfluct.kmc import LatticeState, SimParams, init_stationary, replica_rng, run
from zrpfluct.rates import RateFamily, independent
from zrpfluct.stats import (
    BGDiagnostic,
    BGRow,
    BoltzmannGibbsObserver,
    _Expansion,
    bg_diagnostic,
    bound_shape,
    decay_slope,
    eoe_check,
    falling_square,
    gap_scaling,
    observable_derivatives,
    rate_observable,
    species_count,
    zero_observable,
)

# fourth root of the fourth central moment of Poisson(5), over 5^2
POISSON_EOE_L4 = 80 ** 0.25 / 25


def test_observable_call_shapes() -> None:
    states = np.array([[[2, 0], [1, 3]]])
    assert falling_square(1)(states).shape == (1, 2)
    assert species_count(0)(states).tolist() == [[2.0, 1.0]]


def test_rate_observable(walkers: RateFamily) -> None:
    values = rate_observable(walkers, 1)(np.array([[2, 0], [1, 3]]))
    assert values.tolist() == [0.0, 3.0]


def test_observable_derivatives_poisson() -> None:
    point = fugacity_of_density(independent(1), [1.5])
    mean, grad, hess = observable_derivatives(point, falling_square(0))
    assert mean == pytest.approx(1.5 ** 2, rel=1e-10)
    assert grad == pytest.approx([3.0], rel=1e-8)
    assert hess == pytest.approx([[2.0]], rel=1e-6)


def test_eoe_poisson_exact() -> None:
    point = fugacity_of_density(independent(1), [1.0])
    [result] = eoe_check(point, falling_square(0), [2])
    assert result.method == "enumeration"
    assert result.l4_error == pytest.approx(POISSON_EOE_L4, rel=1e-6)
    assert result.as_row()["ell"] == 2


def test_eoe_zero_observable(walkers: RateFamily) -> None:
    point = point_of_fugacity(walkers, [0.5, 0.5])
    results = eoe_check(point, zero_observable(), [1, 2], order=1)
    assert [r.l4_error for r in results] == pytest.approx([0.0, 0.0], abs=1e-14)


def test_eoe_order_one_decays() -> None:
    point = fugacity_of_density(independent(1), [1.0])
    results = eoe_check(point, falling_square(0), [1, 4], order=1)
    assert results[1].l4_error < results[0].l4_error


def test_eoe_monte_carlo(rng: np.random.Generator) -> None:
    point = fugacity_of_density(independent(1), [1.0])
    [result] = eoe_check(point, falling_square(0), [1], samples=20000, rng=rng)
    assert result.method == "monte_carlo"
    assert result.samples == 20000
    assert math.isfinite(result.l4_error)


@pytest.mark.parametrize(
    'kwargs',
    (
        pytest.param({'ells': []}, id='no-ells'),
        pytest.param({'ells': [0]}, id='zero-ell'),
        pytest.param({'ells': [1], 'order': 3}, id='order'),
        pytest.param({'ells': [1], 'samples': 100}, id='samples-without-rng'),
    ),
)
def test_eoe_rejects(kwargs: dict) -> None:
    point = fugacity_of_density(independent(1), [1.0])
    with pytest.raises(ValidationError):
        eoe_check(point, falling_square(0), **kwargs)


def test_decay_slope() -> None:
    assert decay_slope([1, 2, 4, 8], [1.0, 0.5, 0.25, 0.125]) == pytest.approx(-1.0)


@pytest.mark.parametrize(('order', 'expected'), ((2, 12.7), (1, 25.4)))
def test_bound_shape(order: int, expected: float) -> None:
    assert bound_shape(1.0, 10, 2, np.ones(4), order) == pytest.approx(expected)


def test_interior_minimum() -> None:
    rows = [
        BGRow(ell=ell, N=20, estimate=est, stderr=0.0, bound_shape=0.0, replicas=2)
        for ell, est in ((1, 3.0), (2, 1.0), (4, 2.0))
    ]
    assert BGDiagnostic("f", 2, rows).interior_minimum()
    assert not BGDiagnostic("f", 2, rows[:2]).interior_minimum()


def test_bg_observer_tracks_value(walkers: RateFamily) -> None:
    """The incrementally updated integrand equals a fresh evaluation."""
    point = point_of_fugacity(walkers, [1.0, 0.7])
    f = falling_square(0)
    expansion = _Expansion(point, f, 2)
    params = SimParams(N=12, c=0.5, T=0.02, seed=3)
    h = fourier_cos(12, 1).grad
    rng = replica_rng(params.seed, 0)
    state = init_stationary(params, point, rng)
    tracked = BoltzmannGibbsObserver(expansion, f, 2, h)
    summary = run(state, params, [tracked], rng)
    assert summary.events > 0
    fresh = BoltzmannGibbsObserver(expansion, f, 2, h)
    fresh.start(0.0, LatticeState(walkers, state.occupancy), params)
    assert tracked.value == pytest.approx(fresh.value, abs=1e-9)
    assert tracked.replacement == pytest.approx(fresh.replacement, abs=1e-12)
    assert tracked.sup >= 0


def test_bg_observer_splits_at_frame_shifts(walkers: RateFamily) -> None:
    """The integrand switches to the shifted test function at each shift time."""
    point = point_of_fugacity(walkers, [1.0, 0.7])
    f = falling_square(0)
    # velocity 2 c lam N = 1 site per unit time
    params = SimParams(N=12, c=0.5, T=3.0)
    h = fourier_cos(12, 1).grad
    occupancy = np.tile([[2, 1], [0, 0], [1, 3]], (4, 1))
    observer = BoltzmannGibbsObserver(_Expansion(point, f, 1), f, 1, h, lam=1 / 12)
    observer.start(0.0, LatticeState(walkers, occupancy), params)
    observer.advance(2.5)
    centered = observer.site - observer.replacement
    values = [float(centered @ np.roll(h, shift)) for shift in range(3)]
    assert observer.shift == 2
    assert observer.integral == pytest.approx(
        values[0] + values[1] + 0.5 * values[2], rel=1e-12
    )
    assert observer.sup >= observer.integral ** 2


def test_bg_diagnostic(walkers: RateFamily) -> None:
    point = point_of_fugacity(walkers, [1.0, 0.7])
    params = SimParams(N=9, c=0.5, T=0.01, seed=4)
    diagnostic = bg_diagnostic(
        point, falling_square(0), params, [1, 2], replicas=2, workers=1
    )
    assert [row.ell for row in diagnostic.rows] == [1, 2]
    assert all(row.estimate >= 0 for row in diagnostic.rows)
    assert all(row.bound_shape > 0 for row in diagnostic.rows)
    assert all(row.replicas == 2 for row in diagnostic.rows)


@pytest.mark.parametrize(
    ('ells', 'replicas'),
    (([5], 2), ([0], 2), ([], 2), ([1], 1)),
)
def test_bg_diagnostic_rejects(walkers: RateFamily, ells: list, replicas: int) -> None:
    point = point_of_fugacity(walkers, [1.0, 0.7])
    with pytest.raises(ValidationError):
        bg_diagnostic(point, falling_square(0), SimParams(N=9), ells, replicas)


def test_gap_scaling() -> None:
    [row] = gap_scaling(independent(1), (1,), [1])
    assert row.gap == pytest.approx(0.5)
    assert row.scaled == pytest.approx(2.0)
