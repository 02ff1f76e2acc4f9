"""Tests for test functions, field observers and field statistics."""
import math
from typing import List

import numpy as np
import pytest

from zrpfluct.ensemble import DensityPoint
from zrpfluct.errors import ValidationError
from zrpfluct.fields import (
    DecompositionObserver,
    FieldObserver,
    FieldSeries,
    MollifiedObserver,
    TestFunction,
    cauchy_differences,
    constant,
    energy_functional,
    eval_field,
    fourier_cos,
    fourier_pairs,
    fourier_sin,
    frame_shift,
    hydrodynamic_profile,
    jackknife,
    mollified_quadratic,
    mollifier,
    structure_factor,
)
from zrpfluct.kmc import LatticeState, SimParams, init_stationary, replica_rng, run
from zrpfluct.rates import RateFamily


@pytest.mark.parametrize(('N', 'k'), ((16, 1), (32, 3), (64, 10)))
def test_fourier_derivatives(N: int, k: int) -> None:  # noqa: N803
    cos, sin = fourier_cos(N, k), fourier_sin(N, k)
    theta = 2 * math.pi * k / N
    assert cos.grad == pytest.approx(-N * math.sin(theta) * sin.values, abs=1e-9)
    assert cos.laplacian == pytest.approx(
        N ** 2 * (2 * math.cos(theta) - 2) * cos.values, abs=1e-7
    )
    assert cos.l2_norm2() == pytest.approx(0.5)
    assert sin.l2_norm2() == pytest.approx(0.5)


def test_test_function_kind() -> None:
    with pytest.raises(ValidationError):
        TestFunction("wavelet", np.zeros(4), "w")


def test_shifted_moves_right() -> None:
    h = fourier_cos(8, 1)
    assert h.shifted(1)[1] == pytest.approx(h.values[0])


def test_fourier_pairs_resolution() -> None:
    labels = [h.label for h in fourier_pairs(16, [1, 2])]
    assert labels == ["cos1", "sin1", "cos2", "sin2"]
    with pytest.raises(ValidationError):
        fourier_pairs(16, [8])


@pytest.mark.parametrize('eps', (0.125, 0.25, 0.5))
def test_mollifier(eps: float) -> None:
    moll = mollifier(64, eps)
    assert np.mean(moll.values) == pytest.approx(1.0, rel=1e-12)
    assert moll.l2_norm2() < 1 / eps


def test_mollifier_under_resolved() -> None:
    with pytest.raises(ValidationError):
        mollifier(64, 1 / 64)


@pytest.mark.parametrize(
    ('c', 't', 'expected'),
    ((0.5, 0.1, 3), (-0.5, 0.1, -4), (0.0, 0.7, 0)),
)
def test_frame_shift(c: float, t: float, expected: int) -> None:
    params = SimParams(N=16, gamma=1.0, c=c, T=1.0)
    assert frame_shift(t, params, 2.0) == expected


def test_eval_field_constant(walkers: RateFamily) -> None:
    state = LatticeState(walkers, np.array([[1, 0], [3, 1], [0, 2], [0, 1]]))
    values = eval_field(state, constant(4), [1.0, 1.0])
    assert values == pytest.approx([0.0, 0.0])
    values = eval_field(state, constant(4), [0.5, 0.5])
    assert values == pytest.approx([1.0, 1.0])


def _simulate(
    point: DensityPoint, params: SimParams, observers: list, replica: int = 0
) -> None:
    rng = replica_rng(params.seed, replica)
    state = init_stationary(params, point, rng)
    run(state, params, observers, rng)


@pytest.mark.parametrize('frame', ('fixed', 'traveling'))
def test_decomposition_closes(
    perturbed_frame_point: DensityPoint, frame: str
) -> None:
    """The martingale from the identity equals the sum of jump increments."""
    params = SimParams(N=16, c=1.0, T=0.05, seed=5, record_times=(0.01, 0.03, 0.05))
    tests = fourier_pairs(16, [1, 2])
    lam = 1.36066
    decomposition = DecompositionObserver(
        tests, perturbed_frame_point, frame=frame, lam=lam  # type: ignore
    )
    fields = FieldObserver(
        tests, perturbed_frame_point.a, frame=frame, lam=lam  # type: ignore
    )
    _simulate(perturbed_frame_point, params, [decomposition, fields])
    for h in tests:
        martingale = decomposition.series.series("M", h.label)
        direct = decomposition.series.series("M_direct", h.label)
        assert martingale == pytest.approx(direct, abs=1e-9)
        assert decomposition.series.series("Y", h.label) == pytest.approx(
            fields.series.series("Y", h.label), abs=1e-9
        )
        assert np.all(decomposition.series.series("QV", h.label) >= 0)
    assert decomposition.series.times == [0.01, 0.03, 0.05]


def test_symmetric_decomposition_has_no_drift(
    perturbed_frame_point: DensityPoint,
) -> None:
    params = SimParams(N=16, c=0.0, T=0.02, seed=2, record_times=(0.02,))
    tests = fourier_pairs(16, [1])
    decomposition = DecompositionObserver(tests, perturbed_frame_point)
    _simulate(perturbed_frame_point, params, [decomposition])
    for h in tests:
        assert np.all(decomposition.series.series("B", h.label) == 0)
        assert np.all(decomposition.series.series("K", h.label) == 0)


def test_distinct_species_have_no_cross_bracket(
    perturbed_frame_point: DensityPoint,
) -> None:
    params = SimParams(N=16, c=1.0, T=0.02, seed=3, record_times=(0.02,))
    decomposition = DecompositionObserver(fourier_pairs(16, [1]), perturbed_frame_point)
    _simulate(perturbed_frame_point, params, [decomposition])
    bracket = decomposition.cross_variation
    assert bracket.shape == (2, 2, 2)
    assert np.all(bracket[:, 0, 1] == 0)
    assert np.all(bracket[:, 1, 0] == 0)
    assert np.all(np.diagonal(bracket, axis1=1, axis2=2) > 0)


def test_jackknife() -> None:
    mean, stderr = jackknife(np.array([1.0, 2.0, 3.0]))
    assert mean == pytest.approx(2.0)
    assert stderr == pytest.approx(math.sqrt(1 / 3))
    _, single = jackknife(np.array([4.0]))
    assert math.isinf(single)


def test_energy_functional() -> None:
    curve = energy_functional([0.0, 1.0, 2.0], np.full((3, 1), 2.0))
    assert curve[:, 0] == pytest.approx([0.0, 2.0, 4.0])


def test_cauchy_differences() -> None:
    series = FieldSeries(times=[0.0, 1.0])
    for _ in range(2):
        series.add("A_integrand", "eps=0.5", np.array([1.0]))
        series.add("A_integrand", "eps=0.25", np.array([2.0]))
    assert cauchy_differences(series) == {(0.5, 0.25): pytest.approx(1.0)}


def _mode_series(cos: List[float], sin: List[float]) -> FieldSeries:
    series = FieldSeries(times=[0.0, 1.0])
    for c_value, s_value in zip(cos, sin):
        series.add("Y", "cos1", np.array([c_value]))
        series.add("Y", "sin1", np.array([s_value]))
    return series


def test_structure_factor() -> None:
    series = [
        _mode_series([1.0, 2.0], [0.0, 0.0]),
        _mode_series([1.0, 2.0], [2.0, 0.0]),
    ]
    factor = structure_factor(series, 1)
    assert factor.value.shape == (2, 2, 1, 1)
    assert factor.value[0, 1, 0, 0] == pytest.approx(1.0)
    assert factor.value[0, 0, 0, 0] == pytest.approx(1.5)
    assert factor.n_replicas == 2
    assert factor.warnings


def test_mollified_quadratic_constant_state(walkers: RateFamily) -> None:
    """A flat configuration has no gradient weight."""
    state = LatticeState(walkers, np.full((32, 2), 2))
    gamma_raw = np.ones((2, 2, 2))
    value = mollified_quadratic(state, 0.25, [1.0, 1.0], gamma_raw, fourier_sin(32, 1))
    assert value == pytest.approx([0.0, 0.0], abs=1e-10)


def test_mollified_observer_checks_eps(
    walkers: RateFamily, rng: np.random.Generator
) -> None:
    observer = MollifiedObserver(
        fourier_sin(8, 1), [0.1], [1.0, 1.0], np.zeros((2, 2, 2))
    )
    state = LatticeState(walkers, np.ones((8, 2), dtype=int))
    with pytest.raises(ValidationError):
        run(state, SimParams(N=8, T=0.01), [observer], rng)


def test_hydrodynamic_profile(walkers: RateFamily, rng: np.random.Generator) -> None:
    params = SimParams(N=8, T=0.01, record_times=(0.005, 0.01))
    times, profiles, summary = hydrodynamic_profile(
        walkers, lambda u: (1.0 + 0.5 * math.sin(2 * math.pi * u), 0.5), params, rng
    )
    assert times == pytest.approx([0.005, 0.01])
    assert profiles.shape == (2, 8, 2)
    assert summary.events >= 0
