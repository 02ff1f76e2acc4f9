"""Tests for the spectral reference integrators."""
import math

import numpy as np
import pytest

from zrpfluct.coupling import tensor_from_values
from zrpfluct.ensemble import point_of_fugacity
from zrpfluct.errors import BlowupError, NumericalError, ValidationError
from zrpfluct.rates import RateFamily
from zrpfluct.spde import (
    SpectralModel,
    SpectralState,
    build_model,
    burgers_step,
    decouple_transform,
    decoupled_driver_covariance,
    model_from_matrices,
    ou_correlation,
    ou_exact_step,
    run_spde,
    white_noise,
)

GAMMA = np.array([[1.0, 0.3], [0.3, 0.8]])


def _seeded(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


@pytest.fixture(name="model")
def fixture_model() -> SpectralModel:
    """Return a correlated two-species model with some asymmetry."""
    return model_from_matrices(GAMMA, [0.9, 1.4], c=0.2)


def _mode_covariance(state: SpectralState, k: int) -> np.ndarray:
    coefficient = state.coefficients[:, :, k]
    return (coefficient[:, :, None] * coefficient[:, None, :].conj()).mean(axis=0).real


def test_walkers_model(walkers: RateFamily) -> None:
    model = build_model(point_of_fugacity(walkers, [0.4, 1.1]))
    assert model.mu == pytest.approx([1.0, 1.0])
    assert model.A == pytest.approx(np.eye(2))
    assert model.to_z @ model.from_z == pytest.approx(np.eye(2), abs=1e-12)


def test_model_rejects() -> None:
    with pytest.raises(ValidationError):
        model_from_matrices(np.eye(2), [1.0])
    with pytest.raises(NumericalError):
        model_from_matrices([[1.0, 2.0], [2.0, 1.0]], [1.0, 1.0])


@pytest.mark.parametrize('K', (3, 7, 2))
def test_odd_or_tiny_grids(
    model: SpectralModel, rng: np.random.Generator, K: int  # noqa: N803
) -> None:
    with pytest.raises(ValidationError):
        white_noise(model, rng, K=K)


def test_white_noise_covariance(model: SpectralModel, rng: np.random.Generator) -> None:
    state = white_noise(model, rng, K=8, paths=6000)
    assert state.coefficients.shape == (6000, 2, 5)
    assert np.all(state.coefficients[:, :, -1] == 0)
    for k in (1, 2):
        assert _mode_covariance(state, k) == pytest.approx(GAMMA, abs=0.08)


def test_ou_step_keeps_white_noise(
    model: SpectralModel, rng: np.random.Generator
) -> None:
    state = white_noise(model, rng, K=8, paths=6000)
    for _ in range(10):
        state = ou_exact_step(state, 0.01, rng)
    assert state.t == pytest.approx(0.1)
    assert state.step == 10
    assert _mode_covariance(state, 1) == pytest.approx(GAMMA, abs=0.08)
    assert np.all(state.coefficients[:, :, -1] == 0)


def test_zero_tensor_matches_ou(model: SpectralModel) -> None:
    start = white_noise(model, _seeded(1), K=16, paths=3)
    tensor = tensor_from_values(np.zeros((2, 2, 2)), c=1.0)
    linear = ou_exact_step(start, 1e-3, _seeded(2))
    coupled = burgers_step(start, tensor, 0.5, 1e-3, _seeded(2))
    assert np.array_equal(linear.coefficients, coupled.coefficients)


def test_burgers_step_rejects(model: SpectralModel, rng: np.random.Generator) -> None:
    start = white_noise(model, rng, K=16)
    with pytest.raises(ValidationError):
        burgers_step(start, tensor_from_values(np.zeros((2, 2, 2))), 0.1, 1e-3, rng)
    with pytest.raises(ValidationError):
        burgers_step(start, tensor_from_values(np.zeros((3, 3, 3))), 0.5, 1e-3, rng)


def test_burgers_step_keeps_zero_mode(
    model: SpectralModel, rng: np.random.Generator
) -> None:
    values = np.zeros((2, 2, 2))
    values[0, 0, 0] = values[1, 1, 1] = 1.0
    start = white_noise(model, rng, K=16, paths=2)
    new = burgers_step(start, tensor_from_values(values), 0.5, 1e-3, rng)
    assert new.coefficients[:, :, 0] == pytest.approx(start.coefficients[:, :, 0])


def test_blowup(model: SpectralModel, rng: np.random.Generator) -> None:
    state = SpectralState(model=model, K=8, coefficients=np.full((1, 2, 5), 1e7 + 0j))
    with pytest.raises(BlowupError) as excinfo:
        burgers_step(state, tensor_from_values(np.zeros((2, 2, 2))), 1.0, 1e-5, rng)
    assert excinfo.value.step == 1


def test_run_spde_records(model: SpectralModel, rng: np.random.Generator) -> None:
    start = white_noise(model, rng, K=8, paths=3)
    result = run_spde(
        start, 0.01, dt=0.005, rng=rng, modes=(1, 2), record_times=(0.0, 0.01)
    )
    assert result.steps == 2
    assert len(result.series) == 3
    assert result.series[0].times == pytest.approx([0.0, 0.01])
    assert result.series[0].series("Y", "sin2").shape == (2, 2)
    cos, _ = start.mode_values(1)
    assert result.series[1].series("Y", "cos1")[0] == pytest.approx(cos[1])


def test_run_spde_rejects(model: SpectralModel, rng: np.random.Generator) -> None:
    with pytest.raises(ValidationError):
        run_spde(white_noise(model, rng, K=8), 0.0, rng=rng)


def test_ou_correlation_single_species() -> None:
    model = model_from_matrices([[2.0]], [2.0])
    assert model.mu == pytest.approx([1.0])
    for lag in (0.0, 0.01, 0.1):
        expected = 0.5 * math.exp(-((2 * math.pi) ** 2) * lag / 2) * 2.0
        assert ou_correlation(model, 1, 0, 0, lag) == pytest.approx(expected)


def test_ou_correlation_rotates() -> None:
    model = model_from_matrices([[1.0]], [1.0], c=0.3)
    kappa = 2 * math.pi
    lag = 0.1
    expected = 0.5 * math.exp(-(kappa ** 2) * lag / 2) * math.cos(2 * kappa * 0.3 * lag)
    assert ou_correlation(model, 1, 0, 0, lag) == pytest.approx(expected)
    # a frame moving with the drift removes the rotation
    still = ou_correlation(model, 1, 0, 0, lag, frame_speed=0.6)
    assert still == pytest.approx(0.5 * math.exp(-(kappa ** 2) * lag / 2))


def test_ou_correlation_equal_time_is_covariance(model: SpectralModel) -> None:
    for i in range(2):
        for j in range(2):
            assert ou_correlation(model, 3, i, j, 0.0) == pytest.approx(
                0.5 * GAMMA[i, j]
            )


def test_decouple_transform() -> None:
    h = np.array([[1.0, 2.0, 3.0], [0.5, 0.0, -1.0]])
    fields = decouple_transform(h, [0.3, 0.7])
    assert fields.total == pytest.approx([1.5, 2.0, 2.0])
    assert fields.differences[(0, 1)] == pytest.approx(0.7 * h[0] - 0.3 * h[1])
    with_paths = decouple_transform(np.stack([h, h, h]), [0.3, 0.7])
    assert with_paths.total.shape == (3, 3)


def test_decoupled_driver_covariance() -> None:
    labels, covariance = decoupled_driver_covariance([1.0, 2.0])
    assert labels == ["sum", "diff01"]
    assert covariance == pytest.approx(np.array([[3.0, 0.0], [0.0, 6.0]]))
