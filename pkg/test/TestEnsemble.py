"""Tests for the grand-canonical one-site marginals."""
import math

import numpy as np
import pytest

from zrpfluct.ensemble import (
    DensityPoint,
    build_table,
    covariance,
    cumulant3,
    density_of_fugacity,
    fugacity_of_density,
    grad_density,
    grad_tilde_g,
    hess_tilde_g,
    hess_tilde_g_numeric,
    point_of_fugacity,
    sample_marginal,
    scalar_phi_derivatives,
)
from zrpfluct.errors import DomainError, SingularMatrixError, ValidationError
from zrpfluct.rates import (
    RateFamily,
    ScalarRate,
    h_example_rate,
    independent,
    multi_color,
)

H_EXAMPLE_DENSITY = 0.437435


def test_poisson_table(walkers: RateFamily) -> None:
    """Independent walkers have a product of Poisson marginals."""
    table = build_table(walkers, [0.5, 1.5])
    assert table.Z == pytest.approx(math.exp(2.0), rel=1e-12)
    assert density_of_fugacity(table) == pytest.approx([0.5, 1.5], rel=1e-12)
    assert covariance(table) == pytest.approx(np.diag([0.5, 1.5]), abs=1e-12)
    assert cumulant3(table, 0, 0, 0) == pytest.approx(0.5, rel=1e-10)
    assert cumulant3(table, 0, 0, 1) == pytest.approx(0.0, abs=1e-12)
    assert table.tail_bound < 1e-12
    assert table.weights.sum() == pytest.approx(1.0, rel=1e-14)


def test_moments_are_compensated_sums(walkers: RateFamily) -> None:
    table = build_table(walkers, [0.5, 1.5])
    for i in range(2):
        terms = table.weights * table.states[:, i]
        assert table.mean[i] == math.fsum(terms.tolist())
    centered = table.states - table.mean
    terms = table.weights * (centered[:, 0] * centered[:, 1])
    assert table.gamma[0, 1] == table.gamma[1, 0] == math.fsum(terms.tolist())
    assert table.kappa[0, 1, 1] == table.kappa[1, 0, 1] == table.kappa[1, 1, 0]
    assert table.expect(table.states[:, 1]) == table.mean[1]


def test_table_record(walkers: RateFamily) -> None:
    record = build_table(walkers, [0.5, 1.5]).as_record()
    assert set(record) == {"family", "phi", "a", "Z", "gamma", "cap", "tail_bound"}
    assert record["phi"] == [0.5, 1.5]


def test_divergent_partition_function() -> None:
    """A constant rate has a geometric marginal that diverges above phi=1."""
    family = multi_color(1, ScalarRate(kind="power", exponent=0.0))
    with pytest.raises(DomainError):
        build_table(family, [1.5])


def test_geometric_marginal() -> None:
    family = multi_color(1, ScalarRate(kind="power", exponent=0.0))
    table = build_table(family, [0.5])
    assert table.mean[0] == pytest.approx(1.0, rel=1e-10)
    assert table.gamma[0, 0] == pytest.approx(2.0, rel=1e-9)


@pytest.mark.parametrize(
    'phi',
    (
        pytest.param([0.5], id='wrong-length'),
        pytest.param([0.5, -1.0], id='negative'),
        pytest.param([0.5, math.inf], id='infinite'),
    ),
)
def test_build_table_rejects(walkers: RateFamily, phi: list) -> None:
    with pytest.raises(ValidationError if len(phi) == 1 else DomainError):
        build_table(walkers, phi)


@pytest.mark.parametrize(
    'a',
    (
        pytest.param([0.7, 1.2], id='moderate'),
        pytest.param([0.01, 5.0], id='spread'),
    ),
)
def test_fugacity_of_density_walkers(walkers: RateFamily, a: list) -> None:
    point = fugacity_of_density(walkers, a)
    assert point.phi == pytest.approx(a, rel=1e-9)
    assert point.a == pytest.approx(a, abs=1e-11)


def test_fugacity_of_density_multi_color(colored_h_example: RateFamily) -> None:
    """At equal fugacities 1/2 the total density is the balance density."""
    point = point_of_fugacity(colored_h_example, [0.5, 0.5])
    assert point.a.sum() == pytest.approx(H_EXAMPLE_DENSITY, abs=1e-5)
    back = fugacity_of_density(colored_h_example, point.a)
    assert back.phi == pytest.approx([0.5, 0.5], rel=1e-8)


def test_fugacity_of_density_rejects(walkers: RateFamily) -> None:
    with pytest.raises(DomainError):
        fugacity_of_density(walkers, [0.0, 1.0])
    with pytest.raises(ValidationError):
        fugacity_of_density(walkers, [1.0])


def test_fugacity_of_density_single_species() -> None:
    family = multi_color(1, ScalarRate(kind="power", exponent=2.0))
    point = fugacity_of_density(family, [3.0])
    assert point.a[0] == pytest.approx(3.0, abs=1e-11)


def test_sample_marginal(walkers: RateFamily, rng: np.random.Generator) -> None:
    table = build_table(walkers, [2.0, 0.5])
    draws = sample_marginal(table, rng, 20000)
    assert draws.shape == (20000, 2)
    assert draws.mean(axis=0) == pytest.approx([2.0, 0.5], abs=0.06)


def test_gradients_of_walkers(walkers: RateFamily) -> None:
    point = point_of_fugacity(walkers, [0.8, 1.7])
    assert grad_tilde_g(point) == pytest.approx(np.eye(2), abs=1e-10)
    assert grad_density(point) == pytest.approx(np.eye(2), abs=1e-10)
    for i in range(2):
        assert hess_tilde_g(point, i) == pytest.approx(np.zeros((2, 2)), abs=1e-9)


def test_hessian_cumulant_matches_differences(
    perturbed_frame_point: DensityPoint,
) -> None:
    for i in range(2):
        exact = hess_tilde_g(perturbed_frame_point, i)
        numeric = hess_tilde_g_numeric(perturbed_frame_point, i)
        assert numeric == pytest.approx(exact, rel=1e-5, abs=1e-6)


def test_gamma_inverse_singular(walkers: RateFamily) -> None:
    point = point_of_fugacity(walkers, [1.0, 1.0])
    degenerate = DensityPoint(
        a=point.a, phi=point.phi, gamma=np.ones((2, 2)), table=point.table
    )
    with pytest.raises(SingularMatrixError):
        degenerate.gamma_inverse()


def test_scalar_phi_derivatives_poisson() -> None:
    phi, d_phi, d2_phi = scalar_phi_derivatives(ScalarRate(), 1.3)
    assert phi == pytest.approx(1.3, rel=1e-10)
    assert d_phi == pytest.approx(1.0, rel=1e-9)
    assert d2_phi == pytest.approx(0.0, abs=1e-8)


def test_scalar_phi_derivatives_h_example() -> None:
    """The three-level example has variance equal to density at phi=1."""
    phi, d_phi, _ = scalar_phi_derivatives(h_example_rate(), H_EXAMPLE_DENSITY)
    assert phi == pytest.approx(1.0, abs=1e-4)
    assert d_phi == pytest.approx(phi / H_EXAMPLE_DENSITY, rel=1e-4)


def test_independent_with_speeds() -> None:
    """Speeds rescale the fugacity but not the density."""
    family = independent(2, speeds=(2.0, 0.5))
    point = fugacity_of_density(family, [1.0, 1.0])
    assert point.phi == pytest.approx([2.0, 0.5], rel=1e-9)
