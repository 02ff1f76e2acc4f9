"""Grand-canonical product measures of a rate family.

The one-site marginal at fugacity ``phi`` is ``p(k) = phi**k / (Z g!(k))``.
Sums run shell by shell over ``|k| = m`` until the remaining tail is
negligible, so every table carries an estimate of what it left out.
"""
import itertools
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize
from scipy.special import logsumexp

from zrpfluct.constants import (
    DEFAULT_REL_TOL,
    DIVERGENT_SHELLS,
    MAX_SHELLS,
    SINGULAR_CONDITION,
)
from zrpfluct.errors import (
    CapExceeded,
    ConvergenceError,
    DomainError,
    SingularMatrixError,
    ValidationError,
)
from zrpfluct.rates import (
    RateFamily,
    ScalarRate,
    log_g_factorial,
    multi_color,
    occupancies,
)

_logger = logging.getLogger(__name__)

MAX_NEWTON_STEPS = 100
MAX_HALVINGS = 40


@lru_cache(maxsize=None)
def _shell(n: int, total: int) -> np.ndarray:
    shell = np.array(list(occupancies(n, total)), dtype=np.int64)
    shell.setflags(write=False)
    return shell


@dataclass(frozen=True, eq=False)
class EnsembleTable:
    """Truncated one-site marginal of the product measure at fugacity ``phi``."""

    family: RateFamily
    phi: np.ndarray
    cap: int
    log_z: float
    tail_bound: float
    states: np.ndarray
    weights: np.ndarray
    mean: np.ndarray
    gamma: np.ndarray
    kappa: np.ndarray
    shell_log_sums: Tuple[float, ...] = field(repr=False, default=())

    @property
    def n_species(self) -> int:
        return self.family.n_species

    @property
    def Z(self) -> float:  # pylint: disable=invalid-name
        """Truncated partition function."""
        return math.exp(self.log_z)

    def expect(self, values: np.ndarray) -> float:
        """Return the mean of per-state ``values`` under the marginal."""
        return math.fsum((self.weights * np.asarray(values, dtype=float)).tolist())

    def as_record(self) -> dict:
        """Return the JSON record written by ``ensemble dump``."""
        return {
            "family": self.family.describe(),
            "phi": self.phi.tolist(),
            "a": self.mean.tolist(),
            "Z": self.Z,
            "gamma": self.gamma.tolist(),
            "cap": self.cap,
            "tail_bound": self.tail_bound,
        }


def _shell_log_terms(family: RateFamily, log_phi: np.ndarray, total: int) -> np.ndarray:
    shell = _shell(family.n_species, total)
    log_g = np.array([log_g_factorial(family, k) for k in shell])
    return shell @ log_phi - log_g


def _moments(weights: np.ndarray, columns: np.ndarray, order: int) -> np.ndarray:
    """Return the mixed moments of ``columns`` of the given order.

    Every entry is a compensated sum over the states, and entries that differ
    only by the order of their indices are computed once.
    """
    n = columns.shape[1]
    moments = np.zeros((n,) * order)
    for index in itertools.combinations_with_replacement(range(n), order):
        terms = weights * np.prod(columns[:, list(index)], axis=1)
        value = math.fsum(terms.tolist())
        for permuted in set(itertools.permutations(index)):
            moments[permuted] = value
    return moments


def build_table(
    family: RateFamily,
    phi: Sequence[float],
    rel_tol: float = DEFAULT_REL_TOL,
    max_cap: Optional[int] = None,
) -> EnsembleTable:
    """Sum the marginal shell by shell until the tail is below ``rel_tol``.

    Raises DomainError when the shells keep growing at a non-decreasing
    rate, which is how a fugacity outside the convergence domain of ``Z``
    shows up.
    """
    phi_arr = np.asarray(phi, dtype=float)
    if phi_arr.shape != (family.n_species,):
        raise ValidationError(
            f"fugacity {phi_arr.tolist()} does not have {family.n_species} entries"
        )
    if not np.all(phi_arr > 0) or not np.all(np.isfinite(phi_arr)):
        raise DomainError(f"fugacity must be positive, got {phi_arr.tolist()}")
    log_phi = np.log(phi_arr)
    limit = family.effective_cap
    if max_cap is not None:
        limit = max_cap if limit is None else min(limit, max_cap)

    shells: List[np.ndarray] = []
    shell_sums: List[float] = []
    log_z = -math.inf
    tail = math.inf
    growing = 0
    total = 0
    while True:
        if total > MAX_SHELLS:
            raise DomainError(
                f"partition function not converged after {MAX_SHELLS} shells "
                f"at phi={phi_arr.tolist()}"
            )
        terms = _shell_log_terms(family, log_phi, total)
        shells.append(terms)
        shell_sum = float(logsumexp(terms))
        log_z = float(np.logaddexp(log_z, shell_sum))
        if len(shell_sums) >= 2:
            ratio = shell_sum - shell_sums[-1]
            previous = shell_sums[-1] - shell_sums[-2]
            if ratio >= 0 and ratio >= previous - 1e-12:
                growing += 1
                if growing >= DIVERGENT_SHELLS:
                    raise DomainError(
                        f"fugacity {phi_arr.tolist()} outside the domain of Z: "
                        f"shells grow since m={total - growing}"
                    )
            else:
                growing = 0
        if shell_sums:
            log_ratio = shell_sum - shell_sums[-1]
            if log_ratio < 0:
                # geometric continuation of the last shell ratio
                tail = math.exp(shell_sum - log_z + log_ratio) / -math.expm1(log_ratio)
            else:
                tail = math.inf
        shell_sums.append(shell_sum)
        if total > 0 and math.exp(shell_sum - log_z) < rel_tol and tail < rel_tol:
            break
        if limit is not None and total >= limit:
            if tail > rel_tol:
                _logger.warning(
                    "Ensemble of %s stops at the family cap %s with tail %.3g",
                    family.describe(),
                    limit,
                    tail,
                )
            break
        total += 1

    states = np.concatenate([_shell(family.n_species, m) for m in range(total + 1)])
    weights = np.exp(np.concatenate(shells) - log_z)
    mean = _moments(weights, states, 1)
    centered = states - mean
    gamma = _moments(weights, centered, 2)
    kappa = _moments(weights, centered, 3)
    return EnsembleTable(
        family=family,
        phi=phi_arr,
        cap=total,
        log_z=log_z,
        tail_bound=min(tail, 1.0),
        states=states,
        weights=weights,
        mean=mean,
        gamma=gamma,
        kappa=kappa,
        shell_log_sums=tuple(shell_sums),
    )


def density_of_fugacity(table: EnsembleTable) -> np.ndarray:
    """Return ``a^i = sum_k k^i p(k)``."""
    return table.mean.copy()


def covariance(table: EnsembleTable) -> np.ndarray:
    """Return the one-site covariance matrix of the species counts."""
    return table.gamma.copy()


def cumulant3(table: EnsembleTable, p: int, q: int, r: int) -> float:
    """Return the joint third cumulant of ``k^p, k^q, k^r``."""
    return float(table.kappa[p, q, r])


def sample_marginal(
    table: EnsembleTable, rng: np.random.Generator, size: Optional[int] = None
) -> np.ndarray:
    """Draw occupancies from the truncated marginal by inverse CDF."""
    cdf = np.cumsum(table.weights)
    u = rng.random(size) * cdf[-1]
    index = np.minimum(np.searchsorted(cdf, u, side="right"), len(cdf) - 1)
    return table.states[index]


@dataclass(frozen=True, eq=False)
class DensityPoint:
    """Density ``a`` together with its fugacity and one-site statistics."""

    a: np.ndarray
    phi: np.ndarray
    gamma: np.ndarray
    table: EnsembleTable

    @property
    def family(self) -> RateFamily:
        return self.table.family

    @property
    def n_species(self) -> int:
        return len(self.a)

    @property
    def tilde_g(self) -> np.ndarray:
        """Mean rates ``g~_i(a)``, equal to the fugacity."""
        return self.phi

    @property
    def chem_potential(self) -> np.ndarray:
        return np.log(self.phi)

    @property
    def kappa(self) -> np.ndarray:
        """Joint third cumulants of the species counts."""
        return self.table.kappa

    def gamma_inverse(self) -> np.ndarray:
        """Return ``Gamma(a)^-1``, refusing near-singular covariances."""
        cond = np.linalg.cond(self.gamma)
        if not np.isfinite(cond) or cond > SINGULAR_CONDITION:
            raise SingularMatrixError(
                f"covariance at a={self.a.tolist()} has condition number {cond:.3g}"
            )
        inverse = np.linalg.inv(self.gamma)
        return (inverse + inverse.T) / 2

    def as_record(self) -> dict:
        """Return the JSON record written by ``ensemble dump``."""
        return {
            "family": self.family.describe(),
            "phi": self.phi.tolist(),
            "a": self.a.tolist(),
            "Z": self.table.Z,
            "gamma": self.gamma.tolist(),
            "tilde_g": self.tilde_g.tolist(),
            "chem_potential": self.chem_potential.tolist(),
            "cap": self.table.cap,
            "tail_bound": self.table.tail_bound,
        }


def point_of_fugacity(
    family: RateFamily, phi: Sequence[float], rel_tol: float = DEFAULT_REL_TOL
) -> DensityPoint:
    """Return the density point matched to a given fugacity."""
    table = build_table(family, phi, rel_tol)
    return DensityPoint(
        a=table.mean.copy(), phi=table.phi, gamma=table.gamma, table=table
    )


def _initial_fugacity(family: RateFamily, a: np.ndarray) -> np.ndarray:
    n = family.n_species
    guess = []
    for i in range(n):
        unit = tuple(1 if j == i else 0 for j in range(n))
        try:
            g_one = family.rates(unit)[i]
        except CapExceeded:
            g_one = 1.0
        guess.append(max(g_one, 1e-12) * a[i])
    return np.array(guess)


def _fugacity_by_bisection(
    family: RateFamily, a: float, tol: float, rel_tol: float
) -> DensityPoint:
    def residual(log_phi: float) -> float:
        try:
            return float(build_table(family, [math.exp(log_phi)], rel_tol).mean[0]) - a
        except DomainError:
            return math.inf

    low = math.log(_initial_fugacity(family, np.array([a]))[0])
    high = low
    while residual(low) > 0:
        low -= 1.0
    while residual(high) < 0:
        high += 1.0
        if high - low > 200:
            raise DomainError(f"density {a} outside the range of the fugacity map")
    while not np.isfinite(residual(high)):
        high = (low + high) / 2
    root = optimize.brentq(residual, low, high, xtol=1e-15, rtol=4e-16)
    point = point_of_fugacity(family, [math.exp(root)], rel_tol)
    if abs(point.a[0] - a) >= tol:
        raise ConvergenceError(
            f"bisection for density {a} stalled", point.phi, [abs(point.a[0] - a)]
        )
    return point


def fugacity_of_density(
    family: RateFamily,
    a: Sequence[float],
    tol: float = 1e-11,
    rel_tol: float = DEFAULT_REL_TOL,
    phi_init: Optional[Sequence[float]] = None,
) -> DensityPoint:
    """Invert ``R(phi) = a`` by damped Newton steps in log-fugacity.

    The Jacobian of ``R`` with respect to ``log phi`` is ``Gamma``, so each
    step solves ``Gamma d = a - R``. Steps are halved when they leave the
    domain of ``Z`` or increase the residual.
    """
    target = np.asarray(a, dtype=float)
    if target.shape != (family.n_species,):
        raise ValidationError(
            f"density {target.tolist()} does not have {family.n_species} entries"
        )
    if not np.all(target > 0):
        raise DomainError(f"density must be positive, got {target.tolist()}")
    phi0 = (
        np.asarray(phi_init, dtype=float)
        if phi_init is not None
        else _initial_fugacity(family, target)
    )
    try:
        point = point_of_fugacity(family, phi0, rel_tol)
    except DomainError:
        point = point_of_fugacity(family, np.full_like(target, 1e-3), rel_tol)
    residuals = [float(np.max(np.abs(point.a - target)))]
    for _ in range(MAX_NEWTON_STEPS):
        if residuals[-1] < tol:
            return point
        try:
            step = np.linalg.solve(point.gamma, target - point.a)
        except np.linalg.LinAlgError as exc:
            raise ConvergenceError(
                "singular covariance during Newton iteration", point.phi, residuals
            ) from exc
        log_phi = np.log(point.phi)
        for _ in range(MAX_HALVINGS):
            try:
                candidate = point_of_fugacity(family, np.exp(log_phi + step), rel_tol)
            except DomainError:
                step = step / 2
                continue
            residual = float(np.max(np.abs(candidate.a - target)))
            if residual < residuals[-1] or residual < tol:
                break
            step = step / 2
        else:
            break
        point = candidate
        residuals.append(residual)
    if residuals[-1] < tol:
        return point
    if family.n_species == 1:
        _logger.debug("Newton stalled for n=1, falling back to bisection")
        return _fugacity_by_bisection(family, float(target[0]), tol, rel_tol)
    raise ConvergenceError(
        f"no fugacity found for density {target.tolist()} "
        f"(residual {residuals[-1]:.3g})",
        point.phi,
        residuals,
    )


def grad_tilde_g(point: DensityPoint) -> np.ndarray:
    """Return ``d g~_i / d a^j = diag(phi) Gamma^-1``."""
    return point.phi[:, None] * point.gamma_inverse()


def grad_density(point: DensityPoint) -> np.ndarray:
    """Return ``d a^i / d phi^j = Gamma diag(1/phi)``."""
    return point.gamma / point.phi[None, :]


def hess_tilde_g(point: DensityPoint, i: int) -> np.ndarray:
    """Return the Hessian of ``g~_i`` in ``a`` from the cumulant expansion.

    With ``M = Gamma^-1``: ``phi_i (M_il M_ij - sum M_ip M_qj M_ml kappa_pqm)``.
    """
    inverse = point.gamma_inverse()
    row = inverse[i]
    hess = np.outer(row, row) - np.einsum(
        "p,qj,ml,pqm->lj", row, inverse, inverse, point.kappa
    )
    hess = point.phi[i] * hess
    return (hess + hess.T) / 2


def _grad_at(
    point: DensityPoint, a: np.ndarray, i: int, rel_tol: float
) -> np.ndarray:
    shifted = fugacity_of_density(
        point.family, a, tol=1e-14, rel_tol=rel_tol, phi_init=point.phi
    )
    return grad_tilde_g(shifted)[i]


def hess_tilde_g_numeric(
    point: DensityPoint, i: int, step: float = 1e-3, rel_tol: float = DEFAULT_REL_TOL
) -> np.ndarray:
    """Return the Hessian of ``g~_i`` by differencing the exact gradient.

    Five-point central differences at ``h`` and ``h/2`` combined by one
    Richardson step.
    """
    n = point.n_species
    hess = np.zeros((n, n))
    for ell in range(n):
        h_base = step * max(point.a[ell], 1.0)
        estimates = []
        for h in (h_base, h_base / 2):
            unit = np.zeros(n)
            unit[ell] = h
            stencil = [
                _grad_at(point, point.a + s * unit, i, rel_tol) for s in (-2, -1, 1, 2)
            ]
            estimates.append(
                (stencil[0] - 8 * stencil[1] + 8 * stencil[2] - stencil[3]) / (12 * h)
            )
        hess[:, ell] = (16 * estimates[1] - estimates[0]) / 15
    return (hess + hess.T) / 2


def scalar_phi_derivatives(g: ScalarRate, rho: float) -> Tuple[float, float, float]:
    """Return ``phi(rho)`` with its first two derivatives for a scalar rate.

    ``phi' = phi / sigma^2`` and ``phi'' = phi (sigma^2 - kappa_3) / sigma^6``.
    """
    point = fugacity_of_density(multi_color(1, g), [rho])
    phi = float(point.phi[0])
    var = float(point.gamma[0, 0])
    k3 = float(point.kappa[0, 0, 0])
    return phi, phi / var, phi * (var - k3) / var ** 3
