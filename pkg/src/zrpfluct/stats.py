"""Numeric diagnostics for equivalence of ensembles and Boltzmann-Gibbs."""
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import signal, stats

from zrpfluct.constants import MAX_ENUMERATION_STATES, MIN_BIN_SAMPLES
from zrpfluct.ensemble import DensityPoint, sample_marginal
from zrpfluct.errors import ValidationError
from zrpfluct.fields import TestFunction, fourier_cos, frame_velocity
from zrpfluct.kmc import LatticeState, Observer, SimParams, spectral_gap
from zrpfluct.rates import RateFamily
from zrpfluct.runner import ReplicaRunner

_logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LocalObservable:
    """Function of the occupancy vector of one site.

    ``func`` maps an ``(m, n)`` integer array to ``m`` values.
    """

    name: str
    func: Callable[[np.ndarray], np.ndarray]

    def __call__(self, states: np.ndarray) -> np.ndarray:
        states = np.asarray(states)
        flat = states.reshape(-1, states.shape[-1])
        return np.asarray(self.func(flat), dtype=float).reshape(states.shape[:-1])


def species_count(i: int) -> LocalObservable:
    return LocalObservable(f"alpha{i}", lambda k: k[:, i])


def falling_square(i: int) -> LocalObservable:
    """``alpha^i (alpha^i - 1)``."""
    return LocalObservable(f"alpha{i}(alpha{i}-1)", lambda k: k[:, i] * (k[:, i] - 1))


def rate_observable(family: RateFamily, i: int) -> LocalObservable:
    """``g_i(alpha)``."""

    def func(states: np.ndarray) -> np.ndarray:
        return np.array([family.rates(tuple(int(v) for v in k))[i] for k in states])

    return LocalObservable(f"g{i}", func)


def zero_observable() -> LocalObservable:
    return LocalObservable("zero", lambda k: np.zeros(len(k)))


def observable_derivatives(
    point: DensityPoint, f: LocalObservable
) -> Tuple[float, np.ndarray, np.ndarray]:
    """Return ``f~(a0)``, its gradient and its Hessian in the density.

    With ``M = Gamma^-1``, ``v = Cov(f, alpha)`` and ``W`` the joint third
    cumulants of ``(f, alpha, alpha)``: ``grad = M v`` and
    ``hess = M W M - M kappa(grad) M``.
    """
    table = point.table
    values = f(table.states)
    mean = table.expect(values)
    centered_f = values - mean
    centered = table.states - table.mean
    weights = table.weights / table.weights.sum()
    v = np.einsum("s,s,sp->p", weights, centered_f, centered)
    w = np.einsum("s,s,sp,sq->pq", weights, centered_f, centered, centered)
    inverse = point.gamma_inverse()
    grad = inverse @ v
    correction = np.einsum("rsq,s->rq", point.kappa, grad)
    hess = inverse @ (w - correction) @ inverse
    return mean, grad, (hess + hess.T) / 2


@dataclass
class EnsembleComparison:
    """Discrepancy of the ensemble expansion at one block size."""

    ell: int
    observable: str
    order: int
    method: str
    y: np.ndarray
    weights: np.ndarray
    errors: np.ndarray
    l4_error: float
    samples: int = 0
    warnings: List[str] = field(default_factory=list)

    def as_row(self) -> Dict[str, object]:
        return {
            "ell": self.ell,
            "observable": self.observable,
            "order": self.order,
            "method": self.method,
            "l4_error": self.l4_error,
            "bins": len(self.weights),
            "samples": self.samples,
        }


def _dense_marginal(point: DensityPoint, values: np.ndarray) -> np.ndarray:
    table = point.table
    shape = tuple(int(v) + 1 for v in table.states.max(axis=0))
    dense = np.zeros(shape)
    dense[tuple(table.states.T)] = values * table.weights / table.weights.sum()
    return dense


def _trim(law: np.ndarray, tol: float = 1e-22) -> Tuple[slice, ...]:
    """Return slices dropping trailing hyperplanes of negligible mass."""
    slices = []
    for axis in range(law.ndim):
        other = tuple(a for a in range(law.ndim) if a != axis)
        mass = np.abs(law).sum(axis=other) if other else np.abs(law)
        keep = np.nonzero(mass > tol * mass.sum())[0]
        slices.append(slice(0, int(keep[-1]) + 1 if len(keep) else 1))
    return tuple(slices)


class _Expansion:
    """Centered observable and its expansion at ``a0``."""

    def __init__(self, point: DensityPoint, f: LocalObservable, order: int) -> None:
        if order not in (1, 2):
            raise ValidationError(f"order must be 1 or 2, got {order}")
        self.a0 = point.a
        self.gamma = point.gamma
        self.order = order
        self.mean, self.grad, self.hess = observable_derivatives(point, f)

    def centered_conditional(
        self, conditional: np.ndarray, y: np.ndarray
    ) -> np.ndarray:
        """Conditional expectation of the centered observable given ``y``."""
        out = conditional - self.mean
        if self.order == 2:
            out = out - (y - self.a0) @ self.grad
        return out

    def value(self, y: np.ndarray, m: int) -> np.ndarray:
        dev = y - self.a0
        if self.order == 1:
            return dev @ self.grad
        quad = np.einsum("...j,...k,jk->...", dev, dev, self.hess)
        return 0.5 * (quad - np.sum(self.hess * self.gamma) / m)

    def centered_site(self, values: np.ndarray, states: np.ndarray) -> np.ndarray:
        out = values - self.mean
        if self.order == 2:
            out = out - (states - self.a0) @ self.grad
        return out


def _enumerate(
    point: DensityPoint, f: LocalObservable, ells: Sequence[int], expansion: _Expansion
) -> Optional[List[EnsembleComparison]]:
    table = point.table
    nu = _dense_marginal(point, np.ones(len(table.states)))
    f_nu = _dense_marginal(point, f(table.states))
    sizes = {2 * ell + 1: ell for ell in ells}
    law = nu.copy()
    out: Dict[int, EnsembleComparison] = {}
    for m in range(2, max(sizes) + 1):
        previous = law
        law = np.clip(signal.convolve(previous, nu), 0, None)
        if law.size > MAX_ENUMERATION_STATES:
            return None
        if m in sizes:
            numerator = signal.convolve(previous, f_nu)
            support = law > 1e-14 * law.max()
            index = np.nonzero(support)
            y = np.stack(index, axis=-1) / m
            conditional = numerator[index] / law[index]
            centered = expansion.centered_conditional(conditional, y)
            errors = np.abs(centered - expansion.value(y, m))
            weights = law[index] / law[index].sum()
            out[m] = EnsembleComparison(
                ell=sizes[m],
                observable=f.name,
                order=expansion.order,
                method="enumeration",
                y=y,
                weights=weights,
                errors=errors,
                l4_error=float(np.sum(weights * errors ** 4) ** 0.25),
            )
        law = law[_trim(law)]
    return [out[2 * ell + 1] for ell in ells]


def _monte_carlo(
    point: DensityPoint,
    f: LocalObservable,
    ell: int,
    expansion: _Expansion,
    samples: int,
    rng: np.random.Generator,
) -> EnsembleComparison:
    m = 2 * ell + 1
    blocks = sample_marginal(point.table, rng, size=(samples, m))
    totals = blocks.sum(axis=1)
    site_means = f(blocks).mean(axis=1)
    keys, inverse, counts = np.unique(
        totals, axis=0, return_inverse=True, return_counts=True
    )
    inverse = inverse.ravel()
    conditional = np.bincount(inverse, weights=site_means) / counts
    y = keys / m
    centered = expansion.centered_conditional(conditional, y)
    errors = np.abs(centered - expansion.value(y, m))
    dense = counts >= MIN_BIN_SAMPLES
    warnings = []
    if not np.all(dense):
        dropped = counts[~dense].sum() / samples
        warnings.append(
            f"ell={ell}: {int(np.sum(~dense))} bins below {MIN_BIN_SAMPLES} samples "
            f"({dropped:.1%} of the mass) left out"
        )
        _logger.warning(warnings[-1])
    weights = counts[dense] / counts[dense].sum() if np.any(dense) else counts * 0.0
    return EnsembleComparison(
        ell=ell,
        observable=f.name,
        order=expansion.order,
        method="monte_carlo",
        y=y[dense],
        weights=weights,
        errors=errors[dense],
        l4_error=float(np.sum(weights * errors[dense] ** 4) ** 0.25),
        samples=samples,
        warnings=warnings,
    )


def eoe_check(
    point: DensityPoint,
    f: LocalObservable,
    ells: Sequence[int],
    samples: int = 0,
    rng: Optional[np.random.Generator] = None,
    order: int = 2,
) -> List[EnsembleComparison]:
    """Compare ``E[f | block average]`` with its ensemble expansion.

    The observable is centered at ``a0`` (and linearized for ``order=2``).
    Conditional expectations are enumerated exactly when the block law fits
    in ``MAX_ENUMERATION_STATES`` entries and ``samples`` is 0; otherwise
    ``samples`` blocks are drawn and binned by their totals.
    """
    if not ells or min(ells) < 1:
        raise ValidationError("ells must be a non-empty list of positive block sizes")
    expansion = _Expansion(point, f, order)
    if not samples:
        exact = _enumerate(point, f, ells, expansion)
        if exact is not None:
            return exact
        samples = 100_000
        _logger.warning("Block law too large to enumerate, sampling %d blocks", samples)
    if rng is None:
        raise ValidationError("Monte Carlo conditioning needs a random generator")
    return [_monte_carlo(point, f, ell, expansion, samples, rng) for ell in ells]


def decay_slope(ells: Sequence[float], values: Sequence[float]) -> float:
    """Return the least-squares slope of ``log values`` against ``log ells``."""
    log_ells = np.log(np.asarray(ells, dtype=float))
    fit = stats.linregress(log_ells, np.log(np.asarray(values, dtype=float)))
    return float(fit.slope)


class BoltzmannGibbsObserver(Observer):
    """Track ``sup_t (int_0^t sum_x (f - replacement) h(x) ds)^2`` on a trajectory.

    The integrand is constant between events and traveling-frame shifts, so
    the integral is exact and the supremum is attained at those times.
    """

    wants_events = True

    def __init__(
        self,
        expansion: "_Expansion",
        f: LocalObservable,
        ell: int,
        h: np.ndarray,
        lam: float = 0.0,
    ) -> None:
        """Prepare the observer for blocks of ``2 ell + 1`` sites."""
        self.expansion = expansion
        self.f = f
        self.ell = ell
        self.m = 2 * ell + 1
        self.h_base = np.asarray(h, dtype=float)
        self.lam = lam
        self.integral = 0.0
        self.sup = 0.0
        self.t_last = 0.0
        self.velocity = 0.0

    # pylint: disable=attribute-defined-outside-init
    def start(self, t: float, state: LatticeState, params: SimParams) -> None:
        self.t_last = t
        if self.lam:
            self.velocity = frame_velocity(params, self.lam)
        self.shift = int(math.floor(self.velocity * t))
        self.h = np.roll(self.h_base, self.shift)
        occupancy = state.occupancy.astype(np.int64)
        self.site = self.expansion.centered_site(self.f(occupancy), occupancy)
        window = np.arange(-self.ell, self.ell + 1)
        self.windows = window
        size = state.size
        self.block = np.stack(
            [occupancy[(np.arange(size) + d) % size] for d in window]
        ).sum(axis=0).astype(float)
        self.replacement = self.expansion.value(self.block / self.m, self.m)
        self.value = float((self.site - self.replacement) @ self.h)

    def _integrate(self, t: float) -> None:
        self.integral += self.value * (t - self.t_last)
        self.t_last = t
        self.sup = max(self.sup, self.integral ** 2)

    def _next_shift_time(self) -> float:
        if self.velocity > 0:
            return (self.shift + 1) / self.velocity
        if self.velocity < 0:
            return self.shift / self.velocity
        return math.inf

    def advance(self, t: float) -> None:
        t_shift = self._next_shift_time()
        while t_shift <= t:
            self._integrate(t_shift)
            self.shift += 1 if self.velocity > 0 else -1
            self.h = np.roll(self.h_base, self.shift)
            self.value = float((self.site - self.replacement) @ self.h)
            t_shift = self._next_shift_time()
        self._integrate(t)

    def jump(self, x: int, y: int, i: int, state: LatticeState) -> None:
        size = state.size
        for site in (x, y):
            k = np.array([state.sites[site]], dtype=np.int64)
            new = float(self.expansion.centered_site(self.f(k), k)[0])
            self.value += (new - self.site[site]) * self.h[site]
            self.site[site] = new
        touched = np.concatenate([(x - self.windows) % size, (y - self.windows) % size])
        touched = np.unique(touched)
        old = self.replacement[touched]
        self.block[(x - self.windows) % size, i] -= 1
        self.block[(y - self.windows) % size, i] += 1
        new_values = self.expansion.value(self.block[touched] / self.m, self.m)
        self.replacement[touched] = new_values
        self.value -= float((new_values - old) @ self.h[touched])


@dataclass
class BGRow:
    ell: int
    N: int  # pylint: disable=invalid-name
    estimate: float
    stderr: float
    bound_shape: float
    replicas: int


@dataclass
class BGDiagnostic:
    """Estimates of the Boltzmann-Gibbs functional over a ladder of block sizes."""

    observable: str
    order: int
    rows: List[BGRow]

    def interior_minimum(self) -> bool:
        """Return True when the smallest estimate is at neither end of the ladder."""
        if len(self.rows) < 3:
            return False
        estimates = [row.estimate for row in sorted(self.rows, key=lambda r: r.ell)]
        best = int(np.argmin(estimates))
        return 0 < best < len(estimates) - 1


def bound_shape(
    T: float, N: int, ell: int, h: np.ndarray, order: int = 2  # noqa: N803
) -> float:
    """Return the two-term shape of the Boltzmann-Gibbs bound without constant."""
    l2 = float(np.mean(h ** 2))
    l1 = float(np.mean(np.abs(h)))
    if order == 2:
        return T * ell / N * l2 + T ** 2 * N ** 2 / ell ** 3 * l1 ** 2
    return T * ell ** 2 / N * l2 + T ** 2 * N ** 2 / ell ** 2 * l1 ** 2


def bg_diagnostic(
    point: DensityPoint,
    f: LocalObservable,
    params: SimParams,
    ells: Sequence[int],
    replicas: int,
    H: Optional[TestFunction] = None,
    order: int = 2,
    lam: float = 0.0,
    workers: Optional[int] = None,
) -> BGDiagnostic:
    """Estimate the Boltzmann-Gibbs functional at every block size.

    Every replica runs one trajectory from the product measure with one
    observer per block size; ``h`` is the discrete gradient of ``H``.
    """
    if not ells or min(ells) < 1 or 2 * max(ells) + 1 > params.N:
        raise ValidationError(f"block sizes {list(ells)} do not fit on N={params.N}")
    if replicas < 2:
        raise ValidationError("bg_diagnostic needs at least two replicas")
    expansion = _Expansion(point, f, order)
    h = (H or fourier_cos(params.N, 1)).grad

    def observers() -> List[Observer]:
        return [BoltzmannGibbsObserver(expansion, f, ell, h, lam) for ell in ells]

    results = ReplicaRunner(workers).simulate(point, params, observers, replicas)
    rows = []
    for index, ell in enumerate(ells):
        sups = np.array([r.observers[index].sup for r in results])
        rows.append(
            BGRow(
                ell=ell,
                N=params.N,
                estimate=float(sups.mean()),
                stderr=float(sups.std(ddof=1) / math.sqrt(len(sups))),
                bound_shape=bound_shape(params.T, params.N, ell, h, order),
                replicas=replicas,
            )
        )
    return BGDiagnostic(observable=f.name, order=order, rows=rows)


@dataclass
class GapRow:
    ell: int
    totals: Tuple[int, ...]
    gap: float
    scaled: float


def gap_scaling(
    family: RateFamily, totals: Sequence[int], ells: Sequence[int]
) -> List[GapRow]:
    """Return ``W(k, ell) / ell^2`` for every ``ell``."""
    rows = []
    for ell in ells:
        result = spectral_gap(family, totals, ell)
        rows.append(
            GapRow(
                ell=ell,
                totals=result.totals,
                gap=result.gap,
                scaled=result.inverse / ell ** 2,
            )
        )
    return rows
