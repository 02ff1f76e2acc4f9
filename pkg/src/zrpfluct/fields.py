"""Fluctuation fields of simulated trajectories.

Test functions are tabulated on the lattice ``x / N``. A field is
``Y^i(H) = N^(-1/2) sum_x H(x / N - shift) (alpha^i(x) - a0^i)``; in the
traveling frame the shift is the integer number of sites
``floor(2 c lam t N^(2 - gamma))``.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate, ndimage

from zrpfluct.constants import MIN_REPLICAS, FrameKind
from zrpfluct.ensemble import (
    DensityPoint,
    fugacity_of_density,
    grad_tilde_g,
    sample_marginal,
)
from zrpfluct.errors import ValidationError
from zrpfluct.kmc import LatticeState, Observer, RunSummary, SimParams, run
from zrpfluct.rates import RateFamily

_logger = logging.getLogger(__name__)

TEST_FUNCTION_KINDS = ("cos", "sin", "constant", "mollifier", "custom")


@dataclass(frozen=True, eq=False)
class TestFunction:
    """Test function with its discrete gradient and Laplacian."""

    kind: str
    values: np.ndarray
    label: str
    mode: int = 0
    eps: float = 0.0

    __test__ = False  # not a pytest class

    def __post_init__(self) -> None:
        if self.kind not in TEST_FUNCTION_KINDS:
            raise ValidationError(f"unknown test function kind {self.kind!r}")

    @property
    def N(self) -> int:  # pylint: disable=invalid-name
        return len(self.values)

    @property
    def grad(self) -> np.ndarray:
        """``(N/2) (H(x+1) - H(x-1))``."""
        return self.N / 2 * (np.roll(self.values, -1) - np.roll(self.values, 1))

    @property
    def laplacian(self) -> np.ndarray:
        """``N^2 (H(x+1) + H(x-1) - 2 H(x))``."""
        h = self.values
        return self.N ** 2 * (np.roll(h, -1) + np.roll(h, 1) - 2 * h)

    def shifted(self, sites: int) -> np.ndarray:
        """Return ``H(x/N - sites/N)`` on the lattice."""
        return np.roll(self.values, sites)

    def l2_norm2(self) -> float:
        """Lattice ``||H||^2 = (1/N) sum H^2``."""
        return float(np.mean(self.values ** 2))

    def grad_norm2(self) -> float:
        """Lattice ``||grad H||^2`` with the forward difference."""
        forward = self.N * (np.roll(self.values, -1) - self.values)
        return float(np.mean(forward ** 2))


def fourier_cos(N: int, k: int) -> TestFunction:  # noqa: N803
    """Return ``cos(2 pi k u)``."""
    u = np.arange(N) / N
    return TestFunction("cos", np.cos(2 * math.pi * k * u), f"cos{k}", mode=k)


def fourier_sin(N: int, k: int) -> TestFunction:  # noqa: N803
    """Return ``sin(2 pi k u)``."""
    u = np.arange(N) / N
    return TestFunction("sin", np.sin(2 * math.pi * k * u), f"sin{k}", mode=k)


def constant(N: int) -> TestFunction:  # noqa: N803
    return TestFunction("constant", np.ones(N), "const")


def custom(values: Sequence[float], label: str = "custom") -> TestFunction:
    return TestFunction("custom", np.asarray(values, dtype=float), label)


def mollifier_coefficients(eps: float, modes: np.ndarray) -> np.ndarray:
    """Fourier coefficients of the box of half-width ``eps`` smoothed by a
    Gaussian of width ``eps / 8``."""
    kappa = 2 * math.pi * np.asarray(modes, dtype=float) * eps
    box = np.sinc(kappa / math.pi)
    return box * np.exp(-((kappa / 8) ** 2) / 2)


def mollifier(N: int, eps: float) -> TestFunction:  # noqa: N803
    """Return the periodic mollifier ``G_eps`` centered at 0.

    Its squared L2 norm is below ``1 / eps``, twice that of the box
    ``(2 eps)^-1 1[-eps, eps]``.
    """
    if eps < 2 / N:
        raise ValidationError(f"mollifier under-resolved: eps={eps} < 2/N={2 / N}")
    coefficients = mollifier_coefficients(eps, np.arange(N // 2 + 1))
    values = N * np.fft.irfft(coefficients, N)
    if np.mean(values ** 2) > 1 / eps:
        raise ValidationError(f"mollifier norm exceeds 1/eps at eps={eps}")
    return TestFunction("mollifier", values, f"moll{eps:g}", eps=eps)


def fourier_pairs(N: int, modes: Sequence[int]) -> List[TestFunction]:  # noqa: N803
    """Return ``cos_k, sin_k`` for every mode."""
    out: List[TestFunction] = []
    for k in modes:
        if not 0 < k < N / 2:
            raise ValidationError(f"mode {k} not resolvable on N={N}")
        out.extend((fourier_cos(N, k), fourier_sin(N, k)))
    return out


def frame_velocity(params: SimParams, lam: float) -> float:
    """Return the traveling-frame velocity in sites per unit macroscopic time."""
    return 2 * params.c * lam * float(params.N) ** (2 - params.gamma)


def frame_shift(t: float, params: SimParams, lam: float) -> int:
    """Return ``floor(2 c lam t N^(2 - gamma))``."""
    return int(math.floor(frame_velocity(params, lam) * t))


def eval_field(
    state: LatticeState, H: TestFunction, a0: Sequence[float], shift: int = 0
) -> np.ndarray:
    """Return ``Y^i(H)`` for every species."""
    centered = state.occupancy - np.asarray(a0, dtype=float)
    return H.shifted(shift) @ centered / math.sqrt(state.size)


@dataclass
class FieldSeries:
    """Per-replica time series of field values, keyed by field and test label.

    Every entry is an array over species.
    """

    frame: str = "fixed"
    lam: float = 1.0
    times: List[float] = field(default_factory=list)
    data: Dict[Tuple[str, str], List[np.ndarray]] = field(default_factory=dict)

    def add(self, name: str, label: str, values: np.ndarray) -> None:
        self.data.setdefault((name, label), []).append(np.array(values, dtype=float))

    def series(self, name: str, label: str) -> np.ndarray:
        """Return an array of shape ``(len(times), n_species)``."""
        return np.array(self.data[(name, label)])

    def labels(self, name: str) -> List[str]:
        return [label for (fname, label) in self.data if fname == name]

    def rows(self, replica: int) -> Iterator[Tuple[int, float, str, int, str, float]]:
        """Yield ``(replica, t, field, species, mode, value)`` rows."""
        for (name, label), values in sorted(self.data.items()):
            for t, row in zip(self.times, values):
                for i, value in enumerate(row):
                    yield replica, t, name, i, label, float(value)


def stack(series: Sequence[FieldSeries], name: str, label: str) -> np.ndarray:
    """Return replica-stacked values of shape ``(M, T, n)``."""
    return np.stack([s.series(name, label) for s in series])


class FieldObserver(Observer):
    """Record ``Y^i(H)`` for a list of test functions at record times."""

    def __init__(
        self,
        test_functions: Sequence[TestFunction],
        a0: Sequence[float],
        frame: FrameKind = "fixed",
        lam: float = 1.0,
    ) -> None:
        """Prepare the observer; the traveling frame needs ``lam``."""
        self.test_functions = list(test_functions)
        self.a0 = np.asarray(a0, dtype=float)
        self.frame = frame
        self.lam = lam
        self.series = FieldSeries(frame=frame, lam=lam)
        self._matrix = np.stack([h.values for h in self.test_functions])
        self._params: Optional[SimParams] = None

    def start(self, t: float, state: LatticeState, params: SimParams) -> None:
        self._params = params

    def shift(self, t: float) -> int:
        if self.frame == "fixed" or self._params is None:
            return 0
        return frame_shift(t, self._params, self.lam)

    def record(self, t: float, state: LatticeState) -> None:
        shifted = np.roll(self._matrix, self.shift(t), axis=1)
        values = shifted @ (state.occupancy - self.a0) / math.sqrt(state.size)
        self.series.times.append(t)
        for h, row in zip(self.test_functions, values):
            self.series.add("Y", h.label, row)


class DecompositionObserver(Observer):
    """Accumulate the Dynkin decomposition ``Y_t = Y_0 + I + B + K + M``.

    Between events the integrands are constant, so the time integrals are
    exact sums. ``I`` is the diffusive part, ``B`` the asymmetric part with
    the linearization of ``g_i`` removed and ``K`` the linear transport part
    together with the jumps of ``Y`` caused by the integer frame shift.
    ``M_direct`` is the sum of particle-jump increments minus the
    compensator and must equal ``Y_t - Y_0 - I - B - K``. ``QV`` is the
    predictable quadratic variation.
    ``cross_variation`` sums the outer products of the per-event increment
    vectors, the optional bracket ``[M^i, M^j]`` for every test function.
    """

    wants_events = True

    def __init__(
        self,
        test_functions: Sequence[TestFunction],
        point: DensityPoint,
        frame: FrameKind = "fixed",
        lam: float = 1.0,
    ) -> None:
        """Prepare the accumulators at the reference density ``point``."""
        self.test_functions = list(test_functions)
        self.point = point
        self.a0 = point.a
        self.tilde_g = point.tilde_g
        self.grad_g = grad_tilde_g(point)
        self.frame = frame
        self.lam = lam
        self.series = FieldSeries(frame=frame, lam=lam)
        n_tests = len(self.test_functions)
        n = point.n_species
        self.Y = np.zeros((n_tests, n))
        self.Y0 = np.zeros((n_tests, n))
        self.I = np.zeros((n_tests, n))
        self.B = np.zeros((n_tests, n))
        self.K = np.zeros((n_tests, n))
        self.M_direct = np.zeros((n_tests, n))
        self.QV = np.zeros((n_tests, n))
        self.cross_variation = np.zeros((n_tests, n, n))
        self.t_last = 0.0
        self.m = 0
        self.velocity = 0.0

    # pylint: disable=attribute-defined-outside-init
    def start(self, t: float, state: LatticeState, params: SimParams) -> None:
        self.N = params.N
        self.sqrt_n = math.sqrt(params.N)
        self.p_right = params.p_right
        self.asym = 2 * params.c * float(params.N) ** (0.5 - params.gamma)
        if self.frame == "traveling":
            self.velocity = frame_velocity(params, self.lam)
        self.t_last = t
        self.m = int(math.floor(self.velocity * t))
        self.alpha = state.occupancy.astype(float)
        self.g = state.rate_matrix()
        self._set_shift(self.m)
        self.Y = self._field()
        self.Y0 = self.Y.copy()

    def _set_shift(self, m: int) -> None:
        self.m = m
        base = np.stack([h.values for h in self.test_functions])
        self.H = np.roll(base, m, axis=1)
        N = self.N  # pylint: disable=invalid-name
        up = np.roll(self.H, -1, axis=1)
        down = np.roll(self.H, 1, axis=1)
        self.lap = N ** 2 * (up + down - 2 * self.H) / (2 * self.sqrt_n)
        self.grad = self.asym * N / 2 * (up - down)
        self.qv_weight = (
            self.p_right * (N * (up - self.H)) ** 2
            + (1 - self.p_right) * (N * (down - self.H)) ** 2
        ) / N
        self._resum()

    def _site_terms(
        self, alpha: np.ndarray, g: np.ndarray
    ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        centered_g = g - self.tilde_g
        linear = (alpha - self.a0) @ self.grad_g.T
        return centered_g, centered_g - linear, linear

    def _resum(self) -> None:
        centered_g, nonlinear, linear = self._site_terms(self.alpha, self.g)
        self.rate_i = self.lap @ centered_g
        self.rate_b = self.grad @ nonlinear
        self.rate_k = self.grad @ linear
        self.rate_qv = self.qv_weight @ self.g

    def _field(self) -> np.ndarray:
        return self.H @ (self.alpha - self.a0) / self.sqrt_n

    def _integrate(self, t: float) -> None:
        dt = t - self.t_last
        if dt <= 0:
            return
        self.I += self.rate_i * dt
        self.B += self.rate_b * dt
        self.K += self.rate_k * dt
        self.M_direct -= (self.rate_i + self.rate_b + self.rate_k) * dt
        self.QV += self.rate_qv * dt
        self.t_last = t

    def _next_shift_time(self) -> float:
        if self.velocity > 0:
            return (self.m + 1) / self.velocity
        if self.velocity < 0:
            return self.m / self.velocity
        return math.inf

    def advance(self, t: float) -> None:
        t_shift = self._next_shift_time()
        while t_shift <= t:
            self._integrate(t_shift)
            before = self._field()
            self._set_shift(self.m + (1 if self.velocity > 0 else -1))
            after = self._field()
            self.K += after - before
            self.Y = after
            t_shift = self._next_shift_time()
        self._integrate(t)

    def jump(self, x: int, y: int, i: int, state: LatticeState) -> None:
        increment = (self.H[:, y] - self.H[:, x]) / self.sqrt_n
        self.Y[:, i] += increment
        self.M_direct[:, i] += increment
        delta = np.zeros_like(self.Y)
        delta[:, i] = increment
        self.cross_variation += np.einsum("tj,tk->tjk", delta, delta)
        for site in (x, y):
            old_g = self.g[site].copy()
            old = self._site_terms(self.alpha[site], old_g)
            self.alpha[site] = state.sites[site]
            self.g[site] = state.rates[site]
            new = self._site_terms(self.alpha[site], self.g[site])
            self.rate_i += np.outer(self.lap[:, site], new[0] - old[0])
            self.rate_b += np.outer(self.grad[:, site], new[1] - old[1])
            self.rate_k += np.outer(self.grad[:, site], new[2] - old[2])
            self.rate_qv += np.outer(self.qv_weight[:, site], self.g[site] - old_g)

    def record(self, t: float, state: LatticeState) -> None:
        self._resum()
        self.series.times.append(t)
        martingale = self.Y - self.Y0 - self.I - self.B - self.K
        values = {
            "Y": self.Y,
            "I": self.I,
            "B": self.B,
            "K": self.K,
            "M": martingale,
            "M_direct": self.M_direct,
            "QV": self.QV,
        }
        for name, array in values.items():
            for h, row in zip(self.test_functions, array):
                self.series.add(name, h.label, row)


def mollified_quadratic(
    state: LatticeState,
    eps: float,
    a0: Sequence[float],
    gamma_raw: np.ndarray,
    H: TestFunction,
    shift: int = 0,
) -> np.ndarray:
    """Return the integrand of ``A^{i,eps}`` for every species.

    ``sum_jk gamma_raw[i, j, k] (1/N) sum_u grad H(u) Y^j(G_u) Y^k(G_u)``
    where ``G_u`` is the mollifier centered at ``u``.
    """
    N = state.size  # pylint: disable=invalid-name
    moll = mollifier(N, eps)
    centered = state.occupancy - np.asarray(a0, dtype=float)
    spectrum = np.fft.rfft(centered, axis=0) * np.fft.rfft(moll.values)[:, None]
    smoothed = np.fft.irfft(spectrum, N, axis=0) / math.sqrt(N)
    grad = custom(H.shifted(shift)).grad
    weights = np.einsum("u,uj,uk->jk", grad, smoothed, smoothed) / N
    return np.einsum("ijk,jk->i", gamma_raw, weights)


class MollifiedObserver(Observer):
    """Record the ``A^{i,eps}`` integrand for a ladder of ``eps`` values."""

    def __init__(
        self,
        H: TestFunction,
        eps_values: Sequence[float],
        a0: Sequence[float],
        gamma_raw: np.ndarray,
        frame: FrameKind = "fixed",
        lam: float = 1.0,
    ) -> None:
        """Prepare the observer."""
        self.H = H
        self.eps_values = list(eps_values)
        self.a0 = np.asarray(a0, dtype=float)
        self.gamma_raw = np.asarray(gamma_raw, dtype=float)
        self.frame = frame
        self.lam = lam
        self.series = FieldSeries(frame=frame, lam=lam)
        self._params: Optional[SimParams] = None

    def start(self, t: float, state: LatticeState, params: SimParams) -> None:
        self._params = params
        for eps in self.eps_values:
            mollifier(params.N, eps)

    def record(self, t: float, state: LatticeState) -> None:
        shift = 0
        if self.frame == "traveling" and self._params is not None:
            shift = frame_shift(t, self._params, self.lam)
        self.series.times.append(t)
        for eps in self.eps_values:
            value = mollified_quadratic(
                state, eps, self.a0, self.gamma_raw, self.H, shift
            )
            self.series.add("A_integrand", f"eps={eps:g}", value)


def energy_functional(times: Sequence[float], integrand: np.ndarray) -> np.ndarray:
    """Integrate record-time samples into ``A_t`` by the trapezoid rule."""
    return integrate.cumulative_trapezoid(
        integrand, np.asarray(times), axis=0, initial=0
    )


def cauchy_differences(series: FieldSeries) -> Dict[Tuple[float, float], float]:
    """Return ``sup_t |A^eps1_t - A^eps2_t|`` for consecutive ``eps`` values.

    Pairs are ordered from the largest ``eps`` down.
    """
    labels = series.labels("A_integrand")
    eps_values = sorted((float(label.split("=")[1]) for label in labels), reverse=True)
    curves = {
        eps: energy_functional(
            series.times, series.series("A_integrand", f"eps={eps:g}")
        )
        for eps in eps_values
    }
    return {
        (e1, e2): float(np.max(np.abs(curves[e1] - curves[e2])))
        for e1, e2 in zip(eps_values, eps_values[1:])
    }


@dataclass
class StructureFactor:
    """Replica estimates of ``E[Y^i_t(H_k) Y^j_s(H_k)]`` over record times."""

    mode: int
    times: np.ndarray
    value: np.ndarray
    stderr: np.ndarray
    n_replicas: int
    warnings: List[str] = field(default_factory=list)


def jackknife(samples: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Return the mean over axis 0 and its leave-one-out jackknife error."""
    count = samples.shape[0]
    mean = samples.mean(axis=0)
    if count < 2:
        return mean, np.full_like(mean, np.inf)
    leave_one_out = (samples.sum(axis=0) - samples) / (count - 1)
    spread = ((leave_one_out - leave_one_out.mean(axis=0)) ** 2).sum(axis=0)
    return mean, np.sqrt((count - 1) / count * spread)


def structure_factor(
    series: Sequence[FieldSeries], mode: int, name: str = "Y"
) -> StructureFactor:
    """Estimate space-time correlations of mode ``k`` with jackknife errors.

    The cosine and sine test functions of the mode estimate the same
    correlation and are averaged per replica.
    """
    cos = stack(series, name, f"cos{mode}")
    sin = stack(series, name, f"sin{mode}")
    products = (
        np.einsum("rti,rsj->rtsij", cos, cos) + np.einsum("rti,rsj->rtsij", sin, sin)
    ) / 2
    value, stderr = jackknife(products)
    warnings = []
    if len(series) < MIN_REPLICAS:
        warnings.append(
            f"only {len(series)} replicas, estimates need at least {MIN_REPLICAS}"
        )
        _logger.warning(warnings[-1])
    return StructureFactor(
        mode=mode,
        times=np.asarray(series[0].times),
        value=value,
        stderr=stderr,
        n_replicas=len(series),
        warnings=warnings,
    )


class ProfileObserver(Observer):
    """Record block-averaged empirical densities."""

    def __init__(self, block: int = 1) -> None:
        """Average over ``block`` consecutive sites."""
        self.block = block
        self.times: List[float] = []
        self.profiles: List[np.ndarray] = []

    def record(self, t: float, state: LatticeState) -> None:
        occupancy = state.occupancy.astype(float)
        self.times.append(t)
        self.profiles.append(
            ndimage.uniform_filter1d(occupancy, self.block, axis=0, mode="wrap")
        )


def hydrodynamic_profile(
    family: RateFamily,
    profile: Callable[[float], Sequence[float]],
    params: SimParams,
    rng: np.random.Generator,
    block: int = 1,
) -> Tuple[np.ndarray, np.ndarray, RunSummary]:
    """Run from a slowly varying product measure and record density profiles.

    Returns the record times, the profiles of shape ``(T, N, n)`` and the
    run summary.
    """
    cache: Dict[Tuple[float, ...], DensityPoint] = {}
    occupancy = np.zeros((params.N, family.n_species), dtype=np.int64)
    for x in range(params.N):
        density = tuple(round(float(v), 6) for v in profile(x / params.N))
        if density not in cache:
            cache[density] = fugacity_of_density(family, density)
        occupancy[x] = sample_marginal(cache[density].table, rng)
    state = LatticeState(family, occupancy)
    observer = ProfileObserver(block)
    summary = run(state, params, [observer], rng)
    return np.asarray(observer.times), np.asarray(observer.profiles), summary
