"""Spectral reference integrators for the limiting fluctuation equations.

Fields are stored as Fourier coefficients in numpy's ``rfft`` convention,
``c_k = int Y(u) exp(-2 pi i k u) du`` for ``k = 0 .. K/2``, so that
``Y(cos_k) = Re c_k`` and ``Y(sin_k) = -Im c_k``. Coefficients carry a
leading path axis, shape ``(paths, n, K/2 + 1)``. The Nyquist mode is held
at zero and the zero mode never moves.

In these conventions the linear equation reads
``dY = (1/2) D Y'' dt - 2 c D Y' dt + sqrt(g~) dW'`` with
``D = diag(g~) Gamma^-1``; the change of variables
``z = E^T Gamma^(-1/2) c`` with ``Gamma^(-1/2) diag(g~) Gamma^(-1/2) =
E diag(mu) E^T`` splits it into independent scalar OU modes.
"""
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from zrpfluct.constants import BLOWUP_AMPLITUDE, DEFAULT_SPDE_DT, DEFAULT_SPDE_MODES
from zrpfluct.coupling import CouplingTensor
from zrpfluct.ensemble import DensityPoint
from zrpfluct.errors import BlowupError, NumericalError, ValidationError
from zrpfluct.fields import FieldSeries, mollifier_coefficients

_logger = logging.getLogger(__name__)

SYMMETRY_TOL = 1e-12


def _sym_sqrt(matrix: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    values, vectors = np.linalg.eigh(matrix)
    if np.any(values <= 0):
        raise NumericalError(f"matrix is not positive definite: eigenvalues {values}")
    root = vectors @ np.diag(np.sqrt(values)) @ vectors.T
    inverse_root = vectors @ np.diag(1 / np.sqrt(values)) @ vectors.T
    return root, inverse_root


@dataclass(frozen=True, eq=False)
class SpectralModel:
    """Matrices of the linear equation at a reference density."""

    gamma: np.ndarray
    tilde_g: np.ndarray
    c: float
    gamma_sqrt: np.ndarray
    gamma_isqrt: np.ndarray
    A: np.ndarray  # pylint: disable=invalid-name
    mu: np.ndarray
    E: np.ndarray  # pylint: disable=invalid-name

    @property
    def n_species(self) -> int:
        return len(self.tilde_g)

    @property
    def to_z(self) -> np.ndarray:
        return self.E.T @ self.gamma_isqrt

    @property
    def from_z(self) -> np.ndarray:
        return self.gamma_sqrt @ self.E


def model_from_matrices(
    gamma: Sequence[Sequence[float]], tilde_g: Sequence[float], c: float = 0.0
) -> SpectralModel:
    """Build the diagonalized linear model from ``Gamma`` and ``g~``."""
    gamma = np.asarray(gamma, dtype=float)
    tilde_g = np.asarray(tilde_g, dtype=float)
    if gamma.shape != (len(tilde_g), len(tilde_g)):
        raise ValidationError("Gamma must be n x n with n the length of g~")
    root, inverse_root = _sym_sqrt((gamma + gamma.T) / 2)
    a_matrix = inverse_root @ np.diag(tilde_g) @ inverse_root
    asymmetry = float(np.max(np.abs(a_matrix - a_matrix.T)))
    if asymmetry > SYMMETRY_TOL * max(1.0, float(np.max(np.abs(a_matrix)))):
        raise NumericalError(f"A is not symmetric (deviation {asymmetry:.3g})")
    a_matrix = (a_matrix + a_matrix.T) / 2
    mu, vectors = np.linalg.eigh(a_matrix)
    if np.any(mu <= 0):
        raise NumericalError(f"A has non-positive eigenvalues {mu.tolist()}")
    return SpectralModel(
        gamma=gamma,
        tilde_g=tilde_g,
        c=c,
        gamma_sqrt=root,
        gamma_isqrt=inverse_root,
        A=a_matrix,
        mu=mu,
        E=vectors,
    )


def build_model(point: DensityPoint, c: float = 0.0) -> SpectralModel:
    return model_from_matrices(point.gamma, point.tilde_g, c)


@dataclass(frozen=True, eq=False)
class SpectralState:
    """Fourier coefficients of the fields of every path at time ``t``."""

    model: SpectralModel
    K: int  # pylint: disable=invalid-name
    coefficients: np.ndarray
    t: float = 0.0
    step: int = 0

    @property
    def n_paths(self) -> int:
        return self.coefficients.shape[0]

    @property
    def wavenumbers(self) -> np.ndarray:
        return 2 * math.pi * np.arange(self.K // 2 + 1)

    def real_space(self) -> np.ndarray:
        """Return grid values of shape ``(paths, n, K)``."""
        return self.K * np.fft.irfft(self.coefficients, self.K, axis=-1)

    def mode_values(
        self, k: int, frame_speed: float = 0.0
    ) -> Tuple[np.ndarray, np.ndarray]:
        """Return ``Y(cos_k)`` and ``Y(sin_k)`` with shape ``(paths, n)``.

        ``frame_speed`` moves the test functions with the traveling frame.
        """
        coefficient = self.coefficients[:, :, k]
        if frame_speed:
            phase = 2 * math.pi * k * frame_speed * self.t
            coefficient = coefficient * np.exp(1j * phase)
        return coefficient.real, -coefficient.imag


def _check_modes(K: int) -> None:  # noqa: N803
    if K < 4 or K % 2:
        raise ValidationError(f"K={K} must be an even number of at least 4")


def white_noise(
    model: SpectralModel,
    rng: np.random.Generator,
    K: int = DEFAULT_SPDE_MODES,  # noqa: N803
    paths: int = 1,
) -> SpectralState:
    """Draw the stationary white noise with covariance ``Gamma``.

    Each non-zero mode has ``E[c c^*] = Gamma``; the zero mode is real with
    covariance ``Gamma``.
    """
    _check_modes(K)
    n = model.n_species
    n_modes = K // 2 + 1
    noise = rng.standard_normal((2, paths, n, n_modes))
    z = (noise[0] + 1j * noise[1]) / math.sqrt(2)
    z[:, :, 0] = noise[0][:, :, 0]
    z[:, :, -1] = 0
    coefficients = np.einsum("im,pmk->pik", model.from_z, z)
    return SpectralState(model=model, K=K, coefficients=coefficients)


def _linear_factors(
    state: SpectralState, dt: float
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    model = state.model
    kappa = state.wavenumbers
    exponent = -np.outer(model.mu, 0.5 * kappa ** 2 + 2j * model.c * kappa) * dt
    amplitude = np.sqrt(-np.expm1(-np.outer(model.mu, kappa ** 2) * dt) / 2)
    return exponent, np.exp(exponent), amplitude


def _phi1(x: np.ndarray) -> np.ndarray:
    small = np.abs(x) < 1e-8
    safe = np.where(small, 1.0, x)
    return np.where(small, 1 + x / 2, np.expm1(safe) / safe)


def _advance(
    state: SpectralState,
    dt: float,
    rng: np.random.Generator,
    drift: Optional[np.ndarray] = None,
) -> SpectralState:
    model = state.model
    exponent, decay, amplitude = _linear_factors(state, dt)
    noise = rng.standard_normal((2,) + state.coefficients.shape)
    z = np.einsum("mi,pik->pmk", model.to_z, state.coefficients)
    z = decay * z + amplitude * (noise[0] + 1j * noise[1])
    if drift is not None:
        drift_z = np.einsum("mi,pik->pmk", model.to_z, drift)
        z = z + dt * _phi1(exponent) * drift_z
    z[:, :, -1] = 0
    coefficients = np.einsum("im,pmk->pik", model.from_z, z)
    return replace(
        state, coefficients=coefficients, t=state.t + dt, step=state.step + 1
    )


def ou_exact_step(
    state: SpectralState, dt: float, rng: np.random.Generator
) -> SpectralState:
    """Advance every diagonalized mode exactly as an OU process."""
    return _advance(state, dt, rng)


def _dealias_mask(K: int) -> np.ndarray:  # noqa: N803
    return np.arange(K // 2 + 1) <= K // 3


def nonlinear_drift(
    state: SpectralState, tensor: CouplingTensor, eps: float
) -> np.ndarray:
    """Return the Fourier coefficients of ``-c grad(sum gamma Y_eps^j Y_eps^k)``.

    ``Y_eps`` is the field smoothed by the mollifier of width ``eps``.
    """
    K = state.K  # pylint: disable=invalid-name
    mask = _dealias_mask(K)
    smooth = state.coefficients * mollifier_coefficients(eps, np.arange(K // 2 + 1))
    smooth = np.where(mask, smooth, 0)
    grid = K * np.fft.irfft(smooth, K, axis=-1)
    product = np.einsum("ijk,pjx,pkx->pix", tensor.gamma_raw, grid, grid)
    spectrum = np.where(mask, np.fft.rfft(product, axis=-1) / K, 0)
    return -tensor.c * 1j * state.wavenumbers * spectrum


def burgers_step(
    state: SpectralState,
    tensor: CouplingTensor,
    eps: float,
    dt: float,
    rng: np.random.Generator,
) -> SpectralState:
    """Exponential-Euler step of the mollified coupled Burgers system.

    A zero tensor gives exactly ``ou_exact_step`` for the same noise stream.
    """
    if eps < 2 * math.pi / state.K:
        raise ValidationError(f"eps={eps} below the resolution 2 pi / K of K={state.K}")
    if tensor.n != state.model.n_species:
        raise ValidationError("coupling tensor and fields differ in species count")
    drift = None
    if tensor.c != 0 and np.any(tensor.gamma_raw):
        drift = nonlinear_drift(state, tensor, eps)
    new = _advance(state, dt, rng, drift)
    amplitude = float(np.max(np.abs(new.coefficients)))
    if not amplitude <= BLOWUP_AMPLITUDE:
        raise BlowupError(
            f"amplitude {amplitude:.3g} at t={new.t:.6g} exceeds {BLOWUP_AMPLITUDE:g}",
            new.step,
            amplitude,
        )
    return new


@dataclass
class SpdeRun:
    """Result of ``run_spde``: one field series per path."""

    series: List[FieldSeries]
    state: SpectralState
    steps: int
    warnings: List[str] = field(default_factory=list)


def run_spde(
    state: SpectralState,
    T: float,  # noqa: N803
    dt: float = DEFAULT_SPDE_DT,
    rng: Optional[np.random.Generator] = None,
    modes: Sequence[int] = (1,),
    record_times: Sequence[float] = (),
    tensor: Optional[CouplingTensor] = None,
    eps: Optional[float] = None,
    frame_speed: float = 0.0,
) -> SpdeRun:
    """Integrate up to ``T`` and record mode values of every path.

    Record time ``t`` is taken at step ``round(t / dt)``. Without a tensor the
    linear equation is stepped exactly.
    """
    if rng is None:
        rng = np.random.default_rng()
    if not dt > 0 or not T > 0:
        raise ValidationError("dt and T must be positive")
    steps = int(round(T / dt))
    record_steps = sorted(int(round(t / dt)) for t in record_times)
    if eps is None:
        eps = 8 / state.K
    frame = "traveling" if frame_speed else "fixed"
    series = [FieldSeries(frame=frame) for _ in range(state.n_paths)]

    def record() -> None:
        for k in modes:
            cos, sin = state.mode_values(k, frame_speed)
            for path, s in enumerate(series):
                s.add("Y", f"cos{k}", cos[path])
                s.add("Y", f"sin{k}", sin[path])
        for s in series:
            s.times.append(state.t)

    index = 0
    for step in range(steps + 1):
        while index < len(record_steps) and record_steps[index] == step:
            record()
            index += 1
        if step == steps:
            break
        if tensor is None:
            state = ou_exact_step(state, dt, rng)
        else:
            state = burgers_step(state, tensor, eps, dt, rng)
    return SpdeRun(series=series, state=state, steps=steps)


def ou_correlation(
    model: SpectralModel,
    k: int,
    i: int,
    j: int,
    lag: float,
    frame_speed: float = 0.0,
) -> float:
    """Return ``E[Y^i_{t+lag}(cos_k) Y^j_t(cos_k)]`` in the stationary state.

    ``frame_speed`` is the speed of the traveling test functions, ``2 c lam``.
    """
    kappa = 2 * math.pi * k
    rotation = 2j * kappa * (model.c * model.mu - frame_speed / 2)
    decay = np.exp(-(model.mu * 0.5 * kappa ** 2 + rotation) * abs(lag))
    left = model.from_z
    matrix = left @ np.diag(decay) @ left.T
    return float(0.5 * matrix[i, j].real)


@dataclass
class DecoupledFields:
    """Sum field and pairwise difference fields of a multi-color system."""

    total: np.ndarray
    differences: Dict[Tuple[int, int], np.ndarray]


def decouple_transform(h: np.ndarray, a0: Sequence[float]) -> DecoupledFields:
    """Return ``sum_i h^i`` and ``a0^j h^i - a0^i h^j`` for ``i < j``.

    The species axis of ``h`` is the first axis after any leading path axis
    of the same length as ``a0``.
    """
    a0 = np.asarray(a0, dtype=float)
    h = np.asarray(h)
    axis = 0 if h.shape[0] == len(a0) else 1
    parts = np.moveaxis(h, axis, 0)
    n = len(a0)
    differences = {
        (i, j): a0[j] * parts[i] - a0[i] * parts[j]
        for i in range(n)
        for j in range(i + 1, n)
    }
    return DecoupledFields(total=parts.sum(axis=0), differences=differences)


def decoupled_driver_covariance(a0: Sequence[float]) -> Tuple[List[str], np.ndarray]:
    """Return the labels and covariance of the sum and difference drivers.

    The drivers are ``sum_k sqrt(a^k) W^k`` and
    ``sqrt(a^i) a^j W^i - sqrt(a^j) a^i W^j`` for independent ``W``.
    """
    a0 = np.asarray(a0, dtype=float)
    n = len(a0)
    labels = ["sum"]
    rows = [np.ones(n)]
    for i in range(n):
        for j in range(i + 1, n):
            row = np.zeros(n)
            row[i] = a0[j]
            row[j] = -a0[i]
            labels.append(f"diff{i}{j}")
            rows.append(row)
    lin = np.array(rows)
    return labels, lin @ np.diag(a0) @ lin.T
