"""Frame condition: densities where all species share one characteristic speed."""
import dataclasses
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import tenacity
from scipy import optimize

from zrpfluct.constants import DEFAULT_FRAME_TOL
from zrpfluct.ensemble import DensityPoint, fugacity_of_density
from zrpfluct.errors import (
    ConvergenceError,
    DomainError,
    NumericalError,
    ValidationError,
)
from zrpfluct.rates import RateFamily, ScalarRate, multi_color

_logger = logging.getLogger(__name__)

MAX_FRAME_STEPS = 60
RANK_TOL = 1e-7


@dataclass(frozen=True, eq=False)
class FrameCertificate:
    """Residuals of the two equivalent frame criteria at ``a0``."""

    a0: np.ndarray
    lam: float
    offdiag_residual: float
    ratio_residual: float
    holds: bool
    tol: float
    manifold: bool = False
    point: Optional[DensityPoint] = field(default=None, repr=False)
    residuals: Tuple[float, ...] = ()

    def as_record(self) -> Dict[str, Any]:
        """Return the JSON record written by ``frame solve``."""
        return {
            "a0": self.a0.tolist(),
            "lambda": self.lam,
            "offdiag_residual": self.offdiag_residual,
            "ratio_residual": self.ratio_residual,
            "holds": self.holds,
            "tol": self.tol,
            "manifold": self.manifold,
            "phi": None if self.point is None else self.point.phi.tolist(),
        }


def check_frame(
    point: DensityPoint, tol: float = DEFAULT_FRAME_TOL, manifold: bool = False
) -> FrameCertificate:
    """Evaluate whether ``Gamma`` is diagonal and ``g~_i / Gamma_ii`` constant.

    The speed ``lam`` is the mean of the ratios; their spread is the ratio
    residual.
    """
    gamma = point.gamma
    ratios = point.tilde_g / np.diag(gamma)
    lam = float(np.mean(ratios))
    ratio_residual = float(np.max(np.abs(ratios - lam)))
    offdiag = gamma - np.diag(np.diag(gamma))
    offdiag_residual = float(np.max(np.abs(offdiag))) if point.n_species > 1 else 0.0
    return FrameCertificate(
        a0=point.a.copy(),
        lam=lam,
        offdiag_residual=offdiag_residual,
        ratio_residual=ratio_residual,
        holds=offdiag_residual < tol and ratio_residual < tol,
        tol=tol,
        manifold=manifold,
        point=point,
    )


def frame_residual(point: DensityPoint) -> np.ndarray:
    """Return ``Gamma_ij`` for ``i < j`` followed by the ratio differences."""
    n = point.n_species
    gamma = point.gamma
    ratios = point.tilde_g / np.diag(gamma)
    upper = [gamma[i, j] for i in range(n) for j in range(i + 1, n)]
    return np.array(upper + [ratios[i] - ratios[-1] for i in range(n - 1)])


def multicolor_balance(g: ScalarRate, rho: float) -> float:
    """Return ``sigma^2(rho) - rho`` for the color-blind marginal of ``g``."""
    if not rho > 0:
        raise DomainError(f"density {rho} outside the range of the fugacity map")
    try:
        point = fugacity_of_density(multi_color(1, g), [rho])
    except ConvergenceError as exc:
        raise DomainError(f"density {rho} is not achievable: {exc}") from exc
    return float(point.gamma[0, 0]) - rho


def _balance_root(g: ScalarRate, rho_init: float, tol: float) -> Tuple[float, bool]:
    """Return a root of the balance function near ``rho_init``.

    The flag is True when the balance holds identically around ``rho_init``.
    """
    value = multicolor_balance(g, rho_init)
    if abs(value) < tol:
        probes = [multicolor_balance(g, rho_init * f) for f in (0.5, 2.0)]
        return rho_init, all(abs(p) < tol for p in probes)
    for factor in np.geomspace(1.05, 64.0, 40):
        for rho in (rho_init / factor, rho_init * factor):
            try:
                other = multicolor_balance(g, rho)
            except DomainError:
                continue
            if other == 0:
                return rho, False
            if np.sign(other) != np.sign(value):
                low, high = sorted((rho_init, rho))
                root = optimize.brentq(
                    lambda r: multicolor_balance(g, r), low, high, xtol=1e-14
                )
                return float(root), False
    raise ConvergenceError(
        f"no balance density found around rho={rho_init}", rho_init, [abs(value)]
    )


def _solve_multicolor(
    family: RateFamily, a_init: np.ndarray, tol: float
) -> FrameCertificate:
    g = family.scalar
    assert g is not None
    rho_init = float(np.sum(a_init))
    rho0, everywhere = _balance_root(g, rho_init, tol)
    a0 = a_init * (rho0 / rho_init)
    point = fugacity_of_density(family, a0)
    if everywhere:
        _logger.info("Balance holds identically, every density is a frame point")
    return check_frame(point, tol, manifold=True)


def _jacobian(family: RateFamily, a: np.ndarray, phi: np.ndarray) -> np.ndarray:
    n = len(a)
    columns = []
    for j in range(n):
        h = 1e-5 * max(a[j], 1e-2)
        unit = np.zeros(n)
        unit[j] = h
        plus = frame_residual(fugacity_of_density(family, a + unit, phi_init=phi))
        minus = frame_residual(fugacity_of_density(family, a - unit, phi_init=phi))
        columns.append((plus - minus) / (2 * h))
    return np.column_stack(columns)


def _newton_frame(
    family: RateFamily, a_start: np.ndarray, tol: float
) -> FrameCertificate:
    try:
        point = fugacity_of_density(family, a_start)
    except (DomainError, ConvergenceError) as exc:
        raise DomainError(f"domain: no fugacity for a_init={a_start.tolist()}") from exc
    residual = frame_residual(point)
    trace: List[float] = [float(np.max(np.abs(residual)))]
    for _ in range(MAX_FRAME_STEPS):
        if trace[-1] < tol / 10:
            break
        jac = _jacobian(family, point.a, point.phi)
        step, *_ = np.linalg.lstsq(jac, -residual, rcond=None)
        scale = 1.0
        while scale > 1e-6:
            candidate_a = point.a + scale * step
            if np.all(candidate_a > 0):
                try:
                    candidate = fugacity_of_density(
                        family, candidate_a, phi_init=point.phi
                    )
                except (DomainError, ConvergenceError):
                    candidate = None
                if candidate is not None:
                    candidate_residual = frame_residual(candidate)
                    norm = float(np.max(np.abs(candidate_residual)))
                    if norm < trace[-1]:
                        point, residual = candidate, candidate_residual
                        trace.append(norm)
                        break
            scale /= 2
        else:
            break
    if trace[-1] >= tol:
        raise ConvergenceError(
            f"frame system did not converge from a_init={a_start.tolist()} "
            f"(residual {trace[-1]:.3g})",
            point.a,
            trace,
        )
    jac = _jacobian(family, point.a, point.phi)
    singular = np.linalg.svd(jac, compute_uv=False)
    rank = int(np.sum(singular > RANK_TOL * max(singular.max(), 1.0)))
    certificate = check_frame(point, tol, manifold=rank < family.n_species)
    return dataclasses.replace(certificate, residuals=tuple(trace))


def _jittered(a_init: np.ndarray, attempt: int) -> np.ndarray:
    if attempt <= 1:
        return a_init
    signs = np.where(np.arange(len(a_init)) % 2 == 0, 1.0, -1.0)
    return a_init * (1 + 0.05 * (attempt - 1) * signs)


def solve_frame(
    family: RateFamily, a_init: Sequence[float], tol: float = DEFAULT_FRAME_TOL
) -> FrameCertificate:
    """Find a frame density near ``a_init``.

    Multi-color families are reduced to the scalar balance equation. Other
    families run a damped Gauss-Newton iteration on the frame residuals with
    a finite-difference Jacobian, restarted from jittered starts when it
    stalls. A rank-deficient Jacobian at the solution flags a manifold.
    """
    if family.n_species < 2:
        raise ValidationError("the frame system needs at least two species")
    start = np.asarray(a_init, dtype=float)
    if start.shape != (family.n_species,) or not np.all(start > 0):
        raise DomainError(f"domain: a_init={start.tolist()} is not a positive density")
    if family.kind == "multi_color":
        return _solve_multicolor(family, start, tol)
    for attempt in tenacity.Retrying(
        stop=tenacity.stop_after_attempt(3),
        retry=tenacity.retry_if_exception_type(ConvergenceError),
        before_sleep=tenacity.before_sleep_log(_logger, logging.WARNING),
        reraise=True,
    ):
        with attempt:
            number = attempt.retry_state.attempt_number
            return _newton_frame(family, _jittered(start, number), tol)
    raise NumericalError("frame solver exhausted its restarts")  # pragma: no cover


@dataclass(frozen=True)
class PerturbedWalkFrame:
    """Closed-form frame point of two perturbed independent walks."""

    phi: Tuple[float, float]
    x: float
    y: float
    Z: float  # pylint: disable=invalid-name
    a: Tuple[float, float]
    gamma_diag: Tuple[float, float]
    lam: float


def perturbed_rw_moments(
    phi: Sequence[float], x: float, y: float
) -> Tuple[float, np.ndarray, np.ndarray]:
    """Return ``Z``, the density and the covariance of the perturbed walks.

    The marginal is a pair of Poisson weights with extra mass ``x phi^1`` at
    ``(1, 0)`` and ``y phi^2`` at ``(0, 1)``.
    """
    p1, p2 = float(phi[0]), float(phi[1])
    es = math.exp(p1 + p2)
    z = es + x * p1 + y * p2
    a = np.array([p1 * (es + x), p2 * (es + y)]) / z
    second = (
        np.array(
            [
                [es * p1 * (1 + p1) + x * p1, es * p1 * p2],
                [es * p1 * p2, es * p2 * (1 + p2) + y * p2],
            ]
        )
        / z
    )
    return z, a, second - np.outer(a, a)


def perturbed_rw_frame(phi1: float, x: float) -> PerturbedWalkFrame:
    """Return the frame point of the perturbed walks on ``phi1 + phi2 = 1``.

    ``y`` solves ``x(phi1 - 1) - y phi1 - x y / e = 0``; there
    ``Gamma = diag(e phi) / Z`` and the common speed is ``Z / e``.
    """
    if not 0 < phi1 < 1:
        raise DomainError(f"phi1={phi1} must lie in (0, 1)")
    if x <= -1:
        raise DomainError(f"admissibility violated: x={x} <= -1")
    y = x * (phi1 - 1) / (phi1 + x / math.e)
    if y <= -1:
        raise DomainError(f"admissibility violated: y={y:.6g} <= -1")
    phi2 = 1 - phi1
    z, a, gamma = perturbed_rw_moments((phi1, phi2), x, y)
    return PerturbedWalkFrame(
        phi=(phi1, phi2),
        x=x,
        y=y,
        Z=z,
        a=(float(a[0]), float(a[1])),
        gamma_diag=(float(gamma[0, 0]), float(gamma[1, 1])),
        lam=z / math.e,
    )


def symmetric_rw_frame(s: float, phi1: float) -> PerturbedWalkFrame:
    """Return a point of the symmetric branch ``x = y = (s - 2) e^s``.

    Every split ``phi1 + phi2 = s`` of the total fugacity is a frame point.
    """
    x = (s - 2) * math.exp(s)
    if x <= -1:
        raise DomainError(f"admissibility violated: x=y={x:.6g} <= -1 at s={s}")
    if not 0 < phi1 < s:
        raise DomainError(f"phi1={phi1} must lie in (0, {s})")
    z, a, gamma = perturbed_rw_moments((phi1, s - phi1), x, x)
    return PerturbedWalkFrame(
        phi=(phi1, s - phi1),
        x=x,
        y=x,
        Z=z,
        a=(float(a[0]), float(a[1])),
        gamma_diag=(float(gamma[0, 0]), float(gamma[1, 1])),
        lam=z / (math.exp(s) + x),
    )

