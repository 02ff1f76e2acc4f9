"""Coupling tensor of the limiting Burgers system and its decoupleability."""
import dataclasses
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from scipy import optimize

from zrpfluct.constants import (
    COMMON_ZERO_TOL,
    DEFAULT_FRAME_TOL,
    DEFAULT_GRID_SIZE,
    MIN_GRID_SIZE,
    DecoupleClass,
)
from zrpfluct.ensemble import (
    DensityPoint,
    hess_tilde_g,
    hess_tilde_g_numeric,
    scalar_phi_derivatives,
)
from zrpfluct.errors import FrameConditionError, ValidationError
from zrpfluct.frame import FrameCertificate, check_frame
from zrpfluct.rates import ScalarRate

_logger = logging.getLogger(__name__)

ORTHOGONALITY_TOL = 1e-12
FLAT_TOL = 1e-14


@dataclass(frozen=True, eq=False)
class CouplingTensor:
    """Coupling constants ``Gamma^i_{jl}`` indexed as ``gamma_norm[i, j, l]``."""

    n: int
    lam: float
    q: np.ndarray
    gamma_raw: np.ndarray
    gamma_norm: np.ndarray
    c: float
    certificate: Optional[FrameCertificate] = field(default=None, repr=False)
    rotation: Optional[np.ndarray] = None
    fd_discrepancy: float = 0.0

    def as_record(self) -> Dict[str, Any]:
        """Return the JSON record written by ``coupling build``."""
        return {
            "n": self.n,
            "lambda": self.lam,
            "c": self.c,
            "q": self.q.tolist(),
            "gamma_raw": self.gamma_raw.tolist(),
            "gamma_norm": self.gamma_norm.tolist(),
            "trilinear_residual": trilinear_residual(self),
            "fd_discrepancy": self.fd_discrepancy,
        }


def normalize_tensor(
    gamma_raw: np.ndarray, q: np.ndarray, lam: float, c: float
) -> np.ndarray:
    """Return ``(c / lam^(3/2)) (q_j q_l / q_i) gamma_raw[i, j, l]``."""
    scale = np.einsum("j,l,i->ijl", q, q, 1 / q)
    return c / lam ** 1.5 * scale * gamma_raw


def build_tensor(
    point: DensityPoint,
    c: float,
    tol: float = DEFAULT_FRAME_TOL,
    cross_check: bool = True,
) -> CouplingTensor:
    """Build the coupling tensor at a frame density.

    Second derivatives come from the cumulant formula; with ``cross_check``
    they are compared with finite differences and the worst scaled
    discrepancy is kept on the tensor.
    """
    certificate = check_frame(point, tol)
    if not certificate.holds:
        raise FrameConditionError(
            f"frame condition fails at a={point.a.tolist()}: "
            f"offdiag {certificate.offdiag_residual:.3g}, "
            f"ratio {certificate.ratio_residual:.3g}",
            certificate,
        )
    n = point.n_species
    gamma_raw = np.stack([hess_tilde_g(point, i) for i in range(n)])
    discrepancy = 0.0
    if cross_check:
        for i in range(n):
            numeric = hess_tilde_g_numeric(point, i)
            bound = np.maximum(1e-6, 1e-4 * np.abs(gamma_raw[i]))
            discrepancy = max(
                discrepancy, float(np.max(np.abs(numeric - gamma_raw[i]) / bound))
            )
        if discrepancy > 1:
            _logger.warning(
                "Cumulant and finite-difference Hessians disagree (scaled %.3g)",
                discrepancy,
            )
    q = np.sqrt(point.tilde_g)
    return CouplingTensor(
        n=n,
        lam=certificate.lam,
        q=q,
        gamma_raw=gamma_raw,
        gamma_norm=normalize_tensor(gamma_raw, q, certificate.lam, c),
        c=c,
        certificate=certificate,
        fd_discrepancy=discrepancy,
    )


def tensor_from_values(gamma_norm: np.ndarray, c: float = 1.0) -> CouplingTensor:
    """Wrap explicit coupling constants, e.g. read back from a record."""
    values = np.asarray(gamma_norm, dtype=float)
    n = values.shape[0]
    if values.shape != (n, n, n):
        raise ValidationError(f"coupling tensor must be n x n x n, got {values.shape}")
    return CouplingTensor(
        n=n,
        lam=1.0,
        q=np.ones(n),
        gamma_raw=values.copy(),
        gamma_norm=values,
        c=c,
    )


def trilinear_residual(tensor: CouplingTensor) -> float:
    """Return the largest deviation from full symmetry of ``gamma_norm``."""
    values = tensor.gamma_norm
    swap_last = np.abs(values - values.transpose(0, 2, 1))
    swap_first = np.abs(values - values.transpose(1, 0, 2))
    return float(max(swap_last.max(initial=0.0), swap_first.max(initial=0.0)))


def rotation_matrix(psi: float) -> np.ndarray:
    """Return the rotation by ``psi``."""
    c, s = math.cos(psi), math.sin(psi)
    return np.array([[c, -s], [s, c]])


def reflection_matrix(psi: float) -> np.ndarray:
    """Return the reflection paired with ``rotation_matrix(psi)``."""
    c, s = math.cos(psi), math.sin(psi)
    return np.array([[-c, s], [s, c]])


def rotate_tensor(sigma: np.ndarray, tensor: CouplingTensor) -> CouplingTensor:
    """Return ``sum sigma_ia Gamma^a_bc sigma_jb sigma_lc``."""
    sigma = np.asarray(sigma, dtype=float)
    if sigma.shape != (tensor.n, tensor.n):
        raise ValidationError(f"rotation must be {tensor.n} x {tensor.n}")
    deviation = float(np.max(np.abs(sigma @ sigma.T - np.eye(tensor.n))))
    if deviation > ORTHOGONALITY_TOL:
        raise ValidationError(f"matrix is not orthogonal (deviation {deviation:.3g})")
    rotated = np.einsum("ia,jb,lc,abc->ijl", sigma, sigma, sigma, tensor.gamma_norm)
    composed = sigma if tensor.rotation is None else sigma @ tensor.rotation
    return dataclasses.replace(tensor, gamma_norm=rotated, rotation=composed)


def cross_couplings(
    tensor: CouplingTensor, psi: np.ndarray, reflect: bool = False
) -> Tuple[np.ndarray, np.ndarray]:
    """Return ``F(psi)`` and ``G(psi)``, the cross terms after rotating by psi.

    ``F`` is ``Gamma^0_{01}`` and ``G`` is ``Gamma^1_{01}`` of the rotated
    tensor.
    """
    cos, sin = np.cos(psi), np.sin(psi)
    if reflect:
        first = np.stack([-cos, sin], axis=-1)
    else:
        first = np.stack([cos, -sin], axis=-1)
    second = np.stack([sin, cos], axis=-1)
    values = tensor.gamma_norm
    f_values = np.einsum("...a,...b,...c,abc->...", first, first, second, values)
    g_values = np.einsum("...a,...b,...c,abc->...", second, first, second, values)
    return f_values, g_values


@dataclass
class DecoupleScan:
    """Values of ``F`` and ``G`` over a grid of angles with their zeros."""

    psi: np.ndarray
    F: np.ndarray  # pylint: disable=invalid-name
    G: np.ndarray  # pylint: disable=invalid-name
    min_max_margin: float
    classification: DecoupleClass
    partial: bool
    f_roots: List[float] = field(default_factory=list)
    common_root: Optional[float] = None

    def as_record(self) -> Dict[str, Any]:
        return {
            "min_max_margin": self.min_max_margin,
            "classification": self.classification,
            "partial": self.partial,
            "f_roots": self.f_roots,
            "common_root": self.common_root,
            "grid_size": len(self.psi),
        }


def _grid_roots(func: Any, psi: np.ndarray, values: np.ndarray) -> List[float]:
    roots: List[float] = [float(p) for p, v in zip(psi, values) if v == 0]
    crossing = np.nonzero(values[:-1] * values[1:] < 0)[0]
    for k in crossing:
        roots.append(float(optimize.brentq(func, psi[k], psi[k + 1], xtol=1e-15)))
    return sorted(roots)


def decouple_scan(
    tensor: CouplingTensor, grid_size: int = DEFAULT_GRID_SIZE
) -> DecoupleScan:
    """Scan rotation angles for a common zero of ``F`` and ``G``.

    Zeros of ``F`` are bracketed on the grid and refined with Brent's method;
    the tensor is fully decoupleable when ``G`` also vanishes at one of them.
    A zero of ``F`` alone decouples one component.
    """
    if tensor.n != 2:
        raise ValidationError("decoupleability scan is defined for two species")
    if grid_size < MIN_GRID_SIZE:
        raise ValidationError(f"grid_size must be at least {MIN_GRID_SIZE}")
    psi = np.linspace(0.0, 2 * math.pi, grid_size)
    f_values, g_values = cross_couplings(tensor, psi)

    def f_at(angle: float) -> float:
        return float(cross_couplings(tensor, np.array(angle))[0])

    def g_at(angle: float) -> float:
        return float(cross_couplings(tensor, np.array(angle))[1])

    scale = max(1.0, float(np.max(np.abs(tensor.gamma_norm))))
    margin = float(np.min(np.maximum(np.abs(f_values), np.abs(g_values))))
    common: Optional[float] = None
    if np.max(np.abs(f_values)) < FLAT_TOL:
        f_roots = [float(p) for p in psi]
        g_roots = (
            [0.0]
            if np.max(np.abs(g_values)) < FLAT_TOL
            else _grid_roots(g_at, psi, g_values)
        )
        if g_roots:
            common = g_roots[0]
            margin = min(margin, abs(g_at(common)))
    else:
        f_roots = _grid_roots(f_at, psi, f_values)
        for root in f_roots:
            at_root = max(abs(f_at(root)), abs(g_at(root)))
            margin = min(margin, at_root)
            if common is None and abs(g_at(root)) < COMMON_ZERO_TOL * scale:
                common = root
    classification: DecoupleClass = (
        "fully decoupleable" if common is not None else "not fully decoupleable"
    )
    _logger.info(
        "Decoupleability scan: %s, margin %.6g, %d zeros of F",
        classification,
        margin,
        len(f_roots),
    )
    return DecoupleScan(
        psi=psi,
        F=f_values,
        G=g_values,
        min_max_margin=margin,
        classification=classification,
        partial=bool(f_roots),
        f_roots=f_roots if len(f_roots) < grid_size else [],
        common_root=common,
    )


def multicolor_constants(
    g: ScalarRate, rho0: float, c: float
) -> Tuple[float, float, float]:
    """Return ``(c1, c2, c3)`` of the reduced sum and difference equations.

    ``c1 = phi / (2 rho0)``, ``c2 = c phi'' / rho0`` and ``c3 = sqrt(phi / rho0)``.
    """
    phi, _, phi2 = scalar_phi_derivatives(g, rho0)
    return phi / (2 * rho0), c * phi2 / rho0, math.sqrt(phi / rho0)
