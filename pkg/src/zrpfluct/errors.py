"""Exceptions and error representations."""
import functools
from typing import Any, List, Optional, Sequence, Tuple

from zrpfluct.constants import INVALID_CONFIG_RC, NUMERICAL_FAILURE_RC


class ZrpError(Exception):
    """Base class of every error raised by zrpfluct."""

    exit_code = NUMERICAL_FAILURE_RC


class ValidationError(ZrpError):
    """Inputs or configuration rejected before any computation."""

    exit_code = INVALID_CONFIG_RC

    def __init__(self, message: str, violations: Sequence[str] = ()) -> None:
        """Keep every violated constraint, not only the first."""
        self.violations: List[str] = list(violations) or [message]
        if len(self.violations) > 1:
            message = message + ":\n  - " + "\n  - ".join(self.violations)
        super().__init__(message)


class CapExceeded(ValidationError):
    """Occupancy vector beyond the tabulated range of a rate family."""

    def __init__(self, k: Sequence[int], cap: int) -> None:
        """Carry the offending occupancy."""
        self.k: Tuple[int, ...] = tuple(int(v) for v in k)
        self.cap = cap
        super().__init__(f"cap exceeded: |k|={sum(self.k)} > {cap} for k={self.k}")


class StateSpaceTooLarge(ValidationError):
    """Canonical state space too large for exact enumeration."""

    def __init__(self, count: int, limit: int) -> None:
        """Carry the state count."""
        self.count = count
        self.limit = limit
        super().__init__(f"state space has {count} states, limit is {limit}")


class NumericalError(ZrpError):
    """A numerical procedure failed."""

    exit_code = NUMERICAL_FAILURE_RC


class ConvergenceError(NumericalError):
    """Iteration did not converge."""

    def __init__(
        self,
        message: str,
        last_iterate: Optional[Any] = None,
        residuals: Sequence[float] = (),
    ) -> None:
        """Keep the last iterate and the residual trace."""
        self.last_iterate = last_iterate
        self.residuals = list(residuals)
        super().__init__(message)


class DomainError(NumericalError):
    """Point outside the domain of the partition function or its inverse."""


class SingularMatrixError(NumericalError):
    """Covariance matrix too badly conditioned to invert."""


class BlowupError(NumericalError):
    """Spectral amplitudes exceeded the blowup threshold."""

    def __init__(self, message: str, step: int, amplitude: float) -> None:
        """Keep the step index and the offending amplitude."""
        self.step = step
        self.amplitude = amplitude
        super().__init__(f"{message} (step {step}, max amplitude {amplitude:.3g})")


class FrameConditionError(NumericalError):
    """The frame condition does not hold where it is required."""

    def __init__(self, message: str, certificate: Any = None) -> None:
        """Keep the failing certificate."""
        self.certificate = certificate
        super().__init__(message)


@functools.total_ordering
class ConditionViolation(ValueError):
    """Structural rate condition violated at some occupancy.

    It can be raised as Exception but also just added to the list of found
    violations of a ConditionReport.
    """

    # IMPORTANT: any additional comparison protocol methods must return
    # IMPORTANT: `NotImplemented` singleton to allow the check to use the
    # IMPORTANT: other object's fallbacks.

    def __init__(
        self,
        message: str,
        condition_id: str = "internal-error",
        k: Sequence[int] = (),
        magnitude: float = 0.0,
        details: str = "",
    ) -> None:
        """Initialize a ConditionViolation instance."""
        super().__init__(message)
        self.message = message
        self.condition_id = condition_id
        self.k: Tuple[int, ...] = tuple(int(v) for v in k)
        self.magnitude = float(magnitude)
        self.details = details

    def __repr__(self) -> str:
        """Return a ConditionViolation instance representation."""
        formatstr = u"[{0}] ({1}) at k={2} magnitude={3:.3g} {4}"
        return formatstr.format(
            self.condition_id, self.message, self.k, self.magnitude, self.details
        )

    @property
    def _hash_key(self) -> Any:
        return (self.condition_id, self.k, self.message, self.details)

    def __lt__(self, other: object) -> bool:
        """Return whether the current object is less than the other."""
        if not isinstance(other, self.__class__):
            return NotImplemented
        return bool(self._hash_key < other._hash_key)

    def __hash__(self) -> int:
        """Return a hash value of the ConditionViolation instance."""
        return hash(self._hash_key)

    def __eq__(self, other: object) -> bool:
        """Identify whether the other object represents the same violation."""
        if not isinstance(other, self.__class__):
            return NotImplemented
        return self.__hash__() == other.__hash__()
