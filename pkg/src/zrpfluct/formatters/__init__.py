"""Output formatters."""
import os
from pathlib import Path
from typing import TYPE_CHECKING, Any, Generic, TypeVar, Union

import rich

if TYPE_CHECKING:
    from zrpfluct.compare import ComparisonRow
    from zrpfluct.conditions import ConditionResult
    from zrpfluct.errors import ConditionViolation
    from zrpfluct.frame import FrameCertificate

T = TypeVar('T', bound='BaseFormatter')  # type: ignore


class BaseFormatter(Generic[T]):
    """Formatter of zrpfluct console output.

    Args:
        base_dir (str|Path): reference directory against which artifact
            paths are displayed.
    """

    def __init__(self, base_dir: Union[str, Path, None] = None) -> None:
        """Initialize a BaseFormatter instance."""
        self._base_dir = str(Path(base_dir).absolute()) if base_dir else None

    def _format_path(self, path: Union[str, Path]) -> str:
        path = str(path)
        if not self._base_dir or not path:
            return path
        return os.path.relpath(os.path.abspath(path), start=self._base_dir)

    def format(self, violation: "ConditionViolation") -> str:
        return repr(violation)

    def format_condition(self, result: "ConditionResult") -> str:
        state = "holds" if result.holds else "fails"
        return f"{result.id}: {state} for |k| <= {result.cap}"

    def format_certificate(self, certificate: "FrameCertificate") -> str:
        state = "holds" if certificate.holds else "fails"
        return (
            f"frame condition {state} at a0={certificate.a0.tolist()} "
            f"lambda={certificate.lam:.12g}"
        )

    def format_comparison(self, row: "ComparisonRow") -> str:
        state = "ok" if row.passed else "FAIL"
        return f"{state} {row.estimator} z={row.z:.3g} rel={row.rel:.3g}"

    def format_artifact(self, path: Union[str, Path]) -> str:
        return self._format_path(path)

    def escape(self, text: str) -> str:
        """Escapes a string to avoid processing it as markup."""
        return rich.markup.escape(text)


class Formatter(BaseFormatter):  # type: ignore
    def format(self, violation: "ConditionViolation") -> str:
        result = (
            f"[condition_id]{violation.condition_id}[/][dim]:[/] "
            f"{self.escape(violation.message)}"
        )
        if violation.k:
            result += f" [dim]at k={violation.k}[/]"
        if violation.magnitude:
            result += f" [value]{violation.magnitude:.3g}[/]"
        if violation.details:
            result += f" [dim]{self.escape(violation.details)}[/]"
        return result

    def format_condition(self, result: "ConditionResult") -> str:
        mark = "[ok]holds[/]" if result.holds else "[fail]fails[/]"
        text = f"[title]{result.id}[/] {mark} [dim]for |k| <= {result.cap}[/]"
        if result.value is not None:
            text += f" [value]{self.escape(str(result.value))}[/]"
        for warning in result.warnings:
            text += f"\n  [warning]{self.escape(warning)}[/]"
        return text

    def format_certificate(self, certificate: "FrameCertificate") -> str:
        mark = "[ok]holds[/]" if certificate.holds else "[fail]fails[/]"
        return (
            f"[title]frame condition[/] {mark} at a0={certificate.a0.tolist()}\n"
            f"  lambda [value]{certificate.lam:.12g}[/]"
            f" [dim]offdiag {certificate.offdiag_residual:.3g}"
            f" ratio {certificate.ratio_residual:.3g}"
            f" tol {certificate.tol:.3g}[/]"
            + ("\n  [warning]frame manifold[/]" if certificate.manifold else "")
        )

    def format_comparison(self, row: "ComparisonRow") -> str:
        mark = "[ok]ok[/]" if row.passed else "[fail]FAIL[/]"
        return (
            f"{mark} {self.escape(row.estimator)} "
            f"[value]{row.a:.6g}[/] vs [value]{row.b:.6g}[/] "
            f"[dim]z={row.z:.3g} rel={row.rel:.3g}[/]"
        )

    def format_artifact(self, path: Union[str, Path]) -> str:
        return f"[info]wrote[/] {self.escape(self._format_path(path))}"


class QuietFormatter(BaseFormatter[Any]):
    def format(self, violation: "ConditionViolation") -> str:
        return f"[condition_id]{violation.condition_id}[/] k={violation.k}"

    def format_comparison(self, row: "ComparisonRow") -> str:
        return "" if row.passed else f"[fail]FAIL[/] {self.escape(row.estimator)}"

    def format_artifact(self, path: Union[str, Path]) -> str:
        return ""
