"""Estimators of field runs and their comparison across run directories."""
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np
from wcmatch import fnmatch

from zrpfluct.artifacts import artifacts_of_kind, read_csv, read_manifest
from zrpfluct.config import CompareSpec
from zrpfluct.errors import ValidationError
from zrpfluct.fields import FieldSeries, jackknife, stack, structure_factor

_logger = logging.getLogger(__name__)

ESTIMATOR_COLUMNS = ("estimator", "value", "stderr")
Estimate = Tuple[str, float, float]


def field_estimators(
    series: Sequence[FieldSeries], modes: Sequence[int], name: str = "Y"
) -> List[Estimate]:
    """Return structure factors and time-averaged variances of each mode.

    Names are ``S{k}/{i}{j}/t={t}/s={s}`` for ``E[Y^i_t Y^j_s]`` and
    ``var{k}/{i}{j}`` for the equal-time covariance averaged over record
    times.
    """
    out: List[Estimate] = []
    for k in modes:
        sf = structure_factor(series, k, name)
        n = sf.value.shape[-1]
        for a, t in enumerate(sf.times):
            for b, s in enumerate(sf.times[: a + 1]):
                for i in range(n):
                    for j in range(n):
                        out.append(
                            (
                                f"S{k}/{i}{j}/t={t:.6g}/s={s:.6g}",
                                float(sf.value[a, b, i, j]),
                                float(sf.stderr[a, b, i, j]),
                            )
                        )
        cos = stack(series, name, f"cos{k}")
        sin = stack(series, name, f"sin{k}")
        per_replica = (
            np.einsum("rti,rtj->rij", cos, cos) + np.einsum("rti,rtj->rij", sin, sin)
        ) / (2 * cos.shape[1])
        value, stderr = jackknife(per_replica)
        for i in range(n):
            for j in range(n):
                out.append((f"var{k}/{i}{j}", float(value[i, j]), float(stderr[i, j])))
    return out


def qv_estimators(series: Sequence[FieldSeries]) -> List[Estimate]:
    """Return the slopes ``<M(H)>_T / T`` of the decomposition observers."""
    out: List[Estimate] = []
    t_final = series[0].times[-1]
    if not t_final > 0:
        return out
    for label in series[0].labels("QV"):
        final = stack(series, "QV", label)[:, -1, :] / t_final
        value, stderr = jackknife(final)
        for i, (v, e) in enumerate(zip(value, stderr)):
            out.append((f"qv/{label}/{i}", float(v), float(e)))
    return out


@dataclass
class ComparisonRow:
    estimator: str
    a: float
    b: float
    stderr: float
    z: float
    rel: float
    passed: bool


@dataclass
class ComparisonReport:
    """Aligned estimators of two runs with pass/fail per estimator."""

    run_a: str
    run_b: str
    se_band: float
    rel_tol: float
    rows: List[ComparisonRow] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(row.passed for row in self.rows)

    @property
    def failures(self) -> List[ComparisonRow]:
        return [row for row in self.rows if not row.passed]

    def as_record(self) -> Dict[str, object]:
        return {
            "run_a": self.run_a,
            "run_b": self.run_b,
            "se_band": self.se_band,
            "rel_tol": self.rel_tol,
            "compared": len(self.rows),
            "failed": len(self.failures),
            "passed": self.passed,
        }


def compare_row(
    name: str, a: Tuple[float, float], b: Tuple[float, float], spec: CompareSpec
) -> ComparisonRow:
    """Compare two ``(value, stderr)`` estimates.

    An estimate passes within ``se_band`` combined standard errors or within
    the relative tolerance.
    """
    diff = abs(a[0] - b[0])
    stderr = math.hypot(a[1], b[1])
    if diff == 0:
        z = 0.0
    elif stderr > 0 and math.isfinite(stderr):
        z = diff / stderr
    else:
        z = math.inf
    scale = max(abs(a[0]), abs(b[0]))
    rel = diff / scale if scale > 0 else 0.0
    return ComparisonRow(
        estimator=name,
        a=a[0],
        b=b[0],
        stderr=stderr,
        z=z,
        rel=rel,
        passed=z <= spec.se_band or rel <= spec.rel_tol,
    )


def load_estimators(directory: Union[str, Path]) -> Dict[str, Tuple[float, float]]:
    """Read every estimator artifact listed in a run manifest."""
    manifest = read_manifest(directory)
    estimates: Dict[str, Tuple[float, float]] = {}
    for name in artifacts_of_kind(manifest, "estimators"):
        frame = read_csv(directory, name)
        missing = set(ESTIMATOR_COLUMNS) - set(frame.columns)
        if missing:
            raise ValidationError(
                f"schema mismatch: {name} in {directory} lacks {sorted(missing)}"
            )
        for row in frame.itertuples(index=False):
            estimates[str(row.estimator)] = (float(row.value), float(row.stderr))
    return estimates


def compare_runs(
    run_a: Union[str, Path], run_b: Union[str, Path], spec: CompareSpec
) -> ComparisonReport:
    """Align the estimators of two runs selected by ``spec.estimators`` globs."""
    left = load_estimators(run_a)
    right = load_estimators(run_b)
    patterns = list(spec.estimators)

    def selected(name: str) -> bool:
        return bool(fnmatch.fnmatch(name, patterns, flags=fnmatch.BRACE))

    common = sorted(name for name in set(left) & set(right) if selected(name))
    if not common:
        raise ValidationError(
            f"schema mismatch: {run_a} and {run_b} share no estimator "
            f"matching {patterns}"
        )
    only = [name for name in set(left) ^ set(right) if selected(name)]
    if only:
        _logger.warning("%d estimators exist in one run only", len(only))
    report = ComparisonReport(
        run_a=str(run_a), run_b=str(run_b), se_band=spec.se_band, rel_tol=spec.rel_tol
    )
    report.rows = [compare_row(name, left[name], right[name], spec) for name in common]
    _logger.info(
        "Compared %d estimators, %d outside tolerance",
        len(report.rows),
        len(report.failures),
    )
    return report
