"""Structural conditions on rate families."""
import glob
import importlib.util
import logging
import os
from collections import defaultdict
from dataclasses import dataclass, field
from importlib.abc import Loader
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple

from zrpfluct._internal.conditions import BaseCondition, RuntimeErrorCondition
from zrpfluct.constants import DEFAULT_CONDITIONSDIR
from zrpfluct.errors import ConditionViolation
from zrpfluct.rates import Occupancy, RateFamily, occupancies_upto

_logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CheckContext:
    """Range and parameters shared by all condition checks."""

    cap: int
    m0: Tuple[int, ...] = ()
    eps0: float = 0.0
    gap_total_cap: int = 3
    gap_ells: Tuple[int, ...] = (1, 2)

    def occupancies(self, n: int, cap: Optional[int] = None) -> Iterator[Occupancy]:
        """Yield every occupancy vector of the checked range."""
        return occupancies_upto(n, self.cap if cap is None else cap)


@dataclass
class ConditionResult:
    """Outcome of one condition over a finite range.

    ``holds`` is certified only for ``|k| <= cap``.
    """

    id: str
    holds: bool
    cap: int
    value: Any = None
    violations: List[ConditionViolation] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)


@dataclass
class ConditionReport:
    """Results of every registered condition, keyed by condition id."""

    cap: int
    results: Dict[str, ConditionResult] = field(default_factory=dict)

    def __getattr__(self, name: str) -> ConditionResult:
        """Expose results as attributes (``report.inv``)."""
        results = self.__dict__.get("results", {})
        if name in results:
            return results[name]
        raise AttributeError(name)

    @property
    def holds(self) -> bool:
        """Return True when every checked condition holds within the cap."""
        return all(result.holds for result in self.results.values())

    @property
    def violations(self) -> List[ConditionViolation]:
        """Return every violation, sorted."""
        found: List[ConditionViolation] = []
        for result in self.results.values():
            found.extend(result.violations)
        return sorted(found)


class RateCondition(BaseCondition):
    """Base class for condition plugins."""

    def create_violation(
        self,
        message: Optional[str] = None,
        k: Sequence[int] = (),
        magnitude: float = 0.0,
        details: str = "",
    ) -> ConditionViolation:
        return ConditionViolation(
            message=message or self.shortdesc,
            condition_id=self.id,
            k=k,
            magnitude=magnitude,
            details=details,
        )

    def result(self, ctx: CheckContext, holds: bool, **kwargs: Any) -> ConditionResult:
        return ConditionResult(id=self.id, holds=holds, cap=ctx.cap, **kwargs)

    def __repr__(self) -> str:
        """Return a RateCondition instance representation."""
        return self.id + ": " + self.shortdesc


def is_valid_condition(condition: Any) -> bool:
    """Check if given condition is valid or not."""
    return isinstance(condition, RateCondition) and bool(condition.id)


def load_plugins(directory: str) -> Iterator[RateCondition]:
    """Yield a condition class."""
    for pluginfile in glob.glob(os.path.join(directory, '[A-Za-z]*.py')):

        pluginname = os.path.basename(pluginfile.replace('.py', ''))
        spec = importlib.util.spec_from_file_location(pluginname, pluginfile)
        # https://github.com/python/typeshed/issues/2793
        if spec and isinstance(spec.loader, Loader):
            module = importlib.util.module_from_spec(spec)
            spec.loader.exec_module(module)
            try:
                condition = getattr(module, pluginname)()
                if is_valid_condition(condition):
                    yield condition

            except (TypeError, ValueError, AttributeError):
                _logger.warning("Skipped invalid condition from %s", pluginname)


class ConditionsCollection:
    def __init__(
        self,
        conditionsdirs: Optional[List[str]] = None,
        enable_list: Optional[List[str]] = None,
    ) -> None:
        """Initialize a ConditionsCollection instance."""
        self.enable_list = enable_list or []
        if conditionsdirs is None:
            conditionsdirs = [DEFAULT_CONDITIONSDIR]
        self.conditionsdirs = conditionsdirs
        self.conditions: List[BaseCondition] = []
        for conditionsdir in self.conditionsdirs:
            _logger.debug("Loading conditions from %s", conditionsdir)
            for condition in load_plugins(conditionsdir):
                self.register(condition)
        self.conditions = sorted(self.conditions)

    def register(self, obj: BaseCondition) -> None:
        # We skip opt-in conditions which were not manually enabled
        if 'opt-in' not in obj.tags or obj.id in self.enable_list:
            self.conditions.append(obj)

    def __iter__(self) -> Iterator[BaseCondition]:
        """Return the iterator over the conditions in the collection."""
        return iter(self.conditions)

    def __len__(self) -> int:
        """Return the number of registered conditions."""
        return len(self.conditions)

    def run(
        self, family: RateFamily, ctx: CheckContext, skip_list: Sequence[str] = ()
    ) -> ConditionReport:
        report = ConditionReport(cap=ctx.cap)
        for condition in self.conditions:
            if condition.id in skip_list:
                continue
            try:
                result = condition.check(family, ctx)
            except Exception as exc:  # pylint: disable=broad-except
                _logger.debug(
                    "Exception from %s: %s", condition.__class__.__name__, exc
                )
                internal = RuntimeErrorCondition()
                result = ConditionResult(
                    id=condition.id,
                    holds=False,
                    cap=ctx.cap,
                    violations=[
                        ConditionViolation(
                            message=str(exc),
                            condition_id=internal.id,
                            details=condition.id,
                        )
                    ],
                )
            for warning in result.warnings:
                _logger.warning("[%s] %s", condition.id, warning)
            report.results[condition.id] = result
        return report

    def __repr__(self) -> str:
        """Return a ConditionsCollection instance representation."""
        return "\n".join(
            [cond.verbose() for cond in sorted(self.conditions, key=lambda x: x.id)]
        )

    def listtags(self) -> str:
        tag_desc = {
            "core": "Related to internal implementation of the toolkit",
            "growth": "Bounds on how fast rates may grow or decay",
            "measure": "Needed for the product invariant measures to exist",
            "mixing": "Spectral gap estimates of the canonical process",
            "opt-in": "Expensive checks, run only when enabled",
        }

        tags = defaultdict(list)
        for condition in self.conditions:
            for tag in condition.tags:
                tags[tag].append(condition.id)
        result = "# List of tags and conditions they cover\n"
        for tag in sorted(tags):
            desc = tag_desc.get(tag, None)
            if desc:
                result += f"{tag}:  # {desc}\n"
            else:
                result += f"{tag}:\n"
            for name in tags[tag]:
                result += f"  - {name}\n"
        return result
