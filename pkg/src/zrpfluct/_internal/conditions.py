import logging
from typing import TYPE_CHECKING, List

if TYPE_CHECKING:
    from zrpfluct.conditions import CheckContext, ConditionResult
    from zrpfluct.rates import RateFamily

_logger = logging.getLogger(__name__)


class BaseCondition:
    """Root class used by rate conditions."""

    id: str = ""
    tags: List[str] = []
    shortdesc: str = ""
    description: str = ""
    version_added: str = ""
    severity: str = ""
    link: str = ""

    def check(
        self, family: "RateFamily", ctx: "CheckContext"
    ) -> "ConditionResult":  # pragma: no cover
        """Verify the condition over the context range."""
        raise NotImplementedError

    def verbose(self) -> str:
        """Return a verbose representation of the condition."""
        return self.id + ": " + self.shortdesc + "\n  " + self.description

    def __lt__(self, other: "BaseCondition") -> bool:
        """Enable us to sort conditions by their id."""
        return self.id < other.id


class RuntimeErrorCondition(BaseCondition):
    """Used to identify errors."""

    id = 'internal-error'
    shortdesc = 'Unexpected internal error'
    description = (
        'A condition check raised instead of reporting. The check is marked '
        'as failed with the exception text and the remaining checks still run.'
    )
    severity = 'VERY_HIGH'
    tags = ['core']
    version_added = 'v0.1.0'
