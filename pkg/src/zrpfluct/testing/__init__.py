"""Test utils for zrpfluct."""
from typing import Any, Dict

from zrpfluct.conditions import CheckContext, ConditionResult, ConditionsCollection
from zrpfluct.rates import RateFamily


class RunConditions:
    """Run a conditions collection over one family and range."""

    def __init__(self, collection: ConditionsCollection) -> None:
        """Initialize a RunConditions instance with a conditions collection."""
        self.collection = collection

    def run(
        self, family: RateFamily, cap: int, **kwargs: Any
    ) -> Dict[str, ConditionResult]:
        """Check ``family`` for ``|k| <= cap`` and return results by id."""
        if 'm0' in kwargs:
            kwargs['m0'] = tuple(kwargs['m0'])
        ctx = CheckContext(cap=cap, **kwargs)
        return self.collection.run(family, ctx).results
