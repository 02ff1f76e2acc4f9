"""Tests for the rate condition collection."""
import collections
import re

import pytest

from zrpfluct.conditions import (
    CheckContext,
    ConditionResult,
    ConditionsCollection,
    RateCondition,
)
from zrpfluct.rates import RateFamily, ScalarRate, multi_color

DEFAULT_IDS = ["inv", "lb", "lg", "nd", "ori"]


class ExplodingCondition(RateCondition):
    id = 'explode'
    shortdesc = 'Always raises'
    description = 'Used to check that a raising condition is reported'
    tags = ['core']

    def check(self, family: RateFamily, ctx: CheckContext) -> ConditionResult:
        raise ZeroDivisionError("boom")


def test_default_collection() -> None:
    collection = ConditionsCollection()
    assert [c.id for c in collection] == DEFAULT_IDS
    assert len(collection) == 5


def test_opt_in_needs_enable() -> None:
    collection = ConditionsCollection(enable_list=["sg"])
    assert "sg" in [c.id for c in collection]


def test_no_duplicate_ids() -> None:
    ids = [c.id for c in ConditionsCollection(enable_list=["sg"])]
    assert not any(count > 1 for count in collections.Counter(ids).values())
    assert all(re.match("^[a-z]{2,4}$", cid) for cid in ids)


def test_skip_list(walkers: RateFamily) -> None:
    report = ConditionsCollection().run(walkers, CheckContext(cap=4), ["lg", "nope"])
    assert sorted(report.results) == ["inv", "lb", "nd", "ori"]
    assert report.holds
    assert report.inv.holds
    with pytest.raises(AttributeError):
        report.lg  # pylint: disable=pointless-statement


def test_raising_condition_is_reported(walkers: RateFamily) -> None:
    collection = ConditionsCollection(conditionsdirs=[])
    collection.register(ExplodingCondition())
    report = collection.run(walkers, CheckContext(cap=3))
    result = report.results["explode"]
    assert not result.holds
    [violation] = report.violations
    assert violation.condition_id == "internal-error"
    assert violation.message == "boom"
    assert violation.details == "explode"


def test_violations_are_sorted() -> None:
    family = multi_color(1, ScalarRate(kind="power", exponent=0.0))
    report = ConditionsCollection().run(family, CheckContext(cap=6, m0=(1,), eps0=0.1))
    assert not report.holds
    assert report.violations == sorted(report.violations)
    assert {v.condition_id for v in report.violations} == {"lb"}


def test_listing() -> None:
    collection = ConditionsCollection(enable_list=["sg"])
    listing = repr(collection)
    for condition in collection:
        assert f"{condition.id}: {condition.shortdesc}" in listing
    tags = collection.listtags()
    assert "measure:  # Needed for the product invariant measures to exist" in tags
    assert "  - sg\n" in tags
