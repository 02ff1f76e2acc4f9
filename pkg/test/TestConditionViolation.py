"""Tests for ConditionViolation."""
import operator

import pytest

from zrpfluct.errors import ConditionViolation


class DummySentinelTestObject:
    """A dummy object for equality protocol tests with sentinel."""

    def __eq__(self, other):
        """Return sentinel as result of equality check w/ anything."""
        return 'EQ_SENTINEL'

    def __ne__(self, other):
        """Return sentinel as result of inequality check w/ anything."""
        return 'NE_SENTINEL'

    def __lt__(self, other):
        """Return sentinel as result of less than check w/ anything."""
        return 'LT_SENTINEL'

    def __gt__(self, other):
        """Return sentinel as result of greater than chk w/ anything."""
        return 'GT_SENTINEL'


def test_same_attributes_are_equal() -> None:
    left = ConditionViolation("a", condition_id="nd", k=[1, 0], magnitude=2.0)
    right = ConditionViolation("a", condition_id="nd", k=(1, 0), magnitude=0.5)
    assert left == right
    assert len({left, right}) == 1


@pytest.mark.parametrize(
    ('left', 'right'),
    (
        # sorting by message
        (ConditionViolation("z"), ConditionViolation("a")),
        # condition id takes priority
        (
            ConditionViolation("a", condition_id="nd"),
            ConditionViolation("z", condition_id="inv"),
        ),
        # then the occupancy
        (ConditionViolation("a", k=(2, 0)), ConditionViolation("z", k=(1, 3))),
        # details are taken into account
        (
            ConditionViolation("a", details="foo"),
            ConditionViolation("a", details="bar"),
        ),
    ),
)
class TestViolationCompare:
    def test_less_than(self, left, right):
        assert right < left

    def test_greater_than(self, left, right):
        assert left > right

    def test_not_equal(self, left, right):
        assert left != right


@pytest.mark.parametrize('other', (None, "foo", 42, Exception("foo")), ids=repr)
def test_ordering_with_other_types_raises(other) -> None:
    with pytest.raises(TypeError):
        operator.lt(ConditionViolation("foo"), other)


@pytest.mark.parametrize('other', (None, "foo", 42, Exception("foo")), ids=repr)
def test_equality_with_other_types(other) -> None:
    assert (ConditionViolation("foo") == other) is False
    assert (ConditionViolation("foo") != other) is True


@pytest.mark.parametrize(
    ('operation', 'expected_value'),
    (
        (operator.eq, 'EQ_SENTINEL'),
        (operator.ne, 'NE_SENTINEL'),
        # reflected: x < y falls back to y > x
        (operator.lt, 'GT_SENTINEL'),
        (operator.gt, 'LT_SENTINEL'),
    ),
    ids=('==', '!=', '<', '>'),
)
def test_compare_with_dummy_sentinel(operation, expected_value) -> None:
    assert operation(ConditionViolation("foo"), DummySentinelTestObject()) is (
        expected_value
    )


def test_repr() -> None:
    violation = ConditionViolation(
        "ratios differ", condition_id="inv", k=(1, 1), magnitude=0.5
    )
    assert repr(violation) == "[inv] (ratios differ) at k=(1, 1) magnitude=0.5 "
