"""Tests for the cumulative rate tree."""
from typing import List

import pytest
from hypothesis import given
from hypothesis import strategies as st

from zrpfluct.fenwick import FenwickTree

rates = st.lists(st.integers(min_value=0, max_value=20), min_size=1, max_size=64)


def _smallest_exceeding(values: List[int], u: float) -> int:
    acc = 0
    for index, value in enumerate(values):
        acc += value
        if acc > u:
            return index
    return len(values) - 1


@given(values=rates)
def test_prefix_sums(values: List[int]) -> None:
    tree = FenwickTree.from_values(values)
    for count in range(len(values) + 1):
        assert tree.prefix(count) == sum(values[:count])
    assert tree.total == sum(values)


@given(values=rates, data=st.data())
def test_find_inverts_prefix(values: List[int], data: st.DataObject) -> None:
    tree = FenwickTree.from_values(values)
    total = sum(values)
    if total == 0:
        return
    u = data.draw(st.integers(min_value=0, max_value=total - 1))
    found = tree.find(u)
    assert found == _smallest_exceeding(values, u)
    assert values[found] > 0


@given(values=rates, data=st.data())
def test_updates_match_rebuild(values: List[int], data: st.DataObject) -> None:
    tree = FenwickTree.from_values(values)
    current = list(values)
    for _ in range(data.draw(st.integers(min_value=1, max_value=10))):
        index = data.draw(st.integers(min_value=0, max_value=len(values) - 1))
        value = data.draw(st.integers(min_value=0, max_value=20))
        tree.set_value(index, value)
        current[index] = value
    fresh = FenwickTree.from_values(current)
    for count in range(len(values) + 1):
        assert tree.prefix(count) == fresh.prefix(count)
    assert tree.values == current


def test_find_past_total_returns_last() -> None:
    tree = FenwickTree.from_values([1.0, 2.0, 3.0])
    assert tree.find(100.0) == 2
    assert tree.find(0.0) == 0
    assert tree.find(1.0) == 1
    assert len(tree) == 3
    assert tree[1] == 2.0


def test_invalid_sizes() -> None:
    with pytest.raises(ValueError):
        FenwickTree(0)
    tree = FenwickTree(3)
    with pytest.raises(ValueError):
        tree.rebuild([1.0, 2.0])
