"""Fenwick (binary indexed) tree over non-negative site rates.

Supports point updates, prefix sums and the inverse search used to pick a
site with probability proportional to its rate, all in ``O(log N)``.
Indices are 0-based; the tree array is 1-based internally.
"""
from typing import List, Sequence


class FenwickTree:
    """Cumulative rate table over ``size`` sites."""

    def __init__(self, size: int) -> None:
        """Create a tree with every rate zero."""
        if size <= 0:
            raise ValueError("FenwickTree needs a positive size")
        self.size = size
        self._tree: List[float] = [0.0] * (size + 1)
        self._values: List[float] = [0.0] * size
        top = 1
        while top * 2 <= size:
            top *= 2
        self._top = top

    @classmethod
    def from_values(cls, values: Sequence[float]) -> "FenwickTree":
        """Build a tree from all rates at once in linear time."""
        tree = cls(len(values))
        tree.rebuild(values)
        return tree

    def rebuild(self, values: Sequence[float]) -> None:
        """Replace every rate, recomputing partial sums from scratch."""
        if len(values) != self.size:
            raise ValueError("rebuild needs one value per site")
        self._values = [float(v) for v in values]
        tree = [0.0] + self._values
        for j in range(1, self.size + 1):
            parent = j + (j & -j)
            if parent <= self.size:
                tree[parent] += tree[j]
        self._tree = tree

    def __len__(self) -> int:
        return self.size

    def __getitem__(self, index: int) -> float:
        return self._values[index]

    @property
    def values(self) -> List[float]:
        return list(self._values)

    def set_value(self, index: int, value: float) -> None:
        """Set the rate of site ``index``."""
        delta = value - self._values[index]
        self._values[index] = value
        if delta == 0:
            return
        tree = self._tree
        j = index + 1
        size = self.size
        while j <= size:
            tree[j] += delta
            j += j & -j

    def prefix(self, count: int) -> float:
        """Return the sum of the first ``count`` rates."""
        tree = self._tree
        total = 0.0
        j = count
        while j > 0:
            total += tree[j]
            j -= j & -j
        return total

    @property
    def total(self) -> float:
        """Sum of all rates."""
        return self.prefix(self.size)

    def find(self, u: float) -> int:
        """Return the smallest index whose cumulative rate exceeds ``u``.

        ``u`` is expected in ``[0, total)``; larger values return the last
        index.
        """
        tree = self._tree
        size = self.size
        pos = 0
        remaining = u
        step = self._top
        while step:
            nxt = pos + step
            if nxt <= size and tree[nxt] <= remaining:
                pos = nxt
                remaining -= tree[nxt]
            step >>= 1
        return min(pos, size - 1)
