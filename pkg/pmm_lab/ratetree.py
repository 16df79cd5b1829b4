"""Binary indexed tree over per-bond rates for event selection."""
from __future__ import annotations

import numpy as np


class RateTree:
    """Fenwick tree of non-negative rates indexed 0 .. size-1.

    Point updates and searches run on plain lists, one per event; numpy is
    only used to validate and rebuild the whole tree.
    """

    def __init__(self, size: int) -> None:
        if size <= 0:
            raise ValueError(f"RateTree needs a positive size, got {size}")
        self.size = size
        self._values = [0.0] * size
        self._tree = [0.0] * (size + 1)
        top = 1
        while top * 2 <= size:
            top *= 2
        self._top = top

    @classmethod
    def from_rates(cls, rates: np.ndarray) -> RateTree:
        """Build a tree holding the given rates."""
        tree = cls(len(rates))
        tree.rebuild(rates)
        return tree

    @property
    def values(self) -> np.ndarray:
        """Raw rates as an array."""
        return np.array(self._values)

    def get(self, index: int) -> float:
        """Rate at one index."""
        return self._values[index]

    def set(self, index: int, rate: float) -> None:
        """Set the rate at index, updating O(log n) partial sums."""
        if rate < 0:
            raise ValueError(f"Negative rate {rate} at {index}")
        delta = rate - self._values[index]
        if delta == 0:
            return
        self._values[index] = rate
        tree = self._tree
        size = self.size
        j = index + 1
        while j <= size:
            tree[j] += delta
            j += j & -j

    def cumulative(self, index: int) -> float:
        """Sum of rates 0 .. index inclusive."""
        tree = self._tree
        j = index + 1
        s = 0.0
        while j > 0:
            s += tree[j]
            j -= j & -j
        return s

    @property
    def total(self) -> float:
        """Sum of all rates."""
        return self.cumulative(self.size - 1)

    def search(self, u: float) -> int:
        """Smallest index whose cumulative rate exceeds u, for 0 <= u < total."""
        tree = self._tree
        size = self.size
        j = 0
        half = self._top
        while half > 0:
            k = j + half
            if k <= size and u >= tree[k]:
                j = k
                u -= tree[k]
            half >>= 1
        # Round-off can push u onto a zero rate; take the nearest positive one
        values = self._values
        index = min(j, size - 1)
        if values[index] > 0:
            return index
        for lower in range(index - 1, -1, -1):
            if values[lower] > 0:
                return lower
        for upper in range(index + 1, size):
            if values[upper] > 0:
                return upper
        raise ValueError("Cannot select from a tree whose rates are all zero")

    def rebuild(self, rates: np.ndarray | None = None) -> None:
        """Recompute every partial sum from the raw rates in O(n)."""
        if rates is not None:
            rates = np.asarray(rates, dtype=float)
            if rates.shape != (self.size,):
                raise ValueError(f"Expected {self.size} rates, got {rates.shape}")
            if np.any(rates < 0):
                raise ValueError("Rates must be non-negative")
            self._values = rates.tolist()
        tree = np.zeros(self.size + 1)
        tree[1:] = self._values
        for j in range(1, self.size + 1):
            parent = j + (j & -j)
            if parent <= self.size:
                tree[parent] += tree[j]
        self._tree = tree.tolist()
