"""Analytical floating point operation accounting.

Convention (documented in the README, comparable only within this tool):

* dense ``(m x k) @ (k x p)`` product: ``2*m*k*p``
* elementwise add/subtract/scale of an ``m x p`` block: ``m*p``
* inverse, inverse square root or pseudo-inverse of a ``q x q`` matrix: ``q**3``
* selecting rows or columns (coordinate sketches): free
"""

from collections import defaultdict


class FlopCounter:
    def __init__(self):
        self.total = 0
        self.breakdown = defaultdict(int)

    def _add(self, count, kernel):
        count = int(count)
        if count < 0:
            raise ValueError("flop counts are non-negative")
        self.total += count
        self.breakdown[kernel] += count

    def matmul(self, m, k, p, kernel="matmul"):
        self._add(2 * m * k * p, kernel)

    def elementwise(self, m, p=1, kernel="elementwise"):
        self._add(m * p, kernel)

    def small_inverse(self, q, kernel="small_inverse"):
        self._add(q**3, kernel)

    def snapshot(self):
        return dict(self.breakdown)

    def __repr__(self):
        return f"FlopCounter(total={self.total})"


class _NullCounter(FlopCounter):
    def _add(self, count, kernel):
        pass


NULL_COUNTER = _NullCounter()


def counter_or_null(counter):
    return NULL_COUNTER if counter is None else counter
