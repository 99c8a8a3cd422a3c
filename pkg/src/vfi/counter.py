"""Multiply-accumulate tally for hardware-independent complexity measurements.

Operators call :func:`tally` with the number of MACs they perform; the counts
land in every active :class:`MacCounter`.  Counting is structural and exact,
so repeated runs give identical numbers.
"""

from __future__ import annotations

from collections import Counter
from contextlib import contextmanager

_active: list["MacCounter"] = []


class MacCounter:
    def __init__(self):
        self.by_op: Counter[str] = Counter()

    @property
    def total(self) -> int:
        return sum(self.by_op.values())

    def __repr__(self) -> str:
        return f"MacCounter(total={self.total}, by_op={dict(self.by_op)})"


def tally(op: str, macs: int) -> None:
    for c in _active:
        c.by_op[op] += int(macs)


@contextmanager
def count_macs():
    c = MacCounter()
    _active.append(c)
    try:
        yield c
    finally:
        _active.remove(c)
