"""Runtime operation metering.

The cost model counts two kinds of work:

* ``ca_bit_ops``: one unit per cell update (one rule application to one
  cell for one iteration).
* ``readout_add_ops``: one unit per scalar addition performed when a
  trained readout scores a binary feature vector by summing weight
  columns at the set bits.

Meters are opt-in. Code paths that do countable work call the module
hooks; outside a ``meter()`` block the hooks are no-ops, so the hot
loops pay only a cheap branch.
"""

from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass


@dataclass
class OpMeter:
    """Tally of countable operations recorded while a meter is active."""

    ca_bit_ops: int = 0
    readout_add_ops: int = 0

    def total(self) -> int:
        return self.ca_bit_ops + self.readout_add_ops


_active: OpMeter | None = None


@contextmanager
def meter():
    """Context manager that captures op counts from enclosed calls.

    Meters nest; the innermost active meter receives the counts.

    >>> with meter() as m:
    ...     _ = evolve(state, 90, 8)
    >>> m.ca_bit_ops
    32
    """
    global _active
    prev = _active
    _active = OpMeter()
    try:
        yield _active
    finally:
        _active = prev


def add_ca_ops(n: int) -> None:
    if _active is not None:
        _active.ca_bit_ops += int(n)


def add_readout_ops(n: int) -> None:
    if _active is not None:
        _active.readout_add_ops += int(n)
