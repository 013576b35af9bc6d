"""Operation counters for cost accounting.

Counters live in a :mod:`contextvars` slot so that concurrent runs in
different threads never share a tally.  Code that wants to measure work
wraps it in :func:`counting`::

    with counting() as ops:
        arnoldi(A, b, 20)
    ops.matvecs, ops.dot_n
"""

from __future__ import annotations

import contextlib
import contextvars
from dataclasses import dataclass, fields


@dataclass
class OpCounter:
    matvecs: int = 0          # sparse A @ x
    sketches: int = 0         # S @ x with a single vector
    dot_n: int = 0            # inner products of length n
    dot_d: int = 0            # inner products of length d (sketch space)
    basis_updates: int = 0    # length-n block updates w -= W @ r
    peak_basis_vectors: int = 0

    def reset(self) -> None:
        for f in fields(self):
            setattr(self, f.name, 0)

    def snapshot(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def note_basis(self, k: int) -> None:
        if k > self.peak_basis_vectors:
            self.peak_basis_vectors = k


_fallback = OpCounter()
_active: contextvars.ContextVar[OpCounter | None] = contextvars.ContextVar(
    "randkrylov_counter", default=None
)


def current() -> OpCounter:
    """Counter for the running context (a process-wide one if none is set)."""
    c = _active.get()
    return _fallback if c is None else c


@contextlib.contextmanager
def counting(counter: OpCounter | None = None):
    counter = OpCounter() if counter is None else counter
    token = _active.set(counter)
    try:
        yield counter
    finally:
        _active.reset(token)
