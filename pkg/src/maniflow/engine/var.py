"""Var: a handle to one node of a recorded tape, with operator overloads.

A Var carries a per-lane float64 value vector. Arithmetic on Vars records
new nodes on the owning tape; mixing with plain numbers or numpy arrays
promotes them to constant nodes.
"""

from __future__ import annotations

import numpy as np

from . import opcodes as oc


class Var:
    __slots__ = ("tape", "idx")

    def __init__(self, tape, idx: int):
        self.tape = tape
        self.idx = idx

    @property
    def value(self) -> np.ndarray:
        """Per-lane values, shape (width,). Do not mutate."""
        return self.tape.value(self.idx)

    def item(self) -> float:
        return float(self.tape.value(self.idx)[0])

    def __float__(self) -> float:
        return self.item()

    def __repr__(self) -> str:
        v = self.value
        body = f"{v[0]:.6g}" if v.shape[0] == 1 else f"lanes={v.shape[0]}"
        return f"Var({body})"

    # -- arithmetic ----------------------------------------------------
    def _wrap(self, other) -> "Var":
        if isinstance(other, Var):
            return other
        return self.tape.const(other)

    def __add__(self, other):
        return self.tape.apply(oc.ADD, self, self._wrap(other))

    def __radd__(self, other):
        return self.tape.apply(oc.ADD, self._wrap(other), self)

    def __sub__(self, other):
        return self.tape.apply(oc.SUB, self, self._wrap(other))

    def __rsub__(self, other):
        return self.tape.apply(oc.SUB, self._wrap(other), self)

    def __mul__(self, other):
        return self.tape.apply(oc.MUL, self, self._wrap(other))

    def __rmul__(self, other):
        return self.tape.apply(oc.MUL, self._wrap(other), self)

    def __truediv__(self, other):
        return self.tape.apply(oc.DIV, self, self._wrap(other))

    def __rtruediv__(self, other):
        return self.tape.apply(oc.DIV, self._wrap(other), self)

    def __neg__(self):
        return self.tape.apply(oc.NEG, self)

    def __pow__(self, exponent):
        if isinstance(exponent, Var):
            raise TypeError("Var exponents are not supported; use fx.exp(e * fx.log(x))")
        return self.tape.apply(oc.POWC, self, aux_f=float(exponent))

    def __abs__(self):
        return self.tape.apply(oc.ABS, self)
