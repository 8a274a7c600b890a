"""Pure-Python (numpy-backed) tape engine.

Reference implementation of the tape contract; the Cython engine in
_tape_cy.pyx mirrors the exact same opcode semantics. Nodes are program
scalars whose values carry either one lane (parameters, anything derived
only from parameters) or the tape's full lane width; numpy broadcasting
joins the two. Forward values are checked for finiteness as they are
recorded; the backward pass visits each node exactly once in reverse
creation (= reverse topological) order.
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import NonFiniteError, ShapeError, TapeConsumedError
from . import opcodes as oc
from .var import Var

TWO_PI = 2.0 * math.pi


class PyTape:
    name = "py"

    def __init__(self, width: int = 1):
        if width < 1:
            raise ShapeError("tape width must be >= 1")
        self.width = int(width)
        self._ops: list[int] = []
        self._ia: list[int] = []
        self._ib: list[int] = []
        self._auxf: list[float] = []
        self._aux: list = []  # DOT: (xs_idx, ws_idx|None, w0); GATHER: (cols, lanes); WHERE: mask
        self._vals: list[np.ndarray] = []
        self._leaves: list[int] = []
        self._consumed = False

    # -- construction --------------------------------------------------
    def _coerce(self, x) -> np.ndarray:
        a = np.asarray(x, dtype=np.float64)
        if a.ndim == 0:
            return a.reshape(1).copy()
        if a.shape == (self.width,) or a.shape == (1,):
            return a.copy()
        raise ShapeError(f"expected scalar or shape ({self.width},), got {a.shape}")

    def _push(self, op: int, ia: int, ib: int, auxf: float, aux, value) -> Var:
        value = np.atleast_1d(np.asarray(value, dtype=np.float64))
        if not np.all(np.isfinite(value)):
            raise NonFiniteError(oc.NAMES[op])
        self._ops.append(op)
        self._ia.append(ia)
        self._ib.append(ib)
        self._auxf.append(auxf)
        self._aux.append(aux)
        self._vals.append(value)
        return Var(self, len(self._ops) - 1)

    def const(self, x) -> Var:
        return self._push(oc.CONST, -1, -1, 0.0, None, self._coerce(x))

    def leaf(self, x) -> Var:
        v = self._push(oc.LEAF, -1, -1, 0.0, None, self._coerce(x))
        self._leaves.append(v.idx)
        return v

    def leaves(self, vec: np.ndarray) -> list[Var]:
        return [self.leaf(x) for x in np.asarray(vec, dtype=np.float64)]

    def reset(self, vec=None) -> None:
        """Rewind to just the leaf nodes (optionally writing new leaf values)
        so the tape and leaf Vars can be reused across iterations."""
        k = len(self._leaves)
        if k and (self._leaves[0] != 0 or self._leaves[k - 1] != k - 1):
            raise ShapeError("reset() needs the leaves to be the first nodes")
        del self._ops[k:], self._ia[k:], self._ib[k:]
        del self._auxf[k:], self._aux[k:], self._vals[k:]
        self._consumed = False
        if vec is not None:
            v = np.asarray(vec, dtype=np.float64)
            if v.shape != (k,):
                raise ShapeError("reset() vector length != number of leaves")
            if not np.all(np.isfinite(v)):
                raise NonFiniteError("leaf")
            for j in range(k):
                if self._vals[j].shape[0] != 1:
                    raise ShapeError("reset(vec) needs scalar leaves")
                self._vals[j] = v[j:j + 1].copy()

    def value(self, idx: int) -> np.ndarray:
        v = self._vals[idx]
        if v.shape[0] == 1 and self.width > 1:
            return np.broadcast_to(v, (self.width,))
        return v

    @property
    def n_nodes(self) -> int:
        return len(self._ops)

    # -- primitives -----------------------------------------------------
    def apply(self, op: int, a: Var, b: Var | None = None, aux_f: float = 0.0) -> Var:
        with np.errstate(all="ignore"):
            return self._apply(op, a, b, aux_f)

    def _apply(self, op: int, a: Var, b: Var | None = None, aux_f: float = 0.0) -> Var:
        va = self._vals[a.idx]
        if b is None:
            if op == oc.NEG:
                out = -va
            elif op == oc.SIN:
                out = np.sin(va)
            elif op == oc.COS:
                out = np.cos(va)
            elif op == oc.TAN:
                out = np.tan(va)
            elif op == oc.ATAN:
                out = np.arctan(va)
            elif op == oc.EXP:
                out = np.exp(va)
            elif op == oc.LOG:
                out = np.log(va)
            elif op == oc.SQRT:
                out = np.sqrt(va)
            elif op == oc.POWC:
                out = va**aux_f
            elif op == oc.TANH:
                out = np.tanh(va)
            elif op == oc.RELU:
                out = np.maximum(va, 0.0)
            elif op == oc.ABS:
                out = np.abs(va)
            elif op == oc.WRAP:
                out = np.fmod(va, TWO_PI)
                out = np.where(out < 0.0, out + TWO_PI, out)
            else:
                raise ValueError(f"bad unary opcode {op}")
            return self._push(op, a.idx, -1, aux_f, None, out)
        vb = self._vals[b.idx]
        if op == oc.ADD:
            out = va + vb
        elif op == oc.SUB:
            out = va - vb
        elif op == oc.MUL:
            out = va * vb
        elif op == oc.DIV:
            out = va / vb
        elif op == oc.ATAN2:
            out = np.arctan2(va, vb)
        elif op == oc.MIN:
            out = np.minimum(va, vb)
        elif op == oc.MAX:
            out = np.maximum(va, vb)
        else:
            raise ValueError(f"bad binary opcode {op}")
        return self._push(op, a.idx, b.idx, aux_f, None, out)

    def dot(self, xs: list[Var], ws: list[Var] | None = None) -> Var:
        """Fused inner product: sum_j xs[j] * ws[j] (ws None -> plain sum)."""
        if ws is not None and len(ws) != len(xs):
            raise ShapeError("dot: input lists differ in length")
        xi = np.array([v.idx for v in xs], dtype=np.int32)
        wi = None if ws is None else np.array([v.idx for v in ws], dtype=np.int32)
        acc = np.zeros(1)
        for j in range(len(xs)):
            if wi is None:
                acc = acc + self._vals[xi[j]]
            else:
                acc = acc + self._vals[xi[j]] * self._vals[wi[j]]
        return self._push(oc.DOT, -1, -1, 0.0, (xi, wi, -1), acc)

    def _dot_range(self, xi: np.ndarray, w0: int) -> int:
        acc = np.zeros(1)
        for j in range(len(xi)):
            acc = acc + self._vals[xi[j]] * self._vals[w0 + j]
        return self._push(oc.DOT, -1, -1, 0.0, (xi, None, w0), acc).idx

    def dense_layer(self, xs: list[Var], w0: int, b0: int, n_out: int,
                    relu: bool) -> list[Var]:
        """Record an affine layer over contiguous leaf ranges: weights are the
        row-major leaves starting at node w0, biases at b0."""
        xi = np.array([v.idx for v in xs], dtype=np.int32)
        n_in = len(xs)
        out = []
        for r in range(n_out):
            i = self._dot_range(xi, w0 + r * n_in)
            v = self._apply(oc.ADD, Var(self, i), Var(self, b0 + r))
            if relu:
                v = self._apply(oc.RELU, v)
            out.append(v)
        return out

    def where(self, mask, a: Var, b: Var) -> Var:
        m = np.broadcast_to(np.asarray(mask, dtype=bool), (self.width,)).copy()
        out = np.where(m, self._vals[a.idx], self._vals[b.idx])
        return self._push(oc.WHERE, a.idx, b.idx, 0.0, m, out)

    def gather(self, cols: list[Var], lanes) -> Var:
        """Per-lane pick: out[w] = cols[lanes[w]][w]. Lane indices are constants."""
        idx = np.broadcast_to(np.asarray(lanes, dtype=np.int64), (self.width,)).copy()
        if idx.min() < 0 or idx.max() >= len(cols):
            raise ShapeError("gather index out of range")
        ci = np.array([v.idx for v in cols], dtype=np.int32)
        stacked = np.stack([np.broadcast_to(self._vals[i], (self.width,)) for i in ci])
        out = stacked[idx, np.arange(self.width)]
        return self._push(oc.GATHER, -1, -1, 0.0, (ci, idx), out)

    # -- reverse pass ----------------------------------------------------
    def _acc(self, adj, i: int, delta) -> None:
        # scalar nodes collect the lane sum; wide nodes accumulate lane-wise
        if adj[i].shape[0] == 1:
            adj[i][0] += np.sum(delta)
        else:
            adj[i] += delta

    def backward(self, loss: Var, seed=None) -> np.ndarray:
        """Adjoint sweep from `loss`; returns d(seeded loss)/d(leaf) per leaf.

        Default seed is 1 in every lane: for width-1 tapes this is the
        gradient of the scalar loss. Batched training passes seed=1/width to
        differentiate the lane mean. Consumes the tape.
        """
        if self._consumed:
            raise TapeConsumedError("backward() already ran on this tape")
        self._consumed = True
        if loss.tape is not self:
            raise ShapeError("loss belongs to a different tape")
        n = len(self._ops)
        adj = [np.zeros(self._vals[i].shape[0]) for i in range(n)]
        if seed is None:
            seed_arr = np.ones(self._vals[loss.idx].shape[0])
        else:
            seed_arr = np.broadcast_to(np.asarray(seed, dtype=np.float64),
                                       (self.width,))
        self._acc(adj, loss.idx, seed_arr)
        with np.errstate(all="ignore"):
            self._sweep(adj, loss.idx)
        return np.array([adj[l].sum() for l in self._leaves])

    def _sweep(self, adj, top: int) -> None:
        for i in range(top, -1, -1):
            g = adj[i]
            op = self._ops[i]
            if op in (oc.CONST, oc.LEAF) or not g.any():
                continue
            a, b = self._ia[i], self._ib[i]
            if op == oc.ADD:
                self._acc(adj, a, g)
                self._acc(adj, b, g)
            elif op == oc.SUB:
                self._acc(adj, a, g)
                self._acc(adj, b, -g)
            elif op == oc.MUL:
                self._acc(adj, a, g * self._vals[b])
                self._acc(adj, b, g * self._vals[a])
            elif op == oc.DIV:
                self._acc(adj, a, g / self._vals[b])
                self._acc(adj, b, -g * self._vals[i] / self._vals[b])
            elif op == oc.NEG:
                self._acc(adj, a, -g)
            elif op == oc.SIN:
                self._acc(adj, a, g * np.cos(self._vals[a]))
            elif op == oc.COS:
                self._acc(adj, a, -g * np.sin(self._vals[a]))
            elif op == oc.TAN:
                self._acc(adj, a, g * (1.0 + self._vals[i] ** 2))
            elif op == oc.ATAN:
                self._acc(adj, a, g / (1.0 + self._vals[a] ** 2))
            elif op == oc.ATAN2:
                va, vb = self._vals[a], self._vals[b]
                r2 = va * va + vb * vb
                self._acc(adj, a, g * vb / r2)
                self._acc(adj, b, -g * va / r2)
            elif op == oc.EXP:
                self._acc(adj, a, g * self._vals[i])
            elif op == oc.LOG:
                self._acc(adj, a, g / self._vals[a])
            elif op == oc.SQRT:
                self._acc(adj, a, g / (2.0 * self._vals[i]))
            elif op == oc.POWC:
                c = self._auxf[i]
                self._acc(adj, a, g * c * self._vals[a] ** (c - 1.0))
            elif op == oc.TANH:
                self._acc(adj, a, g * (1.0 - self._vals[i] ** 2))
            elif op == oc.RELU:
                self._acc(adj, a, g * (self._vals[a] > 0.0))
            elif op == oc.MIN:
                take_a = self._vals[a] <= self._vals[b]
                self._acc(adj, a, g * take_a)
                self._acc(adj, b, g * (~take_a))
            elif op == oc.MAX:
                take_a = self._vals[a] >= self._vals[b]
                self._acc(adj, a, g * take_a)
                self._acc(adj, b, g * (~take_a))
            elif op == oc.ABS:
                self._acc(adj, a, g * np.sign(self._vals[a]))
            elif op == oc.WRAP:
                self._acc(adj, a, g)
            elif op == oc.WHERE:
                m = self._aux[i]
                self._acc(adj, a, g * m)
                self._acc(adj, b, g * (~m))
            elif op == oc.GATHER:
                ci, idx = self._aux[i]
                g_wide = np.broadcast_to(g, (self.width,))
                for k in range(len(ci)):
                    sel = idx == k
                    if sel.any():
                        self._acc(adj, ci[k], g_wide * sel)
            elif op == oc.DOT:
                xi, wi, w0 = self._aux[i]
                for j in range(len(xi)):
                    if wi is None and w0 < 0:
                        self._acc(adj, xi[j], g)
                    else:
                        wj = (w0 + j) if w0 >= 0 else wi[j]
                        self._acc(adj, xi[j], g * self._vals[wj])
                        self._acc(adj, wj, g * self._vals[xi[j]])
            else:
                raise ValueError(f"bad opcode {op} in backward")
