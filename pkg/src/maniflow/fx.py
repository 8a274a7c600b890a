"""Elementwise math that runs on tape Vars or plain numpy values.

All flow formulas are written against this module once. When any argument
is a Var the operation is recorded on its tape; otherwise it evaluates
directly with numpy. That gives two backends for the same code path:
recorded (differentiable, used in training) and bare numpy (used for
sampling, grids and quadrature).
"""

from __future__ import annotations

import math

import numpy as np

from .engine import Var
from .engine import opcodes as oc

TWO_PI = 2.0 * math.pi


def _tape_of(*args):
    for a in args:
        if isinstance(a, Var):
            return a.tape
    return None


def _v(tape, x):
    return x if isinstance(x, Var) else tape.const(x)


def _unary(op, np_fn):
    def fn(x):
        if isinstance(x, Var):
            return x.tape.apply(op, x)
        return np_fn(x)

    return fn


sin = _unary(oc.SIN, np.sin)
cos = _unary(oc.COS, np.cos)
tan = _unary(oc.TAN, np.tan)
atan = _unary(oc.ATAN, np.arctan)
exp = _unary(oc.EXP, np.exp)
log = _unary(oc.LOG, np.log)
sqrt = _unary(oc.SQRT, np.sqrt)
tanh = _unary(oc.TANH, np.tanh)


def relu(x):
    if isinstance(x, Var):
        return x.tape.apply(oc.RELU, x)
    return np.maximum(x, 0.0)


def atan2(y, x):
    t = _tape_of(y, x)
    if t is None:
        return np.arctan2(y, x)
    return t.apply(oc.ATAN2, _v(t, y), _v(t, x))


def minimum(a, b):
    t = _tape_of(a, b)
    if t is None:
        return np.minimum(a, b)
    return t.apply(oc.MIN, _v(t, a), _v(t, b))


def maximum(a, b):
    t = _tape_of(a, b)
    if t is None:
        return np.maximum(a, b)
    return t.apply(oc.MAX, _v(t, a), _v(t, b))


def powc(x, c: float):
    if isinstance(x, Var):
        return x.tape.apply(oc.POWC, x, aux_f=float(c))
    return x ** float(c)


def where(mask, a, b):
    t = _tape_of(a, b)
    if t is None:
        return np.where(mask, a, b)
    return t.where(mask, _v(t, a), _v(t, b))


def gather(cols, lanes):
    """cols: length-K list; out[w] = cols[lanes[w]][w]."""
    t = _tape_of(*cols)
    if t is not None:
        return t.gather([_v(t, c) for c in cols], lanes)
    idx = np.asarray(lanes, dtype=np.int64)
    if idx.ndim == 0:
        return np.asarray(cols[int(idx)], dtype=np.float64)
    stacked = np.stack(
        [np.broadcast_to(np.asarray(c, dtype=np.float64), idx.shape) for c in cols])
    return stacked[idx, np.arange(idx.shape[0])]


def dot(xs, ws=None):
    """Fused inner product of two sequences (ws=None: plain sum)."""
    seq = list(xs) + (list(ws) if ws is not None else [])
    t = _tape_of(*seq)
    if t is None:
        acc = 0.0
        for j in range(len(xs)):
            acc = acc + (xs[j] if ws is None else xs[j] * ws[j])
        return acc
    return t.dot([_v(t, x) for x in xs], None if ws is None else [_v(t, w) for w in ws])


def ssum(xs):
    return dot(xs, None)


def values(x) -> np.ndarray:
    """Detach: numeric lane values of a Var (or pass numpy through)."""
    return x.value if isinstance(x, Var) else np.asarray(x, dtype=np.float64)


def wrap_2pi(x):
    """Wrap into [0, 2pi], keeping values at (or a few ulps above) positive
    multiples of 2pi at the top instead of collapsing them to 0.

    The shift is a lane constant, so the derivative is exactly 1. Used on
    circle-flow outputs where f(2pi) = 2pi must be preserved; accumulated
    rounding in convex combinations may overshoot 2pi by an ulp or two.
    """
    snap = 1e-12
    v = values(x)
    k = np.floor(v / TWO_PI)
    rem = v - TWO_PI * k
    k = np.where((rem < snap) & (v > snap), k - 1.0, k)
    if isinstance(x, Var):
        return x - x.tape.const(TWO_PI * k)
    return v - TWO_PI * k


def wrap_half_open(x):
    """Wrap into [0, 2pi) by exact fmod; derivative 1 (WRAP opcode)."""
    if isinstance(x, Var):
        return x.tape.apply(oc.WRAP, x)
    out = np.fmod(x, TWO_PI)
    return np.where(out < 0.0, out + TWO_PI, out)


def softplus(x):
    """Overflow-safe log(1 + e^x) = max(x, 0) + log(1 + e^-|x|)."""
    return maximum(x, 0.0) + log(1.0 + exp(-abs(x)))


def softmax(xs):
    """Softmax over a list of lane scalars; returns a list."""
    m = xs[0]
    for x in xs[1:]:
        m = maximum(m, x)
    exps = [exp(x - m) for x in xs]
    total = ssum(exps)
    return [e / total for e in exps]


def logsumexp(xs):
    m = xs[0]
    for x in xs[1:]:
        m = maximum(m, x)
    return m + log(ssum([exp(x - m) for x in xs]))


def cumsum(xs):
    """Running sums of a list; out[k] = xs[0] + ... + xs[k]."""
    out = [xs[0]]
    for x in xs[1:]:
        out.append(out[-1] + x)
    return out


def record(primitive: str, *inputs):
    """String-keyed primitive entry point over Vars.

    `dot` takes an even number of inputs and contracts the first half
    against the second half. All other primitives take 1 or 2 inputs.
    """
    if primitive == "dot":
        if len(inputs) % 2:
            raise ValueError("record('dot', ...) needs an even number of inputs")
        half = len(inputs) // 2
        return dot(list(inputs[:half]), list(inputs[half:]))
    table = {
        "add": lambda a, b: a + b,
        "sub": lambda a, b: a - b,
        "mul": lambda a, b: a * b,
        "div": lambda a, b: a / b,
        "neg": lambda a: -a,
        "sin": sin,
        "cos": cos,
        "tan": tan,
        "atan": atan,
        "atan2": atan2,
        "exp": exp,
        "log": log,
        "sqrt": sqrt,
        "pow": powc,
        "tanh": tanh,
        "relu": relu,
        "min": minimum,
        "max": maximum,
        "abs": lambda a: abs(a) if isinstance(a, Var) else np.abs(a),
    }
    if primitive not in table:
        raise ValueError(f"unknown primitive '{primitive}'")
    return table[primitive](*inputs)
