"""ReLU MLP over flat parameter slices, used as the flow conditioner.

Layer sizes default to [n_in, 64, 64, n_out]: ReLU on hidden layers,
linear output. Parameters live in one flat vector (row-major weight
matrices followed by biases, layer by layer) so a model's whole state is
a single float64 array.
"""

from __future__ import annotations

import numpy as np

from . import fx
from .errors import ShapeError

HIDDEN = (64, 64)


def mlp_sizes(n_in: int, n_out: int, hidden=HIDDEN) -> list[int]:
    return [n_in, *hidden, n_out]


def mlp_param_count(sizes) -> int:
    return sum(sizes[i + 1] * sizes[i] + sizes[i + 1] for i in range(len(sizes) - 1))


def mlp_init(sizes, rng: np.random.Generator, final_bias: np.ndarray | None = None) -> np.ndarray:
    """He-initialized hidden layers; zero final weights.

    With zero final weights the conditioner output equals its final bias
    for every input, so setting final_bias to a transform's identity
    parameters makes the whole flow start at the identity.
    """
    out = []
    last = len(sizes) - 2
    for i in range(len(sizes) - 1):
        fan_in, fan_out = sizes[i], sizes[i + 1]
        if i == last:
            w = np.zeros((fan_out, fan_in))
            b = np.zeros(fan_out) if final_bias is None else np.asarray(final_bias, dtype=np.float64)
            if b.shape != (fan_out,):
                raise ShapeError(f"final bias shape {b.shape} != ({fan_out},)")
        else:
            w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_out, fan_in))
            b = np.zeros(fan_out)
        out.append(w.ravel())
        out.append(b)
    return np.concatenate(out)


def mlp_forward(params, sizes, inputs):
    """Forward pass; `params` is a flat slice (Vars or floats), `inputs` a list.

    Returns a list of n_out lane scalars. Uses a fused matrix path when
    everything is plain numpy, and per-row fused dot products on tape.
    """
    if len(inputs) != sizes[0]:
        raise ShapeError(f"mlp expects {sizes[0]} inputs, got {len(inputs)}")
    on_tape = any(isinstance(p, fx.Var) for p in params) or any(
        isinstance(x, fx.Var) for x in inputs)
    if not on_tape:
        return _mlp_forward_np(params, sizes, inputs)
    x = list(inputs)
    if _contiguous_leaves(params):
        # fused recording path: weight/bias leaf ranges are implicit
        tape = params[0].tape
        base = params[0].idx
        x = [v if isinstance(v, fx.Var) else tape.const(v) for v in x]
        ofs = 0
        for i in range(len(sizes) - 1):
            fan_in, fan_out = sizes[i], sizes[i + 1]
            x = tape.dense_layer(x, base + ofs, base + ofs + fan_out * fan_in,
                                 fan_out, i < len(sizes) - 2)
            ofs += fan_out * fan_in + fan_out
        return x
    ofs = 0
    for i in range(len(sizes) - 1):
        fan_in, fan_out = sizes[i], sizes[i + 1]
        rows = []
        for r in range(fan_out):
            w_row = params[ofs + r * fan_in: ofs + (r + 1) * fan_in]
            rows.append(fx.dot(x, list(w_row)))
        ofs += fan_out * fan_in
        rows = [rows[r] + params[ofs + r] for r in range(fan_out)]
        ofs += fan_out
        if i < len(sizes) - 2:
            rows = [fx.relu(r) for r in rows]
        x = rows
    return x


def _contiguous_leaves(params) -> bool:
    if not params or not isinstance(params[0], fx.Var) or not isinstance(params[-1], fx.Var):
        return False
    return params[-1].idx - params[0].idx == len(params) - 1


def _mlp_forward_np(params, sizes, inputs):
    p = np.asarray(params, dtype=np.float64)
    lanes = 1
    for v in inputs:
        if np.ndim(v):
            lanes = max(lanes, len(v))
    x = np.stack([np.broadcast_to(np.asarray(v, dtype=np.float64), (lanes,))
                  for v in inputs])
    ofs = 0
    for i in range(len(sizes) - 1):
        fan_in, fan_out = sizes[i], sizes[i + 1]
        w = p[ofs: ofs + fan_out * fan_in].reshape(fan_out, fan_in)
        ofs += fan_out * fan_in
        b = p[ofs: ofs + fan_out]
        ofs += fan_out
        x = w @ x + b[:, None]
        if i < len(sizes) - 2:
            x = np.maximum(x, 0.0)
    return list(x)
