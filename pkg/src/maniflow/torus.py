"""Coupling-based autoregressive flows on products of circles and intervals.

A coupling layer transforms the unmasked factors with circle or interval
diffeomorphisms whose parameters come from an MLP conditioner reading the
masked factors (circles enter through a wrapped (cos, sin) embedding so the
conditioner is exactly periodic). With no masked factor the transformer
parameters are free learnable leaves. Layers stack with alternating masks;
the Jacobian is triangular so log-dets add coordinate-wise.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from . import fx
from .circle import (CircularSpline, Fourier, Mobius, Ncp, circle_inverse,
                     detach, _tape_of_params)
from .engine import Var
from .errors import DomainError
from .interval import IntervalSpline
from .nn import mlp_forward, mlp_init, mlp_param_count, mlp_sizes

TWO_PI = 2.0 * math.pi

INIT_JITTER = 1e-3  # stddev of the near-identity initialization noise


@dataclasses.dataclass(frozen=True)
class ProductManifold:
    """Ordered product of circle and interval factors."""

    factors: tuple

    @staticmethod
    def torus(dim: int) -> "ProductManifold":
        return ProductManifold(tuple(("circle",) for _ in range(dim)))

    @staticmethod
    def cylinder_stack(n_intervals: int) -> "ProductManifold":
        """circle x [-1,1]^n, the unrolled-sphere coordinate space."""
        factors = [("circle",)] + [("interval", -1.0, 1.0)] * n_intervals
        return ProductManifold(tuple(factors))

    @property
    def dim(self) -> int:
        return len(self.factors)

    def log_base(self) -> float:
        """Log-density of the uniform base distribution."""
        total = 0.0
        for f in self.factors:
            total -= math.log(TWO_PI) if f[0] == "circle" else math.log(f[2] - f[1])
        return total

    def sample_base(self, n: int, rng: np.random.Generator) -> list:
        out = []
        for f in self.factors:
            if f[0] == "circle":
                out.append(rng.uniform(0.0, TWO_PI, size=n))
            else:
                out.append(rng.uniform(f[1], f[2], size=n))
        return out

    def check_coords(self, coords) -> None:
        for f, c in zip(self.factors, coords):
            v = fx.values(c)
            lo, hi = (0.0, TWO_PI) if f[0] == "circle" else (f[1], f[2])
            if np.min(v) < lo - 1e-9 or np.max(v) > hi + 1e-9:
                raise DomainError(f"coordinate outside {f}: [{np.min(v)}, {np.max(v)}]")


def make_transformer(factor, family: str, K: int, freqs=None):
    """Transformer family instance for one manifold factor."""
    if factor[0] == "interval":
        return IntervalSpline(K, factor[1], factor[2])
    fam = family.lower()
    if fam == "mobius":
        return Mobius(K)
    if fam == "cs":
        return CircularSpline(K)
    if fam == "ncp":
        return Ncp(K)
    if fam == "fourier":
        return Fourier(freqs if freqs is not None else list(range(1, K + 1)))
    raise ValueError(f"unknown circle family '{family}'")


def transformer_inverse(fam, c, y):
    """Inverse dispatch: circle families need the wrap-aware path."""
    if isinstance(fam, IntervalSpline):
        tape = _tape_of_params(c)
        u0 = fam.inverse_values(detach(c), fx.values(y))
        if tape is None and not isinstance(y, Var):
            return u0
        if tape is None:
            tape = y.tape
        u0c = tape.const(np.broadcast_to(np.asarray(u0), (tape.width,)))
        out0, ld0 = fam.fwd(c, u0c)
        y_v = y if isinstance(y, Var) else tape.const(y)
        return u0c + (y_v - out0) / fx.exp(ld0)
    return circle_inverse(fam, c, y)


class CouplingLayer:
    def __init__(self, manifold: ProductManifold, mask, transformers: dict):
        """mask: factor indices that condition (pass through unchanged);
        transformers: {factor index -> family} for the complement."""
        self.manifold = manifold
        self.masked = tuple(sorted(mask))
        self.transformed = tuple(sorted(transformers))
        if set(self.masked) & set(self.transformed):
            raise ValueError("a factor cannot be both masked and transformed")
        self.transformers = transformers
        self.out_dim = sum(transformers[i].n_params for i in self.transformed)
        self.embed_dim = sum(
            2 if manifold.factors[i][0] == "circle" else 1 for i in self.masked)
        if self.embed_dim:
            self.sizes = mlp_sizes(self.embed_dim, self.out_dim)
            self.n_params = mlp_param_count(self.sizes)
        else:
            self.sizes = None
            self.n_params = self.out_dim

    def _identity_bias(self, rng) -> np.ndarray:
        parts = []
        for i in self.transformed:
            fam = self.transformers[i]
            if isinstance(fam, Fourier):
                parts.append(fam.identity_raw(rng))
            else:
                parts.append(fam.identity_raw())
        raw = np.concatenate(parts) if parts else np.zeros(0)
        return raw + rng.normal(0.0, INIT_JITTER, size=raw.shape)

    def init_params(self, rng: np.random.Generator) -> np.ndarray:
        bias = self._identity_bias(rng)
        if self.sizes is None:
            return bias
        return mlp_init(self.sizes, rng, final_bias=bias)

    def _embed(self, coords):
        emb = []
        for i in self.masked:
            if self.manifold.factors[i][0] == "circle":
                wrapped = fx.wrap_half_open(coords[i])
                emb.append(fx.cos(wrapped))
                emb.append(fx.sin(wrapped))
            else:
                emb.append(coords[i])
        return emb

    def _constrained(self, p, coords):
        if self.sizes is None:
            raw = list(p)
        else:
            raw = mlp_forward(p, self.sizes, self._embed(coords))
        out, ofs = {}, 0
        for i in self.transformed:
            fam = self.transformers[i]
            out[i] = fam.constrain(raw[ofs:ofs + fam.n_params])
            ofs += fam.n_params
        return out

    def forward(self, p, coords):
        cs = self._constrained(p, coords)
        out = list(coords)
        ld = None
        for i in self.transformed:
            out[i], step = self.transformers[i].fwd(cs[i], coords[i])
            ld = step if ld is None else ld + step
        return out, ld

    def inverse(self, p, coords):
        """Preimage and the forward log-det evaluated at the preimage."""
        cs = self._constrained(p, coords)
        out = list(coords)
        ld = None
        for i in self.transformed:
            fam = self.transformers[i]
            u = transformer_inverse(fam, cs[i], coords[i])
            out[i] = u
            step = fam.logdet(cs[i], u) if not isinstance(fam, IntervalSpline) \
                else fam.fwd(cs[i], u)[1]
            ld = step if ld is None else ld + step
        return out, ld


class TorusFlow:
    """Stack of coupling layers over a product manifold."""

    def __init__(self, manifold: ProductManifold, layers):
        self.manifold = manifold
        self.layers = list(layers)
        self.slices = []
        ofs = 0
        for layer in self.layers:
            self.slices.append((ofs, ofs + layer.n_params))
            ofs += layer.n_params
        self.n_params = ofs

    def init_params(self, rng: np.random.Generator) -> np.ndarray:
        if not self.layers:
            return np.zeros(0)
        return np.concatenate([layer.init_params(rng) for layer in self.layers])

    def forward(self, p, coords):
        ld = None
        for layer, (lo, hi) in zip(self.layers, self.slices):
            coords, step = layer.forward(p[lo:hi], coords)
            if step is not None:
                ld = step if ld is None else ld + step
        return coords, ld

    def inverse(self, p, coords):
        ld = None
        for layer, (lo, hi) in zip(reversed(self.layers), reversed(self.slices)):
            coords, step = layer.inverse(p[lo:hi], coords)
            if step is not None:
                ld = step if ld is None else ld + step
        return coords, ld

    def log_prob(self, p, coords):
        """log q at given points: base log-density minus the forward log-det
        accumulated at the preimages (triangular Jacobian, diagonal terms)."""
        self.manifold.check_coords(coords)
        _, ld = self.inverse(p, coords)
        base = self.manifold.log_base()
        return base - ld if ld is not None else base + 0.0 * fx.values(coords[0])

    def sample(self, p, n: int, rng: np.random.Generator):
        """Draw n points: uniform base mapped forward; returns (coords, log q)."""
        u = self.manifold.sample_base(n, rng)
        if n == 0:
            return u, np.zeros(0)
        x, ld = self.forward(p, u)
        base = self.manifold.log_base()
        logq = base - ld if ld is not None else base + np.zeros(n)
        return x, logq

    def sample_on_tape(self, p, tape, rng: np.random.Generator):
        """Training-path sampling: base draws enter the tape as constants."""
        u = [tape.const(v) for v in self.manifold.sample_base(tape.width, rng)]
        x, ld = self.forward(p, u)
        base = self.manifold.log_base()
        logq = base - ld if ld is not None else tape.const(np.full(tape.width, base))
        return x, logq


def chunked_log_prob(flow, p, coords, chunk: int = 65536) -> np.ndarray:
    """log_prob over large numpy batches in slices, bounding peak memory."""
    n = len(np.asarray(coords[0]))
    out = np.empty(n)
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        out[lo:hi] = np.asarray(flow.log_prob(p, [np.asarray(c)[lo:hi] for c in coords]))
    return out


def alternating_flow(manifold: ProductManifold, n_layers: int,
                     family: str, K: int, freqs=None) -> TorusFlow:
    """Standard stack: even/odd masks alternate so every coordinate is
    transformed at least once every two layers. Dimension one gets
    unconditional (free-parameter) layers."""
    dim = manifold.dim
    layers = []
    for ell in range(n_layers):
        if dim == 1:
            mask = ()
            transformed = (0,)
        else:
            mask = tuple(i for i in range(dim) if i % 2 == ell % 2)
            transformed = tuple(i for i in range(dim) if i % 2 != ell % 2)
        transformers = {
            i: make_transformer(manifold.factors[i], family, K, freqs)
            for i in transformed
        }
        layers.append(CouplingLayer(manifold, mask, transformers))
    return TorusFlow(manifold, layers)
