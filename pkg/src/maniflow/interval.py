"""Monotone rational-quadratic spline diffeomorphisms of a closed interval.

The spline is a piecewise rational quadratic with matched values and
derivatives at the knots. Knots run strictly increasing from (a, a) to
(b, b), so the endpoints are fixed and endpoint derivatives are strictly
positive, which the sphere construction relies on.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from . import fx
from .errors import DomainError

MIN_SLOPE = 1e-3  # softplus floor on every slope
MIN_FRAC = 1e-3   # minimum width/height fraction per segment

# softplus(x) + MIN_SLOPE == 1 at this raw value: identity-spline slope
IDENTITY_SLOPE_RAW = math.log(math.expm1(1.0 - MIN_SLOPE))


@dataclasses.dataclass
class SplineKnots:
    """Constrained spline state: K+1 knots and K+1 slopes (lane values)."""

    xs: list
    ys: list
    ds: list
    a: float
    b: float

    @property
    def n_segments(self) -> int:
        return len(self.xs) - 1


def spline_raw_count(K: int, circular: bool) -> int:
    # widths K + heights K + slopes (K for circular incl. shared boundary,
    # K+1 independent for interval); circular adds a phase slot upstream
    return 3 * K + (0 if circular else 1)


def spline_identity_raw(K: int, circular: bool) -> np.ndarray:
    n = spline_raw_count(K, circular)
    raw = np.zeros(n)
    raw[2 * K:] = IDENTITY_SLOPE_RAW
    return raw


def _positions(fracs_raw, lo: float, hi: float):
    """Softmax-floored segment fractions -> K+1 knot positions in [lo, hi]."""
    K = len(fracs_raw)
    if K * MIN_FRAC >= 1.0:
        raise DomainError(f"too many segments for the {MIN_FRAC} width floor: {K}")
    sm = fx.softmax(list(fracs_raw))
    fracs = [MIN_FRAC + (1.0 - K * MIN_FRAC) * s for s in sm]
    cum = fx.cumsum(fracs)
    total = cum[-1]
    scale = hi - lo
    # dividing by the actual total pins the last knot exactly at hi
    out = [lo + 0.0 * total]
    for c in cum:
        out.append(lo + scale * (c / total))
    return out


def constrain_spline(raw, K: int, a: float, b: float, circular: bool) -> SplineKnots:
    """Map unconstrained parameters to valid knots and slopes.

    Raw layout: [widths K | heights K | slopes K or K+1]. Circular splines
    share the boundary slope (first slope entry) between both endpoints.
    """
    xs = _positions(raw[0:K], a, b)
    ys = _positions(raw[K:2 * K], a, b)
    if circular:
        s = raw[2 * K:3 * K]
        boundary = MIN_SLOPE + fx.softplus(s[0])
        ds = [boundary] + [MIN_SLOPE + fx.softplus(v) for v in s[1:K]] + [boundary]
    else:
        ds = [MIN_SLOPE + fx.softplus(v) for v in raw[2 * K:3 * K + 1]]
    return SplineKnots(xs=xs, ys=ys, ds=ds, a=a, b=b)


def _bin_index(knots_vals, t_vals: np.ndarray) -> np.ndarray:
    """Segment index per lane from detached knot positions."""
    K = len(knots_vals) - 1
    t = np.atleast_1d(np.asarray(t_vals, dtype=np.float64))
    idx = np.zeros(t.shape, dtype=np.int64)
    for k in range(1, K):
        idx += t >= np.asarray(knots_vals[k])
    return idx


def spline_fwd(c: SplineKnots, t):
    """Evaluate the spline and its log-derivative at t in [a, b]."""
    tv = np.atleast_1d(fx.values(t))
    if tv.min() < c.a - 1e-12 or tv.max() > c.b + 1e-12:
        raise DomainError(f"spline input outside [{c.a}, {c.b}]")
    idx = _bin_index([fx.values(x) for x in c.xs], tv)
    x0 = fx.gather(c.xs[:-1], idx)
    x1 = fx.gather(c.xs[1:], idx)
    y0 = fx.gather(c.ys[:-1], idx)
    y1 = fx.gather(c.ys[1:], idx)
    d0 = fx.gather(c.ds[:-1], idx)
    d1 = fx.gather(c.ds[1:], idx)
    w = x1 - x0
    h = y1 - y0
    delta = h / w
    xi = (t - x0) / w
    q = xi * (1.0 - xi)
    den = delta + (d1 + d0 - 2.0 * delta) * q
    out = y0 + h * (delta * xi * xi + d0 * q) / den
    hi = tv >= c.b
    if hi.any():
        # y0 + (yK - y0) can land one ulp off b; the endpoint is a fixed point
        out = fx.where(hi, c.b, out)
    num = delta * delta * (d1 * xi * xi + 2.0 * delta * q + d0 * (1.0 - xi) * (1.0 - xi))
    logdet = fx.log(num) - 2.0 * fx.log(den)
    return out, logdet


def spline_logdet(c: SplineKnots, t):
    return spline_fwd(c, t)[1]


def spline_inverse_values(c_vals: SplineKnots, y_vals: np.ndarray) -> np.ndarray:
    """Analytic inverse on detached values: locate the segment by the y-knots,
    then solve the rational quadratic. Exact at the knots and endpoints."""
    y = np.atleast_1d(np.asarray(y_vals, dtype=np.float64))
    idx = _bin_index(c_vals.ys, y)
    pick = lambda cols: fx.gather(cols, idx)
    x0, x1 = pick(c_vals.xs[:-1]), pick(c_vals.xs[1:])
    y0, y1 = pick(c_vals.ys[:-1]), pick(c_vals.ys[1:])
    d0, d1 = pick(c_vals.ds[:-1]), pick(c_vals.ds[1:])
    w = x1 - x0
    h = y1 - y0
    delta = h / w
    rel = y - y0
    term = rel * (d1 + d0 - 2.0 * delta)
    qa = h * (delta - d0) + term
    qb = h * d0 - term
    qc = -delta * rel
    disc = np.maximum(qb * qb - 4.0 * qa * qc, 0.0)
    xi = 2.0 * qc / (-qb - np.sqrt(disc))
    t = x0 + w * xi
    t = np.where(y <= c_vals.a, c_vals.a, t)
    t = np.where(y >= c_vals.b, c_vals.b, t)
    return t


class IntervalSpline:
    """Spline flow family on [a, b] with independent endpoint slopes."""

    def __init__(self, K: int, a: float = -1.0, b: float = 1.0):
        self.K = K
        self.a = a
        self.b = b
        self.n_params = spline_raw_count(K, circular=False)

    def identity_raw(self) -> np.ndarray:
        return spline_identity_raw(self.K, circular=False)

    def constrain(self, raw) -> SplineKnots:
        return constrain_spline(raw, self.K, self.a, self.b, circular=False)

    def fwd(self, c: SplineKnots, t):
        return spline_fwd(c, t)

    def logdet(self, c: SplineKnots, t):
        return spline_logdet(c, t)

    def inverse_values(self, c_vals: SplineKnots, y) -> np.ndarray:
        return spline_inverse_values(c_vals, y)
