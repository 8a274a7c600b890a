"""Diffeomorphisms of the circle: Mobius, circular spline, non-compact
projection (NCP) and Fourier families, plus composition.

Every family satisfies the circle boundary conditions (0 and 2pi fixed
before the phase shift, strictly positive derivative, matched endpoint
derivatives). Families expose a real-valued increasing `lift` with
lift(2pi) = lift(0) + 2pi; the forward map is the lift wrapped into
[0, 2pi], and the convex-combination inverse is a bisection on the lift.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from . import fx
from .engine import Var
from .errors import NoBracketError
from .interval import (IDENTITY_SLOPE_RAW, constrain_spline,
                       spline_fwd, spline_identity_raw, spline_inverse_values,
                       spline_logdet, spline_raw_count)

TWO_PI = 2.0 * math.pi

OMEGA_CAP = 0.99       # Mobius centre norm bound
ALPHA_FLOOR = 1e-3     # NCP scale softplus floor
NCP_TAU = 1e-4         # NCP endpoint linearization threshold (radians)
BISECT_ITERS = 100
BISECT_TOL = 1e-12

# softplus(x) + ALPHA_FLOOR == 1: NCP identity scale
_NCP_IDENTITY_RAW = math.log(math.expm1(1.0 - ALPHA_FLOOR))


def detach(obj):
    """Recursively replace Vars by their lane values."""
    if isinstance(obj, Var):
        return obj.value
    if isinstance(obj, list):
        return [detach(o) for o in obj]
    if dataclasses.is_dataclass(obj):
        return type(obj)(**{f.name: detach(getattr(obj, f.name))
                            for f in dataclasses.fields(obj)})
    return obj


def _tape_of_params(c):
    if isinstance(c, Var):
        return c.tape
    if isinstance(c, list):
        for o in c:
            t = _tape_of_params(o)
            if t is not None:
                return t
        return None
    if dataclasses.is_dataclass(c):
        for f in dataclasses.fields(c):
            t = _tape_of_params(getattr(c, f.name))
            if t is not None:
                return t
    return None


# -- Mobius -----------------------------------------------------------------


@dataclasses.dataclass
class MobiusC:
    ox: list
    oy: list
    rho: list
    phase: object


class Mobius:
    """Convex combination of K rotated Mobius maps plus a phase."""

    def __init__(self, K: int):
        self.K = K
        self.n_params = 3 * K + 1

    def identity_raw(self) -> np.ndarray:
        return np.zeros(self.n_params)

    def constrain(self, raw) -> MobiusC:
        K = self.K
        ox, oy = [], []
        for i in range(K):
            wx, wy = raw[i], raw[K + i]
            scale = OMEGA_CAP / (1.0 + fx.sqrt(wx * wx + wy * wy))
            ox.append(wx * scale)
            oy.append(wy * scale)
        rho = fx.softmax(list(raw[2 * K:3 * K]))
        return MobiusC(ox=ox, oy=oy, rho=rho, phase=raw[3 * K])

    def _component_angles(self, c: MobiusC, theta):
        """Rotated Mobius image angle of theta for each centre, in [0, 2pi].

        The rotation undoes the image of the fixed point (1, 0); the relative
        angle comes from cross/dot products. Right at the seam the cross
        product's sign is rounding noise, so values the slope bound proves
        impossible (angle ~0 at large theta or ~2pi at small theta; the
        component derivative is at least (1-0.99)/(1+0.99)) are shifted by
        one turn back to the correct side.
        """
        cz, sz = fx.cos(theta), fx.sin(theta)
        tv = np.atleast_1d(fx.values(theta))
        out = []
        for i in range(self.K):
            ox, oy = c.ox[i], c.oy[i]
            nrm2 = ox * ox + oy * oy
            # image of z
            dx, dy = cz - ox, sz - oy
            s = (1.0 - nrm2) / (dx * dx + dy * dy)
            hx, hy = s * dx - ox, s * dy - oy
            # image of the fixed point (1, 0)
            ex, ey = 1.0 - ox, -oy
            s0 = (1.0 - nrm2) / (ex * ex + ey * ey)
            h0x, h0y = s0 * ex - ox, s0 * ey - oy
            cross = h0x * hy - h0y * hx
            dotp = h0x * hx + h0y * hy
            fi = fx.wrap_2pi(fx.atan2(cross, dotp))
            fiv = np.atleast_1d(fx.values(fi))
            up = (fiv < 1e-9) & (tv > 0.5)
            down = (fiv > TWO_PI - 1e-9) & (tv < TWO_PI - 0.5)
            if up.any() or down.any():
                fi = fi + TWO_PI * (up.astype(np.float64) - down.astype(np.float64))
            out.append(fi)
        return out

    def lift(self, c: MobiusC, theta):
        comps = self._component_angles(c, theta)
        return fx.dot(comps, c.rho) + c.phase

    def logdet(self, c: MobiusC, theta):
        # each component has derivative (1 - |w|^2) / |z - w|^2 on the circle
        cz, sz = fx.cos(theta), fx.sin(theta)
        derivs = []
        for i in range(self.K):
            ox, oy = c.ox[i], c.oy[i]
            dx, dy = cz - ox, sz - oy
            derivs.append((1.0 - (ox * ox + oy * oy)) / (dx * dx + dy * dy))
        return fx.log(fx.dot(derivs, c.rho))

    def fwd(self, c: MobiusC, theta):
        return fx.wrap_2pi(self.lift(c, theta)), self.logdet(c, theta)

    def inverse_values(self, c_vals: MobiusC, y) -> np.ndarray:
        return bisect_lift(self, c_vals, y)


# -- Circular spline ----------------------------------------------------------


@dataclasses.dataclass
class CircularSplineC:
    knots: object  # SplineKnots on [0, 2pi] with shared boundary slope
    phase: object


class CircularSpline:
    """Rational-quadratic circle spline with K segments plus a phase."""

    def __init__(self, K: int):
        self.K = K
        self.n_params = 3 * K + 1

    def identity_raw(self) -> np.ndarray:
        return np.concatenate([spline_identity_raw(self.K, circular=True), [0.0]])

    def constrain(self, raw) -> CircularSplineC:
        knots = constrain_spline(raw[:3 * self.K], self.K, 0.0, TWO_PI, circular=True)
        return CircularSplineC(knots=knots, phase=raw[3 * self.K])

    def lift(self, c: CircularSplineC, theta):
        return spline_fwd(c.knots, theta)[0] + c.phase

    def logdet(self, c: CircularSplineC, theta):
        return spline_logdet(c.knots, theta)

    def fwd(self, c: CircularSplineC, theta):
        out, ld = spline_fwd(c.knots, theta)
        return fx.wrap_2pi(out + c.phase), ld

    def inverse_values(self, c_vals: CircularSplineC, y) -> np.ndarray:
        # top-keeping wrap so y = 2pi (plus phase) inverts to 2pi, not 0
        t = np.asarray(fx.wrap_2pi(np.asarray(y) - c_vals.phase))
        return spline_inverse_values(c_vals.knots, t)


# -- Non-compact projection ---------------------------------------------------


@dataclasses.dataclass
class NcpC:
    alpha: list
    beta: list
    rho: list
    phase: object


class Ncp:
    """Convex combination of K tangent-projected affine maps plus a phase."""

    def __init__(self, K: int):
        self.K = K
        self.n_params = 3 * K + 1

    def identity_raw(self) -> np.ndarray:
        raw = np.zeros(self.n_params)
        raw[0:self.K] = _NCP_IDENTITY_RAW  # alpha = 1
        return raw

    def constrain(self, raw) -> NcpC:
        K = self.K
        alpha = [ALPHA_FLOOR + fx.softplus(raw[i]) for i in range(K)]
        beta = list(raw[K:2 * K])
        rho = fx.softmax(list(raw[2 * K:3 * K]))
        return NcpC(alpha=alpha, beta=beta, rho=rho, phase=raw[3 * K])

    @staticmethod
    def from_components(alpha, beta, phase=0.0) -> NcpC:
        """Constrained bundle straight from (alpha_i, beta_i) values."""
        K = len(alpha)
        return NcpC(alpha=list(alpha), beta=list(beta),
                    rho=[1.0 / K for _ in range(K)], phase=phase)

    def _component(self, alpha, beta, theta, theta_vals):
        main = 2.0 * fx.atan(alpha * fx.tan(0.5 * theta - 0.5 * math.pi) + beta) + math.pi
        lo = theta / alpha
        hi = TWO_PI + (theta - TWO_PI) / alpha
        out = fx.where(theta_vals < NCP_TAU, lo, main)
        return fx.where(theta_vals > TWO_PI - NCP_TAU, hi, out)

    def lift(self, c: NcpC, theta):
        tv = fx.values(theta)
        comps = [self._component(c.alpha[i], c.beta[i], theta, tv) for i in range(self.K)]
        return fx.dot(comps, c.rho) + c.phase

    def logdet(self, c: NcpC, theta):
        # the closed-form gradient is defined at the endpoints, no branches
        half = 0.5 * theta
        s, cns = fx.sin(half), fx.cos(half)
        sin_full = fx.sin(theta)
        derivs = []
        for i in range(self.K):
            a, b = c.alpha[i], c.beta[i]
            derivs.append(1.0 / ((1.0 + b * b) / a * s * s + a * cns * cns - b * sin_full))
        return fx.log(fx.dot(derivs, c.rho))

    def fwd(self, c: NcpC, theta):
        return fx.wrap_2pi(self.lift(c, theta)), self.logdet(c, theta)

    def inverse_values(self, c_vals: NcpC, y) -> np.ndarray:
        if self.K == 1:
            # group inverse: (alpha, beta) -> (1/alpha, -beta/alpha)
            a = np.asarray(c_vals.alpha[0])
            b = np.asarray(c_vals.beta[0])
            inv = Ncp(1)
            c_inv = NcpC(alpha=[1.0 / a], beta=[-b / a], rho=[1.0], phase=0.0)
            t = fx.wrap_half_open(np.asarray(y) - c_vals.phase)
            return np.asarray(inv.lift(c_inv, np.atleast_1d(t)))
        return bisect_lift(self, c_vals, y)


# -- Fourier ------------------------------------------------------------------


@dataclasses.dataclass
class FourierC:
    amp: list
    phases: list
    freqs: list


class Fourier:
    """Bounded trigonometric perturbation of the identity, fixed integer
    frequencies. Amplitudes satisfy sum |a_i| < 1 by construction."""

    def __init__(self, freqs):
        self.freqs = [int(w) for w in freqs]
        if any(w < 1 for w in self.freqs):
            raise ValueError("frequencies must be positive integers")
        self.K = len(self.freqs)
        self.n_params = 3 * self.K + 1

    @staticmethod
    def repeated(copies: int, max_freq: int) -> "Fourier":
        """`copies` duplicates of each frequency 1..max_freq."""
        return Fourier([w for w in range(1, max_freq + 1) for _ in range(copies)])

    def identity_raw(self, rng: np.random.Generator | None = None) -> np.ndarray:
        raw = np.zeros(self.n_params)
        if rng is not None:  # duplicate-frequency phases start spread out
            raw[2 * self.K + 1:] = rng.uniform(0.0, TWO_PI, size=self.K)
        return raw

    def constrain(self, raw) -> FourierC:
        K = self.K
        mass = fx.softmax(list(raw[K:2 * K + 1]))  # K+1 logits; last is slack
        amp = [fx.tanh(raw[i]) * mass[i] for i in range(K)]
        phases = list(raw[2 * K + 1:3 * K + 1])
        return FourierC(amp=amp, phases=phases, freqs=self.freqs)

    def lift(self, c: FourierC, theta):
        terms = [(c.amp[i] / c.freqs[i]) * fx.sin(c.freqs[i] * theta - c.phases[i])
                 for i in range(self.K)]
        mu = fx.ssum([c.amp[i] * fx.sin(c.phases[i]) for i in range(self.K)])
        return theta + fx.ssum(terms) + mu

    def logdet(self, c: FourierC, theta):
        terms = [c.amp[i] * fx.cos(c.freqs[i] * theta - c.phases[i]) for i in range(self.K)]
        return fx.log(1.0 + fx.ssum(terms))

    def fwd(self, c: FourierC, theta):
        return fx.wrap_2pi(self.lift(c, theta)), self.logdet(c, theta)

    def inverse_values(self, c_vals: FourierC, y) -> np.ndarray:
        return bisect_lift(self, c_vals, y)


# -- composition --------------------------------------------------------------


class Compose:
    """Chain of circle flows: forward applies in order, log-dets add."""

    def __init__(self, parts):
        self.parts = list(parts)
        self.n_params = sum(p.n_params for p in self.parts)

    def identity_raw(self) -> np.ndarray:
        return np.concatenate([p.identity_raw() for p in self.parts])

    def constrain(self, raw):
        out, ofs = [], 0
        for p in self.parts:
            out.append(p.constrain(raw[ofs:ofs + p.n_params]))
            ofs += p.n_params
        return out

    def fwd(self, cs, theta):
        ld = None
        for p, c in zip(self.parts, cs):
            theta, step = p.fwd(c, theta)
            ld = step if ld is None else ld + step
        return theta, ld

    def logdet(self, cs, theta):
        ld = None
        for p, c in zip(self.parts, cs):
            step = p.logdet(c, theta)
            theta = p.fwd(c, theta)[0]
            ld = step if ld is None else ld + step
        return ld

    def inverse_values(self, c_vals, y) -> np.ndarray:
        for p, c in zip(reversed(self.parts), reversed(c_vals)):
            y = p.inverse_values(c, y)
        return np.asarray(y)


# -- inversion helpers ---------------------------------------------------------


def bisect_lift(family, c_vals, y) -> np.ndarray:
    """Invert y = wrap(lift(theta)) by bisection on [0, 2pi].

    Monotonicity of the lift guarantees a bracket; the defensive check
    raises NoBracketError if numeric params ever break it.
    """
    y = np.atleast_1d(np.asarray(y, dtype=np.float64))
    l0 = np.asarray(family.lift(c_vals, np.zeros(1)), dtype=np.float64)
    target = l0 + fx.wrap_half_open(y - l0)
    lo = np.zeros(y.shape)
    hi = np.full(y.shape, TWO_PI)
    flo = np.asarray(family.lift(c_vals, lo)) - target
    fhi = np.asarray(family.lift(c_vals, hi)) - target
    if np.any(flo > 1e-9) or np.any(fhi < -1e-9):
        raise NoBracketError("monotone lift failed to bracket the target")
    for _ in range(BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        fm = np.asarray(family.lift(c_vals, mid)) - target
        take_hi = fm >= 0.0
        hi = np.where(take_hi, mid, hi)
        lo = np.where(take_hi, lo, mid)
        if np.max(hi - lo) < BISECT_TOL:
            break
    out = 0.5 * (lo + hi)
    # endpoints are often exact fixed points; return them exactly when hit
    out = np.where(flo == 0.0, 0.0, out)
    out = np.where(fhi == 0.0, TWO_PI, out)
    return out


def circle_inverse(family, c, y):
    """Inverse through any circle family; differentiable when on tape.

    Numeric roots come from the family's own inverse (analytic or
    bisection). On tape the preimage is reconnected by one implicit-function
    Newton step, so gradients flow with 1/f' at the located preimage rather
    than through the iteration.
    """
    if isinstance(family, Compose):
        for p, ci in zip(reversed(family.parts), reversed(c)):
            y = circle_inverse(p, ci, y)
        return y
    tape = _tape_of_params(c)
    c_vals = detach(c)
    u0 = family.inverse_values(c_vals, fx.values(y))
    if tape is None and not isinstance(y, Var):
        return u0
    if tape is None:
        tape = y.tape
        c = c_vals
    u0c = tape.const(np.broadcast_to(np.asarray(u0), (tape.width,)))
    l0 = family.lift(c, tape.const(0.0))
    y_v = y if isinstance(y, Var) else tape.const(y)
    target = l0 + fx.wrap_half_open(y_v - l0)
    fprime = fx.exp(family.logdet(c, u0c))
    return u0c + (target - family.lift(c, u0c)) / fprime
