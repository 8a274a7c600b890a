"""Flows on spheres.

Two constructions:

* Recursive: unroll S^D into the coordinate space S^1 x [-1,1]^(D-1)
  (angle plus one height per level), run stacked autoregressive blocks
  there, and map back. The cylinder volume factors (1-r^2)^(d/2-1) from
  the two projections are combined into one ratio per level so nothing
  singular is ever evaluated: near the poles the ratio tends to the
  height map's endpoint slope, which is strictly positive by construction.

* Exponential map: move each point along the geodesic of the tangential
  gradient of a scalar field (sum-of-radial or polynomial). The density
  update is the volume of the parallelepiped spanned by the pushed-forward
  tangent basis, det(E^T J^T J E)^(1/2), with the ambient Jacobian J
  assembled analytically; cost O(D^3) per point.

Points are lists of D+1 ambient coordinates (lane vectors or tape Vars).
"""

from __future__ import annotations

import math

import numpy as np

from . import fx
from .circle import detach
from .errors import PoleError
from .interval import IntervalSpline
from .nn import mlp_forward, mlp_init, mlp_param_count, mlp_sizes
from .torus import INIT_JITTER, make_transformer, transformer_inverse

TWO_PI = 2.0 * math.pi
POLE_GUARD = 1e-12


def sphere_area(D: int) -> float:
    return 2.0 * math.pi ** ((D + 1) / 2.0) / math.gamma((D + 1) / 2.0)


def uniform_sphere(D: int, n: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Uniform points via normalized Gaussians; the Gaussians come from
    Box-Muller on the uniform stream so the draw order is fixed."""
    n_coords = D + 1
    n_pairs = (n_coords + 1) // 2
    u1 = np.clip(rng.uniform(size=(n_pairs, n)), 1e-300, None)
    u2 = rng.uniform(size=(n_pairs, n))
    rad = np.sqrt(-2.0 * np.log(u1))
    g = np.empty((2 * n_pairs, n))
    g[0::2] = rad * np.cos(TWO_PI * u2)
    g[1::2] = rad * np.sin(TWO_PI * u2)
    g = g[:n_coords]
    norm = np.sqrt((g**2).sum(axis=0))
    return [g[i] / norm for i in range(n_coords)]


def sphere_to_cylinder(x):
    """(z, r) with z = x_{1..D} / sqrt(1 - r^2), r = the last coordinate.

    Poles are excluded: the base direction is undefined there.
    """
    r = x[-1]
    rv = fx.values(r)
    if np.any(np.abs(rv) >= 1.0 - POLE_GUARD):
        raise PoleError("cylinder projection undefined at the poles")
    s = fx.sqrt((1.0 - r) * (1.0 + r))
    return [xi / s for xi in x[:-1]], r


def cylinder_to_sphere(z, r, D: int | None = None):
    """Back to the sphere; returns the point and the log volume correction
    -(D/2 - 1) log(1 - r^2) that multiplies a log-density moved through."""
    if D is None:
        D = len(z)
    rv = np.atleast_1d(fx.values(r))
    if D > 2 and np.any(np.abs(rv) >= 1.0):
        raise PoleError("volume correction diverges at the poles for D > 2")
    s = fx.sqrt((1.0 - r) * (1.0 + r))
    x = [zi * s for zi in z] + [r]
    if D == 2:
        corr = 0.0 * r
    else:
        corr = -(D / 2.0 - 1.0) * fx.log((1.0 - r) * (1.0 + r))
    return x, corr


def tangent_basis(x):
    """D orthonormal tangent vectors at unit x, as columns.

    Householder reflection carrying e_1 to x, applied to e_2..e_{D+1}:
    column j has entries delta_ij - w_i w_j / (1 - x_1) with w = x - e_1.
    Near x ~ e_1 the difference 1 - x_1 cancels badly, so there it is
    computed as sum_{i>=2} x_i^2 / (1 + x_1); exactly at e_1 the basis
    falls back to e_2..e_{D+1}.
    """
    n = len(x)
    x1v = np.atleast_1d(fx.values(x[0]))
    degenerate = 1.0 - x1v < 1e-12
    tail = fx.dot(x[1:], x[1:])
    stable = tail / (1.0 + fx.maximum(x[0], 0.0))
    denom = fx.where(x1v >= 0.0, stable, 1.0 - x[0])
    denom = fx.maximum(denom, 1e-300)
    cols = []
    for j in range(1, n):
        col = []
        for i in range(n):
            w_i = x[i] - 1.0 if i == 0 else x[i]
            formula = (1.0 if i == j else 0.0) - w_i * x[j] / denom
            if degenerate.any():
                formula = fx.where(degenerate, 1.0 if i == j else 0.0, formula)
            col.append(formula)
        cols.append(col)
    return cols


# -- recursive construction ---------------------------------------------------


class ConditionedBlock:
    """One transformer (height spline or circle family) whose parameters are
    either free leaves (no conditioners) or an MLP of the conditioning
    coordinates."""

    def __init__(self, family, n_cond: int):
        self.family = family
        self.n_cond = n_cond
        if n_cond > 0 and family.n_params > 0:
            self.sizes = mlp_sizes(n_cond, family.n_params)
            self.n_params = mlp_param_count(self.sizes)
        else:
            self.sizes = None
            self.n_params = family.n_params

    def _identity_bias(self, rng) -> np.ndarray:
        from .circle import Fourier
        if isinstance(self.family, Fourier):
            raw = self.family.identity_raw(rng)
        else:
            raw = self.family.identity_raw()
        return raw + rng.normal(0.0, INIT_JITTER, size=raw.shape)

    def init_params(self, rng: np.random.Generator) -> np.ndarray:
        if self.sizes is None:
            return self._identity_bias(rng) if self.n_params else np.zeros(0)
        return mlp_init(self.sizes, rng, final_bias=self._identity_bias(rng))

    def constrained(self, p, cond):
        if self.sizes is None:
            return self.family.constrain(list(p))
        return self.family.constrain(mlp_forward(p, self.sizes, cond))


class RecursiveSphereFlow:
    """Stacked autoregressive passes on the unrolled sphere coordinates.

    Each pass transforms heights top level down (level D first, free; lower
    levels conditioned on previously transformed heights) and finally the
    angle, conditioned on all transformed heights.
    """

    def __init__(self, D: int, passes, elide_internal: bool = True):
        if D < 2:
            raise ValueError("recursive sphere flows need D >= 2")
        self.D = D
        self.passes = list(passes)  # each: (OrderedDict {level d -> block}, circle block)
        self.elide_internal = elide_internal
        self.slices = []
        ofs = 0
        for heights, circle in self.passes:
            for d in sorted(heights, reverse=True):
                self.slices.append((ofs, ofs + heights[d].n_params))
                ofs += heights[d].n_params
            self.slices.append((ofs, ofs + circle.n_params))
            ofs += circle.n_params
        self.n_params = ofs
        self.log_base = -math.log(sphere_area(D))

    def init_params(self, rng: np.random.Generator) -> np.ndarray:
        parts = []
        for heights, circle in self.passes:
            for d in sorted(heights, reverse=True):
                parts.append(heights[d].init_params(rng))
            parts.append(circle.init_params(rng))
        return np.concatenate(parts) if parts else np.zeros(0)

    def _blocks_with_slices(self):
        i = 0
        for heights, circle in self.passes:
            hs = []
            for d in sorted(heights, reverse=True):
                hs.append((d, heights[d], self.slices[i]))
                i += 1
            yield hs, circle, self.slices[i]
            i += 1

    def _cylinder_of(self, x):
        """Unrolled coordinates (theta, {d: r_d}) of ambient points."""
        v = list(x)
        heights = {}
        for d in range(self.D, 1, -1):
            r = v[d]
            rv = fx.values(r)
            if np.any(np.abs(np.atleast_1d(rv)) > 1.0 - POLE_GUARD):
                r = fx.minimum(fx.maximum(r, -(1.0 - POLE_GUARD)), 1.0 - POLE_GUARD)
            heights[d] = r
            s = fx.sqrt((1.0 - r) * (1.0 + r))
            v = [v[i] / s for i in range(d)]
        theta = fx.wrap_half_open(fx.atan2(v[1], v[0]))
        return theta, heights

    def _sphere_of(self, theta, heights):
        v = [fx.cos(theta), fx.sin(theta)]
        for d in range(2, self.D + 1):
            r = heights[d]
            s = fx.sqrt((1.0 - r) * (1.0 + r))
            v = [vi * s for vi in v] + [r]
        return v

    @staticmethod
    def _log_onem2(r):
        return fx.log((1.0 - r) * (1.0 + r))

    def _ratio_term(self, first_in, last_out):
        total = None
        for d in range(3, self.D + 1):
            coef = d / 2.0 - 1.0
            term = coef * (self._log_onem2(first_in[d]) - self._log_onem2(last_out[d]))
            total = term if total is None else total + term
        return total

    def forward_cylinder(self, p, theta, heights):
        """All passes on unrolled coordinates; returns outputs and the log-det
        sum (excluding cylinder volume ratios)."""
        ld = None
        ratio = None
        prev_out = dict(heights)
        for hs, circle, csl in self._blocks_with_slices():
            pass_in = dict(prev_out)
            cond = []
            for d, block, (lo, hi) in hs:
                c = block.constrained(p[lo:hi], cond)
                out, step = block.family.fwd(c, prev_out[d])
                prev_out[d] = out
                cond = cond + [out]
                ld = step if ld is None else ld + step
            c = circle.constrained(p[csl[0]:csl[1]], cond)
            theta, step = circle.family.fwd(c, theta)
            ld = ld + step if ld is not None else step
            if not self.elide_internal:
                term = self._ratio_term(pass_in, prev_out)
                if term is not None:
                    ratio = term if ratio is None else ratio + term
        if self.elide_internal:
            ratio = self._ratio_term(heights, prev_out)
        return theta, prev_out, ld, ratio

    def inverse_cylinder(self, p, theta, heights):
        """Reverse pass: returns preimages and the forward log-det at them."""
        ld = None
        ratio = None
        cur = dict(heights)
        all_blocks = list(self._blocks_with_slices())
        for hs, circle, csl in reversed(all_blocks):
            pass_out = dict(cur)
            cond = [cur[d] for d, _, _ in hs]
            c = circle.constrained(p[csl[0]:csl[1]], cond)
            u = transformer_inverse(circle.family, c, theta)
            step = circle.family.logdet(c, u)
            ld = step if ld is None else ld + step
            theta = u
            for d, block, (lo, hi) in reversed(hs):
                cond = [cur[dd] for dd, _, _ in hs if dd > d]
                c = block.constrained(p[lo:hi], cond)
                u = transformer_inverse(block.family, c, cur[d])
                _, step = block.family.fwd(c, u)
                ld = ld + step
                cur[d] = u
            if not self.elide_internal:
                term = self._ratio_term(cur, pass_out)
                if term is not None:
                    ratio = term if ratio is None else ratio + term
        if self.elide_internal:
            ratio = self._ratio_term(cur, heights)
        return theta, cur, ld, ratio

    def log_prob(self, p, x):
        """log q at ambient points; finite all the way to the pole guard."""
        from .errors import DomainError
        nrm = np.asarray(fx.values(fx.dot(x, x)))
        if np.any(np.abs(nrm - 1.0) > 2e-9):
            raise DomainError("point not on the unit sphere")
        theta, heights = self._cylinder_of(x)
        _, _, ld, ratio = self.inverse_cylinder(p, theta, heights)
        out = self.log_base - ld
        if ratio is not None:
            out = out + ratio
        return out

    def sample(self, p, n: int, rng: np.random.Generator):
        if n == 0:
            return [np.zeros(0) for _ in range(self.D + 1)], np.zeros(0)
        u = uniform_sphere(self.D, n, rng)
        return self._push(p, u)

    def sample_on_tape(self, p, tape, rng: np.random.Generator):
        u = [tape.const(c) for c in uniform_sphere(self.D, tape.width, rng)]
        return self._push(p, u)

    def _push(self, p, u):
        theta, heights = self._cylinder_of(u)
        theta2, heights2, ld, ratio = self.forward_cylinder(p, theta, heights)
        x = self._sphere_of(theta2, heights2)
        logq = self.log_base - ld
        if ratio is not None:
            logq = logq + ratio
        return x, logq


def make_recursive_flow(D: int, n_passes: int, circle_family: str = "mobius",
                        K_m: int = 12, K_s: int = 32,
                        elide_internal: bool = True) -> RecursiveSphereFlow:
    """Standard stack: top-level height free, lower heights and the circle
    conditioned on everything transformed before them."""
    passes = []
    for _ in range(n_passes):
        heights = {}
        for d in range(D, 1, -1):
            heights[d] = ConditionedBlock(IntervalSpline(K_s), n_cond=D - d)
        circle = ConditionedBlock(
            make_transformer(("circle",), circle_family, K_m), n_cond=D - 1)
        passes.append((heights, circle))
    return RecursiveSphereFlow(D, passes, elide_internal=elide_internal)


# -- exponential-map flows -----------------------------------------------------


class RadialField:
    """Sum of radial bumps: phi = sum_i (a_i / b_i) exp(b_i (x.mu_i - 1)),
    a_i >= 0 and sum a_i < 1 via a slack softmax unit, b_i > 0."""

    def __init__(self, D: int, K: int):
        self.D = D
        self.K = K
        self.n_params = K * (D + 1) + K + (K + 1)

    def identity_raw(self, rng: np.random.Generator) -> np.ndarray:
        raw = rng.normal(size=self.n_params)
        K, D = self.K, self.D
        raw[K * (D + 1):K * (D + 2)] = 0.54  # softplus ~ 1: moderate widths
        logits = np.full(K + 1, -2.0)
        logits[-1] = 2.0  # slack soaks the mass: weights start near zero
        raw[K * (D + 2):] = logits
        return raw

    def constrain(self, p):
        K, D = self.K, self.D
        mu = []
        for i in range(K):
            w = [p[i * (D + 1) + j] for j in range(D + 1)]
            nrm = fx.sqrt(fx.dot(w, w))
            mu.append([wj / nrm for wj in w])
        beta = [1e-3 + fx.softplus(p[K * (D + 1) + i]) for i in range(K)]
        alpha = fx.softmax(list(p[K * (D + 2):]))[:K]
        return mu, beta, alpha

    def phi_grad_hess(self, c, x):
        """Scalar value, ambient gradient, ambient Hessian (as column action)."""
        mu, beta, alpha = c
        phi = None
        grad = [None] * (self.D + 1)
        coefs = []  # per component: alpha_i exp(beta_i (x.mu - 1)) for the Hessian
        for i in range(self.K):
            dotp = fx.dot(x, mu[i])
            e = fx.exp(beta[i] * (dotp - 1.0))
            term = alpha[i] / beta[i] * e
            phi = term if phi is None else phi + term
            coef = alpha[i] * e
            coefs.append(coef * beta[i])
            for j in range(self.D + 1):
                g = coef * mu[i][j]
                grad[j] = g if grad[j] is None else grad[j] + g
        def hess_entry(j, k):
            out = None
            for i in range(self.K):
                t = coefs[i] * mu[i][j] * mu[i][k]
                out = t if out is None else out + t
            return out
        return phi, grad, hess_entry


class PolynomialField:
    """phi = mu.x + x.Ax with elementwise l1 budget |mu|_1 + |A|_1 <= 1."""

    def __init__(self, D: int):
        self.D = D
        n = D + 1
        self.n_params = n + n * (n + 1) // 2

    def identity_raw(self, rng: np.random.Generator) -> np.ndarray:
        return rng.normal(size=self.n_params) * INIT_JITTER

    def _upper(self):
        n = self.D + 1
        return [(i, j) for i in range(n) for j in range(i, n)]

    def constrain(self, p):
        n = self.D + 1
        total = None
        for i, v in enumerate(p):
            w = abs(v)
            pos = self._upper()[i - n] if i >= n else None
            if pos is not None and pos[0] != pos[1]:
                w = 2.0 * w  # symmetric off-diagonal entries count twice
            total = w if total is None else total + w
        scale = 1.0 / (1.0 + total)
        mu = [p[i] * scale for i in range(n)]
        A = [[None] * n for _ in range(n)]
        for idx, (i, j) in enumerate(self._upper()):
            A[i][j] = p[n + idx] * scale
            A[j][i] = A[i][j]
        return mu, A

    def phi_grad_hess(self, c, x):
        mu, A = c
        n = self.D + 1
        ax = [fx.dot(A[i], x) for i in range(n)]
        phi = fx.dot(mu, x) + fx.dot(x, ax)
        grad = [mu[i] + 2.0 * ax[i] for i in range(n)]
        def hess_entry(j, k):
            return 2.0 * A[j][k]
        return phi, grad, hess_entry


def expmap_phi(field, c, x):
    """Scalar field value and its ambient gradient at x."""
    phi, grad, _ = field.phi_grad_hess(c, x)
    return phi, grad


def _tangential(x, grad):
    n = len(x)
    xg = fx.dot(x, grad)
    return [grad[i] - x[i] * xg for i in range(n)]


def expmap_fwd(field, c, x, renormalize: bool = True):
    """Geodesic step along the tangential gradient; stays on the sphere."""
    grad = expmap_phi(field, c, x)[1]
    v = _tangential(x, grad)
    n2 = fx.dot(v, v)
    n2v = np.atleast_1d(fx.values(n2))
    small = n2v < 1e-24
    nrm = fx.sqrt(fx.maximum(n2, 1e-300))
    cosn, sinc = fx.cos(nrm), fx.sin(nrm) / nrm
    out = []
    for i in range(len(x)):
        main = x[i] * cosn + v[i] * sinc
        out.append(fx.where(small, x[i] + v[i], main) if small.any() else main)
    if renormalize:
        nrm_out = fx.sqrt(fx.dot(out, out))
        out = [oi / nrm_out for oi in out]
    return out


def expmap_jacobian(field, c, x):
    """Ambient (D+1)x(D+1) Jacobian of the extended map, entry lists."""
    n = len(x)
    phi, grad, hess = field.phi_grad_hess(c, x)
    xg = fx.dot(x, grad)
    hx = [fx.dot([hess(i, k) for k in range(n)], x) for i in range(n)]
    v = [grad[i] - x[i] * xg for i in range(n)]
    # dv/dx = H - (x.g) I - x (g + Hx)^T
    A = [[hess(i, j) - (xg if i == j else 0.0) - x[i] * (grad[j] + hx[j])
          for j in range(n)] for i in range(n)]
    n2 = fx.dot(v, v)
    n2v = np.atleast_1d(fx.values(n2))
    small = n2v < 1e-24
    nrm = fx.sqrt(fx.maximum(n2, 1e-300))
    u = [v[i] / nrm for i in range(n)]
    cosn, sinn = fx.cos(nrm), fx.sin(nrm)
    sinc = sinn / nrm
    uA = [fx.dot(u, [A[i][j] for i in range(n)]) for j in range(n)]
    J = []
    for i in range(n):
        row = []
        coef_i = (cosn - sinc) * u[i] - sinn * x[i]
        for j in range(n):
            main = (cosn if i == j else 0.0) + sinc * A[i][j] + coef_i * uA[j]
            if small.any():
                lim = (1.0 if i == j else 0.0) + A[i][j]
                main = fx.where(small, lim, main)
            row.append(main)
        J.append(row)
    return J


def _det(m):
    d = len(m)
    if d == 1:
        return m[0][0]
    if d == 2:
        return m[0][0] * m[1][1] - m[0][1] * m[1][0]
    if d == 3:
        return (m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]))
    raise ValueError("determinant implemented for D <= 3")


def expmap_logdet_factor(field, c, x):
    """-0.5 log det(E^T J^T J E): one transform's log-density update."""
    n = len(x)
    J = expmap_jacobian(field, c, x)
    E = tangent_basis(x)
    JE = [[fx.dot([J[i][k] for k in range(n)], col) for col in E] for i in range(n)]
    D = len(E)
    gram = [[fx.dot([JE[i][a] for i in range(n)], [JE[i][b] for i in range(n)])
             for b in range(D)] for a in range(D)]
    return -0.5 * fx.log(_det(gram))


class ExpMapFlow:
    """Stack of exponential-map transforms; sampling-path density only."""

    def __init__(self, D: int, n_transforms: int, field: str = "radial", K: int = 1):
        self.D = D
        self.n_transforms = n_transforms
        if field == "radial":
            self.fields = [RadialField(D, K) for _ in range(n_transforms)]
        elif field == "polynomial":
            self.fields = [PolynomialField(D) for _ in range(n_transforms)]
        else:
            raise ValueError(f"unknown scalar field '{field}'")
        self.slices = []
        ofs = 0
        for f in self.fields:
            self.slices.append((ofs, ofs + f.n_params))
            ofs += f.n_params
        self.n_params = ofs
        self.log_base = -math.log(sphere_area(D))

    def init_params(self, rng: np.random.Generator) -> np.ndarray:
        return np.concatenate([f.identity_raw(rng) for f in self.fields])

    def push_with_logdet(self, p, x):
        logdet = None
        for f, (lo, hi) in zip(self.fields, self.slices):
            c = f.constrain(p[lo:hi])
            term = expmap_logdet_factor(f, c, x)
            logdet = term if logdet is None else logdet + term
            x = expmap_fwd(f, c, x)
        return x, logdet

    def log_prob_of_sample(self, p, u):
        """Density of x = f(u) for base points u; returns (x, log q)."""
        x, logdet = self.push_with_logdet(p, u)
        logq = self.log_base + logdet if logdet is not None else self.log_base
        return x, logq

    def sample(self, p, n: int, rng: np.random.Generator):
        if n == 0:
            return [np.zeros(0) for _ in range(self.D + 1)], np.zeros(0)
        return self.log_prob_of_sample(p, uniform_sphere(self.D, n, rng))

    def sample_on_tape(self, p, tape, rng: np.random.Generator):
        u = [tape.const(ci) for ci in uniform_sphere(self.D, tape.width, rng)]
        return self.log_prob_of_sample(p, u)
