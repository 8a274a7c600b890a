"""Invariant suites behind `maniflow verify`: boundary conditions, inverse
roundtrips, density normalization, gradient checks, analytic equivalences.

Each suite returns (check name, passed, detail) tuples; the CLI renders
them as a table. Tolerances are fixed here, not configurable.
"""

from __future__ import annotations

import math

import numpy as np

from . import fx
from .circle import (CircularSpline, Fourier, Mobius, MobiusC, Ncp, detach)
from .engine import Tape
from .interval import IntervalSpline
from .sphere import ExpMapFlow, make_recursive_flow, uniform_sphere
from .targets import make_target
from .torus import ProductManifold, alternating_flow, chunked_log_prob

TWO_PI = 2.0 * math.pi


def _families():
    return {
        "mobius": Mobius(5),
        "cs": CircularSpline(12),
        "ncp": Ncp(3),
        "fourier": Fourier([1, 1, 2, 2, 3]),
    }


def _draw(fam, rng, scale=1.0, zero_phase=False):
    raw = rng.normal(size=fam.n_params) * scale
    if zero_phase:
        if isinstance(fam, Fourier):
            raw[2 * fam.K + 1:] = 0.0
        else:
            raw[-1] = 0.0
    return raw


def _flow_test_params(flow, rng, bias_scale=0.4, weight_scale=0.02):
    p = flow.init_params(rng) + rng.normal(size=flow.n_params) * weight_scale
    for layer, (lo, hi) in zip(flow.layers, flow.slices):
        p[hi - layer.out_dim:hi] += rng.normal(size=layer.out_dim) * bias_scale
    return p


def suite_boundary(rng=None):
    rng = rng or np.random.default_rng(0)
    out = []
    grid = np.linspace(0, TWO_PI, 4096)
    for name, fam in _families().items():
        worst_end = worst_deriv = 0.0
        monotone = True
        for _ in range(100):
            c = fam.constrain(_draw(fam, rng, zero_phase=True))
            o, ld = fam.fwd(c, np.array([0.0, TWO_PI]))
            worst_end = max(worst_end, abs(o[0]), abs(o[1] - TWO_PI))
            worst_deriv = max(worst_deriv, abs(np.exp(ld[0]) - np.exp(ld[1])))
            if not np.all(np.isfinite(np.asarray(fam.logdet(c, grid)))):
                monotone = False
        out.append((f"boundary.{name}.endpoints", worst_end < 1e-9, f"max={worst_end:.2e}"))
        out.append((f"boundary.{name}.matched_derivative", worst_deriv < 1e-8,
                    f"max={worst_deriv:.2e}"))
        out.append((f"boundary.{name}.positive_derivative", monotone, "finite log-det"))
    return out


def suite_roundtrip(rng=None):
    rng = rng or np.random.default_rng(1)
    out = []
    for name, fam in _families().items():
        tol = 1e-10 if name == "cs" else 1e-9
        worst = 0.0
        for _ in range(20):
            c = fam.constrain(_draw(fam, rng))
            th = rng.uniform(0, TWO_PI, size=10_000)
            y, _ = fam.fwd(c, th)
            back = fam.inverse_values(detach(c), np.asarray(y))
            d = np.abs(back - th) % TWO_PI
            worst = max(worst, np.minimum(d, TWO_PI - d).max())
        out.append((f"roundtrip.{name}", worst < tol, f"max={worst:.2e} tol={tol:g}"))
    ifam = IntervalSpline(8)
    worst = 0.0
    for _ in range(20):
        c = ifam.constrain(rng.normal(size=ifam.n_params) * 1.5)
        t = rng.uniform(-1, 1, size=10_000)
        y, _ = ifam.fwd(c, t)
        worst = max(worst, np.abs(ifam.inverse_values(detach(c), np.asarray(y)) - t).max())
    out.append(("roundtrip.interval", worst < 1e-10, f"max={worst:.2e}"))

    flow = alternating_flow(ProductManifold.torus(2), 4, "mobius", 3)
    p = _flow_test_params(flow, rng)
    x = [rng.uniform(0, TWO_PI, 1000), rng.uniform(0, TWO_PI, 1000)]
    u, _ = flow.inverse(p, x)
    x2, _ = flow.forward(p, u)
    worst = max(np.abs(np.asarray(a) - np.asarray(b)).max() for a, b in zip(x, x2))
    out.append(("roundtrip.torus_stack", worst < 1e-8, f"max={worst:.2e}"))
    return out


def suite_normalization(rng=None):
    rng = rng or np.random.default_rng(2)
    out = []
    y = np.linspace(0, TWO_PI, 4096)
    for name, fam in _families().items():
        scale = 0.45 if name == "cs" else 1.0
        worst = 0.0
        for _ in range(10):
            c = fam.constrain(_draw(fam, rng, scale))
            th = fam.inverse_values(detach(c), y)
            q = (1 / TWO_PI) / np.exp(np.asarray(fam.logdet(c, th)))
            worst = max(worst, abs(np.trapezoid(q, y) - 1.0))
        out.append((f"normalization.s1.{name}", worst < 1e-4, f"max={worst:.2e}"))

    n = 512
    g = (np.arange(n) + 0.5) * TWO_PI / n
    G1, G2 = np.meshgrid(g, g, indexing="ij")
    grid = [G1.ravel(), G2.ravel()]
    for name in ("mobius", "cs", "ncp", "fourier"):
        flow = alternating_flow(ProductManifold.torus(2), 1, name,
                                8 if name == "cs" else 3)
        p = _flow_test_params(flow, rng)
        lp = chunked_log_prob(flow, p, grid)
        err = abs(np.exp(lp).sum() * (TWO_PI / n) ** 2 - 1.0)
        out.append((f"normalization.t2.{name}", err < 1e-3, f"err={err:.2e}"))

    flow = make_recursive_flow(2, 1, "mobius", K_m=6, K_s=8)
    p = flow.init_params(rng) + rng.normal(size=flow.n_params) * 0.02
    n_lon, n_lat = 400, 200
    lam = (np.arange(n_lon) + 0.5) * TWO_PI / n_lon
    psi = (np.arange(n_lat) + 0.5) * np.pi / n_lat
    L, P = np.meshgrid(lam, psi, indexing="ij")
    x = [np.sin(P.ravel()) * np.cos(L.ravel()),
         np.sin(P.ravel()) * np.sin(L.ravel()), np.cos(P.ravel())]
    lp = chunked_log_prob(flow, p, x)
    Z = (np.exp(lp) * np.sin(P.ravel())).sum() * (TWO_PI / n_lon) * (np.pi / n_lat)
    out.append(("normalization.s2.recursive", abs(Z - 1.0) < 1e-2, f"err={abs(Z-1):.2e}"))
    return out


def _grad_check(flow, sample_fn, loss_np, p, rng, n_coords=20, tol=1e-3):
    t = Tape(width=8)
    pv = t.leaves(p)
    loss = sample_fn(pv, t)
    g = t.backward(loss, seed=np.full(8, 1 / 8))
    h = 1e-5
    worst = 0.0
    for j in rng.choice(flow.n_params, size=min(n_coords, flow.n_params), replace=False):
        d = np.zeros_like(p)
        d[j] = h
        fd = (loss_np(p + d) - loss_np(p - d)) / (2 * h)
        if abs(fd) < 1e-7:
            worst = max(worst, abs(g[j] - fd) / 1e-4)
        else:
            worst = max(worst, abs(g[j] - fd) / abs(fd))
    return worst, worst < tol


def suite_gradcheck(rng=None):
    rng = rng or np.random.default_rng(3)
    out = []
    # primitive spot checks (the full 1000-draw sweep lives in the tests)
    h = 1e-6
    names = {"sin": (np.sin, (-3, 3)), "exp": (np.exp, (-2, 2)), "log": (np.log, (0.2, 4)),
             "atan": (np.arctan, (-4, 4)), "tanh": (np.tanh, (-3, 3)),
             "sqrt": (np.sqrt, (0.2, 4))}
    worst = 0.0
    for name, (f, (lo, hi)) in names.items():
        for _ in range(100):
            v = rng.uniform(lo, hi)
            t = Tape()
            g = t.backward(fx.record(name, t.leaf(v)))[0]
            fd = (f(v + h) - f(v - h)) / (2 * h)
            rel = abs(g - fd) / max(abs(fd), 1e-6)
            worst = max(worst, rel)
    out.append(("gradcheck.primitives", worst < 1e-4, f"max rel={worst:.2e}"))

    target = make_target("t2_unimodal")
    flow = alternating_flow(ProductManifold.torus(2), 2, "mobius", 2)
    p = _flow_test_params(flow, rng)

    def torus_loss(pv, t):
        x, logq = flow.sample_on_tape(pv, t, np.random.default_rng(0))
        return logq + target.beta * target.energy(x)

    def torus_loss_np(pp):
        x, logq = flow.sample(pp, 8, np.random.default_rng(0))
        u = np.asarray(fx.values(target.energy(x)))
        return float(np.mean(np.asarray(logq) + target.beta * u))

    worst, ok = _grad_check(flow, torus_loss, torus_loss_np, p, rng)
    out.append(("gradcheck.torus_kl", ok, f"max rel={worst:.2e}"))

    targ2 = make_target("s2_mix4")
    rec = make_recursive_flow(2, 1, "mobius", K_m=3, K_s=5)
    p2 = rec.init_params(rng) + rng.normal(size=rec.n_params) * 0.05

    def rec_loss(pv, t):
        x, logq = rec.sample_on_tape(pv, t, np.random.default_rng(1))
        return logq + targ2.energy(x)

    def rec_loss_np(pp):
        x, logq = rec.sample(pp, 8, np.random.default_rng(1))
        return float(np.mean(np.asarray(logq) + np.asarray(fx.values(targ2.energy(x)))))

    worst, ok = _grad_check(rec, rec_loss, rec_loss_np, p2, rng)
    out.append(("gradcheck.recursive_kl", ok, f"max rel={worst:.2e}"))

    em = ExpMapFlow(2, 2, "radial", K=2)
    p3 = em.init_params(rng) + rng.normal(size=em.n_params) * 0.3

    def em_loss(pv, t):
        x, logq = em.sample_on_tape(pv, t, np.random.default_rng(2))
        return logq + targ2.energy(x)

    def em_loss_np(pp):
        x, logq = em.sample(pp, 8, np.random.default_rng(2))
        return float(np.mean(np.asarray(logq) + np.asarray(fx.values(targ2.energy(x)))))

    worst, ok = _grad_check(em, em_loss, em_loss_np, p3, rng)
    out.append(("gradcheck.expmap_kl", ok, f"max rel={worst:.2e}"))
    return out


def suite_equivalence(rng=None):
    rng = rng or np.random.default_rng(4)
    out = []
    ncp = Ncp(1)
    th = np.linspace(1e-3, TWO_PI - 1e-3, 1000)
    worst = 0.0
    for _ in range(20):
        a1, a2 = np.exp(rng.normal(size=2) * 0.7)
        b1, b2 = rng.normal(size=2)
        inner, _ = ncp.fwd(Ncp.from_components([a2], [b2]), th)
        lhs, _ = ncp.fwd(Ncp.from_components([a1], [b1]), np.asarray(inner))
        rhs, _ = ncp.fwd(Ncp.from_components([a1 * a2], [b1 + a1 * b2]), th)
        d = np.abs(np.asarray(lhs) - np.asarray(rhs)) % TWO_PI
        worst = max(worst, np.minimum(d, TWO_PI - d).max())
    out.append(("equivalence.ncp_composition", worst < 1e-12, f"max={worst:.2e}"))

    mob = Mobius(1)
    grid = np.linspace(0, TWO_PI, 1024)
    worst = 0.0
    for alpha in (0.2, 0.5, 1.0, 2.0, 5.0):
        a = (1 - alpha) / (1 + alpha)
        on, _ = ncp.fwd(Ncp.from_components([alpha], [0.0]), grid)
        om, _ = mob.fwd(MobiusC(ox=[a], oy=[0.0], rho=[1.0], phase=0.0), grid)
        d = np.abs(np.asarray(on) - np.asarray(om)) % TWO_PI
        worst = max(worst, np.minimum(d, TWO_PI - d).max())
    out.append(("equivalence.ncp_mobius", worst < 1e-9, f"max={worst:.2e}"))

    from .sphere import cylinder_to_sphere
    _, corr = cylinder_to_sphere([np.array([1.0]), np.array([0.0])], np.array([0.7]))
    ok = float(np.asarray(corr)[0]) == 0.0
    out.append(("equivalence.c2s_correction_d2", ok, "log-correction is 0"))

    finite = True
    for _ in range(20):
        flow = make_recursive_flow(3, 1, "mobius", K_m=3, K_s=4)
        p = flow.init_params(rng) + rng.normal(size=flow.n_params) * 0.05
        for sgn in (1.0, -1.0):
            r = sgn * (1.0 - 1e-7)
            s = np.sqrt(1 - r * r)
            x = [np.array([0.6 * s]), np.array([0.8 * s]), np.array([0.0]), np.array([r])]
            if not np.all(np.isfinite(np.asarray(flow.log_prob(p, x)))):
                finite = False
    out.append(("equivalence.s3_pole_finite", finite, "log q finite at |r|=1-1e-7"))
    return out


SUITES = {
    "boundary": suite_boundary,
    "roundtrip": suite_roundtrip,
    "normalization": suite_normalization,
    "gradcheck": suite_gradcheck,
    "equivalence": suite_equivalence,
}


def run_suite(name: str):
    if name == "all":
        out = []
        for key in sorted(SUITES):
            out.extend(SUITES[key]())
        return out
    if name not in SUITES:
        raise KeyError(name)
    return SUITES[name]()
