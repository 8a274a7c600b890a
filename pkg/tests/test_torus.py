"""Torus / product-manifold coupling flow tests."""

import numpy as np
import pytest
import scipy.stats

from maniflow import fx
from maniflow.errors import DomainError
from maniflow.torus import (ProductManifold, alternating_flow,
                            chunked_log_prob)

TWO_PI = 2 * np.pi


def test_params_draw(flow, rng, bias_scale=0.4, weight_scale=0.02):
    """Random-but-resolvable flow parameters: conditioner output biases get
    most of the noise so transformer sharpness stays quadrature-friendly."""
    p = flow.init_params(rng) + rng.normal(size=flow.n_params) * weight_scale
    for layer, (lo, hi) in zip(flow.layers, flow.slices):
        p[hi - layer.out_dim:hi] += rng.normal(size=layer.out_dim) * bias_scale
    return p


test_params_draw.__test__ = False


def exact_identity_params(flow, rng):
    """Init params with the identity bias and no jitter: the exact identity."""
    from maniflow.nn import mlp_init
    parts = []
    for layer in flow.layers:
        bias = np.concatenate([layer.transformers[i].identity_raw()
                               for i in layer.transformed])
        parts.append(bias if layer.sizes is None else mlp_init(layer.sizes, rng, final_bias=bias))
    return np.concatenate(parts)


def test_identity_flow_log_prob_uniform(rng):
    flow = alternating_flow(ProductManifold.torus(2), 2, "ncp", 1)
    p = exact_identity_params(flow, rng)
    pts = [rng.uniform(0, TWO_PI, 64), rng.uniform(0, TWO_PI, 64)]
    lp = flow.log_prob(p, pts)
    assert np.abs(np.asarray(lp) - (-2 * np.log(TWO_PI))).max() < 1e-12


@pytest.mark.parametrize("family,K", [("mobius", 3), ("cs", 8), ("ncp", 2), ("fourier", 3)])
def test_single_layer_quadrature(family, K, rng):
    flow = alternating_flow(ProductManifold.torus(2), 1, family, K)
    p = test_params_draw(flow, rng)
    n = 512
    g = (np.arange(n) + 0.5) * TWO_PI / n
    G1, G2 = np.meshgrid(g, g, indexing="ij")
    lp = chunked_log_prob(flow, p, [G1.ravel(), G2.ravel()])
    assert abs(np.exp(lp).sum() * (TWO_PI / n) ** 2 - 1.0) < 1e-3


def test_sample_log_prob_consistency(rng):
    flow = alternating_flow(ProductManifold.torus(2), 4, "mobius", 3)
    p = test_params_draw(flow, rng)
    x, logq = flow.sample(p, 2000, rng)
    lp = flow.log_prob(p, x)
    assert np.abs(np.asarray(lp) - np.asarray(logq)).max() < 1e-8


def test_identity_samples_uniform_ks():
    rng = np.random.default_rng(7)
    flow = alternating_flow(ProductManifold.torus(2), 2, "ncp", 1)
    p = flow.init_params(rng)  # near-identity (1e-3 jitter)
    x, _ = flow.sample(p, 100_000, rng)
    for axis in range(2):
        stat = scipy.stats.kstest(np.asarray(x[axis]) / TWO_PI, "uniform")
        assert stat.pvalue > 0.01


def test_sample_empty():
    rng = np.random.default_rng(0)
    flow = alternating_flow(ProductManifold.torus(2), 2, "ncp", 1)
    p = flow.init_params(rng)
    x, logq = flow.sample(p, 0, rng)
    assert len(logq) == 0
    assert all(len(np.asarray(c)) == 0 for c in x)


def test_inverse_roundtrip_four_layers(rng):
    flow = alternating_flow(ProductManifold.torus(2), 4, "cs", 6)
    p = test_params_draw(flow, rng)
    x = [rng.uniform(0, TWO_PI, 500), rng.uniform(0, TWO_PI, 500)]
    u, _ = flow.inverse(p, x)
    x2, _ = flow.forward(p, u)
    err = max(np.abs(np.asarray(a) - np.asarray(b)).max() for a, b in zip(x, x2))
    assert err < 1e-8


def test_masked_coordinates_pass_through(rng):
    flow = alternating_flow(ProductManifold.torus(2), 1, "mobius", 2)
    p = test_params_draw(flow, rng)
    x = [rng.uniform(0, TWO_PI, 100), rng.uniform(0, TWO_PI, 100)]
    layer = flow.layers[0]
    u, _ = layer.inverse(p, x)
    assert np.array_equal(np.asarray(u[layer.masked[0]]), np.asarray(x[layer.masked[0]]))
    y, _ = layer.forward(p, x)
    assert np.array_equal(np.asarray(y[layer.masked[0]]), np.asarray(x[layer.masked[0]]))


def test_mixed_product_with_interval(rng):
    mani = ProductManifold.cylinder_stack(1)  # circle x [-1, 1]
    flow = alternating_flow(mani, 2, "mobius", 3)
    p = test_params_draw(flow, rng)
    x, logq = flow.sample(p, 1000, rng)
    assert np.all(np.asarray(x[1]) >= -1) and np.all(np.asarray(x[1]) <= 1)
    lp = flow.log_prob(p, x)
    assert np.abs(np.asarray(lp) - np.asarray(logq)).max() < 1e-8
    # quadrature: 1024 x 512 grid
    g1 = (np.arange(1024) + 0.5) * TWO_PI / 1024
    g2 = -1 + (np.arange(512) + 0.5) * 2.0 / 512
    G1, G2 = np.meshgrid(g1, g2, indexing="ij")
    lp = chunked_log_prob(flow, p, [G1.ravel(), G2.ravel()])
    Z = np.exp(lp).sum() * (TWO_PI / 1024) * (2.0 / 512)
    assert abs(Z - 1.0) < 1e-3


def test_dimension_one_free_layer(rng):
    flow = alternating_flow(ProductManifold.torus(1), 2, "ncp", 2)
    assert all(layer.sizes is None for layer in flow.layers)
    p = test_params_draw(flow, rng)
    x, logq = flow.sample(p, 500, rng)
    lp = flow.log_prob(p, x)
    assert np.abs(np.asarray(lp) - np.asarray(logq)).max() < 1e-10


def test_log_prob_domain_error(rng):
    flow = alternating_flow(ProductManifold.torus(2), 2, "ncp", 1)
    p = flow.init_params(rng)
    with pytest.raises(DomainError):
        flow.log_prob(p, [np.array([7.0]), np.array([1.0])])


def test_log_prob_gradients_match_fd(rng, tape_cls):
    flow = alternating_flow(ProductManifold.torus(2), 2, "mobius", 2)
    p = test_params_draw(flow, rng)
    x = [rng.uniform(0.3, 6.0, 8), rng.uniform(0.3, 6.0, 8)]

    t = tape_cls(width=8)
    pv = t.leaves(p)
    lp = flow.log_prob(pv, [t.const(c) for c in x])
    g = t.backward(lp, seed=np.full(8, 1.0 / 8))

    def loss_np(pp):
        return float(np.mean(np.asarray(flow.log_prob(pp, x))))

    h = 1e-5
    idx = rng.choice(flow.n_params, size=40, replace=False)
    for j in idx:
        d = np.zeros_like(p)
        d[j] = h
        fd = (loss_np(p + d) - loss_np(p - d)) / (2 * h)
        if abs(fd) < 1e-7:
            assert abs(g[j] - fd) < 1e-7
        else:
            assert abs(g[j] - fd) / abs(fd) < 1e-3


def test_conditioner_periodicity_bit_identical(rng):
    # theta with exact float sum theta + 2pi: dyadic multiples keep the
    # wrapped embedding bitwise equal, so every downstream value matches
    flow = alternating_flow(ProductManifold.torus(2), 1, "cs", 6)
    p = test_params_draw(flow, rng)
    theta_masked = np.array([0.5, 0.25, 1.5, 3.0, 0.0625, 2.75])
    theta_free = rng.uniform(0, TWO_PI, size=6)
    y1, ld1 = flow.forward(p, [theta_masked, theta_free])
    y2, ld2 = flow.forward(p, [theta_masked + TWO_PI, theta_free])
    assert np.array_equal(np.asarray(y1[1]), np.asarray(y2[1]))
    assert np.array_equal(np.asarray(ld1), np.asarray(ld2))
