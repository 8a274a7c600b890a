"""Target energy tests: stated values, symmetries, independent
re-implementations."""

import math

import numpy as np
import pytest

from maniflow.targets import (ARM_LINK, ARM_TIP_CENTRES, S2_MIX_CENTRES,
                              S3_MIX_CENTRES, SPHERE_MIX_SHARPNESS,
                              VM_CORRELATED_PHI, VM_MIXTURE_PHI,
                              VM_UNIMODAL_PHI, make_target, robot_arm_tip,
                              sphere_mixture, spherical_to_euclidean,
                              uniform_log_base, vmf_samples)

TWO_PI = 2 * np.pi


def ev(target, coords):
    return np.asarray(target.energy([np.atleast_1d(np.asarray(c, dtype=float))
                                     for c in coords]))


def test_vm_unimodal_values():
    t = make_target("t2_unimodal")
    assert VM_UNIMODAL_PHI == (4.18, 5.96)
    assert ev(t, VM_UNIMODAL_PHI)[0] == pytest.approx(-2.0, abs=1e-14)
    shifted = (VM_UNIMODAL_PHI[0] + np.pi, VM_UNIMODAL_PHI[1] + np.pi)
    assert ev(t, shifted)[0] == pytest.approx(2.0, abs=1e-12)


def test_vm_mixture_values():
    t = make_target("t2_multimodal")
    assert VM_MIXTURE_PHI[0] == (0.21, 2.85)
    # at a mode centre the matching component contributes e^2
    u = ev(t, VM_MIXTURE_PHI[0])[0]
    assert u <= -math.log(math.exp(2.0) / 3.0) + 1e-12
    # global bounds from the cosine range
    rng = np.random.default_rng(0)
    pts = rng.uniform(0, TWO_PI, size=(2, 500))
    u = ev(t, [pts[0], pts[1]])
    assert np.all(u >= -math.log(3 * math.exp(2.0) / 3.0) - 1e-12)
    assert np.all(u <= -math.log(3 * math.exp(-2.0) / 3.0) + 1e-12)
    # permutation symmetry of components: independent reordering oracle
    def mixture_energy(th1, th2, order):
        terms = [np.cos(th1 - VM_MIXTURE_PHI[i][0]) + np.cos(th2 - VM_MIXTURE_PHI[i][1])
                 for i in order]
        m = max(terms)
        return -(m + np.log(sum(np.exp(x - m) for x in terms)) + np.log(1 / 3))
    assert mixture_energy(1.0, 2.0, [0, 1, 2]) == pytest.approx(
        mixture_energy(1.0, 2.0, [2, 0, 1]), abs=1e-14)


def test_vm_correlated_values():
    t = make_target("t2_correlated")
    assert VM_CORRELATED_PHI == 1.94
    assert ev(t, (0.4, VM_CORRELATED_PHI - 0.4))[0] == pytest.approx(-1.0, abs=1e-14)
    base = ev(t, (1.0, 2.0))[0]
    assert ev(t, (1.0 + 0.37, 2.0 - 0.37))[0] == pytest.approx(base, abs=1e-12)


def sphere_mix_oracle(x, centres):
    # independent scalar re-implementation
    terms = []
    for mu in centres:
        c = spherical_to_euclidean(mu)
        terms.append(SPHERE_MIX_SHARPNESS * float(np.dot(x, c)))
    m = max(terms)
    return -(m + math.log(sum(math.exp(v - m) for v in terms)))


@pytest.mark.parametrize("dim,centres", [(2, S2_MIX_CENTRES), (3, S3_MIX_CENTRES)])
def test_sphere_mixture_at_centres(dim, centres):
    t = make_target(f"s{dim}_mix4")
    for mu in centres:
        x = spherical_to_euclidean(mu)
        got = ev(t, list(x))[0]
        assert abs(got - sphere_mix_oracle(x, centres)) < 1e-9
        # the matching component alone contributes e^10
        assert got <= -SPHERE_MIX_SHARPNESS + 1e-9


def test_sphere_mixture_centre_values():
    assert S2_MIX_CENTRES == ((0.7, 1.5), (-1.0, 1.0), (0.6, 0.5), (-0.7, 4.0))
    assert S3_MIX_CENTRES == ((1.7, -1.5, 2.3), (-3.0, 1.0, 3.0),
                              (0.6, -2.6, 4.5), (-2.5, 3.0, 5.0))


def test_sphere_mixture_rotation_covariant(rng):
    # u(R x; R centres) == u(x; centres): inner products are preserved
    q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    centres = [spherical_to_euclidean(mu) for mu in S2_MIX_CENTRES]

    def u_with(x, cs):
        terms = [SPHERE_MIX_SHARPNESS * float(np.dot(x, c)) for c in cs]
        m = max(terms)
        return -(m + math.log(sum(math.exp(v - m) for v in terms)))

    for _ in range(20):
        v = rng.normal(size=3)
        x = v / np.linalg.norm(v)
        assert u_with(q @ x, [q @ c for c in centres]) == pytest.approx(
            u_with(x, centres), abs=1e-12)


def test_robot_arm_kinematics():
    tx, ty = robot_arm_tip([np.zeros(1)] * 6)
    assert float(np.asarray(tx)[0]) == pytest.approx(6 * ARM_LINK, abs=1e-15)
    assert float(np.asarray(ty)[0]) == pytest.approx(0.0, abs=1e-15)
    assert ARM_LINK == 0.2
    assert ARM_TIP_CENTRES == ((-0.5, 0.5), (0.6, -0.1))


def test_robot_arm_periodicity_exact():
    t = make_target("robot6")
    # dyadic angles: adding 2pi is an exact float operation, and the wrapped
    # energy must then be bit-identical
    th = [0.5, 0.25, 1.5, 0.125, 3.0, 0.75]
    base = ev(t, th)
    for k in range(6):
        sh = list(th)
        sh[k] = sh[k] + TWO_PI
        assert ev(t, sh)[0] == base[0]


def test_torus_energy_periodicity_exact():
    for name in ("t2_unimodal", "t2_multimodal", "t2_correlated"):
        t = make_target(name)
        th = (0.5, 2.25)
        base = ev(t, th)[0]
        assert ev(t, (th[0] + TWO_PI, th[1]))[0] == base
        assert ev(t, (th[0], th[1] + TWO_PI))[0] == base


def test_uniform_log_base():
    assert uniform_log_base("T2") == pytest.approx(-2 * math.log(TWO_PI))
    assert uniform_log_base("S2") == pytest.approx(-math.log(4 * math.pi))
    assert uniform_log_base("S3") == pytest.approx(-math.log(2 * math.pi**2))
    assert uniform_log_base("T6") == pytest.approx(-6 * math.log(TWO_PI))


def test_energies_finite_everywhere(rng):
    for name, dim in [("t2_unimodal", 2), ("t2_multimodal", 2),
                      ("t2_correlated", 2), ("robot6", 6)]:
        t = make_target(name)
        pts = [rng.uniform(0, TWO_PI, 200) for _ in range(dim)]
        assert np.all(np.isfinite(ev(t, pts)))
    for name, d in [("s2_mix4", 2), ("s3_mix4", 3)]:
        t = make_target(name)
        from maniflow.sphere import uniform_sphere
        x = uniform_sphere(d, 200, rng)
        assert np.all(np.isfinite(ev(t, x)))


def test_vmf_sample_source(rng):
    x = vmf_samples(50_000, 10.0, rng)
    nrm = np.sqrt(sum(np.asarray(c) ** 2 for c in x))
    assert np.abs(nrm - 1).max() < 1e-12
    # mean height of vMF(kappa): coth(kappa) - 1/kappa
    want = 1.0 / np.tanh(10.0) - 0.1
    assert np.asarray(x[2]).mean() == pytest.approx(want, abs=0.005)
