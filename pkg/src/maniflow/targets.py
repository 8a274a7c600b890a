"""Analytic target energies u(x); the target density is e^(-beta u) / Z.

Energies are written with the fx layer, so they are differentiable through
the tape when evaluated on sampled points during training.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from . import fx

TWO_PI = 2.0 * math.pi

VM_UNIMODAL_PHI = (4.18, 5.96)
VM_MIXTURE_PHI = ((0.21, 2.85), (1.89, 6.18), (3.77, 1.56))
VM_CORRELATED_PHI = 1.94

S2_MIX_CENTRES = ((0.7, 1.5), (-1.0, 1.0), (0.6, 0.5), (-0.7, 4.0))
S3_MIX_CENTRES = ((1.7, -1.5, 2.3), (-3.0, 1.0, 3.0), (0.6, -2.6, 4.5), (-2.5, 3.0, 5.0))
SPHERE_MIX_SHARPNESS = 10.0

ARM_LINK = 0.2
ARM_TIP_CENTRES = ((-0.5, 0.5), (0.6, -0.1))
ARM_TIP_SIGMA = 0.1  # likelihood spread; centres from the task, spread chosen


@dataclasses.dataclass
class TargetSpec:
    name: str
    manifold: str  # "T2" | "T6" | "S2" | "S3"
    energy: object  # coords -> lane scalar
    beta: float
    log_z: float | None = None  # analytic normalizer when known


def vm_unimodal(th1, th2):
    # angles are wrapped first so a 2pi shift is an exact no-op
    th1, th2 = fx.wrap_half_open(th1), fx.wrap_half_open(th2)
    return -(fx.cos(th1 - VM_UNIMODAL_PHI[0]) + fx.cos(th2 - VM_UNIMODAL_PHI[1]))


def vm_mixture(th1, th2):
    th1, th2 = fx.wrap_half_open(th1), fx.wrap_half_open(th2)
    terms = [fx.cos(th1 - p1) + fx.cos(th2 - p2) for p1, p2 in VM_MIXTURE_PHI]
    return -(fx.logsumexp(terms) + math.log(1.0 / 3.0))


def vm_correlated(th1, th2):
    th1, th2 = fx.wrap_half_open(th1), fx.wrap_half_open(th2)
    return -fx.cos(th1 + th2 - VM_CORRELATED_PHI)


def spherical_to_euclidean(mu) -> np.ndarray:
    """Colatitude-first angles to a unit vector; the polar axis comes last.

    S^2: (sin a cos b, sin a sin b, cos a); each extra angle adds one more
    sin product in front, keeping the same pattern.
    """
    mu = tuple(mu)
    if len(mu) == 2:
        a, b = mu
        return np.array([math.sin(a) * math.cos(b),
                         math.sin(a) * math.sin(b),
                         math.cos(a)])
    if len(mu) == 3:
        a, b, c = mu
        return np.array([math.sin(a) * math.sin(b) * math.cos(c),
                         math.sin(a) * math.sin(b) * math.sin(c),
                         math.sin(a) * math.cos(b),
                         math.cos(a)])
    raise ValueError("angles for S^2 or S^3 only")


def sphere_mixture(x, dim: int):
    centres = S2_MIX_CENTRES if dim == 2 else S3_MIX_CENTRES
    terms = []
    for mu in centres:
        c = spherical_to_euclidean(mu)
        terms.append(SPHERE_MIX_SHARPNESS * fx.dot(x, list(c)))
    return -fx.logsumexp(terms)


def robot_arm_tip(thetas):
    """Tip position of the 6-link planar arm with equal link lengths."""
    cum = fx.cumsum([fx.wrap_half_open(t) for t in thetas])
    tip_x = ARM_LINK * fx.ssum([fx.cos(s) for s in cum])
    tip_y = ARM_LINK * fx.ssum([fx.sin(s) for s in cum])
    return tip_x, tip_y


def robot_arm_energy(thetas):
    tip_x, tip_y = robot_arm_tip(thetas)
    log_norm = math.log(0.5) - math.log(2 * math.pi * ARM_TIP_SIGMA**2)
    terms = []
    for cx, cy in ARM_TIP_CENTRES:
        d2 = (tip_x - cx) * (tip_x - cx) + (tip_y - cy) * (tip_y - cy)
        terms.append(log_norm - d2 / (2 * ARM_TIP_SIGMA**2))
    return -fx.logsumexp(terms)


def uniform_log_base(manifold: str) -> float:
    from .sphere import sphere_area
    if manifold.upper().startswith("T"):
        return -int(manifold[1:]) * math.log(TWO_PI)
    if manifold.upper().startswith("S"):
        return -math.log(sphere_area(int(manifold[1:])))
    raise ValueError(f"unknown manifold tag '{manifold}'")


def _vm_log_z(name: str, beta: float) -> float | None:
    # analytic normalizers of the torus targets, where tractable
    if name == "t2_unimodal":
        return 2.0 * (math.log(TWO_PI) + math.log(np.i0(beta)))
    if name == "t2_correlated":
        return 2.0 * math.log(TWO_PI) + math.log(np.i0(beta))
    if name == "t2_multimodal" and beta == 1.0:
        return 2.0 * (math.log(TWO_PI) + math.log(np.i0(1.0)))
    return None


def make_target(name: str, beta: float = 1.0) -> TargetSpec:
    registry = {
        "uniform_t2": ("T2", lambda c: 0.0 * c[0], lambda b: 2.0 * math.log(TWO_PI)),
        "t2_unimodal": ("T2", lambda c: vm_unimodal(c[0], c[1]), None),
        "t2_multimodal": ("T2", lambda c: vm_mixture(c[0], c[1]), None),
        "t2_correlated": ("T2", lambda c: vm_correlated(c[0], c[1]), None),
        "s2_mix4": ("S2", lambda c: sphere_mixture(c, 2), None),
        "s3_mix4": ("S3", lambda c: sphere_mixture(c, 3), None),
        "robot6": ("T6", robot_arm_energy, None),
    }
    if name not in registry:
        raise ValueError(f"unknown target '{name}'; choose from {sorted(registry)}")
    manifold, energy, z_fn = registry[name]
    log_z = z_fn(beta) if z_fn is not None else _vm_log_z(name, beta)
    return TargetSpec(name=name, manifold=manifold, energy=energy,
                      beta=beta, log_z=log_z)


def vmf_samples(n: int, kappa: float, rng: np.random.Generator) -> list[np.ndarray]:
    """Synthetic S^2 dataset: von Mises-Fisher around the north pole, drawn
    by warping the uniform height through the analytic inverse CDF."""
    theta = rng.uniform(0.0, TWO_PI, size=n)
    u = rng.uniform(size=n)
    r = np.log(np.exp(-kappa) + 2.0 * u * np.sinh(kappa)) / kappa
    s = np.sqrt(np.clip(1.0 - r * r, 0.0, None))
    return [s * np.cos(theta), s * np.sin(theta), r]
