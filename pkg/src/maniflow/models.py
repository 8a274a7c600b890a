"""Experiment configuration: schema validation and model builders.

The config is one nested mapping (read from YAML by the CLI). Unknown keys
are rejected so typos fail loudly.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError
from .sphere import ExpMapFlow, make_recursive_flow
from .targets import TargetSpec, make_target
from .torus import ProductManifold, alternating_flow
from .train import TrainConfig

TORUS_TAGS = {"T1": 1, "T2": 2, "T3": 3, "T6": 6}
SPHERE_TAGS = {"S2": 2, "S3": 3}

_SCHEMA = {
    "manifold": str,
    "flow": {
        "layers": int,
        "transformer": {"family": str, "K": int, "freqs": list},
        "flow": str,  # sphere flows: "recursive" | "expmap"
        "N_T": int,
        "K_m": int,
        "K_s": int,
        "K": int,
        "field": str,
    },
    "target": {"name": str, "beta": (int, float)},
    "train": {
        "iterations": int,
        "batch": int,
        "lr": (int, float),
        "seed": int,
        "eval_samples": int,
    },
    "mode": str,  # "kl" (default) | "mle"
    "data": {"source": str, "kappa": (int, float), "n": int},
    "replicas": int,
    "out": str,
}


def _check_keys(cfg, schema, path=""):
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path or 'config'}: expected a mapping")
    for key, value in cfg.items():
        where = f"{path}.{key}" if path else key
        if key not in schema:
            raise ConfigError(f"unknown config key '{where}'")
        want = schema[key]
        if isinstance(want, dict):
            _check_keys(value, want, where)
        elif not isinstance(value, want):
            raise ConfigError(f"config key '{where}': expected {want}, got {type(value).__name__}")


def validate_config(cfg: dict) -> dict:
    _check_keys(cfg, _SCHEMA)
    if "manifold" not in cfg:
        raise ConfigError("config needs a 'manifold'")
    tag = cfg["manifold"]
    if tag not in TORUS_TAGS and tag not in SPHERE_TAGS:
        raise ConfigError(f"manifold '{tag}' not supported "
                          f"(use {sorted(TORUS_TAGS) + sorted(SPHERE_TAGS)})")
    if "target" in cfg and "name" not in cfg["target"]:
        raise ConfigError("target needs a 'name'")
    return cfg


def build_flow(cfg: dict):
    tag = cfg["manifold"]
    fcfg = cfg.get("flow", {})
    if tag in TORUS_TAGS:
        tcfg = fcfg.get("transformer", {})
        family = tcfg.get("family", "ncp")
        return alternating_flow(
            ProductManifold.torus(TORUS_TAGS[tag]),
            n_layers=fcfg.get("layers", 2),
            family=family,
            K=tcfg.get("K", 1),
            freqs=tcfg.get("freqs"),
        )
    D = SPHERE_TAGS[tag]
    kind = fcfg.get("flow", "recursive")
    if kind == "recursive":
        return make_recursive_flow(
            D,
            n_passes=fcfg.get("N_T", 1),
            circle_family=fcfg.get("transformer", {}).get("family", "mobius"),
            K_m=fcfg.get("K_m", 12),
            K_s=fcfg.get("K_s", 32),
        )
    if kind == "expmap":
        return ExpMapFlow(
            D,
            n_transforms=fcfg.get("N_T", 1),
            field=fcfg.get("field", "radial"),
            K=fcfg.get("K", 1),
        )
    raise ConfigError(f"unknown sphere flow '{kind}'")


def build_target(cfg: dict) -> TargetSpec:
    tcfg = cfg.get("target", {})
    target = make_target(tcfg.get("name", "uniform_t2"), float(tcfg.get("beta", 1.0)))
    if target.manifold != cfg["manifold"]:
        raise ConfigError(
            f"target '{target.name}' lives on {target.manifold}, flow on {cfg['manifold']}")
    return target


def build_train_config(cfg: dict, seed=None) -> TrainConfig:
    tcfg = dict(cfg.get("train", {}))
    if seed is not None:
        tcfg["seed"] = int(seed)
    return TrainConfig(
        iterations=int(tcfg.get("iterations", 20000)),
        batch=int(tcfg.get("batch", 256)),
        lr=float(tcfg.get("lr", 2e-4)),
        seed=int(tcfg.get("seed", 0)),
        eval_samples=int(tcfg.get("eval_samples", 20000)),
    )


def build_dataset(cfg: dict, rng: np.random.Generator):
    dcfg = cfg.get("data", {})
    source = dcfg.get("source", "vmf")
    if source == "vmf":
        if cfg["manifold"] != "S2":
            raise ConfigError("vmf data source lives on S2")
        from .targets import vmf_samples
        return vmf_samples(int(dcfg.get("n", 20000)), float(dcfg.get("kappa", 10.0)), rng)
    raise ConfigError(f"unknown data source '{source}'")


def flow_layout(flow) -> list:
    """Named parameter slices, for the snapshot sidecar."""
    out = []
    if hasattr(flow, "layers"):  # torus coupling stack
        for i, (layer, (lo, hi)) in enumerate(zip(flow.layers, flow.slices)):
            kind = "conditioned" if layer.sizes else "free"
            out.append({"block": f"layer{i}", "kind": kind,
                        "mlp_sizes": layer.sizes, "start": lo, "end": hi})
    elif hasattr(flow, "passes"):  # recursive sphere stack
        i = 0
        for p, (heights, circle) in enumerate(flow.passes):
            for d in sorted(heights, reverse=True):
                lo, hi = flow.slices[i]
                out.append({"block": f"pass{p}.height{d}", "kind": "spline",
                            "mlp_sizes": heights[d].sizes, "start": lo, "end": hi})
                i += 1
            lo, hi = flow.slices[i]
            out.append({"block": f"pass{p}.circle", "kind": "circle",
                        "mlp_sizes": circle.sizes, "start": lo, "end": hi})
            i += 1
    elif hasattr(flow, "fields"):  # exponential-map stack
        for i, (lo, hi) in enumerate(flow.slices):
            out.append({"block": f"transform{i}", "kind": type(flow.fields[i]).__name__,
                        "mlp_sizes": None, "start": lo, "end": hi})
    return out
