"""Parameter snapshots: flat little-endian float64 binary plus a JSON
sidecar carrying the flow config and the named parameter-slice layout."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

FORMAT = "maniflow-params-v1"


def save_snapshot(prefix, params: np.ndarray, config: dict, layout: list) -> tuple:
    prefix = Path(prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    bin_path = prefix.with_suffix(".bin")
    json_path = prefix.with_suffix(".json")
    arr = np.asarray(params, dtype="<f8")
    bin_path.write_bytes(arr.tobytes())
    sidecar = {
        "format": FORMAT,
        "dtype": "<f8",
        "param_count": int(arr.size),
        "config": config,
        "layout": layout,
    }
    json_path.write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    return bin_path, json_path


def load_snapshot(prefix) -> tuple:
    prefix = Path(prefix)
    sidecar = json.loads(prefix.with_suffix(".json").read_text())
    if sidecar.get("format") != FORMAT:
        raise ValueError(f"unrecognized snapshot format: {sidecar.get('format')}")
    params = np.frombuffer(prefix.with_suffix(".bin").read_bytes(), dtype="<f8")
    params = params.astype(np.float64)
    if params.size != sidecar["param_count"]:
        raise ValueError("snapshot binary length does not match the sidecar")
    return params, sidecar["config"]
