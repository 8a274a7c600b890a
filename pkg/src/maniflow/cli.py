"""Experiment runner: train flows against analytic targets, export density
grids and samples, evaluate snapshots, run the verification suites.

Subcommands:
  train   --config cfg.yaml [--seed N] [--replicas N] [--out DIR]
  eval    --snapshot PREFIX [--samples N] [--seed N]
  grid    --snapshot PREFIX [--resolution N] [--out DIR] [--samples N]
  verify  --suite {boundary,roundtrip,normalization,gradcheck,equivalence,all}

Angles are radians; log-densities are nats. MANIFLOW_OUT_ROOT sets the
default output root (default: ./runs).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigError, TrainDivergedError
from .models import (build_dataset, build_flow, build_target,
                     build_train_config, flow_layout, validate_config)
from .snapshot import load_snapshot, save_snapshot
from .targets import make_target
from .train import estimate_log_z_and_ess, kl_train, mle_train

TWO_PI = 2.0 * math.pi


def _out_root() -> Path:
    return Path(os.environ.get("MANIFLOW_OUT_ROOT", "runs"))


def _load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            cfg = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except yaml.YAMLError as exc:
        raise ConfigError(f"config parse error in {path}: {exc}")
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return validate_config(cfg)


def _write_loss_csv(path: Path, trace) -> None:
    with open(path, "w") as fh:
        fh.write("iteration,loss\n")  # loss in nats: E_q[ln q + beta*u]
        for i, v in enumerate(trace):
            fh.write(f"{i},{v!r}\n")


def cmd_train(args) -> int:
    cfg = _load_config(args.config)
    out_dir = Path(args.out) if args.out else _out_root() / Path(args.config).stem
    replicas = args.replicas if args.replicas else int(cfg.get("replicas", 1))
    base_seed = args.seed if args.seed is not None else None
    mode = cfg.get("mode", "kl")
    reports = []
    for r in range(replicas):
        sub = out_dir / f"replica{r}" if replicas > 1 else out_dir
        sub.mkdir(parents=True, exist_ok=True)
        seed = (base_seed + r) if base_seed is not None else None
        tc = build_train_config(cfg, seed=seed if seed is not None
                                else int(cfg.get("train", {}).get("seed", 0)) + r)
        flow = build_flow(cfg)
        started = time.time()
        try:
            if mode == "mle":
                data = build_dataset(cfg, np.random.default_rng(tc.seed + 10_000))
                params, rep = mle_train(flow, data, tc)
            else:
                target = build_target(cfg)
                params, rep = kl_train(flow, target, tc)
        except TrainDivergedError as exc:
            save_snapshot(sub / "params_lastgood", exc.params, cfg, flow_layout(flow))
            print(f"error: training diverged at iteration {exc.iteration}; "
                  f"last good parameters saved under {sub}", file=sys.stderr)
            return 1
        (sub / "report.json").write_text(
            json.dumps(rep.json_dict(), indent=2, sort_keys=True) + "\n")
        (sub / "meta.json").write_text(json.dumps({
            "wall_seconds": rep.wall_seconds,
            "finished_unix": time.time(),
            "started_unix": started,
        }, indent=2, sort_keys=True) + "\n")
        _write_loss_csv(sub / "loss.csv", rep.loss_trace)
        save_snapshot(sub / "params", params, cfg, flow_layout(flow))
        reports.append(rep)
        msg = f"replica {r}: seed={rep.seed} loss={rep.final_loss:.4f}"
        if rep.kl is not None:
            msg += f" KL={rep.kl:.4f} ESS={100 * rep.ess:.1f}%"
        print(msg)
    if replicas > 1:
        kls = [r.kl for r in reports if r.kl is not None]
        esss = [r.ess for r in reports if r.ess is not None]
        agg = {
            "replicas": replicas,
            "kl_mean": float(np.mean(kls)) if kls else None,
            # error bars: standard deviation of the average across replicas
            "kl_stderr": float(np.std(kls, ddof=1) / np.sqrt(len(kls))) if len(kls) > 1 else None,
            "ess_mean": float(np.mean(esss)) if esss else None,
            "seeds": [r.seed for r in reports],
        }
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "aggregate.json").write_text(
            json.dumps(agg, indent=2, sort_keys=True) + "\n")
        if agg["kl_mean"] is not None:
            print(f"aggregate: KL={agg['kl_mean']:.4f}"
                  f" (stderr {agg['kl_stderr']:.4f})" if agg["kl_stderr"] is not None
                  else f"aggregate: KL={agg['kl_mean']:.4f}")
    return 0


def cmd_eval(args) -> int:
    params, cfg = load_snapshot(Path(args.snapshot))
    flow = build_flow(cfg)
    target = build_target(cfg)
    rng = np.random.default_rng(args.seed if args.seed is not None else 0)
    log_z, ess, x, logq, u = estimate_log_z_and_ess(
        flow, params, target, args.samples, rng)
    loss = float(np.mean(np.asarray(logq) + target.beta * u))
    result = {"log_z": log_z, "ess": ess, "loss": loss, "kl": loss + log_z,
              "samples": args.samples}
    print(json.dumps(result, indent=2, sort_keys=True))
    return 0


def _torus_grid(flow, params, res: int):
    from .torus import chunked_log_prob
    g = (np.arange(res) + 0.5) * TWO_PI / res
    G1, G2 = np.meshgrid(g, g, indexing="ij")
    lp = chunked_log_prob(flow, params, [G1.ravel(), G2.ravel()])
    return ["theta1", "theta2", "logq"], [G1.ravel(), G2.ravel(), lp]


def _s2_grid(flow, params, n_lon: int, n_lat: int):
    from .torus import chunked_log_prob
    lam = (np.arange(n_lon) + 0.5) * TWO_PI / n_lon
    psi = (np.arange(n_lat) + 0.5) * np.pi / n_lat
    L, P = np.meshgrid(lam, psi, indexing="ij")
    x = [np.sin(P.ravel()) * np.cos(L.ravel()),
         np.sin(P.ravel()) * np.sin(L.ravel()),
         np.cos(P.ravel())]
    lp = chunked_log_prob(flow, params, x)
    return ["longitude", "colatitude", "logq"], [L.ravel(), P.ravel(), lp]


def _s3_slice_grid(flow, params, n_lon: int, n_lat: int):
    from .torus import chunked_log_prob
    lam = (np.arange(n_lon) + 0.5) * TWO_PI / n_lon
    psi = (np.arange(n_lat) + 0.5) * np.pi / n_lat
    L, P = np.meshgrid(lam, psi, indexing="ij")
    cols = [[], [], [], []]
    for s in (-0.8, -0.4, 0.0, 0.4, 0.8):
        w = math.sqrt(1 - s * s)
        x = [w * np.sin(P.ravel()) * np.cos(L.ravel()),
             w * np.sin(P.ravel()) * np.sin(L.ravel()),
             w * np.cos(P.ravel()),
             np.full(L.size, s)]
        lp = chunked_log_prob(flow, params, x)
        cols[0].append(np.full(L.size, s))
        cols[1].append(L.ravel())
        cols[2].append(P.ravel())
        cols[3].append(lp)
    return (["slice_x4", "longitude", "colatitude", "logq"],
            [np.concatenate(c) for c in cols])


def _write_csv(path: Path, header, cols) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        n = len(cols[0])
        for i in range(n):
            fh.write(",".join(repr(float(c[i])) for c in cols) + "\n")


def cmd_grid(args) -> int:
    params, cfg = load_snapshot(Path(args.snapshot))
    flow = build_flow(cfg)
    out_dir = Path(args.out) if args.out else Path(args.snapshot).parent
    out_dir.mkdir(parents=True, exist_ok=True)
    tag = cfg["manifold"]
    if tag.startswith("T"):
        res = args.resolution or 256
        header, cols = _torus_grid(flow, params, res)
        grid_name = f"grid_t2_{res}.csv"
    elif tag == "S2":
        n_lat = args.resolution or 200
        header, cols = _s2_grid(flow, params, 2 * n_lat, n_lat)
        grid_name = f"grid_s2_{2 * n_lat}x{n_lat}.csv"
    elif tag == "S3":
        n_lat = args.resolution or 100
        header, cols = _s3_slice_grid(flow, params, 2 * n_lat, n_lat)
        grid_name = f"grid_s3_slices_{2 * n_lat}x{n_lat}.csv"
    else:
        print(f"error: grids not supported on {tag}", file=sys.stderr)
        return 2
    _write_csv(out_dir / grid_name, header, cols)

    rng = np.random.default_rng(args.seed if args.seed is not None else 0)
    x, logq = flow.sample(params, args.samples, rng)
    if tag.startswith("T"):
        names = [f"theta{i + 1}" for i in range(len(x))]
    else:
        names = [f"x{i + 1}" for i in range(len(x))]
    _write_csv(out_dir / "samples.csv", names + ["logq"],
               [np.asarray(c) for c in x] + [np.asarray(logq)])
    print(f"wrote {out_dir / grid_name} and {out_dir / 'samples.csv'}")
    return 0


def cmd_verify(args) -> int:
    from .verify import run_suite
    try:
        results = run_suite(args.suite)
    except KeyError:
        print(f"error: unknown suite '{args.suite}'", file=sys.stderr)
        return 2
    width = max(len(name) for name, _, _ in results)
    ok_all = True
    for name, ok, detail in results:
        ok_all &= ok
        print(f"{name:<{width}}  {'PASS' if ok else 'FAIL'}  {detail}")
    print(f"{'all checks passed' if ok_all else 'FAILURES PRESENT'}")
    return 0 if ok_all else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="maniflow",
        description="Normalizing flows on circles, tori and spheres.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a flow per the config file")
    p.add_argument("--config", required=True, help="YAML experiment config")
    p.add_argument("--seed", type=int, default=None, help="base seed (replica r uses seed+r)")
    p.add_argument("--replicas", type=int, default=None)
    p.add_argument("--out", default=None, help="output directory")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="importance-sampling evaluation of a snapshot")
    p.add_argument("--snapshot", required=True, help="snapshot prefix (without .bin/.json)")
    p.add_argument("--samples", type=int, default=20000)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("grid", help="export a log-density grid and samples as CSV")
    p.add_argument("--snapshot", required=True)
    p.add_argument("--resolution", type=int, default=None,
                   help="T2: per-axis points (256); S2/S3: latitude points (200/100)")
    p.add_argument("--samples", type=int, default=20000)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_grid)

    p = sub.add_parser("verify", help="run an invariant suite")
    p.add_argument("--suite", required=True,
                   help="boundary | roundtrip | normalization | gradcheck | equivalence | all")
    p.set_defaults(fn=cmd_verify)

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
