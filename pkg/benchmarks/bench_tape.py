"""Compare the compiled and pure-Python tape engines on training workloads.

Run: python benchmarks/bench_tape.py [--iters N]
"""

import argparse
import time

import numpy as np

from maniflow.engine import available_engines
from maniflow.sphere import ExpMapFlow, make_recursive_flow
from maniflow.targets import make_target
from maniflow.torus import ProductManifold, alternating_flow


def one_iteration(tape_cls, flow, target, params, batch=256):
    tape = tape_cls(width=batch)
    pv = tape.leaves(params)
    x, logq = flow.sample_on_tape(pv, tape, np.random.default_rng(0))
    loss = logq + target.beta * target.energy(x)
    tape.backward(loss, seed=np.full(batch, 1.0 / batch))


def bench(tape_cls, flow, target, iters):
    rng = np.random.default_rng(0)
    params = flow.init_params(rng)
    one_iteration(tape_cls, flow, target, params)  # warm-up
    t0 = time.perf_counter()
    for _ in range(iters):
        one_iteration(tape_cls, flow, target, params)
    return (time.perf_counter() - t0) / iters


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--iters", type=int, default=20)
    args = ap.parse_args()

    workloads = {
        "t2_ncp1_2layers": (
            alternating_flow(ProductManifold.torus(2), 2, "ncp", 1),
            make_target("t2_unimodal")),
        "t2_cs12_2layers": (
            alternating_flow(ProductManifold.torus(2), 2, "cs", 12),
            make_target("t2_unimodal")),
        "s2_mobius_spline": (
            make_recursive_flow(2, 1, "mobius", K_m=12, K_s=32),
            make_target("s2_mix4")),
        "s2_expmap_radial_nt24": (
            ExpMapFlow(2, 24, "radial", K=1),
            make_target("s2_mix4")),
    }
    engines = available_engines()
    print(f"{'workload':<24}" + "".join(f"{name + ' ms/iter':>16}" for name in engines)
          + ("{:>10}".format("speedup") if len(engines) > 1 else ""))
    for wname, (flow, target) in workloads.items():
        times = {name: bench(cls, flow, target, args.iters) * 1000
                 for name, cls in engines.items()}
        row = f"{wname:<24}" + "".join(f"{times[name]:>16.2f}" for name in engines)
        if "py" in times and "cy" in times:
            row += f"{times['py'] / times['cy']:>10.1f}x"
        print(row)


if __name__ == "__main__":
    main()
