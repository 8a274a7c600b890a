"""Training and evaluation loops.

KL training minimizes E_q[ln q(x) + beta u(x)] by sampling from the model
each iteration; the constant ln Z is left out of the gradient. Evaluation
estimates ln Z by importance sampling from the trained flow and reports the
effective sample size, all in the log domain. Maximum-likelihood training
fits data samples through the inverse path; bisection inverses contribute
gradients through the implicit-function derivative, not the iterations.
"""

from __future__ import annotations

import dataclasses
import time

import numpy as np

from . import fx
from .engine import ENGINE, Tape
from .errors import DiffError, TrainDivergedError
from .optim import Adam
from .targets import TargetSpec


@dataclasses.dataclass
class TrainConfig:
    iterations: int = 20000
    batch: int = 256
    lr: float = 2e-4
    seed: int = 0
    eval_samples: int = 20000

    def __post_init__(self):
        if min(self.iterations, self.batch, self.eval_samples) <= 0 or self.lr <= 0:
            raise ValueError("train config values must be positive")


@dataclasses.dataclass
class TrainReport:
    loss_trace: list
    final_loss: float
    log_z: float | None
    kl: float | None
    ess: float | None  # fraction of the eval sample count
    wall_seconds: float
    seed: int
    engine: str

    def json_dict(self, with_wall: bool = False) -> dict:
        out = {
            "seed": self.seed,
            "engine": self.engine,
            "final_loss": self.final_loss,
            "log_z": self.log_z,
            "kl": self.kl,
            "ess": self.ess,
            "iterations": len(self.loss_trace),
        }
        if with_wall:
            out["wall_seconds"] = self.wall_seconds
        return out


def ess_fraction_from_log_weights(log_w: np.ndarray) -> float:
    """(sum w)^2 / sum w^2 as a fraction of the count, in the log domain;
    invariant to rescaling the weights."""
    log_w = np.asarray(log_w, dtype=np.float64)
    m = log_w.max()
    lw = log_w - m
    log_sum = np.log(np.exp(lw).sum())
    log_sum_sq = np.log(np.exp(2.0 * lw).sum())
    return float(np.exp(2.0 * log_sum - log_sum_sq) / log_w.size)


def estimate_log_z_and_ess(flow, params, target: TargetSpec, n_samples: int,
                           rng: np.random.Generator):
    """Importance-sampled ln Z-hat and the ESS fraction from flow samples."""
    if n_samples < 2:
        raise ValueError("need at least two evaluation samples")
    x, logq = flow.sample(params, n_samples, rng)
    u = np.asarray(fx.values(target.energy(x)))
    log_w = -target.beta * u - np.asarray(logq)
    if not np.all(np.isfinite(log_w)):
        raise ValueError("non-finite importance weights")
    m = log_w.max()
    log_z = m + np.log(np.exp(log_w - m).sum()) - np.log(n_samples)
    return float(log_z), ess_fraction_from_log_weights(log_w), x, logq, u


def kl_train(flow, target: TargetSpec, cfg: TrainConfig, callback=None):
    """Returns (trained params, TrainReport). Reported KL adds the
    importance-sampled ln Z-hat to the final loss estimate."""
    rng = np.random.default_rng(cfg.seed)
    params = flow.init_params(rng)
    opt = Adam(flow.n_params, lr=cfg.lr)
    trace = []
    started = time.perf_counter()
    tape = Tape(width=cfg.batch)
    pv = tape.leaves(params)
    seed = np.full(cfg.batch, 1.0 / cfg.batch)
    for it in range(cfg.iterations):
        try:
            tape.reset(params)
            x, logq = flow.sample_on_tape(pv, tape, rng)
            loss = logq + target.beta * target.energy(x)
            grads = tape.backward(loss, seed=seed)
        except DiffError as exc:
            raise TrainDivergedError(it, params) from exc
        loss_val = float(np.mean(fx.values(loss)))
        if not np.isfinite(loss_val):
            raise TrainDivergedError(it, params)
        trace.append(loss_val)
        params = opt.step(params, grads)
        if callback is not None:
            callback(it, loss_val, params)
    log_z, ess, x, logq, u = estimate_log_z_and_ess(
        flow, params, target, cfg.eval_samples, rng)
    final_loss = float(np.mean(np.asarray(logq) + target.beta * u))
    report = TrainReport(
        loss_trace=trace,
        final_loss=final_loss,
        log_z=log_z,
        kl=final_loss + log_z,
        ess=ess,
        wall_seconds=time.perf_counter() - started,
        seed=cfg.seed,
        engine=ENGINE,
    )
    return params, report


def mle_train(flow, dataset, cfg: TrainConfig, callback=None):
    """Maximize mean log-likelihood of fixed points through the inverse path."""
    n = len(np.asarray(dataset[0]))
    if n == 0:
        raise ValueError("empty dataset")
    rng = np.random.default_rng(cfg.seed)
    params = flow.init_params(rng)
    opt = Adam(flow.n_params, lr=cfg.lr)
    trace = []
    started = time.perf_counter()
    data = [np.asarray(c, dtype=np.float64) for c in dataset]
    tape = Tape(width=cfg.batch)
    pv = tape.leaves(params)
    seed = np.full(cfg.batch, 1.0 / cfg.batch)
    for it in range(cfg.iterations):
        idx = rng.integers(0, n, size=cfg.batch)
        try:
            tape.reset(params)
            x = [tape.const(c[idx]) for c in data]
            loss = -flow.log_prob(pv, x)
            grads = tape.backward(loss, seed=seed)
        except DiffError as exc:
            raise TrainDivergedError(it, params) from exc
        loss_val = float(np.mean(fx.values(loss)))
        if not np.isfinite(loss_val):
            raise TrainDivergedError(it, params)
        trace.append(loss_val)
        params = opt.step(params, grads)
        if callback is not None:
            callback(it, loss_val, params)
    full_ll = float(np.mean(np.asarray(flow.log_prob(params, data))))
    report = TrainReport(
        loss_trace=trace,
        final_loss=-full_ll,
        log_z=None,
        kl=None,
        ess=None,
        wall_seconds=time.perf_counter() - started,
        seed=cfg.seed,
        engine=ENGINE,
    )
    return params, report
