"""Adam training loop with metrics collection and checkpointing."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Tuple

import numpy as np

from .loss import LossConfig, dfvm_loss, pinn_loss
from .network import Network, NetworkConfig, save_params
from .problems import PdeProblem
from .sampling import SpaceTime

Array = np.ndarray


class TrainDiverged(RuntimeError):
    """Raised when the loss becomes NaN or Inf during training."""


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 20000
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8
    lr_decay: float = 1.0        # per-step multiplicative factor, 1.0 = constant
    eval_every: int = 500
    resample: bool = True        # fresh collocation points every step
    seed: int = 0
    n_interior: int = 2000
    n_boundary: int = 400
    n_eval: int = 100000
    n_eval_t0: int = 10000       # t=0 slice size, parabolic problems only
    method: str = "dfvm"         # "dfvm" or "pinn"
    pinn_fd_step: float = 1e-4
    dtype: str = "float32"       # working precision of the loop

    def __post_init__(self):
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        for b in (self.beta1, self.beta2):
            if not 0.0 < b < 1.0:
                raise ValueError("Adam betas must lie in (0, 1)")
        if self.method not in ("dfvm", "pinn"):
            raise ValueError("method must be 'dfvm' or 'pinn'")
        if self.dtype not in ("float32", "float64"):
            raise ValueError("dtype must be 'float32' or 'float64'")


@dataclass(frozen=True)
class MetricsRow:
    step: int
    loss: float
    interior: float
    boundary: float
    re: float
    re0: Optional[float]         # None for elliptic problems
    seconds: float


@dataclass
class AdamState:
    m: Array
    v: Array
    t: int = 0


def adam_init(n_params: int, dtype=np.float64) -> AdamState:
    return AdamState(np.zeros(n_params, dtype=dtype), np.zeros(n_params, dtype=dtype), 0)


def adam_step(params: Array, grad: Array, state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> Tuple[Array, AdamState]:
    """One bias-corrected Adam update; returns new params and state."""
    t = state.t + 1
    m = beta1 * state.m + (1.0 - beta1) * grad
    v = beta2 * state.v + (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1 ** t)
    v_hat = v / (1.0 - beta2 ** t)
    new_params = params - lr * m_hat / (np.sqrt(v_hat) + eps)
    return new_params, AdamState(m, v, t)


def relative_l2(u: Callable, params: Array, exact: Callable,
                eval_points: Array, chunk: int = 20000) -> float:
    """Monte Carlo relative L2 error over a fixed evaluation set."""
    pts = np.asarray(eval_points, dtype=float)
    if pts.shape[0] == 0:
        raise ValueError("eval_points must be nonempty")
    num = 0.0
    den = 0.0
    for lo in range(0, pts.shape[0], chunk):
        block = pts[lo:lo + chunk]
        ref = exact(block)
        diff = u(params, block) - ref
        num += float(np.sum(diff * diff))
        den += float(np.sum(ref * ref))
    if den == 0.0:
        raise ValueError("exact solution vanishes on the evaluation set")
    return float(np.sqrt(num / den))


def _interior_margin(problem: PdeProblem, loss_cfg: LossConfig,
                     method: str, pinn_fd: float) -> float:
    # Keep every surface sample / probe strictly inside the domain.  A
    # factor 4 covers coefficient-scaled probe offsets (|A n| and 2r
    # one-sided probes) for every built-in problem.
    if method == "pinn":
        return 4.0 * pinn_fd
    return 4.0 * loss_cfg.cv.radius


def _eval_sets(problem: PdeProblem, cfg: TrainConfig,
               rng: np.random.Generator) -> Tuple[Array, Optional[Array]]:
    pts = problem.domain.sample_interior(cfg.n_eval, rng)
    pts0 = None
    if problem.is_parabolic:
        dom = problem.domain
        assert isinstance(dom, SpaceTime)
        sp = dom.spatial.sample_interior(cfg.n_eval_t0, rng)
        pts0 = np.concatenate(
            [sp, np.full((cfg.n_eval_t0, 1), dom.t0)], axis=1)
    return pts, pts0


def train(problem: PdeProblem, net_cfg: NetworkConfig, loss_cfg: LossConfig,
          cfg: TrainConfig, out_dir: Optional[str] = None,
          params: Optional[Array] = None,
          ) -> Tuple[Array, List[MetricsRow]]:
    """Run the optimization loop; returns final params and metric rows.

    Deterministic for a fixed seed up to the wall-clock column.  Metric
    rows are emitted at step 0, every eval_every steps, and at the final
    step.  If the loss turns NaN/Inf the last finite parameters are
    checkpointed (when out_dir is given) and TrainDiverged is raised.
    """
    net = Network(net_cfg)
    work_dtype = np.dtype(cfg.dtype)
    if params is None:
        params = net.init_params(cfg.seed)
    params = np.array(params, dtype=work_dtype)

    root = np.random.SeedSequence((cfg.seed, 0xD5))
    eval_ss, sample_ss = root.spawn(2)
    eval_rng = np.random.default_rng(eval_ss)
    eval_pts, eval_pts0 = _eval_sets(problem, cfg, eval_rng)

    margin = _interior_margin(problem, loss_cfg, cfg.method, cfg.pinn_fd_step)
    sample_rng = np.random.default_rng(sample_ss)
    pts_r = problem.domain.sample_interior(cfg.n_interior, sample_rng, margin=margin)
    pts_b = problem.domain.sample_boundary(cfg.n_boundary, sample_rng)

    state = adam_init(net.n_params, dtype=work_dtype)
    lr = cfg.lr
    rows: List[MetricsRow] = []
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)

    t_start = time.perf_counter()

    def measure(step: int, loss: float, interior: float, boundary: float):
        re = relative_l2(net.value, params, problem.exact, eval_pts)
        re0 = None
        if eval_pts0 is not None:
            re0 = relative_l2(net.value, params, problem.exact, eval_pts0)
        rows.append(MetricsRow(step, loss, interior, boundary, re, re0,
                               time.perf_counter() - t_start))
        if out is not None:
            save_params(out / "checkpoint.bin", net_cfg, params)

    def batch_terms(step: int, with_grad: bool = True):
        if cfg.method == "pinn":
            return pinn_loss(net, params, problem, pts_r, pts_b,
                             lam=loss_cfg.lam, h_fd=cfg.pinn_fd_step,
                             with_grad=with_grad)
        return dfvm_loss(net, params, problem, pts_r, pts_b, loss_cfg,
                         seed=(cfg.seed, step), with_grad=with_grad)

    # Row 0 records the untrained network.  The loss at step 0 is not
    # assembled separately; reuse the first step's batch when it exists.
    if cfg.steps == 0:
        batch = batch_terms(0, with_grad=False)
        measure(0, batch.loss, batch.interior_term, batch.boundary_term)
        return params.astype(np.float64), rows

    first = True
    last_good = params
    for step in range(1, cfg.steps + 1):
        if cfg.resample and not first:
            pts_r = problem.domain.sample_interior(
                cfg.n_interior, sample_rng, margin=margin)
            pts_b = problem.domain.sample_boundary(cfg.n_boundary, sample_rng)
        batch = batch_terms(step)
        if first:
            measure(0, batch.loss, batch.interior_term, batch.boundary_term)
            first = False
        if not np.isfinite(batch.loss):
            # checkpoint the params that last produced a finite loss, not
            # the update that just blew up
            if out is not None:
                save_params(out / "checkpoint.bin", net_cfg, last_good)
            raise TrainDiverged(f"loss became {batch.loss!r} at step {step}")
        last_good = params
        grad = batch.param_grad
        params, state = adam_step(params, grad, state, lr,
                                  cfg.beta1, cfg.beta2, cfg.eps_adam)
        lr *= cfg.lr_decay
        if step % cfg.eval_every == 0 or step == cfg.steps:
            batch_now = batch_terms(step, with_grad=False)
            measure(step, batch_now.loss, batch_now.interior_term,
                    batch_now.boundary_term)

    if out is not None:
        save_params(out / "params.bin", net_cfg, params)
    return params.astype(np.float64), rows
