"""Wall-clock benchmarks.

Two harnesses: derivative-evaluation cost as the input dimension grows
(forward / input gradient / brute second-order divergence / cube flux), and
seconds per optimization step for whole methods. All timings use adaptive
repetition so short calls still produce stable numbers on one core.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence

import numpy as np

from .divest import brute_divergence_batch, identity_coefficients
from .loss import LossConfig, dfvm_loss, flux_cube_batch, pinn_loss
from .network import Network, NetworkConfig, as_field
from .problems import PdeProblem
from .sampling import ControlVolumeSpec
from .train import adam_init, adam_step


def time_call(fn: Callable[[], object], min_seconds: float = 0.05,
              max_repeats: int = 1000) -> float:
    """Average seconds per call; repeats until min_seconds of work accumulates."""
    fn()  # warm-up, not counted
    reps = 0
    t0 = time.perf_counter()
    while True:
        fn()
        reps += 1
        elapsed = time.perf_counter() - t0
        if elapsed >= min_seconds or reps >= max_repeats:
            return elapsed / reps


@dataclass(frozen=True)
class BenchRow:
    dim: int
    forward_s: float
    gradient_s: float
    brute_second_s: float
    cube_flux_s: float


BENCH_COLUMNS = ("dim", "forward_s", "gradient_s", "brute_second_s", "cube_flux_s")


def bench_ad(dims: Sequence[int], width: int = 64, depth: int = 3,
             n_points: int = 100, seed: int = 0,
             min_seconds: float = 0.05) -> List[BenchRow]:
    """Per-batch timings of the four derivative workloads at each dimension.

    The interesting pattern: forward and first-order gradient cost barely
    move with d (the hidden layers dominate), while the honest second-order
    divergence needs O(d) batched evaluations per point and grows with d.
    The cube flux stays first-order: 2d face points but only one gradient
    pass over them.
    """
    A = identity_coefficients()
    rows = []
    for d in dims:
        cfg = NetworkConfig(kind="fcnn", input_dim=int(d), width=width, depth=depth)
        net = Network(cfg)
        params = net.init_params(seed)
        rng = np.random.default_rng(np.random.SeedSequence((int(seed), int(d), 0xBE)))
        x = rng.uniform(0.1, 0.9, size=(n_points, int(d)))
        field = as_field(net, params)
        cv = ControlVolumeSpec(shape="cube", radius=1e-3, k=1)

        forward = time_call(lambda: net.value(params, x), min_seconds)
        gradient = time_call(lambda: net.value_and_input_grad(params, x), min_seconds)
        brute = time_call(lambda: brute_divergence_batch(field, A, x), min_seconds)
        flux = time_call(lambda: flux_cube_batch(net, params, A, x, cv, seed=seed),
                         min_seconds)
        rows.append(BenchRow(int(d), forward, gradient, brute, flux))
    return rows


def bench_method_step(problem: PdeProblem, method: str = "dfvm",
                      cv: Optional[ControlVolumeSpec] = None,
                      width: int = 20, depth: int = 3,
                      n_interior: int = 200, n_boundary: int = 100,
                      seed: int = 0, lam: float = 1.0,
                      pinn_fd_step: float = 1e-4,
                      min_seconds: float = 0.2) -> float:
    """Seconds for one full optimization step (loss + backward + update)."""
    if cv is None:
        cv = ControlVolumeSpec()
    net_cfg = NetworkConfig(kind="resnet", input_dim=problem.input_dim,
                            width=width, depth=depth)
    net = Network(net_cfg)
    params = net.init_params(seed)
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0x57E9)))
    margin = 4.0 * (pinn_fd_step if method == "pinn" else cv.radius)
    pts_r = problem.domain.sample_interior(n_interior, rng, margin=margin)
    pts_b = problem.domain.sample_boundary(n_boundary, rng)
    loss_cfg = LossConfig(cv=cv, lam=lam)
    state = adam_init(net.n_params)

    def step():
        if method == "pinn":
            batch = pinn_loss(net, params, problem, pts_r, pts_b,
                              lam=lam, h_fd=pinn_fd_step)
        else:
            batch = dfvm_loss(net, params, problem, pts_r, pts_b, loss_cfg,
                              seed=seed)
        adam_step(params, batch.param_grad, state, 1e-3)

    return time_call(step, min_seconds)
