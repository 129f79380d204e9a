"""Flux loss vs strong-form loss on the backward Black-Scholes problem.

Trains the same network twice (one run per loss) with identical sampling,
optimizer, and step budget, and prints the final whole-domain and t=0
relative errors side by side. Short
by default; --full uses the 20000-step budget of the acceptance gate.

Run:  python demos/bs_comparison.py [--full]
"""

import argparse
import time

from dfvm.loss import LossConfig
from dfvm.network import NetworkConfig
from dfvm.problems import get_problem
from dfvm.sampling import ControlVolumeSpec
from dfvm.train import TrainConfig, train


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--full", action="store_true")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    steps = 20000 if args.full else 2000

    prob = get_problem("black-scholes")
    net_cfg = NetworkConfig(kind="resnet", input_dim=prob.input_dim,
                            width=32, depth=3)
    loss_cfg = LossConfig(cv=ControlVolumeSpec(shape="cube", radius=1e-3, k=1))

    results = {}
    for method in ("dfvm", "pinn"):
        tcfg = TrainConfig(steps=steps, lr=3e-3,
                           lr_decay=10.0 ** (-2.0 / 20000.0),
                           eval_every=max(steps // 5, 1),
                           n_interior=600, n_boundary=600,
                           n_eval=20000, n_eval_t0=4000,
                           method=method, pinn_fd_step=1e-4,
                           dtype="float32", seed=args.seed)
        t0 = time.perf_counter()
        _, rows = train(prob, net_cfg, loss_cfg, tcfg)
        results[method] = (rows[-1], time.perf_counter() - t0)
        print(f"{method}: done in {results[method][1]:.0f}s")

    print(f"\n{'method':8s} {'RE':>10s} {'RE at t=0':>10s} {'seconds':>8s}")
    for method, (last, secs) in results.items():
        print(f"{method:8s} {last.re:10.4%} {last.re0:10.4%} {secs:8.0f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
