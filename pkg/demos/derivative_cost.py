"""How derivative cost scales with input dimension.

Times four workloads per dimension on a fixed-width network: plain forward
evaluation, first-order input gradient, honest second-order divergence
(batched directional second differences, O(d) network sweeps), and the
cube-surface flux (one gradient sweep over 2d face points). The brute
second-order column grows with d; the other three stay nearly flat, which
is the whole case for trading Hessians for surface fluxes.

Run:  python demos/derivative_cost.py [--dims 2,10,50] [--width 64]
"""

import argparse

from dfvm.bench import bench_ad


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--dims", default="2,10,50")
    ap.add_argument("--width", type=int, default=64)
    ap.add_argument("--n-points", type=int, default=100)
    args = ap.parse_args()
    dims = [int(s) for s in args.dims.split(",")]

    rows = bench_ad(dims, width=args.width, n_points=args.n_points)
    print(f"{'d':>4s} {'forward':>10s} {'gradient':>10s} "
          f"{'brute 2nd':>10s} {'cube flux':>10s}   (seconds per batch)")
    for r in rows:
        print(f"{r.dim:4d} {r.forward_s:10.4f} {r.gradient_s:10.4f} "
              f"{r.brute_second_s:10.4f} {r.cube_flux_s:10.4f}")
    base, top = rows[0], rows[-1]
    print(f"\nd={top.dim} vs d={base.dim}: brute second-order "
          f"{top.brute_second_s / base.brute_second_s:.1f}x, "
          f"input gradient {top.gradient_s / base.gradient_s:.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
