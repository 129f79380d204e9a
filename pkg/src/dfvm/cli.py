"""Command-line front end.

Subcommands: train, compare, bench-ad, estimate, list-problems.

Configuration is flat INI text with sections [run], [network], [loss] and
[train]; command-line flags override file values, and every resolved value
is echoed to <run_dir>/config.ini so a run can be reproduced byte for byte
from its own output. Unknown sections or keys are rejected with exit code 2.
The default output root is $DFVM_OUTPUT_ROOT, falling back to ./runs.
"""

from __future__ import annotations

import argparse
import configparser
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from .bench import BENCH_COLUMNS, bench_ad
from .divest import ANALYTIC_FIELDS, ESTIMATORS, brute_divergence, identity_coefficients
from .loss import LossConfig
from .network import NetworkConfig
from .problems import get_problem, problem_names
from .sampling import ControlVolumeSpec, sphere_directions
from .train import MetricsRow, TrainConfig, TrainDiverged, train

METHODS = ("dfvm-cube", "dfvm-sphere", "pinn")

# section -> key -> (python type, global default); None defaults are filled
# from the problem's own defaults (or method-dependent rules) at resolve time.
_SCHEMA = {
    "run": {
        "problem": (str, None),
        "dim": (int, None),
        "method": (str, "dfvm-cube"),
        "out": (str, None),
    },
    "network": {
        "kind": (str, "resnet"),
        "width": (int, None),
        "depth": (int, 3),
    },
    "loss": {
        "radius": (float, None),
        "k": (int, None),
        "lam": (float, 1.0),
        "lower_order_rule": (str, "center-point"),
        "estimator": (str, "ad-gradient"),
        "qmc": (bool, True),
        "antithetic": (bool, True),
        "fd_step": (float, None),
    },
    "train": {
        "steps": (int, None),
        "lr": (float, None),
        "seed": (int, 0),
        "eval_every": (int, 500),
        "resample": (bool, True),
        "n_interior": (int, None),
        "n_boundary": (int, None),
        "n_eval": (int, 100000),
        "n_eval_t0": (int, 10000),
        "pinn_fd_step": (float, 1e-4),
        "lr_decay": (float, 1.0),
    },
}

# problem-default key per schema entry that stays None above
_PROBLEM_DEFAULTS = {
    ("network", "width"): "width",
    ("loss", "radius"): "cv_radius",
    ("train", "steps"): "steps",
    ("train", "lr"): "lr",
    ("train", "n_interior"): "n_interior",
    ("train", "n_boundary"): "n_boundary",
}


class ConfigError(Exception):
    """Invalid configuration; the message names the offending field."""


def _parse_bool(raw: str, where: str) -> bool:
    low = raw.strip().lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ConfigError(f"{where}: expected a boolean, got {raw!r}")


def _coerce(raw: str, typ, where: str):
    if typ is bool:
        return _parse_bool(raw, where)
    try:
        return typ(raw)
    except ValueError:
        raise ConfigError(f"{where}: expected {typ.__name__}, got {raw!r}")


def read_config_file(path) -> dict:
    """Parse an INI config into {section: {key: typed value}}; strict keys."""
    parser = configparser.ConfigParser()
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}")
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}")
    out: dict = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            known = ", ".join(_SCHEMA)
            raise ConfigError(f"{path}: unknown section [{section}] (known: {known})")
        out[section] = {}
        for key, raw in parser.items(section):
            if key not in _SCHEMA[section]:
                known = ", ".join(_SCHEMA[section])
                raise ConfigError(
                    f"{path}: unknown key {key!r} in [{section}] (known: {known})")
            typ, _ = _SCHEMA[section][key]
            out[section][key] = _coerce(raw, typ, f"{path}: [{section}] {key}")
    return out


@dataclass
class ResolvedRun:
    """Every knob of one training run, fully concrete."""

    values: dict                 # {section: {key: value}}, echo-ready
    problem: object
    net_cfg: NetworkConfig
    loss_cfg: LossConfig
    train_cfg: TrainConfig
    method: str
    run_dir: Path


def output_root() -> Path:
    return Path(os.environ.get("DFVM_OUTPUT_ROOT", "runs"))


def _merge(file_cfg: dict, flag_cfg: dict) -> dict:
    merged = {s: dict(keys) for s, keys in file_cfg.items()}
    for section, keys in flag_cfg.items():
        for key, val in keys.items():
            if val is not None:
                merged.setdefault(section, {})[key] = val
    return merged


def resolve_run(file_cfg: dict, flag_cfg: dict) -> ResolvedRun:
    """Merge file and flag values, fill defaults, build the run objects."""
    merged = _merge(file_cfg, flag_cfg)

    def get(section, key):
        val = merged.get(section, {}).get(key)
        if val is None:
            val = _SCHEMA[section][key][1]
        return val

    name = get("run", "problem")
    if name is None:
        raise ConfigError("missing required field: [run] problem "
                          f"(one of: {', '.join(problem_names())})")
    method = get("run", "method")
    if method not in METHODS:
        raise ConfigError(f"[run] method: unknown method {method!r} "
                          f"(one of: {', '.join(METHODS)})")
    try:
        problem = get_problem(name, get("run", "dim"))
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"[run] problem: {exc}")

    values: dict = {}
    for section, keys in _SCHEMA.items():
        values[section] = {}
        for key, (typ, default) in keys.items():
            val = merged.get(section, {}).get(key)
            if val is None:
                val = default
            if val is None and (section, key) in _PROBLEM_DEFAULTS:
                val = problem.defaults[_PROBLEM_DEFAULTS[section, key]]
            values[section][key] = val
    values["run"]["problem"] = name
    values["run"]["dim"] = problem.input_dim
    values["run"]["method"] = method
    if values["loss"]["k"] is None:
        values["loss"]["k"] = 20 if method == "dfvm-sphere" else 1

    net_cfg = NetworkConfig(kind=values["network"]["kind"],
                            input_dim=problem.input_dim,
                            width=values["network"]["width"],
                            depth=values["network"]["depth"])
    cv = ControlVolumeSpec(shape="sphere" if method == "dfvm-sphere" else "cube",
                           radius=values["loss"]["radius"],
                           k=values["loss"]["k"],
                           antithetic=values["loss"]["antithetic"],
                           qmc=values["loss"]["qmc"])
    loss_cfg = LossConfig(cv=cv, lam=values["loss"]["lam"],
                          lower_order_rule=values["loss"]["lower_order_rule"],
                          estimator=values["loss"]["estimator"],
                          fd_step=values["loss"]["fd_step"])
    t = values["train"]
    train_cfg = TrainConfig(steps=t["steps"], lr=t["lr"], seed=t["seed"],
                            eval_every=t["eval_every"], resample=t["resample"],
                            n_interior=t["n_interior"], n_boundary=t["n_boundary"],
                            n_eval=t["n_eval"], n_eval_t0=t["n_eval_t0"],
                            lr_decay=t["lr_decay"],
                            method="pinn" if method == "pinn" else "dfvm",
                            pinn_fd_step=t["pinn_fd_step"])

    out = values["run"]["out"]
    if out is None:
        run_dir = output_root() / f"{name}-{method}-seed{t['seed']}"
        values["run"]["out"] = str(run_dir)
    else:
        run_dir = Path(out)
    return ResolvedRun(values, problem, net_cfg, loss_cfg, train_cfg, method, run_dir)


def write_resolved_config(path, values: dict) -> None:
    lines = []
    for section, keys in values.items():
        lines.append(f"[{section}]")
        for key, val in keys.items():
            if val is None:
                continue
            if isinstance(val, bool):
                val = "true" if val else "false"
            lines.append(f"{key} = {val}")
        lines.append("")
    Path(path).write_text("\n".join(lines))


def sig10(x: float) -> str:
    """10-significant-digit decimal rendering used in every CSV."""
    return f"{x:.10g}"


METRICS_HEADER = "step,loss,interior,boundary,re,re0,seconds"


def metrics_lines(rows: Sequence[MetricsRow]) -> List[str]:
    lines = [METRICS_HEADER]
    for r in rows:
        re0 = sig10(r.re0) if r.re0 is not None else ""
        lines.append(f"{r.step},{sig10(r.loss)},{sig10(r.interior)},"
                     f"{sig10(r.boundary)},{sig10(r.re)},{re0},{sig10(r.seconds)}")
    return lines


def write_metrics(path, rows: Sequence[MetricsRow]) -> None:
    Path(path).write_text("\n".join(metrics_lines(rows)) + "\n")


# ---------------------------------------------------------------------------
# subcommands


def _add_run_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="INI config file; flags override its values")
    p.add_argument("--problem", choices=problem_names())
    p.add_argument("--dim", type=int)
    p.add_argument("--method", choices=METHODS)
    p.add_argument("--out", help="run directory (default: output root / run name)")
    p.add_argument("--kind", choices=("fcnn", "resnet"), dest="net_kind")
    p.add_argument("--width", type=int)
    p.add_argument("--depth", type=int)
    p.add_argument("--radius", type=float, help="control-volume radius")
    p.add_argument("--k", type=int, help="surface samples per face / sphere")
    p.add_argument("--lam", type=float, help="boundary penalty weight")
    p.add_argument("--lower-order-rule", choices=("center-point", "cv-average"))
    p.add_argument("--estimator", choices=("ad-gradient", "difference"))
    p.add_argument("--qmc", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--antithetic", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--fd-step", type=float)
    p.add_argument("--steps", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--eval-every", type=int)
    p.add_argument("--resample", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--n-interior", type=int)
    p.add_argument("--n-boundary", type=int)
    p.add_argument("--n-eval", type=int)
    p.add_argument("--n-eval-t0", type=int)
    p.add_argument("--pinn-fd-step", type=float)
    p.add_argument("--lr-decay", type=float)


def _flags_to_cfg(args: argparse.Namespace) -> dict:
    return {
        "run": {"problem": args.problem, "dim": args.dim,
                "method": args.method, "out": args.out},
        "network": {"kind": args.net_kind, "width": args.width,
                    "depth": args.depth},
        "loss": {"radius": args.radius, "k": args.k, "lam": args.lam,
                 "lower_order_rule": args.lower_order_rule,
                 "estimator": args.estimator, "qmc": args.qmc,
                 "antithetic": args.antithetic, "fd_step": args.fd_step},
        "train": {"steps": args.steps, "lr": args.lr, "seed": args.seed,
                  "eval_every": args.eval_every, "resample": args.resample,
                  "n_interior": args.n_interior, "n_boundary": args.n_boundary,
                  "n_eval": args.n_eval, "n_eval_t0": args.n_eval_t0,
                  "pinn_fd_step": args.pinn_fd_step, "lr_decay": args.lr_decay},
    }


def _resolve_from_args(args: argparse.Namespace) -> ResolvedRun:
    file_cfg = read_config_file(args.config) if args.config else {}
    return resolve_run(file_cfg, _flags_to_cfg(args))


def cmd_train(args: argparse.Namespace) -> int:
    run = _resolve_from_args(args)
    run.run_dir.mkdir(parents=True, exist_ok=True)
    write_resolved_config(run.run_dir / "config.ini", run.values)
    try:
        params, rows = train(run.problem, run.net_cfg, run.loss_cfg,
                             run.train_cfg, out_dir=str(run.run_dir))
    except TrainDiverged as exc:
        print(f"error: {exc} (last finite checkpoint kept)", file=sys.stderr)
        return 1
    write_metrics(run.run_dir / "metrics.csv", rows)
    last = rows[-1]
    re0 = f" re0={sig10(last.re0)}" if last.re0 is not None else ""
    print(f"final re={sig10(last.re)}{re0} seconds={sig10(last.seconds)} "
          f"run_dir={run.run_dir}")
    return 0


def cmd_compare(args: argparse.Namespace) -> int:
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    if len(methods) < 2:
        raise ConfigError("compare needs at least 2 comma-separated methods")
    for m in methods:
        if m not in METHODS:
            raise ConfigError(f"unknown method {m!r} (one of: {', '.join(METHODS)})")
    base = Path(args.out) if args.out else (
        output_root() / f"compare-{args.problem}-seed{args.seed or 0}")
    base.mkdir(parents=True, exist_ok=True)
    lines = ["method,re,re0,seconds"]
    summary = []
    for m in methods:
        sub = argparse.Namespace(**vars(args))
        sub.method = m
        sub.out = str(base / m)
        run = _resolve_from_args(sub)
        run.run_dir.mkdir(parents=True, exist_ok=True)
        write_resolved_config(run.run_dir / "config.ini", run.values)
        params, rows = train(run.problem, run.net_cfg, run.loss_cfg,
                             run.train_cfg, out_dir=str(run.run_dir))
        write_metrics(run.run_dir / "metrics.csv", rows)
        last = rows[-1]
        re0 = sig10(last.re0) if last.re0 is not None else ""
        lines.append(f"{m},{sig10(last.re)},{re0},{sig10(last.seconds)}")
        summary.append((m, last))
    (base / "comparison.csv").write_text("\n".join(lines) + "\n")
    for m, last in summary:
        re0 = f" re0={sig10(last.re0)}" if last.re0 is not None else ""
        print(f"{m}: re={sig10(last.re)}{re0} seconds={sig10(last.seconds)}")
    print(f"comparison_csv={base / 'comparison.csv'}")
    return 0


def cmd_bench_ad(args: argparse.Namespace) -> int:
    try:
        dims = [int(s) for s in args.dims.split(",") if s.strip()]
    except ValueError:
        raise ConfigError(f"--dims: expected comma-separated integers, got {args.dims!r}")
    if not dims:
        raise ConfigError("--dims: empty dimension list")
    rows = bench_ad(dims, width=args.width, depth=args.depth,
                    n_points=args.n_points, seed=args.seed)
    lines = [",".join(BENCH_COLUMNS)]
    for r in rows:
        lines.append(f"{r.dim},{sig10(r.forward_s)},{sig10(r.gradient_s)},"
                     f"{sig10(r.brute_second_s)},{sig10(r.cube_flux_s)}")
    text = "\n".join(lines)
    print(text)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text + "\n")
    return 0


def cmd_estimate(args: argparse.Namespace) -> int:
    field = ANALYTIC_FIELDS[args.field]
    A = identity_coefficients()
    rng = np.random.default_rng(np.random.SeedSequence((args.seed, 0xE57)))
    x_star = rng.uniform(0.1, 0.2, size=args.d)
    k = args.k
    if k % 2:
        k += 1  # antithetic direction sets need even k
    dirs = sphere_directions(args.d, k, antithetic=True,
                             seed=np.random.SeedSequence((args.seed, 0xD12)))
    est_fn = ESTIMATORS[args.est]
    if args.est == "q4":
        value = est_fn(field, x_star, args.r, dirs)
    else:
        value = est_fn(field, A, x_star, args.r, dirs)
    oracle = brute_divergence(field, A, x_star)
    print(f"estimate={sig10(value)}")
    print(f"oracle={sig10(oracle)}")
    print(f"gap={sig10(abs(value - oracle))}")
    return 0


def cmd_list_problems(args: argparse.Namespace) -> int:
    for name in problem_names():
        p = get_problem(name)
        fixed = "" if name in ("poisson-hd", "nonlinear") else " (fixed)"
        d = p.defaults
        print(f"{name}: kind={p.kind} input_dim={p.input_dim}{fixed} "
              f"width={d['width']} n_interior={d['n_interior']} "
              f"n_boundary={d['n_boundary']} cv_radius={d['cv_radius']} "
              f"steps={d['steps']}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dfvm",
        description="Mesh-free PDE solver trained with control-volume flux losses")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run one training job")
    _add_run_flags(p_train)
    p_train.set_defaults(fn=cmd_train)

    p_cmp = sub.add_parser("compare", help="run several methods, shared seed")
    _add_run_flags(p_cmp)
    p_cmp.add_argument("--methods", default="dfvm-cube,pinn",
                       help="comma-separated list from: " + ", ".join(METHODS))
    p_cmp.set_defaults(fn=cmd_compare)

    p_bench = sub.add_parser("bench-ad", help="time derivative workloads vs dimension")
    p_bench.add_argument("--dims", default="2,10,50")
    p_bench.add_argument("--width", type=int, default=64)
    p_bench.add_argument("--depth", type=int, default=3)
    p_bench.add_argument("--n-points", type=int, default=100)
    p_bench.add_argument("--seed", type=int, default=0)
    p_bench.add_argument("--out", help="also write the CSV to this file")
    p_bench.set_defaults(fn=cmd_bench_ad)

    p_est = sub.add_parser("estimate", help="one divergence estimate vs the oracle")
    p_est.add_argument("--field", choices=sorted(ANALYTIC_FIELDS), required=True)
    p_est.add_argument("--est", choices=sorted(ESTIMATORS), required=True)
    p_est.add_argument("--d", type=int, default=10)
    p_est.add_argument("--r", type=float, default=1e-3)
    p_est.add_argument("--k", type=int, default=20,
                       help="direction count (odd values rounded up to even)")
    p_est.add_argument("--seed", type=int, default=0)
    p_est.set_defaults(fn=cmd_estimate)

    p_list = sub.add_parser("list-problems", help="show built-in problems")
    p_list.set_defaults(fn=cmd_list_problems)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
