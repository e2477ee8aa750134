"""Command-line interface: bench, scale, train, rate-check, dominance-demo, verify.

Training runs are configured by a flat ``key = value`` text file whose keys
mirror the run-config fields; command-line flags override file values. All
randomness flows from the single ``--seed``. Exit codes: 0 success, 1
verification or divergence failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .dominance import smooth
from .harness import (
    DivergenceError,
    RunConfig,
    bench_preconditioner,
    bench_scaling,
    rate_trend_check,
    run_training,
    write_bench_csv,
    write_rate_csv,
    write_train_csv,
)
from .optimizers import OptimizerConfig, Schedule
from .preconditioners import NsCoefficients
from .problems import NoiseModel, make_logreg, make_mlp, make_quadratic
from . import verification

__all__ = ["build_parser", "main", "parse_args", "run", "verify"]

_PRECOND_CHOICES = ("rn", "ns5", "identity")
_OPTIMIZER_CHOICES = ("rmnp", "muon", "adamw", "sgd")

CONFIG_DEFAULTS: dict[str, object] = {
    "problem": "quadratic",
    "m": 16,
    "n": 64,
    "condition": 10.0,
    "n_samples": 64,
    "d_features": 8,
    "reg": 1e-3,
    "widths": [4, 8, 2],
    "optimizer": "rmnp",
    "lr_matrix": 0.02,
    "lr_adamw": 3e-3,
    "beta": 0.95,
    "adamw_beta1": 0.9,
    "adamw_beta2": 0.95,
    "weight_decay": 0.1,
    "rms_scaling": True,
    "eps": 1e-8,
    "rn_eps": 1e-8,
    "ns_iterations": 5,
    "schedule": "cosine-warmup",
    "warmup_fraction": 0.1,
    "total_steps": 200,
    "sigma": 0.0,
    "batch": 1,
    "seed": 0,
    "log_every": 1,
    "dominance": False,
}


def _coerce(key: str, raw: str):
    default = CONFIG_DEFAULTS[key]
    if isinstance(default, bool):
        low = raw.strip().lower()
        if low in ("true", "1", "yes", "on"):
            return True
        if low in ("false", "0", "no", "off"):
            return False
        raise ValueError(f"config key {key!r}: expected a boolean, got {raw!r}")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    if isinstance(default, list):
        return [int(x) for x in raw.split(",") if x.strip()]
    return raw.strip()


def load_config_file(path) -> dict[str, object]:
    """Parse a flat ``key = value`` config file; '#' starts a comment."""
    values: dict[str, object] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ValueError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key not in CONFIG_DEFAULTS:
            raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
        values[key] = _coerce(key, raw)
    return values


def build_problem(values: dict[str, object]):
    name = values["problem"]
    seed = int(values["seed"])
    if name == "quadratic":
        return make_quadratic(int(values["m"]), int(values["n"]), float(values["condition"]))
    if name == "logreg":
        return make_logreg(
            int(values["n_samples"]), int(values["d_features"]), seed, reg=float(values["reg"])
        )
    if name == "mlp":
        return make_mlp(list(values["widths"]), int(values["n_samples"]), seed)
    raise ValueError(f"unknown problem {name!r}; expected quadratic, logreg, or mlp")


def build_run_config(values: dict[str, object]) -> RunConfig:
    optimizer = OptimizerConfig(
        kind=str(values["optimizer"]),
        lr_matrix=float(values["lr_matrix"]),
        lr_adamw=float(values["lr_adamw"]),
        beta=float(values["beta"]),
        adamw_betas=(float(values["adamw_beta1"]), float(values["adamw_beta2"])),
        weight_decay=float(values["weight_decay"]),
        rms_scaling=bool(values["rms_scaling"]),
        eps=float(values["eps"]),
        ns_coeffs=NsCoefficients(iterations=int(values["ns_iterations"])),
        rn_eps=float(values["rn_eps"]),
    )
    total_steps = int(values["total_steps"])
    schedule = Schedule(
        kind=str(values["schedule"]),
        total_steps=max(1, total_steps),
        base_lr=optimizer.lr_matrix,
        warmup_fraction=float(values["warmup_fraction"]),
    )
    return RunConfig(
        problem=build_problem(values),
        optimizer=optimizer,
        schedule=schedule,
        total_steps=total_steps,
        noise=NoiseModel(
            sigma=float(values["sigma"]), batch=int(values["batch"]), seed=int(values["seed"])
        ),
        seed=int(values["seed"]),
        log_every=int(values["log_every"]),
        track_dominance=bool(values["dominance"]),
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rmnp",
        description="Row-momentum-normalized preconditioning: benchmarks, training, diagnostics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    bench = sub.add_parser("bench", help="time one preconditioner at a fixed shape")
    bench.add_argument("--precond", choices=_PRECOND_CHOICES, required=True)
    bench.add_argument("--m", type=int, required=True)
    bench.add_argument("--n", type=int, required=True)
    bench.add_argument("--repeats", type=int, default=100)
    bench.add_argument("--outer", type=int, default=5)
    bench.add_argument("--seed", type=int, default=0)
    bench.add_argument("--out", type=str, default=None, help="write the record as CSV")

    scale = sub.add_parser("scale", help="fit the log-log time exponent over a size ladder")
    scale.add_argument("--precond", choices=_PRECOND_CHOICES, required=True)
    scale.add_argument("--sizes", type=str, default="256,512,1024,2048")
    scale.add_argument("--repeats", type=int, default=None)
    scale.add_argument("--outer", type=int, default=5)
    scale.add_argument("--seed", type=int, default=0)
    scale.add_argument("--out", type=str, default=None)

    train = sub.add_parser("train", help="run an optimization experiment, log CSV")
    train.add_argument("--config", type=str, default=None, help="flat key = value file")
    train.add_argument("--out", type=str, required=True)
    train.add_argument("--seed", type=int, default=None)
    train.add_argument("--steps", type=int, default=None)
    train.add_argument("--optimizer", choices=_OPTIMIZER_CHOICES, default=None)
    train.add_argument("--sigma", type=float, default=None)
    train.add_argument("--dominance", choices=("true", "false"), default=None)

    rate = sub.add_parser("rate-check", help="averaged gradient norm across horizons")
    rate.add_argument("--optimizer", choices=("rmnp", "muon", "sgd"), default="rmnp")
    rate.add_argument("--m", type=int, default=16)
    rate.add_argument("--n", type=int, default=64)
    rate.add_argument("--condition", type=float, default=1.0)
    rate.add_argument("--sigma", type=float, default=1.0)
    rate.add_argument("--batch", type=int, default=1)
    rate.add_argument("--t-values", type=str, default="1000,4000,16000")
    rate.add_argument("--criterion", choices=("fro", "one-two", "inf-two"), default="fro")
    rate.add_argument("--seed", type=int, default=0)
    rate.add_argument("--out", type=str, default=None)

    demo = sub.add_parser(
        "dominance-demo", help="short mixed-optimizer run logging dominance ratios"
    )
    demo.add_argument("--steps", type=int, default=200)
    demo.add_argument("--widths", type=str, default="4,8,2")
    demo.add_argument("--samples", type=int, default=64)
    demo.add_argument("--optimizer", choices=("rmnp", "muon", "sgd"), default="muon")
    demo.add_argument("--lr-matrix", type=float, default=0.02)
    demo.add_argument("--smooth-window", type=int, default=50)
    demo.add_argument("--seed", type=int, default=0)
    demo.add_argument("--out", type=str, required=True)

    ver = sub.add_parser("verify", help="run the invariant suites")
    ver.add_argument("--seed", type=int, default=0)

    return parser


def parse_args(argv) -> argparse.Namespace:
    """Validated command namespace; unknown flags exit with a usage error."""
    return build_parser().parse_args(argv)


def _cmd_bench(args) -> int:
    record = bench_preconditioner(
        args.precond, args.m, args.n, args.repeats, outer_reps=args.outer, seed=args.seed
    )
    print(
        f"{record.kind} {record.m}x{record.n} repeats={record.repeats} "
        f"total={record.total_seconds:.6g}s per_call={record.seconds_per_call:.6g}s "
        f"flops={record.flop_estimate}"
    )
    if args.out:
        write_bench_csv([record], args.out)
    return 0


def _cmd_scale(args) -> int:
    sizes = [int(s) for s in args.sizes.split(",") if s.strip()]
    result = bench_scaling(
        args.precond, sizes, args.repeats, outer_reps=args.outer, seed=args.seed
    )
    for r in result.records:
        print(f"{r.kind} {r.m}x{r.n} repeats={r.repeats} per_call={r.seconds_per_call:.6g}s")
    print(f"fitted exponent: {result.exponent:.4f}")
    if result.noisy_sizes:
        print(f"noisy sizes (cv > 20%): {', '.join(map(str, result.noisy_sizes))}")
    if args.out:
        write_bench_csv(result.records, args.out)
    return 0


def _cmd_train(args) -> int:
    values = dict(CONFIG_DEFAULTS)
    if args.config:
        values.update(load_config_file(args.config))
    if args.seed is not None:
        values["seed"] = args.seed
    if args.steps is not None:
        values["total_steps"] = args.steps
    if args.optimizer is not None:
        values["optimizer"] = args.optimizer
    if args.sigma is not None:
        values["sigma"] = args.sigma
    if args.dominance is not None:
        values["dominance"] = args.dominance == "true"
    cfg = build_run_config(values)
    records = run_training(cfg)
    write_train_csv(records, args.out)
    if records:
        last = records[-1]
        print(
            f"{values['optimizer']} on {cfg.problem.name}: {len(records)} records, "
            f"final logged loss {last.loss:.6g}, grad norm {last.grad_norm_f:.6g}"
        )
    else:
        print(f"{values['optimizer']} on {cfg.problem.name}: empty run")
    return 0


def _cmd_rate_check(args) -> int:
    problem = make_quadratic(args.m, args.n, args.condition)
    t_values = [int(t) for t in args.t_values.split(",") if t.strip()]
    points = rate_trend_check(
        problem,
        args.optimizer,
        t_values,
        sigma=args.sigma,
        batch=args.batch,
        seed=args.seed,
        criterion=args.criterion,
    )
    print("total_steps  avg_grad_norm  lr          1-beta")
    for p in points:
        print(
            f"{p.total_steps:<12d} {p.avg_grad_norm:<14.6g} {p.lr:<11.4g} {p.one_minus_beta:.4g}"
        )
    if args.out:
        write_rate_csv(points, args.out)
    return 0


def _cmd_dominance_demo(args) -> int:
    widths = [int(w) for w in args.widths.split(",") if w.strip()]
    values = dict(
        CONFIG_DEFAULTS,
        problem="mlp",
        widths=widths,
        n_samples=args.samples,
        optimizer=args.optimizer,
        lr_matrix=args.lr_matrix,
        total_steps=args.steps,
        seed=args.seed,
        dominance=True,
    )
    cfg = build_run_config(values)
    records = run_training(cfg)
    write_train_csv(records, args.out)
    if not records:
        print(f"{args.optimizer} on {cfg.problem.name}: empty run")
        return 0
    rbar_avg = [r.global_dominance.rbar_avg for r in records]
    window = max(1, args.smooth_window)
    smoothed = smooth(rbar_avg, window)
    print(
        f"{args.optimizer} on {cfg.problem.name}: {len(records)} steps, "
        f"final rbar_avg {rbar_avg[-1]:.4g} (smoothed {smoothed[-1]:.4g}, window {window})"
    )
    frac_above = sum(1 for x in rbar_avg if x > 1.0) / len(rbar_avg)
    print(f"steps with rbar_avg > 1: {100 * frac_above:.1f}%")
    return 0


def verify(seed: int = 0) -> int:
    """Run every invariant suite; print one line per suite; 0 iff all pass."""
    results = verification.run_all(seed)
    for r in results:
        if r.passed:
            print(f"PASS  {r.name}")
        else:
            print(f"FAIL  {r.name}: {r.detail}")
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} suites passed")
    return 1 if failed else 0


def main(argv=None) -> int:
    args = parse_args(sys.argv[1:] if argv is None else argv)
    try:
        if args.command == "bench":
            return _cmd_bench(args)
        if args.command == "scale":
            return _cmd_scale(args)
        if args.command == "train":
            return _cmd_train(args)
        if args.command == "rate-check":
            return _cmd_rate_check(args)
        if args.command == "dominance-demo":
            return _cmd_dominance_demo(args)
        return verify(args.seed)
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def run() -> None:
    raise SystemExit(main())
