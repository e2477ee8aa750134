"""Experiment orchestration: preconditioner microbenchmarks, training runs
with convergence and dominance logging, rate-trend checks, and CSV output.

Benchmarks time the preconditioner call alone: inputs are pre-generated and
warmup calls run before the clock starts. Each measurement repeats the inner
loop five times and reports the median total. Training runs are fully
deterministic given the seed; every float is serialized with 17 significant
digits and LF line endings so emitted CSV files round-trip byte-for-byte.
"""

from __future__ import annotations

import math
import statistics
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import preconditioners
from .dominance import (
    DominanceReport,
    GlobalDominance,
    dominance_report,
    global_aggregate,
    row_ratios,
)
from .matrix import Matrix, one_two_norm
from .optimizers import (
    OptimizerConfig,
    OptimizerKind,
    OptimizerState,
    Schedule,
    adamw_step,
    momentum_sgd_step,
    muon_step,
    partition_params,
    rmnp_step,
    schedule_lr,
)
from .preconditioners import (
    DEFAULT_NS_COEFFS,
    DEFAULT_RN_EPS,
    NsCoefficients,
    PreconditionerKind,
)
from .problems import NoiseModel, Problem, estimate_inf_two_smoothness, stochastic_gradient

__all__ = [
    "BENCH_HEADER",
    "BenchRecord",
    "DivergenceError",
    "RATE_HEADER",
    "RatePoint",
    "RunConfig",
    "ScalingResult",
    "TRAIN_DOMINANCE_HEADER",
    "TRAIN_HEADER",
    "TrainRecord",
    "bench_preconditioner",
    "bench_scaling",
    "flop_estimate",
    "parse_bench_csv",
    "parse_train_csv",
    "rate_trend_check",
    "run_training",
    "write_bench_csv",
    "write_rate_csv",
    "write_train_csv",
]


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss."""


# ---------------------------------------------------------------------------
# Benchmarks
# ---------------------------------------------------------------------------

@dataclass
class BenchRecord:
    """One timed preconditioner measurement.

    ``total_seconds`` is the median over the outer repetitions of timing
    ``repeats`` back-to-back calls; ``mean_seconds`` keeps the mean alongside
    and is not serialized.
    """

    kind: str
    m: int
    n: int
    repeats: int
    total_seconds: float
    seconds_per_call: float
    flop_estimate: int
    mean_seconds: float | None = field(default=None, compare=False)


@dataclass(frozen=True)
class ScalingResult:
    """Size ladder measurements plus the fitted log-log time exponent."""

    records: tuple[BenchRecord, ...]
    exponent: float
    noisy_sizes: tuple[int, ...]


def flop_estimate(kind: PreconditionerKind | str, m: int, n: int, iterations: int = 5) -> int:
    """Leading-order flop count of one preconditioner call on an m x n input."""
    kind = PreconditionerKind(kind)
    if kind is PreconditionerKind.ROW_NORMALIZE:
        return 3 * m * n + m
    if kind is PreconditionerKind.NEWTON_SCHULZ5:
        s, l = min(m, n), max(m, n)
        return iterations * (4 * s * s * l + 2 * s**3)
    return 0


# Inputs are cycled through a pool big enough to defeat the CPU caches, so
# small shapes are measured against memory like the large ones (an optimizer
# step never re-reads a hot buffer: momentum changes every call). Row
# normalization gets pre-allocated output buffers so the timed region does
# no output-sized allocation.
_POOL_TARGET_BYTES = 128 * 2**20
_POOL_MAX_MATRICES = 256


def _input_pool(rng, m: int, n: int) -> list[Matrix]:
    count = max(1, min(_POOL_MAX_MATRICES, -(-_POOL_TARGET_BYTES // (m * n * 8))))
    return [rng.standard_normal((m, n)) for _ in range(count)]


def _bench_calls(
    kind: PreconditionerKind,
    pool: Sequence[Matrix],
    ns_coeffs: NsCoefficients,
    rn_eps: float,
) -> list[Callable[[], Matrix]]:
    # Late binding through the module so instrumented/stubbed operators are
    # picked up; everything here is prepared outside the timed region.
    if kind is PreconditionerKind.ROW_NORMALIZE:
        return [
            lambda v=v, o=np.empty_like(v): preconditioners.row_normalize(v, rn_eps, out=o)
            for v in pool
        ]
    if kind is PreconditionerKind.NEWTON_SCHULZ5:
        return [lambda v=v: preconditioners.newton_schulz5(v, ns_coeffs) for v in pool]
    return [lambda v=v: v for v in pool]


def _timed_totals(calls, repeats: int, outer_reps: int, warmup: int) -> list[float]:
    size = len(calls)
    for i in range(warmup):
        calls[i % size]()
    totals = []
    idx = 0
    for _ in range(outer_reps):
        start = time.perf_counter()
        for _ in range(repeats):
            calls[idx % size]()
            idx += 1
        totals.append(time.perf_counter() - start)
    return totals


def bench_preconditioner(
    kind: PreconditionerKind | str,
    m: int,
    n: int,
    repeats: int = 100,
    *,
    outer_reps: int = 5,
    warmup: int = 2,
    seed: int = 0,
    ns_coeffs: NsCoefficients = DEFAULT_NS_COEFFS,
    rn_eps: float = DEFAULT_RN_EPS,
) -> BenchRecord:
    """Time ``repeats`` preconditioner calls on pre-generated m x n inputs."""
    kind = PreconditionerKind(kind)
    if repeats < 1 or outer_reps < 1:
        raise ValueError("repeats and outer_reps must be >= 1")
    rng = np.random.default_rng(seed)
    calls = _bench_calls(kind, _input_pool(rng, m, n), ns_coeffs, rn_eps)
    totals = _timed_totals(calls, repeats, outer_reps, warmup)
    total = statistics.median(totals)
    return BenchRecord(
        kind=kind.value,
        m=m,
        n=n,
        repeats=repeats,
        total_seconds=total,
        seconds_per_call=total / repeats,
        flop_estimate=flop_estimate(kind, m, n, ns_coeffs.iterations),
        mean_seconds=statistics.fmean(totals),
    )


def _default_scaling_repeats(kind: PreconditionerKind, size: int) -> int:
    if kind is PreconditionerKind.NEWTON_SCHULZ5:
        return max(1, min(50, 2**27 // size**3))
    return max(3, min(200, 2**24 // (size * size)))


def bench_scaling(
    kind: PreconditionerKind | str,
    sizes: Sequence[int],
    repeats: int | None = None,
    *,
    outer_reps: int = 5,
    seed: int = 0,
    ns_coeffs: NsCoefficients = DEFAULT_NS_COEFFS,
    rn_eps: float = DEFAULT_RN_EPS,
    cv_threshold: float = 0.2,
) -> ScalingResult:
    """Benchmark square inputs along a size ladder and fit the log-log slope.

    Sizes whose outer-repetition coefficient of variation exceeds
    ``cv_threshold`` are reported in ``noisy_sizes``.
    """
    kind = PreconditionerKind(kind)
    if len(sizes) < 4:
        raise ValueError(f"need at least 4 sizes for a scaling fit, got {len(sizes)}")
    records = []
    noisy = []
    for size in sizes:
        reps = repeats if repeats is not None else _default_scaling_repeats(kind, size)
        rng = np.random.default_rng(seed)
        calls = _bench_calls(kind, _input_pool(rng, size, size), ns_coeffs, rn_eps)
        totals = _timed_totals(calls, reps, outer_reps, warmup=1)
        total = statistics.median(totals)
        mean = statistics.fmean(totals)
        if mean > 0 and statistics.pstdev(totals) / mean > cv_threshold:
            noisy.append(size)
        records.append(
            BenchRecord(
                kind=kind.value,
                m=size,
                n=size,
                repeats=reps,
                total_seconds=total,
                seconds_per_call=total / reps,
                flop_estimate=flop_estimate(kind, size, size, ns_coeffs.iterations),
                mean_seconds=mean,
            )
        )
    xs = np.log([r.m for r in records])
    ys = np.log([max(r.seconds_per_call, 1e-12) for r in records])
    exponent = float(np.polyfit(xs, ys, 1)[0])
    return ScalingResult(records=tuple(records), exponent=exponent, noisy_sizes=tuple(noisy))


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

@dataclass
class TrainRecord:
    """One logged training step.

    Loss and gradient norms are evaluated at the pre-update iterate, using
    the exact gradient; ``update_norm_f`` is the Frobenius norm of the full
    parameter movement that step.
    """

    step: int
    lr: float
    loss: float
    grad_norm_f: float
    grad_norm_12: float
    update_norm_f: float
    dominance: tuple[DominanceReport, ...] | None = None
    global_dominance: GlobalDominance | None = None


@dataclass
class RunConfig:
    """Everything one training run needs; deterministic given the seed."""

    problem: Problem
    optimizer: OptimizerConfig
    schedule: Schedule
    total_steps: int
    noise: NoiseModel = NoiseModel()
    seed: int = 0
    log_every: int = 1
    track_dominance: bool = False
    out_path: str | None = None

    def __post_init__(self):
        if self.total_steps < 0:
            raise ValueError(f"total_steps must be >= 0, got {self.total_steps}")
        if self.schedule.total_steps < max(1, self.total_steps):
            raise ValueError(
                f"schedule covers {self.schedule.total_steps} steps but the run "
                f"has {self.total_steps}"
            )
        if self.log_every < 1:
            raise ValueError(f"log_every must be >= 1, got {self.log_every}")


_MATRIX_STEP = {
    OptimizerKind.RMNP: rmnp_step,
    OptimizerKind.MUON: muon_step,
    OptimizerKind.MOMENTUM_SGD: momentum_sgd_step,
}


def _one_two_any(g: np.ndarray) -> float:
    # 1-D parameters count as a single row.
    return one_two_norm(g) if g.ndim == 2 else float(np.linalg.norm(g))


def _grad_norms(grads: Sequence[np.ndarray]) -> tuple[float, float]:
    fro = math.sqrt(sum(float(np.sum(g * g)) for g in grads))
    one_two = sum(_one_two_any(g) for g in grads)
    return fro, one_two


def run_training(cfg: RunConfig) -> list[TrainRecord]:
    """Run ``cfg.total_steps`` optimization steps and return the logged records.

    Matrix parameters go to the configured matrix optimizer, everything else
    to AdamW; a pure-AdamW run sends all parameters to AdamW. Raises
    DivergenceError naming the step when the loss turns non-finite.
    """
    problem = cfg.problem
    params = problem.initial_params(cfg.seed)
    groups = partition_params([p.shape for p in params])
    pure_adamw = cfg.optimizer.kind is OptimizerKind.ADAMW
    matrix_groups = [g for g in groups if g.use_matrix]
    if cfg.track_dominance and (pure_adamw or not matrix_groups):
        raise ValueError("dominance logging needs matrix parameters on the matrix optimizer")
    step_fn = None if pure_adamw else _MATRIX_STEP[cfg.optimizer.kind]
    states = [OptimizerState() for _ in params]
    sched_matrix = cfg.schedule
    sched_adamw = replace(cfg.schedule, base_lr=cfg.optimizer.lr_adamw)

    records: list[TrainRecord] = []
    for t in range(1, cfg.total_steps + 1):
        loss = problem.loss(params)
        if not math.isfinite(loss):
            raise DivergenceError(f"non-finite loss at step {t}")
        true_grads = problem.grad(params)
        grads = stochastic_gradient(problem, params, cfg.noise, t, grads=true_grads)
        lr_matrix = schedule_lr(sched_matrix, t)
        lr_adamw = schedule_lr(sched_adamw, t)
        logging = t % cfg.log_every == 0

        update_sq = 0.0
        reports: list[DominanceReport] = []
        new_params = []
        for p, g, state, group in zip(params, grads, states, groups):
            if group.use_matrix and not pure_adamw:
                p_new = step_fn(p, g, state, cfg.optimizer, lr_matrix)
                if logging and cfg.track_dominance:
                    reports.append(dominance_report(t, group.param_id, row_ratios(state.v)))
            else:
                p_new = adamw_step(p, g, state, cfg.optimizer, lr_adamw)
            update_sq += float(np.sum((p_new - p) ** 2))
            new_params.append(p_new)
        params = new_params

        if logging:
            fro, one_two = _grad_norms(true_grads)
            records.append(
                TrainRecord(
                    step=t,
                    lr=lr_adamw if pure_adamw else lr_matrix,
                    loss=loss,
                    grad_norm_f=fro,
                    grad_norm_12=one_two,
                    update_norm_f=math.sqrt(update_sq),
                    dominance=tuple(reports) if cfg.track_dominance else None,
                    global_dominance=global_aggregate(reports) if reports else None,
                )
            )
    return records


# ---------------------------------------------------------------------------
# Rate-trend checks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RatePoint:
    """Average gradient norm over one run of ``total_steps`` steps."""

    total_steps: int
    avg_grad_norm: float
    lr: float
    one_minus_beta: float


def rate_trend_check(
    problem: Problem,
    kind: OptimizerKind | str,
    t_values: Sequence[int],
    *,
    sigma: float = 1.0,
    batch: int = 1,
    seed: int = 0,
    criterion: str = "fro",
    inf_two_estimate: float | None = None,
    initial: np.ndarray | None = None,
) -> list[RatePoint]:
    """For each horizon T, set (lr, momentum) from the theory-prescribed
    schedule and report the run-averaged gradient norm.

    ``criterion`` selects the norm being averaged and the matching schedule:
    "fro" and "one-two" use the Frobenius smoothness constant; "inf-two" uses
    a sampled estimate of the (inf,2) constant. Longer horizons should not
    increase the average.
    """
    kind = OptimizerKind(kind)
    if kind not in _MATRIX_STEP:
        raise ValueError(f"rate trend check needs a matrix optimizer, got {kind.value}")
    if criterion not in ("fro", "one-two", "inf-two"):
        raise ValueError(f"unknown criterion {criterion!r}")
    if len(problem.shapes) != 1 or len(problem.shapes[0]) != 2:
        raise ValueError("rate trend check needs a single matrix parameter")
    if problem.f_star is None:
        raise ValueError("rate trend check needs a known loss lower bound")
    m, _ = problem.shapes[0]
    step_fn = _MATRIX_STEP[kind]
    w0 = initial.copy() if initial is not None else problem.initial_params(seed)[0]
    delta = max(problem.loss([w0]) - problem.f_star, 0.0)

    if criterion == "inf-two":
        smoothness = (
            inf_two_estimate
            if inf_two_estimate is not None
            else estimate_inf_two_smoothness(problem, seed)
        )
    else:
        if problem.lipschitz_f is None:
            raise ValueError("rate trend check needs the problem's smoothness constant")
        smoothness = problem.lipschitz_f

    beta_denom = math.sqrt(m) + 1 if criterion == "fro" else 2 * math.sqrt(m)
    noise = NoiseModel(sigma=sigma, batch=batch, seed=seed)
    points = []
    for total in t_values:
        if total < 1:
            raise ValueError(f"horizons must be >= 1, got {total}")
        if delta == 0.0:
            one_minus_beta, eta = 1.0, 0.0
        else:
            if sigma > 0:
                one_minus_beta = min(
                    math.sqrt(smoothness * delta) / (beta_denom * sigma * math.sqrt(total)),
                    1.0,
                )
            else:
                one_minus_beta = 1.0
            step_scale = smoothness * total if criterion == "inf-two" else smoothness * m * total
            eta = math.sqrt(one_minus_beta * delta / step_scale)
        opt_cfg = OptimizerConfig(
            kind=kind,
            lr_matrix=max(eta, 1e-300),
            lr_adamw=1.0,
            beta=1.0 - one_minus_beta,
            weight_decay=0.0,
            rms_scaling=False,
        )
        w = w0.copy()
        state = OptimizerState()
        acc = 0.0
        for t in range(1, total + 1):
            g_true = problem.grad([w])[0]
            if criterion == "fro":
                acc += float(np.linalg.norm(g_true))
            else:
                acc += one_two_norm(g_true)
            g = stochastic_gradient(problem, [w], noise, t, grads=[g_true])[0]
            w = step_fn(w, g, state, opt_cfg, eta)
        points.append(
            RatePoint(
                total_steps=int(total),
                avg_grad_norm=acc / total,
                lr=eta,
                one_minus_beta=one_minus_beta,
            )
        )
    return points


# ---------------------------------------------------------------------------
# CSV interfaces
# ---------------------------------------------------------------------------

BENCH_HEADER = "kind,m,n,repeats,total_seconds,seconds_per_call,flop_estimate"
TRAIN_HEADER = "step,lr,loss,grad_norm_f,grad_norm_12,update_norm_f"
TRAIN_DOMINANCE_HEADER = (
    TRAIN_HEADER + ",param_id,r_avg,r_min,r_max,rbar_avg,rbar_min,rbar_max"
)
RATE_HEADER = "total_steps,avg_grad_norm,lr,one_minus_beta"


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def _write_lines(path, lines: list[str]) -> None:
    Path(path).write_bytes(("\n".join(lines) + "\n").encode("ascii"))


def write_bench_csv(records: Sequence[BenchRecord], path) -> None:
    lines = [BENCH_HEADER]
    for r in records:
        lines.append(
            ",".join(
                [
                    r.kind,
                    str(r.m),
                    str(r.n),
                    str(r.repeats),
                    _fmt(r.total_seconds),
                    _fmt(r.seconds_per_call),
                    str(r.flop_estimate),
                ]
            )
        )
    _write_lines(path, lines)


def parse_bench_csv(path) -> list[BenchRecord]:
    lines = Path(path).read_text(encoding="ascii").splitlines()
    if not lines or lines[0] != BENCH_HEADER:
        raise ValueError(f"unrecognized bench CSV header in {path}")
    records = []
    for line in lines[1:]:
        kind, m, n, repeats, total, per_call, flops = line.split(",")
        records.append(
            BenchRecord(
                kind=kind,
                m=int(m),
                n=int(n),
                repeats=int(repeats),
                total_seconds=float(total),
                seconds_per_call=float(per_call),
                flop_estimate=int(flops),
            )
        )
    return records


def write_train_csv(records: Sequence[TrainRecord], path) -> None:
    with_dom = bool(records) and records[0].dominance is not None
    if any((r.dominance is not None) != with_dom for r in records):
        raise ValueError("records mix dominance-on and dominance-off steps")
    lines = [TRAIN_DOMINANCE_HEADER if with_dom else TRAIN_HEADER]
    for r in records:
        base = [
            str(r.step),
            _fmt(r.lr),
            _fmt(r.loss),
            _fmt(r.grad_norm_f),
            _fmt(r.grad_norm_12),
            _fmt(r.update_norm_f),
        ]
        if with_dom:
            g = r.global_dominance
            for rep in r.dominance:
                lines.append(
                    ",".join(
                        base
                        + [
                            rep.param_id,
                            _fmt(rep.r_avg),
                            _fmt(rep.r_min),
                            _fmt(rep.r_max),
                            _fmt(g.rbar_avg),
                            _fmt(g.rbar_min),
                            _fmt(g.rbar_max),
                        ]
                    )
                )
        else:
            lines.append(",".join(base))
    _write_lines(path, lines)


def parse_train_csv(path) -> list[TrainRecord]:
    lines = Path(path).read_text(encoding="ascii").splitlines()
    if not lines or lines[0] not in (TRAIN_HEADER, TRAIN_DOMINANCE_HEADER):
        raise ValueError(f"unrecognized train CSV header in {path}")
    with_dom = lines[0] == TRAIN_DOMINANCE_HEADER
    records: list[TrainRecord] = []
    for line in lines[1:]:
        cells = line.split(",")
        step = int(cells[0])
        base = dict(
            step=step,
            lr=float(cells[1]),
            loss=float(cells[2]),
            grad_norm_f=float(cells[3]),
            grad_norm_12=float(cells[4]),
            update_norm_f=float(cells[5]),
        )
        if not with_dom:
            records.append(TrainRecord(**base))
            continue
        report = DominanceReport(
            step=step,
            param_id=cells[6],
            r_avg=float(cells[7]),
            r_min=float(cells[8]),
            r_max=float(cells[9]),
        )
        global_dom = GlobalDominance(
            step=step,
            rbar_avg=float(cells[10]),
            rbar_min=float(cells[11]),
            rbar_max=float(cells[12]),
        )
        if records and records[-1].step == step and records[-1].dominance is not None:
            records[-1].dominance = records[-1].dominance + (report,)
        else:
            records.append(
                TrainRecord(dominance=(report,), global_dominance=global_dom, **base)
            )
    return records


def write_rate_csv(points: Sequence[RatePoint], path) -> None:
    lines = [RATE_HEADER]
    for p in points:
        lines.append(
            ",".join(
                [str(p.total_steps), _fmt(p.avg_grad_norm), _fmt(p.lr), _fmt(p.one_minus_beta)]
            )
        )
    _write_lines(path, lines)
