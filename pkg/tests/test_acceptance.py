"""End-to-end acceptance gate: one test per criterion, stated tolerances only.

The conftest terminal summary prints one PASS/FAIL line per criterion after
the run. Timing-sensitive criteria assert their stated runtime budgets.
"""

import math
import time

import numpy as np

from rmnp import cli
from rmnp import matrix as mx
from rmnp import preconditioners as pc
from rmnp.dominance import row_ratios, row_ratios_streaming
from rmnp.harness import (
    RunConfig,
    bench_scaling,
    rate_trend_check,
    run_training,
)
from rmnp.optimizers import (
    OptimizerConfig,
    OptimizerState,
    Schedule,
    descent_step_bound,
    momentum_error,
    rmnp_step,
)
from rmnp.problems import NoiseModel, make_logreg, make_mlp, make_quadratic


def random_shape(rng, max_m=64, max_n=256):
    return int(rng.integers(2, max_m + 1)), int(rng.integers(1, max_n + 1))


def conditioned_square(rng, m, cond_max):
    u, _ = np.linalg.qr(rng.standard_normal((m, m)))
    w, _ = np.linalg.qr(rng.standard_normal((m, m)))
    return u @ np.diag(rng.uniform(1.0, cond_max, size=m)) @ w.T


def test_01_rn_lemma_suite():
    start = time.perf_counter()
    rng = np.random.default_rng(101)
    for _ in range(1000):
        m, n = random_shape(rng)
        v = rng.standard_normal((m, n))
        d = pc.row_normalize(v, 0.0)
        assert abs(mx.frobenius_norm(d) - math.sqrt(m)) < 1e-10
        ip = mx.inner(v, d)
        one_two = mx.one_two_norm(v)
        assert abs(ip - one_two) <= 1e-9 * one_two
        assert ip >= mx.frobenius_norm(v)
        assert abs(mx.inf_two_norm(d) - 1.0) < 1e-12
    assert time.perf_counter() - start < 5.0


def test_02_kronecker_consistency():
    rng = np.random.default_rng(102)
    for _ in range(200):
        m, n = random_shape(rng)
        v = rng.standard_normal((m, n))
        factor = pc.rmnp_kronecker_preconditioner(v)
        applied = np.diag(1.0 / np.diag(factor)) @ v
        assert np.abs(applied - pc.row_normalize(v, 0.0)).max() <= 1e-12


def test_03_ns5_oracle():
    start = time.perf_counter()
    rng = np.random.default_rng(103)
    m = 16
    for _ in range(100):
        v = conditioned_square(rng, m, cond_max=10.0)
        approx = pc.newton_schulz5(v)
        exact = pc.exact_orthogonalize(v)
        assert np.linalg.norm(approx - exact) <= 0.35 * math.sqrt(m)
        s = np.linalg.svd(approx, compute_uv=False)
        assert s.min() > 0.2
        assert s.max() < 1.4
    assert time.perf_counter() - start < 10.0


def test_04_complexity_scaling():
    start = time.perf_counter()
    rn = bench_scaling("rn", [256, 512, 1024, 2048, 4096], seed=104)
    ns5 = bench_scaling("ns5", [256, 512, 1024, 2048], seed=104)
    assert 1.6 <= rn.exponent <= 2.4, f"rn exponent {rn.exponent}"
    assert 2.5 <= ns5.exponent <= 3.4, f"ns5 exponent {ns5.exponent}"
    rn_at = {r.m: r.seconds_per_call for r in rn.records}
    ns_at = {r.m: r.seconds_per_call for r in ns5.records}
    largest_common = max(set(rn_at) & set(ns_at))
    ratio = ns_at[largest_common] / rn_at[largest_common]
    assert ratio >= 5.0, f"rn only {ratio:.1f}x faster at {largest_common}"
    assert time.perf_counter() - start < 180.0


def test_05_dominance_oracle():
    rng = np.random.default_rng(105)
    for _ in range(200):
        m, n = random_shape(rng)
        a = row_ratios(np.asarray(v := rng.standard_normal((m, n)))).values
        b = row_ratios_streaming(v).values
        finite = np.isfinite(a)
        assert np.array_equal(finite, np.isfinite(b))
        assert np.allclose(a[finite], b[finite], rtol=1e-9)
    equal_rows = row_ratios(np.tile([[2.0, -1.0, 0.5]], (5, 1))).values
    assert np.array_equal(equal_rows, np.ones(5))
    orthogonal = row_ratios(np.eye(6)).values
    assert np.all(np.isinf(orthogonal))


def test_06_gradient_correctness():
    start = time.perf_counter()
    problems = [
        make_quadratic(4, 6, condition=8.0),
        make_logreg(24, 6, seed=106),
        make_mlp([4, 4, 2], n_samples=8, seed=106),
    ]
    rng = np.random.default_rng(106)
    h = 1e-5
    for problem in problems:
        for _ in range(10):
            params = [0.7 * rng.standard_normal(s) for s in problem.shapes]
            analytic = problem.grad(params)
            num_sq = 0.0
            den_sq = 0.0
            work = [p.copy() for p in params]
            for k, p in enumerate(work):
                for idx in np.ndindex(p.shape):
                    orig = p[idx]
                    p[idx] = orig + h
                    f_plus = problem.loss(work)
                    p[idx] = orig - h
                    f_minus = problem.loss(work)
                    p[idx] = orig
                    fd = (f_plus - f_minus) / (2 * h)
                    num_sq += (analytic[k][idx] - fd) ** 2
                    den_sq += analytic[k][idx] ** 2
            assert math.sqrt(num_sq) <= 1e-5 * max(math.sqrt(den_sq), 1e-12), problem.name
    assert time.perf_counter() - start < 30.0


def test_07_momentum_error_recursion():
    problem = make_quadratic(8, 12, condition=10.0)
    w = problem.initial_params(seed=107)[0]
    beta = 0.9
    cfg = OptimizerConfig(
        kind="rmnp", lr_matrix=0.01, beta=beta, weight_decay=0.0, rms_scaling=False
    )
    state = OptimizerState()
    prev_grad = problem.grad([w])[0]
    prev_err = momentum_error(state, prev_grad)
    for _ in range(50):
        grad = problem.grad([w])[0]
        w = rmnp_step(w, grad, state, cfg, lr_t=0.01)
        err = momentum_error(state, grad)
        residual = np.linalg.norm(err - beta * prev_err - beta * (prev_grad - grad))
        assert residual < 1e-10
        prev_grad, prev_err = grad, err


def test_08_descent_property():
    problem = make_quadratic(8, 12, condition=10.0)
    w = problem.initial_params(seed=108)[0]
    lr = 0.1 * descent_step_bound(problem.grad([w])[0], problem.lipschitz_f)
    cfg = OptimizerConfig(
        kind="rmnp", lr_matrix=lr, beta=0.0, weight_decay=0.0, rms_scaling=False
    )
    state = OptimizerState()
    losses = [problem.loss([w])]
    for _ in range(100):
        w = rmnp_step(w, problem.grad([w])[0], state, cfg, lr_t=lr)
        losses.append(problem.loss([w]))
    assert all(after < before for before, after in zip(losses, losses[1:]))


def test_09_rate_trend():
    start = time.perf_counter()
    problem = make_quadratic(16, 64, condition=1.0)
    points = rate_trend_check(
        problem, "rmnp", [1000, 4000, 16000], sigma=1.0, batch=1, seed=109, criterion="fro"
    )
    averages = [p.avg_grad_norm for p in points]
    for shorter, longer in zip(averages, averages[1:]):
        assert longer <= 1.10 * shorter, f"trend broke: {averages}"
    assert time.perf_counter() - start < 120.0


def test_10_optimizer_parity_on_mlp():
    start = time.perf_counter()
    steps = 300
    seeds = (1, 2, 3)
    lr_grid = (0.005, 0.01, 0.02, 0.05)

    def tuned_final_loss(kind):
        best = math.inf
        for lr in lr_grid:
            finals = []
            for seed in seeds:
                problem = make_mlp([4, 8, 2], n_samples=64, seed=seed)
                cfg = RunConfig(
                    problem=problem,
                    optimizer=OptimizerConfig(kind=kind, lr_matrix=lr, weight_decay=0.0),
                    schedule=Schedule(
                        kind="cosine-warmup", total_steps=steps, base_lr=lr
                    ),
                    total_steps=steps,
                    noise=NoiseModel(sigma=0.0, batch=1, seed=seed),
                    seed=seed,
                    log_every=steps,
                )
                finals.append(run_training(cfg)[-1].loss)
            best = min(best, sum(finals) / len(finals))
        return best

    muon_loss = tuned_final_loss("muon")
    rmnp_loss = tuned_final_loss("rmnp")
    assert rmnp_loss <= 1.20 * muon_loss, f"rmnp {rmnp_loss} vs muon {muon_loss}"
    assert time.perf_counter() - start < 300.0


def test_11_cli_determinism(tmp_path):
    invocations = {
        "train": lambda out: ["train", "--out", out, "--steps", "40", "--seed", "7",
                              "--sigma", "0.5"],
        "rate": lambda out: ["rate-check", "--m", "4", "--n", "8", "--sigma", "0.5",
                             "--t-values", "50,100", "--seed", "7", "--out", out],
        "demo": lambda out: ["dominance-demo", "--steps", "25", "--widths", "4,4,2",
                             "--seed", "7", "--out", out],
    }
    for name, build in invocations.items():
        paths = [str(tmp_path / f"{name}_{i}.csv") for i in (0, 1)]
        for path in paths:
            assert cli.main(build(path)) == 0
        first, second = (open(p, "rb").read() for p in paths)
        assert first == second, f"{name} output not byte-identical"
