"""Named invariant suites behind the `verify` command.

Each suite re-derives its expected values through an independent path (hand
algebra, explicit Gram assembly, SVD, finite differences) and checks the
production code against them, so an injected bug in any operator surfaces as
a named failure. All checks go through module attributes, which keeps
instrumented or stubbed operators visible to the suites.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import dominance, matrix, optimizers, preconditioners, problems

__all__ = [
    "SuiteResult",
    "check_dominance_oracle",
    "check_gradient_correctness",
    "check_kronecker_consistency",
    "check_momentum_recursion",
    "check_ns5_oracle",
    "check_rn_frobenius",
    "check_rn_inner_product",
    "check_rn_row_norms",
    "finite_difference_gradient",
    "run_all",
]


@dataclass(frozen=True)
class SuiteResult:
    name: str
    passed: bool
    detail: str = ""


def finite_difference_gradient(
    loss: Callable, params: Sequence[np.ndarray], h: float = 1e-5
) -> list[np.ndarray]:
    """Central-difference gradient of a loss over a parameter list."""
    work = [np.array(p, dtype=np.float64, copy=True) for p in params]
    grads = []
    for p in work:
        g = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            orig = p[idx]
            p[idx] = orig + h
            f_plus = loss(work)
            p[idx] = orig - h
            f_minus = loss(work)
            p[idx] = orig
            g[idx] = (f_plus - f_minus) / (2 * h)
        grads.append(g)
    return grads


def _random_shapes(rng, trials, max_m=64, max_n=256):
    for _ in range(trials):
        yield int(rng.integers(2, max_m + 1)), int(rng.integers(1, max_n + 1))


def check_rn_frobenius(seed: int = 0, trials: int = 200) -> SuiteResult:
    """Row normalization of an all-nonzero-row matrix has Frobenius norm sqrt(m)."""
    rng = np.random.default_rng(seed)
    for m, n in _random_shapes(rng, trials):
        v = rng.standard_normal((m, n))
        d = preconditioners.row_normalize(v, 0.0)
        if abs(matrix.frobenius_norm(d) - math.sqrt(m)) > 1e-10:
            return SuiteResult(
                "RN Frobenius lemma",
                False,
                f"||RN(v)||_F = {matrix.frobenius_norm(d)!r} != sqrt({m}) on {m}x{n}",
            )
    return SuiteResult("RN Frobenius lemma", True)


def check_rn_inner_product(seed: int = 1, trials: int = 200) -> SuiteResult:
    """<v, RN(v)> equals the sum of row norms and is at least ||v||_F."""
    rng = np.random.default_rng(seed)
    for m, n in _random_shapes(rng, trials):
        v = rng.standard_normal((m, n))
        d = preconditioners.row_normalize(v, 0.0)
        ip = matrix.inner(v, d)
        expected = math.fsum(math.sqrt(float(v[i] @ v[i])) for i in range(m))
        if abs(ip - expected) > 1e-9 * max(expected, 1.0):
            return SuiteResult(
                "RN inner-product lemma", False, f"<v,RN(v)>={ip!r} vs row-norm sum {expected!r}"
            )
        if ip < matrix.frobenius_norm(v) - 1e-12:
            return SuiteResult(
                "RN inner-product lemma", False, f"<v,RN(v)>={ip!r} below ||v||_F"
            )
    return SuiteResult("RN inner-product lemma", True)


def check_rn_row_norms(seed: int = 2, trials: int = 200) -> SuiteResult:
    """Every row of the normalized matrix has unit norm (max row norm 1)."""
    rng = np.random.default_rng(seed)
    for m, n in _random_shapes(rng, trials):
        v = rng.standard_normal((m, n))
        d = preconditioners.row_normalize(v, 0.0)
        if abs(matrix.inf_two_norm(d) - 1.0) > 1e-12:
            return SuiteResult(
                "RN row-norm lemma", False, f"max row norm {matrix.inf_two_norm(d)!r} != 1"
            )
    return SuiteResult("RN row-norm lemma", True)


def check_kronecker_consistency(seed: int = 3, trials: int = 200) -> SuiteResult:
    """Inverting the diagonal row-scaling factor reproduces row normalization."""
    rng = np.random.default_rng(seed)
    for m, n in _random_shapes(rng, trials, max_m=32, max_n=64):
        v = rng.standard_normal((m, n))
        factor = preconditioners.rmnp_kronecker_preconditioner(v)
        applied = np.diag(1.0 / np.diag(factor)) @ v
        gap = np.abs(applied - preconditioners.row_normalize(v, 0.0)).max()
        if gap > 1e-12:
            return SuiteResult(
                "Kronecker consistency", False, f"max entry gap {gap!r} on {m}x{n}"
            )
    return SuiteResult("Kronecker consistency", True)


def check_ns5_oracle(seed: int = 4, trials: int = 100, m: int = 16) -> SuiteResult:
    """Newton-Schulz output stays near the exact polar factor with singular
    values inside (0.2, 1.4), on well-conditioned inputs."""
    rng = np.random.default_rng(seed)
    tol = 0.35 * math.sqrt(m)
    for _ in range(trials):
        u, _ = np.linalg.qr(rng.standard_normal((m, m)))
        w, _ = np.linalg.qr(rng.standard_normal((m, m)))
        v = u @ np.diag(rng.uniform(1.0, 10.0, size=m)) @ w.T
        approx = preconditioners.newton_schulz5(v)
        exact = preconditioners.exact_orthogonalize(v)
        err = float(np.linalg.norm(approx - exact))
        if err > tol:
            return SuiteResult("NS5 oracle", False, f"polar gap {err!r} exceeds {tol!r}")
        s = np.linalg.svd(approx, compute_uv=False)
        if s.min() <= 0.2 or s.max() >= 1.4:
            return SuiteResult(
                "NS5 oracle", False, f"singular values [{s.min()!r}, {s.max()!r}] leave (0.2, 1.4)"
            )
    return SuiteResult("NS5 oracle", True)


def check_dominance_oracle(seed: int = 5, trials: int = 200) -> SuiteResult:
    """Dominance ratios agree with an explicit-Gram recomputation and with the
    streaming path; hand cases (equal rows, orthogonal rows) are exact."""
    rng = np.random.default_rng(seed)
    for m, n in _random_shapes(rng, trials, max_m=24, max_n=64):
        v = rng.standard_normal((m, n))
        got = dominance.row_ratios(v).values
        g = v @ v.T
        expected = np.empty(m)
        for i in range(m):
            off = (np.abs(g[i]).sum() - abs(g[i, i])) / (m - 1)
            expected[i] = g[i, i] / off if off > 0 else (np.inf if g[i, i] > 0 else 0.0)
        if not np.allclose(got, expected, rtol=1e-9):
            return SuiteResult(
                "dominance oracle", False, f"explicit-Gram mismatch on {m}x{n}"
            )
        streaming = dominance.row_ratios_streaming(v).values
        if not np.allclose(got, streaming, rtol=1e-9):
            return SuiteResult(
                "dominance oracle", False, f"streaming mismatch on {m}x{n}"
            )
    equal_rows = dominance.row_ratios(np.ones((4, 3))).values
    if not np.array_equal(equal_rows, np.ones(4)):
        return SuiteResult("dominance oracle", False, "equal rows must give ratios of 1")
    orth = dominance.row_ratios(np.eye(5)).values
    if not np.all(np.isinf(orth)):
        return SuiteResult("dominance oracle", False, "orthogonal rows must give +inf")
    return SuiteResult("dominance oracle", True)


def check_gradient_correctness(seed: int = 6, points: int = 10) -> SuiteResult:
    """Analytic gradients of every problem family match central differences."""
    cases = [
        (problems.make_quadratic(3, 5, condition=6.0), 1e-6),
        (problems.make_logreg(20, 5, seed=seed), 1e-6),
        (problems.make_mlp([3, 3, 2], n_samples=6, seed=seed), 1e-5),
    ]
    rng = np.random.default_rng(seed)
    for problem, tol in cases:
        for _ in range(points):
            params = [0.7 * rng.standard_normal(s) for s in problem.shapes]
            analytic = problem.grad(params)
            fd = finite_difference_gradient(problem.loss, params)
            num = math.sqrt(sum(float(np.sum((a - b) ** 2)) for a, b in zip(analytic, fd)))
            den = max(math.sqrt(sum(float(np.sum(a**2)) for a in analytic)), 1e-12)
            if num / den > tol:
                return SuiteResult(
                    "gradient checks",
                    False,
                    f"{problem.name}: relative gap {num / den!r} exceeds {tol}",
                )
    return SuiteResult("gradient checks", True)


def check_momentum_recursion(seed: int = 7, steps: int = 50) -> SuiteResult:
    """On a noiseless quadratic run the momentum-error recursion residual
    stays below 1e-10 at every step."""
    problem = problems.make_quadratic(8, 12, condition=10.0)
    w = problem.initial_params(seed)[0]
    beta = 0.9
    cfg = optimizers.OptimizerConfig(
        kind="rmnp", lr_matrix=0.01, beta=beta, weight_decay=0.0, rms_scaling=False
    )
    state = optimizers.OptimizerState()
    prev_grad = problem.grad([w])[0]
    prev_err = optimizers.momentum_error(state, prev_grad)
    for t in range(1, steps + 1):
        grad = problem.grad([w])[0]
        w = optimizers.rmnp_step(w, grad, state, cfg, lr_t=0.01)
        err = optimizers.momentum_error(state, grad)
        residual = np.linalg.norm(err - beta * prev_err - beta * (prev_grad - grad))
        if residual > 1e-10:
            return SuiteResult(
                "momentum-error recursion", False, f"residual {residual!r} at step {t}"
            )
        prev_grad, prev_err = grad, err
    return SuiteResult("momentum-error recursion", True)


def run_all(seed: int = 0) -> list[SuiteResult]:
    """Run every suite; seeds are offset so suites draw independent streams."""
    return [
        check_rn_frobenius(seed),
        check_rn_inner_product(seed + 1),
        check_rn_row_norms(seed + 2),
        check_kronecker_consistency(seed + 3),
        check_ns5_oracle(seed + 4),
        check_dominance_oracle(seed + 5),
        check_gradient_correctness(seed + 6),
        check_momentum_recursion(seed + 7),
    ]
