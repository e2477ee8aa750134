"""Desk-scale differentiable objectives with analytic gradients.

Three families: an entrywise quadratic with a prescribed curvature span, an
l2-regularized logistic regression on a separable synthetic dataset, and a
small tanh MLP regression with hand-written reverse-mode gradients. A
counter-based noise model turns any of them into an unbiased stochastic
oracle with known variance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "NoiseModel",
    "Problem",
    "estimate_inf_two_smoothness",
    "make_logreg",
    "make_mlp",
    "make_quadratic",
    "stochastic_gradient",
]

Params = "list[np.ndarray]"

# Spawn key tag separating parameter-init draws from gradient-noise draws.
_INIT_STREAM = 0x1A17


@dataclass(frozen=True)
class Problem:
    """An objective: loss and gradient evaluators over a list of parameters.

    ``f_star`` is a known lower bound on the loss (the infimum for the
    quadratic). ``lipschitz_f`` is the Frobenius-norm gradient-Lipschitz
    constant when known. ``data`` carries the synthetic (inputs, targets)
    pair for data-driven problems.
    """

    name: str
    shapes: tuple[tuple[int, ...], ...]
    loss: Callable[[Sequence[np.ndarray]], float]
    grad: Callable[[Sequence[np.ndarray]], list[np.ndarray]]
    f_star: float | None = None
    lipschitz_f: float | None = None
    init: Callable[[np.random.Generator], list[np.ndarray]] | None = field(
        default=None, repr=False
    )
    data: tuple[np.ndarray, np.ndarray] | None = field(default=None, repr=False)

    def initial_params(self, seed: int) -> list[np.ndarray]:
        """Seeded starting point; standard normal entries unless the problem
        supplies its own initializer."""
        rng = np.random.default_rng(
            np.random.SeedSequence(entropy=seed, spawn_key=(_INIT_STREAM,))
        )
        if self.init is not None:
            return self.init(rng)
        return [rng.standard_normal(s) for s in self.shapes]


@dataclass(frozen=True)
class NoiseModel:
    """Zero-mean Gaussian gradient noise with total variance sigma^2 / batch."""

    sigma: float = 0.0
    batch: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")
        if self.batch < 1:
            raise ValueError(f"batch must be >= 1, got {self.batch}")


def stochastic_gradient(
    problem: Problem,
    params: Sequence[np.ndarray],
    noise: NoiseModel,
    t: int,
    grads: Sequence[np.ndarray] | None = None,
) -> list[np.ndarray]:
    """Analytic gradient plus i.i.d. Gaussian noise scaled so the expected
    squared Frobenius norm of the perturbation is sigma^2 / batch.

    The noise stream is keyed by (seed, t, parameter index), so draws are
    reproducible and independent of evaluation order. Pass precomputed
    analytic ``grads`` to skip re-evaluating them.
    """
    if grads is None:
        grads = problem.grad(params)
    if noise.sigma == 0.0:
        return list(grads)
    total = sum(g.size for g in grads)
    scale = noise.sigma / math.sqrt(noise.batch * total)
    out = []
    for pid, g in enumerate(grads):
        rng = np.random.default_rng(
            np.random.SeedSequence(entropy=noise.seed, spawn_key=(t, pid))
        )
        out.append(g + scale * rng.standard_normal(g.shape))
    return out


def make_quadratic(m: int, n: int, condition: float = 1.0) -> Problem:
    """Entrywise quadratic 0.5 * sum(a * w^2) with curvature a spanning
    [1, condition]; gradient a * w, smoothness constant = condition."""
    if m < 1 or n < 1:
        raise ValueError("m and n must be positive")
    if condition < 1:
        raise ValueError(f"condition must be >= 1, got {condition}")
    curvature = np.linspace(1.0, condition, m * n).reshape(m, n)

    def loss(params):
        (w,) = params
        return 0.5 * float(np.sum(curvature * w * w))

    def grad(params):
        (w,) = params
        return [curvature * w]

    return Problem(
        name=f"quadratic-{m}x{n}-c{condition:g}",
        shapes=((m, n),),
        loss=loss,
        grad=grad,
        f_star=0.0,
        lipschitz_f=float(condition),
    )


def make_logreg(
    m_samples: int, d_features: int, seed: int, reg: float = 1e-3, margin: float = 1.0
) -> Problem:
    """l2-regularized logistic regression on a synthetic dataset that is
    linearly separable with the given margin.

    Labels are +-1; features are Gaussian noise orthogonal to the true
    direction plus margin * label along it, so the margin is exact.
    """
    if m_samples < 1 or d_features < 1:
        raise ValueError("sizes must be >= 1")
    rng = np.random.default_rng(seed)
    w_true = rng.standard_normal(d_features)
    w_true /= np.linalg.norm(w_true)
    y = rng.choice([-1.0, 1.0], size=m_samples)
    z = rng.standard_normal((m_samples, d_features))
    z -= np.outer(z @ w_true, w_true)
    x = z + margin * y[:, None] * w_true[None, :]

    def loss(params):
        (w,) = params
        scores = y * (x @ w)
        return float(np.logaddexp(0.0, -scores).mean() + 0.5 * reg * w @ w)

    def grad(params):
        (w,) = params
        scores = y * (x @ w)
        sig = 1.0 / (1.0 + np.exp(scores))  # sigmoid(-scores)
        return [-(x.T @ (y * sig)) / m_samples + reg * w]

    lipschitz = 0.25 * float(np.linalg.eigvalsh(x.T @ x).max()) / m_samples + reg
    return Problem(
        name=f"logreg-{m_samples}x{d_features}",
        shapes=((d_features,),),
        loss=loss,
        grad=grad,
        f_star=0.0,
        lipschitz_f=lipschitz,
        data=(x, y),
    )


def _mlp_forward(weights, biases, x):
    activations = [x]
    a = x
    last = len(weights) - 1
    for l, (w, b) in enumerate(zip(weights, biases)):
        z = a @ w.T + b
        a = z if l == last else np.tanh(z)
        activations.append(a)
    return activations


def make_mlp(
    widths: Sequence[int], n_samples: int, seed: int, target_noise: float = 0.0
) -> Problem:
    """tanh MLP regression, mean squared error over a fixed synthetic dataset.

    ``widths`` lists layer sizes input-first; hidden layers use tanh, the
    output layer is linear. Targets come from a seeded teacher network of the
    same architecture, so the objective is realizable. Weight matrices are
    genuine matrix parameters; biases are vectors. Gradients are hand-rolled
    reverse mode.
    """
    widths = [int(w) for w in widths]
    if len(widths) < 3:
        raise ValueError("need at least two layers (three width entries)")
    if min(widths) < 2:
        raise ValueError("every width must be >= 2")
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    n_layers = len(widths) - 1
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n_samples, widths[0]))
    teacher_w = [
        rng.standard_normal((widths[l + 1], widths[l])) / math.sqrt(widths[l])
        for l in range(n_layers)
    ]
    teacher_b = [0.1 * rng.standard_normal(widths[l + 1]) for l in range(n_layers)]
    y = _mlp_forward(teacher_w, teacher_b, x)[-1]
    if target_noise > 0:
        y = y + target_noise * rng.standard_normal(y.shape)

    shapes: list[tuple[int, ...]] = []
    for l in range(n_layers):
        shapes.append((widths[l + 1], widths[l]))
        shapes.append((widths[l + 1],))

    def split(params):
        return list(params[0::2]), list(params[1::2])

    def loss(params):
        weights, biases = split(params)
        pred = _mlp_forward(weights, biases, x)[-1]
        return float(np.sum((pred - y) ** 2) / n_samples)

    def grad(params):
        weights, biases = split(params)
        activations = _mlp_forward(weights, biases, x)
        delta = 2.0 * (activations[-1] - y) / n_samples
        grads: list[np.ndarray] = [None] * (2 * n_layers)
        for l in range(n_layers - 1, -1, -1):
            a_in = activations[l]
            grads[2 * l] = delta.T @ a_in
            grads[2 * l + 1] = delta.sum(axis=0)
            if l > 0:
                delta = (delta @ weights[l]) * (1.0 - activations[l] ** 2)
        return grads

    def init(rng_init):
        params = []
        for l in range(n_layers):
            params.append(
                rng_init.standard_normal((widths[l + 1], widths[l]))
                / math.sqrt(widths[l])
            )
            params.append(np.zeros(widths[l + 1]))
        return params

    return Problem(
        name="mlp-" + "x".join(str(w) for w in widths),
        shapes=tuple(shapes),
        loss=loss,
        grad=grad,
        f_star=0.0,
        init=init,
        data=(x, y),
    )


def estimate_inf_two_smoothness(
    problem: Problem, seed: int = 0, n_pairs: int = 64, spread: float = 1.0
) -> float:
    """Numerical estimate (a lower bound) of the (inf,2)->(1,2) gradient
    Lipschitz constant: max over sampled pairs of
    ||grad(w) - grad(w')||_{1,2} / ||w - w'||_{inf,2}.

    Only defined for single-matrix problems. An estimate, not a certificate.
    """
    if len(problem.shapes) != 1 or len(problem.shapes[0]) != 2:
        raise ValueError("smoothness estimate needs a single matrix parameter")
    rng = np.random.default_rng(seed)
    shape = problem.shapes[0]
    best = 0.0
    for _ in range(n_pairs):
        w = spread * rng.standard_normal(shape)
        w2 = w + spread * rng.standard_normal(shape) * rng.uniform(1e-3, 1.0)
        g1 = problem.grad([w])[0]
        g2 = problem.grad([w2])[0]
        num = np.sqrt(np.einsum("ij,ij->i", g1 - g2, g1 - g2)).sum()
        den = np.sqrt(np.einsum("ij,ij->i", w - w2, w - w2)).max()
        if den > 0:
            best = max(best, float(num / den))
    return best
