import math

import numpy as np
import pytest

from rmnp import problems as pb


def finite_difference(loss, params, h=1e-5):
    """Central-difference gradient oracle, entry by entry."""
    work = [p.copy() for p in params]
    grads = []
    for k, p in enumerate(work):
        g = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            orig = p[idx]
            p[idx] = orig + h
            fp = loss(work)
            p[idx] = orig - h
            fm = loss(work)
            p[idx] = orig
            g[idx] = (fp - fm) / (2 * h)
        grads.append(g)
    return grads


def relative_gap(a, b):
    num = math.sqrt(sum(float(np.sum((x - y) ** 2)) for x, y in zip(a, b)))
    den = math.sqrt(sum(float(np.sum(x ** 2)) for x in a))
    return num / max(den, 1e-12)


class TestQuadratic:
    def test_condition_one_is_plain_squared_norm(self):
        p = pb.make_quadratic(3, 4, condition=1.0)
        w = np.full((3, 4), 2.0)
        assert p.loss([w]) == pytest.approx(0.5 * 4.0 * 12, rel=1e-15)
        np.testing.assert_allclose(p.grad([w])[0], w)

    def test_gradient_vanishes_at_origin(self):
        p = pb.make_quadratic(2, 5, condition=7.0)
        np.testing.assert_array_equal(p.grad([np.zeros((2, 5))])[0], 0.0)

    def test_gradient_matches_finite_differences(self):
        p = pb.make_quadratic(3, 3, condition=10.0)
        rng = np.random.default_rng(0)
        w = rng.standard_normal((3, 3))
        fd = finite_difference(p.loss, [w])
        assert relative_gap(p.grad([w]), fd) < 1e-6

    def test_lipschitz_bound_on_random_pairs(self):
        p = pb.make_quadratic(4, 6, condition=9.0)
        rng = np.random.default_rng(1)
        for _ in range(100):
            w1 = rng.standard_normal((4, 6))
            w2 = rng.standard_normal((4, 6))
            lhs = np.linalg.norm(p.grad([w1])[0] - p.grad([w2])[0])
            rhs = p.lipschitz_f * np.linalg.norm(w1 - w2)
            assert lhs <= rhs * (1 + 1e-12)

    def test_loss_respects_lower_bound(self):
        p = pb.make_quadratic(2, 2, condition=3.0)
        rng = np.random.default_rng(2)
        for _ in range(20):
            assert p.loss([rng.standard_normal((2, 2))]) >= p.f_star

    def test_rejects_condition_below_one(self):
        with pytest.raises(ValueError):
            pb.make_quadratic(2, 2, condition=0.5)


class TestLogreg:
    def test_zero_weights_loss_is_log_two(self):
        p = pb.make_logreg(40, 6, seed=3)
        assert p.loss([np.zeros(6)]) == pytest.approx(math.log(2), rel=1e-12)

    def test_gradient_matches_finite_differences(self):
        p = pb.make_logreg(25, 5, seed=4)
        rng = np.random.default_rng(5)
        for _ in range(5):
            w = rng.standard_normal(5)
            fd = finite_difference(p.loss, [w])
            assert relative_gap(p.grad([w]), fd) < 1e-6

    def test_huge_regularizer_drives_optimum_to_zero(self):
        p = pb.make_logreg(30, 4, seed=6, reg=1e6)
        w = np.full(4, 0.5)
        for _ in range(2000):
            w = w - 1e-7 * p.grad([w])[0]
        assert np.linalg.norm(w) < 1e-3

    def test_dataset_is_separable(self):
        # a short full-gradient logistic fit must classify every sample
        p = pb.make_logreg(50, 8, seed=7, margin=0.75, reg=1e-4)
        x, y = p.data
        w = np.zeros(8)
        for _ in range(2000):
            w = w - 1.0 * p.grad([w])[0]
        assert np.min(y * (x @ w)) > 0


class TestMlp:
    def test_zero_weights_loss_is_mean_squared_target_norm(self):
        p = pb.make_mlp([4, 5, 2], n_samples=16, seed=8)
        params = [np.zeros(s) for s in p.shapes]
        _, y = p.data
        assert p.loss(params) == pytest.approx(float(np.sum(y**2)) / 16, rel=1e-12)

    def test_gradients_match_finite_differences_on_421_net(self):
        p = pb.make_mlp([4, 2, 2], n_samples=8, seed=9)
        rng = np.random.default_rng(10)
        params = [0.5 * rng.standard_normal(s) for s in p.shapes]
        fd = finite_difference(p.loss, params)
        assert relative_gap(p.grad(params), fd) < 1e-5

    def test_duplicate_rows_give_identical_gradient_rows(self):
        p = pb.make_mlp([3, 4, 2], n_samples=10, seed=11)
        rng = np.random.default_rng(12)
        w1 = rng.standard_normal((4, 3))
        w1[1] = w1[0]  # two identical hidden units
        w2 = rng.standard_normal((2, 4))
        w2[:, 1] = w2[:, 0]  # symmetric outgoing weights
        params = [w1, np.zeros(4), w2, np.zeros(2)]
        g = p.grad(params)
        np.testing.assert_allclose(g[0][0], g[0][1], rtol=1e-12)

    def test_initial_params_are_deterministic(self):
        p = pb.make_mlp([4, 4, 2], n_samples=4, seed=13)
        a = p.initial_params(seed=1)
        b = p.initial_params(seed=1)
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x, y)

    def test_rejects_single_layer(self):
        with pytest.raises(ValueError):
            pb.make_mlp([4, 2], n_samples=4, seed=0)


class TestEveryProblemGradCheck:
    @pytest.mark.parametrize(
        "problem,tol",
        [
            (pb.make_quadratic(3, 5, condition=4.0), 1e-6),
            (pb.make_logreg(20, 6, seed=14), 1e-6),
            (pb.make_mlp([3, 3, 2], n_samples=6, seed=15), 1e-5),
        ],
        ids=["quadratic", "logreg", "mlp"],
    )
    def test_ten_random_points(self, problem, tol):
        rng = np.random.default_rng(16)
        for _ in range(10):
            params = [0.7 * rng.standard_normal(s) for s in problem.shapes]
            fd = finite_difference(problem.loss, params)
            assert relative_gap(problem.grad(params), fd) < tol


class TestStochasticGradient:
    def test_sigma_zero_returns_exact_gradient(self):
        p = pb.make_quadratic(3, 4, condition=2.0)
        w = p.initial_params(seed=17)
        noise = pb.NoiseModel(sigma=0.0, batch=1, seed=0)
        np.testing.assert_array_equal(
            pb.stochastic_gradient(p, w, noise, t=5)[0], p.grad(w)[0]
        )

    def test_deterministic_in_seed_and_step(self):
        p = pb.make_quadratic(4, 4, condition=3.0)
        w = p.initial_params(seed=18)
        noise = pb.NoiseModel(sigma=2.0, batch=4, seed=99)
        a = pb.stochastic_gradient(p, w, noise, t=7)[0]
        b = pb.stochastic_gradient(p, w, noise, t=7)[0]
        np.testing.assert_array_equal(a, b)
        c = pb.stochastic_gradient(p, w, noise, t=8)[0]
        assert np.any(a != c)

    def test_empirical_mean_is_unbiased(self):
        p = pb.make_quadratic(4, 8, condition=1.0)
        w = p.initial_params(seed=19)
        sigma, batch, draws = 1.5, 2, 10_000
        noise = pb.NoiseModel(sigma=sigma, batch=batch, seed=5)
        acc = np.zeros((4, 8))
        for t in range(1, draws + 1):
            acc += pb.stochastic_gradient(p, w, noise, t)[0]
        mean_err = np.abs(acc / draws - p.grad(w)[0]).sum()
        # entrywise aggregate within 3 * per-entry-sem * sqrt(entries)
        entries = 32
        sem = sigma / math.sqrt(batch * entries * draws)
        assert mean_err <= 3.0 * sem * entries

    def test_empirical_variance_matches_sigma_over_batch(self):
        p = pb.make_quadratic(4, 8, condition=1.0)
        w = p.initial_params(seed=20)
        sigma, batch, draws = 2.0, 4, 10_000
        noise = pb.NoiseModel(sigma=sigma, batch=batch, seed=6)
        g0 = p.grad(w)[0]
        total = 0.0
        for t in range(1, draws + 1):
            xi = pb.stochastic_gradient(p, w, noise, t)[0] - g0
            total += float(np.sum(xi * xi))
        assert total / draws == pytest.approx(sigma**2 / batch, rel=0.05)

    def test_multi_parameter_noise_splits_by_parameter(self):
        p = pb.make_mlp([3, 3, 2], n_samples=4, seed=21)
        params = p.initial_params(seed=21)
        noise = pb.NoiseModel(sigma=1.0, batch=1, seed=7)
        g = pb.stochastic_gradient(p, params, noise, t=1)
        assert [x.shape for x in g] == [x.shape for x in p.grad(params)]

    def test_noise_model_validation(self):
        with pytest.raises(ValueError):
            pb.NoiseModel(sigma=-1.0)
        with pytest.raises(ValueError):
            pb.NoiseModel(batch=0)


class TestSmoothnessEstimate:
    def test_quadratic_estimate_close_to_true_constant(self):
        # for the entrywise quadratic the (inf,2)->(1,2) constant is bounded
        # below by the largest row-curvature; the estimate must be positive
        # and finite, and no larger than m * condition.
        p = pb.make_quadratic(4, 6, condition=5.0)
        est = pb.estimate_inf_two_smoothness(p, seed=22)
        assert 0 < est <= 4 * 5.0 * (1 + 1e-9)

    def test_requires_single_matrix(self):
        p = pb.make_mlp([3, 3, 2], n_samples=4, seed=23)
        with pytest.raises(ValueError):
            pb.estimate_inf_two_smoothness(p)
