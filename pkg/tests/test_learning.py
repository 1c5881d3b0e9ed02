import numpy as np
import pytest

from mfbn.learning import (
    TrainConfig,
    bars_dataset,
    loglik_gradient,
    train,
    true_loglik,
)
from mfbn.network import BeliefNetwork
from mfbn.objectives import Scheme
from mfbn.oracle import ClampContext, exact_log_partition
from mfbn.solver import SolverOptions
from mfbn.validation import random_dag_net


class TestBarsDataset:
    def test_shapes_and_determinism(self):
        a = bars_dataset(50, side=4, seed=3)
        b = bars_dataset(50, side=4, seed=3)
        assert a.shape == (50, 16)
        assert a.dtype == np.int8
        np.testing.assert_array_equal(a, b)
        assert set(np.unique(a)) <= {0, 1}

    def test_patterns_are_bar_unions(self):
        data = bars_dataset(200, side=4, seed=1)
        for img in data.reshape(-1, 4, 4):
            rows_full = np.all(img == 1, axis=1)
            cols_full = np.all(img == 1, axis=0)
            horiz = np.zeros((4, 4), dtype=img.dtype)
            horiz[rows_full, :] = 1
            vert = np.zeros((4, 4), dtype=img.dtype)
            vert[:, cols_full] = 1
            assert np.array_equal(img, horiz) or np.array_equal(img, vert)

    def test_empty_image_frequency(self):
        # Either orientation gives the empty image with probability 2^-4,
        # so about 6.25% of patterns are blank.
        data = bars_dataset(4000, side=4, seed=0)
        frac = float((data.sum(axis=1) == 0).mean())
        assert frac == pytest.approx(1.0 / 16.0, abs=0.02)

    def test_side_validation(self):
        with pytest.raises(ValueError):
            bars_dataset(5, side=0)


class TestGradients:
    def test_envelope_gradient_matches_fd_of_solved_objective(self):
        rng = np.random.default_rng(0)
        net = random_dag_net(rng, 6, "sigmoid", 0.6, 3)
        pattern = [1, 0, 1]
        opts = SolverOptions(tol=1e-12, max_iter=5000)
        gw, gh, res = loglik_gradient(net, pattern, Scheme.G12, opts)
        assert res.converged
        eps = 1e-5
        for i, j in [(3, 0), (4, 2), (5, 1)]:
            if net.weights[i, j] == 0.0:
                continue
            vals = []
            for sign in (+1, -1):
                w = net.weights.copy()
                w[i, j] += sign * eps
                pert = BeliefNetwork(
                    net.n_units, w, net.biases, net.activation, net.visible
                )
                r = solve_fixed_point_obj(pert, pattern, opts)
                vals.append(r)
            fd = -(vals[0] - vals[1]) / (2 * eps)
            assert gw[i, j] == pytest.approx(fd, rel=1e-3, abs=1e-7)

    def test_unconverged_returns_none(self):
        rng = np.random.default_rng(1)
        net = random_dag_net(rng, 6, "sigmoid", 6.0, 2)
        opts = SolverOptions(max_iter=1)
        gw, gh, res = loglik_gradient(net, [1, 0], Scheme.G11, opts, initial=None)
        if not res.converged:
            assert gw is None and gh is None


def solve_fixed_point_obj(net, pattern, opts):
    from mfbn.solver import solve_fixed_point

    return solve_fixed_point(net, pattern, Scheme.G12, opts).objective


class TestTraining:
    def _toy_setup(self, act="sigmoid"):
        rng = np.random.default_rng(5)
        n = 7
        net = random_dag_net(rng, n, act, 0.1, 4)
        data = rng.integers(0, 2, (30, 4))
        return net, data

    def test_likelihood_improves_on_toy_problem(self):
        net, data = self._toy_setup()
        before = true_loglik(net, data)
        trained, history = train(
            net,
            data,
            TrainConfig(epochs=15, learning_rate=0.2, eval_every=5),
        )
        after = true_loglik(trained, data)
        assert after > before
        assert history.records[0].epoch == 0
        assert history.records[-1].epoch == 15
        assert history.records[-1].mean_true_loglik == pytest.approx(after)

    def test_topology_preserved(self):
        net, data = self._toy_setup()
        support = net.weights != 0.0
        trained, _ = train(net, data, TrainConfig(epochs=5, learning_rate=0.2))
        assert np.all(trained.weights[~support] == 0.0)

    def test_noisyor_parameters_stay_nonnegative(self):
        net, data = self._toy_setup("noisy_or")
        trained, _ = train(
            net, data, TrainConfig(epochs=8, learning_rate=0.3, eval_every=4)
        )
        assert np.all(trained.weights >= 0.0)
        assert np.all(trained.biases >= 0.0)

    def test_pattern_shape_checked(self):
        net, data = self._toy_setup()
        with pytest.raises(ValueError, match="patterns"):
            train(net, np.zeros((5, 3)), TrainConfig(epochs=1))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(learning_rate=0.0)
        with pytest.raises(ValueError):
            TrainConfig(batch="minibatch")


def test_true_loglik_matches_oracle():
    rng = np.random.default_rng(9)
    net = random_dag_net(rng, 6, "sigmoid", 0.7, 3)
    patterns = [[0, 0, 0], [1, 1, 0]]
    ref = np.mean(
        [exact_log_partition(ClampContext(net, p)) for p in patterns]
    )
    assert true_loglik(net, patterns) == pytest.approx(float(ref), abs=1e-12)
