import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dense import hamiltonian_matrix
from hqcnbv.ansatz import AnsatzConfig, parameter_count, prepare_state
from hqcnbv.errors import ConfigError
from hqcnbv.hamiltonian import BEARINGS, ExplorationFeatures, QubitLayout, assemble
from hqcnbv.optimizer import (
    ETA_MAX,
    ETA_MIN,
    CostContext,
    HybridCost,
    ObjectiveWeights,
    SpsaConfig,
    adaptive_learning_rate,
    classical_objective,
    ema_smooth,
    optimize,
    spsa_gradient,
    total_cost,
)
from hqcnbv.qsim import PauliSum, expectation
from hqcnbv.world import Cell, Viewpoint, load_scene, new_map, predicted_gain, update_observation

OPEN = {
    "name": "open",
    "width": 10,
    "height": 10,
    "obstacles": [],
    "start": {"x": 2.5, "y": 2.5, "theta": 0.0},
}


class Counter:
    def __init__(self, fn):
        self.fn, self.calls = fn, 0

    def __call__(self, theta):
        self.calls += 1
        return self.fn(theta)


def quadratic(target):
    target = np.asarray(target, dtype=float)
    return lambda t: float(np.sum((np.asarray(t) - target) ** 2))


class TestEma:
    @pytest.mark.parametrize("prev,new,alpha,expected", [(1.0, 0.5, 0.8, 0.9), (0.0, 1.0, 0.8, 0.2), (3.0, 3.0, 0.8, 3.0)])
    def test_examples(self, prev, new, alpha, expected):
        assert ema_smooth(prev, new, alpha) == pytest.approx(expected, abs=1e-15)

    @given(st.floats(-1e6, 1e6), st.floats(-1e6, 1e6), st.floats(0.01, 0.99))
    def test_between_inputs(self, prev, new, alpha):
        out = ema_smooth(prev, new, alpha)
        assert min(prev, new) - 1e-6 <= out <= max(prev, new) + 1e-6


class TestLearningRate:
    def test_fixed_point(self):
        assert adaptive_learning_rate(0.3, 0.0, 0.0, 0.9) == (0.3, 0.0)

    def test_example(self):
        eta, m = adaptive_learning_rate(0.1, 0.01, 0.02, 0.9)
        assert eta == pytest.approx(0.111, abs=1e-15)
        assert m == pytest.approx(0.9 * 0.01 + 0.1 * 0.011, abs=1e-15)

    @given(st.floats(1e-4, 1.0), st.floats(-1, 1), st.floats(-1, 1), st.floats(0, 0.99))
    def test_clamped(self, eta, m, delta, mu):
        out, _ = adaptive_learning_rate(eta, m, delta, mu)
        assert ETA_MIN <= out <= ETA_MAX


class TestGradient:
    def test_separable_quadratic(self):
        theta = np.zeros(6)
        theta[0] = 1.0
        for seed in range(5):
            g, _, _ = spsa_gradient(quadratic(np.zeros(6)), theta, 0.1, np.random.default_rng(seed))
            assert g[0] == pytest.approx(2.0, abs=1e-12)

    def test_constant(self):
        g, _, _ = spsa_gradient(lambda t: 4.2, np.ones(7), 0.3, np.random.default_rng(0))
        assert np.all(g == 0)

    def test_two_evaluations(self):
        cost = Counter(quadratic(np.ones(3)))
        spsa_gradient(cost, np.zeros(3), 0.1, np.random.default_rng(0))
        assert cost.calls == 2

    @pytest.mark.parametrize("c_k", [0.0, -0.1])
    def test_bad_perturbation(self, c_k):
        with pytest.raises(ValueError):
            spsa_gradient(quadratic([0.0]), np.zeros(1), c_k, np.random.default_rng(0))

    @staticmethod
    def _random_quadratic(rng, d):
        a = rng.normal(size=(d, d))
        a = a @ a.T
        b = rng.normal(size=d)
        theta = rng.normal(size=d)
        return (lambda t: float(t @ a @ t + b @ t)), theta, 2 * a @ theta + b

    def test_exact_mean_over_all_perturbations(self):
        cost, theta, true = self._random_quadratic(np.random.default_rng(12), 4)
        c_k = 0.05
        total = np.zeros(4)
        for signs in itertools.product((-1.0, 1.0), repeat=4):
            delta = np.array(signs)
            total += (cost(theta + c_k * delta) - cost(theta - c_k * delta)) / (2 * c_k * delta)
        np.testing.assert_allclose(total / 16, true, atol=1e-10)

    def test_unbiased_on_quadratic(self):
        rng = np.random.default_rng(12)
        cost, theta, true = self._random_quadratic(rng, 2)
        draws = np.array([spsa_gradient(cost, theta, 0.05, rng)[0] for _ in range(10_000)])
        assert np.linalg.norm(draws.mean(axis=0) - true) / np.linalg.norm(true) < 0.02


class TestConfig:
    def test_defaults(self):
        cfg = SpsaConfig()
        assert (cfg.n_iter, cfg.a0, cfg.A, cfg.alpha_gain, cfg.c0, cfg.gamma_gain) == (100, 0.2, 10, 0.602, 0.1, 0.101)
        assert (cfg.momentum, cfg.eta0, cfg.stagnation_window, cfg.shrink, cfg.ema_alpha, cfg.beta) == (
            0.9, 0.15, 10, 0.5, 0.8, 1.0)

    def test_gains(self):
        a, c = SpsaConfig().gains(0)
        assert a == pytest.approx(0.2 / 11**0.602)
        assert c == pytest.approx(0.1)

    @pytest.mark.parametrize(
        "kw", [dict(a0=0), dict(c0=-1), dict(momentum=1.0), dict(ema_alpha=0.0), dict(ema_alpha=1.0),
               dict(n_iter=-1), dict(beta=-0.5), dict(stagnation_window=0)],
    )
    def test_invalid(self, kw):
        with pytest.raises(ConfigError):
            SpsaConfig(**kw)


class TestOptimize:
    def test_zero_iterations(self):
        theta0 = np.array([0.3, -0.2])
        theta, trace = optimize(quadratic([1, 1]), theta0, SpsaConfig(n_iter=0))
        np.testing.assert_array_equal(theta, theta0)
        assert trace.records == []

    def test_deterministic(self):
        runs = [optimize(quadratic(np.arange(4)), np.zeros(4), SpsaConfig(n_iter=40), 9) for _ in range(2)]
        assert runs[0][0].tobytes() == runs[1][0].tobytes()
        assert [r.raw_cost for r in runs[0][1].records] == [r.raw_cost for r in runs[1][1].records]

    @pytest.mark.parametrize("evaluate_iterate,per_iter", [(True, 3), (False, 2)])
    def test_evaluation_count(self, evaluate_iterate, per_iter):
        cost = Counter(quadratic(np.ones(3)))
        _, trace = optimize(cost, np.zeros(3), SpsaConfig(n_iter=17, evaluate_iterate=evaluate_iterate))
        assert cost.calls == trace.n_evaluations == per_iter * 17

    def test_returns_best_smoothed_iterate(self):
        seen = []
        cost = quadratic(np.full(3, 0.4))
        _, trace = optimize(cost, np.zeros(3), SpsaConfig(n_iter=50), 2, lambda k, t: seen.append(t.copy()))
        smoothed = [r.smoothed_cost for r in trace.records]
        k = int(np.argmin(smoothed))
        assert trace.best_iteration == k
        np.testing.assert_array_equal(trace.best_theta, seen[k])
        assert trace.best_smoothed == smoothed[k]

    @given(seed=st.integers(0, 2**32 - 1))
    @settings(max_examples=20, deadline=None)
    def test_trace_invariants(self, seed):
        rng = np.random.default_rng(seed)
        target = rng.uniform(-1, 1, 4)
        noisy = lambda t: quadratic(target)(t) + 0.1 * float(np.sin(37 * t.sum()))
        _, trace = optimize(noisy, np.zeros(4), SpsaConfig(n_iter=60), seed)
        best = np.minimum.accumulate([r.smoothed_cost for r in trace.records])
        assert np.all(np.diff(best) <= 0)
        assert all(ETA_MIN <= r.eta <= ETA_MAX for r in trace.records)

    def test_stagnation_shrinks_rate(self):
        # a cost that only ever increases: the first iteration improves, then nothing does
        calls = iter(range(10**6))
        _, trace = optimize(lambda t: float(next(calls)), np.zeros(2), SpsaConfig(n_iter=40, eta0=0.5))
        etas = [r.eta for r in trace.records]
        assert etas[0] > 0.5  # nudged up
        assert etas[9] == pytest.approx(etas[8], rel=0.01)  # still waiting out the window
        assert etas[10] < 0.96 * etas[9]  # one shrink per window, spread by momentum
        assert np.all(np.diff(etas[10:]) < 0)
        assert etas[-1] < 0.7 * etas[9]

    def test_converges_on_quadratic(self):
        target = np.random.default_rng(5).uniform(-np.pi / 10, np.pi / 10, 5)
        theta, _ = optimize(quadratic(target), np.zeros(5), SpsaConfig(n_iter=300), 5)
        assert np.linalg.norm(theta - target) < 0.05


def features(c=0.2):
    return ExplorationFeatures(
        e={b: v for b, v in zip(BEARINGS, [0.9, 0.2, 0.4, 0.7, 0.1, 0.5, 0.6, 0.3])},
        d_obs=3.0, d_max=8.0, c=c, rho=0.7, dispersion=0.3, target_angle=2.0,
    )


def test_variational_bound_on_toy_register():
    layout = QubitLayout.custom(1, 1, 1, 1)
    h = assemble(features(), layout=layout)
    cfg = AnsatzConfig(layout, layers=3)
    ground = np.linalg.eigvalsh(hamiltonian_matrix(h, 4))[0]
    energy = lambda t: expectation(prepare_state(cfg, t), h)
    theta0 = np.random.default_rng(0).uniform(-0.3, 0.3, parameter_count(cfg))
    theta, trace = optimize(energy, theta0, SpsaConfig(n_iter=300, a0=1.0, eta0=1.0), 0)
    final = energy(theta)
    assert final >= ground - 1e-8
    assert final < energy(theta0)


class TestClassicalObjective:
    def test_hand_computed(self):
        grid = new_map(load_scene(OPEN))
        grid.cells[:] = Cell.FREE
        v0, v1 = Viewpoint(2, 2, 0), Viewpoint(5, 6, 1.0)
        value = classical_objective(v1, v0, grid, ObjectiveWeights(), [0.0, 0.0], [math.pi / 2, 0.0], d_obs=8.0)
        c_m = 5 / 8
        c_s = 1 - 1 / (1 + math.exp(-(8 - 5)))
        c_r = (math.pi**2 / 4) / 2 / math.pi**2
        assert value == pytest.approx(0.5 * c_m + 1.0 * c_s + 0.1 * c_r, abs=1e-12)

    def test_exploration_term(self):
        grid = new_map(load_scene(OPEN))
        v = Viewpoint(5, 5, 0)
        gain = predicted_gain(grid, v)
        assert gain > 0
        value = classical_objective(v, v, grid, ObjectiveWeights(w_M=0, w_S=0, w_R=0), [0], [0], d_obs=8.0)
        assert value == pytest.approx(-gain / (math.pi * 64), abs=1e-12)  # w_E = 1 + c with c = 0

    def test_movement_saturates(self):
        grid = new_map(load_scene(OPEN))
        grid.cells[:] = Cell.FREE
        w = ObjectiveWeights(w_M=1.0, w_S=0, w_R=0)
        value = classical_objective(Viewpoint(9.9, 9.9), Viewpoint(0.1, 0.1), grid, w, [0], [0], d_obs=8.0)
        assert value == pytest.approx(1.0)

    def test_regularizer_wraps_angles(self):
        grid = new_map(load_scene(OPEN))
        grid.cells[:] = Cell.FREE
        w = ObjectiveWeights(w_M=0, w_S=0, w_R=1.0)
        v = Viewpoint(5, 5)
        value = classical_objective(v, v, grid, w, [0.0], [2 * math.pi - 0.1], d_obs=8.0)
        assert value == pytest.approx(0.01 / math.pi**2, abs=1e-12)

    def test_adaptive_exploration_weight(self):
        assert ObjectiveWeights.w_E(0.0) == 1.0
        assert ObjectiveWeights.w_E(0.75) == 1.75


def make_context(h, beta=1.0, **kw):
    scene = load_scene(OPEN)
    grid = new_map(scene)
    update_observation(grid, scene.start)
    cfg = AnsatzConfig()
    return CostContext(cfg, h, grid, scene.start, d_obs=8.0, beta=beta, shots=256, rng_seed=4, **kw)


class TestTotalCost:
    theta = np.random.default_rng(8).uniform(-0.5, 0.5, 100)

    def test_beta_zero_is_expectation(self):
        h = assemble(features())
        ctx = make_context(h, beta=0.0)
        assert total_cost(self.theta, ctx) == expectation(prepare_state(ctx.ansatz, self.theta), h)

    def test_empty_hamiltonian_is_classical(self):
        ctx = make_context(PauliSum(), beta=1.0)
        energy_free = total_cost(self.theta, ctx)
        ctx2 = make_context(PauliSum(), beta=2.0)
        assert total_cost(self.theta, ctx2) == pytest.approx(2 * energy_free, abs=1e-12)

    def test_deterministic(self):
        ctx = make_context(assemble(features()))
        values = {total_cost(self.theta, ctx) for _ in range(3)}
        assert len(values) == 1

    def test_hook_advances_iteration(self):
        ctx = make_context(assemble(features()))
        cost = HybridCost(ctx)
        cost.on_iteration(7, self.theta)
        assert ctx.iteration == 7
        np.testing.assert_array_equal(ctx.theta_prev, self.theta)
        # with theta_prev equal to theta the regularizer vanishes
        assert cost(self.theta) == total_cost(self.theta, ctx)
