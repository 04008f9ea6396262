"""Adaptive SPSA over circuit parameters, plus the hybrid quantum/classical cost."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .ansatz import AnsatzConfig, prepare_amplitudes
from .decode import DecodeTable, decode_parameters, majority_vote_indices
from .errors import ConfigError
from .qsim import PauliSum, StateVector, expectation_array, sample_indices
from .world import GridMap, Viewpoint, coverage, predicted_gain, sensing_disc_cells, wrap_angle

ETA_MIN, ETA_MAX = 1e-4, 1.0


@dataclass(frozen=True)
class SpsaConfig:
    n_iter: int = 100
    a0: float = 0.2
    A: float = 10.0
    alpha_gain: float = 0.602
    c0: float = 0.1
    gamma_gain: float = 0.101
    momentum: float = 0.9
    eta0: float = 0.15
    stagnation_window: int = 10
    shrink: float = 0.5
    nudge: float = 0.05
    ema_alpha: float = 0.8
    beta: float = 1.0
    evaluate_iterate: bool = True  # one extra cost call per iteration at theta_k

    def __post_init__(self):
        for name in ("a0", "alpha_gain", "c0", "gamma_gain", "eta0", "shrink", "nudge"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.n_iter < 0 or self.A < 0 or self.stagnation_window < 1 or self.beta < 0:
            raise ConfigError("n_iter, A and beta must be non-negative; stagnation_window >= 1")
        if not 0 <= self.momentum < 1:
            raise ConfigError(f"momentum must lie in [0, 1), got {self.momentum}")
        if not 0 < self.ema_alpha < 1:
            raise ConfigError(f"ema_alpha must lie in (0, 1), got {self.ema_alpha}")

    def gains(self, k: int) -> tuple[float, float]:
        a_k = self.a0 / (k + 1 + self.A) ** self.alpha_gain
        c_k = self.c0 / (k + 1) ** self.gamma_gain
        return a_k, c_k


@dataclass(frozen=True)
class ObjectiveWeights:
    w_M: float = 0.5
    w_S: float = 1.0
    w_R: float = 0.1

    @staticmethod
    def w_E(c: float) -> float:
        return 1.0 + c


@dataclass
class IterationRecord:
    iteration: int
    raw_cost: float
    smoothed_cost: float
    eta: float


@dataclass
class OptimizationTrace:
    records: list[IterationRecord] = field(default_factory=list)
    best_theta: np.ndarray | None = None
    best_cost: float = math.inf
    best_smoothed: float = math.inf
    best_iteration: int = 0
    n_evaluations: int = 0


# ---------------------------------------------------------------------------
# Building blocks


def ema_smooth(prev: float, new: float, ema_alpha: float) -> float:
    return ema_alpha * prev + (1.0 - ema_alpha) * new


def adaptive_learning_rate(eta: float, m: float, delta_eta: float, mu: float) -> tuple[float, float]:
    """Momentum update of the learning rate; returns ``(eta_next, m_next)``."""
    eta_next = eta + mu * m + (1.0 - mu) * delta_eta
    eta_next = min(max(eta_next, ETA_MIN), ETA_MAX)
    return eta_next, mu * m + (1.0 - mu) * (eta_next - eta)


def spsa_gradient(
    cost: Callable[[np.ndarray], float], theta: np.ndarray, c_k: float, rng: np.random.Generator
) -> tuple[np.ndarray, float, float]:
    """Two-sided simultaneous-perturbation gradient estimate.

    Returns ``(g_hat, cost(theta + c_k*delta), cost(theta - c_k*delta))``.
    """
    if c_k <= 0:
        raise ValueError(f"perturbation size must be positive, got {c_k}")
    delta = rng.choice((-1.0, 1.0), size=np.shape(theta))
    f_plus = float(cost(theta + c_k * delta))
    f_minus = float(cost(theta - c_k * delta))
    return (f_plus - f_minus) / (2.0 * c_k * delta), f_plus, f_minus


def optimize(
    cost: Callable[[np.ndarray], float],
    theta0,
    cfg: SpsaConfig | None = None,
    rng_seed=0,
    on_iteration: Callable[[int, np.ndarray], None] | None = None,
) -> tuple[np.ndarray, OptimizationTrace]:
    """Minimize ``cost`` with SPSA and a momentum-adapted learning rate.

    Returns the iterate with the lowest smoothed cost, and the trace.
    ``on_iteration(k, theta_k)`` is called before any evaluation of iteration k.
    """
    cfg = cfg or SpsaConfig()
    rng = np.random.default_rng(rng_seed)
    theta = np.array(theta0, dtype=float)
    trace = OptimizationTrace(best_theta=theta.copy())
    eta, m = cfg.eta0, 0.0
    smoothed = None
    stale = 0

    for k in range(cfg.n_iter):
        if on_iteration is not None:
            on_iteration(k, theta)
        a_k, c_k = cfg.gains(k)
        if cfg.evaluate_iterate:
            raw = float(cost(theta))
            trace.n_evaluations += 1
        g_hat, f_plus, f_minus = spsa_gradient(cost, theta, c_k, rng)
        trace.n_evaluations += 2
        if not cfg.evaluate_iterate:
            raw = 0.5 * (f_plus + f_minus)

        smoothed = raw if smoothed is None else ema_smooth(smoothed, raw, cfg.ema_alpha)
        trace.best_cost = min(trace.best_cost, raw)
        if smoothed < trace.best_smoothed:
            trace.best_smoothed = smoothed
            trace.best_theta = theta.copy()
            trace.best_iteration = k
            stale = 0
            delta_eta = cfg.nudge * eta
        else:
            stale += 1
            delta_eta = 0.0
            if stale >= cfg.stagnation_window:
                # momentum spreads this over the following iterations; fire once per window
                delta_eta = -cfg.shrink * eta
                stale = 0

        eta, m = adaptive_learning_rate(eta, m, delta_eta, cfg.momentum)
        trace.records.append(IterationRecord(k, raw, smoothed, eta))
        theta = theta - eta * a_k * g_hat

    return trace.best_theta.copy(), trace


# ---------------------------------------------------------------------------
# Hybrid cost


def classical_objective(
    v_candidate: Viewpoint,
    v_current: Viewpoint,
    grid: GridMap,
    w: ObjectiveWeights,
    theta_prev,
    theta_now,
    d_obs: float,
    c: float | None = None,
) -> float:
    """Weighted exploration, movement, safety and regularization costs of a candidate view.

    ``d_obs`` is the distance from ``v_current`` to the nearest known obstacle.
    """
    d_max = grid.scene.camera.range
    c = coverage(grid) if c is None else c
    c_e = -predicted_gain(grid, v_candidate) / sensing_disc_cells(grid)
    d_travel = v_current.distance_to(v_candidate)
    c_m = min(d_travel / d_max, 1.0)
    c_s = 1.0 - 1.0 / (1.0 + math.exp(-(d_obs - d_travel)))
    diff = wrap_angle(np.asarray(theta_now, dtype=float) - np.asarray(theta_prev, dtype=float))
    c_r = float(np.mean(diff**2)) / math.pi**2 if diff.size else 0.0
    return w.w_E(c) * c_e + w.w_M * c_m + w.w_S * c_s + w.w_R * c_r


@dataclass
class CostContext:
    ansatz: AnsatzConfig
    hamiltonian: PauliSum
    grid: GridMap
    viewpoint: Viewpoint
    d_obs: float
    beta: float = 1.0
    weights: ObjectiveWeights = field(default_factory=ObjectiveWeights)
    shots: int = 1024
    rng_seed: int = 0
    iteration: int = 0
    theta_prev: np.ndarray | None = None
    table: DecodeTable | None = None


def _inner_seed(outer: int, iteration: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(outer), int(iteration)])


def total_cost(theta, ctx: CostContext) -> float:
    """``<H>`` plus ``beta`` times the classical objective of the decoded majority sample."""
    n = ctx.ansatz.n_qubits
    amps = prepare_amplitudes(ctx.ansatz, theta)
    energy = expectation_array(amps, n, ctx.hamiltonian)
    if ctx.beta == 0.0:
        return energy
    draws = sample_indices(StateVector(n, amps), ctx.shots, _inner_seed(ctx.rng_seed, ctx.iteration))
    bits = majority_vote_indices(draws, n)
    candidate = decode_parameters(bits, ctx.viewpoint, ctx.grid, ctx.table)
    theta_prev = theta if ctx.theta_prev is None else ctx.theta_prev
    c = classical_objective(candidate, ctx.viewpoint, ctx.grid, ctx.weights, theta_prev, theta, ctx.d_obs)
    return energy + ctx.beta * c


class HybridCost:
    """``theta -> total_cost(theta, ctx)``, with ``ctx`` advanced by the optimizer hook."""

    def __init__(self, ctx: CostContext):
        self.ctx = ctx

    def __call__(self, theta) -> float:
        return total_cost(theta, self.ctx)

    def on_iteration(self, k: int, theta: np.ndarray) -> None:
        self.ctx.iteration = k
        self.ctx.theta_prev = np.array(theta)
