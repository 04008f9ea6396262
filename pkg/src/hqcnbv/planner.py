"""Hybrid quantum-classical next-best-view planning and the exploration loop."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .ansatz import AnsatzConfig, AnsatzVariant, parameter_count, prepare_state
from .baselines import RhnbvConfig, plan_next_frontier, plan_next_rhnbv
from .decode import DecodeTable, decode_parameters, majority_vote, majority_vote_indices
from .errors import ConfigError
from .hamiltonian import HamiltonianVariant, HamiltonianWeights, QubitLayout, assemble
from .optimizer import CostContext, HybridCost, ObjectiveWeights, OptimizationTrace, SpsaConfig, _inner_seed, optimize
from .qsim import expectation, probability_vector, sample_indices
from .world import (
    Cell,
    GridMap,
    Scene,
    Viewpoint,
    coverage,
    extract_features,
    is_path_free,
    load_scene,
    new_map,
    update_observation,
)

__all__ = [
    "HqcConfig",
    "PlannerRun",
    "StepRecord",
    "Termination",
    "fallback_project",
    "majority_vote",
    "decode_parameters",
    "plan_next_hqc",
    "run_exploration",
    "validate_trajectory",
]

STALL_LIMIT = 5
SEARCH_STEP = 0.25  # fallback line-search step, in cells


def derive_seed(*keys: int) -> int:
    """Deterministic 32-bit seed from a tuple of non-negative integers."""
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1)[0])


@dataclass(frozen=True)
class HqcConfig:
    ansatz: AnsatzConfig = field(default_factory=AnsatzConfig)
    weights: HamiltonianWeights = field(default_factory=HamiltonianWeights)
    hamiltonian: HamiltonianVariant = HamiltonianVariant.CH
    spsa: SpsaConfig = field(default_factory=SpsaConfig)
    objective: ObjectiveWeights = field(default_factory=ObjectiveWeights)
    shots: int = 1024
    init_scale: float = math.pi / 10

    def __post_init__(self):
        object.__setattr__(self, "hamiltonian", HamiltonianVariant.parse(self.hamiltonian))
        if self.shots < 1:
            raise ConfigError(f"shots must be >= 1, got {self.shots}")

    @classmethod
    def build(
        cls,
        ansatz: str = "FA",
        hamiltonian: str = "CH",
        layers: int = 5,
        q_p: int = 4,
        shots: int = 1024,
        **spsa_overrides,
    ) -> "HqcConfig":
        return cls(
            ansatz=AnsatzConfig(QubitLayout(q_p), layers, AnsatzVariant.parse(ansatz)),
            hamiltonian=HamiltonianVariant.parse(hamiltonian),
            spsa=SpsaConfig(**spsa_overrides),
            shots=shots,
        )


@dataclass
class StepRecord:
    step: int
    viewpoint: Viewpoint
    coverage: float
    newly_observed: int
    cost: float | None = None
    fallback: bool = False
    proposed: Viewpoint | None = None
    bits: str | None = None
    trace: OptimizationTrace | None = None
    distribution: np.ndarray | None = None


class Termination(str, enum.Enum):
    THRESHOLD = "threshold_reached"
    MAX_VIEWS = "max_views"
    NO_PROGRESS = "no_progress"


@dataclass
class PlannerRun:
    scene: str
    planner: str
    seed: int
    steps: list[StepRecord]
    termination: Termination

    @property
    def viewpoints(self) -> list[Viewpoint]:
        return [s.viewpoint for s in self.steps]

    @property
    def coverages(self) -> list[float]:
        return [s.coverage for s in self.steps]

    @property
    def views(self) -> int:
        """Planned views, excluding the initial viewpoint."""
        return len(self.steps) - 1

    @property
    def final_coverage(self) -> float:
        return self.steps[-1].coverage

    def views_to(self, threshold: float) -> int | None:
        for s in self.steps:
            if s.coverage >= threshold:
                return s.step
        return None


# ---------------------------------------------------------------------------
# Trajectory handling


def validate_trajectory(grid: GridMap, v_from: Viewpoint, v_to: Viewpoint) -> bool:
    if not grid.in_bounds(v_to.x, v_to.y) or grid.state_at(v_to.x, v_to.y) is not Cell.FREE:
        return False
    return is_path_free(grid, v_from, v_to)


def fallback_project(grid: GridMap, v_current: Viewpoint, v_quantum: Viewpoint) -> Viewpoint:
    """Farthest valid point on the segment toward ``v_quantum``, keeping its orientation."""
    if validate_trajectory(grid, v_current, v_quantum):
        return v_quantum
    dx, dy = v_quantum.x - v_current.x, v_quantum.y - v_current.y
    length = math.hypot(dx, dy)
    step = SEARCH_STEP * grid.resolution
    best = Viewpoint(v_current.x, v_current.y, v_quantum.theta)
    for k in range(1, int(length / step) + 1):
        t = k * step / length
        cand = Viewpoint(v_current.x + t * dx, v_current.y + t * dy, v_quantum.theta)
        if not validate_trajectory(grid, v_current, cand):
            break  # validity is prefix-closed along the ray
        best = cand
    return best


# ---------------------------------------------------------------------------
# HQC step


def plan_next_hqc(
    grid: GridMap, v_current: Viewpoint, cfg: HqcConfig | None = None, rng_seed: int = 0
) -> tuple[Viewpoint, StepRecord]:
    """One decision of the hybrid planner: build H, optimize, measure, decode, validate."""
    cfg = cfg or HqcConfig()
    layout = cfg.ansatz.layout
    features = extract_features(grid, v_current)
    h = assemble(features, cfg.weights, layout, cfg.hamiltonian)

    init_rng = np.random.default_rng(derive_seed(rng_seed, 0))
    theta0 = init_rng.uniform(-cfg.init_scale, cfg.init_scale, parameter_count(cfg.ansatz))
    ctx = CostContext(
        ansatz=cfg.ansatz,
        hamiltonian=h,
        grid=grid,
        viewpoint=v_current,
        d_obs=features.d_obs,
        beta=cfg.spsa.beta,
        weights=cfg.objective,
        shots=cfg.shots,
        rng_seed=derive_seed(rng_seed, 1),
        table=DecodeTable(layout),
    )
    cost = HybridCost(ctx)
    theta, trace = optimize(cost, theta0, cfg.spsa, derive_seed(rng_seed, 2), cost.on_iteration)

    state = prepare_state(cfg.ansatz, theta)
    draws = sample_indices(state, cfg.shots, _inner_seed(ctx.rng_seed, trace.best_iteration))
    bits = majority_vote_indices(draws, state.n_qubits)
    proposed = decode_parameters(bits, v_current, grid, ctx.table)
    fallback = not validate_trajectory(grid, v_current, proposed)
    chosen = fallback_project(grid, v_current, proposed) if fallback else proposed

    record = StepRecord(
        step=-1,
        viewpoint=chosen,
        coverage=math.nan,
        newly_observed=0,
        cost=expectation(state, h),
        fallback=fallback,
        proposed=proposed,
        bits=bits,
        trace=trace,
        distribution=probability_vector(state),
    )
    return chosen, record


# ---------------------------------------------------------------------------
# Exploration loop

PLANNERS = ("hqc", "frontier", "rhnbv")


def run_exploration(
    scene: Scene | str,
    planner: str = "hqc",
    cfg: HqcConfig | RhnbvConfig | None = None,
    coverage_threshold: float = 0.90,
    max_views: int = 80,
    seed: int = 0,
    keep_distributions: bool = False,
) -> PlannerRun:
    scene = load_scene(scene)
    planner = planner.lower()
    if planner not in PLANNERS:
        raise ConfigError(f"unknown planner {planner!r}; choose from {PLANNERS}")
    if planner == "hqc":
        cfg = cfg if cfg is not None else HqcConfig()
    elif planner == "rhnbv":
        cfg = cfg if cfg is not None else RhnbvConfig()

    grid = new_map(scene)
    v = scene.start
    _, gained = update_observation(grid, v)
    steps = [StepRecord(0, v, coverage(grid), gained)]
    stalled = 0
    termination = Termination.MAX_VIEWS

    for t in range(1, max_views + 1):
        if coverage(grid) >= coverage_threshold:
            termination = Termination.THRESHOLD
            break
        step_seed = derive_seed(seed, t)
        if planner == "hqc":
            nxt, record = plan_next_hqc(grid, v, cfg, step_seed)
            if not keep_distributions:
                record.distribution = None
        else:
            nxt = plan_next_frontier(grid, v) if planner == "frontier" else plan_next_rhnbv(grid, v, cfg, step_seed)
            if nxt is None:
                termination = Termination.NO_PROGRESS
                break
            record = StepRecord(-1, nxt, math.nan, 0)
        _, gained = update_observation(grid, nxt)
        record.step, record.coverage, record.newly_observed = t, coverage(grid), gained
        steps.append(record)
        v = nxt
        stalled = stalled + 1 if gained == 0 else 0
        if stalled >= STALL_LIMIT:
            termination = Termination.NO_PROGRESS
            break
    else:
        if coverage(grid) >= coverage_threshold:
            termination = Termination.THRESHOLD

    return PlannerRun(scene.name, planner, seed, steps, termination)
