"""Experiment harness: scene x planner x ablation x seed matrices and their result files.

Everything written under the output directory except ``metadata.json`` is a
pure function of the experiment spec, so reruns are byte-identical.
"""

from __future__ import annotations

import csv
import itertools
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from . import __version__
from .ansatz import AnsatzVariant
from .errors import ConfigError
from .hamiltonian import HamiltonianVariant
from .planner import PLANNERS, HqcConfig, PlannerRun, run_exploration
from .qsim import index_to_bits

STEP_COLUMNS = ("step", "x", "y", "theta", "coverage", "cum_path", "cost", "fallback_flag")
SUMMARY_COLUMNS = (
    "run_id",
    "scene",
    "planner",
    "ansatz",
    "hamiltonian",
    "seed",
    "status",
    "termination",
    "final_coverage",
    "views",
    "views_to_threshold",
    "path_length",
    "efficiency",
    "fallback_count",
    "error",
)
NOT_APPLICABLE = "-"


@dataclass(frozen=True)
class ExperimentSpec:
    scenes: tuple[str, ...] = ("S2",)
    planners: tuple[str, ...] = ("hqc",)
    ansatz: tuple[str, ...] = ("FA",)
    hamiltonian: tuple[str, ...] = ("CH",)
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    coverage_threshold: float = 0.90
    max_views: int = 80
    shots: int = 1024
    layers: int = 5
    q_p: int = 4
    spsa: dict = field(default_factory=dict)
    out: str | None = None
    dump_distributions: bool = False
    workers: int = 1

    def __post_init__(self):
        for name in ("scenes", "planners", "ansatz", "hamiltonian", "seeds"):
            value = tuple(getattr(self, name))
            if not value:
                raise ConfigError(f"{name} must not be empty")
            object.__setattr__(self, name, value)
        if not 0.0 <= self.coverage_threshold <= 1.0:
            raise ConfigError(f"coverage threshold must lie in [0, 1], got {self.coverage_threshold}")
        if self.max_views < 0:
            raise ConfigError(f"max_views must be non-negative, got {self.max_views}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")

    def tuples(self) -> list["RunKey"]:
        """Every run of the matrix; baselines ignore the quantum ablation axes."""
        keys: list[RunKey] = []
        for scene, planner in itertools.product(self.scenes, self.planners):
            planner = planner.lower()
            if planner == "hqc":
                axes = itertools.product(self.ansatz, self.hamiltonian)
            else:
                axes = [(NOT_APPLICABLE, NOT_APPLICABLE)]
            for (ans, ham), seed in itertools.product(list(axes), self.seeds):
                key = RunKey(scene, planner, str(ans).upper(), str(ham).upper(), int(seed))
                if key not in keys:
                    keys.append(key)
        return keys


@dataclass(frozen=True)
class RunKey:
    scene: str
    planner: str
    ansatz: str
    hamiltonian: str
    seed: int

    @property
    def run_id(self) -> str:
        stem = Path(self.scene).stem
        if self.planner == "hqc":
            return f"{stem}_{self.planner}_{self.ansatz}_{self.hamiltonian}_s{self.seed}"
        return f"{stem}_{self.planner}_s{self.seed}"


@dataclass
class RunSummary:
    key: RunKey
    status: str = "ok"
    termination: str | None = None
    final_coverage: float | None = None
    views: int | None = None
    views_to_threshold: int | None = None
    path_length: float | None = None
    efficiency: float | None = None
    fallback_count: int | None = None
    wall_time: float = 0.0
    error: str | None = None

    def row(self) -> dict:
        """Summary-table row; wall time is excluded to keep the table reproducible."""
        out = {
            "run_id": self.key.run_id,
            **{k: v for k, v in asdict(self.key).items()},
            **{k: v for k, v in asdict(self).items() if k not in ("key", "wall_time")},
        }
        return {c: out[c] for c in SUMMARY_COLUMNS}


@dataclass
class RunResult:
    key: RunKey
    run: PlannerRun | None
    summary: RunSummary


# ---------------------------------------------------------------------------
# Metrics


def cumulative_path(points: Sequence[tuple[float, float]]) -> list[float]:
    out = [0.0]
    for (x0, y0), (x1, y1) in zip(points, points[1:]):
        out.append(out[-1] + math.hypot(x1 - x0, y1 - y0))
    return out


def path_length(points: Sequence[tuple[float, float]]) -> float:
    return cumulative_path(points)[-1] if len(points) else 0.0


def efficiency(final_coverage: float, length: float) -> float | None:
    """Coverage per unit path length; ``None`` when the robot never moved."""
    return final_coverage / length if length > 0 else None


def views_to_threshold(coverages: Sequence[float], threshold: float) -> int | None:
    for step, c in enumerate(coverages):
        if c >= threshold:
            return step
    return None


def median_views(values: Iterable[int | None]) -> float | None:
    """Median with unreached thresholds counted as infinitely many views."""
    arr = [math.inf if v is None else float(v) for v in values]
    if not arr:
        return None
    m = float(np.median(arr))
    return None if math.isinf(m) or math.isnan(m) else m


def summarize(key: RunKey, run: PlannerRun, threshold: float, wall_time: float = 0.0) -> RunSummary:
    pts = [v.xy for v in run.viewpoints]
    length = path_length(pts)
    return RunSummary(
        key=key,
        termination=run.termination.value,
        final_coverage=run.final_coverage,
        views=run.views,
        views_to_threshold=views_to_threshold(run.coverages, threshold),
        path_length=length,
        efficiency=efficiency(run.final_coverage, length),
        fallback_count=sum(s.fallback for s in run.steps),
        wall_time=wall_time,
    )


def aggregate(summaries: Iterable[RunSummary]) -> list[dict]:
    """Per (scene, planner, ansatz, hamiltonian) group: median views-to-threshold and mean efficiency."""
    groups: dict[tuple, list[RunSummary]] = {}
    for s in summaries:
        if s.status != "ok":
            continue
        k = s.key
        groups.setdefault((k.scene, k.planner, k.ansatz, k.hamiltonian), []).append(s)
    out = []
    for (scene, planner, ans, ham), rows in groups.items():
        effs = [r.efficiency for r in rows if r.efficiency is not None]
        out.append(
            {
                "scene": scene,
                "planner": planner,
                "ansatz": ans,
                "hamiltonian": ham,
                "runs": len(rows),
                "median_views_to_threshold": median_views(r.views_to_threshold for r in rows),
                "median_final_coverage": float(np.median([r.final_coverage for r in rows])),
                "mean_efficiency": float(np.mean(effs)) if effs else None,
            }
        )
    return out


# ---------------------------------------------------------------------------
# Running


def build_config(spec: ExperimentSpec, key: RunKey) -> HqcConfig | None:
    if key.planner != "hqc":
        return None
    return HqcConfig.build(
        ansatz=key.ansatz,
        hamiltonian=key.hamiltonian,
        layers=spec.layers,
        q_p=spec.q_p,
        shots=spec.shots,
        **spec.spsa,
    )


def run_one(spec: ExperimentSpec, key: RunKey) -> RunResult:
    """Execute one tuple; any configuration failure becomes a failed row."""
    start = time.perf_counter()
    try:
        if key.planner not in PLANNERS:
            raise ConfigError(f"unknown planner {key.planner!r}; choose from {PLANNERS}")
        if key.planner == "hqc":
            AnsatzVariant.parse(key.ansatz)
            HamiltonianVariant.parse(key.hamiltonian)
        run = run_exploration(
            key.scene,
            key.planner,
            build_config(spec, key),
            coverage_threshold=spec.coverage_threshold,
            max_views=spec.max_views,
            seed=key.seed,
            keep_distributions=spec.dump_distributions,
        )
    except (ConfigError, TypeError, ValueError) as exc:
        msg = f"{type(exc).__name__}: {exc}"
        return RunResult(key, None, RunSummary(key, status="failed", error=msg, wall_time=time.perf_counter() - start))
    return RunResult(key, run, summarize(key, run, spec.coverage_threshold, time.perf_counter() - start))


def run_matrix(
    spec: ExperimentSpec, on_result: Callable[[RunResult], None] | None = None
) -> list[RunResult]:
    """Run every tuple of ``spec`` in matrix order.

    When ``spec.out`` is set each finished run is written immediately and the
    summary files are refreshed, so a long matrix leaves usable partial output.
    """
    keys = spec.tuples()
    writer = ResultWriter(spec.out, spec.dump_distributions) if spec.out else None
    results: list[RunResult] = []

    def collect(res: RunResult) -> None:
        results.append(res)
        if writer is not None:
            writer.write_run(res)
            writer.write_summary(results, spec)
        if on_result is not None:
            on_result(res)

    if spec.workers == 1:
        for key in keys:
            collect(run_one(spec, key))
    else:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            # map preserves submission order, so output stays deterministic
            for res in pool.map(run_one, itertools.repeat(spec), keys):
                collect(res)
    return results


# ---------------------------------------------------------------------------
# Output


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def step_rows(run: PlannerRun) -> list[dict]:
    cum = cumulative_path([v.xy for v in run.viewpoints])
    rows = []
    for s, length in zip(run.steps, cum):
        v = s.viewpoint
        rows.append(
            {
                "step": s.step,
                "x": v.x,
                "y": v.y,
                "theta": v.theta,
                "coverage": s.coverage,
                "cum_path": length,
                "cost": s.cost,
                "fallback_flag": s.fallback,
            }
        )
    return rows


def read_step_file(path) -> list[dict]:
    """Parse a step file back into numbers; empty cost cells become ``None``."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for r in rows:
        out.append(
            {
                "step": int(r["step"]),
                "x": float(r["x"]),
                "y": float(r["y"]),
                "theta": float(r["theta"]),
                "coverage": float(r["coverage"]),
                "cum_path": float(r["cum_path"]),
                "cost": float(r["cost"]) if r["cost"] else None,
                "fallback_flag": bool(int(r["fallback_flag"])),
            }
        )
    return out


class ResultWriter:
    """Serializes results into a directory; the single collector for a matrix."""

    def __init__(self, directory, dump_distributions: bool = False):
        self.root = Path(directory)
        self.dump_distributions = dump_distributions
        try:
            (self.root / "steps").mkdir(parents=True, exist_ok=True)
            if dump_distributions:
                (self.root / "distributions").mkdir(exist_ok=True)
        except OSError as exc:
            raise ConfigError(f"cannot write results to {self.root}: {exc}") from exc
        self._started = datetime.now(timezone.utc).isoformat()

    def _write(self, path: Path, text: str) -> None:
        try:
            path.write_text(text)
        except OSError as exc:
            raise ConfigError(f"cannot write {path}: {exc}") from exc

    def write_run(self, res: RunResult) -> None:
        if res.run is None:
            return
        lines = [",".join(STEP_COLUMNS)]
        for row in step_rows(res.run):
            lines.append(",".join(_fmt(row[c]) for c in STEP_COLUMNS))
        self._write(self.root / "steps" / f"{res.key.run_id}.csv", "\n".join(lines) + "\n")
        dump = distribution_dump(res.run) if self.dump_distributions else ""
        if dump:
            self._write(self.root / "distributions" / f"{res.key.run_id}.jsonl", dump)

    def write_summary(self, results: Sequence[RunResult], spec: ExperimentSpec | None = None) -> None:
        summaries = [r.summary for r in results]
        lines = [",".join(SUMMARY_COLUMNS)]
        for s in summaries:
            row = s.row()
            lines.append(",".join(_csv_cell(_fmt(row[c])) for c in SUMMARY_COLUMNS))
        self._write(self.root / "summary.csv", "\n".join(lines) + "\n")
        doc = {"runs": [s.row() for s in summaries], "aggregates": aggregate(summaries)}
        self._write(self.root / "summary.json", json.dumps(doc, indent=2) + "\n")
        meta = {
            "version": __version__,
            "started": self._started,
            "written": datetime.now(timezone.utc).isoformat(),
            "spec": asdict(spec) if spec is not None else None,
            "wall_time": {s.key.run_id: s.wall_time for s in summaries},
        }
        self._write(self.root / "metadata.json", json.dumps(meta, indent=2) + "\n")


def _csv_cell(text: str) -> str:
    if any(ch in text for ch in ',"\n'):
        return '"' + text.replace('"', '""') + '"'
    return text


def distribution_dump(run: PlannerRun) -> str:
    """One JSON object per planned step: nonzero basis probabilities keyed by bitstring."""
    lines = []
    for s in run.steps:
        if s.distribution is None:
            continue
        p = s.distribution
        n = int(p.size).bit_length() - 1
        probs = {index_to_bits(int(i), n): float(p[i]) for i in np.flatnonzero(p)}
        lines.append(json.dumps({"step": s.step, "probabilities": probs}))
    return "\n".join(lines) + ("\n" if lines else "")


def emit_results(results: Sequence[RunResult], directory, spec: ExperimentSpec | None = None) -> Path:
    """Write step files, the summary table and document, and metadata for ``results``."""
    dump = any(
        r.run is not None and any(s.distribution is not None for s in r.run.steps) for r in results
    )
    writer = ResultWriter(directory, dump)
    for res in results:
        writer.write_run(res)
    writer.write_summary(results, spec)
    return writer.root
