"""2D exploration world: scenes, ternary occupancy grid, wedge sensing, features.

Cells are indexed ``[ix, iy]`` with cell ``(ix, iy)`` covering
``[ix*res, (ix+1)*res] x [iy*res, (iy+1)*res]`` in world units. A cell is an
obstacle cell iff its center lies inside (or on the boundary of) an obstacle
rectangle.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np

from .errors import SceneLoadError
from .hamiltonian import BEARINGS, ExplorationFeatures

TWO_PI = 2.0 * math.pi
RAY_SPACING = math.radians(1.0)
STEP_FRACTION = 0.25  # ray march step, in cells
_EPS = 1e-9

BEARING_ANGLES = {
    "E": 0.0,
    "NE": math.pi / 4,
    "N": math.pi / 2,
    "NW": 3 * math.pi / 4,
    "W": math.pi,
    "SW": -3 * math.pi / 4,
    "S": -math.pi / 2,
    "SE": -math.pi / 4,
}


class Cell(enum.IntEnum):
    UNKNOWN = 0
    FREE = 1
    OCCUPIED = 2


def wrap_angle(a):
    """Map angles to ``(-pi, pi]``."""
    return np.pi - np.mod(np.pi - np.asarray(a, dtype=float), TWO_PI)


@dataclass(frozen=True)
class Viewpoint:
    x: float
    y: float
    theta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "theta", float(self.theta) % TWO_PI)

    @property
    def xy(self) -> np.ndarray:
        return np.array([self.x, self.y])

    def distance_to(self, other: "Viewpoint") -> float:
        return math.hypot(other.x - self.x, other.y - self.y)


@dataclass(frozen=True)
class Rect:
    x: float
    y: float
    w: float
    h: float

    def contains(self, px, py):
        return (px >= self.x) & (px <= self.x + self.w) & (py >= self.y) & (py <= self.y + self.h)


@dataclass(frozen=True)
class Camera:
    fov: float = 2 * math.pi / 3
    range: float = 8.0


@dataclass(frozen=True)
class Scene:
    name: str
    width: float
    height: float
    obstacles: tuple[Rect, ...]
    start: Viewpoint
    resolution: float = 1.0
    camera: Camera = field(default_factory=Camera)

    @property
    def shape(self) -> tuple[int, int]:
        return (math.ceil(self.width / self.resolution - _EPS), math.ceil(self.height / self.resolution - _EPS))

    @property
    def d_max(self) -> float:
        return self.camera.range

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        nx, ny = self.shape
        cx = (np.arange(nx) + 0.5) * self.resolution
        cy = (np.arange(ny) + 0.5) * self.resolution
        return np.meshgrid(cx, cy, indexing="ij")

    def obstacle_grid(self) -> np.ndarray:
        cx, cy = self.cell_centers()
        occ = np.zeros(self.shape, dtype=bool)
        for r in self.obstacles:
            occ |= r.contains(cx, cy)
        return occ

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "width": self.width,
            "height": self.height,
            "resolution": self.resolution,
            "obstacles": [asdict(r) for r in self.obstacles],
            "start": {"x": self.start.x, "y": self.start.y, "theta": self.start.theta},
            "camera": {"fov": self.camera.fov, "range": self.camera.range},
        }


# ---------------------------------------------------------------------------
# Scene loading

BUILTIN_SCENES = ("S1", "S2", "S3", "S4")


def _require(doc: dict, key: str, kind=float):
    if key not in doc:
        raise SceneLoadError(f"scene document missing required key {key!r}")
    try:
        return kind(doc[key])
    except (TypeError, ValueError) as exc:
        raise SceneLoadError(f"bad value for {key!r}: {doc[key]!r}") from exc


def scene_from_dict(doc: dict[str, Any]) -> Scene:
    if not isinstance(doc, dict):
        raise SceneLoadError(f"scene document must be a mapping, got {type(doc).__name__}")
    name = str(doc.get("name", "unnamed"))
    width = _require(doc, "width")
    height = _require(doc, "height")
    res = float(doc.get("resolution", 1.0))
    if width <= 0 or height <= 0 or res <= 0:
        raise SceneLoadError("width, height and resolution must be positive")

    obstacles = []
    for i, o in enumerate(doc.get("obstacles", [])):
        if not isinstance(o, dict):
            raise SceneLoadError(f"obstacle {i} must be a mapping")
        r = Rect(*(_require(o, k) for k in ("x", "y", "w", "h")))
        if r.w <= 0 or r.h <= 0:
            raise SceneLoadError(f"obstacle {i} has non-positive size")
        if r.x < 0 or r.y < 0 or r.x + r.w > width + _EPS or r.y + r.h > height + _EPS:
            raise SceneLoadError(f"obstacle {i} {r} lies outside the {width}x{height} scene")
        obstacles.append(r)

    start_doc = doc.get("start")
    if not isinstance(start_doc, dict):
        raise SceneLoadError("scene document missing 'start' mapping")
    start = Viewpoint(_require(start_doc, "x"), _require(start_doc, "y"), float(start_doc.get("theta", 0.0)))
    if not (0 <= start.x < width and 0 <= start.y < height):
        raise SceneLoadError(f"start {start} lies outside the scene")

    cam_doc = doc.get("camera", {})
    camera = Camera(float(cam_doc.get("fov", 2 * math.pi / 3)), float(cam_doc.get("range", 8.0)))
    if not 0 < camera.fov <= TWO_PI + _EPS or camera.range <= 0:
        raise SceneLoadError(f"invalid camera {camera}")

    scene = Scene(name, width, height, tuple(obstacles), start, res, camera)
    ix, iy = int(start.x // res), int(start.y // res)
    if any(r.contains(start.x, start.y) for r in obstacles) or scene.obstacle_grid()[ix, iy]:
        raise SceneLoadError(f"start {start} lies inside an obstacle")
    return scene


def load_scene(source) -> Scene:
    """Load a scene from a built-in name, a JSON file path, JSON text, or a mapping."""
    if isinstance(source, Scene):
        return source
    if isinstance(source, dict):
        return scene_from_dict(source)
    text = None
    if isinstance(source, str) and source.upper() in BUILTIN_SCENES:
        text = resources.files("hqcnbv.scenes").joinpath(f"{source.upper()}.json").read_text()
    elif isinstance(source, (str, Path)) and Path(source).suffix == ".json":
        path = Path(source)
        if not path.exists():
            raise SceneLoadError(f"scene file not found: {path}")
        text = path.read_text()
    elif isinstance(source, str) and source.lstrip().startswith("{"):
        text = source
    else:
        raise SceneLoadError(f"unrecognized scene source {source!r}")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SceneLoadError(f"malformed scene document: {exc}") from exc
    return scene_from_dict(doc)


def dump_scene(scene: Scene) -> str:
    return json.dumps(scene.to_dict(), indent=2)


# ---------------------------------------------------------------------------
# Grid map


class GridMap:
    """Ternary occupancy grid accumulated from observations of a scene."""

    def __init__(self, scene: Scene):
        self.scene = scene
        self.cells = np.zeros(scene.shape, dtype=np.int8)
        self.truth = scene.obstacle_grid()

    @property
    def shape(self) -> tuple[int, int]:
        return self.cells.shape

    @property
    def resolution(self) -> float:
        return self.scene.resolution

    def copy(self) -> "GridMap":
        other = GridMap.__new__(GridMap)
        other.scene, other.truth, other.cells = self.scene, self.truth, self.cells.copy()
        return other

    def cell_of(self, x: float, y: float) -> tuple[int, int] | None:
        ix, iy = math.floor(x / self.resolution), math.floor(y / self.resolution)
        nx, ny = self.shape
        if 0 <= ix < nx and 0 <= iy < ny:
            return ix, iy
        return None

    def state_at(self, x: float, y: float) -> Cell | None:
        c = self.cell_of(x, y)
        return None if c is None else Cell(int(self.cells[c]))

    def in_bounds(self, x: float, y: float) -> bool:
        return 0.0 <= x <= self.scene.width and 0.0 <= y <= self.scene.height


def new_map(scene: Scene) -> GridMap:
    return GridMap(scene)


def coverage(grid: GridMap) -> float:
    return float(np.count_nonzero(grid.cells)) / grid.cells.size


# ---------------------------------------------------------------------------
# Wedge ray casting


@lru_cache(maxsize=32)
def _ray_table(fov: float, d_max: float, res: float) -> tuple[np.ndarray, np.ndarray]:
    n_rays = int(round(fov / RAY_SPACING)) + 1
    offsets = np.linspace(-fov / 2.0, fov / 2.0, n_rays)
    n_steps = int(math.floor(d_max / (STEP_FRACTION * res) + _EPS)) + 1
    radii = np.arange(n_steps) * STEP_FRACTION * res
    offsets.flags.writeable = radii.flags.writeable = False
    return offsets, radii


def _cells_in_wedge(grid: GridMap, v: Viewpoint, ix: np.ndarray, iy: np.ndarray) -> np.ndarray:
    res, cam = grid.resolution, grid.scene.camera
    dx = (ix + 0.5) * res - v.x
    dy = (iy + 0.5) * res - v.y
    dist = np.hypot(dx, dy)
    ang = np.abs(wrap_angle(np.arctan2(dy, dx) - v.theta))
    return (dist < _EPS) | ((dist <= cam.range + _EPS) & (ang <= cam.fov / 2.0 + _EPS))


def cast_wedge(grid: GridMap, v: Viewpoint, blocking: np.ndarray):
    """March the wedge rays from ``v`` against the ``blocking`` mask.

    Returns ``(seen_ix, seen_iy, hit_ix, hit_iy)``: cells traversed before each
    ray's first blocking sample, and the blocking cells themselves (in-bounds
    only). Both are restricted to cells whose center lies in the sensing wedge.
    """
    cam, res = grid.scene.camera, grid.resolution
    offsets, radii = _ray_table(cam.fov, cam.range, res)
    phi = v.theta + offsets
    px = v.x + np.outer(np.cos(phi), radii)
    py = v.y + np.outer(np.sin(phi), radii)
    ix = np.floor(px / res).astype(np.int64)
    iy = np.floor(py / res).astype(np.int64)
    nx, ny = grid.shape
    inside = (ix >= 0) & (ix < nx) & (iy >= 0) & (iy < ny)
    ixc, iyc = np.clip(ix, 0, nx - 1), np.clip(iy, 0, ny - 1)
    blocked = ~inside | blocking[ixc, iyc]
    first = np.where(blocked.any(axis=1), blocked.argmax(axis=1), radii.size)

    step = np.arange(radii.size)
    seen = step[None, :] < first[:, None]
    rows = np.flatnonzero(first < radii.size)
    hit = np.zeros_like(seen)
    hit[rows, first[rows]] = inside[rows, first[rows]]

    out = []
    for mask in (seen, hit):
        cx, cy = ixc[mask], iyc[mask]
        keep = _cells_in_wedge(grid, v, cx, cy)
        flat = np.unique(cx[keep] * ny + cy[keep])
        out += [flat // ny, flat % ny]
    return tuple(out)


def update_observation(grid: GridMap, v: Viewpoint) -> tuple[GridMap, int]:
    """Observe from ``v`` in place; returns the map and the count of cells leaving UNKNOWN."""
    c = grid.cell_of(v.x, v.y)
    if c is None or grid.truth[c]:
        raise ValueError(f"viewpoint {v} is outside the scene or inside an obstacle")
    sx, sy, hx, hy = cast_wedge(grid, v, grid.truth)
    before = np.count_nonzero(grid.cells)
    free = grid.cells[sx, sy] == Cell.UNKNOWN
    grid.cells[sx[free], sy[free]] = Cell.FREE
    occ = grid.cells[hx, hy] == Cell.UNKNOWN
    grid.cells[hx[occ], hy[occ]] = Cell.OCCUPIED
    return grid, int(np.count_nonzero(grid.cells) - before)


def predicted_gain(grid: GridMap, v: Viewpoint) -> int:
    """UNKNOWN cells an observation from ``v`` would reach, treating only known obstacles as opaque."""
    sx, sy, _, _ = cast_wedge(grid, v, grid.cells == Cell.OCCUPIED)
    return int(np.count_nonzero(grid.cells[sx, sy] == Cell.UNKNOWN))


def sensing_disc_cells(grid: GridMap) -> float:
    return math.pi * (grid.scene.camera.range / grid.resolution) ** 2


# ---------------------------------------------------------------------------
# Features


def nearest_obstacle_distance(grid: GridMap, v: Viewpoint) -> float:
    d_max = grid.scene.camera.range
    occ = np.argwhere(grid.cells == Cell.OCCUPIED)
    if occ.size == 0:
        return d_max
    centers = (occ + 0.5) * grid.resolution
    d = np.hypot(centers[:, 0] - v.x, centers[:, 1] - v.y).min()
    return float(min(d, d_max))


def extract_features(grid: GridMap, v: Viewpoint) -> ExplorationFeatures:
    d_max = grid.scene.camera.range
    cx, cy = grid.scene.cell_centers()
    dx, dy = cx - v.x, cy - v.y
    dist = np.hypot(dx, dy)
    bearing = np.arctan2(dy, dx)
    unknown = grid.cells == Cell.UNKNOWN

    far = (dist <= 2 * d_max) & (dist > _EPS)
    e = {}
    for name in BEARINGS:
        sector = far & (np.abs(wrap_angle(bearing - BEARING_ANGLES[name])) <= math.pi / 8 + _EPS)
        n = np.count_nonzero(sector)
        e[name] = float(np.count_nonzero(sector & unknown) / n) if n else 0.0

    near = dist <= d_max
    rho = float(np.count_nonzero(near & unknown) / np.count_nonzero(near)) if near.any() else 0.0

    targets = bearing[far & unknown]
    if targets.size:
        resultant = complex(np.cos(targets).mean(), np.sin(targets).mean())
        dispersion = float(np.clip(1.0 - abs(resultant), 0.0, 1.0))
        target_angle = math.atan2(resultant.imag, resultant.real) % TWO_PI if abs(resultant) > _EPS else 0.0
    else:
        dispersion, target_angle = 1.0, 0.0

    return ExplorationFeatures(
        e=e,
        d_obs=nearest_obstacle_distance(grid, v),
        d_max=d_max,
        c=coverage(grid),
        rho=rho,
        dispersion=dispersion,
        target_angle=target_angle,
    )


# ---------------------------------------------------------------------------
# Paths


def segment_cells(grid: GridMap, x0: float, y0: float, x1: float, y1: float):
    """Cells (closed boxes) touched by the segment; also reports out-of-bounds contact.

    Returns ``(ix, iy, leaves_grid)``.
    """
    res = grid.resolution
    lo_x, hi_x = math.floor(min(x0, x1) / res) - 1, math.floor(max(x0, x1) / res) + 1
    lo_y, hi_y = math.floor(min(y0, y1) / res) - 1, math.floor(max(y0, y1) / res) + 1
    gx, gy = np.meshgrid(np.arange(lo_x, hi_x + 1), np.arange(lo_y, hi_y + 1), indexing="ij")
    gx, gy = gx.ravel(), gy.ravel()

    t_lo = np.zeros(gx.shape)
    t_hi = np.ones(gx.shape)
    ok = np.ones(gx.shape, dtype=bool)
    for p0, d, g in ((x0, x1 - x0, gx), (y0, y1 - y0, gy)):
        bmin, bmax = g * res, (g + 1) * res
        if d == 0.0:
            ok &= (bmin <= p0) & (p0 <= bmax)
        else:
            ta, tb = (bmin - p0) / d, (bmax - p0) / d
            t_lo = np.maximum(t_lo, np.minimum(ta, tb))
            t_hi = np.minimum(t_hi, np.maximum(ta, tb))
    touched = ok & (t_lo <= t_hi)
    gx, gy = gx[touched], gy[touched]
    nx, ny = grid.shape
    inside = (gx >= 0) & (gx < nx) & (gy >= 0) & (gy < ny)
    return gx[inside], gy[inside], bool((~inside).any())


def is_path_free(grid: GridMap, v_from: Viewpoint, v_to: Viewpoint) -> bool:
    """True iff every cell the straight segment touches is known FREE."""
    ix, iy, leaves = segment_cells(grid, v_from.x, v_from.y, v_to.x, v_to.y)
    if leaves:
        return False
    return bool(np.all(grid.cells[ix, iy] == Cell.FREE))
