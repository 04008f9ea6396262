"""Classical comparison planners: nearest-frontier and receding-horizon NBV.

Both are simplified reconstructions that share the wedge sensing model and
the straight-line path check of the hybrid planner.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .world import Cell, GridMap, Viewpoint, is_path_free, predicted_gain

_EIGHT = np.ones((3, 3), dtype=bool)


# ---------------------------------------------------------------------------
# Frontier


@dataclass
class FrontierCluster:
    cells: np.ndarray  # (k, 2) cell indices
    centroid: np.ndarray  # world coordinates
    unknown_centroid: np.ndarray


def frontier_clusters(grid: GridMap) -> list[FrontierCluster]:
    """FREE cells 8-adjacent to an UNKNOWN cell, grouped by 8-connectivity."""
    unknown = grid.cells == Cell.UNKNOWN
    near_unknown = ndimage.binary_dilation(unknown, structure=_EIGHT)
    frontier = (grid.cells == Cell.FREE) & near_unknown
    labels, n = ndimage.label(frontier, structure=_EIGHT)
    res = grid.resolution
    clusters = []
    for k in range(1, n + 1):
        cells = np.argwhere(labels == k)
        region = np.zeros_like(frontier)
        region[cells[:, 0], cells[:, 1]] = True
        adjacent_unknown = np.argwhere(ndimage.binary_dilation(region, structure=_EIGHT) & unknown)
        clusters.append(
            FrontierCluster(
                cells=cells,
                centroid=(cells.mean(axis=0) + 0.5) * res,
                unknown_centroid=(adjacent_unknown.mean(axis=0) + 0.5) * res,
            )
        )
    return clusters


def _center(cell, res: float) -> np.ndarray:
    return (np.asarray(cell, dtype=float) + 0.5) * res


def _snap(grid: GridMap, v: Viewpoint, cluster: FrontierCluster) -> np.ndarray | None:
    res = grid.resolution
    free = np.argwhere(grid.cells == Cell.FREE)
    centers = (free + 0.5) * res
    nearest = centers[np.argmin(np.hypot(*(centers - cluster.centroid).T))]
    if is_path_free(grid, v, Viewpoint(*nearest)):
        return nearest
    # fall back to the cluster's own cells, nearest to the centroid first
    cells = _center(cluster.cells, res)
    for i in np.argsort(np.hypot(*(cells - cluster.centroid).T), kind="stable"):
        if is_path_free(grid, v, Viewpoint(*cells[i])):
            return cells[i]
    return None


def plan_next_frontier(grid: GridMap, v: Viewpoint) -> Viewpoint | None:
    """Move to the nearest reachable frontier cluster; ``None`` when none is reachable."""
    clusters = frontier_clusters(grid)
    here = v.xy
    clusters.sort(key=lambda c: float(np.hypot(*(c.centroid - here))))
    for cluster in clusters:
        target = _snap(grid, v, cluster)
        if target is None:
            continue
        if np.hypot(*(target - here)) < 0.5 * grid.resolution:
            # already standing here; looking again would not change the map
            continue
        look = cluster.unknown_centroid - target
        return Viewpoint(float(target[0]), float(target[1]), math.atan2(look[1], look[0]))
    return None


# ---------------------------------------------------------------------------
# Receding-horizon NBV


@dataclass(frozen=True)
class RhnbvConfig:
    n_nodes: int = 50
    lambda_penalty: float = 0.25
    max_step: float = 2.0
    max_attempts: int = 2000


@dataclass
class TreeNode:
    viewpoint: Viewpoint
    parent: int  # -1 for the root
    gain: float
    cost: float  # path length from the root


def grow_tree(grid: GridMap, v: Viewpoint, cfg: RhnbvConfig, rng: np.random.Generator) -> list[TreeNode]:
    nodes = [TreeNode(v, -1, 0.0, 0.0)]
    xy = [v.xy]
    scene = grid.scene
    attempts = 0
    while len(nodes) <= cfg.n_nodes and attempts < cfg.max_attempts:
        attempts += 1
        sample = rng.uniform((0.0, 0.0), (scene.width, scene.height))
        pts = np.asarray(xy)
        i = int(np.argmin(np.hypot(*(pts - sample).T)))
        step = sample - pts[i]
        dist = float(np.hypot(*step))
        if dist < 1e-9:
            continue
        new = pts[i] + step * min(1.0, cfg.max_step / dist)
        theta = rng.uniform(0.0, 2 * math.pi)
        node_v = Viewpoint(float(new[0]), float(new[1]), theta)
        if not is_path_free(grid, nodes[i].viewpoint, node_v):
            continue
        length = min(dist, cfg.max_step)
        nodes.append(TreeNode(node_v, i, float(predicted_gain(grid, node_v)), nodes[i].cost + length))
        xy.append(new)
    return nodes


def branch_utilities(nodes: list[TreeNode], lambda_penalty: float) -> np.ndarray:
    """Utility of the root-to-node branch for every node (the root scores -inf)."""
    acc = np.zeros(len(nodes))
    for i, node in enumerate(nodes[1:], start=1):
        acc[i] = acc[node.parent] + node.gain  # parents precede children
    util = acc * np.exp(-lambda_penalty * np.array([n.cost for n in nodes]))
    util[0] = -np.inf
    return util


def first_edge(nodes: list[TreeNode], target: int) -> int:
    while nodes[target].parent > 0:
        target = nodes[target].parent
    return target


def plan_next_rhnbv(
    grid: GridMap, v: Viewpoint, cfg: RhnbvConfig | None = None, rng_seed=0
) -> Viewpoint | None:
    """Execute the first edge of the best branch; ``None`` when no node sees anything new."""
    cfg = cfg or RhnbvConfig()
    nodes = grow_tree(grid, v, cfg, np.random.default_rng(rng_seed))
    if len(nodes) < 2 or max(n.gain for n in nodes) <= 0:
        return None
    best = int(np.argmax(branch_utilities(nodes, cfg.lambda_penalty)))
    return nodes[first_edge(nodes, best)].viewpoint
