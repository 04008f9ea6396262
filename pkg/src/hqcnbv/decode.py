"""Measurement post-processing: majority vote and bitstring-to-viewpoint decoding.

Within each parameter group the first qubit is the most significant bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .hamiltonian import QubitLayout
from .world import GridMap, Viewpoint

TWO_PI = 2.0 * math.pi
DIRECTION_ANGLES = (0.0, math.pi / 2, math.pi, 3 * math.pi / 2)  # 00 E, 01 N, 10 W, 11 S
ADJUST_STEP = math.pi / 6


def majority_vote(samples: Sequence[str]) -> str:
    """Per-bit majority over equal-length bitstrings; ties resolve to 0."""
    if len(samples) == 0:
        raise ValueError("majority_vote needs at least one sample")
    n = len(samples[0])
    if any(len(s) != n for s in samples):
        raise ValueError("samples have differing lengths")
    ones = np.zeros(n, dtype=np.int64)
    for s in samples:
        ones += np.frombuffer(s.encode(), dtype=np.uint8) == ord("1")
    return "".join("1" if 2 * k > len(samples) else "0" for k in ones)


def majority_vote_indices(indices: np.ndarray, n_qubits: int) -> str:
    """Same as :func:`majority_vote` for samples given as basis indices."""
    if indices.size == 0:
        raise ValueError("majority_vote needs at least one sample")
    ones = ((indices[:, None] >> np.arange(n_qubits)) & 1).sum(axis=0)
    return "".join("1" if 2 * k > indices.size else "0" for k in ones)


def _value(bits: str) -> int:
    return int(bits, 2) if bits else 0


@dataclass(frozen=True)
class DecodeTable:
    layout: QubitLayout = field(default_factory=QubitLayout)

    def fields(self, bits: str) -> dict[str, int]:
        if len(bits) != self.layout.n_total or set(bits) - {"0", "1"}:
            raise ValueError(f"expected a {self.layout.n_total}-bit string, got {bits!r}")
        return {g: _value(bits[s : s + n]) for g, (s, n) in self.layout.groups.items()}

    def direction(self, value: int) -> float:
        return DIRECTION_ANGLES[value]

    def distance(self, value: int, d_max: float) -> float:
        return d_max * (value + 1) / 2 ** self.layout.group_sizes[1]

    def adjustment(self, value: int) -> float:
        levels = 2 ** self.layout.group_sizes[2]
        return (value - (levels - 1) / 2.0) * ADJUST_STEP

    def orientation(self, value: int) -> float:
        return TWO_PI * value / 2 ** self.layout.group_sizes[3]

    def encode(self, direction: int, distance: int, adjustment: int, orientation: int) -> str:
        out = ""
        for value, size in zip((direction, distance, adjustment, orientation), self.layout.group_sizes):
            out += format(value, f"0{size}b") if size else ""
        return out

    def step(self, bits: str, d_max: float) -> tuple[float, float, float]:
        """``(bearing, distance, view angle)`` encoded by ``bits``."""
        f = self.fields(bits)
        bearing = self.direction(f["dir"]) + self.adjustment(f["adj"])
        return bearing, self.distance(f["dist"], d_max), self.orientation(f["orient"])


def decode_offset(bits: str, v_current: Viewpoint, d_max: float, table: DecodeTable | None = None) -> Viewpoint:
    """Decode without clamping to scene bounds."""
    bearing, d, view = (table or DecodeTable()).step(bits, d_max)
    return Viewpoint(v_current.x + d * math.cos(bearing), v_current.y + d * math.sin(bearing), view)


def decode_parameters(
    bits: str, v_current: Viewpoint, grid: GridMap, table: DecodeTable | None = None
) -> Viewpoint:
    v = decode_offset(bits, v_current, grid.scene.camera.range, table)
    scene = grid.scene
    return Viewpoint(min(max(v.x, 0.0), scene.width), min(max(v.y, 0.0), scene.height), v.theta)
