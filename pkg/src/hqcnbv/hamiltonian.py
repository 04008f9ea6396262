"""Cost Hamiltonian for viewpoint selection.

The register is split into four parameter groups (movement direction,
movement distance, heading adjustment, view orientation). Each builder below
returns the Pauli terms of one functional component; :func:`assemble` sums
them according to a coherence-ablation variant.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from .errors import ConfigError
from .qsim import PauliSum, pauli_string

BEARINGS = ("E", "N", "W", "S", "NE", "NW", "SE", "SW")


@dataclass(frozen=True)
class QubitLayout:
    """Qubit offsets of the four parameter groups (dir, dist, adj, orient).

    The standard layout is derived from ``q_p`` qubits per parameter: sizes
    ``(2, q_p - 2, q_p - 2, q_p)``. ``group_sizes`` overrides this for small
    test registers; empty groups are allowed there.
    """

    q_p: int = 4
    group_sizes: tuple[int, int, int, int] = ()

    def __post_init__(self):
        if not self.group_sizes:
            if self.q_p < 3:
                raise ConfigError(f"q_p must be >= 3, got {self.q_p}")
            sizes = (2, self.q_p - 2, self.q_p - 2, self.q_p)
        else:
            sizes = tuple(int(s) for s in self.group_sizes)
            if len(sizes) != 4 or min(sizes) < 0 or sum(sizes) < 1:
                raise ConfigError(f"group_sizes must be 4 non-negative ints, got {self.group_sizes}")
        object.__setattr__(self, "group_sizes", sizes)

    @classmethod
    def custom(cls, dir: int, dist: int, adj: int, orient: int) -> "QubitLayout":
        return cls(q_p=orient, group_sizes=(dir, dist, adj, orient))

    @property
    def l_dir(self) -> int:
        return 0

    @property
    def l_dist(self) -> int:
        return self.group_sizes[0]

    @property
    def l_adj(self) -> int:
        return self.l_dist + self.group_sizes[1]

    @property
    def l_orient(self) -> int:
        return self.l_adj + self.group_sizes[2]

    @property
    def n_total(self) -> int:
        return sum(self.group_sizes)

    @property
    def groups(self) -> dict[str, tuple[int, int]]:
        """``name -> (first qubit, size)`` in register order."""
        starts = (self.l_dir, self.l_dist, self.l_adj, self.l_orient)
        return dict(zip(("dir", "dist", "adj", "orient"), zip(starts, self.group_sizes)))

    def qubits(self, group: str) -> range:
        start, size = self.groups[group]
        return range(start, start + size)


@dataclass(frozen=True)
class ExplorationFeatures:
    """Map-derived quantities that parameterize the Hamiltonian coefficients."""

    e: dict[str, float]
    d_obs: float
    d_max: float
    c: float
    rho: float
    dispersion: float
    target_angle: float = 0.0

    def __post_init__(self):
        missing = set(BEARINGS) - set(self.e)
        if missing:
            raise ValueError(f"missing bearing densities {sorted(missing)}")
        for name, v in [*self.e.items(), ("c", self.c), ("rho", self.rho), ("dispersion", self.dispersion)]:
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.d_max <= 0 or not 0.0 <= self.d_obs <= self.d_max:
            raise ValueError(f"need 0 <= d_obs <= d_max, got d_obs={self.d_obs}, d_max={self.d_max}")


@dataclass(frozen=True)
class HamiltonianWeights:
    lambda_dir: float = 1.0
    lambda_diag: float = 0.5
    lambda_dist: float = 0.8
    lambda_adj: float = 0.6
    lambda_orient: float = 1.0
    lambda_orient_x: float = 0.5
    lambda_orient_zz: float = 0.2
    lambda_coh: float = 0.4
    lambda_coh_x: float = 0.2
    gamma: float = 0.5

    def __post_init__(self):
        for name, value in vars(self).items():
            if not math.isfinite(value) or value < 0:
                raise ConfigError(f"{name} must be finite and non-negative, got {value}")
        if not 0 < self.gamma <= 1:
            raise ConfigError(f"gamma must lie in (0, 1], got {self.gamma}")


class HamiltonianVariant(str, enum.Enum):
    CH = "CH"  # complete
    NC = "NC"  # no coherence component
    SQX = "SQX"  # coherence single-X terms only

    @classmethod
    def parse(cls, value) -> "HamiltonianVariant":
        try:
            return cls(str(value.value if isinstance(value, cls) else value).upper())
        except ValueError:
            raise ConfigError(f"unknown Hamiltonian variant {value!r}") from None


def _term(layout: QubitLayout, coeff: float, ops: dict[int, str]) -> list[tuple[float, str]]:
    if coeff == 0.0:
        return []
    return [(coeff, pauli_string(layout.n_total, ops))]


def _sum(terms) -> PauliSum:
    return PauliSum(tuple(terms))


def direction_coefficients(f: ExplorationFeatures, w: HamiltonianWeights) -> tuple[float, float, float]:
    e = f.e
    a_z1 = w.lambda_dir * math.tanh(e["W"] + e["S"] - e["E"] - e["N"])
    a_z2 = w.lambda_dir * math.tanh(e["N"] + e["S"] - e["E"] - e["W"])
    a_zz = w.lambda_diag * math.tanh(e["SE"] + e["NE"] - e["SW"] - e["NW"])
    return a_z1, a_z2, a_zz


def build_directional(f: ExplorationFeatures, w: HamiltonianWeights, layout: QubitLayout) -> PauliSum:
    a_z1, a_z2, a_zz = direction_coefficients(f, w)
    qs = list(layout.qubits("dir"))
    terms = []
    if qs:
        terms += _term(layout, a_z1, {qs[0]: "Z"})
    if len(qs) > 1:
        # small test registers may carry a single direction qubit
        terms += _term(layout, a_z2, {qs[1]: "Z"}) + _term(layout, a_zz, {qs[0]: "Z", qs[1]: "Z"})
    return _sum(terms)


def build_distance(f: ExplorationFeatures, w: HamiltonianWeights, layout: QubitLayout) -> PauliSum:
    proximity = f.d_obs / f.d_max
    terms = []
    for i, q in enumerate(layout.qubits("dist")):
        terms += _term(layout, w.lambda_dist * 2.0 ** -(i + 1) * proximity, {q: "Z"})
    return _sum(terms)


def build_adjustment(f: ExplorationFeatures, w: HamiltonianWeights, layout: QubitLayout) -> PauliSum:
    terms = []
    for i, q in enumerate(layout.qubits("adj")):
        terms += _term(layout, w.lambda_adj * 2.0 ** -(i + 1) * (1.0 - f.c), {q: "Z"})
    return _sum(terms)


def encode_angle(angle: float, n_bits: int) -> list[int]:
    """Signs ``b_i`` (most significant first) of the ``n_bits`` binary code of ``angle``."""
    j = round(angle / (2 * math.pi) * 2**n_bits) % 2**n_bits
    return [1 if (j >> (n_bits - 1 - i)) & 1 else -1 for i in range(n_bits)]


def build_orientation(f: ExplorationFeatures, w: HamiltonianWeights, layout: QubitLayout) -> PauliSum:
    qubits = list(layout.qubits("orient"))
    gate = f.rho * (1.0 - f.dispersion)
    signs = encode_angle(f.target_angle, len(qubits))
    terms = []
    for i, q in enumerate(qubits):
        terms += _term(layout, w.lambda_orient * 2.0 ** -(i + 1) * gate * signs[i], {q: "Z"})
    for i, q in enumerate(qubits):
        terms += _term(layout, w.lambda_orient_x * f.dispersion * w.gamma**i, {q: "X"})
    for qa, qb in zip(qubits, qubits[1:]):
        terms += _term(layout, w.lambda_orient_zz * gate, {qa: "Z", qb: "Z"})
    return _sum(terms)


def coherence_pairs(layout: QubitLayout) -> list[tuple[int, int]]:
    # direction-adjustment, distance-adjustment, direction-orientation
    g = layout.groups
    pairs = [("dir", "adj"), ("dist", "adj"), ("dir", "orient")]
    return [(g[a][0], g[b][0]) for a, b in pairs if g[a][1] and g[b][1]]


def build_coherence(
    f: ExplorationFeatures, w: HamiltonianWeights, layout: QubitLayout, include_pairs: bool = True
) -> PauliSum:
    unexplored = 1.0 - f.c
    terms = []
    for start, size in layout.groups.values():
        if size:
            terms += _term(layout, w.lambda_coh_x * unexplored, {start: "X"})
    if include_pairs:
        for a, b in coherence_pairs(layout):
            terms += _term(layout, w.lambda_coh * unexplored, {a: "X", b: "X"})
    return _sum(terms)


def assemble(
    f: ExplorationFeatures,
    w: HamiltonianWeights | None = None,
    layout: QubitLayout | None = None,
    variant: HamiltonianVariant | str = HamiltonianVariant.CH,
) -> PauliSum:
    w = w or HamiltonianWeights()
    layout = layout or QubitLayout()
    variant = HamiltonianVariant.parse(variant)
    h = (
        build_directional(f, w, layout)
        + build_distance(f, w, layout)
        + build_adjustment(f, w, layout)
        + build_orientation(f, w, layout)
    )
    if variant is HamiltonianVariant.CH:
        h = h + build_coherence(f, w, layout)
    elif variant is HamiltonianVariant.SQX:
        h = h + build_coherence(f, w, layout, include_pairs=False)
    return h
