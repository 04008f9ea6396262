"""Layered variational circuit with grouped rotations and hierarchical entanglement.

Every layer applies, in order: one ``Ry`` per qubit (grouped dir, dist, adj,
orient, which is register order), the layer's CNOT schedule, then one ``Rx``
per qubit. The register starts in ``|+>^n``.

Parameter layout of the flat vector: layer by layer, and within a layer the
``n`` Ry angles (qubit 0..n-1) followed by the ``n`` Rx angles.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .hamiltonian import QubitLayout
from .qsim import StateVector, _apply_1q, _cnot_permutation

_SQRT_HALF = 1.0 / np.sqrt(2.0)


class AnsatzVariant(str, enum.Enum):
    FA = "FA"  # intra- and inter-group entanglement
    NE = "NE"  # no entanglers
    IG = "IG"  # intra-group chains only
    EG = "EG"  # inter-group links only

    @classmethod
    def parse(cls, value) -> "AnsatzVariant":
        try:
            return cls(str(value.value if isinstance(value, cls) else value).upper())
        except ValueError:
            raise ConfigError(f"unknown ansatz variant {value!r}") from None


@dataclass(frozen=True)
class AnsatzConfig:
    layout: QubitLayout = field(default_factory=QubitLayout)
    layers: int = 5
    variant: AnsatzVariant = AnsatzVariant.FA

    def __post_init__(self):
        if self.layers < 1:
            raise ConfigError(f"layers must be >= 1, got {self.layers}")
        object.__setattr__(self, "variant", AnsatzVariant.parse(self.variant))

    @property
    def n_qubits(self) -> int:
        return self.layout.n_total


def parameter_count(cfg: AnsatzConfig) -> int:
    return cfg.layers * 2 * cfg.layout.n_total


def intra_group_cnots(layout: QubitLayout) -> list[tuple[int, int]]:
    pairs = []
    for start, size in layout.groups.values():
        pairs += [(i, i + 1) for i in range(start, start + size - 1)]
    return pairs


def inter_group_cnots(layout: QubitLayout, layer: int) -> list[tuple[int, int]]:
    """Links between leading qubits of groups; direction alternates with layer parity."""
    g = layout.groups
    if layer % 2 == 0:
        links = [("dir", "adj"), ("dist", "adj"), ("dir", "orient")]
    else:
        links = [("orient", "dir"), ("adj", "dist"), ("adj", "dir")]
    # links touching an empty group only occur in custom test layouts
    return [(g[c][0], g[t][0]) for c, t in links if g[c][1] and g[t][1]]


def entangler_schedule(cfg: AnsatzConfig, layer: int) -> list[tuple[int, int]]:
    """Ordered ``(control, target)`` CNOTs applied in ``layer`` (0-based)."""
    if not 0 <= layer < cfg.layers:
        raise IndexError(f"layer {layer} out of range for {cfg.layers} layers")
    v = cfg.variant
    intra = intra_group_cnots(cfg.layout) if v in (AnsatzVariant.FA, AnsatzVariant.IG) else []
    inter = inter_group_cnots(cfg.layout, layer) if v in (AnsatzVariant.FA, AnsatzVariant.EG) else []
    return intra + inter


def _rotation_mats(angles: np.ndarray, kind: str) -> np.ndarray:
    c = np.cos(angles / 2.0)
    s = np.sin(angles / 2.0)
    mats = np.empty((angles.size, 2, 2), dtype=complex)
    mats[:, 0, 0] = c
    mats[:, 1, 1] = c
    if kind == "ry":
        mats[:, 0, 1] = -s
        mats[:, 1, 0] = s
    else:
        mats[:, 0, 1] = -1j * s
        mats[:, 1, 0] = -1j * s
    return mats


def prepare_amplitudes(cfg: AnsatzConfig, theta) -> np.ndarray:
    n = cfg.n_qubits
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (parameter_count(cfg),):
        raise ValueError(f"expected {parameter_count(cfg)} parameters, got shape {theta.shape}")
    amps = np.full(1 << n, _SQRT_HALF**n, dtype=complex)
    per_layer = theta.reshape(cfg.layers, 2, n)
    for layer in range(cfg.layers):
        for q, mat in enumerate(_rotation_mats(per_layer[layer, 0], "ry")):
            _apply_1q(amps, mat, q)
        for control, target in entangler_schedule(cfg, layer):
            amps = amps[_cnot_permutation(n, control, target)]
        for q, mat in enumerate(_rotation_mats(per_layer[layer, 1], "rx")):
            _apply_1q(amps, mat, q)
    return amps


def prepare_state(cfg: AnsatzConfig, theta) -> StateVector:
    return StateVector(cfg.n_qubits, prepare_amplitudes(cfg, theta))
