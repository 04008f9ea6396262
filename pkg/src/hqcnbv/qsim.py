"""Dense statevector simulation for small qubit registers.

Conventions used throughout the package:

* qubit ``k`` has stride ``2**k`` in the amplitude array (qubit 0 is the
  lowest-order bit of a basis index);
* a bitstring is written with qubit 0 in the leftmost position, so basis
  index ``1`` on two qubits reads ``"10"``;
* rotations use the half-angle convention ``Ry(phi) = exp(-i phi Y / 2)`` and
  ``Rx(phi) = exp(-i phi X / 2)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError

MAX_QUBITS = 20
PAULI_CHARS = frozenset("IXYZ")

_H = np.array([[1.0, 1.0], [1.0, -1.0]], dtype=complex) / np.sqrt(2.0)


def ry_matrix(angle: float) -> np.ndarray:
    c, s = np.cos(angle / 2.0), np.sin(angle / 2.0)
    return np.array([[c, -s], [s, c]], dtype=complex)


def rx_matrix(angle: float) -> np.ndarray:
    c, s = np.cos(angle / 2.0), np.sin(angle / 2.0)
    return np.array([[c, -1j * s], [-1j * s, c]], dtype=complex)


@dataclass(frozen=True)
class StateVector:
    """An ``n_qubits`` register stored as ``2**n_qubits`` complex amplitudes."""

    n_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.shape != (2**self.n_qubits,):
            raise ValueError(
                f"expected {2**self.n_qubits} amplitudes for {self.n_qubits} qubits, "
                f"got shape {amps.shape}"
            )
        amps.flags.writeable = False
        object.__setattr__(self, "amplitudes", amps)

    @property
    def norm(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)


def new_zero_state(n_qubits: int) -> StateVector:
    if not isinstance(n_qubits, (int, np.integer)) or not 1 <= n_qubits <= MAX_QUBITS:
        raise ConfigError(f"n_qubits must be an integer in [1, {MAX_QUBITS}], got {n_qubits!r}")
    amps = np.zeros(2**n_qubits, dtype=complex)
    amps[0] = 1.0
    return StateVector(int(n_qubits), amps)


# ---------------------------------------------------------------------------
# In-place kernels. These operate on a writable amplitude array and are used
# directly by the ansatz for speed; ``apply_gate`` wraps them immutably.


def _apply_1q(amps: np.ndarray, mat: np.ndarray, qubit: int) -> None:
    view = amps.reshape(-1, 2, 1 << qubit)
    a0 = view[:, 0, :].copy()
    a1 = view[:, 1, :]
    view[:, 0, :] = mat[0, 0] * a0 + mat[0, 1] * a1
    view[:, 1, :] = mat[1, 0] * a0 + mat[1, 1] * a1


def _apply_all_1q(amps: np.ndarray, mats: Sequence[np.ndarray]) -> None:
    for q, mat in enumerate(mats):
        _apply_1q(amps, mat, q)


@lru_cache(maxsize=None)
def _cnot_permutation(n_qubits: int, control: int, target: int) -> np.ndarray:
    idx = np.arange(1 << n_qubits)
    perm = np.where((idx >> control) & 1, idx ^ (1 << target), idx)
    perm.flags.writeable = False
    return perm


def _check_qubits(n_qubits: int, targets: Sequence[int]) -> None:
    for t in targets:
        if not isinstance(t, (int, np.integer)) or not 0 <= t < n_qubits:
            raise IndexError(f"qubit index {t!r} out of range for {n_qubits} qubits")
    if len(set(targets)) != len(targets):
        raise ValueError(f"duplicate qubit indices in {tuple(targets)}")


def apply_gate(
    state: StateVector, gate: str, targets: Sequence[int], angle: float | None = None
) -> StateVector:
    """Return ``state`` transformed by one of ``H``, ``RY``, ``RX`` or ``CNOT``.

    ``targets`` is ``(qubit,)`` for single-qubit gates and ``(control, target)``
    for ``CNOT``. Rotation gates require ``angle`` in radians.
    """
    name = gate.upper()
    targets = tuple(targets)
    arity = 2 if name == "CNOT" else 1
    if name not in ("H", "RY", "RX", "CNOT"):
        raise ValueError(f"unsupported gate {gate!r}")
    if len(targets) != arity:
        raise ValueError(f"{name} takes {arity} qubit index(es), got {targets}")
    _check_qubits(state.n_qubits, targets)
    if name in ("RY", "RX") and angle is None:
        raise ValueError(f"{name} requires an angle")

    amps = np.array(state.amplitudes, dtype=complex)
    if name == "CNOT":
        amps = amps[_cnot_permutation(state.n_qubits, *targets)]
    else:
        mat = {"H": lambda: _H, "RY": lambda: ry_matrix(angle), "RX": lambda: rx_matrix(angle)}[name]()
        _apply_1q(amps, mat, targets[0])
    return StateVector(state.n_qubits, amps)


# ---------------------------------------------------------------------------
# Pauli observables


def _validate_pauli(ops: str) -> str:
    ops = ops.upper()
    if not ops or not set(ops) <= PAULI_CHARS:
        raise ValueError(f"invalid Pauli string {ops!r}")
    return ops


def pauli_string(n_qubits: int, ops: dict[int, str]) -> str:
    """Build a length-``n_qubits`` Pauli string with ``ops`` placed on the given qubits."""
    chars = ["I"] * n_qubits
    for q, p in ops.items():
        chars[q] = p
    return _validate_pauli("".join(chars))


@dataclass(frozen=True)
class PauliSum:
    """Real-weighted sum of Pauli strings; qubit 0 is the leftmost character."""

    terms: tuple[tuple[float, str], ...] = ()
    _compiled: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        clean = []
        for coeff, ops in self.terms:
            coeff = float(coeff)
            if not np.isfinite(coeff):
                raise ValueError(f"non-finite coefficient {coeff!r} on {ops!r}")
            clean.append((coeff, _validate_pauli(ops)))
        lengths = {len(ops) for _, ops in clean}
        if len(lengths) > 1:
            raise ValueError(f"Pauli strings of mixed lengths {sorted(lengths)}")
        object.__setattr__(self, "terms", tuple(clean))

    @classmethod
    def from_terms(cls, terms: Iterable[tuple[float, str]]) -> "PauliSum":
        return cls(tuple(terms))

    def __add__(self, other: "PauliSum") -> "PauliSum":
        return PauliSum(self.terms + other.terms)

    def __len__(self) -> int:
        return len(self.terms)

    @property
    def n_qubits(self) -> int | None:
        return len(self.terms[0][1]) if self.terms else None

    @property
    def l1_norm(self) -> float:
        return float(sum(abs(c) for c, _ in self.terms))

    def compile(self, n_qubits: int):
        """Group terms by X-mask into ``(x_mask, weight_vector)`` pairs.

        ``<psi|P|psi> = sum_k conj(psi[k ^ x]) * w[k] * psi[k]`` with
        ``w[k] = coeff * i**n_y * (-1)**popcount(k & z)``.
        """
        if n_qubits in self._compiled:
            return self._compiled[n_qubits]
        if self.terms and self.n_qubits != n_qubits:
            raise ValueError(
                f"Pauli strings have length {self.n_qubits}, register has {n_qubits} qubits"
            )
        idx = np.arange(1 << n_qubits)
        groups: dict[int, np.ndarray] = {}
        for coeff, ops in self.terms:
            x_mask = z_mask = n_y = 0
            for q, p in enumerate(ops):
                if p in "XY":
                    x_mask |= 1 << q
                if p in "ZY":
                    z_mask |= 1 << q
                n_y += p == "Y"
            parity = np.bitwise_count(idx & z_mask).astype(np.int64)
            w = coeff * (1j**n_y) * (1 - 2 * (parity & 1))
            groups[x_mask] = groups.get(x_mask, 0) + w
        compiled = tuple(
            (x, np.asarray(w, dtype=complex), None if x == 0 else idx ^ x) for x, w in groups.items()
        )
        self._compiled[n_qubits] = compiled
        return compiled


def expectation_array(amps: np.ndarray, n_qubits: int, h: PauliSum) -> float:
    total = 0.0 + 0.0j
    for x_mask, w, flip in h.compile(n_qubits):
        if x_mask == 0:
            total += np.dot(np.abs(amps) ** 2, w)
        else:
            total += np.vdot(amps[flip], w * amps)
    return float(total.real)


def expectation(state: StateVector, h: PauliSum) -> float:
    """``<state|h|state>``; the imaginary residue of a Hermitian sum is discarded."""
    return expectation_array(state.amplitudes, state.n_qubits, h)


# ---------------------------------------------------------------------------
# Measurement


def index_to_bits(index: int, n_qubits: int) -> str:
    return "".join("1" if (index >> q) & 1 else "0" for q in range(n_qubits))


def bits_to_index(bits: str) -> int:
    return sum(1 << q for q, b in enumerate(bits) if b == "1")


def probability_vector(state: StateVector) -> np.ndarray:
    p = np.abs(state.amplitudes) ** 2
    return p / p.sum()


def probabilities(state: StateVector) -> dict[str, float]:
    """Map each basis bitstring with nonzero weight to ``|c_k|**2``."""
    p = np.abs(state.amplitudes) ** 2
    return {index_to_bits(int(k), state.n_qubits): float(p[k]) for k in np.flatnonzero(p)}


def sample_indices(state: StateVector, shots: int, rng_seed) -> np.ndarray:
    if shots < 1:
        raise ValueError(f"shots must be >= 1, got {shots}")
    rng = np.random.default_rng(rng_seed)
    cdf = np.cumsum(np.abs(state.amplitudes) ** 2)
    cdf /= cdf[-1]
    draws = np.searchsorted(cdf, rng.random(shots), side="right")
    return np.minimum(draws, cdf.size - 1)


def sample(state: StateVector, shots: int, rng_seed) -> list[str]:
    """Draw ``shots`` i.i.d. bitstrings; deterministic for a fixed seed."""
    return [index_to_bits(int(k), state.n_qubits) for k in sample_indices(state, shots, rng_seed)]
