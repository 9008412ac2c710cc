"""Truncated Fock ⊗ qubit Hilbert spaces, states and operators.

Basis ordering is fixed: modes first, then qubits, with the last factor
varying fastest (the ordering produced by ``np.kron(mode_0, ..., qubit_last)``).
Each qubit lists ``g`` before ``e``. For one mode with cutoff 2 and one qubit
the basis is ``|0,g>, |0,e>, |1,g>, |1,e>, |2,g>, |2,e>``.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

QUBIT_LABELS = ("g", "e")


class SpaceMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class SpaceLabel:
    mode_cutoffs: tuple[int, ...]
    qubit_count: int

    def __post_init__(self):
        object.__setattr__(self, "mode_cutoffs", tuple(int(c) for c in self.mode_cutoffs))
        if any(c < 0 for c in self.mode_cutoffs):
            raise ValueError("mode cutoffs must be >= 0")
        if self.qubit_count < 0:
            raise ValueError("qubit_count must be >= 0")
        if not self.mode_cutoffs and self.qubit_count == 0:
            raise ValueError("zero-dimensional space: need at least one mode or qubit")

    @property
    def n_modes(self) -> int:
        return len(self.mode_cutoffs)

    @property
    def subsystem_dims(self) -> tuple[int, ...]:
        return tuple(c + 1 for c in self.mode_cutoffs) + (2,) * self.qubit_count

    @property
    def dim(self) -> int:
        return int(np.prod(self.subsystem_dims))

    @cached_property
    def labels(self) -> tuple[tuple[int, ...], ...]:
        """Occupation tuples; qubit entries are 0 (g) or 1 (e)."""
        return tuple(itertools.product(*(range(d) for d in self.subsystem_dims)))

    @cached_property
    def _index(self) -> dict[tuple[int, ...], int]:
        return {lab: i for i, lab in enumerate(self.labels)}

    def index(self, label: Sequence) -> int:
        key = tuple(self._normalise(label))
        try:
            return self._index[key]
        except KeyError:
            raise KeyError(f"{label!r} is not a basis state of {self}") from None

    def label(self, index: int) -> tuple[int, ...]:
        return self.labels[index]

    def label_str(self, index: int) -> str:
        lab = self.labels[index]
        modes = [str(n) for n in lab[: self.n_modes]]
        qubits = [QUBIT_LABELS[q] for q in lab[self.n_modes:]]
        return "|" + ",".join(modes + qubits) + ">"

    def basis_labels(self) -> list[str]:
        return [self.label_str(i) for i in range(self.dim)]

    def photon_number(self, index: int) -> int:
        return sum(self.labels[index][: self.n_modes])

    def _normalise(self, label):
        out = []
        for k, x in enumerate(label):
            if k >= self.n_modes and isinstance(x, str):
                x = QUBIT_LABELS.index(x)
            out.append(int(x))
        if len(out) != len(self.subsystem_dims):
            raise KeyError(f"label {label!r} has wrong length for {self}")
        return out


def build_space(mode_cutoffs: Sequence[int], qubit_count: int) -> SpaceLabel:
    return SpaceLabel(tuple(mode_cutoffs), int(qubit_count))


@dataclass(frozen=True)
class KetState:
    space: SpaceLabel
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        amp = np.array(self.amplitudes, dtype=complex).reshape(-1)
        if amp.size != self.space.dim:
            raise SpaceMismatchError(f"got {amp.size} amplitudes for a {self.space.dim}-dim space")
        amp.setflags(write=False)
        object.__setattr__(self, "amplitudes", amp)

    @classmethod
    def basis(cls, space: SpaceLabel, label) -> "KetState":
        amp = np.zeros(space.dim, dtype=complex)
        amp[space.index(label)] = 1.0
        return cls(space, amp)

    @classmethod
    def from_dict(cls, space: SpaceLabel, coeffs: dict, normalise: bool = True) -> "KetState":
        amp = np.zeros(space.dim, dtype=complex)
        for lab, c in coeffs.items():
            amp[space.index(lab)] += c
        if normalise:
            amp = amp / np.linalg.norm(amp)
        return cls(space, amp)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalised(self) -> "KetState":
        return KetState(self.space, self.amplitudes / self.norm)

    def amplitude(self, label) -> complex:
        return complex(self.amplitudes[self.space.index(label)])

    def to_density(self) -> "DensityMatrix":
        return DensityMatrix(self.space, np.outer(self.amplitudes, self.amplitudes.conj()))

    def overlap(self, other: "KetState") -> complex:
        _check_space(self.space, other.space)
        return complex(np.vdot(self.amplitudes, other.amplitudes))


@dataclass(frozen=True)
class DensityMatrix:
    space: SpaceLabel
    matrix: np.ndarray = field(repr=False)

    HERMITIAN_TOL = 1e-10
    TRACE_TOL = 1e-8
    POSITIVITY_TOL = -1e-7

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        d = self.space.dim
        if m.shape != (d, d):
            raise SpaceMismatchError(f"matrix shape {m.shape} does not match dimension {d}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def trace(self) -> complex:
        return complex(np.trace(self.matrix))

    def populations(self) -> np.ndarray:
        return self.matrix.diagonal().real.copy()

    def violations(self) -> list[str]:
        """Names of the density-matrix invariants this matrix breaks."""
        out = []
        m = self.matrix
        if np.max(np.abs(m - m.conj().T), initial=0.0) > self.HERMITIAN_TOL:
            out.append("hermitian")
        if abs(np.trace(m) - 1.0) > self.TRACE_TOL:
            out.append("trace")
        herm = 0.5 * (m + m.conj().T)
        if np.linalg.eigvalsh(herm).min() < self.POSITIVITY_TOL:
            out.append("positivity")
        return out

    def is_valid(self) -> bool:
        return not self.violations()


@dataclass(frozen=True)
class OperatorMatrix:
    space: SpaceLabel
    matrix: np.ndarray = field(repr=False)
    hermitian_flag: bool = False

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        d = self.space.dim
        if m.shape != (d, d):
            raise SpaceMismatchError(f"matrix shape {m.shape} does not match dimension {d}")
        if self.hermitian_flag and hermiticity_error(m) >= 1e-12:
            raise ValueError(f"operator flagged Hermitian but ||M - M^dag|| = {hermiticity_error(m):.3e}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def dag(self) -> "OperatorMatrix":
        return OperatorMatrix(self.space, self.matrix.conj().T, self.hermitian_flag)

    def __matmul__(self, other):
        if isinstance(other, OperatorMatrix):
            _check_space(self.space, other.space)
            return OperatorMatrix(self.space, self.matrix @ other.matrix)
        if isinstance(other, KetState):
            _check_space(self.space, other.space)
            return KetState(self.space, self.matrix @ other.amplitudes)
        return NotImplemented

    def __add__(self, other: "OperatorMatrix") -> "OperatorMatrix":
        _check_space(self.space, other.space)
        return OperatorMatrix(self.space, self.matrix + other.matrix,
                              self.hermitian_flag and other.hermitian_flag)

    def __sub__(self, other: "OperatorMatrix") -> "OperatorMatrix":
        _check_space(self.space, other.space)
        return OperatorMatrix(self.space, self.matrix - other.matrix,
                              self.hermitian_flag and other.hermitian_flag)

    def scaled(self, c) -> "OperatorMatrix":
        return OperatorMatrix(self.space, c * self.matrix,
                              self.hermitian_flag and np.isreal(c))

    def element(self, bra, ket) -> complex:
        return complex(self.matrix[self.space.index(bra), self.space.index(ket)])


def hermiticity_error(m: np.ndarray) -> float:
    return float(np.linalg.norm(m - m.conj().T))


def _check_space(a: SpaceLabel, b: SpaceLabel):
    if a != b:
        raise SpaceMismatchError(f"space mismatch: {a} vs {b}")


def embed(space: SpaceLabel, factors: dict[int, np.ndarray]) -> np.ndarray:
    """Kronecker-embed local matrices (keyed by subsystem index) into ``space``."""
    mats = []
    for k, d in enumerate(space.subsystem_dims):
        local = factors.get(k)
        mats.append(np.eye(d) if local is None else np.asarray(local))
    out = mats[0]
    for m in mats[1:]:
        out = np.kron(out, m)
    return out.astype(complex)


def embed_operator(space: SpaceLabel, op: np.ndarray, subsystems: Sequence[int]) -> np.ndarray:
    """Lift ``op`` acting on ``subsystems`` (in the order given) to the full space."""
    dims = space.subsystem_dims
    subsystems = list(subsystems)
    rest = [k for k in range(len(dims)) if k not in subsystems]
    sub_dim = int(np.prod([dims[k] for k in subsystems]))
    op = np.asarray(op, dtype=complex)
    if op.shape != (sub_dim, sub_dim):
        raise SpaceMismatchError(f"operator shape {op.shape} does not match subsystems {subsystems}")
    rest_dim = int(np.prod([dims[k] for k in rest])) if rest else 1
    full = np.kron(op, np.eye(rest_dim))
    order = subsystems + rest
    n = len(dims)
    t = full.reshape([dims[k] for k in order] * 2)
    perm = [order.index(k) for k in range(n)]
    t = t.transpose(perm + [p + n for p in perm])
    return t.reshape(space.dim, space.dim)


def _annihilator(cutoff: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, cutoff + 1, dtype=float)), 1)


def ladder_ops(space: SpaceLabel, mode_index: int) -> tuple[OperatorMatrix, OperatorMatrix]:
    """Annihilation and creation operators of one mode, truncated at its cutoff."""
    if not 0 <= mode_index < space.n_modes:
        raise IndexError(f"mode index {mode_index} out of range for {space.n_modes} modes")
    a = embed(space, {mode_index: _annihilator(space.mode_cutoffs[mode_index])})
    return OperatorMatrix(space, a), OperatorMatrix(space, a.conj().T)


def number_op(space: SpaceLabel, mode_index: int) -> OperatorMatrix:
    a, ad = ladder_ops(space, mode_index)
    return OperatorMatrix(space, ad.matrix @ a.matrix, True)


_SIGMA = {
    # basis (g, e); sigma_z = |e><e| - |g><g|
    "z": np.array([[-1.0, 0.0], [0.0, 1.0]]),
    "x": np.array([[0.0, 1.0], [1.0, 0.0]]),
    "plus": np.array([[0.0, 0.0], [1.0, 0.0]]),   # |e><g|
    "minus": np.array([[0.0, 1.0], [0.0, 0.0]]),  # |g><e|
}


def qubit_op(space: SpaceLabel, qubit_index: int, kind: str) -> OperatorMatrix:
    """``kind`` is one of ``z``, ``x``, ``plus``, ``minus``."""
    if not 0 <= qubit_index < space.qubit_count:
        raise IndexError(f"qubit index {qubit_index} out of range")
    m = embed(space, {space.n_modes + qubit_index: _SIGMA[kind]})
    return OperatorMatrix(space, m, kind in ("z", "x"))


def identity(space: SpaceLabel) -> OperatorMatrix:
    return OperatorMatrix(space, np.eye(space.dim), True)


def excitation_operator(space: SpaceLabel) -> OperatorMatrix:
    """C = a†a + 2σ₊σ₋ on a single mode ⊗ single qubit space."""
    if space.n_modes != 1 or space.qubit_count != 1:
        raise ValueError("excitation operator needs exactly one mode and one qubit")
    n = number_op(space, 0).matrix
    sp = qubit_op(space, 0, "plus").matrix
    return OperatorMatrix(space, n + 2 * sp @ sp.conj().T, True)


def fidelity(rho: DensityMatrix, target: KetState) -> float:
    """|<ψ|ρ|ψ>| clipped to [0, 1]."""
    _check_space(rho.space, target.space)
    psi = target.amplitudes
    val = abs(np.vdot(psi, rho.matrix @ psi))
    return float(min(max(val, 0.0), 1.0))


def partial_trace(rho: DensityMatrix, keep: Sequence[int]) -> DensityMatrix:
    """Reduce ``rho`` onto the subsystems listed in ``keep`` (modes first, then qubits).

    The result lives on a space built from the kept subsystems, in their
    original order.
    """
    keep = sorted(set(int(k) for k in keep))
    if not keep:
        raise ValueError("keep list must not be empty")
    dims = rho.space.subsystem_dims
    n = len(dims)
    if keep[0] < 0 or keep[-1] >= n:
        raise IndexError(f"subsystem indices must lie in [0, {n})")
    t = rho.matrix.reshape(dims + dims)
    traced = [k for k in range(n) if k not in keep]
    # contract the traced axes pairwise
    letters = "abcdefghijklmnopqrstuvwxyz"
    row = [letters[k] for k in range(n)]
    col = [letters[k] if k in traced else letters[k].upper() for k in range(n)]
    out = [letters[k] for k in keep] + [letters[k].upper() for k in keep]
    red = np.einsum("".join(row) + "".join(col) + "->" + "".join(out), t)
    kd = int(np.prod([dims[k] for k in keep]))
    space = SpaceLabel(
        tuple(rho.space.mode_cutoffs[k] for k in keep if k < rho.space.n_modes),
        sum(1 for k in keep if k >= rho.space.n_modes),
    )
    return DensityMatrix(space, red.reshape(kd, kd))


def tensor_kets(*kets: KetState) -> np.ndarray:
    out = kets[0].amplitudes
    for k in kets[1:]:
        out = np.kron(out, k.amplitudes)
    return out


def to_json_dict(obj) -> dict:
    """Dump a state or operator as ``{basis_labels, re, im}`` (row-major)."""
    if isinstance(obj, KetState):
        data = obj.amplitudes
    elif isinstance(obj, (DensityMatrix, OperatorMatrix)):
        data = obj.matrix
    else:
        raise TypeError(f"cannot serialise {type(obj).__name__}")
    return {
        "basis_labels": obj.space.basis_labels(),
        "mode_cutoffs": list(obj.space.mode_cutoffs),
        "qubit_count": obj.space.qubit_count,
        "kind": type(obj).__name__,
        "shape": list(data.shape),
        "re": data.real.ravel().tolist(),
        "im": data.imag.ravel().tolist(),
    }


def from_json_dict(d: dict):
    space = SpaceLabel(tuple(d["mode_cutoffs"]), d["qubit_count"])
    data = (np.asarray(d["re"]) + 1j * np.asarray(d["im"])).reshape(d["shape"])
    kind = d.get("kind", "KetState" if len(d["shape"]) == 1 else "DensityMatrix")
    if kind == "KetState":
        return KetState(space, data)
    if kind == "OperatorMatrix":
        return OperatorMatrix(space, data)
    return DensityMatrix(space, data)


def dumps(obj) -> str:
    return json.dumps(to_json_dict(obj))


def loads(text: str):
    return from_json_dict(json.loads(text))
