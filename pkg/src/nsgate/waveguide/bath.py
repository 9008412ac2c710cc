"""Discretised waveguide: Lorentzian wavepackets, bath grids and ≤2-excitation states."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

SECTORS = ("vacuum", "one_bath", "one_resonator", "two_bath", "bath_resonator",
           "two_resonator", "qubit")

# spacing used when the quoted coupling values were optimised; other N rescale g_wr
REFERENCE_MODES = 100


@dataclass(frozen=True)
class WavepacketSpec:
    """Lorentzian packet with amplitude ∝ 1/(ω − ω₀ + iε); frequencies in rad/ns."""
    epsilon: float
    omega0: float = 0.0
    span_k: float = 5.0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.span_k < 2:
            raise ValueError("span_k must be at least 2")

    def amplitude(self, detunings: np.ndarray) -> np.ndarray:
        return 1.0 / (np.asarray(detunings) - self.omega0 + 1j * self.epsilon)


@dataclass(frozen=True)
class BathDiscretization:
    """N modes, uniform spacing δω = kε/N, detunings symmetric about the resonator."""
    N: int
    delta_omega: float

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("need at least one bath mode")
        if not self.delta_omega > 0:
            raise ValueError("mode spacing must be positive")

    @classmethod
    def for_packet(cls, spec: WavepacketSpec, N: int = REFERENCE_MODES) -> "BathDiscretization":
        return cls(N, spec.span_k * spec.epsilon / N)

    @property
    def detunings(self) -> np.ndarray:
        return (np.arange(self.N) - (self.N - 1) / 2) * self.delta_omega

    def omegas(self, omega_r: float = 0.0) -> np.ndarray:
        return omega_r + self.detunings

    def coupling_scale(self, reference_modes: int = REFERENCE_MODES) -> float:
        """√(δω/δω_ref): keeps the continuum decay rate g²/δω fixed as N changes."""
        return math.sqrt(reference_modes / self.N)


@dataclass
class BathState:
    """Amplitudes of the ≤2-excitation sector of resonator ⊗ waveguide ⊗ qubit.

    ``S`` is the symmetric two-bath-photon matrix with S_mn = C_mn off the
    diagonal and S_mm = √2·C_mm, so that Σ_{m≤n}|C_mn|² = ½‖S‖²_F.
    """
    bath: BathDiscretization
    Z: complex = 0j
    a1: complex = 0j
    b: np.ndarray = None
    A: complex = 0j
    B: np.ndarray = None
    S: np.ndarray = None
    E: complex = 0j
    t: float = 0.0

    def __post_init__(self):
        N = self.bath.N
        self.b = np.zeros(N, complex) if self.b is None else np.asarray(self.b, complex)
        self.B = np.zeros(N, complex) if self.B is None else np.asarray(self.B, complex)
        self.S = np.zeros((N, N), complex) if self.S is None else np.asarray(self.S, complex)
        if self.b.shape != (N,) or self.B.shape != (N,) or self.S.shape != (N, N):
            raise ValueError("amplitude shapes do not match the bath discretisation")

    # packed layout shared with the stepping kernels
    def pack(self) -> np.ndarray:
        return np.concatenate([[self.Z, self.a1], self.b, [self.A], self.B, self.S.ravel(), [self.E]])

    @classmethod
    def unpack(cls, bath: BathDiscretization, y: np.ndarray, t: float = 0.0) -> "BathState":
        N = bath.N
        if y.shape != (4 + 2 * N + N * N,):
            raise ValueError("packed vector has the wrong length")
        y = np.array(y, dtype=complex)
        return cls(bath, y[0], y[1], y[2:2 + N], y[2 + N], y[3 + N:3 + 2 * N],
                   y[3 + 2 * N:3 + 2 * N + N * N].reshape(N, N), y[-1], t)

    def sector_norms(self) -> dict[str, float]:
        return {
            "vacuum": abs(self.Z) ** 2,
            "one_bath": float(np.vdot(self.b, self.b).real),
            "one_resonator": abs(self.a1) ** 2,
            "two_bath": 0.5 * float(np.vdot(self.S, self.S).real),
            "bath_resonator": float(np.vdot(self.B, self.B).real),
            "two_resonator": abs(self.A) ** 2,
            "qubit": abs(self.E) ** 2,
        }

    def excitation_norms(self) -> tuple[float, float, float]:
        """Squared norm of the 0-, 1- and 2-excitation blocks."""
        s = self.sector_norms()
        return (s["vacuum"], s["one_bath"] + s["one_resonator"],
                s["two_bath"] + s["bath_resonator"] + s["two_resonator"] + s["qubit"])

    @property
    def norm(self) -> float:
        return math.sqrt(sum(self.excitation_norms()))

    def resonator_populations(self) -> np.ndarray:
        """Diagonal of the reduced resonator state (photon numbers 0, 1, 2)."""
        s = self.sector_norms()
        return np.array([s["vacuum"] + s["one_bath"] + s["two_bath"] + s["qubit"],
                         s["one_resonator"] + s["bath_resonator"],
                         s["two_resonator"]])

    def pairs(self) -> np.ndarray:
        """Ordered-pair amplitudes C_mn (m ≤ n) as an upper-triangular matrix."""
        C = np.triu(self.S)
        C[np.diag_indices(self.bath.N)] /= math.sqrt(2)
        return C

    def inner(self, other: "BathState") -> complex:
        """⟨self|other⟩."""
        if self.bath != other.bath:
            raise ValueError("states live on different bath grids")
        return complex(np.conj(self.Z) * other.Z + np.conj(self.a1) * other.a1
                       + np.vdot(self.b, other.b) + np.conj(self.A) * other.A
                       + np.vdot(self.B, other.B) + 0.5 * np.vdot(self.S, other.S)
                       + np.conj(self.E) * other.E)

    def scaled(self, c: complex) -> "BathState":
        return BathState(self.bath, c * self.Z, c * self.a1, c * self.b, c * self.A, c * self.B,
                         c * self.S, c * self.E, self.t)


def single_photon_packet(spec: WavepacketSpec, bath: BathDiscretization) -> np.ndarray:
    f = spec.amplitude(bath.detunings)
    return f / np.linalg.norm(f)


def two_photon_packet(spec: WavepacketSpec, bath: BathDiscretization) -> np.ndarray:
    """Symmetric S for the product packet, normalised so ½‖S‖² = 1."""
    f = single_photon_packet(spec, bath)
    S = np.outer(f, f)
    return S * math.sqrt(2.0 / np.vdot(S, S).real)


def build_lorentzian_input(spec: WavepacketSpec, alphas, bath: BathDiscretization) -> BathState:
    """α₀|0⟩ + α₁|1⟩_w + α₂|2⟩_w with the resonator empty and the qubit in g."""
    a0, a1, a2 = (complex(x) for x in alphas)
    total = abs(a0) ** 2 + abs(a1) ** 2 + abs(a2) ** 2
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"alphas not normalised (sum |α|² = {total:.12g})")
    return BathState(bath, Z=a0, b=a1 * single_photon_packet(spec, bath),
                     S=a2 * two_photon_packet(spec, bath))


def free_phases(bath: BathDiscretization, tau: float) -> tuple[np.ndarray, np.ndarray]:
    D = bath.detunings
    return np.exp(-1j * D * tau), np.exp(-1j * (D[:, None] + D[None, :]) * tau)


def tilde_reference_state(input_state: BathState, t: float, t_in: float, t_q: float) -> BathState:
    """Freely evolve the bath part of ``input_state``; the clock restarts at t_in + t_q."""
    if t < 0:
        raise ValueError("t must be non-negative")
    tau = t if t < t_in + t_q else t - t_in - t_q
    p1, p2 = free_phases(input_state.bath, tau)
    return BathState(input_state.bath, Z=input_state.Z, b=p1 * input_state.b,
                     S=p2 * input_state.S, t=t)


def waveform_overlap(output: BathState, reference: BathState, sector: str = "one_bath") -> float:
    """|⟨ref|out⟩| with both restricted to one sector and normalised there."""
    if output.bath != reference.bath:
        raise ValueError("states live on different bath grids")
    if sector == "one_bath":
        x, y, w = reference.b, output.b, 1.0
    elif sector == "two_bath":
        x, y, w = reference.S.ravel(), output.S.ravel(), 0.5
    else:
        raise ValueError(f"unknown sector {sector!r}; use 'one_bath' or 'two_bath'")
    nx, ny = math.sqrt(w * np.vdot(x, x).real), math.sqrt(w * np.vdot(y, y).real)
    if nx == 0 or ny == 0:
        raise ValueError(f"sector {sector!r} is empty")
    return float(abs(w * np.vdot(x, y)) / (nx * ny))
