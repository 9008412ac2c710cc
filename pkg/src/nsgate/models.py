"""Hamiltonians of the two-photon Rabi family and the solvers that make each
nonlinear-sign protocol resonant.

All frequencies are angular (rad/ns). Builders default to one mode with
cutoff 2 and one qubit; pass ``space`` to build on a larger truncation.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .hilbert import OperatorMatrix, SpaceLabel, build_space, ladder_ops, qubit_op
from .units import frequency_entry, ghz, parse_frequency

NBAR = 2  # photon-number bound of every gate input


class ValidityWarning(UserWarning):
    """A parameter set is outside the regime where an effective model holds."""


class NoSolutionError(ValueError):
    pass


@dataclass(frozen=True)
class SystemParams:
    omega_r: float
    omega_q: float
    g: float

    def __post_init__(self):
        if self.omega_r <= 0 or self.omega_q <= 0 or self.g < 0:
            raise ValueError("frequencies must be positive (g >= 0)")

    @property
    def delta(self) -> float:
        return self.omega_q - 2.0 * self.omega_r

    def to_dict(self, unit="GHz_over_2pi") -> dict:
        return {k: frequency_entry(getattr(self, k), unit) for k in ("omega_r", "omega_q", "g")}

    @classmethod
    def from_dict(cls, d: dict) -> "SystemParams":
        return cls(*(parse_frequency(d[k]) for k in ("omega_r", "omega_q", "g")))


def bloch_siegert_shifts(omega_r, omega_q, g):
    """(ω_2BS, Ω_q) = (2g²/(2ω_r+ω_q), 2g²/ω_q)."""
    return 2 * g**2 / (2 * omega_r + omega_q), 2 * g**2 / omega_q


def kerr_coefficient(omega_r, omega_q, g):
    """B = -6(ω_2BS/2 + 2Ω_q), the two-photon level shift in the interaction frame."""
    w2bs, wq = bloch_siegert_shifts(omega_r, omega_q, g)
    return -6.0 * (w2bs / 2 + 2 * wq)


@dataclass(frozen=True)
class BlochSiegertParams:
    base: SystemParams
    omega_2bs: float
    Omega_q: float
    B: float
    r: float
    k: int
    T_osc: float
    gate_time: float

    @property
    def resonance_residual(self) -> float:
        p = self.base
        return p.omega_q - 2 * p.omega_r + 3 * self.omega_2bs + self.Omega_q

    def to_dict(self) -> dict:
        return {
            "base": self.base.to_dict(),
            "k": self.k,
            "r": self.r,
            "g_over_omega_r": self.base.g / self.base.omega_r,
            "B": frequency_entry(self.B, "rad_per_ns"),
            "T_osc_ns": self.T_osc,
            "gate_time_ns": self.gate_time,
        }


@dataclass(frozen=True)
class DispersiveParams:
    base: SystemParams
    chi: float
    n: int
    m: int
    target_phase: float
    gate_time: float
    nbar: int = NBAR

    def to_dict(self) -> dict:
        return {
            "base": self.base.to_dict(),
            "chi": frequency_entry(self.chi, "GHz_over_2pi"),
            "chi_over_omega_r": self.chi / self.base.omega_r,
            "g_over_omega_r": self.base.g / self.base.omega_r,
            "n": self.n,
            "m": self.m,
            "target_phase": self.target_phase,
            "gate_time_ns": self.gate_time,
            "nbar": self.nbar,
        }


# ---------------------------------------------------------------- builders

def _space(space, min_cutoff=0) -> SpaceLabel:
    if space is None:
        space = build_space([max(2, min_cutoff)], 1)
    if space.n_modes != 1 or space.qubit_count != 1:
        raise ValueError("Hamiltonian builders expect one mode and one qubit")
    return space


def _ops(space):
    a, ad = ladder_ops(space, 0)
    a, ad = a.matrix, ad.matrix
    sz = qubit_op(space, 0, "z").matrix
    sp = qubit_op(space, 0, "plus").matrix
    sm = qubit_op(space, 0, "minus").matrix
    return a, ad, ad @ a, sz, sp, sm


def _hermitian(space, m) -> OperatorMatrix:
    # symmetrise away rounding so the exact Hermitian flag holds
    return OperatorMatrix(space, 0.5 * (m + m.conj().T), True)


def h_2jc(params: SystemParams, space: SpaceLabel | None = None) -> OperatorMatrix:
    """ω_r a†a + (ω_q/2)σ_z + g(σ₊a² + σ₋a†²)."""
    space = _space(space)
    if space.mode_cutoffs[0] < 2:
        raise ValueError("cutoff < 2: the two-photon term vanishes identically")
    a, ad, n, sz, sp, sm = _ops(space)
    h = params.omega_r * n + 0.5 * params.omega_q * sz + params.g * (sp @ a @ a + sm @ ad @ ad)
    return _hermitian(space, h)


def h_2jc_interaction(params: SystemParams, t: float, space: SpaceLabel | None = None) -> OperatorMatrix:
    """g(σ₊a² e^{iδt} + σ₋a†² e^{-iδt}), the rotating-frame two-photon JC coupling."""
    space = _space(space)
    a, ad, n, sz, sp, sm = _ops(space)
    ph = np.exp(1j * params.delta * t)
    v = params.g * ph * (sp @ a @ a)
    return _hermitian(space, v + v.conj().T)


def h_2qrm(params: SystemParams, space: SpaceLabel | None = None) -> OperatorMatrix:
    """Full two-photon Rabi model ω_r a†a + (ω_q/2)σ_z + g σ_x(a² + a†²)."""
    space = _space(space, 4)
    a, ad, n, sz, sp, sm = _ops(space)
    sx = sp + sm
    h = params.omega_r * n + 0.5 * params.omega_q * sz + params.g * sx @ (a @ a + ad @ ad)
    return _hermitian(space, h)


def _check_bs_validity(params: SystemParams):
    ratio = params.g * (NBAR + 1) / min(params.omega_q, params.omega_q + 2 * params.omega_r)
    if ratio > 0.3:
        warnings.warn(
            f"g(nbar+1)/omega_q = {ratio:.2f} > 0.3: Bloch-Siegert expansion is marginal",
            ValidityWarning, stacklevel=3)


def h_2bs(params: SystemParams, space: SpaceLabel | None = None) -> OperatorMatrix:
    """Two-photon Bloch-Siegert Hamiltonian.

    H_2JC − ω_2BS a†a + (ω_2BS/2 + Ω_q/2)σ_z + (ω_2BS/2 + 2Ω_q)σ_z(a†a + (a†a)²)
    """
    space = _space(space)
    _check_bs_validity(params)
    w2bs, wq = bloch_siegert_shifts(params.omega_r, params.omega_q, params.g)
    a, ad, n, sz, sp, sm = _ops(space)
    h = (h_2jc(params, space).matrix - w2bs * n + (w2bs / 2 + wq / 2) * sz
         + (w2bs / 2 + 2 * wq) * sz @ (n + n @ n))
    return _hermitian(space, h)


def h_2bs_frame(params: SystemParams, space: SpaceLabel | None = None) -> OperatorMatrix:
    """H₀ = (ω_r − ω_2BS)a†a + (ω_q/2 + ω_2BS/2 + Ω_q/2)σ_z, the interaction-picture reference."""
    space = _space(space)
    w2bs, wq = bloch_siegert_shifts(params.omega_r, params.omega_q, params.g)
    a, ad, n, sz, sp, sm = _ops(space)
    return _hermitian(space, (params.omega_r - w2bs) * n + 0.5 * (params.omega_q + w2bs + wq) * sz)


def pusc_resonance_residual(params: SystemParams) -> float:
    w2bs, wq = bloch_siegert_shifts(params.omega_r, params.omega_q, params.g)
    return params.omega_q - 2 * params.omega_r + 3 * w2bs + wq


def h_2bs_interaction(params: SystemParams, space: SpaceLabel | None = None,
                      tol: float = 1e-9) -> OperatorMatrix:
    """Time-independent H_2BS in the frame of :func:`h_2bs_frame`.

    Only valid on resonance, ω_q − 2ω_r + 3ω_2BS + Ω_q = 0.
    """
    space = _space(space)
    res = pusc_resonance_residual(params)
    if abs(res) > tol * params.omega_r:
        raise ValueError(f"Bloch-Siegert resonance residual {res:.3e} exceeds tolerance")
    w2bs, wq = bloch_siegert_shifts(params.omega_r, params.omega_q, params.g)
    a, ad, n, sz, sp, sm = _ops(space)
    h = (w2bs / 2 + 2 * wq) * sz @ (n + n @ n) + params.g * (sp @ a @ a + sm @ ad @ ad)
    return _hermitian(space, h)


def h_dispersive(params: DispersiveParams, space: SpaceLabel | None = None) -> OperatorMatrix:
    """(ω_r+χ)a†a + (ω_q+χ)σ_z/2 + (χ/2)σ_z(a†a + (a†a)²); diagonal in the bare basis."""
    space = _space(space)
    p, chi = params.base, params.chi
    a, ad, n, sz, sp, sm = _ops(space)
    h = (p.omega_r + chi) * n + 0.5 * (p.omega_q + chi) * sz + 0.5 * chi * sz @ (n + n @ n)
    return _hermitian(space, h)


def dispersive_frame(params: DispersiveParams, space: SpaceLabel | None = None) -> OperatorMatrix:
    """H₀ = ω_r a†a + ω_q σ_z/2, used to evolve the dispersive model in a slow frame."""
    space = _space(space)
    a, ad, n, sz, sp, sm = _ops(space)
    return _hermitian(space, params.base.omega_r * n + 0.5 * params.base.omega_q * sz)


# ---------------------------------------------------------------- p-USC solver

def solve_pusc_coupling(r: float) -> float:
    """g/ω_r that puts the Bloch-Siegert model on resonance for ω_q = r·ω_r."""
    if not 0 < r < 2:
        raise ValueError(f"r = {r} outside (0, 2)")
    return math.sqrt(4 * r - r**3) / (2 * math.sqrt(1 + 2 * r))


def pusc_parity_factor(k: int) -> float:
    return k / (3 + (-1) ** (k + 1))


def pusc_condition_rhs(r: float) -> float:
    """Right-hand side of the k–r relation (a function of r alone, increasing on (0, 2))."""
    poly = 1152 - r * (-880 + r * (230 + 209 * r))
    return (1 + 2 * r) / (2 * (2 - r) * (8 + 5 * r)) * math.sqrt((2 - r) * poly / (1 + 2 * r) ** 2)


def _bisect(f, lo, hi, tol=1e-12, maxiter=200):
    flo, fhi = f(lo), f(hi)
    if flo == 0:
        return lo
    if fhi == 0:
        return hi
    if flo * fhi > 0:
        raise NoSolutionError("no sign change in bracket")
    for _ in range(maxiter):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm == 0 or hi - lo < tol:
            return mid
        if flo * fm < 0:
            hi, fhi = mid, fm
        else:
            lo, flo = mid, fm
    return 0.5 * (lo + hi)


def bloch_siegert_params(omega_r: float, r: float, k: int) -> BlochSiegertParams:
    g = solve_pusc_coupling(r) * omega_r
    base = SystemParams(omega_r, r * omega_r, g)
    w2bs, wq = bloch_siegert_shifts(base.omega_r, base.omega_q, g)
    B = kerr_coefficient(base.omega_r, base.omega_q, g)
    T = 2 * math.pi / math.sqrt(B**2 + 8 * g**2)
    return BlochSiegertParams(base, w2bs, wq, B, r, k, T, k * T)


def solve_pusc_k(k: int, omega_r: float = ghz(5.0), bracket=(0.01, 2 - 1e-9)) -> BlochSiegertParams:
    """Solve for the qubit/resonator ratio r at which k oscillations give an NS gate."""
    k = int(k)
    target = pusc_parity_factor(k)
    lo, hi = bracket
    if k < 4 or target <= pusc_condition_rhs(lo):
        raise NoSolutionError(f"k = {k} admits no r in (0, 2)")
    r = _bisect(lambda x: pusc_condition_rhs(x) - target, lo, hi)
    return bloch_siegert_params(omega_r, r, k)


# ---------------------------------------------------------------- dispersive solver

def solve_dispersive(n: int, delta_over_g_bar: float = 10.0, target_phase: float = math.pi, *,
                     omega_r: float = ghz(1.0), abs_delta: float | None = None,
                     m: int | None = None, nbar: int = NBAR) -> DispersiveParams:
    """Gate parameters for the dispersive NS (or C-phase) protocol.

    The gate time is fixed by ω_r t = 2nπ and χ by (ω_r − χ)t = φ + 2π(m − 1),
    which for φ = π and m = n gives χ = ω_r/(2n). The detuning is either
    given directly (``abs_delta``) or set from |δ| = K·g(n̄+1) with
    K = ``delta_over_g_bar``; g then follows from χ = 2g²/|δ|.
    """
    n = int(n)
    m = n if m is None else int(m)
    if n < 1 or m < 1:
        raise ValueError("n and m must be >= 1")
    if not 0 <= target_phase < 2 * math.pi:
        raise ValueError("target_phase must lie in [0, 2π)")
    t = 2 * n * math.pi / omega_r
    chi = omega_r - (target_phase + 2 * math.pi * (m - 1)) / t
    if not 0 < chi < omega_r:
        raise ValueError(f"phase {target_phase} with n={n}, m={m} gives chi/omega_r = {chi / omega_r:.3f}")
    if abs_delta is None:
        g = chi * delta_over_g_bar * (nbar + 1) / 2
        abs_delta = delta_over_g_bar * g * (nbar + 1)
    else:
        g = math.sqrt(chi * abs_delta / 2)
    if abs_delta < 10 * g * (nbar + 1):
        warnings.warn(
            f"|delta|/(g(nbar+1)) = {abs_delta / (g * (nbar + 1)):.2f} < 10: dispersive model marginal",
            ValidityWarning, stacklevel=2)
    base = SystemParams(omega_r, 2 * omega_r + abs_delta, g)
    return DispersiveParams(base, chi, n, m, float(target_phase), t, nbar)


def with_detuning(params: SystemParams, delta: float) -> SystemParams:
    return replace(params, omega_q=2 * params.omega_r + delta)
