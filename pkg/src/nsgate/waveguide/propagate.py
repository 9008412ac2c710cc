"""Catch/interact/release propagation in the ≤2-excitation sector."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .. import _backend
from ..dynamics import EvolutionTrace, IntegrationError
from .bath import BathDiscretization, BathState, free_phases
from .schedule import CouplerSchedule

SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class StepControl:
    """RK4 step rule: h ≤ min(2π/(points_per_cycle·ω_max), max_step), then halved
    until one step and two half steps agree to ``step_tol``."""
    points_per_cycle: int = 50
    max_step: float = 0.5
    step_tol: float = 1e-11
    min_step: float = 1e-6


def _omega_bound(bath: BathDiscretization, gw: float, gq: float) -> float:
    # crude spectral-radius bound of the ≤2-excitation generator
    return (2 * np.max(np.abs(bath.detunings)) + 2 * gw * math.sqrt(2 * bath.N)
            + SQRT2 * gq + 1e-12)


class _Stepper:
    def __init__(self, bath, schedule, damp=None, control=StepControl(), kernel=None):
        self.bath = bath
        self.schedule = schedule
        self.scale = bath.coupling_scale()
        self.D = np.ascontiguousarray(bath.detunings, dtype=float)
        self.damp = np.zeros(7) if damp is None else np.asarray(damp, dtype=float)
        self.control = control
        self.kernel = kernel or _backend.rk4_bath
        self.max_h = 0.0

    def samples(self, t0, h, n):
        ts = t0 + 0.5 * h * np.arange(2 * n + 1)
        # left limit at the end: a segment switching on at t1 must not leak into this step
        ts[-1] = np.nextafter(ts[-1], t0)
        gw = np.ascontiguousarray(self.schedule.g_wr(ts) * self.scale)
        gq = np.ascontiguousarray(self.schedule.g_rq(ts))
        return gw, gq

    def _run(self, y, t0, h, n, stop=0.0):
        gw, gq = self.samples(t0, h, n)
        return self.kernel(y, self.D, gw, gq, h, n, self.damp, stop)

    def _error(self, y, t0, h):
        full = y.copy()
        self._run(full, t0, h, 1)
        half = y.copy()
        self._run(half, t0, 0.5 * h, 2)
        return float(np.linalg.norm(full - half)) * 16 / 15

    def choose_step(self, y, t0, t1):
        """Step for [t0, t1]: probe the error with the couplings at the start and
        the middle of the interval, halving until both pass."""
        c = self.control
        gw, gq = self.schedule.max_couplings(t0, t1)
        h = min(2 * math.pi / (c.points_per_cycle * _omega_bound(self.bath, gw * self.scale, gq)),
                c.max_step, t1 - t0)
        if c.step_tol > 0:
            mid = 0.5 * (t0 + t1)
            while max(self._error(y, t0, h), self._error(y, min(mid, t1 - h), h)) > c.step_tol:
                h *= 0.5
                if h < c.min_step:
                    raise IntegrationError(
                        f"step size fell below {c.min_step:g} ns on [{t0:g}, {t1:g}]")
        n = max(1, math.ceil((t1 - t0) / h - 1e-9))
        return (t1 - t0) / n, n

    def advance(self, y, t0, t1, stop=0.0):
        """Integrate y in place from t0 to t1; returns the time reached (< t1 on early stop)."""
        h, n = self.choose_step(y, t0, t1)
        self.max_h = max(self.max_h, h)
        done = self._run(y, t0, h, n, stop)
        return t1 if done == n else t0 + done * h


def _stops(schedule: CouplerSchedule, record_dt: float, t_end=None) -> tuple[list, list]:
    """Integration stops (breakpoints ∪ record times) and the subset to record.

    Breakpoints are kept exactly; record times closer than 1e-9 ns to one snap onto it.
    """
    t_end = schedule.t_end if t_end is None else t_end
    bps = [b for b in schedule.breakpoints() if b < t_end - 1e-9] + [t_end]
    rec = list(np.arange(0.0, t_end - 1e-9, record_dt)) + [t_end]
    snapped = []
    for r in rec:
        near = [b for b in bps if abs(b - r) < 1e-9]
        snapped.append(near[0] if near else float(r))
    stops = sorted(set(bps) | set(snapped))
    return stops, sorted(set(snapped) | set(bps))


def projections(state: BathState, input_state: BathState, schedule: CouplerSchedule) -> dict:
    """⟨1̃|ψ⟩, ⟨2̃|ψ⟩ (normalised tilde packets, resonator empty), ⟨0,1_r|ψ⟩, ⟨0,2_r|ψ⟩."""
    tau = state.t if state.t < schedule.t_out else state.t - schedule.t_out
    p1, p2 = free_phases(state.bath, tau)
    f = input_state.b / (np.linalg.norm(input_state.b) or 1.0)
    S0 = input_state.S
    n2 = math.sqrt(0.5 * np.vdot(S0, S0).real) or 1.0
    ref1 = p1 * f
    ref2 = p2 * S0 / n2
    return {
        "tilde1": complex(np.vdot(ref1, state.b)),
        "tilde2": complex(0.5 * np.vdot(ref2, state.S)),
        "res1": complex(state.a1),
        "res2": complex(state.A),
    }


def propagate_catch_release(state0: BathState, schedule: CouplerSchedule, *, record_dt: float = 1.0,
                            t_end: float | None = None, control: StepControl = StepControl(),
                            norm_tol: float = 1e-8, kernel=None) -> EvolutionTrace:
    """Closed evolution of ``state0`` under the schedule.

    Records the state every ``record_dt`` ns (and at every schedule breakpoint)
    with the four projections of the waveform panels as complex observables.
    Raises ``IntegrationError`` if the norm drifts by more than ``norm_tol``.
    """
    bath = state0.bath
    stepper = _Stepper(bath, schedule, control=control, kernel=kernel)
    stops, rec = _stops(schedule, record_dt, t_end)
    y = np.ascontiguousarray(state0.pack())
    n0 = state0.norm
    times, states = [], []
    obs = {k: [] for k in ("tilde1", "tilde2", "res1", "res2")}

    def record(t):
        s = BathState.unpack(bath, y, t)
        drift = abs(s.norm - n0)
        if drift > norm_tol:
            raise IntegrationError(f"norm drift {drift:.2e} at t = {t:g} ns")
        times.append(t)
        states.append(s)
        for k, v in projections(s, state0, schedule).items():
            obs[k].append(v)

    rec = set(rec)
    record(stops[0])
    for t0, t1 in zip(stops[:-1], stops[1:]):
        stepper.advance(y, t0, t1)
        if t1 in rec:
            record(t1)
    trace = EvolutionTrace(np.array(times), states, step=stepper.max_h)
    for k, v in obs.items():
        v = np.array(v)
        trace.observables[f"Re_{k}"] = v.real
        trace.observables[f"Im_{k}"] = v.imag
    return trace


def final_state(state0: BathState, schedule: CouplerSchedule, *, control=StepControl(),
                kernel=None, t_end=None) -> BathState:
    """Closed evolution without recording; stops only at schedule breakpoints."""
    stepper = _Stepper(state0.bath, schedule, control=control, kernel=kernel)
    t_end = schedule.t_end if t_end is None else t_end
    stops = [b for b in schedule.breakpoints() if b < t_end] + [t_end]
    y = np.ascontiguousarray(state0.pack())
    for t0, t1 in zip(stops[:-1], stops[1:]):
        stepper.advance(y, t0, t1)
    return BathState.unpack(state0.bath, y, t_end)


# ---------------------------------------------------------------- trajectories

def damping_rates(kappa: float, gamma: float, gamma_phi: float) -> np.ndarray:
    """Amplitude decay rates from −(i/2)ΣL†L for L = √κ a, √γ σ₋, √(γ_φ/2) σ_z."""
    d = 0.25 * gamma_phi
    return np.array([d, 0.5 * kappa + d, d, kappa + d, 0.5 * kappa + d, d, 0.5 * gamma + d])


def _jump(y: np.ndarray, N: int, kind: str) -> np.ndarray:
    out = np.zeros_like(y)
    if kind == "kappa":
        out[0] = y[1]
        out[1] = SQRT2 * y[2 + N]
        out[2:2 + N] = y[3 + N:3 + 2 * N]
    elif kind == "gamma":
        out[0] = y[-1]
    elif kind == "dephasing":
        out[:] = -y
        out[-1] = y[-1]
    else:
        raise ValueError(kind)
    return out


def _jump_weights(y, N, kappa, gamma, gamma_phi):
    n_r = abs(y[1]) ** 2 + 2 * abs(y[2 + N]) ** 2 + np.vdot(y[3 + N:3 + 2 * N], y[3 + N:3 + 2 * N]).real
    return np.array([kappa * n_r, gamma * abs(y[-1]) ** 2, 0.5 * gamma_phi * _backend.norm2(y, N)])


def trajectory(state0: BathState, schedule: CouplerSchedule, kappa: float, gamma: float,
               gamma_phi: float, rng: np.random.Generator, *, control=StepControl(),
               kernel=None) -> tuple[BathState, int]:
    """One quantum-jump trajectory; returns the normalised final state and jump count."""
    bath = state0.bath
    N = bath.N
    stepper = _Stepper(bath, schedule, damping_rates(kappa, gamma, gamma_phi), control, kernel)
    stops = schedule.breakpoints()
    y = np.ascontiguousarray(state0.pack())
    y /= math.sqrt(_backend.norm2(y, N))
    threshold = rng.random()
    jumps = 0
    kinds = ("kappa", "gamma", "dephasing")
    for t0, t1 in zip(stops[:-1], stops[1:]):
        t = t0
        while t < t1 - 1e-12:
            t = stepper.advance(y, t, t1, stop=threshold)
            if _backend.norm2(y, N) < threshold:
                w = _jump_weights(y, N, kappa, gamma, gamma_phi)
                k = rng.choice(3, p=w / w.sum())
                y = np.ascontiguousarray(_jump(y, N, kinds[k]))
                y /= math.sqrt(_backend.norm2(y, N))
                jumps += 1
                threshold = rng.random()
    y /= math.sqrt(_backend.norm2(y, N))
    return BathState.unpack(bath, y, schedule.t_end), jumps


# ---------------------------------------------------------------- density matrices

class MemoryBudgetError(MemoryError):
    pass


class SectorBasis:
    """Orthonormal coordinates of the ≤2-excitation sector.

    Order: Z, a1, b (N), A, B (N), C_{m≤n} (N(N+1)/2, row-major upper triangle), E.
    Off-diagonal C coordinates equal S_mn; diagonal ones equal S_mm/√2.
    """

    def __init__(self, bath: BathDiscretization):
        self.bath = bath
        N = bath.N
        self.N = N
        self.iu = np.triu_indices(N)
        self.n_pairs = len(self.iu[0])
        self.dim = 4 + 2 * N + self.n_pairs
        self.diag_mask = self.iu[0] == self.iu[1]

    @staticmethod
    def dimension(N: int) -> int:
        return 4 + 2 * N + N * (N + 1) // 2

    def from_packed(self, y: np.ndarray) -> np.ndarray:
        N = self.N
        S = y[3 + 2 * N:3 + 2 * N + N * N].reshape(N, N)
        c = S[self.iu].copy()
        c[self.diag_mask] /= SQRT2
        return np.concatenate([y[:3 + 2 * N], c, y[-1:]])

    def to_packed(self, x: np.ndarray) -> np.ndarray:
        N = self.N
        c = x[3 + 2 * N:3 + 2 * N + self.n_pairs].copy()
        c[self.diag_mask] *= SQRT2
        S = np.zeros((N, N), complex)
        S[self.iu] = c
        S = S + np.triu(S, 1).T
        return np.concatenate([x[:3 + 2 * N], S.ravel(), x[-1:]])

    def generators(self):
        """Sparse (H_Δ, H_wr, H_rq) with H = H_Δ + g_wr·H_wr + g_rq·H_rq."""
        from scipy import sparse
        from .._bathkernel_py import _rhs
        D = self.bath.detunings
        DD = D[:, None] + D[None, :]
        zero = np.zeros(7)
        cols = {k: [] for k in ("d", "wr", "rq")}
        for j in range(self.dim):
            e = np.zeros(self.dim, complex)
            e[j] = 1
            y = self.to_packed(e)
            base = 1j * _rhs(y, D, DD, 0.0, 0.0, zero, self.N)
            cols["d"].append(self.from_packed(base))
            cols["wr"].append(self.from_packed(1j * _rhs(y, D, DD, 1.0, 0.0, zero, self.N)) - cols["d"][-1])
            cols["rq"].append(self.from_packed(1j * _rhs(y, D, DD, 0.0, 1.0, zero, self.N)) - cols["d"][-1])
        mats = []
        for k in ("d", "wr", "rq"):
            M = np.array(cols[k]).T
            M[np.abs(M) < 1e-14] = 0
            if np.abs(M - M.conj().T).max() > 1e-12:
                raise IntegrationError("sector generator is not Hermitian")
            mats.append(sparse.csr_matrix(M))
        return tuple(mats)

    def collapse(self, kappa: float, gamma: float, gamma_phi: float):
        from scipy import sparse
        N, d = self.N, self.dim
        ops = []
        iA, iB = 2 + N, 3 + N
        if kappa > 0:
            rows = [0, 1] + list(range(2, 2 + N))
            cols = [1, iA] + list(range(iB, iB + N))
            vals = [1.0, SQRT2] + [1.0] * N
            ops.append(math.sqrt(kappa) * sparse.csr_matrix((vals, (rows, cols)), shape=(d, d)))
        if gamma > 0:
            ops.append(math.sqrt(gamma) * sparse.csr_matrix(([1.0], ([0], [d - 1])), shape=(d, d)))
        if gamma_phi > 0:
            z = -np.ones(d)
            z[-1] = 1
            ops.append(math.sqrt(gamma_phi / 2) * sparse.diags(z, format="csr"))
        return ops


def density_evolve(state0: BathState, schedule: CouplerSchedule, kappa: float, gamma: float,
                   gamma_phi: float, *, memory_budget: float = 2e9,
                   control: StepControl = StepControl(step_tol=0.0)) -> np.ndarray:
    """Lindblad evolution of |ψ0⟩⟨ψ0| in the sector basis; returns the final density matrix."""
    basis = SectorBasis(state0.bath)
    d = basis.dim
    need = 16.0 * d * d * 8
    if need > memory_budget:
        raise MemoryBudgetError(
            f"density matrix of dimension {d} needs ~{need / 1e9:.1f} GB "
            f"(budget {memory_budget / 1e9:.1f} GB); reduce the number of bath modes N")
    Hd, Hwr, Hrq = basis.generators()
    ops = basis.collapse(kappa, gamma, gamma_phi)
    damp = sum((L.conj().T @ L for L in ops), start=0 * Hd) * 0.5
    scale = state0.bath.coupling_scale()
    x = basis.from_packed(state0.pack())
    rho = np.outer(x, x.conj())

    def rhs(gw, gq, r):
        Heff = (Hd + (gw * scale) * Hwr + gq * Hrq - 1j * damp).tocsr()
        hr = Heff @ r
        out = -1j * (hr - hr.conj().T)  # ρ Heff† = (Heff ρ)† for Hermitian ρ
        for L in ops:
            out += L @ (L @ r).conj().T  # L ρ L† with ρ L† = (L ρ)†
        return out

    c = control
    stops = schedule.breakpoints()
    for t0, t1 in zip(stops[:-1], stops[1:]):
        gw, gq = schedule.max_couplings(t0, t1)
        h = min(2 * math.pi / (c.points_per_cycle * _omega_bound(state0.bath, gw * scale, gq)),
                c.max_step, t1 - t0)
        n = max(1, math.ceil((t1 - t0) / h - 1e-9))
        h = (t1 - t0) / n
        ts = t0 + 0.5 * h * np.arange(2 * n + 1)
        ts[-1] = np.nextafter(ts[-1], t0)
        gws, gqs = schedule.g_wr(ts), schedule.g_rq(ts)
        for i in range(n):
            k1 = rhs(gws[2 * i], gqs[2 * i], rho)
            k2 = rhs(gws[2 * i + 1], gqs[2 * i + 1], rho + 0.5 * h * k1)
            k3 = rhs(gws[2 * i + 1], gqs[2 * i + 1], rho + 0.5 * h * k2)
            k4 = rhs(gws[2 * i + 2], gqs[2 * i + 2], rho + h * k3)
            rho = rho + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
    return rho
