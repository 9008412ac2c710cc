"""Closed and open system propagators.

Every solver uses a fixed-step fourth-order Runge-Kutta scheme. The step is
the smaller of ``2π/(50·ω_max)`` and the output spacing, then halved until
a step-doubling error estimate falls below ``step_tol``. Once chosen the
step never grows again, so repeated runs give bit-identical output.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np
from scipy import sparse

from .hilbert import (DensityMatrix, KetState, OperatorMatrix, SpaceLabel, hermiticity_error,
                      ladder_ops, qubit_op)
from .units import per_us


class IntegrationError(RuntimeError):
    pass


class DegeneracyWarning(UserWarning):
    pass


@dataclass(frozen=True)
class NoiseParams:
    """Decoherence rates in 1/ns: resonator loss, qubit decay, qubit dephasing."""
    kappa: float = 0.0
    gamma: float = 0.0
    gamma_phi: float = 0.0

    def __post_init__(self):
        if min(self.kappa, self.gamma, self.gamma_phi) < 0:
            raise ValueError("decoherence rates must be non-negative")

    @classmethod
    def per_us(cls, kappa=0.0, gamma=0.0, gamma_phi=0.0) -> "NoiseParams":
        return cls(per_us(kappa), per_us(gamma), per_us(gamma_phi))

    @property
    def is_zero(self) -> bool:
        return self.kappa == 0 and self.gamma == 0 and self.gamma_phi == 0

    def to_dict(self) -> dict:
        return {k: {"value": getattr(self, k) * 1e3, "unit": "per_us"}
                for k in ("kappa", "gamma", "gamma_phi")}


@dataclass(frozen=True)
class TimeGrid:
    t_start: float
    t_end: float
    steps: int = 1
    sample_stride: int = 1

    def __post_init__(self):
        if not self.t_end > self.t_start:
            raise ValueError("t_end must exceed t_start")
        if self.steps < 1 or self.sample_stride < 1:
            raise ValueError("steps and sample_stride must be >= 1")

    @property
    def spacing(self) -> float:
        return (self.t_end - self.t_start) / self.steps

    def points(self) -> np.ndarray:
        return np.linspace(self.t_start, self.t_end, self.steps + 1)

    def recorded(self) -> np.ndarray:
        idx = self.recorded_indices()
        return self.points()[idx]

    def recorded_indices(self) -> list[int]:
        idx = list(range(0, self.steps + 1, self.sample_stride))
        if idx[-1] != self.steps:
            idx.append(self.steps)
        return idx


@dataclass
class EvolutionTrace:
    times: np.ndarray
    states: list
    observables: dict[str, np.ndarray] = field(default_factory=dict)
    step: float = float("nan")

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if len(self.times) != len(self.states):
            raise ValueError("times and states differ in length")
        for name, series in self.observables.items():
            if len(series) != len(self.times):
                raise ValueError(f"observable {name!r} has wrong length")

    @property
    def final(self):
        return self.states[-1]

    def add_observables(self, series: dict[str, np.ndarray]) -> "EvolutionTrace":
        for name, s in series.items():
            s = np.asarray(s, dtype=float)
            if len(s) != len(self.times):
                raise ValueError(f"observable {name!r} has wrong length")
            self.observables[name] = s
        return self

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        names = list(self.observables)
        w.writerow(["time_ns", *names])
        for i, t in enumerate(self.times):
            w.writerow([repr(float(t)), *(repr(float(self.observables[n][i])) for n in names)])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        return text


Hamiltonian = Union[OperatorMatrix, np.ndarray, Callable[[float], Union[OperatorMatrix, np.ndarray]]]


def _as_matrix(h) -> np.ndarray:
    return h.matrix if isinstance(h, OperatorMatrix) else np.asarray(h, dtype=complex)


def _hamiltonian_fn(H):
    if callable(H) and not isinstance(H, (OperatorMatrix, np.ndarray)):
        return (lambda t: _as_matrix(H(t))), True
    m = _as_matrix(H)
    return (lambda t: m), False


def _check_hermitian(h: np.ndarray, t: float):
    err = hermiticity_error(h)
    if err > 1e-10 * max(1.0, np.abs(h).max()):
        raise ValueError(f"Hamiltonian is not Hermitian at t = {t:g} (||H - H^dag|| = {err:.3e})")


def _spectral_radius(m: np.ndarray) -> float:
    return float(np.linalg.norm(m, 2)) if m.size else 0.0


def _rk4(f, t, y, dt):
    k1 = f(t, y)
    k2 = f(t + 0.5 * dt, y + 0.5 * dt * k1)
    k3 = f(t + 0.5 * dt, y + 0.5 * dt * k2)
    k4 = f(t + dt, y + dt * k3)
    return y + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def _halved_step(f, t, y, dt, tol, min_dt):
    """Halve ``dt`` until one step agrees with two half steps to ``tol``."""
    while dt > min_dt:
        full = _rk4(f, t, y, dt)
        half = _rk4(f, t + 0.5 * dt, _rk4(f, t, y, 0.5 * dt), 0.5 * dt)
        err = np.max(np.abs(full - half)) * 16.0 / 15.0
        if err <= tol:
            return dt
        dt *= 0.5
    return dt


def integrate(f, y0: np.ndarray, grid: TimeGrid, omega_max: float, *, step_tol: float = 1e-11,
              time_dependent: bool = False, max_step: float | None = None, check=None):
    """Fixed-step RK4 of ``dy/dt = f(t, y)`` returning states at the recorded grid points.

    ``check(t, y)`` is called at every recorded point and may raise.
    Returns ``(times, states, dt)``.
    """
    points = grid.points()
    spacing = grid.spacing
    dt = spacing if omega_max <= 0 else min(2 * math.pi / (50 * omega_max), spacing)
    if max_step is not None:
        dt = min(dt, max_step)
    min_dt = spacing * 1e-7
    y = np.array(y0, dtype=complex)
    dt = _halved_step(f, points[0], y, dt, step_tol, min_dt)
    recorded = set(grid.recorded_indices())
    times, states = [], []
    if 0 in recorded:
        if check:
            check(points[0], y)
        times.append(points[0])
        states.append(y.copy())
    for i in range(grid.steps):
        t0, t1 = points[i], points[i + 1]
        if time_dependent and i > 0:
            dt = _halved_step(f, t0, y, dt, step_tol, min_dt)
        nsub = max(1, math.ceil((t1 - t0) / dt - 1e-9))
        h = (t1 - t0) / nsub
        t = t0
        for _ in range(nsub):
            y = _rk4(f, t, y, h)
            t += h
        if i + 1 in recorded:
            if check:
                check(t1, y)
            times.append(t1)
            states.append(y.copy())
    return np.array(times), states, dt


# ---------------------------------------------------------------- Schrödinger

def propagate_state(H: Hamiltonian, psi0: KetState, grid: TimeGrid, *, step_tol: float = 1e-11,
                    norm_tol: float = 1e-8) -> EvolutionTrace:
    """Integrate i dψ/dt = H(t) ψ.

    ``H`` is an operator/matrix or a callable ``t -> operator``. Hermiticity is
    checked at every grid point and the norm is checked at every record.
    """
    hf, td = _hamiltonian_fn(H)
    samples = grid.points() if td else grid.points()[:1]
    omega_max = 0.0
    for t in samples:
        h = hf(t)
        _check_hermitian(h, t)
        omega_max = max(omega_max, _spectral_radius(h))
    n0 = psi0.norm

    def rhs(t, y):
        return -1j * (hf(t) @ y)

    def check(t, y):
        drift = abs(np.linalg.norm(y) - n0)
        if drift > norm_tol:
            raise IntegrationError(f"norm drift {drift:.2e} at t = {t:g}")

    times, ys, dt = integrate(rhs, psi0.amplitudes, grid, omega_max, step_tol=step_tol,
                              time_dependent=td, check=check)
    return EvolutionTrace(times, [KetState(psi0.space, y) for y in ys], step=dt)


# ---------------------------------------------------------------- Lindblad

def standard_collapse_ops(space: SpaceLabel, noise: NoiseParams) -> list[np.ndarray]:
    """√κ a_i for each mode, √γ σ₋ and √(γ_φ/2) σ_z for each qubit (zero rates dropped)."""
    ops = []
    if noise.kappa > 0:
        for i in range(space.n_modes):
            ops.append(math.sqrt(noise.kappa) * ladder_ops(space, i)[0].matrix)
    for q in range(space.qubit_count):
        if noise.gamma > 0:
            ops.append(math.sqrt(noise.gamma) * qubit_op(space, q, "minus").matrix)
        if noise.gamma_phi > 0:
            ops.append(math.sqrt(noise.gamma_phi / 2) * qubit_op(space, q, "z").matrix)
    return ops


def _density_check(space, trace_tol=1e-8):
    def check(t, y):
        bad = DensityMatrix(space, 0.5 * (y + y.conj().T))
        bad = [v for v in bad.violations() if v != "trace"]
        herm = hermiticity_error(y)
        tr = abs(np.trace(y) - 1.0)
        if tr > trace_tol:
            bad.append(f"trace (drift {tr:.2e})")
        if herm > DensityMatrix.HERMITIAN_TOL:
            bad.append(f"hermitian ({herm:.2e})")
        if bad:
            raise IntegrationError(f"density matrix invariants {bad} violated at t = {t:g}")
    return check


def lindblad_evolve_ops(H: Hamiltonian, collapse_ops: Sequence[np.ndarray], rho0: DensityMatrix,
                        grid: TimeGrid, *, step_tol: float = 1e-11,
                        check_invariants: bool = True) -> EvolutionTrace:
    """dρ/dt = −i[H, ρ] + Σ (C ρ C† − ½{C†C, ρ}) for pre-scaled collapse operators C."""
    hf, td = _hamiltonian_fn(H)
    samples = grid.points() if td else grid.points()[:1]
    omega_max = 0.0
    for t in samples:
        h = hf(t)
        _check_hermitian(h, t)
        omega_max = max(omega_max, _spectral_radius(h))
    d = rho0.space.dim
    jump = None
    damp = np.zeros((d, d), dtype=complex)
    if collapse_ops:
        # Σ C ρ C† as one sparse map on the row-major flattened ρ
        jump = sparse.csr_matrix((d * d, d * d), dtype=complex)
        for c in collapse_ops:
            c = np.asarray(c, dtype=complex)
            damp += 0.5 * c.conj().T @ c
            cs = sparse.csr_matrix(c)
            jump = jump + sparse.kron(cs, cs.conj(), format="csr")
        omega_max = max(omega_max, _spectral_radius(damp))

    def rhs(t, rho):
        heff = hf(t) - 1j * damp
        out = -1j * (heff @ rho - rho @ heff.conj().T)
        if jump is not None:
            out += (jump @ rho.ravel()).reshape(d, d)
        return out

    check = _density_check(rho0.space) if check_invariants else None
    times, ys, dt = integrate(rhs, rho0.matrix, grid, omega_max, step_tol=step_tol,
                              time_dependent=td, check=check)
    return EvolutionTrace(times, [DensityMatrix(rho0.space, y) for y in ys], step=dt)


def lindblad_evolve(H: Hamiltonian, noise: NoiseParams, rho0: DensityMatrix, grid: TimeGrid,
                    **kw) -> EvolutionTrace:
    """Standard master equation with κD[a] + γD[σ₋] + (γ_φ/2)D[σ_z] on every mode/qubit."""
    return lindblad_evolve_ops(H, standard_collapse_ops(rho0.space, noise), rho0, grid, **kw)


# ---------------------------------------------------------------- dressed states

def dressed_basis(H_full: np.ndarray, degeneracy_tol: float = 1e-12):
    """Eigen-decomposition ordered by energy, ties broken by bare-basis position.

    Eigenvector phases are fixed so the largest component is real positive.
    """
    H_full = _as_matrix(H_full)
    E, V = np.linalg.eigh(H_full)
    lead = np.argmax(np.abs(V) ** 2, axis=0)
    order = sorted(range(len(E)), key=lambda i: (E[i], lead[i]))
    # group near-degenerate levels and re-sort them by bare index
    groups, cur = [], [order[0]]
    for i in order[1:]:
        if abs(E[i] - E[cur[-1]]) <= degeneracy_tol * max(1.0, abs(E[i])):
            cur.append(i)
        else:
            groups.append(cur)
            cur = [i]
    groups.append(cur)
    if any(len(g) > 1 for g in groups):
        warnings.warn("degenerate dressed levels: ordering fixed by bare-basis overlap",
                      DegeneracyWarning, stacklevel=2)
    order = [i for g in groups for i in sorted(g, key=lambda i: lead[i])]
    E, V = E[order], V[:, order]
    lead = np.argmax(np.abs(V), axis=0)
    phases = V[lead, np.arange(V.shape[1])]
    V = V * (np.abs(phases) / phases)[None, :]
    return E, V


def dressed_rates(H_full, coupling_op, omega_ref: float, rate: float,
                  degeneracy_tol: float = 1e-12) -> np.ndarray:
    """Γ^{jk} = rate·(Δ_kj/ω_ref)|⟨k|X|j⟩|² for k > j (upper triangle, zero elsewhere)."""
    E, V = dressed_basis(H_full, degeneracy_tol)
    X = V.conj().T @ _as_matrix(coupling_op) @ V
    d = len(E)
    G = np.zeros((d, d))
    for j in range(d):
        for k in range(j + 1, d):
            gap = E[k] - E[j]
            if gap > 0:
                G[j, k] = rate * gap / omega_ref * abs(X[k, j]) ** 2
    return G


def dressed_collapse_ops(H_full, space: SpaceLabel, kappa: float, gamma: float,
                         omega_r: float, omega_q: float, *, rate_floor: float = 0.0) -> list[np.ndarray]:
    """√(Γ_κ^{jk} + Γ_γ^{jk}) |j⟩⟨k| for one mode coupled to one qubit."""
    a = ladder_ops(space, 0)[0].matrix
    sx = qubit_op(space, 0, "x").matrix
    G = np.zeros((space.dim, space.dim))
    if kappa > 0:
        G += dressed_rates(H_full, a + a.conj().T, omega_r, kappa)
    if gamma > 0:
        G += dressed_rates(H_full, sx, omega_q, gamma)
    E, V = dressed_basis(H_full)
    ops = []
    for j, k in zip(*np.nonzero(G > rate_floor)):
        ops.append(math.sqrt(G[j, k]) * np.outer(V[:, j], V[:, k].conj()))
    return ops


def dressed_lindblad_evolve(H_full, kappa: float, gamma: float, rho0: DensityMatrix, grid: TimeGrid, *,
                            omega_r: float, omega_q: float, hamiltonian: Hamiltonian | None = None,
                            gamma_phi: float = 0.0, dephasing: bool = False, **kw) -> EvolutionTrace:
    """Dressed-state master equation with jumps between eigenstates of ``H_full``.

    The coherent part uses ``hamiltonian`` (for example the interaction-frame
    Hamiltonian) and defaults to ``H_full``. A bare σ_z dephasing channel at
    rate γ_φ/2 is added only when ``dephasing`` is set.
    """
    space = rho0.space
    ops = dressed_collapse_ops(H_full, space, kappa, gamma, omega_r, omega_q)
    if dephasing and gamma_phi > 0:
        ops.append(math.sqrt(gamma_phi / 2) * qubit_op(space, 0, "z").matrix)
    H = H_full if hamiltonian is None else hamiltonian
    return lindblad_evolve_ops(H, ops, rho0, grid, **kw)


# ---------------------------------------------------------------- observables

def observable_series(trace: EvolutionTrace, projectors: dict) -> dict[str, np.ndarray]:
    """⟨P⟩ at every recorded time for each named projector (or observable)."""
    out = {}
    for name, P in projectors.items():
        P = _as_matrix(P)
        vals = []
        for s in trace.states:
            if isinstance(s, KetState):
                if P.shape[0] != s.space.dim:
                    raise ValueError(f"projector {name!r} does not match state dimension")
                vals.append(np.vdot(s.amplitudes, P @ s.amplitudes).real)
            else:
                if P.shape[0] != s.space.dim:
                    raise ValueError(f"projector {name!r} does not match state dimension")
                vals.append(np.trace(P @ s.matrix).real)
        out[name] = np.array(vals)
    return out


def projector(space: SpaceLabel, label) -> np.ndarray:
    i = space.index(label)
    P = np.zeros((space.dim, space.dim), dtype=complex)
    P[i, i] = 1.0
    return P
