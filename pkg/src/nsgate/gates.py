"""Nonlinear-sign protocols, the beam splitter and the two-rail C-Z gate."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from math import factorial

import numpy as np

from . import models
from .dynamics import (EvolutionTrace, NoiseParams, TimeGrid, dressed_collapse_ops,
                       lindblad_evolve, lindblad_evolve_ops, observable_series,
                       standard_collapse_ops)
from .hilbert import (DensityMatrix, KetState, SpaceLabel, build_space, embed_operator, fidelity,
                      partial_trace, qubit_op)
from .models import BlochSiegertParams, DispersiveParams, SystemParams

RAIL = build_space([2], 1)
PHOTONIC = build_space([2, 2], 0)
TWO_RAIL = build_space([2, 2], 2)
LOGICAL = ((0, 0), (0, 1), (1, 0), (1, 1))
DEFAULT_THETA = math.pi / 4 + 0.01


@dataclass
class GateReport:
    protocol: str
    params: dict
    gate_time: float
    fidelity: float
    trace: EvolutionTrace | None = field(default=None, repr=False)
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 <= self.fidelity <= 1.0:
            raise ValueError(f"fidelity {self.fidelity} outside [0, 1]")

    def to_dict(self, trace_file: str | None = None) -> dict:
        return {
            "protocol": self.protocol,
            "params": self.params,
            "gate_time_ns": self.gate_time,
            "fidelity": self.fidelity,
            "trace_file": trace_file,
            **({"extras": self.extras} if self.extras else {}),
        }

    def to_json(self, trace_file: str | None = None) -> str:
        return json.dumps(self.to_dict(trace_file), sort_keys=True, default=_jsonable)


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, complex):
        return [x.real, x.imag]
    raise TypeError(f"{type(x).__name__} is not JSON serialisable")


# ---------------------------------------------------------------- ideal NS

def ns_apply_ideal(state: KetState, phase: float = math.pi) -> KetState:
    """Multiply the two-photon amplitude of every mode by e^{-iφ} (φ = π is the NS gate)."""
    space = state.space
    if not space.n_modes or min(space.mode_cutoffs) < 2:
        raise ValueError("NS gate needs modes with cutoff >= 2")
    return KetState(space, ns_ideal_operator(space, phase) @ state.amplitudes)


def ns_ideal_operator(space: SpaceLabel, phase: float = math.pi) -> np.ndarray:
    """Diagonal operator applying the ideal NS (or C-phase) to every mode of ``space``."""
    diag = np.ones(space.dim, dtype=complex)
    for i, lab in enumerate(space.labels):
        for n in lab[: space.n_modes]:
            if n == 2:
                diag[i] *= np.exp(-1j * phase)
    return np.diag(diag)


# ---------------------------------------------------------------- beam splitter

def lift_two_mode(u: np.ndarray, n_photons: int) -> np.ndarray:
    """Second-quantised lift of a 2×2 mode transformation to the N-photon sector.

    ``u[j, i]`` is the amplitude of c_j† in the image of c_i†. The sector basis
    is |0,N⟩, |1,N−1⟩, ..., |N,0⟩ (ascending photons in the first mode).
    """
    N = n_photons
    out = np.zeros((N + 1, N + 1), dtype=complex)
    for n1 in range(N + 1):
        n2 = N - n1
        # coefficient arrays indexed by the power of c_1†
        poly = np.array([1.0 + 0j])
        for _ in range(n1):
            poly = np.convolve(poly, [u[1, 0], u[0, 0]])
        for _ in range(n2):
            poly = np.convolve(poly, [u[1, 1], u[0, 1]])
        norm_in = math.sqrt(factorial(n1) * factorial(n2))
        for p in range(N + 1):
            out[p, n1] = poly[p] * math.sqrt(factorial(p) * factorial(N - p)) / norm_in
    return out


@dataclass(frozen=True)
class BeamSplitter:
    theta: float
    block_1photon: np.ndarray = field(repr=False)
    lifted_2photon: np.ndarray = field(repr=False)

    @property
    def mode_matrix(self) -> np.ndarray:
        s, c = math.sin(self.theta), math.cos(self.theta)
        return np.array([[s, c], [c, -s]])

    def operator(self, space: SpaceLabel = PHOTONIC) -> np.ndarray:
        """Unitary on two modes (cutoff 2 each).

        Sectors with more than two photons are not closed under the lift at this
        truncation; they are left untouched and are never populated by a gate.
        """
        if space.n_modes != 2 or space.qubit_count != 0 or space.mode_cutoffs != (2, 2):
            raise ValueError("beam splitter operator is defined on two modes with cutoff 2")
        U = np.eye(space.dim, dtype=complex)
        for N, block in ((1, self.block_1photon), (2, self.lifted_2photon)):
            idx = [space.index((p, N - p)) for p in range(N + 1)]
            # block bases: N=1 listed as |01>,|10>; N=2 as |02>,|11>,|20>
            U[np.ix_(idx, idx)] = block
        return U

    def apply(self, state: KetState) -> KetState:
        return KetState(state.space, self.operator(state.space) @ state.amplitudes)


def beam_splitter_unitary(theta: float) -> BeamSplitter:
    """Beam splitter with single-photon block [[−sinθ, cosθ], [cosθ, sinθ]] on (|01⟩, |10⟩)."""
    s, c = math.sin(theta), math.cos(theta)
    u = np.array([[s, c], [c, -s]])
    b1 = lift_two_mode(u, 1).real
    b2 = lift_two_mode(u, 2).real
    return BeamSplitter(float(theta), b1, b2)


def printed_two_photon_block(theta: float) -> np.ndarray:
    """The 3×3 two-photon block exactly as tabulated in the source (not unitary in general)."""
    s, c = math.sin(theta), math.cos(theta)
    r = math.sqrt(2) * s * c
    return np.array([[s * s, -r, c * c], [-r, c * c - s * s, -r], [c * c, -r, s * s]])


# ---------------------------------------------------------------- helpers

def _photonic_input(psi0, space_modes: int = 1) -> KetState:
    if psi0 is None:
        amp = np.zeros(3, dtype=complex)
        amp[:] = 1 / math.sqrt(3)
        return KetState(build_space([2], 0), amp)
    return psi0


def _rail_input(psi0) -> tuple[KetState, KetState]:
    """Return (photonic state, joint mode⊗qubit state) with the qubit in |g⟩."""
    psi0 = _photonic_input(psi0)
    if psi0.space == RAIL:
        amp = psi0.amplitudes.reshape(3, 2)
        if np.linalg.norm(amp[:, 1]) > 1e-12:
            raise ValueError("qubit must start in |g>")
        photonic = KetState(build_space([2], 0), amp[:, 0])
        return photonic, psi0
    if psi0.space != build_space([2], 0):
        raise ValueError("NS protocols take a single-mode photonic state with cutoff 2")
    joint = np.kron(psi0.amplitudes, [1.0, 0.0])
    return psi0, KetState(RAIL, joint)


def _target(photonic: KetState, phase=math.pi) -> KetState:
    ideal = ns_apply_ideal(photonic, phase)
    return KetState(RAIL, np.kron(ideal.amplitudes, [1.0, 0.0]))


def _grid(t_end, steps=None):
    if steps is None:
        steps = 50
    return TimeGrid(0.0, t_end, steps)


def _with_fidelity(trace: EvolutionTrace, target: KetState) -> EvolutionTrace:
    P = np.outer(target.amplitudes, target.amplitudes.conj())
    series = observable_series(trace, {"fidelity": P})
    return trace.add_observables(series)


def _populations(trace, space, labels):
    from .dynamics import projector
    return observable_series(trace, {f"P{space.label_str(space.index(l))}": projector(space, l)
                                     for l in labels})


# ---------------------------------------------------------------- SC regime

def sc_gate_time(params: SystemParams) -> float:
    """π/(√2 g): one full population cycle of |2,g⟩ ↔ |0,e⟩."""
    return math.pi / (math.sqrt(2) * params.g)


def sc_hamiltonian(params: SystemParams, space: SpaceLabel = RAIL):
    if params.delta == 0:
        return models.h_2jc_interaction(params, 0.0, space)
    return lambda t: models.h_2jc_interaction(params, t, space)


def ns_protocol_sc(params: SystemParams, noise: NoiseParams, psi0: KetState | None = None, *,
                   gate_time: float | None = None, steps: int = 50) -> GateReport:
    """NS gate from resonant two-photon JC dynamics under the standard master equation."""
    photonic, joint = _rail_input(psi0)
    T = sc_gate_time(params) if gate_time is None else gate_time
    trace = lindblad_evolve(sc_hamiltonian(params), noise, joint.to_density(), _grid(T, steps))
    target = _target(photonic)
    _with_fidelity(trace, target)
    trace.add_observables(_populations(trace, RAIL, [(2, "g"), (0, "e")]))
    F = fidelity(trace.final, target)
    return GateReport("ns-sc", {"system": params.to_dict(), "noise": noise.to_dict()}, T, F, trace)


def sc_fidelity_window(params: SystemParams, noise: NoiseParams, psi0=None, *,
                       rel_window=0.05, points=41) -> tuple[np.ndarray, np.ndarray]:
    """NS fidelity sampled on [T(1−w), T(1+w)] from one run."""
    photonic, joint = _rail_input(psi0)
    T = sc_gate_time(params)
    t0, t1 = T * (1 - rel_window), T * (1 + rel_window)
    # a single run recorded densely near the optimum
    steps = int(round((points - 1) * t1 / (t1 - t0)))
    grid = TimeGrid(0.0, t1, steps)
    trace = lindblad_evolve(sc_hamiltonian(params), noise, joint.to_density(), grid)
    _with_fidelity(trace, _target(photonic))
    sel = trace.times >= t0 - 1e-12
    return trace.times[sel], trace.observables["fidelity"][sel]


# ---------------------------------------------------------------- p-USC regime

def bloch_siegert_amplitudes(B: float, g: float, t):
    """Closed-form amplitudes for α₀ = α₁ = α₂ = 1 under the interaction-frame Bloch-Siegert model.

    Returns (c_{0,g}, c_{1,g}, c_{2,g}, c_{0,e}).
    """
    t = np.asarray(t, dtype=float)
    W = math.sqrt(B * B + 8 * g * g)
    s, c = np.sin(0.5 * W * t), np.cos(0.5 * W * t)
    env = np.exp(-0.5j * B * t)
    c0 = np.ones_like(t, dtype=complex)
    c1 = np.exp(-1j * B * t / 3)
    c2 = env * (c - 1j * B * s / W)
    c0e = env * (-2j * math.sqrt(2) * g * s / W)
    return c0, c1, c2, c0e


def pusc_phases(bs: BlochSiegertParams) -> dict:
    """Phase bookkeeping at the gate time: θ₁ − θ₀ and θ₂ − θ₀ reduced mod 2π."""
    c0, c1, c2, c0e = bloch_siegert_amplitudes(bs.B, bs.base.g, bs.gate_time)
    th1 = float(np.angle(c1 / c0))
    th2 = float(np.angle(c2 / c0))
    return {
        "theta1": th1,
        "theta2": th2,
        "theta1_error": abs(math.remainder(th1, 2 * math.pi)),
        "theta2_error": abs(math.remainder(th2 - math.pi, 2 * math.pi)),
        "leak_0e": float(abs(c0e) ** 2),
    }


def ns_protocol_pusc(bs: BlochSiegertParams, noise: NoiseParams, psi0: KetState | None = None, *,
                     dephasing: bool = False, steps: int = 50) -> GateReport:
    """NS gate from k oscillations of the Bloch-Siegert model, dressed-state master equation."""
    if bs.k < 4 or bs.k == 5:
        raise ValueError(f"k = {bs.k} is not admissible")
    photonic, joint = _rail_input(psi0)
    H_full = models.h_2bs(bs.base, RAIL)
    H_int = models.h_2bs_interaction(bs.base, RAIL)
    ops = dressed_collapse_ops(H_full.matrix, RAIL, noise.kappa, noise.gamma,
                               bs.base.omega_r, bs.base.omega_q)
    if dephasing and noise.gamma_phi > 0:
        ops.append(math.sqrt(noise.gamma_phi / 2) * qubit_op(RAIL, 0, "z").matrix)
    trace = lindblad_evolve_ops(H_int, ops, joint.to_density(), _grid(bs.gate_time, steps))
    target = _target(photonic)
    _with_fidelity(trace, target)
    trace.add_observables(_populations(trace, RAIL, [(2, "g"), (0, "e")]))
    F = fidelity(trace.final, target)
    params = {"bloch_siegert": bs.to_dict(), "noise": noise.to_dict(), "dephasing": dephasing}
    return GateReport("ns-pusc", params, bs.gate_time, F, trace, extras=pusc_phases(bs))


# ---------------------------------------------------------------- dispersive regime

def _frame_unitary(frame: np.ndarray, t: float) -> np.ndarray:
    d = np.diag(frame)
    if np.abs(frame - np.diag(d)).max() > 0:
        raise ValueError("frame Hamiltonian must be diagonal")
    return np.diag(np.exp(-1j * d * t))


def dispersive_generators(dp: DispersiveParams, space: SpaceLabel = RAIL):
    """(H_int, H₀) with H_int = H_dis − H₀ on a single rail."""
    H = models.h_dispersive(dp, space).matrix
    H0 = models.dispersive_frame(dp, space).matrix
    return H - H0, H0


def ns_protocol_dispersive(dp: DispersiveParams, noise: NoiseParams, psi0: KetState | None = None, *,
                           steps: int = 50) -> GateReport:
    """Kerr-phase NS / C-phase gate; evolved in the ω_r, ω_q frame and reported in the lab frame."""
    photonic, joint = _rail_input(psi0)
    H_int, H0 = dispersive_generators(dp)
    grid = _grid(dp.gate_time, steps)
    trace = lindblad_evolve(H_int, noise, joint.to_density(), grid)
    lab = []
    for t, rho in zip(trace.times, trace.states):
        U = _frame_unitary(H0, t)
        lab.append(DensityMatrix(RAIL, U @ rho.matrix @ U.conj().T))
    trace = EvolutionTrace(trace.times, lab, step=trace.step)
    target = _target(photonic, dp.target_phase)
    _with_fidelity(trace, target)
    F = fidelity(trace.final, target)
    params = {"dispersive": dp.to_dict(), "noise": noise.to_dict()}
    return GateReport("ns-dispersive", params, dp.gate_time, F, trace)


def dispersive_amplitudes(dp: DispersiveParams, t):
    """Lab-frame amplitudes e^{-iE_n t} of |0,g⟩, |1,g⟩, |2,g⟩ for unit inputs."""
    p, chi = dp.base, dp.chi
    t = np.asarray(t, dtype=float)
    return (np.exp(0.5j * (p.omega_q + chi) * t),
            np.exp(1j * (0.5 * (p.omega_q + chi) - p.omega_r) * t),
            np.exp(1j * (0.5 * (p.omega_q + 3 * chi) - 2 * p.omega_r) * t))


# ---------------------------------------------------------------- two-rail C-Z

def logical_state(coeffs=None) -> KetState:
    """Two-rail photonic state in the logical sector (default: equal superposition)."""
    if coeffs is None:
        coeffs = {lab: 0.5 for lab in LOGICAL}
    return KetState.from_dict(PHOTONIC, coeffs)


def _check_logical(state: KetState):
    amp = state.amplitudes.copy()
    for lab in LOGICAL:
        amp[PHOTONIC.index(lab)] = 0
    if np.linalg.norm(amp) > 1e-12:
        raise ValueError("input state has weight outside the logical sector {|00>,|01>,|10>,|11>}")


def cz_target(input_state: KetState, phase: float = math.pi) -> KetState:
    """Ideal output: 50:50 splitters around ideal NS (or C-phase) gates on both rails."""
    bs = beam_splitter_unitary(math.pi / 4).operator()
    ns = ns_ideal_operator(PHOTONIC, phase)
    return KetState(PHOTONIC, bs @ ns @ bs @ input_state.amplitudes)


def cz_logical_matrix(theta: float = math.pi / 4, phase: float = math.pi) -> np.ndarray:
    """4×4 logical-sector matrix of BS·(NS⊗NS)·BS with ideal NS gates."""
    bs = beam_splitter_unitary(theta).operator()
    U = bs @ ns_ideal_operator(PHOTONIC, phase) @ bs
    idx = [PHOTONIC.index(l) for l in LOGICAL]
    return U[np.ix_(idx, idx)]


def _embed_rail(op6: np.ndarray, rail: int) -> np.ndarray:
    # rail r owns mode r and qubit r (subsystem 2 + r)
    return embed_operator(TWO_RAIL, op6, [rail, 2 + rail])


def _two_rail(op6: np.ndarray) -> np.ndarray:
    return _embed_rail(op6, 0) + _embed_rail(op6, 1)


def _cz_dynamics(regime: str, params, noise: NoiseParams, dephasing: bool):
    """(H, collapse ops, gate time, frame) for the joint two-rail NS stage."""
    if regime == "sc":
        p: SystemParams = params
        if p.delta == 0:
            H = _two_rail(models.h_2jc_interaction(p, 0.0).matrix)
        else:
            H = lambda t: _two_rail(models.h_2jc_interaction(p, t).matrix)
        return H, standard_collapse_ops(TWO_RAIL, noise), sc_gate_time(p), None
    if regime == "pusc":
        bs: BlochSiegertParams = params
        H_full = models.h_2bs(bs.base).matrix
        H = _two_rail(models.h_2bs_interaction(bs.base).matrix)
        local = dressed_collapse_ops(H_full, RAIL, noise.kappa, noise.gamma,
                                     bs.base.omega_r, bs.base.omega_q)
        if dephasing and noise.gamma_phi > 0:
            local.append(math.sqrt(noise.gamma_phi / 2) * qubit_op(RAIL, 0, "z").matrix)
        ops = [_embed_rail(L, r) for r in (0, 1) for L in local]
        return H, ops, bs.gate_time, None
    if regime == "dispersive":
        dp: DispersiveParams = params
        H_int, H0 = dispersive_generators(dp)
        return (_two_rail(H_int), standard_collapse_ops(TWO_RAIL, noise), dp.gate_time,
                _two_rail(H0))
    raise ValueError(f"unknown regime {regime!r}")


def cz_protocol(regime: str, params, noise: NoiseParams, theta: float = DEFAULT_THETA,
                input_state: KetState | None = None, *, dephasing: bool = False,
                steps: int = 20) -> GateReport:
    """BS(θ) → NS on both rails (one joint master equation) → trace qubits → BS(θ)."""
    if input_state is None:
        input_state = logical_state()
    _check_logical(input_state)
    bs = beam_splitter_unitary(theta).operator()
    psi1 = bs @ input_state.amplitudes
    joint = np.kron(psi1, np.kron([1.0, 0.0], [1.0, 0.0]))  # qubits appended in |g,g>
    rho0 = DensityMatrix(TWO_RAIL, np.outer(joint, joint.conj()))
    H, ops, T, frame = _cz_dynamics(regime, params, noise, dephasing)
    trace = lindblad_evolve_ops(H, ops, rho0, _grid(T, steps))
    rho_T = trace.final.matrix
    if frame is not None:
        U = _frame_unitary(frame, T)
        rho_T = U @ rho_T @ U.conj().T
    photonic = partial_trace(DensityMatrix(TWO_RAIL, rho_T), [0, 1])
    out = DensityMatrix(PHOTONIC, bs @ photonic.matrix @ bs.conj().T)
    phase = params.target_phase if regime == "dispersive" else math.pi
    target = cz_target(input_state, phase)
    F = fidelity(out, target)
    qubit_e = sum(qubit_op(TWO_RAIL, q, "plus").matrix @ qubit_op(TWO_RAIL, q, "minus").matrix
                  for q in (0, 1))
    trace.add_observables(observable_series(trace, {"qubit_excitation": qubit_e}))
    report_params = {"regime": regime, "theta": theta, "noise": noise.to_dict(),
                     "gate": params.to_dict(), "dephasing": dephasing}
    return GateReport(f"cz-{regime}", report_params, T, F, trace,
                      extras={"output_density": out})


def cz_params(regime: str, **kw):
    """Default parameter sets for each regime (the reference operating points)."""
    from .units import ghz
    if regime == "sc":
        return SystemParams(ghz(kw.get("omega_r_ghz", 5.0)), ghz(2 * kw.get("omega_r_ghz", 5.0)),
                            ghz(kw.get("g_ghz", 0.25)))
    if regime == "pusc":
        return models.solve_pusc_k(kw.get("k", 4), ghz(kw.get("omega_r_ghz", 5.0)))
    if regime == "dispersive":
        return models.solve_dispersive(kw.get("n", 18), omega_r=ghz(kw.get("omega_r_ghz", 1.0)),
                                       abs_delta=kw.get("abs_delta_over_omega_r", 10.0)
                                       * ghz(kw.get("omega_r_ghz", 1.0)),
                                       target_phase=kw.get("target_phase", math.pi))
    raise ValueError(f"unknown regime {regime!r}")
