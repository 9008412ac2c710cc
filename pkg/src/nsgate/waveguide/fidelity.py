"""End-to-end NS fidelity through the waveguide, schedule optimisation and waveform export."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from ..dynamics import NoiseParams
from ..gates import GateReport
from .bath import (BathDiscretization, BathState, WavepacketSpec, build_lorentzian_input,
                   single_photon_packet, tilde_reference_state, waveform_overlap)
from .propagate import SectorBasis, StepControl, density_evolve, final_state, trajectory
from .schedule import CouplerSchedule, Segment

EQUAL = (1 / math.sqrt(3),) * 3


def ideal_output(input_state: BathState, schedule: CouplerSchedule, alphas,
                 phase_corrected: bool = False) -> BathState:
    """α₀|0⟩ − α₁|1̃⟩ − α₂|2̃⟩ at the end of the schedule (resonator empty, qubit in g).

    With ``phase_corrected`` the single-photon sign is restored (α₀|0⟩ + α₁|1̃⟩ − α₂|2̃⟩),
    as after a π phase shifter acting on the output.
    """
    ref = tilde_reference_state(input_state, schedule.t_end, schedule.t_in, schedule.t_q)
    a0, a1, a2 = alphas
    s1 = 1.0 if phase_corrected else -1.0
    n1 = np.linalg.norm(input_state.b)
    n2 = math.sqrt(0.5 * np.vdot(input_state.S, input_state.S).real)
    b = s1 * a1 * ref.b / n1 if n1 else ref.b
    S = -a2 * ref.S / n2 if n2 else ref.S
    return BathState(input_state.bath, Z=a0, b=b, S=S, t=schedule.t_end)


def phase_shift(state: BathState) -> BathState:
    """π phase shifter on the waveguide: n bath photons pick up (−1)^n."""
    return BathState(state.bath, state.Z, state.a1, -state.b, state.A, -state.B, state.S,
                     state.E, state.t)


@dataclass
class CatchReleaseSetup:
    spec: WavepacketSpec
    bath: BathDiscretization
    schedule: CouplerSchedule
    alphas: tuple = EQUAL

    @classmethod
    def from_preset(cls, preset, N: int = 100, alphas=EQUAL) -> "CatchReleaseSetup":
        spec = WavepacketSpec(preset.epsilon, span_k=preset.span_k)
        return cls(spec, BathDiscretization.for_packet(spec, N), preset.schedule, tuple(alphas))

    def input_state(self) -> BathState:
        return build_lorentzian_input(self.spec, self.alphas, self.bath)

    def with_modes(self, N: int) -> "CatchReleaseSetup":
        return replace(self, bath=BathDiscretization.for_packet(self.spec, N))


def full_ns_fidelity(setup: CatchReleaseSetup, noise: NoiseParams, *, mode: str = "density",
                     trajectories: int = 200, seed: int = 0, phase_corrected: bool = False,
                     memory_budget: float = 2e9, control: StepControl | None = None) -> GateReport:
    """F = ⟨ψ_ideal|ρ_out|ψ_ideal⟩ for the whole catch → NS → release process.

    ``mode``: "pure" (closed evolution, noise must be zero), "density" (Lindblad
    in the ≤2-excitation basis, dimension N(N+1)/2 + 2N + 4) or "trajectory"
    (quantum jumps; seeded).
    """
    psi0 = setup.input_state()
    sched = setup.schedule
    target = ideal_output(psi0, sched, setup.alphas, phase_corrected)
    extras = {"mode": mode, "N": setup.bath.N}
    if mode == "pure":
        if not noise.is_zero:
            raise ValueError("pure mode ignores decoherence; use 'density' or 'trajectory'")
        out = final_state(psi0, sched, control=control or StepControl())
        if phase_corrected:
            out = phase_shift(out)
        F = abs(target.inner(out)) ** 2
        ref = tilde_reference_state(psi0, sched.t_end, sched.t_in, sched.t_q)
        extras["overlap_one_photon"] = waveform_overlap(out, ref, "one_bath")
        extras["overlap_two_photon"] = waveform_overlap(out, ref, "two_bath")
    elif mode == "density":
        rho = density_evolve(psi0, sched, noise.kappa, noise.gamma, noise.gamma_phi,
                             memory_budget=memory_budget,
                             control=control or StepControl(step_tol=0.0))
        basis = SectorBasis(setup.bath)
        tgt = target if not phase_corrected else phase_shift(target)
        x = basis.from_packed(tgt.pack())
        F = float(np.vdot(x, rho @ x).real)
        extras["trace"] = float(np.trace(rho).real)
        extras["dimension"] = basis.dim
    elif mode == "trajectory":
        rng = np.random.default_rng(seed)
        fs, jumps = [], 0
        for _ in range(trajectories):
            out, j = trajectory(psi0, sched, noise.kappa, noise.gamma, noise.gamma_phi, rng,
                                control=control or StepControl())
            if phase_corrected:
                out = phase_shift(out)
            fs.append(abs(target.inner(out)) ** 2)
            jumps += j
        F = float(np.mean(fs))
        extras.update(trajectories=trajectories, seed=seed, jumps=jumps,
                      stderr=float(np.std(fs) / math.sqrt(trajectories)))
    else:
        raise ValueError(f"unknown mode {mode!r}")
    F = min(1.0, max(0.0, F))
    params = {"epsilon": setup.spec.epsilon, "span_k": setup.spec.span_k,
              "schedule": sched.to_dict(), "noise": noise.to_dict(),
              "phase_corrected": phase_corrected}
    return GateReport("ns-waveguide", params, sched.t_end, F, None, extras)


def dissipation_curves(setup: CatchReleaseSetup, rates_per_us, *, fixed_per_us: float = 0.05,
                       **kw) -> dict[str, np.ndarray]:
    """F versus each of κ, γ, γ_φ with the other two held at ``fixed_per_us``."""
    rates = np.asarray(rates_per_us, dtype=float)
    out = {"rate_per_us": rates}
    for name in ("kappa", "gamma", "gamma_phi"):
        fs = []
        for r in rates:
            vals = {k: fixed_per_us for k in ("kappa", "gamma", "gamma_phi")}
            vals[name] = r
            noise = NoiseParams.per_us(vals["kappa"], vals["gamma"], vals["gamma_phi"])
            fs.append(full_ns_fidelity(setup, noise, **kw).fidelity)
        out[name] = np.array(fs)
    return out


# ---------------------------------------------------------------- objectives

def catch_population(setup: CatchReleaseSetup, schedule: CouplerSchedule) -> float:
    """Fraction of a single-photon packet stored in the resonator at t_in."""
    psi0 = build_lorentzian_input(setup.spec, (0, 1, 0), setup.bath)
    s = final_state(psi0, schedule, t_end=schedule.t_in)
    return abs(s.a1) ** 2


def release_overlap(setup: CatchReleaseSetup, schedule: CouplerSchedule) -> float:
    """Single-photon output overlap with the tilde reference after the full schedule."""
    psi0 = build_lorentzian_input(setup.spec, (0, 1, 0), setup.bath)
    out = final_state(psi0, schedule)
    ref = tilde_reference_state(psi0, schedule.t_end, schedule.t_in, schedule.t_q)
    return waveform_overlap(out, ref)


def _catch_params(s: CouplerSchedule):
    p = s.segments[0].params
    return [p["amplitude"], p["rate"]]


def _set_catch(s: CouplerSchedule, x):
    return s.with_catch(float(x[0]), float(x[1]))


def _release_params(s: CouplerSchedule):
    rel = s.release_segments()
    plateau = [seg for seg in rel if seg.kind == "const"]
    if not plateau:
        raise ValueError("release window has no constant plateau")
    ramp = sum(seg.t_end - seg.t_start for seg in rel if seg.kind == "ramp")
    return [plateau[0].params["value"], ramp]


def _set_release(s: CouplerSchedule, x):
    value, ramp = float(x[0]), float(x[1])
    t_out = s.t_out
    rest = [seg for seg in s.segments if seg.t_end <= t_out + 1e-9]
    new = list(rest)
    if ramp > 1e-9:
        new.append(Segment("ramp", t_out, t_out + ramp, {"start": 0.0, "end": value}))
    new.append(Segment("const", t_out + ramp, s.t_end, {"value": value}))
    return replace(s, segments=tuple(new))


OBJECTIVES = {
    "catch": (catch_population, _catch_params, _set_catch),
    "release": (release_overlap, _release_params, _set_release),
}


@dataclass
class OptimizationResult:
    schedule: CouplerSchedule
    initial_value: float
    value: float
    improved: bool
    evaluations: int
    at_bound: bool


def optimize_schedule(objective: str, setup: CatchReleaseSetup, bounds, *,
                      initial: CouplerSchedule | None = None, max_evaluations: int = 80,
                      xatol: float = 1e-4, fatol: float = 1e-7) -> OptimizationResult:
    """Nelder-Mead over the objective's scalars inside box ``bounds``.

    catch: (amplitude [rad/ns], rate [1/ns]) of the exponential, maximising the
    stored single-photon population at t_in. release: (plateau [rad/ns], ramp
    length [ns]) maximising the single-photon output overlap. The result is never
    worse than the initial schedule; ``improved`` is False when nothing better
    was found, and ``at_bound`` flags optima pinned to the search box.
    """
    fn, get, put = OBJECTIVES[objective]
    sched = initial or setup.schedule
    x0 = np.array(get(sched), dtype=float)
    lo = np.array([b[0] for b in bounds], dtype=float)
    hi = np.array([b[1] for b in bounds], dtype=float)
    if len(x0) != len(lo) or len(x0) > 4:
        raise ValueError("bounds must give one (lo, hi) pair per optimised scalar (at most 4)")
    if np.any(hi < lo) or np.any(x0 < lo - 1e-12) or np.any(x0 > hi + 1e-12):
        raise ValueError("initial point outside the search bounds")
    f0 = fn(setup, sched)
    free = hi - lo > 0
    if not np.any(free):
        return OptimizationResult(sched, f0, f0, False, 1, False)

    cache = {}

    def loss(z):
        x = x0.copy()
        x[free] = np.clip(z, lo[free], hi[free])
        key = tuple(np.round(x, 12))
        if key not in cache:
            cache[key] = fn(setup, put(sched, x))
        return -cache[key]

    span = (hi - lo)[free]
    simplex = [x0[free]]
    for i in range(len(span)):
        v = x0[free].copy()
        step = 0.05 * span[i]
        v[i] = v[i] + step if v[i] + step <= hi[free][i] else v[i] - step
        simplex.append(v)
    res = minimize(loss, x0[free], method="Nelder-Mead",
                   options={"initial_simplex": np.array(simplex), "maxfev": max_evaluations,
                            "xatol": xatol, "fatol": fatol})
    x = x0.copy()
    x[free] = np.clip(res.x, lo[free], hi[free])
    best = -loss(res.x)
    if best <= f0:
        return OptimizationResult(sched, f0, f0, False, len(cache), False)
    at_bound = bool(np.any(np.isclose(x[free], lo[free]) | np.isclose(x[free], hi[free])))
    return OptimizationResult(put(sched, x), f0, best, True, len(cache), at_bound)


# ---------------------------------------------------------------- export

WAVEFORM_COLUMNS = ("tilde1", "tilde2", "res1", "res2")


def export_waveforms(trace, path) -> Path:
    """CSV with time_ns and Re/Im of ⟨1̃,0_r|ψ⟩, ⟨2̃,0_r|ψ⟩, ⟨0,1_r|ψ⟩, ⟨0,2_r|ψ⟩."""
    path = Path(path)
    header = ["time_ns"] + [f"{p}_{k}" for k in WAVEFORM_COLUMNS for p in ("Re", "Im")]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i, t in enumerate(trace.times):
            row = [repr(float(t))]
            for k in WAVEFORM_COLUMNS:
                row += [repr(float(trace.observables[f"Re_{k}"][i])),
                        repr(float(trace.observables[f"Im_{k}"][i]))]
            w.writerow(row)
    return path


def output_waveform(setup: CatchReleaseSetup) -> tuple[np.ndarray, np.ndarray]:
    """(input packet, released single-photon packet) in the tilde frame at the end."""
    psi0 = setup.input_state()
    out = final_state(psi0, setup.schedule)
    ref = tilde_reference_state(psi0, setup.schedule.t_end, setup.schedule.t_in, setup.schedule.t_q)
    return ref.b, out.b


def mirrored_release(schedule: CouplerSchedule) -> CouplerSchedule:
    """Time mirror of the exponential catch on [0, t_in], with the qubit pulse off."""
    catch = schedule.segments[0]
    if catch.kind != "exp":
        raise ValueError("first segment is not an exponential catch")
    A, lam, T = catch.params["amplitude"], catch.params["rate"], schedule.t_in
    seg = Segment("exp", 0.0, T, {"amplitude": A * math.exp(-lam * T), "rate": -lam})
    return CouplerSchedule((seg,), T, 0.0)


def time_reversal_overlap(setup: CatchReleaseSetup) -> float:
    """Release a perfect |1⟩_r with the mirrored catch and compare to the conjugate packet.

    A time reversal maps f to conj(f); the residual free delay is optimised away.
    """
    sched = mirrored_release(setup.schedule)
    out = final_state(BathState(setup.bath, a1=1.0), sched).b
    ref = np.conj(single_photon_packet(setup.spec, setup.bath))
    D = setup.bath.detunings
    nb = np.linalg.norm(out)

    def neg(tau):
        return -abs(np.vdot(ref * np.exp(-1j * D * tau), out)) / nb

    span = 0.25 * sched.t_end
    taus = np.linspace(-span, span, 201)
    t0 = taus[np.argmin([neg(t) for t in taus])]
    h = taus[1] - taus[0]
    res = minimize_scalar(neg, bounds=(t0 - h, t0 + h), method="bounded",
                          options={"xatol": 1e-6})
    return float(-res.fun)
