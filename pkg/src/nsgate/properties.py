"""Executable invariants for every module, run by ``nsgate verify``.

Each check returns ``(passed, detail)``. ``run_suite(inject=...)`` accepts a
negative control that corrupts one input so the matching invariant must fail.
"""

from __future__ import annotations

import math
import tempfile
import time
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import gates, models
from .dynamics import (NoiseParams, TimeGrid, dressed_lindblad_evolve, lindblad_evolve,
                       propagate_state)
from .hilbert import (DensityMatrix, KetState, build_space, excitation_operator, partial_trace,
                      tensor_kets)
from .units import ghz

INJECTIONS = ("non-hermitian", "non-unitary-bs")

_RNG_SEED = 20240611


@dataclass(frozen=True)
class PropertyResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0


def _fmt(x: float) -> str:
    return f"{x:.3e}"


# ---------------------------------------------------------------- hilbert

def check_dimensions(ctx):
    worst = []
    for cut, q in (((2,), 1), ((2, 2), 2), ((3, 1, 4), 0), ((), 3)):
        sp = build_space(cut, q)
        want = int(np.prod([c + 1 for c in cut])) * 2 ** q
        if sp.dim != want or len(sp.labels) != want:
            worst.append(f"{cut}/{q}")
    sp = build_space([2], 1)
    order_ok = sp.labels[:4] == ((0, 0), (0, 1), (1, 0), (1, 1))
    return not worst and order_ok, f"mismatches={worst}, mode-major g<e order={order_ok}"


def check_unitary_norm(ctx):
    rng = np.random.default_rng(_RNG_SEED)
    sp = build_space([3], 1)
    m = rng.normal(size=(sp.dim, sp.dim)) + 1j * rng.normal(size=(sp.dim, sp.dim))
    H = 0.5 * (m + m.conj().T)
    psi = KetState(sp, rng.normal(size=sp.dim) + 1j * rng.normal(size=sp.dim)).normalised()
    tr = propagate_state(H, psi, TimeGrid(0.0, 5.0, 1000))
    drift = max(abs(s.norm - 1.0) for s in tr.states)
    return drift < 1e-9, f"max norm drift {_fmt(drift)} over 1000 steps"


def check_excitation_conserved(ctx):
    """[H, a†a + 2σ₊σ₋] = 0 for the excitation-conserving builders, plus one closed run."""
    sp = build_space([4], 1)
    C = excitation_operator(sp).matrix
    p = SystemParams_default()
    bs = models.solve_pusc_k(4)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", models.ValidityWarning)
        dp = models.solve_dispersive(18, abs_delta=10 * ghz(1.0))
        hs = {
            "h_2jc": models.h_2jc(p, sp).matrix,
            "h_2jc_interaction": models.h_2jc_interaction(p, 0.3, sp).matrix,
            "h_2bs": models.h_2bs(bs.base, sp).matrix,
            "h_2bs_interaction": models.h_2bs_interaction(bs.base, sp).matrix,
            "h_dispersive": models.h_dispersive(dp, sp).matrix,
        }
    comm = max(np.abs(h @ C - C @ h).max() for h in hs.values())
    psi = KetState(sp, np.ones(sp.dim) / math.sqrt(sp.dim))
    tr = propagate_state(hs["h_2jc_interaction"], psi, TimeGrid(0.0, 10.0, 200))
    vals = [np.vdot(s.amplitudes, C @ s.amplitudes).real for s in tr.states]
    spread = max(vals) - min(vals)
    return comm < 1e-12 and spread < 1e-9, f"max |[H,C]| {_fmt(comm)}, <C> spread {_fmt(spread)}"


def check_partial_trace(ctx):
    rng = np.random.default_rng(_RNG_SEED + 1)
    sp_m, sp_q = build_space([2], 0), build_space([], 1)
    a = KetState(sp_m, rng.normal(size=3) + 1j * rng.normal(size=3)).normalised()
    b = KetState(sp_q, rng.normal(size=2) + 1j * rng.normal(size=2)).normalised()
    joint = tensor_kets(a, b)
    rho = DensityMatrix(build_space([2], 1), np.outer(joint, joint.conj()))
    err = max(np.abs(partial_trace(rho, [0]).matrix - a.to_density().matrix).max(),
              np.abs(partial_trace(rho, [1]).matrix - b.to_density().matrix).max())
    return err < 1e-14, f"max deviation {_fmt(err)}"


# ---------------------------------------------------------------- models

def SystemParams_default():
    return models.SystemParams(ghz(5.0), ghz(10.0), ghz(0.25))


def check_builders_hermitian(ctx):
    sp = build_space([4], 1)
    p = SystemParams_default()
    bs = models.solve_pusc_k(6)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", models.ValidityWarning)
        dp = models.solve_dispersive(18, abs_delta=10 * ghz(1.0))
        mats = {
            "h_2jc": models.h_2jc(p, sp).matrix,
            "h_2jc_interaction": models.h_2jc_interaction(p, 0.7, sp).matrix,
            "h_2qrm": models.h_2qrm(p, sp).matrix,
            "h_2bs": models.h_2bs(bs.base, sp).matrix,
            "h_2bs_frame": models.h_2bs_frame(bs.base, sp).matrix,
            "h_2bs_interaction": models.h_2bs_interaction(bs.base, sp).matrix,
            "h_dispersive": models.h_dispersive(dp, sp).matrix,
            "dispersive_frame": models.dispersive_frame(dp, sp).matrix,
        }
    if ctx.get("inject") == "non-hermitian":
        h = mats["h_2jc"].copy()
        h[0, 1] += 1e-3
        mats["h_2jc"] = h
    errs = {k: float(np.abs(m - m.conj().T).max()) for k, m in mats.items()}
    bad = [k for k, e in errs.items() if e >= 1e-12]
    return not bad, f"max ‖H−H†‖ {_fmt(max(errs.values()))}" + (f"; failing {bad}" if bad else "")


def check_pusc_solver(ctx):
    worst_res, worst_g, worst_formula = 0.0, 0.0, 0.0
    for k in (4, 6, 7, 8, 9):
        bs = models.solve_pusc_k(k)
        worst_res = max(worst_res, abs(models.pusc_condition_rhs(bs.r) - models.pusc_parity_factor(k)))
        worst_g = max(worst_g, abs(models.solve_pusc_coupling(bs.r) * bs.base.omega_r - bs.base.g))
        w2, wq = models.bloch_siegert_shifts(bs.base.omega_r, bs.base.omega_q, bs.base.g)
        g = bs.base.g
        checks = (bs.omega_2bs - 2 * g * g / (2 * bs.base.omega_r + bs.base.omega_q),
                  bs.Omega_q - 2 * g * g / bs.base.omega_q,
                  bs.B + 6 * (w2 / 2 + 2 * wq),
                  bs.T_osc - 2 * math.pi / math.sqrt(bs.B ** 2 + 8 * g * g),
                  bs.resonance_residual / bs.base.omega_r * 1e-3)
        worst_formula = max(worst_formula, max(abs(c) for c in checks))
    ok = worst_res < 1e-9 and worst_g < 1e-12 and worst_formula < 1e-12
    return ok, (f"k-r residual {_fmt(worst_res)}, g consistency {_fmt(worst_g)}, "
                f"derived quantities {_fmt(worst_formula)}")


def spectral_errors(g_over_wr=(0.02, 0.05, 0.1), r_values=(1.5, 1.9, 2.0), cutoff=20):
    """Worst relative error between the 4 lowest levels of h_2qrm and h_2bs."""
    sp = build_space([cutoff], 1)
    worst = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", models.ValidityWarning)
        for x in g_over_wr:
            for r in r_values:
                p = models.SystemParams(1.0, r, x)
                e_q = np.linalg.eigvalsh(models.h_2qrm(p, sp).matrix)[:4]
                e_b = np.linalg.eigvalsh(models.h_2bs(p, sp).matrix)[:4]
                worst = max(worst, float(np.max(np.abs(e_q - e_b) / np.abs(e_q))))
    return worst


def check_spectral_accuracy(ctx):
    worst = spectral_errors()
    return worst < 1e-3, f"worst relative eigenvalue error {_fmt(worst)} (g/ω_r ≤ 0.1, cutoff 20)"


def check_dispersive_solver(ctx):
    worst = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", models.ValidityWarning)
        for n in (6, 12, 18):
            for phase in (math.pi, 0.5 * math.pi):
                dp = models.solve_dispersive(n, target_phase=phase, abs_delta=10 * ghz(1.0))
                wr, t = dp.base.omega_r, dp.gate_time
                r1 = wr * t - 2 * n * math.pi
                r2 = (wr - dp.chi) * t - (phase + 2 * math.pi * (dp.m - 1))
                r3 = dp.chi - 2 * dp.base.g ** 2 / abs(dp.base.delta)
                worst = max(worst, abs(r1), abs(r2), abs(r3))
    return worst < 1e-12, f"max residual {_fmt(worst)}"


# ---------------------------------------------------------------- dynamics

def check_density_invariants(ctx):
    p = SystemParams_default()
    noise = NoiseParams.per_us(5.0, 5.0, 5.0)
    rep = gates.ns_protocol_sc(p, noise, steps=40)
    worst = 0.0
    for rho in rep.trace.states:
        m = rho.matrix
        worst = max(worst, abs(np.trace(m) - 1) / 1e-8, np.abs(m - m.conj().T).max() / 1e-10,
                    max(0.0, -np.linalg.eigvalsh(m).min()) / 1e-7)
    return worst < 1.0, f"worst invariant use {worst:.3f} of tolerance"


def check_jc_oracle(ctx):
    p = SystemParams_default()
    sp = gates.RAIL
    psi = KetState(sp, np.array([1, 0, 1, 0, 1, 0], dtype=complex))
    T = 2 * math.pi / p.g
    tr = propagate_state(models.h_2jc_interaction(p, 0.0, sp), psi, TimeGrid(0.0, T, 400))
    rt2g = math.sqrt(2) * p.g
    worst = 0.0
    for t, s in zip(tr.times, tr.states):
        want = {(0, "g"): 1.0, (1, "g"): 1.0, (2, "g"): math.cos(rt2g * t),
                (0, "e"): -1j * math.sin(rt2g * t)}
        worst = max(worst, max(abs(s.amplitude(k) - v) for k, v in want.items()))
    return worst < 1e-7, f"max amplitude error {_fmt(worst)} over [0, 2π/g]"


def check_bloch_siegert_oracle(ctx):
    bs = models.solve_pusc_k(4)
    sp = gates.RAIL
    psi = KetState(sp, np.array([1, 0, 1, 0, 1, 0], dtype=complex))
    W = math.sqrt(bs.B ** 2 + 8 * bs.base.g ** 2)
    T = 2 * math.pi / W
    tr = propagate_state(models.h_2bs_interaction(bs.base, sp), psi, TimeGrid(0.0, T, 400))
    c0, c1, c2, c0e = gates.bloch_siegert_amplitudes(bs.B, bs.base.g, tr.times)
    worst = 0.0
    for i, s in enumerate(tr.states):
        got = [s.amplitude((0, "g")), s.amplitude((1, "g")), s.amplitude((2, "g")),
               s.amplitude((0, "e"))]
        worst = max(worst, max(abs(a - b[i]) for a, b in zip(got, (c0, c1, c2, c0e))))
    return worst < 1e-7, f"max amplitude error {_fmt(worst)} over one oscillation"


def check_dressed_vs_standard(ctx):
    worst = 0.0
    psi = KetState(gates.RAIL, np.array([1, 0, 1, 0, 1, 0], dtype=complex) / math.sqrt(3))
    kappa, gamma = 1e-3, 1e-3
    for x in (0.02, 0.05):
        p = models.SystemParams(ghz(5.0), ghz(10.0), x * ghz(5.0))
        H = models.h_2jc(p, gates.RAIL).matrix
        T = gates.sc_gate_time(p)
        grid = TimeGrid(0.0, T, 20)
        target = psi
        std = lindblad_evolve(H, NoiseParams(kappa, gamma), psi.to_density(), grid)
        drs = dressed_lindblad_evolve(H, kappa, gamma, psi.to_density(), grid,
                                      omega_r=p.omega_r, omega_q=p.omega_q)
        f1 = np.vdot(target.amplitudes, std.final.matrix @ target.amplitudes).real
        f2 = np.vdot(target.amplitudes, drs.final.matrix @ target.amplitudes).real
        worst = max(worst, abs(f1 - f2))
    return worst < 1e-4, f"max fidelity difference {_fmt(worst)} at g/ω_r ≤ 0.05"


# ---------------------------------------------------------------- gates

def check_bs_unitary(ctx):
    rng = np.random.default_rng(_RNG_SEED + 2)
    P = build_space([2, 2], 0)
    nphot = np.array([P.photon_number(i) for i in range(P.dim)])
    worst_u = worst_block = worst_inv = 0.0
    for theta in rng.uniform(-math.pi, math.pi, 1000):
        U = gates.beam_splitter_unitary(theta).operator()
        if ctx.get("inject") == "non-unitary-bs":
            U = U * 1.001
        worst_u = max(worst_u, np.abs(U.conj().T @ U - np.eye(P.dim)).max())
        worst_inv = max(worst_inv, np.abs(U @ U - np.eye(P.dim)).max())
        worst_block = max(worst_block, np.abs(U[nphot[:, None] != nphot[None, :]]).max())
    ok = worst_u < 1e-12 and worst_block == 0.0 and worst_inv < 1e-12
    return ok, (f"max ‖U†U−I‖ {_fmt(worst_u)}, off-block {_fmt(worst_block)}, "
                f"‖U²−I‖ {_fmt(worst_inv)} (1000 random θ)")


def check_cz_truth_table(ctx):
    M = gates.cz_logical_matrix(math.pi / 4)
    err = np.abs(M - np.diag([1, 1, 1, -1])).max()
    return err < 1e-12, f"max deviation from diag(1,1,1,−1) {_fmt(err)}"


def check_noise_limit(ctx):
    noise = NoiseParams.per_us(1e-6, 1e-6, 1e-6)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", models.ValidityWarning)
        fs = {
            "sc": gates.ns_protocol_sc(SystemParams_default(), noise).fidelity,
            "pusc": gates.ns_protocol_pusc(models.solve_pusc_k(4), noise).fidelity,
            "dispersive": gates.ns_protocol_dispersive(
                models.solve_dispersive(18, abs_delta=10 * ghz(1.0)), noise).fidelity,
        }
    worst = min(fs.values())
    return worst > 1 - 1e-5, ", ".join(f"{k} F={v:.8f}" for k, v in fs.items())


def check_monotone_noise(ctx):
    p = SystemParams_default()
    grid = np.linspace(0.0, 0.5, 5)
    bad = []
    for name in ("kappa", "gamma", "gamma_phi"):
        fs = []
        for x in grid:
            kw = {"kappa": 0.05, "gamma": 0.05, "gamma_phi": 0.05}
            kw[name] = x
            fs.append(gates.ns_protocol_sc(p, NoiseParams.per_us(**kw), steps=20).fidelity)
        if np.any(np.diff(fs) > 1e-12):
            bad.append(name)
    return not bad, "non-increasing in κ, γ, γ_φ" if not bad else f"increasing in {bad}"


# ---------------------------------------------------------------- waveguide

def _wide_setup(N):
    from .waveguide import CatchReleaseSetup, get_preset
    return CatchReleaseSetup.from_preset(get_preset("wide"), N)


def check_waveguide_norm(ctx):
    from .waveguide import propagate_catch_release
    setup = _wide_setup(40)
    psi0 = setup.input_state()
    tr = propagate_catch_release(psi0, setup.schedule, record_dt=1.0, norm_tol=1.0)
    drift = max(abs(s.norm - psi0.norm) for s in tr.states)
    return drift < 1e-8, f"max norm drift {_fmt(drift)} over {setup.schedule.t_end:.1f} ns"


def check_sector_leakage(ctx):
    from .waveguide import build_lorentzian_input, final_state
    setup = _wide_setup(30)
    worst = 0.0
    for k in range(3):
        alphas = [0.0, 0.0, 0.0]
        alphas[k] = 1.0
        psi0 = build_lorentzian_input(setup.spec, alphas, setup.bath)
        out = final_state(psi0, setup.schedule).excitation_norms()
        worst = max(worst, sum(v for j, v in enumerate(out) if j != k))
    return worst == 0.0, f"amplitude leaked between excitation sectors: {_fmt(worst)}"


def check_no_qubit_drive(ctx):
    from dataclasses import replace
    from .waveguide import final_state
    setup = _wide_setup(30)
    sched = replace(setup.schedule, g0=0.0)
    out = final_state(setup.input_state(), sched)
    area = _triangle_area(setup.schedule)
    ok = out.E == 0 and abs(math.sqrt(2) * area - math.pi) < 1e-9
    return ok, f"|E| = {abs(out.E):.1e} with g_rq ≡ 0; √2∫g_rq dt − π = {_fmt(math.sqrt(2) * area - math.pi)}"


def _triangle_area(schedule):
    t = np.linspace(schedule.t_in, schedule.t_out, 20001)
    g = schedule.g_rq(t)
    return float(np.sum(0.5 * (g[1:] + g[:-1]) * np.diff(t)))


def check_time_reversal(ctx):
    from .waveguide import CatchReleaseSetup, get_preset, time_reversal_overlap
    ov = time_reversal_overlap(CatchReleaseSetup.from_preset(get_preset("narrow"), 100))
    return ov >= 0.99, f"mirrored-release overlap {ov:.5f} at ε = 0.02"


def check_discretization(ctx):
    from .waveguide import final_state, waveform_overlap
    from .waveguide.fidelity import ideal_output
    ovs = []
    for N in (50, 100):
        setup = _wide_setup(N)
        psi0 = setup.input_state()
        out = final_state(psi0, setup.schedule)
        ref = ideal_output(psi0, setup.schedule, setup.alphas)
        ovs.append(waveform_overlap(out, ref, "one_bath"))
    rel = abs(ovs[1] - ovs[0]) / ovs[1]
    return rel < 2e-3, f"overlap N=50 {ovs[0]:.5f}, N=100 {ovs[1]:.5f}, change {rel:.2e}"


# ---------------------------------------------------------------- cli

def check_cli_reproducible(ctx):
    from . import cli
    with tempfile.TemporaryDirectory() as tmp:
        hashes = []
        for i in range(2):
            cfg = cli.build_config("ns-sc")
            man = cli.run_scenario("ns-sc", cfg, Path(tmp) / str(i), seed=1)
            files = {e["path"]: e["sha256"] for e in man["files"]}
            import hashlib
            for path, digest in files.items():
                if hashlib.sha256((Path(tmp) / str(i) / path).read_bytes()).hexdigest() != digest:
                    return False, f"manifest hash mismatch for {path}"
            listed = set(files) | {"manifest.json"}
            on_disk = {p.name for p in (Path(tmp) / str(i)).iterdir()}
            if listed != on_disk:
                return False, f"unlisted files {sorted(on_disk - listed)}"
            hashes.append({k: v for k, v in files.items() if k.endswith(".csv")})
    same = hashes[0] == hashes[1]
    return same, "CSV outputs byte-identical across runs; manifest hashes match" if same else \
        "CSV outputs differ between identical runs"


SUITE = (
    ("hilbert.dimension_and_ordering", check_dimensions),
    ("hilbert.unitary_norm_preservation", check_unitary_norm),
    ("hilbert.excitation_number_conserved", check_excitation_conserved),
    ("hilbert.partial_trace_of_product", check_partial_trace),
    ("models.builders_hermitian", check_builders_hermitian),
    ("models.pusc_solver_consistency", check_pusc_solver),
    ("models.h_2bs_spectral_accuracy", check_spectral_accuracy),
    ("models.dispersive_solver_residuals", check_dispersive_solver),
    ("dynamics.density_matrix_invariants", check_density_invariants),
    ("dynamics.jc_analytic_oracle", check_jc_oracle),
    ("dynamics.bloch_siegert_analytic_oracle", check_bloch_siegert_oracle),
    ("dynamics.dressed_matches_standard", check_dressed_vs_standard),
    ("gates.beam_splitter_unitary", check_bs_unitary),
    ("gates.cz_truth_table", check_cz_truth_table),
    ("gates.noise_free_limit", check_noise_limit),
    ("gates.fidelity_monotone_in_noise", check_monotone_noise),
    ("waveguide.norm_conservation", check_waveguide_norm),
    ("waveguide.no_sector_leakage", check_sector_leakage),
    ("waveguide.qubit_idle_without_drive", check_no_qubit_drive),
    ("waveguide.time_reversal", check_time_reversal),
    ("waveguide.discretization_convergence", check_discretization),
    ("cli.reproducible_outputs", check_cli_reproducible),
)


def run_suite(inject: str | None = None, only=None) -> list[PropertyResult]:
    """Run every check (or the names in ``only``). Exceptions count as failures."""
    if inject is not None and inject not in INJECTIONS:
        raise ValueError(f"unknown injection {inject!r}; choose from {INJECTIONS}")
    ctx = {"inject": inject}
    results = []
    for name, fn in SUITE:
        if only is not None and name not in only:
            continue
        t0 = time.perf_counter()
        try:
            passed, detail = fn(ctx)
        except Exception as exc:  # a crash is a failed invariant, not a suite abort
            passed, detail = False, f"{type(exc).__name__}: {exc}"
        results.append(PropertyResult(name, bool(passed), detail, time.perf_counter() - t0))
    return results
