import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nsgate import gates, models
from nsgate.dynamics import NoiseParams
from nsgate.gates import (PHOTONIC, RAIL, GateReport, beam_splitter_unitary, cz_logical_matrix,
                          cz_params, cz_protocol, logical_state, ns_apply_ideal,
                          ns_protocol_dispersive, ns_protocol_pusc, ns_protocol_sc,
                          printed_two_photon_block)
from nsgate.hilbert import KetState, build_space
from nsgate.models import SystemParams
from nsgate.units import ghz

MODE = build_space([2], 0)
P = SystemParams(ghz(5.0), ghz(10.0), ghz(0.25))
NOISE = NoiseParams.per_us(0.05, 0.05, 0.05)
ZERO = NoiseParams()


def ket(*amps, space=MODE):
    return KetState(space, np.array(amps, dtype=complex)).normalised()


def test_ideal_ns():
    assert np.allclose(ns_apply_ideal(ket(1, 0, 0)).amplitudes, [1, 0, 0])
    out = ns_apply_ideal(ket(1, 1, 1))
    assert np.allclose(out.amplitudes, np.array([1, 1, -1]) / math.sqrt(3))
    assert np.allclose(ns_apply_ideal(out).amplitudes, ket(1, 1, 1).amplitudes)
    with pytest.raises(ValueError):
        ns_apply_ideal(KetState(build_space([1], 0), [1, 0]))


def test_gate_report_rejects_bad_fidelity():
    with pytest.raises(ValueError):
        GateReport("x", {}, 1.0, 1.2)
    rep = GateReport("x", {"a": np.float64(1.0)}, 1.0, 0.5, extras={"z": 1j})
    assert json.loads(rep.to_json("t.csv"))["trace_file"] == "t.csv"


@settings(max_examples=100, deadline=None)
@given(st.floats(-2 * math.pi, 2 * math.pi))
def test_beam_splitter_orthogonal_involution(theta):
    bs = beam_splitter_unitary(theta)
    for block in (bs.block_1photon, bs.lifted_2photon):
        assert np.abs(block.T @ block - np.eye(len(block))).max() < 1e-12
    U = bs.operator()
    assert np.abs(U @ U - np.eye(9)).max() < 1e-12
    assert np.abs(U.conj().T @ U - np.eye(9)).max() < 1e-12


def test_single_photon_block():
    bs = beam_splitter_unitary(0.3)
    s, c = math.sin(0.3), math.cos(0.3)
    assert np.allclose(bs.block_1photon, [[-s, c], [c, s]])
    out = beam_splitter_unitary(math.pi / 4).apply(KetState.basis(PHOTONIC, (0, 1)))
    assert np.allclose([out.amplitude((0, 1)), out.amplitude((1, 0))], np.array([-1, 1]) / math.sqrt(2))


def test_hom_interference_signed():
    out = beam_splitter_unitary(math.pi / 4).apply(KetState.basis(PHOTONIC, (1, 1)))
    assert abs(out.amplitude((1, 1))) < 1e-12
    assert out.amplitude((0, 2)) == pytest.approx(-1 / math.sqrt(2), abs=1e-12)
    assert out.amplitude((2, 0)) == pytest.approx(1 / math.sqrt(2), abs=1e-12)


def test_lift_is_homogeneous_polynomial_expansion():
    """Check the 2-photon block against the explicit expansion of (u b† + ...)² on |00⟩."""
    theta = 0.41
    s, c = math.sin(theta), math.cos(theta)
    # |11⟩ = a† b†|00⟩ with a† → c b† + s a†, b† → −s b† + c a† (mode order (b, a) = (0, 1))
    # product: −sc b†² + c² a†b† − s² a†b† + sc a†², so |02⟩,|11⟩,|20⟩ amplitudes:
    want = np.array([-s * c * math.sqrt(2), c * c - s * s, s * c * math.sqrt(2)])
    lifted = beam_splitter_unitary(theta).lifted_2photon[:, 1]
    assert np.allclose(lifted, want) or np.allclose(lifted, want[::-1])


def test_printed_block_differs_by_two_signs():
    theta = math.pi / 4 + 0.01
    printed = printed_two_photon_block(theta)
    lifted = beam_splitter_unitary(theta).lifted_2photon
    diff = np.argwhere(~np.isclose(printed, lifted))
    assert np.allclose(np.abs(printed), np.abs(lifted))
    assert len(diff) == 2
    # at π/4 the printed rows |02⟩ and |20⟩ coincide, so it cannot be unitary
    p4 = printed_two_photon_block(math.pi / 4)
    assert np.allclose(p4[0], p4[2])
    assert np.abs(p4.T @ p4 - np.eye(3)).max() > 0.1


def test_cz_truth_table_exact():
    assert np.abs(cz_logical_matrix(math.pi / 4) - np.diag([1, 1, 1, -1])).max() < 1e-12


def test_sc_gate_time():
    assert gates.sc_gate_time(P) == pytest.approx(1.41421356, abs=1e-6)
    fast = SystemParams(ghz(5.0), ghz(10.0), 0.1 * ghz(5.0))
    assert gates.sc_gate_time(fast) == pytest.approx(0.707, abs=1e-3)


def test_sc_noise_free_is_exact():
    rep = ns_protocol_sc(P, ZERO)
    assert rep.fidelity == pytest.approx(1.0, abs=1e-7)
    assert rep.trace.observables["fidelity"][-1] == pytest.approx(rep.fidelity)


def test_sc_reference_point():
    rep = ns_protocol_sc(P, NOISE)
    assert rep.fidelity == pytest.approx(0.9995, abs=5e-4)
    assert set(rep.trace.observables) >= {"fidelity", "P|2,g>", "P|0,e>"}


def test_sc_rejects_excited_qubit():
    psi = KetState.basis(RAIL, (0, "e"))
    with pytest.raises(ValueError):
        ns_protocol_sc(P, ZERO, psi)


def test_sc_accepts_arbitrary_photonic_input():
    psi = ket(0.2, 0.5j, -0.8)
    rep = ns_protocol_sc(P, ZERO, psi)
    assert rep.fidelity == pytest.approx(1.0, abs=1e-7)


@pytest.mark.parametrize("k, F", [(4, 0.9995), (6, 0.9990)])
def test_pusc_ns(k, F):
    bs = models.solve_pusc_k(k)
    rep = ns_protocol_pusc(bs, NOISE)
    assert rep.gate_time == pytest.approx(bs.gate_time)
    assert rep.fidelity == pytest.approx(F, abs=2e-3)
    ph = rep.extras
    assert ph["theta1_error"] < 1e-7 and ph["theta2_error"] < 1e-7


def test_pusc_noise_free_phases():
    bs = models.solve_pusc_k(4)
    rep = ns_protocol_pusc(bs, ZERO)
    assert rep.fidelity == pytest.approx(1.0, abs=1e-7)


def test_pusc_rejects_k5():
    bs = models.solve_pusc_k(4)
    from dataclasses import replace
    with pytest.raises(ValueError):
        ns_protocol_pusc(replace(bs, k=5), ZERO)


def test_dispersive_phase_zero_is_identity():
    dp = models.solve_dispersive(6, target_phase=0.0, abs_delta=10 * ghz(1.0))
    rep = ns_protocol_dispersive(dp, ZERO)
    assert rep.fidelity == pytest.approx(1.0, abs=1e-7)


def test_dispersive_noise_free():
    dp = models.solve_dispersive(18, abs_delta=10 * ghz(1.0))
    assert ns_protocol_dispersive(dp, ZERO).fidelity == pytest.approx(1.0, abs=1e-7)


@pytest.mark.parametrize("regime", ["sc", "pusc", "dispersive"])
def test_noise_to_zero_limit(regime):
    tiny = NoiseParams.per_us(1e-6, 1e-6, 1e-6)
    params = cz_params(regime)
    run = {"sc": lambda: ns_protocol_sc(params, tiny),
           "pusc": lambda: ns_protocol_pusc(params, tiny),
           "dispersive": lambda: ns_protocol_dispersive(params, tiny)}[regime]
    assert run().fidelity > 1 - 1e-5


@pytest.mark.parametrize("which", ["kappa", "gamma", "gamma_phi"])
def test_fidelity_monotone_in_each_rate(which):
    fs = []
    for x in np.linspace(0.0, 1.0, 5):
        kw = {"kappa": 0.05, "gamma": 0.05, "gamma_phi": 0.05, which: x}
        fs.append(ns_protocol_sc(P, NoiseParams.per_us(**kw), steps=20).fidelity)
    assert np.all(np.diff(fs) <= 1e-12)


def test_cz_vacuum_untouched_under_noise():
    vac = logical_state({(0, 0): 1.0})
    assert cz_protocol("sc", cz_params("sc"), NOISE, input_state=vac).fidelity == pytest.approx(1.0, abs=1e-12)


def test_cz_rejects_non_logical_input():
    bad = KetState.basis(PHOTONIC, (2, 0))
    with pytest.raises(ValueError):
        cz_protocol("sc", cz_params("sc"), ZERO, input_state=bad)


def test_cz_ideal_dynamics_reaches_target():
    rep = cz_protocol("sc", cz_params("sc"), ZERO, theta=math.pi / 4)
    assert rep.fidelity == pytest.approx(1.0, abs=1e-7)
    out = rep.extras["output_density"]
    assert out.is_valid()


@pytest.mark.parametrize("regime", ["pusc", "dispersive"])
def test_cz_other_regimes(regime):
    rep = cz_protocol(regime, cz_params(regime), NOISE)
    assert rep.fidelity > 0.998
    assert "qubit_excitation" in rep.trace.observables


def test_cz_unknown_regime():
    with pytest.raises(ValueError):
        cz_protocol("nope", None, ZERO)
