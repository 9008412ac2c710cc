import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from nsgate import models
from nsgate.dynamics import (DegeneracyWarning, EvolutionTrace, IntegrationError, NoiseParams,
                             TimeGrid, dressed_basis, dressed_lindblad_evolve, dressed_rates,
                             lindblad_evolve, observable_series, projector, propagate_state)
from nsgate.gates import RAIL, bloch_siegert_amplitudes
from nsgate.hilbert import DensityMatrix, KetState, build_space
from nsgate.models import SystemParams
from nsgate.units import ghz

P = SystemParams(ghz(5.0), ghz(10.0), ghz(0.25))
H_JC = models.h_2jc_interaction(P, 0.0, RAIL)
EQUAL = KetState(RAIL, np.array([1, 0, 1, 0, 1, 0]) / math.sqrt(3))


def test_noise_and_grid_validation():
    with pytest.raises(ValueError):
        NoiseParams(-1e-3)
    with pytest.raises(ValueError):
        TimeGrid(1.0, 1.0)
    with pytest.raises(ValueError):
        TimeGrid(0.0, 1.0, 0)
    g = TimeGrid(0.0, 1.0, 10, sample_stride=3)
    assert g.recorded_indices() == [0, 3, 6, 9, 10]
    assert NoiseParams.per_us(50, 0, 0).kappa == pytest.approx(0.05)


def test_trace_length_mismatch():
    with pytest.raises(ValueError):
        EvolutionTrace([0.0, 1.0], [EQUAL])


def test_two_photon_state_transfers_and_returns_with_sign():
    psi0 = KetState.basis(RAIL, (2, "g"))
    T = math.pi / (math.sqrt(2) * P.g)
    half = propagate_state(H_JC, psi0, TimeGrid(0.0, T / 2, 50)).final
    assert abs(half.amplitude((0, "e"))) ** 2 == pytest.approx(1.0, abs=1e-9)
    full = propagate_state(H_JC, psi0, TimeGrid(0.0, T, 50)).final
    assert full.amplitude((2, "g")) == pytest.approx(-1.0, abs=1e-8)


def test_zero_hamiltonian_is_identity():
    tr = propagate_state(np.zeros((6, 6)), EQUAL, TimeGrid(0.0, 3.0, 7))
    assert all(np.allclose(s.amplitudes, EQUAL.amplitudes) for s in tr.states)
    rho = lindblad_evolve(np.zeros((6, 6)), NoiseParams(), EQUAL.to_density(), TimeGrid(0.0, 3.0, 7))
    assert np.allclose(rho.final.matrix, EQUAL.to_density().matrix)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.1, 5.0))
def test_matches_matrix_exponential(seed, t):
    rng = np.random.default_rng(seed)
    m = rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6))
    H = 0.5 * (m + m.conj().T)
    tr = propagate_state(H, EQUAL, TimeGrid(0.0, t, 20))
    assert np.abs(tr.final.amplitudes - expm(-1j * H * t) @ EQUAL.amplitudes).max() < 1e-8
    assert abs(tr.final.norm - 1) < 1e-9


def test_non_hermitian_rejected():
    H = np.zeros((6, 6), complex)
    H[0, 1] = 1.0
    with pytest.raises(ValueError):
        propagate_state(H, EQUAL, TimeGrid(0.0, 1.0, 4))
    with pytest.raises(ValueError):
        lindblad_evolve(H, NoiseParams(), EQUAL.to_density(), TimeGrid(0.0, 1.0, 4))


def test_norm_guard_aborts():
    H = np.diag(np.arange(6.0)) * 50
    with pytest.raises(IntegrationError):
        propagate_state(H, EQUAL, TimeGrid(0.0, 1.0, 2), step_tol=1e9, norm_tol=1e-300)


def test_closed_jc_amplitudes_uniform():
    T = 2 * math.pi / P.g
    tr = propagate_state(H_JC, EQUAL, TimeGrid(0.0, T, 300))
    c = np.array([s.amplitudes for s in tr.states]) * math.sqrt(3)
    w = math.sqrt(2) * P.g * tr.times
    assert np.abs(c[:, 0] - 1).max() < 1e-7
    assert np.abs(c[:, 2] - 1).max() < 1e-7
    assert np.abs(c[:, 4] - np.cos(w)).max() < 1e-7
    assert np.abs(c[:, 1] + 1j * np.sin(w)).max() < 1e-7


def test_closed_bloch_siegert_uniform_and_incomplete_transfer():
    bs = models.solve_pusc_k(4)
    H = models.h_2bs_interaction(bs.base, RAIL)
    W = math.sqrt(bs.B ** 2 + 8 * bs.base.g ** 2)
    tr = propagate_state(H, EQUAL, TimeGrid(0.0, 2 * math.pi / W, 300))
    c = np.array([s.amplitudes for s in tr.states]) * math.sqrt(3)
    c0, c1, c2, c0e = bloch_siegert_amplitudes(bs.B, bs.base.g, tr.times)
    for got, want in ((c[:, 0], c0), (c[:, 2], c1), (c[:, 4], c2), (c[:, 1], c0e)):
        assert np.abs(got - want).max() < 1e-7
    pop = observable_series(tr, {"0e": projector(RAIL, (0, "e"))})["0e"] * 3
    expected = 8 * bs.base.g ** 2 / W ** 2 * np.sin(W * tr.times / 2) ** 2
    assert np.abs(pop - expected).max() < 1e-7
    assert pop.max() < 1.0


def test_observable_series():
    T = 2 * math.pi / P.g
    tr = propagate_state(H_JC, KetState.basis(RAIL, (2, "g")), TimeGrid(0.0, T, 100))
    obs = observable_series(tr, {"2g": projector(RAIL, (2, "g")), "all": np.eye(6)})
    assert np.abs(obs["2g"] - np.cos(math.sqrt(2) * P.g * tr.times) ** 2).max() < 1e-8
    assert np.abs(obs["all"] - 1).max() < 1e-9
    with pytest.raises(ValueError):
        observable_series(tr, {"bad": np.eye(4)})


def test_lindblad_closed_limit_and_invariants():
    grid = TimeGrid(0.0, 1.4, 40)
    closed = propagate_state(H_JC, EQUAL, grid)
    open_ = lindblad_evolve(H_JC, NoiseParams(), EQUAL.to_density(), grid)
    assert np.abs(open_.final.matrix - closed.final.to_density().matrix).max() < 1e-8
    noisy = lindblad_evolve(H_JC, NoiseParams(0.05, 0.05, 0.05), EQUAL.to_density(), grid)
    for rho in noisy.states:
        assert rho.is_valid()


def test_lindblad_amplitude_damping_rate():
    sp = build_space([2], 0)
    rho0 = KetState.basis(sp, (1,)).to_density()
    tr = lindblad_evolve(np.zeros((3, 3)), NoiseParams(kappa=0.3), rho0, TimeGrid(0.0, 2.0, 40))
    assert tr.final.matrix[1, 1].real == pytest.approx(math.exp(-0.6), abs=1e-9)


def test_dressed_rates_positive_and_weak_coupling_limit():
    bs = models.solve_pusc_k(4)
    H = models.h_2bs(bs.base, RAIL).matrix
    a = np.diag(np.sqrt([1, 1, 2, 2]), 2).astype(complex)
    G = dressed_rates(H, a + a.conj().T, bs.base.omega_r, 1e-3)
    assert (G >= 0).all() and np.count_nonzero(np.tril(G)) == 0
    # closed limit
    grid = TimeGrid(0.0, 0.5, 20)
    d = dressed_lindblad_evolve(H, 0.0, 0.0, EQUAL.to_density(), grid,
                                omega_r=bs.base.omega_r, omega_q=bs.base.omega_q)
    c = propagate_state(H, EQUAL, grid)
    assert np.abs(d.final.matrix - c.final.to_density().matrix).max() < 1e-8


@pytest.mark.parametrize("x", [0.02, 0.05])
def test_dressed_agrees_with_standard_when_weakly_dressed(x):
    p = SystemParams(ghz(5.0), ghz(10.0), x * ghz(5.0))
    H = models.h_2jc(p, RAIL).matrix
    grid = TimeGrid(0.0, math.pi / (math.sqrt(2) * p.g), 20)
    a = lindblad_evolve(H, NoiseParams(1e-3, 1e-3), EQUAL.to_density(), grid)
    b = dressed_lindblad_evolve(H, 1e-3, 1e-3, EQUAL.to_density(), grid,
                                omega_r=p.omega_r, omega_q=p.omega_q)
    fa = np.vdot(EQUAL.amplitudes, a.final.matrix @ EQUAL.amplitudes).real
    fb = np.vdot(EQUAL.amplitudes, b.final.matrix @ EQUAL.amplitudes).real
    assert abs(fa - fb) < 1e-4


def test_dressed_relaxes_to_ground_state():
    bs = models.solve_pusc_k(4)
    H = models.h_2bs(bs.base, RAIL).matrix
    E, V = dressed_basis(H)
    rho0 = DensityMatrix(RAIL, np.outer(V[:, -1], V[:, -1].conj()))
    tr = dressed_lindblad_evolve(H, 2.0, 2.0, rho0, TimeGrid(0.0, 10.0, 200),
                                 omega_r=bs.base.omega_r, omega_q=bs.base.omega_q)
    ground = [np.vdot(V[:, 0], r.matrix @ V[:, 0]).real for r in tr.states]
    assert ground[-1] > 0.5
    assert all(r.is_valid() for r in tr.states)


def test_degenerate_levels_reported():
    with pytest.warns(DegeneracyWarning):
        E, V = dressed_basis(np.diag([0.0, 1.0, 1.0]))
    assert np.allclose(np.abs(V), np.eye(3))
    with warnings.catch_warnings():
        warnings.simplefilter("error", DegeneracyWarning)
        dressed_basis(np.diag([0.0, 1.0, 2.0]))


def test_trace_csv_is_deterministic(tmp_path):
    tr = lindblad_evolve(H_JC, NoiseParams(0.05, 0.05, 0.05), EQUAL.to_density(), TimeGrid(0.0, 1.0, 5))
    tr.add_observables(observable_series(tr, {"p2g": projector(RAIL, (2, "g"))}))
    a = tr.to_csv(tmp_path / "a.csv")
    assert a == tr.to_csv()
    assert a.splitlines()[0] == "time_ns,p2g"
    assert len(a.splitlines()) == 7
