import os
import subprocess
import sys

import numpy as np
import pytest

from nsgate import _backend, _bathkernel_py
from nsgate.waveguide import BathDiscretization, CatchReleaseSetup, WavepacketSpec, final_state, get_preset

KERNELS = _backend.kernels()
compiled = pytest.mark.skipif("compiled" not in KERNELS, reason="extension not built")


def _inputs(N, n, seed):
    rng = np.random.default_rng(seed)
    bath = BathDiscretization.for_packet(WavepacketSpec(0.15, span_k=4), N)
    y = rng.normal(size=4 + 2 * N + N * N) + 1j * rng.normal(size=4 + 2 * N + N * N)
    gw = np.ascontiguousarray(rng.uniform(0, 0.05, 2 * n + 1))
    gq = np.ascontiguousarray(rng.uniform(0, 1.5, 2 * n + 1))
    return np.ascontiguousarray(y), np.ascontiguousarray(bath.detunings), gw, gq


@compiled
@pytest.mark.parametrize("damp", [np.zeros(7), np.linspace(0.01, 0.07, 7)])
@pytest.mark.parametrize("N", [1, 7, 30])
def test_compiled_matches_python(N, damp):
    y, D, gw, gq = _inputs(N, 25, N)
    a, b = y.copy(), y.copy()
    na = KERNELS["python"](a, D, gw, gq, 0.01, 25, damp)
    nb = KERNELS["compiled"](b, D, gw, gq, 0.01, 25, damp)
    assert na == nb == 25
    assert np.abs(a - b).max() < 1e-12 * np.abs(a).max()


@compiled
def test_early_stop_agrees():
    y, D, gw, gq = _inputs(5, 200, 3)
    y /= np.sqrt(_bathkernel_py.norm2(y, 5))
    damp = np.full(7, 0.5)
    a, b = y.copy(), y.copy()
    na = KERNELS["python"](a, D, gw, gq, 0.01, 200, damp, 0.5)
    nb = KERNELS["compiled"](b, D, gw, gq, 0.01, 200, damp, 0.5)
    assert na == nb < 200
    assert np.allclose(a, b, atol=1e-13)


def test_end_to_end_backends_agree():
    setup = CatchReleaseSetup.from_preset(get_preset("wide"), N=10)
    outs = [final_state(setup.input_state(), setup.schedule, kernel=k).pack() for k in KERNELS.values()]
    for o in outs[1:]:
        assert np.abs(o - outs[0]).max() < 1e-11


def test_pure_python_fallback_env():
    code = "from nsgate import _backend; print(_backend.BACKEND)"
    env = dict(os.environ, NSGATE_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
