"""Pure-numpy RK4 stepper for the discretised waveguide (reference implementation).

State layout (length 4 + 2N + N²)::

    [Z, a1, b_0..b_{N-1}, A, B_0..B_{N-1}, S_00..S_{N-1,N-1}, E]

Z: vacuum, a1: one resonator photon, b: one bath photon, A: two resonator
photons, B: one resonator + one bath photon, S: two bath photons (full
symmetric matrix, diagonal carries an extra √2), E: qubit excited.

``damp`` holds seven non-negative decay rates of the amplitudes in that
order (non-Hermitian part of an effective Hamiltonian); zeros give closed
evolution.
"""

import numpy as np

SQRT2 = np.sqrt(2.0)


def _rhs(y, D, DD, g, gq, damp, N):
    a1 = y[1]
    b = y[2:2 + N]
    A = y[2 + N]
    B = y[3 + N:3 + 2 * N]
    S = y[3 + 2 * N:3 + 2 * N + N * N].reshape(N, N)
    E = y[-1]
    out = np.empty_like(y)
    out[0] = -damp[0] * y[0]
    out[1] = -1j * g * b.sum() - damp[1] * a1
    out[2:2 + N] = -1j * (D * b + g * a1) - damp[2] * b
    out[2 + N] = -1j * SQRT2 * (g * B.sum() + gq * E) - damp[3] * A
    out[3 + N:3 + 2 * N] = -1j * (D * B + SQRT2 * g * A + g * S.sum(axis=1)) - damp[4] * B
    dS = -1j * (DD * S + g * (B[:, None] + B[None, :])) - damp[5] * S
    out[3 + 2 * N:3 + 2 * N + N * N] = dS.ravel()
    out[-1] = -1j * SQRT2 * gq * A - damp[6] * E
    return out


def norm2(y, N):
    s = y[3 + 2 * N:3 + 2 * N + N * N]
    rest = np.concatenate([y[:3 + 2 * N], y[-1:]])
    return float(np.vdot(rest, rest).real + 0.5 * np.vdot(s, s).real)


def rk4_bath(y, D, gw, gq, h, nsteps, damp, stop_norm2=0.0):
    """Advance ``y`` in place by up to ``nsteps`` RK4 steps of size ``h``.

    ``gw``/``gq`` hold the couplings sampled every ``h/2`` (length 2·nsteps+1).
    Stops early once the squared norm falls below ``stop_norm2`` and returns
    the number of steps taken.
    """
    N = D.shape[0]
    DD = D[:, None] + D[None, :]
    damp = np.asarray(damp, dtype=float)
    for i in range(nsteps):
        g0, gm, g1 = gw[2 * i], gw[2 * i + 1], gw[2 * i + 2]
        q0, qm, q1 = gq[2 * i], gq[2 * i + 1], gq[2 * i + 2]
        k1 = _rhs(y, D, DD, g0, q0, damp, N)
        k2 = _rhs(y + 0.5 * h * k1, D, DD, gm, qm, damp, N)
        k3 = _rhs(y + 0.5 * h * k2, D, DD, gm, qm, damp, N)
        k4 = _rhs(y + h * k3, D, DD, g1, q1, damp, N)
        y += (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if stop_norm2 > 0 and norm2(y, N) < stop_norm2:
            return i + 1
    return nsteps
