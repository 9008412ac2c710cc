# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled RK4 stepper for the discretised waveguide.

Same layout and signature as ``_bathkernel_py``; see that module for the
meaning of each amplitude block.
"""

import numpy as np

cdef double SQRT2 = 1.4142135623730951


cdef void _rhs(const double complex[::1] y, double complex[::1] out, const double[::1] D,
               double g, double gq, const double[::1] damp, Py_ssize_t N) noexcept nogil:
    cdef Py_ssize_t m, n, ib = 2, iA = 2 + N, iB = 3 + N, iS = 3 + 2 * N, iE = 3 + 2 * N + N * N
    cdef double complex sb = 0, sB = 0, rowsum, a1 = y[1], A = y[iA], E = y[iE]
    cdef double complex mi = -1j
    for m in range(N):
        sb = sb + y[ib + m]
        sB = sB + y[iB + m]
    out[0] = -damp[0] * y[0]
    out[1] = mi * g * sb - damp[1] * a1
    for m in range(N):
        out[ib + m] = mi * (D[m] * y[ib + m] + g * a1) - damp[2] * y[ib + m]
    out[iA] = mi * SQRT2 * (g * sB + gq * E) - damp[3] * A
    for m in range(N):
        rowsum = 0
        for n in range(N):
            rowsum = rowsum + y[iS + m * N + n]
            out[iS + m * N + n] = (mi * ((D[m] + D[n]) * y[iS + m * N + n]
                                         + g * (y[iB + m] + y[iB + n]))
                                   - damp[5] * y[iS + m * N + n])
        out[iB + m] = mi * (D[m] * y[iB + m] + SQRT2 * g * A + g * rowsum) - damp[4] * y[iB + m]
    out[iE] = mi * SQRT2 * gq * A - damp[6] * E


cdef double _norm2(const double complex[::1] y, Py_ssize_t N) noexcept nogil:
    cdef Py_ssize_t i, iS = 3 + 2 * N, iE = 3 + 2 * N + N * N
    cdef double s = 0, t = 0
    for i in range(iS):
        s += y[i].real * y[i].real + y[i].imag * y[i].imag
    for i in range(iS, iE):
        t += y[i].real * y[i].real + y[i].imag * y[i].imag
    s += y[iE].real * y[iE].real + y[iE].imag * y[iE].imag
    return s + 0.5 * t


def norm2(y, Py_ssize_t N):
    cdef double complex[::1] yv = np.ascontiguousarray(y, dtype=np.complex128)
    return _norm2(yv, N)


def rk4_bath(double complex[::1] y, const double[::1] D, const double[::1] gw,
             const double[::1] gq, double h, Py_ssize_t nsteps, damp, double stop_norm2=0.0):
    cdef Py_ssize_t N = D.shape[0], L = y.shape[0], i, j
    cdef double[::1] dv = np.ascontiguousarray(damp, dtype=np.float64)
    cdef double complex[::1] k1 = np.empty(L, np.complex128)
    cdef double complex[::1] k2 = np.empty(L, np.complex128)
    cdef double complex[::1] k3 = np.empty(L, np.complex128)
    cdef double complex[::1] k4 = np.empty(L, np.complex128)
    cdef double complex[::1] tmp = np.empty(L, np.complex128)
    cdef double hh = 0.5 * h, h6 = h / 6.0
    cdef Py_ssize_t done = nsteps
    if L != 4 + 2 * N + N * N:
        raise ValueError("state length does not match the bath size")
    if gw.shape[0] < 2 * nsteps + 1 or gq.shape[0] < 2 * nsteps + 1:
        raise ValueError("coupling samples must have length 2*nsteps+1")
    with nogil:
        for i in range(nsteps):
            _rhs(y, k1, D, gw[2 * i], gq[2 * i], dv, N)
            for j in range(L):
                tmp[j] = y[j] + hh * k1[j]
            _rhs(tmp, k2, D, gw[2 * i + 1], gq[2 * i + 1], dv, N)
            for j in range(L):
                tmp[j] = y[j] + hh * k2[j]
            _rhs(tmp, k3, D, gw[2 * i + 1], gq[2 * i + 1], dv, N)
            for j in range(L):
                tmp[j] = y[j] + h * k3[j]
            _rhs(tmp, k4, D, gw[2 * i + 2], gq[2 * i + 2], dv, N)
            for j in range(L):
                y[j] = y[j] + h6 * (k1[j] + 2 * k2[j] + 2 * k3[j] + k4[j])
            if stop_norm2 > 0 and _norm2(y, N) < stop_norm2:
                done = i + 1
                break
    return done
