"""Batched time-stepping kernels (numba) used by the experiment module.

Semantics mirror spincore.propagate_sequence exactly: events subdivided
so no step exceeds max_step, Hamiltonian sampled at sub-step midpoints,
U = exp(-i H dt) per step.  The exponential here is scaling-and-squaring
Taylor instead of an eigendecomposition; agreement with the reference
path is pinned by tests.  Parallel over crystallites; each iteration
writes only its own output slot, so results are independent of the
thread count.
"""

import math

import numpy as np
from numba import njit, prange

_TAYLOR_ORDER = 12
_SCALE_LIMIT = 0.25


@njit(cache=True, fastmath=True)
def _expm_times(a, u):
    """u <- exp(a) @ u for a 4x4 complex a with plain Taylor + squaring."""
    # Frobenius norm to pick the number of halvings
    norm2 = 0.0
    for i in range(4):
        for j in range(4):
            v = a[i, j]
            norm2 += v.real * v.real + v.imag * v.imag
    norm = math.sqrt(norm2)
    s = 0
    while norm > _SCALE_LIMIT:
        norm *= 0.5
        s += 1
    scale = 0.5 ** s
    t = np.zeros((4, 4), dtype=np.complex128)
    tmp = np.zeros((4, 4), dtype=np.complex128)
    for i in range(4):
        t[i, i] = 1.0 + 0.0j
    # Horner evaluation of the order-12 Taylor polynomial
    for k in range(_TAYLOR_ORDER, 0, -1):
        inv = scale / k
        for i in range(4):
            for j in range(4):
                acc = 0.0 + 0.0j
                for m in range(4):
                    acc += a[i, m] * t[m, j]
                tmp[i, j] = acc * inv
        for i in range(4):
            for j in range(4):
                t[i, j] = tmp[i, j]
            t[i, i] += 1.0
    for _ in range(s):
        for i in range(4):
            for j in range(4):
                acc = 0.0 + 0.0j
                for m in range(4):
                    acc += t[i, m] * t[m, j]
                tmp[i, j] = acc
        for i in range(4):
            for j in range(4):
                t[i, j] = tmp[i, j]
    for i in range(4):
        for j in range(4):
            acc = 0.0 + 0.0j
            for m in range(4):
                acc += t[i, m] * u[m, j]
            tmp[i, j] = acc
    for i in range(4):
        for j in range(4):
            u[i, j] = tmp[i, j]


@njit(cache=True, fastmath=True)
def _propagate_one(coeffs, omega_r, amps, phases, durs, t_start, max_step, u):
    """Propagate one crystallite through the event list, accumulate into u."""
    n_events = amps.shape[0]
    a = np.zeros((4, 4), dtype=np.complex128)
    t = t_start
    for e in range(n_events):
        dur = durs[e]
        n_sub = int(math.ceil(dur / max_step))
        if n_sub < 1:
            n_sub = 1
        dt = dur / n_sub
        wrf = amps[e]
        ph = phases[e]
        r = 0.5 * wrf * complex(math.cos(ph), -math.sin(ph))
        for k in range(n_sub):
            tm = t + (k + 0.5) * dt
            th = omega_r * tm
            c1 = math.cos(th)
            s1 = math.sin(th)
            c2 = 2.0 * c1 * c1 - 1.0
            s2 = 2.0 * s1 * c1
            w1 = (coeffs[0, 0] + coeffs[0, 1] * c1 + coeffs[0, 2] * s1
                  + coeffs[0, 3] * c2 + coeffs[0, 4] * s2)
            w2 = (coeffs[1, 0] + coeffs[1, 1] * c1 + coeffs[1, 2] * s1
                  + coeffs[1, 3] * c2 + coeffs[1, 4] * s2)
            wd = (coeffs[2, 0] + coeffs[2, 1] * c1 + coeffs[2, 2] * s1
                  + coeffs[2, 3] * c2 + coeffs[2, 4] * s2)
            midt = -1j * dt
            a[0, 0] = midt * (0.5 * (w1 + w2 + wd))
            a[1, 1] = midt * (0.5 * (w1 - w2 - wd))
            a[2, 2] = midt * (0.5 * (-w1 + w2 - wd))
            a[3, 3] = midt * (0.5 * (-w1 - w2 + wd))
            a[1, 2] = midt * (-0.5 * wd)
            a[2, 1] = a[1, 2]
            ra = midt * r
            rc = midt * r.conjugate()
            a[0, 1] = ra
            a[0, 2] = ra
            a[1, 3] = ra
            a[2, 3] = ra
            a[1, 0] = rc
            a[2, 0] = rc
            a[3, 1] = rc
            a[3, 2] = rc
            _expm_times(a, u)
        t += dur


@njit(cache=True, parallel=True)
def block_propagators(coeffs, omega_r, amps, phases, durs, t_start, max_step):
    """Propagators of one event list for a batch of crystallites.

    coeffs : (B, 3, 5) interaction Fourier coefficients in rad/s
    amps   : (E,) r.f. amplitudes in rad/s
    phases : (E,) radians, durs : (E,) seconds
    Returns (B, 4, 4) complex.
    """
    n_cryst = coeffs.shape[0]
    out = np.zeros((n_cryst, 4, 4), dtype=np.complex128)
    for b in prange(n_cryst):
        u = np.zeros((4, 4), dtype=np.complex128)
        for i in range(4):
            u[i, i] = 1.0 + 0.0j
        _propagate_one(coeffs[b], omega_r, amps, phases, durs,
                       t_start, max_step, u)
        out[b] = u
    return out
