# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the hot kernels in ``_fallback``.

Arithmetic is kept in the same order as the numpy fallback so results agree
to libm rounding.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, log, cos, sin, fabs, fmin
from libc.stdint cimport uint64_t, int64_t

cnp.import_array()

cdef uint64_t _GOLDEN = 0x9E3779B97F4A7C15ULL
cdef uint64_t _MIX1 = 0xBF58476D1CE4E5B9ULL
cdef uint64_t _MIX2 = 0x94D049BB133111EBULL
cdef double _TWO_PI = 6.283185307179586
cdef double _INV_2_53 = 1.0 / 9007199254740992.0


cdef inline uint64_t _fmix(uint64_t x) nogil:
    x = x ^ (x >> 30)
    x = x * _MIX1
    x = x ^ (x >> 27)
    x = x * _MIX2
    return x ^ (x >> 31)


cdef inline uint64_t _counter_hash(uint64_t seed, uint64_t path, uint64_t counter) nogil:
    cdef uint64_t key = _fmix(seed ^ _fmix(path + _GOLDEN))
    return _fmix(key + counter * _GOLDEN)


def normal_block(seed, Py_ssize_t path_start, Py_ssize_t n_paths, Py_ssize_t n_normals):
    cdef uint64_t s = (<uint64_t>(int(seed) & 0xFFFFFFFFFFFFFFFF))
    cdef Py_ssize_t n_pairs = (n_normals + 1) // 2
    out_arr = np.empty((n_paths, 2 * n_pairs), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, m
    cdef uint64_t path, h1, h2
    cdef double u1, u2, r, theta
    with nogil:
        for i in range(n_paths):
            path = <uint64_t>(path_start + i)
            for m in range(n_pairs):
                h1 = _counter_hash(s, path, <uint64_t>(2 * m))
                h2 = _counter_hash(s, path, <uint64_t>(2 * m + 1))
                u1 = (<double>(h1 >> 11) + 1.0) * _INV_2_53
                u2 = (<double>(h2 >> 11)) * _INV_2_53
                r = sqrt(-2.0 * log(u1))
                theta = _TWO_PI * u2
                out[i, 2 * m] = r * cos(theta)
                out[i, 2 * m + 1] = r * sin(theta)
    return out_arr[:, :n_normals]


def first_passage(const double[:, :, ::1] increments, const double[:, ::1] phi2, double dt):
    cdef Py_ssize_t n = increments.shape[0]
    cdef Py_ssize_t steps = increments.shape[1]
    cdef Py_ssize_t d = increments.shape[2]
    tau_arr = np.full(n, steps + 1, dtype=np.int64)
    cdef int64_t[::1] tau = tau_arr
    cdef double[::1] disp = np.zeros(d, dtype=np.float64)
    cdef Py_ssize_t i, j, k
    cdef double integral, sq
    with nogil:
        for i in range(n):
            for k in range(d):
                disp[k] = 0.0
            integral = 0.0
            for j in range(steps):
                sq = 0.0
                for k in range(d):
                    disp[k] = disp[k] + increments[i, j, k]
                    sq = sq + disp[k] * disp[k]
                integral = integral + phi2[i, j] * dt
                if sqrt(sq) + integral >= 1.0:
                    tau[i] = j + 1
                    break
    return tau_arr


cdef inline double _family(int code, double p0, double p1, double p2, double p3,
                           double t, double b, double y, double z) nogil:
    if code == 0:
        return 0.0
    if code == 1:
        return p0
    if code == 2:
        return p0 * y + p1 * z + p2
    if code == 3:
        return p0 * z * z
    if code == 4:
        return -y * y * y + sin(y) + p0 * z * z
    if code == 5:
        return p0 * sin(y) + cos(z) + p1 * z * z
    if code == 6:
        return p1 * fmin(fabs(b), 1.0) * (1.0 + cos(y)) + p0 * z * z
    if code == 7:
        return y * y
    return 0.0


def pde_march(double[::1] u, const double[::1] x, double ds, double t_end, Py_ssize_t n_t,
              const double[::1] barrier, double y, double z, double b0, int code, params,
              Py_ssize_t snap_every, g=None):
    if g is not None:
        raise ValueError("compiled march only supports built-in generator families")
    if code < 0 or code > 7:
        raise ValueError(f"unknown family code {code}")
    cdef double p0 = params[0], p1 = params[1], p2 = params[2], p3 = params[3]
    cdef Py_ssize_t nx = x.shape[0]
    cdef double dx = x[1] - x[0]
    cdef double inv_2dx = 1.0 / (2.0 * dx)
    cdef double inv_dx2 = 1.0 / (dx * dx)
    cdef Py_ssize_t n_snap = n_t // snap_every + 1
    snaps_arr = np.empty((n_snap, nx), dtype=np.float64)
    cdef double[:, ::1] snaps = snaps_arr
    cdef double[::1] prev = np.empty(nx, dtype=np.float64)
    cdef Py_ssize_t i, step, k
    cdef double s, ux, uxx, bar
    for i in range(nx):
        snaps[0, i] = u[i]
    with nogil:
        for step in range(n_t):
            k = n_t - step
            s = t_end - step * ds
            for i in range(nx):
                prev[i] = u[i]
            for i in range(1, nx - 1):
                ux = (prev[i + 1] - prev[i - 1]) * inv_2dx
                uxx = (prev[i + 1] - 2.0 * prev[i] + prev[i - 1]) * inv_dx2
                u[i] = prev[i] + ds * (0.5 * uxx + _family(code, p0, p1, p2, p3, s,
                                                           b0 + x[i], prev[i], ux))
            bar = barrier[k - 1]
            for i in range(nx):
                if fabs(x[i]) >= bar:
                    u[i] = y + z * x[i]
            if (step + 1) % snap_every == 0:
                for i in range(nx):
                    snaps[(step + 1) // snap_every, i] = u[i]
    return snaps_arr
