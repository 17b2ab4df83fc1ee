"""Pure numpy implementations of the hot kernels.

These mirror ``_kernels.pyx`` operation for operation so that both backends
produce the same numbers up to libm rounding.
"""

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_TWO_PI = 6.283185307179586
_INV_2_53 = 1.0 / 9007199254740992.0

# generator family codes understood by the finite-difference kernel
FAMILY_ZERO = 0
FAMILY_CONSTANT = 1
FAMILY_LINEAR = 2
FAMILY_QUADRATIC = 3
FAMILY_CUBIC = 4
FAMILY_OSCILLATORY = 5
FAMILY_STOCHASTIC = 6
FAMILY_Y_SQUARED = 7

_BLOCK = 8192


def _fmix(x):
    x = x ^ (x >> np.uint64(30))
    x = x * _MIX1
    x = x ^ (x >> np.uint64(27))
    x = x * _MIX2
    return x ^ (x >> np.uint64(31))


def _counter_hash(seed, path, counter):
    key = _fmix(np.uint64(seed) ^ _fmix(path + _GOLDEN))
    return _fmix(key + counter * _GOLDEN)


def normal_block(seed, path_start, n_paths, n_normals):
    """Standard normals indexed by (seed, global path id, draw index)."""
    seed = int(seed) & 0xFFFFFFFFFFFFFFFF
    n_pairs = (n_normals + 1) // 2
    out = np.empty((n_paths, 2 * n_pairs))
    counters = np.arange(n_pairs, dtype=np.uint64)
    with np.errstate(over="ignore"):
        for lo in range(0, n_paths, _BLOCK):
            hi = min(lo + _BLOCK, n_paths)
            paths = np.arange(path_start + lo, path_start + hi, dtype=np.uint64)[:, None]
            h1 = _counter_hash(seed, paths, np.uint64(2) * counters)
            h2 = _counter_hash(seed, paths, np.uint64(2) * counters + np.uint64(1))
            u1 = ((h1 >> np.uint64(11)).astype(np.float64) + 1.0) * _INV_2_53
            u2 = (h2 >> np.uint64(11)).astype(np.float64) * _INV_2_53
            r = np.sqrt(-2.0 * np.log(u1))
            theta = _TWO_PI * u2
            out[lo:hi, 0::2] = r * np.cos(theta)
            out[lo:hi, 1::2] = r * np.sin(theta)
    return out[:, :n_normals]


def first_passage(increments, phi2, dt):
    """First node where |displacement| + left-endpoint integral of phi2 reaches 1.

    Returns ``steps + 1`` for paths that never stop inside the window.
    """
    n, steps, _ = increments.shape
    disp = np.cumsum(increments, axis=1)
    norms = np.empty((n, steps + 1))
    norms[:, 0] = 0.0
    norms[:, 1:] = np.sqrt(np.einsum("ijk,ijk->ij", disp, disp))
    integral = np.zeros((n, steps + 1))
    np.cumsum(phi2 * dt, axis=1, out=integral[:, 1:])
    hit = norms + integral >= 1.0
    first = np.argmax(hit, axis=1)
    return np.where(hit[np.arange(n), first], first, steps + 1).astype(np.int64)


def family_eval(code, params, t, b, y, z):
    """Scalar-argument (d = 1) generator families, vectorised over arrays."""
    p0, p1, p2, p3 = params
    if code == FAMILY_ZERO:
        return np.zeros_like(y)
    if code == FAMILY_CONSTANT:
        return np.full_like(y, p0)
    if code == FAMILY_LINEAR:
        return p0 * y + p1 * z + p2
    if code == FAMILY_QUADRATIC:
        return p0 * z * z
    if code == FAMILY_CUBIC:
        return -y * y * y + np.sin(y) + p0 * z * z
    if code == FAMILY_OSCILLATORY:
        return p0 * np.sin(y) + np.cos(z) + p1 * z * z
    if code == FAMILY_STOCHASTIC:
        return p1 * np.minimum(np.abs(b), 1.0) * (1.0 + np.cos(y)) + p0 * z * z
    if code == FAMILY_Y_SQUARED:
        return y * y
    raise ValueError(f"unknown family code {code}")


def pde_march(u, x, ds, t_end, n_t, barrier, y, z, b0, code, params, snap_every, g=None):
    """Explicit Euler march of u_s + u_xx/2 + g(s, x, u, u_x) = 0 backward in time.

    ``u`` holds the terminal values and is overwritten.  ``barrier[k]`` is the
    absorbing radius at time node k (k = 0 .. n_t).  Nodes with |x| >= barrier
    are reset to y + z x.  When ``g`` is given it is called as
    ``g(s, b0 + x, u, u_x)``; otherwise the family ``code`` is evaluated.
    Returns the snapshot array, row r holding u at time node n_t - r*snap_every.
    """
    nx = x.shape[0]
    dx = x[1] - x[0]
    inv_2dx = 1.0 / (2.0 * dx)
    inv_dx2 = 1.0 / (dx * dx)
    absorbed_value = y + z * x
    bx = b0 + x[1:-1]
    n_snap = n_t // snap_every + 1
    snaps = np.empty((n_snap, nx))
    snaps[0] = u
    for step in range(n_t):
        k = n_t - step
        s = t_end - step * ds
        ux = (u[2:] - u[:-2]) * inv_2dx
        uxx = (u[2:] - 2.0 * u[1:-1] + u[:-2]) * inv_dx2
        if g is None:
            drv = family_eval(code, params, s, bx, u[1:-1], ux)
        else:
            drv = g(s, bx, u[1:-1], ux)
        interior = u[1:-1] + ds * (0.5 * uxx + drv)
        u[1:-1] = interior
        out = np.abs(x) >= barrier[k - 1]
        u[out] = absorbed_value[out]
        if (step + 1) % snap_every == 0:
            snaps[(step + 1) // snap_every] = u
    return snaps
