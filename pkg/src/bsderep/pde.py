"""Explicit finite-difference solver for the one-dimensional stopped problem.

In the displacement coordinate ``x = B_s - B_{t0}`` the stopped BSDE with a
deterministic dominator is the terminal-value problem

    u_s + u_xx / 2 + g(s, b0 + x, u, u_x) = 0,    |x| < r(s),
    u = y + z x                                    |x| >= r(s) or s = t0 + eps,

with the moving barrier ``r(s) = 1 - int_{t0}^s phi_r(K)^2 dr``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import CFLError, ParameterError
from .generators import derive_envelope


@dataclass(frozen=True)
class PdeSolution:
    x: np.ndarray
    times: np.ndarray  # increasing snapshot times
    values: np.ndarray  # values[i] is u(times[i], x)
    y0: float
    steps: int
    barrier: np.ndarray

    def __call__(self, s, x):
        """Linear interpolation of ``u`` in both time and space."""
        s = float(s)
        i = int(np.clip(np.searchsorted(self.times, s) - 1, 0, len(self.times) - 2))
        w = (s - self.times[i]) / (self.times[i + 1] - self.times[i])
        w = min(max(w, 0.0), 1.0)
        row = (1.0 - w) * self.values[i] + w * self.values[i + 1]
        return np.interp(x, self.x, row)


def required_steps(epsilon, nx, h_coeff, z):
    """Smallest step count meeting ``ds <= dx^2 / (1 + 2 h max|u_x|)``."""
    dx = 2.0 / (nx - 1)
    slope = 2.0 * max(abs(z), 1.0)
    ds_max = dx * dx / (1.0 + 2.0 * h_coeff * slope)
    return int(math.ceil(epsilon / ds_max))


def solve_pde_1d(spec, y, z, epsilon, t0=0.0, nx=401, steps=None, b0=0.0, snapshots=64,
                 stop_on_phi=True):
    """Solve on ``x in [-1, 1]`` and return the value at ``(t0, 0)``.

    With ``stop_on_phi=False`` the barrier is the fixed unit sphere, i.e. the
    stopping rule of a zero dominator (the setting of the closed-form oracles).

    ``steps`` defaults to the smallest stable count; an explicit count below
    it raises :class:`CFLError` carrying the required number.
    """
    if stop_on_phi and not spec.phi.deterministic:
        raise ParameterError("the finite-difference oracle needs a deterministic dominator")
    z = float(np.atleast_1d(z)[0]) if np.ndim(z) else float(z)
    if nx < 5 or nx % 2 == 0:
        raise ParameterError("nx must be odd and at least 5 so that x = 0 is a node")
    env = derive_envelope(spec, y, np.array([z]))
    h_coeff = max(env.hK, spec.gamma)
    need = required_steps(epsilon, nx, h_coeff, z)
    if steps is None:
        steps = need
    elif steps < need:
        raise CFLError(need, steps)
    snap_every = max(1, steps // snapshots)
    steps = snap_every * int(math.ceil(steps / snap_every))
    ds = epsilon / steps
    x = np.linspace(-1.0, 1.0, nx)
    times = t0 + ds * np.arange(steps + 1)
    probe = np.zeros((1, 1))
    if stop_on_phi:
        phi2 = np.array([float(np.asarray(spec.phi(s, probe, env.K)).ravel()[0]) ** 2
                         for s in times[:-1]])
    else:
        phi2 = np.zeros(steps)
    barrier = 1.0 - np.concatenate([[0.0], np.cumsum(phi2 * ds)])
    u = y + z * x
    if spec.kernel is not None:
        code, params = spec.kernel
        g = None
    else:
        code, params = -1, (0.0, 0.0, 0.0, 0.0)

        def g(s, b, uu, ux):
            return np.asarray(spec.eval(s, b[:, None], uu, ux[:, None]), float)

    snaps = kernels.pde_march(u, x, ds, t0 + epsilon, steps, np.ascontiguousarray(barrier),
                              float(y), z, float(b0), int(code),
                              tuple(float(p) for p in params), snap_every, g)
    snaps = np.asarray(snaps)[::-1]
    snap_times = t0 + epsilon - snap_every * ds * np.arange(snaps.shape[0])[::-1]
    y0 = float(snaps[0, nx // 2])
    return PdeSolution(x=x, times=snap_times, values=snaps, y0=y0, steps=steps,
                       barrier=barrier)
