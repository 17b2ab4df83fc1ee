"""Time grids, counter-seeded Brownian batches, hitting times and stopped terminals."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from . import kernels
from .errors import ParameterError

# stream offset for the frozen path prefix on [0, t0]
_PREFIX_STREAM = 0x5DEECE66D


@dataclass(frozen=True)
class TimeGrid:
    t0: float
    epsilon: float
    steps: int
    horizon: float = math.inf

    @property
    def dt(self):
        return self.epsilon / self.steps

    @property
    def nodes(self):
        return self.t0 + self.dt * np.arange(self.steps + 1)

    @property
    def t_end(self):
        return self.t0 + self.epsilon


def make_grid(t0, epsilon, steps, horizon=math.inf):
    """Uniform grid on ``[t0, t0 + epsilon]``; requires ``0 < epsilon <= (T - t0) ^ 1``."""
    if t0 < 0 or not math.isfinite(t0):
        raise ParameterError(f"t0 must be a finite nonnegative time, got {t0}")
    if int(steps) != steps or steps < 1:
        raise ParameterError(f"steps must be a positive integer, got {steps}")
    cap = min(horizon - t0, 1.0)
    if not (0.0 < epsilon <= cap):
        raise ParameterError(
            f"epsilon={epsilon} outside (0, (T - t0) ^ 1] = (0, {cap}] "
            f"for t0={t0}, T={horizon}")
    return TimeGrid(float(t0), float(epsilon), int(steps), float(horizon))


@dataclass(frozen=True, eq=False)
class PathBatch:
    """Brownian increments on a grid; ``tau_index`` is ``None`` until resolved.

    ``tau_index[i] == grid.steps + 1`` marks a path that does not stop inside
    the window.  ``b_t0`` is the (shared) frozen position at ``t0``.
    """

    d: int
    grid: TimeGrid
    increments: np.ndarray
    seed: int
    path_start: int = 0
    b_t0: np.ndarray = field(default=None)
    tau_index: np.ndarray | None = None

    def __post_init__(self):
        if self.b_t0 is None:
            object.__setattr__(self, "b_t0", np.zeros(self.d))
        self.increments.setflags(write=False)

    @property
    def n_paths(self):
        return self.increments.shape[0]

    @property
    def never_stopped(self):
        return self.grid.steps + 1

    @cached_property
    def displacement(self):
        """``B_{s_j} - B_{t0}`` for ``j = 0..N``, shape ``(n, N + 1, d)``."""
        n, steps, d = self.increments.shape
        out = np.zeros((n, steps + 1, d))
        np.cumsum(self.increments, axis=1, out=out[:, 1:])
        out.setflags(write=False)
        return out

    def positions(self, j):
        return self.b_t0 + self.displacement[:, j]

    def _require_tau(self):
        if self.tau_index is None:
            raise ParameterError("hitting time not resolved; call hitting_time first")
        return self.tau_index

    @cached_property
    def alive(self):
        """``1{s_j < tau}`` for the driver nodes ``j = 0..N-1``, shape ``(n, N)``."""
        tau = self._require_tau()
        return np.arange(self.grid.steps)[None, :] < tau[:, None]

    @cached_property
    def stop_node(self):
        """``min(tau, N)`` per path."""
        return np.minimum(self._require_tau(), self.grid.steps)

    @cached_property
    def stopped_displacement(self):
        """``B_{s_j ^ tau} - B_{t0}``, with the stopping node pulled back radially to
        the unit sphere so a one-step overshoot never leaks into the terminal."""
        n, steps = self.n_paths, self.grid.steps
        node = np.minimum(np.arange(steps + 1)[None, :], self.stop_node[:, None])
        out = self.displacement[np.arange(n)[:, None], node]
        norm = np.linalg.norm(out, axis=2)
        scale = np.where(norm > 1.0, 1.0 / np.maximum(norm, 1.0), 1.0)
        out = out * scale[:, :, None]
        out.setflags(write=False)
        return out

    @cached_property
    def overshoot(self):
        """Raw ``|B_tau - B_t| - 1`` beyond the unit sphere (0 when none)."""
        n = self.n_paths
        raw = np.linalg.norm(self.displacement[np.arange(n), self.stop_node], axis=1)
        return np.maximum(raw - 1.0, 0.0)

    def stop_frequency(self):
        return float(np.mean(self._require_tau() <= self.grid.steps))


def sample_brownian(grid, d, seed, n_paths, path_start=0, b_t0=None):
    """Counter-seeded increments: path ``i`` depends only on ``(seed, path_start + i)``."""
    if d < 1 or n_paths < 1:
        raise ParameterError("d and n_paths must be positive")
    z = kernels.normal_block(seed, path_start, n_paths, grid.steps * d)
    inc = np.ascontiguousarray(z.reshape(n_paths, grid.steps, d) * math.sqrt(grid.dt))
    if b_t0 is None:
        b_t0 = frozen_prefix(seed, grid.t0, d)
    return PathBatch(d=d, grid=grid, increments=inc, seed=int(seed), path_start=int(path_start),
                     b_t0=np.asarray(b_t0, float))


def frozen_prefix(seed, t0, d):
    """One simulated position ``B_{t0}`` shared by every path of a run."""
    if t0 == 0:
        return np.zeros(d)
    return kernels.normal_block(int(seed) ^ _PREFIX_STREAM, 0, 1, d)[0] * math.sqrt(t0)


def phi_at_K(batch, phi, K):
    """``phi_{s_j}(K)`` along every path for ``j = 0..N-1``, shape ``(n, N)``."""
    nodes = batch.grid.nodes
    n, steps = batch.n_paths, batch.grid.steps
    if getattr(phi, "deterministic", False):
        probe = np.zeros((1, batch.d))
        row = np.array([float(np.asarray(phi(nodes[j], probe, K)).ravel()[0])
                        for j in range(steps)])
        return np.broadcast_to(row, (n, steps))
    out = np.empty((n, steps))
    for j in range(steps):
        out[:, j] = phi(nodes[j], batch.positions(j), K)
    return out


def hitting_time(batch, phi_values):
    """Resolve ``tau`` on the grid and return a new batch carrying it."""
    phi_values = np.asarray(phi_values, dtype=float)
    if np.any(phi_values < 0):
        raise ParameterError("phi values must be nonnegative")
    phi2 = np.ascontiguousarray(
        np.broadcast_to(phi_values * phi_values, (batch.n_paths, batch.grid.steps)))
    tau = kernels.first_passage(np.ascontiguousarray(batch.increments), phi2, batch.grid.dt)
    return replace(batch, tau_index=np.asarray(tau, dtype=np.int64))


@dataclass(frozen=True, eq=False)
class StoppedTerminal:
    xi: np.ndarray
    y: float
    z: np.ndarray
    stopped_disp: np.ndarray
    overshoot: np.ndarray

    @property
    def sup_norm(self):
        return float(np.max(np.abs(self.xi)))


def stopped_terminal(batch, y, z):
    """``xi = y + <z, B_{(t0+eps) ^ tau} - B_{t0}>``."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if z.shape != (batch.d,):
        raise ParameterError(f"z must have dimension {batch.d}")
    disp = batch.stopped_displacement[:, -1]
    return StoppedTerminal(xi=float(y) + disp @ z, y=float(y), z=z, stopped_disp=disp,
                           overshoot=batch.overshoot)


def reflection_bound(d, epsilon):
    """Upper bound ``2 d exp(-1 / (2 d eps))`` on the stopping mass when ``phi = 0``."""
    return 2.0 * d * math.exp(-1.0 / (2.0 * d * epsilon))


def dump_batch(batch, path):
    """Write increments as CSV rows ``path_id, node, inc_0..inc_{d-1}``."""
    n, steps, d = batch.increments.shape
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["path_id", "node"] + [f"inc_{k}" for k in range(d)])
        for i in range(n):
            for j in range(steps):
                w.writerow([batch.path_start + i, j]
                           + [repr(float(v)) for v in batch.increments[i, j]])


def load_batch(path, grid, seed=0):
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        d = len(header) - 2
        rows = [row for row in r]
    ids = np.array([int(row[0]) for row in rows])
    vals = np.array([[float(v) for v in row[2:]] for row in rows])
    start = int(ids.min()) if len(ids) else 0
    n = len(rows) // grid.steps
    return PathBatch(d=d, grid=grid, increments=vals.reshape(n, grid.steps, d), seed=seed,
                     path_start=start)
