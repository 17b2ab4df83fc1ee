"""Picard iteration with least-squares Monte Carlo conditional expectations.

The stopped BSDE on ``[t0, t0 + eps]`` is discretised as

    Y_j = E_j[Y_{j+1}] + 1{s_j < tau} g(s_j, B_{s_j}, Y_j, Z_j) dt
    Z_j = E_j[Y_{j+1} dB_j] / dt

and solved by Picard sweeps in which every driver value is taken from the
previous iterate, so each sweep only needs conditional expectations of known
quantities.  Those are least-squares projections on a polynomial basis of the
standardised displacement at node ``j``.  For ``j >= 1`` the discrete stopped
martingale ``sum_{i >= j} 1{s_i < tau} <z, dB_i>`` (conditional mean exactly
zero) is removed from the regression target first, which strips the
``|z|^2 (eps - s)`` variance out of every fit.  Node 0 is a plain path mean.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from itertools import combinations_with_replacement

import numpy as np

from .errors import ParameterError, SingularRegressionError

SCHEMES = ("picard-lsmc", "nested-mc", "pde-1d")


@dataclass(frozen=True)
class SolverConfig:
    scheme: str = "picard-lsmc"
    picard_iters: int = 8
    basis: int = 2
    z_cap: float | str | None = None
    tolerance: float = 1e-8
    condition_limit: float = 1e10
    # nested-mc backend
    mesh_size: int = 2000
    replicates: int = 10
    nested_steps: int = 4
    # pde-1d backend
    nx: int = 401

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ParameterError(f"unknown scheme {self.scheme!r}; choose from {SCHEMES}")
        if self.picard_iters < 1:
            raise ParameterError("picard_iters must be at least 1")
        if self.basis < 1:
            raise ParameterError("basis degree must be at least 1")
        if not self.tolerance > 0:
            raise ParameterError("tolerance must be positive")
        if self.z_cap is not None and self.z_cap != "auto" and not float(self.z_cap) > 0:
            raise ParameterError("z_cap must be positive, 'auto' or None")


def apriori_bound(xi_sup, f_bound, u_bound):
    """``(||xi|| + ||int f||) exp(||int u||)``."""
    for v in (xi_sup, f_bound, u_bound):
        if not (math.isfinite(v) and v >= 0):
            raise ParameterError("a priori bound inputs must be finite and nonnegative")
    return (xi_sup + f_bound) * math.exp(u_bound)


def basis_exponents(d, degree):
    """Monomials of total degree <= ``degree`` in ``d`` variables, as index tuples."""
    terms = [()]
    for deg in range(1, degree + 1):
        terms.extend(combinations_with_replacement(range(d), deg))
    return terms


def design_matrix(x, terms):
    cols = []
    for t in terms:
        col = np.ones(x.shape[0])
        for k in t:
            col = col * x[:, k]
        cols.append(col)
    return np.stack(cols, axis=1)


@dataclass
class NodeFit:
    """Least-squares fit of the Y target at one node (for fitted-value errors)."""

    degree: int
    scale: float
    coef: np.ndarray
    gram_inv: np.ndarray
    sigma2: float

    def fitted_se(self, disp):
        terms = basis_exponents(disp.shape[1], self.degree)
        X = design_matrix(disp / self.scale, terms)
        return np.sqrt(self.sigma2 * np.einsum("ij,jk,ik->i", X, self.gram_inv, X))


@dataclass
class BsdeSolution:
    Y: np.ndarray | None
    Z: np.ndarray | None
    y0: float
    apriori_bound: float
    deltas: list = field(default_factory=list)
    condition_numbers: list = field(default_factory=list)
    converged: bool = True
    z_cap_hits: int = 0
    fits: list = field(default_factory=list)
    drivers: np.ndarray | None = None
    y0_se: float = float("nan")
    scheme: str = "picard-lsmc"
    flags: list = field(default_factory=list)

    def max_abs_y(self):
        return float(np.max(np.abs(self.Y))) if self.Y is not None else abs(self.y0)

    def to_csv(self, path):
        """Rows ``path, node, Y, Z_0..Z_{d-1}`` (Z blank at the terminal node)."""
        n, n1 = self.Y.shape
        d = self.Z.shape[2]
        with open(path, "w") as fh:
            fh.write(",".join(["path", "node", "Y"] + [f"Z_{k}" for k in range(d)]) + "\n")
            for i in range(n):
                for j in range(n1):
                    zs = [format(v, ".17g") for v in self.Z[i, j]] if j < n1 - 1 else [""] * d
                    fh.write(",".join([str(i), str(j), format(self.Y[i, j], ".17g")] + zs) + "\n")


class _NodeView:
    """Node-major copies of the batch arrays; per-node slices are contiguous."""

    def __init__(self, batch):
        self.batch = batch
        self.n = batch.n_paths
        self.steps = batch.grid.steps
        self.dt = batch.grid.dt
        self.nodes = batch.grid.nodes
        self.disp = np.ascontiguousarray(batch.displacement.transpose(1, 0, 2))
        self.inc = np.ascontiguousarray(batch.increments.transpose(1, 0, 2))
        alive = np.ascontiguousarray(batch.alive.T)
        self.rows = []
        for j in range(self.steps):
            idx = np.flatnonzero(alive[j])
            self.rows.append(slice(None) if idx.size == self.n else idx)
        self.alive = alive

    def count(self, j):
        r = self.rows[j]
        return self.n if isinstance(r, slice) else r.size


class _Projector:
    """Per-node regression on alive paths with cached inverse Gram matrices."""

    def __init__(self, view, degree, condition_limit):
        self.view = view
        self.cache = {}
        self.degree = degree
        self.condition_limit = condition_limit
        self.conditions = []

    def setup(self, j):
        if j in self.cache:
            return self.cache[j]
        v = self.view
        rows = v.rows[j]
        m = v.count(j)
        scale = math.sqrt(v.dt * j)
        x = v.disp[j][rows] / scale
        d = x.shape[1]
        deg = self.degree
        while deg > 0 and m < 2 * len(basis_exponents(d, deg)):
            deg -= 1
        X = design_matrix(x, basis_exponents(d, deg))
        G = X.T @ X
        cond = float(np.linalg.cond(G))
        self.conditions.append(cond)
        if not np.isfinite(cond) or cond > self.condition_limit:
            raise SingularRegressionError(j, cond)
        entry = (X, np.linalg.inv(G), deg, scale)
        self.cache[j] = entry
        return entry

    def project(self, j, targets):
        """Fitted values of ``targets`` (alive rows, shape (m,) or (m, q))."""
        X, Ginv, _, _ = self.setup(j)
        coef = Ginv @ (X.T @ targets)
        return X @ coef, coef


def _driver_values(g, view, Y, Z):
    """Driver increments ``1{s_j < tau} g dt``, node-major ``(N, n)``."""
    out = np.zeros((view.steps, view.n))
    b_t0 = view.batch.b_t0
    for j in range(view.steps):
        rows = view.rows[j]
        if view.count(j) == 0:
            continue
        val = np.asarray(g(view.nodes[j], b_t0 + view.disp[j][rows], Y[j][rows], Z[j][rows]),
                         dtype=float)
        if not np.all(np.isfinite(val)):
            raise FloatingPointError(f"generator returned non-finite values at node {j}")
        out[j][rows] = val
    return out * view.dt


def solve(g, terminal, batch, config=SolverConfig(), f_bound=0.0, u_bound=0.0):
    """Solve the stopped BSDE with terminal ``terminal.xi`` on ``batch``.

    ``g`` is the original generator ``g(t, b, y, z)``; the indicator
    ``1{s < tau}`` is applied here.  ``f_bound``/``u_bound`` enter only the
    reported a priori bound (and the automatic ``z_cap``).
    """
    if config.scheme != "picard-lsmc":
        raise ParameterError(
            f"scheme {config.scheme!r} has its own entry point "
            "(oracles.nested_mc or pde.solve_pde_1d)")
    if batch.tau_index is None:
        raise ParameterError("batch must carry resolved hitting times")
    xi = np.asarray(terminal.xi, dtype=float)
    n, steps, d = batch.increments.shape
    if xi.shape != (n,):
        raise ParameterError("terminal and batch disagree on the number of paths")
    bound = apriori_bound(float(np.max(np.abs(xi))), f_bound, u_bound)
    z_cap = None
    if config.z_cap == "auto":
        z_cap = 4.0 * bound / math.sqrt(batch.grid.dt) if bound > 0 else None
    elif config.z_cap is not None:
        z_cap = float(config.z_cap)

    view = _NodeView(batch)
    # <z, B_{N ^ tau} - B_{t0}> without the radial clamp: a discrete martingale
    z_vec = np.asarray(terminal.z, dtype=float)
    mart_end = batch.displacement[np.arange(n), batch.stop_node] @ z_vec
    proj = _Projector(view, config.basis, config.condition_limit)
    dt = view.dt

    # node-major iterates: Y (N+1, n), Z (N, n, d), drivers (N, n)
    Y = np.repeat(xi[None, :], steps + 1, axis=0)
    Z = np.zeros((steps, n, d))
    drv = np.zeros((steps, n))
    deltas = []
    converged = False
    cap_hits = 0
    fits = [None] * (steps + 1)
    for sweep in range(config.picard_iters + 1):
        if sweep > 0:
            drv = _driver_values(g, view, Y, Z)
        Y_new = np.repeat(xi[None, :], steps + 1, axis=0)
        Z_new = np.zeros((steps, n, d))
        R = xi.copy()  # xi + sum of drivers beyond the current node
        for j in range(steps - 1, -1, -1):
            rows = view.rows[j]
            if view.count(j) == 0:
                R += drv[j]
                continue
            dB = view.inc[j][rows]
            if j == 0:
                mean = R.mean()
                fitted = np.full(n, mean)
                fits[0] = NodeFit(0, 1.0, np.array([mean]), np.array([[1.0 / n]]),
                                  float(R.var(ddof=1)))
                dY = Y_new[1] - mean - dB @ z_vec
                Z_new[0] = (dY[:, None] * dB).mean(axis=0) / dt + z_vec
            else:
                mart = view.disp[j][rows] @ z_vec - mart_end[rows]
                target = R[rows] + mart
                fitted, coef = proj.project(j, target)
                resid = target - fitted
                _, Ginv, deg, scale = proj.cache[j]
                fits[j] = NodeFit(deg, scale, coef, Ginv,
                                  float(resid @ resid) / max(resid.size - coef.size, 1))
                dY = Y_new[j + 1][rows] - fitted - dB @ z_vec
                zfit, _ = proj.project(j, dY[:, None] * dB / dt)
                Z_new[j][rows] = zfit + z_vec
            Y_new[j][rows] = drv[j][rows] + fitted
            R += drv[j]
        if z_cap is not None:
            norms = np.linalg.norm(Z_new, axis=2)
            over = norms > z_cap
            cap_hits += int(over.sum())
            Z_new[over] *= (z_cap / norms[over])[:, None]
        if sweep > 0:
            deltas.append(float(np.max(np.mean(np.abs(Y_new - Y), axis=1))))
        Y, Z = Y_new, Z_new
        if sweep > 0 and deltas[-1] < config.tolerance:
            converged = True
            break
    sol = BsdeSolution(Y=Y.T, Z=Z.transpose(1, 0, 2), y0=float(Y[0, 0]), apriori_bound=bound,
                       deltas=deltas, condition_numbers=proj.conditions, converged=converged,
                       z_cap_hits=cap_hits, fits=fits, drivers=drv.T)
    total = xi + drv.sum(axis=0)
    sol.y0_se = float(total.std(ddof=1) / math.sqrt(n))
    if not converged:
        sol.flags.append("picard-not-converged")
        warnings.warn(f"Picard iteration did not reach tolerance {config.tolerance} in "
                      f"{config.picard_iters} sweeps (last delta {deltas[-1]:.3e})",
                      RuntimeWarning, stacklevel=2)
    if cap_hits:
        sol.flags.append(f"z-cap-hits={cap_hits}")
    return sol


@dataclass
class Residual:
    rms: float
    per_path_max: np.ndarray


def residual_check(solution, g, batch):
    """Root-mean-square one-step residual of the discrete backward equation."""
    Y, Z = solution.Y, solution.Z
    dt = batch.grid.dt
    steps = batch.grid.steps
    nodes = batch.grid.nodes
    res = np.zeros((batch.n_paths, steps))
    for j in range(steps):
        a = batch.alive[:, j]
        pos = batch.b_t0 + batch.displacement[:, j]
        drv = np.where(a, np.asarray(g(nodes[j], pos, Y[:, j], Z[:, j]), float), 0.0)
        mart = np.einsum("ik,ik->i", Z[:, j], batch.increments[:, j])
        res[:, j] = Y[:, j] - (Y[:, j + 1] + drv * dt - mart)
    return Residual(rms=float(np.sqrt(np.mean(res * res))),
                    per_path_max=np.max(np.abs(res), axis=1))
