"""Independent ground truth: closed forms, a stochastic-mesh nested Monte Carlo,
and numeric checks of the Lebesgue-differentiation and L1 lemmas."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from . import kernels
from .engine import reflection_bound
from .errors import BudgetError, ParameterError

__all__ = [
    "linear_closed_form", "quadratic_closed_form", "reflection_bound", "OracleCase",
    "NestedMcResult", "nested_mc", "lebesgue_check", "conditional_lebesgue_check",
    "l1_from_as_check", "ConvergenceTable", "default_cases", "run_oracle_suite",
    "OracleSuiteResult", "ORACLE_COLUMNS",
]


def linear_closed_form(a, b, c, y, z, epsilon):
    """``e^{a eps}(y + <z, b> eps) + c (e^{a eps} - 1) / a`` (``c eps`` when ``a = 0``)."""
    zb = float(np.dot(np.atleast_1d(np.asarray(z, float)), np.atleast_1d(np.asarray(b, float))))
    growth = math.exp(a * epsilon)
    drift = c * math.expm1(a * epsilon) / a if a != 0 else c * epsilon
    return growth * (y + zb * epsilon) + drift


def quadratic_closed_form(gamma, y, z, epsilon):
    """``y + gamma |z|^2 eps``: ``exp(2 gamma Y)`` is a martingale with lognormal terminal."""
    zz = float(np.sum(np.square(np.atleast_1d(np.asarray(z, float)))))
    return y + gamma * zz * epsilon


@dataclass(frozen=True)
class OracleCase:
    name: str
    params: dict
    closed_form: object  # callable (y, z, epsilon) -> Y_t0
    derivation: str
    d: int = 1

    def value(self, y, z, epsilon):
        return self.closed_form(y, z, epsilon)

    def barrier_bound(self, epsilon):
        """Bound on the stopping mass the closed form ignores."""
        return reflection_bound(self.d, epsilon)


# --------------------------------------------------------------------------
# stochastic-mesh nested Monte Carlo


@dataclass
class NestedMcResult:
    y0: float
    se: float
    disc_err: float
    y_fine: float
    y_coarse: float
    replicate_values: np.ndarray
    cost: float

    def agrees_with(self, value, extra=0.0):
        return abs(self.y0 - value) <= 3.0 * self.se + self.disc_err + extra


def _mesh_value(g, y, z, t0, b0, levels, times, radii):
    """Backward recursion on one mesh; ``levels[j]`` holds the (M, d) points at ``times[j]``."""
    M = levels[1].shape[0]
    dtm = times[1] - times[0]

    def stopped(x):
        norm = np.linalg.norm(x, axis=1)
        return y + (x / np.maximum(norm, 1.0)[:, None]) @ z

    V = stopped(levels[-1])
    for j in range(len(levels) - 2, -1, -1):
        xn = levels[j + 1]
        if j == 0:
            E = V.mean()
            Zh = ((V - E)[:, None] * xn).mean(axis=0) / dtm
            val = g(times[0], b0[None, :], np.array([E]), Zh[None, :])
            return float(E + float(np.asarray(val).ravel()[0]) * dtm)
        xc = levels[j]
        sq = (np.einsum("ij,ij->i", xc, xc)[:, None] + np.einsum("ij,ij->i", xn, xn)[None, :]
              - 2.0 * xc @ xn.T)
        dens = np.exp(-np.maximum(sq, 0.0) / (2.0 * dtm))
        w = dens / dens.mean(axis=0, keepdims=True)
        w /= w.sum(axis=1, keepdims=True)
        E = w @ V
        Zh = (w @ (V[:, None] * xn) - E[:, None] * (w @ xn)) / dtm
        drv = np.asarray(g(times[j], b0 + xc, E, Zh), float)
        alive = np.linalg.norm(xc, axis=1) < radii[j]
        V = np.where(alive, E + drv * dtm, stopped(xc))
    return float(V)  # pragma: no cover


def nested_mc(g, y, z, epsilon, steps=4, mesh_size=2000, replicates=10, seed=0, t0=0.0,
              b0=None, phi2=None, richardson=True, budget=2e9):
    """Brute-force estimate of ``Y_t0`` for the stopped BSDE without regression.

    Conditional expectations are stochastic-mesh averages: the value at mesh
    point ``i`` of node ``j`` averages all node-``j+1`` values with
    transition-density weights.  ``phi2`` (length ``steps``) gives
    deterministic ``phi(K)^2`` per node; ``None`` means a zero dominator.
    With ``richardson`` the ``steps/2`` mesh on the even levels is also solved
    and ``2 Y_N - Y_{N/2}`` is returned; ``disc_err = |Y_N - Y_{N/2}|``.
    The standard error comes from independent mesh replicates.
    """
    z = np.atleast_1d(np.asarray(z, float))
    d = z.size
    if steps < 1 or steps > 8:
        raise ParameterError("nested_mc is a small-step oracle: 1 <= steps <= 8")
    if richardson and steps % 2:
        raise ParameterError("Richardson extrapolation needs an even step count")
    if replicates < 2 or mesh_size < 2:
        raise ParameterError("need at least two replicates and two mesh points")
    cost = replicates * (steps + (steps // 2 if richardson else 0)) * mesh_size ** 2 * d
    if cost > budget:
        raise BudgetError(cost, budget)
    b0 = np.zeros(d) if b0 is None else np.asarray(b0, float)
    dt = epsilon / steps
    phi2 = np.zeros(steps) if phi2 is None else np.asarray(phi2, float)
    radii = 1.0 - np.concatenate([[0.0], np.cumsum(phi2 * dt)])
    times = t0 + dt * np.arange(steps + 1)
    fine, coarse = [], []
    for r in range(replicates):
        inc = kernels.normal_block(seed, r * mesh_size, mesh_size, steps * d)
        inc = inc.reshape(mesh_size, steps, d) * math.sqrt(dt)
        pts = np.concatenate([np.zeros((mesh_size, 1, d)), np.cumsum(inc, axis=1)], axis=1)
        levels = [pts[:, j] for j in range(steps + 1)]
        fine.append(_mesh_value(g, y, z, t0, b0, levels, times, radii))
        if richardson:
            coarse.append(_mesh_value(g, y, z, t0, b0, levels[::2], times[::2], radii[::2]))
    fine = np.array(fine)
    if richardson:
        coarse = np.array(coarse)
        vals = 2.0 * fine - coarse
        disc = abs(fine.mean() - coarse.mean())
        y_coarse = float(coarse.mean())
    else:
        vals, disc, y_coarse = fine, 0.0, float("nan")
    return NestedMcResult(y0=float(vals.mean()), se=float(vals.std(ddof=1) / math.sqrt(len(vals))),
                          disc_err=float(disc), y_fine=float(fine.mean()), y_coarse=y_coarse,
                          replicate_values=vals, cost=float(cost))


# --------------------------------------------------------------------------
# Lebesgue differentiation and the L1 lemma


@dataclass
class ConvergenceTable:
    rows: list = field(default_factory=list)

    def column(self, key):
        return np.array([r[key] for r in self.rows])

    def to_csv(self, path):
        keys = list(self.rows[0])
        with open(path, "w") as fh:
            fh.write(",".join(keys) + "\n")
            for r in self.rows:
                fh.write(",".join(format(r[k], ".17g") for k in keys) + "\n")


DEFAULT_LADDER = tuple(2.0 ** -k for k in range(3, 9))


def lebesgue_check(f, t, ladder=DEFAULT_LADDER, points=None):
    """``(1/eps) int_t^{t+eps} f`` by adaptive quadrature against ``f(t)``.

    ``points`` lists known breakpoints of ``f`` for the quadrature.
    """
    ft = float(f(t))
    table = ConvergenceTable()
    for eps in ladder:
        brk = None
        if points is not None:
            brk = [p for p in points if t < p < t + eps] or None
        val, err = integrate.quad(f, t, t + eps, points=brk, epsabs=1e-13, epsrel=1e-12,
                                  limit=200)
        table.rows.append({"epsilon": eps, "value": val / eps, "f_t": ft,
                           "abs_err": abs(val / eps - ft), "quad_err": err / eps})
    return table


def conditional_lebesgue_check(f_proc, t, ladder=DEFAULT_LADDER, seed=0, n_paths=2000, d=1,
                               min_steps=16, b_t=None):
    """Path averages ``(1/eps) int_t^{t+eps} f_r dr`` against ``f_t``.

    One batch on ``[t, t + max eps]`` is shared by all rungs; each rung uses
    the trapezoid rule on its prefix of at least ``min_steps`` steps.
    """
    from .engine import make_grid, sample_brownian

    ladder = sorted(ladder, reverse=True)
    ratio = ladder[0] / ladder[-1]
    steps = int(min_steps * 2 ** math.ceil(math.log2(ratio)))
    grid = make_grid(t, ladder[0], steps)
    batch = sample_brownian(grid, d, seed, n_paths, b_t0=b_t)
    vals = np.empty((n_paths, steps + 1))
    for j, s in enumerate(grid.nodes):
        vals[:, j] = f_proc(s, batch.positions(j))
    f_t = vals[:, 0]
    table = ConvergenceTable()
    for eps in ladder:
        m = int(round(eps / grid.dt))
        avg = integrate.trapezoid(vals[:, : m + 1], dx=grid.dt, axis=1) / eps
        table.rows.append({"epsilon": eps, "mean_value": float(avg.mean()),
                           "mean_f_t": float(f_t.mean()),
                           "mean_abs_err": float(np.mean(np.abs(avg - f_t))),
                           "max_abs_err": float(np.max(np.abs(avg - f_t)))})
    return table


def l1_from_as_check(sequence, limit, ns):
    """``E|X_n - X|`` for ``X_n = sequence(n)`` sampled on the same space as ``limit``."""
    limit = np.asarray(limit, float)
    table = ConvergenceTable()
    for n in ns:
        xn = np.asarray(sequence(n), float)
        diff = np.abs(xn - limit)
        table.rows.append({"n": float(n), "l1": float(diff.mean()),
                           "se": float(diff.std(ddof=1) / math.sqrt(diff.size)),
                           "second_moment": float(np.mean(xn * xn))})
    return table


# --------------------------------------------------------------------------
# closed form vs nested MC vs finite differences vs the regression solver

ORACLE_COLUMNS = ("case", "closed_form", "nested_mc", "nested_se", "nested_disc", "pde",
                  "solver", "solver_se", "delta_nested", "delta_pde", "delta_solver",
                  "barrier_bound", "passed")

PDE_TOLERANCE = 2e-3


def default_cases(gamma=0.5):
    """The linear triples plus the pure-quadratic case, all one-dimensional."""
    cases = []
    for a, b, c in ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (-1.0, 1.0, 2.0)):
        cases.append(OracleCase(
            name=f"linear(a={a:g},b={b:g},c={c:g})", params={"family": "linear", "a": a, "b": b,
                                                        "c": c},
            closed_form=lambda y, z, e, a=a, b=b, c=c: linear_closed_form(a, b, c, y, z, e),
            derivation="adjoint exponential"))
    cases.append(OracleCase(
        name=f"pure-quadratic(gamma={gamma:g})",
        params={"family": "pure-quadratic", "gamma": gamma},
        closed_form=lambda y, z, e: quadratic_closed_form(gamma, y, z, e),
        derivation="exponential transform"))
    return cases


@dataclass
class OracleRow:
    case: str
    closed_form: float
    nested_mc: float
    nested_se: float
    nested_disc: float
    pde: float
    solver: float
    solver_se: float
    delta_nested: float
    delta_pde: float
    delta_solver: float
    barrier_bound: float
    passed: bool

    def csv_line(self):
        vals = [getattr(self, k) for k in ORACLE_COLUMNS[1:-1]]
        return ",".join([self.case] + [format(v, ".17g") for v in vals]
                        + [str(int(self.passed))])


@dataclass
class OracleSuiteResult:
    rows: list

    @property
    def passed(self):
        return all(r.passed for r in self.rows)

    def csv_text(self):
        return "\n".join([",".join(ORACLE_COLUMNS)] + [r.csv_line() for r in self.rows]) + "\n"


def run_oracle_suite(cases=None, y=1.0, z=0.5, epsilon=0.1, seed=0, mesh_size=2000,
                     replicates=10, nested_steps=4, solver_steps=32, solver_paths=20_000,
                     nx=401, tolerance=None):
    """Cross-check every closed form against three independent numerical routes.

    Default agreement rules: nested MC within ``3 SE + disc_err``, the
    finite-difference value within :data:`PDE_TOLERANCE`, and the regression
    solver within ``max(3 SE, 10 dt)``.  An explicit ``tolerance`` replaces
    all three by a plain absolute bound.  All routes use the fixed unit
    sphere as the stopping rule (zero dominator).
    """
    from .engine import hitting_time, make_grid, sample_brownian, stopped_terminal
    from .families import make_generator
    from .pde import solve_pde_1d
    from .solver import SolverConfig, solve

    cases = default_cases() if cases is None else cases
    rows = []
    for ci, case in enumerate(cases):
        params = dict(case.params)
        spec = make_generator(params.pop("family"), d=case.d, **params)
        zv = np.zeros(case.d)
        zv[0] = z
        ref = case.value(y, zv, epsilon)
        nm = nested_mc(spec.eval, y, zv, epsilon, steps=nested_steps, mesh_size=mesh_size,
                       replicates=replicates, seed=seed + 7919 * ci)
        pde_val = solve_pde_1d(spec, y, z, epsilon, nx=nx, stop_on_phi=False).y0 \
            if case.d == 1 else float("nan")
        grid = make_grid(0.0, epsilon, solver_steps)
        batch = sample_brownian(grid, case.d, seed + 104729 * (ci + 1), solver_paths)
        batch = hitting_time(batch, np.zeros((solver_paths, solver_steps)))
        sol = solve(spec.eval, stopped_terminal(batch, y, zv), batch,
                    SolverConfig(picard_iters=12), f_bound=spec.f_bound, u_bound=spec.u_bound)
        d_nm, d_pde, d_sol = abs(nm.y0 - ref), abs(pde_val - ref), abs(sol.y0 - ref)
        if tolerance is None:
            ok = (nm.agrees_with(ref) and d_sol <= max(3.0 * sol.y0_se, 10.0 * grid.dt)
                  and (not math.isfinite(pde_val) or d_pde <= PDE_TOLERANCE))
        else:
            ok = all(v <= tolerance for v in (d_nm, d_sol) + ((d_pde,) if case.d == 1 else ()))
        rows.append(OracleRow(case=case.name, closed_form=ref, nested_mc=nm.y0, nested_se=nm.se,
                              nested_disc=nm.disc_err, pde=pde_val, solver=sol.y0,
                              solver_se=sol.y0_se, delta_nested=d_nm, delta_pde=d_pde,
                              delta_solver=d_sol, barrier_bound=case.barrier_bound(epsilon),
                              passed=bool(ok)))
    return OracleSuiteResult(rows)
