"""End-to-end representation runs over an epsilon ladder.

For a target ``(t, y, z)`` each rung builds the stopped small-horizon BSDE
with terminal ``y + <z, B_{(t+eps)^tau} - B_t>``, solves it, and records the
difference quotient ``(Y_t - y) / eps`` together with the recentred processes
and their vanishing-rate diagnostics.
"""

from __future__ import annotations

import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .engine import (frozen_prefix, hitting_time, make_grid, phi_at_K, reflection_bound,
                     sample_brownian, stopped_terminal)
from .errors import AssumptionViolation, ParameterError
from .generators import build_transformed_generator, check_h1, check_h2, derive_envelope
from .solver import SolverConfig, solve

DEFAULT_EPSILONS = tuple(2.0 ** -k for k in range(3, 9))
CSV_COLUMNS = ("epsilon", "g_hat", "se", "abs_err", "sup_ytilde_ratio", "prop32_y", "prop32_z",
               "flags")
BOUND_SLACK = 1.05


@dataclass(frozen=True)
class RepresentationProblem:
    spec: object
    y: float
    z: tuple
    t: float = 0.0
    mode: str = "L1"

    def __post_init__(self):
        if self.mode not in ("L1", "pointwise"):
            raise ParameterError(f"mode must be 'L1' or 'pointwise', got {self.mode!r}")
        object.__setattr__(self, "z", tuple(float(v) for v in np.atleast_1d(self.z)))

    @property
    def d(self):
        return len(self.z)

    @property
    def z_vec(self):
        return np.array(self.z)

    def check_mode_hypotheses(self):
        phi = self.spec.phi
        if self.mode == "pointwise" and not phi.hinf_declared:
            raise AssumptionViolation("pointwise mode needs phi(x) declared bounded (H-infinity)")
        if self.mode == "L1" and not phi.square_integrable_declared:
            raise AssumptionViolation("L1 mode needs phi(x) declared square integrable")


@dataclass(frozen=True)
class EpsilonLadder:
    epsilons: tuple = DEFAULT_EPSILONS
    n_paths: int = 100_000
    steps: tuple | None = None

    def __post_init__(self):
        eps = tuple(float(e) for e in self.epsilons)
        object.__setattr__(self, "epsilons", eps)
        if not eps:
            raise ParameterError("ladder must contain at least one epsilon")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise ParameterError("ladder epsilons must be strictly decreasing")
        if self.n_paths < 2:
            raise ParameterError("need at least two paths per rung")
        if self.steps is not None and len(self.steps) != len(eps):
            raise ParameterError("steps must match the ladder length")

    def steps_for(self, i):
        if self.steps is not None:
            return int(self.steps[i])
        return default_steps(self.epsilons[i])

    def validate_for(self, t, horizon):
        cap = min(horizon - t, 1.0)
        for e in self.epsilons:
            if not (0.0 < e <= cap):
                raise ParameterError(
                    f"epsilon={e} violates 0 < epsilon <= (T - t) ^ 1 = {cap} (t={t}, T={horizon})")


def default_steps(eps):
    return max(32, math.ceil(64 * eps / 2.0 ** -3))


def rung_seed(seed, rung, replica=0):
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(rung), int(replica)))
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass
class TildeProcesses:
    Y: np.ndarray  # (n, N+1)
    Z: np.ndarray  # (n, N, d)
    k_exceed: int = 0
    k: float = 0.0

    @property
    def max_abs(self):
        return float(np.max(np.abs(self.Y)))


def tilde_transform(solution, batch, y, z, k=None):
    """``Y~ = Y - y - <z, B_{s^tau} - B_t>`` and ``Z~ = Z - 1{s<tau} z``."""
    z = np.atleast_1d(np.asarray(z, float))
    Yt = solution.Y - y - np.einsum("ijk,k->ij", batch.stopped_displacement, z)
    Zt = solution.Z - batch.alive[:, :, None] * z
    tilde = TildeProcesses(Y=Yt, Z=Zt)
    if k is not None:
        tilde.k = float(k)
        tilde.k_exceed = int(np.sum(np.abs(Yt) > k * BOUND_SLACK))
    return tilde


@dataclass
class SqrtEpsCheck:
    ratio: float
    se: float
    passed: bool
    margin: float


def sqrt_eps_bound_check(tilde, envelope, epsilon, solution=None, batch=None):
    """Ratio ``sup|Y~| / (sqrt(eps) C)`` with a fitted-value standard error."""
    scale = math.sqrt(epsilon) * envelope.C
    absY = np.abs(tilde.Y)
    flat = int(np.argmax(absY))
    i, j = np.unravel_index(flat, absY.shape)
    sup = float(absY[i, j])
    se = 0.0
    if solution is not None and batch is not None and j < batch.grid.steps:
        fit = solution.fits[j] if solution.fits else None
        if fit is not None and batch.alive[i, j]:
            se = float(fit.fitted_se(batch.displacement[i:i + 1, j])[0])
    ratio = sup / scale
    return SqrtEpsCheck(ratio=ratio, se=se / scale, passed=ratio <= BOUND_SLACK,
                        margin=BOUND_SLACK - ratio)


@dataclass
class Prop32:
    y: float
    z: float
    y_se: float
    z_se: float


def prop32_diagnostics(tilde, epsilon, dt):
    """``(1/eps) mean int |Y~|`` and ``(1/eps) mean int |Z~|^2`` (left endpoint)."""
    iy = np.abs(tilde.Y[:, :-1]).sum(axis=1) * dt / epsilon
    iz = np.einsum("ijk,ijk->i", tilde.Z, tilde.Z) * dt / epsilon
    n = iy.size
    return Prop32(y=float(iy.mean()), z=float(iz.mean()),
                  y_se=float(iy.std(ddof=1) / math.sqrt(n)),
                  z_se=float(iz.std(ddof=1) / math.sqrt(n)))


@dataclass
class Decomposition:
    M_term: float
    N_term: float
    g_target: float

    @property
    def m_minus_n(self):
        return abs(self.M_term - self.N_term)

    @property
    def n_minus_g(self):
        return abs(self.N_term - self.g_target)


def quotient_decomposition_diagnostic(problem, epsilon, solution, batch, g_target):
    """``M = (Y_t - y)/eps`` against ``N = (1/eps) mean int g~(r, 0, 0) dr``."""
    env = derive_envelope(problem.spec, problem.y, problem.z_vec)
    gt = build_transformed_generator(problem.spec, problem.y, problem.z_vec, env, batch.b_t0)
    dt = batch.grid.dt
    total = np.zeros(batch.n_paths)
    zero_z = np.zeros((batch.n_paths, batch.d))
    zero_y = np.zeros(batch.n_paths)
    for j, s in enumerate(batch.grid.nodes[:-1]):
        total += gt(s, batch.stopped_displacement[:, j], batch.alive[:, j], zero_y, zero_z)
    N_term = float(total.mean() * dt / epsilon)
    M_term = (solution.y0 - problem.y) / epsilon
    return Decomposition(M_term=M_term, N_term=N_term, g_target=g_target)


@dataclass
class RungResult:
    epsilon: float
    steps: int
    n_paths: int
    g_hat: float
    se: float
    abs_err: float
    g_hat_driver: float
    se_driver: float
    sup_ytilde_ratio: float
    sup_ytilde_ratio_se: float
    prop32_y: float
    prop32_y_se: float
    prop32_z: float
    prop32_z_se: float
    max_abs_y: float
    eq35_bound: float
    max_abs_ytilde: float
    k: float
    C: float
    K: float
    stop_frequency: float
    max_overshoot: float
    reflection_bound: float
    picard_deltas: list
    converged: bool
    M_term: float
    N_term: float
    outer_quotients: list = field(default_factory=list)
    outer_l1: float = float("nan")
    outer_max: float = float("nan")
    flags: list = field(default_factory=list)


def _target_value(problem, b_t0):
    return float(np.asarray(problem.spec.eval(problem.t, b_t0[None, :], np.array([problem.y]),
                                              problem.z_vec[None, :])).ravel()[0])


def _solve_rung(problem, eps, steps, n_paths, seed, config, b_t0):
    spec = problem.spec
    grid = make_grid(problem.t, eps, steps, horizon=spec.horizon)
    env = derive_envelope(spec, problem.y, problem.z_vec)
    batch = sample_brownian(grid, problem.d, seed, n_paths, b_t0=b_t0)
    batch = hitting_time(batch, phi_at_K(batch, spec.phi, env.K))
    term = stopped_terminal(batch, problem.y, problem.z_vec)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        sol = solve(spec.eval, term, batch, config, f_bound=spec.f_bound, u_bound=spec.u_bound)
    return env, batch, term, sol


def run_rung(problem, eps, steps, n_paths, seed, config, g_target, b_t0):
    env, batch, term, sol = _solve_rung(problem, eps, steps, n_paths, seed, config, b_t0)
    n = batch.n_paths
    g_hat = (sol.y0 - problem.y) / eps
    se = sol.y0_se / eps
    drv_total = sol.drivers.sum(axis=1)
    g_drv = float(drv_total.mean() / eps)
    se_drv = float(drv_total.std(ddof=1) / math.sqrt(n) / eps)
    tilde = tilde_transform(sol, batch, problem.y, problem.z_vec, k=env.k)
    sq = sqrt_eps_bound_check(tilde, env, eps, sol, batch)
    p32 = prop32_diagnostics(tilde, eps, batch.grid.dt)
    dec = quotient_decomposition_diagnostic(problem, eps, sol, batch, g_target)
    z_norm = float(np.linalg.norm(problem.z_vec))
    eq35 = (abs(problem.y) + z_norm + problem.spec.f_bound) * math.exp(problem.spec.u_bound)
    flags = list(sol.flags)
    max_y = sol.max_abs_y()
    if max_y > eq35 * BOUND_SLACK:
        flags.append("apriori-bound-exceeded")
    if tilde.k_exceed:
        flags.append(f"k-bound-exceeded={tilde.k_exceed}")
    if not sq.passed:
        flags.append("sqrt-eps-bound-exceeded")
    overshoot = float(np.max(batch.overshoot)) if n else 0.0
    if overshoot > 0:
        flags.append("clamped-overshoot")
    return RungResult(
        epsilon=eps, steps=steps, n_paths=n, g_hat=g_hat, se=se, abs_err=abs(g_hat - g_target),
        g_hat_driver=g_drv, se_driver=se_drv,
        sup_ytilde_ratio=sq.ratio, sup_ytilde_ratio_se=sq.se,
        prop32_y=p32.y, prop32_y_se=p32.y_se, prop32_z=p32.z, prop32_z_se=p32.z_se,
        max_abs_y=max_y, eq35_bound=eq35, max_abs_ytilde=tilde.max_abs, k=env.k, C=env.C,
        K=env.K, stop_frequency=batch.stop_frequency(), max_overshoot=overshoot,
        reflection_bound=reflection_bound(problem.d, eps), picard_deltas=list(sol.deltas),
        converged=sol.converged, M_term=dec.M_term, N_term=dec.N_term, flags=flags)


def fitted_order(eps, errors):
    """OLS slope of ``log(error)`` on ``log(eps)``; ``nan`` when undefined."""
    eps = np.asarray(eps, float)
    errors = np.asarray(errors, float)
    ok = errors > 0
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(eps[ok]), np.log(errors[ok]), 1)[0])


@dataclass
class RepresentationReport:
    problem: dict
    g_target: float
    rungs: list
    fitted_order: float
    invariants: dict
    compliance: list = field(default_factory=list)

    @property
    def passed(self):
        return all(self.invariants.values())

    @property
    def converged(self):
        return all(r.converged for r in self.rungs)

    @property
    def verdict(self):
        if not self.converged:
            return "non-converged"
        return "pass" if self.passed else "violated"

    def csv_text(self):
        lines = [",".join(CSV_COLUMNS)]
        for r in self.rungs:
            vals = [r.epsilon, r.g_hat, r.se, r.abs_err, r.sup_ytilde_ratio, r.prop32_y,
                    r.prop32_z]
            lines.append(",".join(format(v, ".17g") for v in vals) + "," + ";".join(r.flags))
        return "\n".join(lines) + "\n"

    def to_json_dict(self):
        rungs = []
        for r in self.rungs:
            rungs.append(asdict(r))
        return {
            "problem": self.problem,
            "g_target": self.g_target,
            "fitted_order": self.fitted_order,
            "invariants": self.invariants,
            "verdict": self.verdict,
            "rungs": rungs,
            "compliance": self.compliance,
        }

    def json_text(self):
        return json.dumps(_jsonable(self.to_json_dict()), sort_keys=True, indent=2) + "\n"

    def write(self, csv_path, json_path):
        with open(csv_path, "w") as fh:
            fh.write(self.csv_text())
        with open(json_path, "w") as fh:
            fh.write(self.json_text())


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _monotone_within(values, ses, k=2.0, rel_floor=1e-3):
    """Each step may rise by at most ``k`` combined standard errors.

    Rises below ``rel_floor`` times the largest value sit at the regression
    resolution floor and are ignored; a column that vanishes exactly has a
    zero standard error, so without the floor round-off alone would fail it.
    """
    floor = rel_floor * max((abs(v) for v in values), default=0.0)
    return all(b <= a + k * math.hypot(sa, sb) + floor
               for a, b, sa, sb in zip(values, values[1:], ses, ses[1:]))


def evaluate_invariants(rungs, g_target, order, mode):
    last = rungs[-1]
    tol = 0.05 * (1.0 + abs(g_target)) + 3.0 * last.se
    noise_level = all(r.abs_err <= 3.0 * r.se for r in rungs) and all(
        abs(r.g_hat_driver - g_target) <= 3.0 * r.se_driver + 1e-12 for r in rungs)
    inv = {
        "representation_convergence": bool(last.abs_err <= tol and (order > 0 or noise_level)),
        "apriori_bound": all(r.max_abs_y <= r.eq35_bound * BOUND_SLACK for r in rungs),
        "tilde_k_bound": all(r.max_abs_ytilde <= r.k * BOUND_SLACK for r in rungs),
        "sqrt_eps_bound": all(r.sup_ytilde_ratio <= BOUND_SLACK for r in rungs),
        "sqrt_eps_ratio_monotone": _monotone_within(
            [r.sup_ytilde_ratio for r in rungs], [r.sup_ytilde_ratio_se for r in rungs]),
    }
    if len(rungs) > 1:
        py = [r.prop32_y for r in rungs]
        pz = [r.prop32_z for r in rungs]
        inv["prop32_decay"] = bool(
            _monotone_within(py, [r.prop32_y_se for r in rungs])
            and _monotone_within(pz, [r.prop32_z_se for r in rungs])
            and py[-1] <= 0.1 * py[0] and pz[-1] <= 0.1 * pz[0])
    if mode == "pointwise" and rungs[0].outer_quotients:
        inv["pointwise_runs_shrink"] = bool(last.outer_max <= rungs[0].outer_max)
    return inv


def check_assumptions(spec, d, n=4000):
    return [check_h1(spec, n=n, d=d), check_h2(spec, n=n, d=d)]


def run_representation(problem, ladder=EpsilonLadder(), config=SolverConfig(), seed=0,
                       outer_seeds=None, outer_paths=10_000, force=False, progress=None, jobs=1):
    """Solve every rung of ``ladder`` and assemble the report.

    Raises :class:`AssumptionViolation` when sampled (H1)/(H2) checks fail
    (unless ``force``) or the mode hypotheses are not declared.  ``jobs > 1``
    solves rungs on a thread pool; every rung owns its seed, so the report
    does not depend on ``jobs``.
    """
    spec = problem.spec
    ladder.validate_for(problem.t, spec.horizon)
    problem.check_mode_hypotheses()
    reports = check_assumptions(spec, problem.d)
    if not all(r.passed for r in reports) and not force:
        raise AssumptionViolation("generator fails sampled growth conditions", reports)
    if outer_seeds is None:
        outer_seeds = 16 if (problem.mode == "pointwise" or not spec.phi.deterministic) else 0
    b_t0 = frozen_prefix(seed, problem.t, problem.d)
    g_target = _target_value(problem, b_t0)

    def one(i):
        eps, steps = ladder.epsilons[i], ladder.steps_for(i)
        rung = run_rung(problem, eps, steps, ladder.n_paths, rung_seed(seed, i), config,
                        g_target, b_t0)
        for o in range(outer_seeds):
            _, _, _, sol = _solve_rung(problem, eps, steps, outer_paths,
                                       rung_seed(seed, i, 1 + o), config, b_t0)
            rung.outer_quotients.append((sol.y0 - problem.y) / eps)
        if outer_seeds:
            dev = np.abs(np.array(rung.outer_quotients) - g_target)
            rung.outer_l1, rung.outer_max = float(dev.mean()), float(dev.max())
        if progress is not None:
            progress(rung)
        return rung

    idx = range(len(ladder.epsilons))
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=int(jobs)) as pool:
            rungs = list(pool.map(one, idx))
    else:
        rungs = [one(i) for i in idx]
    order = fitted_order([r.epsilon for r in rungs],
                         [abs(r.g_hat_driver - g_target) for r in rungs])
    inv = evaluate_invariants(rungs, g_target, order, problem.mode)
    summary = {"family": spec.name, "t": problem.t, "y": problem.y, "z": list(problem.z),
               "mode": problem.mode, "seed": int(seed), "n_paths": ladder.n_paths,
               "outer_seeds": outer_seeds, "outer_paths": outer_paths}
    return RepresentationReport(problem=summary, g_target=g_target, rungs=rungs,
                                fitted_order=order, invariants=inv,
                                compliance=[r.to_dict() for r in reports])
