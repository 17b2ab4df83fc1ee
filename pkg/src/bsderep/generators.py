"""Generators with stochastic growth data, assumption falsifiers and envelopes.

A generator is a vectorised callable ``g(t, b, y, z)`` where ``t`` is a time
(scalar or ``(n,)``), ``b`` the current Brownian position ``(n, d)``, ``y`` an
``(n,)`` array and ``z`` an ``(n, d)`` array.  Stochastic coefficients (the
growth processes ``f``, ``u`` and the dominator ``phi``) are Markov functionals
of ``(t, b)``; that is the only path information the simulation carries.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import GeneratorEvaluationError, ParameterError

Generator = Callable[..., np.ndarray]


@dataclass(frozen=True)
class StochasticDominator:
    """The family ``phi_t(omega, x)`` bounding the z-free part of ``|g|``.

    ``eval(t, b, x)`` returns an ``(n,)`` array; ``x`` is a scalar or ``(n,)``.
    """

    eval: Callable[..., np.ndarray]
    square_integrable_declared: bool = True
    hinf_declared: bool = True
    deterministic: bool = True

    def __call__(self, t, b, x):
        return np.asarray(self.eval(t, b, x), dtype=float)


def _const_process(value):
    def proc(t, b):
        return np.full(np.shape(b)[0], float(value))

    return proc


@dataclass(frozen=True)
class GeneratorSpec:
    """A generator together with its declared growth data.

    ``f_bound`` and ``u_bound`` are the declared values of the sup-norms of
    the time integrals of ``f`` and ``u`` over ``[0, horizon]``.
    """

    eval: Generator
    gamma: float
    h: Callable[[np.ndarray], np.ndarray]
    phi: StochasticDominator
    f_proc: Callable[..., np.ndarray] = field(default_factory=lambda: _const_process(0.0))
    u_proc: Callable[..., np.ndarray] = field(default_factory=lambda: _const_process(0.0))
    f_bound: float = 0.0
    u_bound: float = 0.0
    horizon: float = math.inf
    continuity_declared: bool = True
    name: str = "custom"
    kernel: tuple | None = None

    def __post_init__(self):
        if not self.gamma > 0:
            raise ParameterError(f"gamma must be positive, got {self.gamma}")
        for label, value in (("f_bound", self.f_bound), ("u_bound", self.u_bound)):
            if not (math.isfinite(value) and value >= 0):
                raise ParameterError(f"{label} must be a finite nonnegative real, got {value}")
        if not self.horizon > 0:
            raise ParameterError(f"horizon must be positive, got {self.horizon}")
        xs = np.linspace(0.0, 50.0, 201)
        hx = np.asarray(self.h(xs), dtype=float)
        if np.any(np.diff(hx) < -1e-12 * (1.0 + np.abs(hx[1:]))):
            raise ParameterError("h must be nondecreasing")

    def __call__(self, t, b, y, z):
        return self.eval(t, b, y, z)


# --------------------------------------------------------------------------
# sampling-based assumption falsifiers


@dataclass(frozen=True)
class DomainSample:
    t: np.ndarray
    b: np.ndarray
    y: np.ndarray
    z: np.ndarray

    def __len__(self):
        return self.y.shape[0]


@dataclass(frozen=True)
class DomainSampler:
    """Deterministic grid scan plus seeded random draws over the domain.

    The grid covers ``y`` in ``[-y_max, y_max]`` with ``grid_points`` nodes
    (so 0 and half-integers are hit for the defaults) against a small set of
    ``z`` values along the first axis, at ``t = 0`` and ``b = 0``.  Random
    draws take ``t`` uniform on ``[0, t_max]`` and ``b ~ N(0, t I)``.
    """

    d: int = 1
    y_max: float = 10.0
    z_max: float = 10.0
    t_max: float = 1.0
    grid_points: int = 41
    seed: int = 0

    def sample(self, n):
        ys = np.linspace(-self.y_max, self.y_max, self.grid_points)
        zs = np.linspace(-self.z_max, self.z_max, 9)
        gy, gz = np.meshgrid(ys, zs, indexing="ij")
        m = gy.size
        z_grid = np.zeros((m, self.d))
        z_grid[:, 0] = gz.ravel()
        rng = np.random.default_rng(self.seed)
        t_rand = rng.uniform(0.0, self.t_max, n)
        b_rand = rng.standard_normal((n, self.d)) * np.sqrt(t_rand)[:, None]
        y_rand = rng.uniform(-self.y_max, self.y_max, n)
        z_rand = rng.uniform(-self.z_max, self.z_max, (n, self.d))
        return DomainSample(
            t=np.concatenate([np.zeros(m), t_rand]),
            b=np.concatenate([np.zeros((m, self.d)), b_rand]),
            y=np.concatenate([gy.ravel(), y_rand]),
            z=np.concatenate([z_grid, z_rand]),
        )


@dataclass
class ComplianceReport:
    assumption: str
    n_samples: int
    violations: list = field(default_factory=list)

    @property
    def verdict(self):
        return "violated" if self.violations else "pass-at-sampled-points"

    @property
    def passed(self):
        return not self.violations

    def to_dict(self, max_violations=50):
        return {
            "assumption": self.assumption,
            "n_samples": self.n_samples,
            "n_violations": len(self.violations),
            "verdict": self.verdict,
            "violations": [
                {"t": v[0], "y": v[1], "z": list(v[2]), "lhs": v[3], "rhs": v[4]}
                for v in self.violations[:max_violations]
            ],
        }


def _finite_or_raise(values, sample, what):
    bad = ~np.isfinite(values)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise GeneratorEvaluationError(
            f"{what} is not finite at sample t={sample.t[i]!r}, y={sample.y[i]!r}, "
            f"z={sample.z[i].tolist()!r}"
        )
    return values


def _record(report, sample, mask, lhs, rhs):
    for i in np.flatnonzero(mask):
        report.violations.append(
            (float(sample.t[i]), float(sample.y[i]), tuple(float(v) for v in sample.z[i]),
             float(lhs[i]), float(rhs[i]))
        )


def _default_sampler(spec, sampler, d):
    if sampler is not None:
        return sampler
    t_max = spec.horizon if math.isfinite(spec.horizon) else 1.0
    return DomainSampler(d=d, t_max=t_max)


def check_h1(spec, sampler=None, n=4000, d=1):
    """Falsify ``sgn(y) g <= f_t + u_t |y| + gamma |z|^2`` at sampled points."""
    if n < 1:
        raise ParameterError("n must be at least 1")
    sample = _default_sampler(spec, sampler, d).sample(n)
    g = _finite_or_raise(np.asarray(spec.eval(sample.t, sample.b, sample.y, sample.z), float),
                         sample, "generator")
    f = _finite_or_raise(spec.f_proc(sample.t, sample.b), sample, "f process")
    u = _finite_or_raise(spec.u_proc(sample.t, sample.b), sample, "u process")
    zz = np.einsum("ij,ij->i", sample.z, sample.z)
    lhs = np.sign(sample.y) * g
    rhs = f + u * np.abs(sample.y) + spec.gamma * zz
    report = ComplianceReport("H1", len(sample))
    _record(report, sample, lhs > rhs + 1e-12 * (1.0 + np.abs(rhs)), lhs, rhs)
    return report


def check_h2(spec, sampler=None, n=4000, d=1):
    """Falsify ``|g| <= phi_t(|y|) + h(|y|)|z|^2`` and monotonicity of phi in x."""
    if n < 1:
        raise ParameterError("n must be at least 1")
    sample = _default_sampler(spec, sampler, d).sample(n)
    g = _finite_or_raise(np.asarray(spec.eval(sample.t, sample.b, sample.y, sample.z), float),
                         sample, "generator")
    ay = np.abs(sample.y)
    phi = _finite_or_raise(spec.phi(sample.t, sample.b, ay), sample, "phi")
    zz = np.einsum("ij,ij->i", sample.z, sample.z)
    lhs = np.abs(g)
    rhs = phi + np.asarray(spec.h(ay), float) * zz
    report = ComplianceReport("H2", len(sample))
    _record(report, sample, lhs > rhs + 1e-12 * (1.0 + rhs), lhs, rhs)
    # monotonicity of x -> phi_t(x) on sampled pairs x1 <= x2
    x2 = ay + np.abs(np.roll(sample.y, 1))
    phi2 = _finite_or_raise(spec.phi(sample.t, sample.b, x2), sample, "phi")
    _record(report, sample, phi > phi2 + 1e-12 * (1.0 + np.abs(phi2)), phi, phi2)
    return report


H3_LADDER = tuple(2.0 ** -k for k in range(4, 31, 2))


def check_h3(spec, sampler=None, n=2000, modulus_tolerance=1e-3, d=1):
    """Falsify continuity in (y, z) with a dyadic perturbation ladder.

    At each sample the change ``|g(y + s delta, z + s delta e) - g(y, z)|`` is
    computed for both signs ``s`` and every ``delta`` in ``H3_LADDER``; the
    point is flagged when, for either sign, the change never drops below
    ``modulus_tolerance`` anywhere on the ladder.
    """
    if n < 1:
        raise ParameterError("n must be at least 1")
    if not modulus_tolerance > 0:
        raise ParameterError("modulus_tolerance must be positive")
    sample = _default_sampler(spec, sampler, d).sample(n)
    base = _finite_or_raise(np.asarray(spec.eval(sample.t, sample.b, sample.y, sample.z), float),
                            sample, "generator")
    d = sample.z.shape[1]
    e = np.ones(d) / math.sqrt(d)
    worst = np.zeros(len(sample))
    for sign in (1.0, -1.0):
        change = np.full(len(sample), np.inf)
        for delta in H3_LADDER:
            step = sign * delta
            moved = np.asarray(
                spec.eval(sample.t, sample.b, sample.y + step, sample.z + step * e), float)
            moved = _finite_or_raise(moved, sample, "generator")
            change = np.minimum(change, np.abs(moved - base))
        worst = np.maximum(worst, change)
    report = ComplianceReport("H3", len(sample))
    _record(report, sample, worst > modulus_tolerance, worst,
            np.full(len(sample), modulus_tolerance))
    return report


# --------------------------------------------------------------------------
# truncation, envelope and the recentred generator


def truncate_qk(y_tilde, k):
    """``k * y / max(|y|, k)``, with ``q_0 = 0``."""
    if k < 0:
        raise ParameterError(f"truncation radius must be nonnegative, got {k}")
    y_tilde = np.asarray(y_tilde, dtype=float)
    if k == 0:
        return np.zeros_like(y_tilde)
    # exact identity inside the ball; k * y / |y| rounds, so clamp by sign outside
    return np.where(np.abs(y_tilde) <= k, y_tilde, k * np.sign(y_tilde))


@dataclass(frozen=True)
class GrowthEnvelope:
    K: float
    k: float
    B: float
    C: float
    z: np.ndarray
    phi: StochasticDominator
    hK: float

    def A(self, s, b, alive):
        """``1{s<tau} phi_s(K) + 2 h(K) |z|^2`` along paths."""
        alive = np.asarray(alive, dtype=bool)
        phi_k = self.phi(s, b, self.K)
        zz = float(self.z @ self.z)
        return np.where(alive, phi_k, 0.0) + 2.0 * self.hK * zz


def envelope_constants(y, z_norm, f_bound, u_bound):
    """Return ``(K, k)`` for the stopped construction."""
    scale = (abs(y) + z_norm + f_bound) * math.exp(u_bound)
    return 3.0 * scale, 2.0 * scale


def derive_envelope(spec, y, z):
    z = np.atleast_1d(np.asarray(z, dtype=float))
    values = [y, *z.tolist(), spec.f_bound, spec.u_bound]
    if not all(math.isfinite(v) for v in values):
        raise ParameterError("envelope inputs must be finite")
    z_norm = float(np.linalg.norm(z))
    K, k = envelope_constants(y, z_norm, spec.f_bound, spec.u_bound)
    hK = float(np.asarray(spec.h(np.array([K])), float)[0])
    B = 2.0 * hK
    C = math.sqrt(2.0 + 8.0 * hK * hK * z_norm * z_norm)
    return GrowthEnvelope(K=K, k=k, B=B, C=C, z=z, phi=spec.phi, hK=hK)


@dataclass(frozen=True)
class TransformedGenerator:
    """``1{s<tau} g(s, q_k(y~) + y + <z, B_{s^tau} - B_t>, z~ + z)``.

    Called as ``gt(s, disp, alive, y_tilde, z_tilde)`` with ``disp`` the
    stopped displacement ``(n, d)`` and ``b_t0`` the frozen position at ``t``.
    """

    spec: GeneratorSpec
    y: float
    z: np.ndarray
    envelope: GrowthEnvelope
    b_t0: np.ndarray

    def __call__(self, s, disp, alive, y_tilde, z_tilde):
        alive = np.asarray(alive, dtype=bool)
        y_arg = truncate_qk(y_tilde, self.envelope.k) + self.y + disp @ self.z
        val = np.asarray(self.spec.eval(s, self.b_t0 + disp, y_arg, z_tilde + self.z), float)
        return np.where(alive, val, 0.0)

    def bound(self, s, disp, alive, z_tilde):
        """Right-hand side ``A(s) + B |z~|^2``."""
        zz = np.einsum("ij,ij->i", z_tilde, z_tilde)
        return self.envelope.A(s, self.b_t0 + disp, alive) + self.envelope.B * zz


def build_transformed_generator(spec, y, z, envelope, b_t0=None):
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if b_t0 is None:
        b_t0 = np.zeros_like(z)
    return TransformedGenerator(spec, float(y), z, envelope, np.asarray(b_t0, float))


# --------------------------------------------------------------------------
# quadratic envelope decomposition


def _directions(d, count=32):
    if d == 1:
        return np.array([[1.0], [-1.0]])
    if d == 2:
        ang = 2.0 * np.pi * np.arange(count) / count
        return np.stack([np.cos(ang), np.sin(ang)], axis=1)
    # fixed-seed directions, first one pinned to e1
    rng = np.random.default_rng(20_240_601 + d)
    v = rng.standard_normal((count, d))
    v[0] = 0.0
    v[0, 0] = 1.0
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def ball_points(radius, d, radial_levels=10, splits=10, count=32):
    """Grid of ``(y, z)`` with ``|y| + |z|^2 <= radius``.

    The radial coordinate ``r = |y| + |z|^2`` runs over ``radial_levels + 1``
    equally spaced values in ``[0, radius]``; each level is split between
    ``|y|`` and ``|z|^2`` at ``splits + 1`` ratios, both signs of ``y`` and
    ``count`` directions of ``z``.
    """
    if radius <= 0:
        return np.zeros(1), np.zeros((1, d))
    r = np.linspace(0.0, radius, radial_levels + 1)
    lam = np.linspace(0.0, 1.0, splits + 1)
    dirs = _directions(d, count)
    rr, ll = np.meshgrid(r, lam, indexing="ij")
    ay = (ll * rr).ravel()
    az = np.sqrt(((1.0 - ll) * rr).ravel())
    ys = np.concatenate([ay, -ay])
    az2 = np.concatenate([az, az])
    yy = np.repeat(ys, dirs.shape[0])
    zz = (az2[:, None, None] * dirs[None, :, :]).reshape(-1, d)
    return yy, zz


@dataclass
class Lemma25Result:
    sup_term: float
    grid_step: float
    violations: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    @property
    def passed(self):
        return not self.violations


def lemma25_envelope(A, B, n, f, y_samples, z_samples):
    """Check ``|f| <= (n + B)(|y| + |z|^2) + sup_{ball(A/n)} |f|`` on samples.

    The supremum is a grid search (``ball_points``) with radial step
    ``A / (10 n)``.  Samples inside the ball whose ``|f|`` exceeds the grid
    supremum reveal under-resolution of the grid, not a failure of the bound,
    and are reported as warnings.
    """
    if A < 0 or B < 0:
        raise ParameterError("A and B must be nonnegative")
    if n < 1 or int(n) != n:
        raise ParameterError("n must be a positive integer")
    y_samples = np.asarray(y_samples, float)
    z_samples = np.atleast_2d(np.asarray(z_samples, float))
    d = z_samples.shape[1]
    radius = A / n
    by, bz = ball_points(radius, d)
    sup_term = float(np.max(np.abs(f(by, bz))))
    grid_step = radius / 10.0
    fs = np.abs(np.asarray(f(y_samples, z_samples), float))
    size = np.abs(y_samples) + np.einsum("ij,ij->i", z_samples, z_samples)
    rhs = (n + B) * size + sup_term
    bad = fs > rhs * (1.0 + 1e-12) + 1e-12
    result = Lemma25Result(sup_term=sup_term, grid_step=grid_step)
    inside = size <= radius
    for i in np.flatnonzero(bad & inside):
        msg = (f"grid supremum under-resolved (step {grid_step:.3e}): |f|={fs[i]:.6g} "
               f"exceeds grid sup {sup_term:.6g} inside the ball")
        result.warnings.append(msg)
    for i in np.flatnonzero(bad & ~inside):
        result.violations.append((float(y_samples[i]), z_samples[i].tolist(),
                                  float(fs[i]), float(rhs[i])))
    if result.warnings:
        warnings.warn(result.warnings[0], RuntimeWarning, stacklevel=2)
    return result


def gn_ball_sups(fn, radius_max, ns, d):
    """Grid suprema of ``|fn|`` over the nested balls of radius ``radius_max / n``.

    One absolute grid (built for the largest ball) is restricted to each ball,
    so the returned suprema are nonincreasing in ``n`` by construction.
    """
    by, bz = ball_points(radius_max, d, radial_levels=40, splits=20)
    vals = np.abs(np.asarray(fn(by, bz), float))
    size = np.abs(by) + np.einsum("ij,ij->i", bz, bz)
    out = []
    for n in ns:
        mask = size <= radius_max / n + 1e-15
        out.append(float(vals[mask].max()) if np.any(mask) else 0.0)
    return out
