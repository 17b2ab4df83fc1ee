"""Built-in generator families with their declared growth data.

Each factory returns a :class:`GeneratorSpec` whose ``f``, ``u``, ``phi`` and
``h`` are valid (H1)/(H2) data for the generator.  Families whose (H1) data
includes a nonzero ``f`` or ``u`` need a finite horizon for the integral norms
to be finite; they default to ``horizon = 1``.
"""

import math

import numpy as np

from . import _fallback as fb
from .errors import ParameterError
from .generators import GeneratorSpec, StochasticDominator


def _sq(z):
    return np.einsum("ij,ij->i", z, z)


def _const(value):
    value = float(value)

    def proc(t, b):
        return np.full(np.shape(b)[0], value)

    return proc


def _flat(value):
    value = float(value)
    return lambda x: np.full(np.shape(x), value) if np.ndim(x) else value


def _phi_const(value):
    value = float(value)
    return StochasticDominator(lambda t, b, x: np.full(np.shape(b)[0], value))


def _cubic_h1_constant():
    # max over y >= 0 of sin(y) - y^3, attained near y = 0.56
    y = np.linspace(0.0, 1.0, 200_001)
    return float(np.max(np.sin(y) - y ** 3)) + 1e-9


CUBIC_H1_CONSTANT = _cubic_h1_constant()


def zero(gamma=1.0, horizon=math.inf):
    return GeneratorSpec(
        eval=lambda t, b, y, z: np.zeros(np.shape(y)),
        gamma=gamma, h=_flat(gamma), phi=_phi_const(0.0), horizon=horizon,
        name="zero", kernel=(fb.FAMILY_ZERO, (0.0, 0.0, 0.0, 0.0)),
    )


def constant(c=1.0, gamma=1.0, horizon=1.0):
    c = float(c)
    return GeneratorSpec(
        eval=lambda t, b, y, z: np.full(np.shape(y), c),
        gamma=gamma, h=_flat(gamma), phi=_phi_const(abs(c)),
        f_proc=_const(abs(c)), f_bound=abs(c) * horizon, horizon=horizon,
        name="constant", kernel=(fb.FAMILY_CONSTANT, (c, 0.0, 0.0, 0.0)),
    )


def linear(a=0.0, b=0.0, c=0.0, gamma=0.5, horizon=1.0, d=1):
    """``g = a y + <b, z> + c``.

    ``|<b, z>| <= |b|^2 / (4 gamma) + gamma |z|^2`` supplies the quadratic
    growth data, so ``f = |c| + |b|^2 / (4 gamma)`` and ``u = |a|``.
    """
    a, c = float(a), float(c)
    bvec = np.broadcast_to(np.asarray(b, dtype=float), (d,)).copy()
    slack = abs(c) + float(bvec @ bvec) / (4.0 * gamma)
    kernel = (fb.FAMILY_LINEAR, (a, float(bvec[0]), c, 0.0)) if d == 1 else None
    return GeneratorSpec(
        eval=lambda t, bb, y, z: a * y + z @ bvec + c,
        gamma=gamma, h=_flat(gamma),
        phi=StochasticDominator(lambda t, bb, x: abs(a) * np.broadcast_to(x, (np.shape(bb)[0],))
                                + slack),
        f_proc=_const(slack), u_proc=_const(abs(a)),
        f_bound=slack * horizon, u_bound=abs(a) * horizon, horizon=horizon,
        name="linear", kernel=kernel,
    )


def pure_quadratic(gamma=0.5, horizon=math.inf):
    gamma = float(gamma)
    return GeneratorSpec(
        eval=lambda t, b, y, z: gamma * _sq(z),
        gamma=gamma, h=_flat(gamma), phi=_phi_const(0.0), horizon=horizon,
        name="pure-quadratic", kernel=(fb.FAMILY_QUADRATIC, (gamma, 0.0, 0.0, 0.0)),
    )


def _cubic_phi(t, b, x):
    x = np.broadcast_to(np.asarray(x, dtype=float), (np.shape(b)[0],))
    # |sin y| <= min(|y|, 1) and sin y >= 0 on [0, pi]
    small = np.maximum(x ** 3, np.minimum(x, 1.0))
    return np.where(x <= math.pi, small, x ** 3 + 1.0)


def cubic_damped(gamma=0.5, horizon=1.0):
    """``g = -y^3 + sin y + gamma |z|^2``."""
    gamma = float(gamma)
    return GeneratorSpec(
        eval=lambda t, b, y, z: -y ** 3 + np.sin(y) + gamma * _sq(z),
        gamma=gamma, h=_flat(gamma), phi=StochasticDominator(_cubic_phi),
        f_proc=_const(CUBIC_H1_CONSTANT), f_bound=CUBIC_H1_CONSTANT * horizon,
        horizon=horizon, name="cubic-damped",
        kernel=(fb.FAMILY_CUBIC, (gamma, 0.0, 0.0, 0.0)),
    )


def oscillatory(amp=1.0, gamma=0.5, horizon=1.0):
    """``g = amp sin y + cos z_1 + gamma |z|^2``."""
    amp, gamma = float(amp), float(gamma)
    level = abs(amp) + 1.0
    return GeneratorSpec(
        eval=lambda t, b, y, z: amp * np.sin(y) + np.cos(z[:, 0]) + gamma * _sq(z),
        gamma=gamma, h=_flat(gamma), phi=_phi_const(level),
        f_proc=_const(level), f_bound=level * horizon, horizon=horizon,
        name="oscillatory", kernel=(fb.FAMILY_OSCILLATORY, (amp, gamma, 0.0, 0.0)),
    )


def _capped_norm(b):
    return np.minimum(np.sqrt(np.einsum("ij,ij->i", b, b)), 1.0)


def stochastic_coefficient(gamma=0.5, amp=1.0, horizon=1.0):
    """``g = amp (|B_t| ^ 1)(1 + cos y) + gamma |z|^2``.

    The coefficient process ``|B_t| ^ 1`` makes ``f`` and ``phi`` genuinely
    path dependent, bounded by ``2 |amp|``.
    """
    gamma, amp = float(gamma), float(amp)

    def g(t, b, y, z):
        return amp * _capped_norm(b) * (1.0 + np.cos(y)) + gamma * _sq(z)

    def f_proc(t, b):
        return 2.0 * abs(amp) * _capped_norm(b)

    phi = StochasticDominator(lambda t, b, x: 2.0 * abs(amp) * _capped_norm(b),
                              deterministic=False)
    return GeneratorSpec(
        eval=g, gamma=gamma, h=_flat(gamma), phi=phi,
        f_proc=f_proc, f_bound=2.0 * abs(amp) * horizon, horizon=horizon,
        name="stochastic-coefficient", kernel=(fb.FAMILY_STOCHASTIC, (gamma, amp, 0.0, 0.0)),
    )


def y_squared(horizon=1.0):
    """Negative control: ``g = y^2`` declared with ``f = u = gamma = 1``."""
    return GeneratorSpec(
        eval=lambda t, b, y, z: y * y,
        gamma=1.0, h=_flat(1.0),
        phi=StochasticDominator(lambda t, b, x: np.broadcast_to(np.asarray(x, float) ** 2,
                                                                (np.shape(b)[0],))),
        f_proc=_const(1.0), u_proc=_const(1.0), f_bound=horizon, u_bound=horizon,
        horizon=horizon, name="y-squared", kernel=(fb.FAMILY_Y_SQUARED, (0.0, 0.0, 0.0, 0.0)),
    )


FAMILIES = {
    "zero": zero,
    "constant": constant,
    "linear": linear,
    "pure-quadratic": pure_quadratic,
    "cubic-damped": cubic_damped,
    "oscillatory": oscillatory,
    "stochastic-coefficient": stochastic_coefficient,
    "y-squared": y_squared,
}


def make_generator(family, d=1, **params):
    """Instantiate a built-in family by name."""
    try:
        factory = FAMILIES[family]
    except KeyError:
        raise ParameterError(
            f"unknown generator family {family!r}; choose from {sorted(FAMILIES)}") from None
    if family == "linear":
        params.setdefault("d", d)
    spec = factory(**params)
    if d != 1 and spec.kernel is not None:
        # the finite-difference kernel is scalar only
        spec = _replace_kernel(spec, None)
    return spec


def _replace_kernel(spec, kernel):
    from dataclasses import replace

    return replace(spec, kernel=kernel)
