from dataclasses import replace

import numpy as np
import pytest

from bsderep.errors import CFLError, ParameterError
from bsderep.families import make_generator
from bsderep.oracles import linear_closed_form, quadratic_closed_form
from bsderep.pde import required_steps, solve_pde_1d


def test_constant_terminal():
    sol = solve_pde_1d(make_generator("zero"), 0.7, 0.0, 0.1, nx=51)
    assert np.allclose(sol.values, 0.7)
    assert sol(0.05, 0.3) == pytest.approx(0.7)


def test_symmetry():
    sol = solve_pde_1d(make_generator("zero"), 0.4, 1.3, 0.2, nx=101)
    assert sol.y0 == pytest.approx(0.4, abs=1e-12)


def test_quadratic_frozen_and_close():
    sol = solve_pde_1d(make_generator("pure-quadratic"), 1.0, 2.0, 0.1, nx=101,
                       stop_on_phi=False)
    assert sol.y0 == pytest.approx(1.1997221186748994, rel=1e-12)
    assert abs(sol.y0 - quadratic_closed_form(0.5, 1.0, [2.0], 0.1)) < 2e-3


def test_linear_close():
    spec = make_generator("linear", a=-1.0, b=1.0, c=2.0)
    sol = solve_pde_1d(spec, 1.0, 0.5, 0.1, stop_on_phi=False)
    assert abs(sol.y0 - linear_closed_form(-1, 1, 2, 1.0, 0.5, 0.1)) < 1e-3


def test_python_generator_matches_kernel():
    spec = make_generator("cubic-damped", horizon=0.125)
    a = solve_pde_1d(spec, 0.1, 0.2, 0.1, nx=61)
    b = solve_pde_1d(replace(spec, kernel=None), 0.1, 0.2, 0.1, nx=61)
    assert a.y0 == pytest.approx(b.y0, abs=1e-12)


def test_barrier_moves_with_phi():
    sol = solve_pde_1d(make_generator("oscillatory"), 1.0, 1.0, 0.05, nx=41)
    assert sol.barrier[0] == 1.0 and sol.barrier[-1] == pytest.approx(1 - 4 * 0.05)


def test_cfl_refusal():
    need = required_steps(0.1, 101, 0.5, 2.0)
    with pytest.raises(CFLError) as info:
        solve_pde_1d(make_generator("pure-quadratic"), 1.0, 2.0, 0.1, nx=101, steps=need - 1)
    assert info.value.required_steps == need


def test_rejections():
    with pytest.raises(ParameterError):
        solve_pde_1d(make_generator("stochastic-coefficient"), 1.0, 1.0, 0.1)
    with pytest.raises(ParameterError):
        solve_pde_1d(make_generator("zero"), 1.0, 1.0, 0.1, nx=50)
