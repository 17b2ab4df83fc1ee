import math

import numpy as np
import pytest

from bsderep.errors import GeneratorEvaluationError, ParameterError
from bsderep.families import FAMILIES, make_generator
from bsderep.generators import (GeneratorSpec, StochasticDominator, build_transformed_generator,
                                check_h1, check_h2, check_h3, derive_envelope,
                                envelope_constants, lemma25_envelope, truncate_qk)


def _custom(g, gamma=1.0, phi=0.0, h=None, f=0.0, u=0.0):
    return GeneratorSpec(
        eval=g, gamma=gamma, h=h or (lambda x: np.full(np.shape(x), float(gamma))),
        phi=StochasticDominator(lambda t, b, x: np.full(np.shape(b)[0], float(phi))),
        f_proc=lambda t, b: np.full(np.shape(b)[0], f),
        u_proc=lambda t, b: np.full(np.shape(b)[0], u))


def _zz(z):
    return np.einsum("ij,ij->i", z, z)


class TestChecks:
    def test_h1_quadratic_passes(self):
        assert check_h1(make_generator("pure-quadratic")).passed

    def test_h1_cubic_sign(self):
        spec = _custom(lambda t, b, y, z: -y ** 3 + 0.5 * _zz(z), gamma=0.5)
        assert check_h1(spec).passed

    def test_h1_y_squared_violated(self):
        report = check_h1(make_generator("y-squared"))
        assert report.verdict == "violated"
        hits = [(y, lhs, rhs) for (_, y, z, lhs, rhs) in report.violations
                if y == 5.0 and not any(z)]
        assert hits and hits[0][1] == 25.0 and hits[0][2] == 6.0

    def test_h2_cases(self):
        assert check_h2(make_generator("pure-quadratic")).passed
        sin_spec = _custom(lambda t, b, y, z: np.sin(y) + _zz(z), phi=1.0)
        assert check_h2(sin_spec).passed
        double = _custom(lambda t, b, y, z: 2 * _zz(z))
        report = check_h2(double)
        assert not report.passed
        assert any(abs(np.linalg.norm(v[2]) - 1.25) < 1e-12 or np.linalg.norm(v[2]) > 0
                   for v in report.violations)

    def test_h3_cases(self):
        assert check_h3(make_generator("pure-quadratic")).passed
        assert check_h3(make_generator("linear", a=1.0, b=2.0, c=0.5)).passed
        sign = _custom(lambda t, b, y, z: np.sign(y))
        report = check_h3(sign)
        assert not report.passed
        assert any(v[1] == 0.0 for v in report.violations)

    @pytest.mark.parametrize("family", sorted(set(FAMILIES) - {"y-squared"}))
    def test_builtins_conform(self, family):
        for d in (1, 2):
            spec = make_generator(family, d=d)
            assert check_h1(spec, d=d).passed
            assert check_h2(spec, d=d).passed
            assert check_h3(spec, d=d).passed

    def test_nonfinite(self):
        spec = _custom(lambda t, b, y, z: np.where(y > 9, np.nan, 0.0))
        with pytest.raises(GeneratorEvaluationError, match="y="):
            check_h1(spec)

    def test_report_dict(self):
        d = check_h1(make_generator("y-squared")).to_dict(max_violations=3)
        assert d["verdict"] == "violated" and len(d["violations"]) == 3

    def test_bad_n(self):
        with pytest.raises(ParameterError):
            check_h1(make_generator("zero"), n=0)


class TestEnvelope:
    def test_truncation_examples(self):
        assert truncate_qk(2.0, 3.0) == 2.0
        assert truncate_qk(5.0, 3.0) == 3.0
        assert truncate_qk(-7.0, 3.0) == -3.0
        assert truncate_qk(4.0, 0.0) == 0.0
        with pytest.raises(ParameterError):
            truncate_qk(1.0, -1.0)

    def test_constants(self):
        assert envelope_constants(1.0, 2.0, 0.0, 0.0) == (9.0, 6.0)
        assert envelope_constants(0.0, 0.0, 0.0, 0.0) == (0.0, 0.0)
        K, k = envelope_constants(1.0, 1.0, 0.0, math.log(2))
        assert K == pytest.approx(12.0) and k == pytest.approx(8.0)

    def test_derived_envelope(self):
        spec = make_generator("pure-quadratic", gamma=0.5)
        env = derive_envelope(spec, 1.0, [2.0])
        assert (env.K, env.k, env.B) == (9.0, 6.0, 1.0)
        assert env.C == pytest.approx(math.sqrt(2 + 8 * 0.25 * 4))
        alive = np.array([True, False])
        assert np.allclose(env.A(0.0, np.zeros((2, 1)), alive), 4.0)

    def test_zero_envelope(self):
        spec = _custom(lambda t, b, y, z: np.cos(y) + _zz(z), phi=1.0)
        env = derive_envelope(spec, 0.0, [0.0])
        assert env.K == env.k == 0.0
        a = env.A(0.0, np.zeros((2, 1)), np.array([True, False]))
        assert np.allclose(a, [1.0, 0.0])

    def test_nonfinite_input(self):
        with pytest.raises(ParameterError):
            derive_envelope(make_generator("zero"), math.inf, [0.0])

    def test_transformed_generator_examples(self):
        zero = make_generator("zero")
        env = derive_envelope(zero, 1.0, [1.0])
        gt = build_transformed_generator(zero, 1.0, [1.0], env)
        out = gt(0.0, np.zeros((3, 1)), np.ones(3, bool), np.ones(3), np.ones((3, 1)))
        assert np.all(out == 0)
        quad = make_generator("pure-quadratic", gamma=0.5)
        env = derive_envelope(quad, 0.0, [0.0])
        gt = build_transformed_generator(quad, 0.0, [0.0], env)
        zt = np.array([[1.0], [2.0]])
        out = gt(0.0, np.zeros((2, 1)), np.array([True, False]), np.zeros(2), zt)
        assert np.allclose(out, [0.5, 0.0])

    def test_spec_validation(self):
        with pytest.raises(ParameterError):
            _custom(lambda *a: 0, gamma=0.0)
        with pytest.raises(ParameterError):
            _custom(lambda *a: 0, h=lambda x: -np.asarray(x))


class TestLemma25Examples:
    def test_constant(self):
        r = lemma25_envelope(2.0, 0.0, 3, lambda y, z: np.full(np.shape(y), 2.0),
                             np.linspace(-5, 5, 11), np.zeros((11, 1)))
        assert r.passed and r.sup_term == 2.0

    def test_degenerate_ball(self):
        ys = np.linspace(-3, 3, 7)
        zs = np.linspace(-2, 2, 7)[:, None]
        r = lemma25_envelope(0.0, 1.5, 2, lambda y, z: 1.5 * _zz(z), ys, zs)
        assert r.passed and r.sup_term == 0.0

    def test_bad_inputs(self):
        with pytest.raises(ParameterError):
            lemma25_envelope(-1.0, 0.0, 1, lambda y, z: y, [0.0], [[0.0]])
        with pytest.raises(ParameterError):
            lemma25_envelope(1.0, 0.0, 0, lambda y, z: y, [0.0], [[0.0]])


class TestFamilies:
    def test_unknown(self):
        with pytest.raises(ParameterError):
            make_generator("cubic")

    def test_kernel_dropped_in_higher_dimension(self):
        assert make_generator("pure-quadratic").kernel is not None
        assert make_generator("pure-quadratic", d=3).kernel is None

    def test_values(self):
        b = np.zeros((2, 1))
        y = np.array([0.0, 1.0])
        z = np.array([[0.0], [2.0]])
        assert np.allclose(make_generator("cubic-damped").eval(0, b, y, z),
                           [0.0, -1 + math.sin(1) + 2])
        assert np.allclose(make_generator("oscillatory").eval(0, b, y, z),
                           [1.0, math.sin(1) + math.cos(2) + 2])
        st = make_generator("stochastic-coefficient")
        bb = np.array([[0.5], [-3.0]])
        assert np.allclose(st.eval(0, bb, y, z), [0.5 * 2, (1 + math.cos(1)) + 2])
        assert not st.phi.deterministic
