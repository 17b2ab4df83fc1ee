import subprocess
import sys

import numpy as np
import pytest

from bsderep import _fallback, kernels

try:
    from bsderep import _kernels as compiled
except ImportError:  # pragma: no cover
    compiled = None

needs_compiled = pytest.mark.skipif(compiled is None, reason="compiled kernels not built")

FROZEN = [[-0.7828173373676475, 0.09215985040060122, -0.8021110947666973],
          [0.5044542635147111, -1.6222125346964897, -0.6164451291747256]]


def test_backend_reported():
    assert kernels.BACKEND in ("cython", "python")


@pytest.mark.parametrize("backend", ["python", "cython"])
def test_normal_block_frozen(backend):
    if backend == "cython" and compiled is None:
        pytest.skip("compiled kernels not built")
    mod = compiled if backend == "cython" else _fallback
    assert np.allclose(mod.normal_block(7, 0, 2, 3), FROZEN, rtol=0, atol=1e-14)


def test_counter_based_streams():
    whole = _fallback.normal_block(5, 0, 10, 4)
    part = _fallback.normal_block(5, 6, 4, 4)
    assert np.array_equal(whole[6:], part)
    assert not np.array_equal(whole, _fallback.normal_block(6, 0, 10, 4))


def test_odd_draw_count_is_prefix():
    assert np.array_equal(_fallback.normal_block(1, 0, 3, 5), _fallback.normal_block(1, 0, 3, 6)[:, :5])


def test_normal_moments():
    z = _fallback.normal_block(0, 0, 100_000, 2).ravel()
    assert abs(z.mean()) < 4 / np.sqrt(z.size)
    assert abs(z.var() - 1) < 5 * np.sqrt(2 / z.size)


@needs_compiled
def test_normal_block_agreement():
    a = _fallback.normal_block(123, 17, 3000, 33)
    b = compiled.normal_block(123, 17, 3000, 33)
    assert np.allclose(a, b, rtol=0, atol=1e-12)


@needs_compiled
@pytest.mark.parametrize("d", [1, 3])
def test_first_passage_agreement(d):
    inc = _fallback.normal_block(4, 0, 5000, 40 * d).reshape(5000, 40, d) * np.sqrt(0.01)
    phi2 = np.abs(_fallback.normal_block(9, 0, 5000, 40))
    a = _fallback.first_passage(np.ascontiguousarray(inc), phi2, 0.01)
    b = compiled.first_passage(np.ascontiguousarray(inc), phi2, 0.01)
    assert np.array_equal(np.asarray(a), np.asarray(b))


@needs_compiled
@pytest.mark.parametrize("code,params", [(2, (1.0, 0.5, 0.2, 0.0)), (3, (0.5, 0, 0, 0)),
                                         (4, (0.5, 0, 0, 0)), (5, (1.0, 0.5, 0, 0)),
                                         (6, (0.5, 1.0, 0, 0))])
def test_pde_march_agreement(code, params):
    x = np.linspace(-1, 1, 41)
    barrier = np.linspace(1.0, 0.9, 201)
    outs = []
    for mod in (_fallback, compiled):
        u = 1.0 + 0.5 * x
        outs.append(np.asarray(mod.pde_march(u, x, 2e-4, 0.04, 200, barrier, 1.0, 0.5, 0.1,
                                             code, params, 50)))
    assert np.allclose(outs[0], outs[1], rtol=0, atol=1e-12)


def test_pure_python_switch():
    code = "import bsderep.kernels as k; print(k.BACKEND)"
    out = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True,
                         env={"BSDEREP_PURE_PYTHON": "1", "PATH": ""}, check=True)
    assert out.stdout.strip() == "python"


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernels.backend_module("fortran")
