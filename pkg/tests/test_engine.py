import math

import numpy as np
import pytest

from bsderep.engine import (PathBatch, dump_batch, hitting_time, load_batch, make_grid,
                            phi_at_K, reflection_bound, sample_brownian, stopped_terminal)
from bsderep.errors import ParameterError
from bsderep.families import make_generator


def _batch(increments, eps=0.1):
    inc = np.asarray(increments, float)
    grid = make_grid(0.0, eps, inc.shape[1])
    return PathBatch(d=inc.shape[2], grid=grid, increments=inc, seed=0)


class TestGrid:
    def test_nodes(self):
        assert np.allclose(make_grid(0, 0.5, 2).nodes, [0, 0.25, 0.5])
        assert np.allclose(make_grid(0, 1, 1).nodes, [0, 1])

    @pytest.mark.parametrize("eps,horizon", [(1.5, math.inf), (0.0, 1.0), (0.6, 0.5)])
    def test_range(self, eps, horizon):
        with pytest.raises(ParameterError, match=r"\(T - t0\) \^ 1"):
            make_grid(0.0, eps, 4, horizon=horizon)

    def test_offset_window(self):
        with pytest.raises(ParameterError):
            make_grid(0.7, 0.5, 4, horizon=1.0)
        assert make_grid(0.5, 0.5, 4, horizon=1.0).t_end == 1.0


class TestSampling:
    def test_moments(self):
        grid = make_grid(0, 0.25, 8)
        b = sample_brownian(grid, 2, 42, 20_000)
        inc = b.increments.reshape(-1, 2)
        n = inc.shape[0]
        assert np.all(np.abs(inc.mean(axis=0)) < 4 * math.sqrt(grid.dt / n))
        se_var = grid.dt * math.sqrt(2.0 / n)
        assert np.all(np.abs(inc.var(axis=0) - grid.dt) < 5 * se_var)

    def test_determinism(self):
        grid = make_grid(0, 0.1, 5)
        a = sample_brownian(grid, 1, 9, 1)
        b = sample_brownian(grid, 1, 9, 1)
        assert np.array_equal(a.increments, b.increments)

    def test_path_start_slices(self):
        grid = make_grid(0, 0.1, 5)
        whole = sample_brownian(grid, 2, 3, 100)
        tail = sample_brownian(grid, 2, 3, 40, path_start=60)
        assert np.array_equal(whole.increments[60:], tail.increments)

    def test_displacement_is_cumsum(self):
        b = sample_brownian(make_grid(0, 0.1, 6), 3, 1, 10)
        assert np.allclose(b.displacement[:, 1:], np.cumsum(b.increments, axis=1))
        assert np.all(b.displacement[:, 0] == 0)

    def test_immutable(self):
        b = sample_brownian(make_grid(0, 0.1, 2), 1, 1, 3)
        with pytest.raises(ValueError):
            b.increments[0, 0, 0] = 1.0

    def test_frozen_prefix(self):
        b = sample_brownian(make_grid(0.5, 0.1, 2, horizon=1.0), 2, 1, 3)
        assert b.b_t0.shape == (2,) and np.any(b.b_t0 != 0)
        assert np.allclose(b.positions(0), b.b_t0)


class TestHitting:
    def test_pure_integral_crossing(self):
        b = _batch(np.zeros((1, 10, 1)))
        # phi^2 = 1 / delta with delta = 0.05: the integral reaches 1 at node 5
        out = hitting_time(b, np.full((1, 10), math.sqrt(1 / 0.05)))
        assert out.tau_index[0] == 5
        assert out.grid.nodes[out.tau_index[0]] >= 0.05 - 1e-12

    def test_never_stopped(self):
        inc = np.zeros((1, 6, 1))
        inc[0, 0, 0] = 0.3
        out = hitting_time(_batch(inc), np.zeros((1, 6)))
        assert out.tau_index[0] == out.never_stopped == 7
        assert out.stop_frequency() == 0.0

    def test_forced_crossing(self):
        inc = np.zeros((1, 6, 1))
        inc[0, 2, 0] = 1.2
        out = hitting_time(_batch(inc), np.zeros((1, 6)))
        assert out.tau_index[0] == 3
        assert out.alive[0].tolist() == [True, True, True, False, False, False]

    def test_negative_phi_rejected(self):
        with pytest.raises(ParameterError):
            hitting_time(_batch(np.zeros((1, 2, 1))), -np.ones((1, 2)))

    def test_unresolved(self):
        with pytest.raises(ParameterError):
            _batch(np.zeros((1, 2, 1))).alive

    def test_phi_at_K_stochastic(self):
        spec = make_generator("stochastic-coefficient")
        b = sample_brownian(make_grid(0, 0.1, 4), 1, 2, 50)
        vals = phi_at_K(b, spec.phi, 3.0)
        assert vals.shape == (50, 4)
        assert np.allclose(vals[:, 0], 0.0)
        assert np.allclose(vals, 2 * np.minimum(np.abs(b.displacement[:, :4, 0]), 1))

    def test_reflection_frequency(self):
        grid = make_grid(0, 2.0 ** -6, 32)
        b = sample_brownian(grid, 1, 0, 100_000)
        b = hitting_time(b, np.zeros((1, 32)))
        assert b.stop_frequency() < 1e-4
        assert reflection_bound(1, 2.0 ** -6) == pytest.approx(2 * math.exp(-32))


class TestTerminal:
    def test_zero_z(self):
        b = hitting_time(sample_brownian(make_grid(0, 0.1, 4), 2, 1, 20), np.zeros((1, 4)))
        assert np.all(stopped_terminal(b, 0.4, [0, 0]).xi == 0.4)

    def test_inner_product(self):
        inc = np.zeros((1, 3, 1))
        inc[0, 1, 0] = 0.3
        b = hitting_time(_batch(inc), np.zeros((1, 3)))
        assert stopped_terminal(b, 1.0, 2.0).xi[0] == pytest.approx(1.6)

    def test_frozen_at_stop(self):
        inc = np.zeros((1, 4, 1))
        inc[0, 0, 0] = 0.4
        inc[0, 1, 0] = 0.7  # reaches 1.1 at node 2 and overshoots by 0.1
        inc[0, 2, 0] = -0.9
        b = hitting_time(_batch(inc), np.zeros((1, 4)))
        term = stopped_terminal(b, 0.0, 1.0)
        assert b.tau_index[0] == 2
        assert term.xi[0] == pytest.approx(1.0)
        assert term.overshoot[0] == pytest.approx(0.1)
        assert b.displacement[0, -1, 0] == pytest.approx(0.2)

    def test_terminal_bound(self):
        b = hitting_time(sample_brownian(make_grid(0, 0.5, 8), 3, 5, 5000), np.zeros((1, 8)))
        z = np.array([1.0, -2.0, 0.5])
        term = stopped_terminal(b, 0.3, z)
        assert np.all(np.abs(term.xi - 0.3) <= np.linalg.norm(z) + 1e-12)
        assert term.sup_norm <= 0.3 + np.linalg.norm(z) + 1e-12

    def test_dimension_mismatch(self):
        b = hitting_time(sample_brownian(make_grid(0, 0.1, 2), 2, 1, 2), np.zeros((1, 2)))
        with pytest.raises(ParameterError):
            stopped_terminal(b, 0.0, [1.0])


def test_csv_round_trip(tmp_path):
    grid = make_grid(0, 0.1, 3)
    b = sample_brownian(grid, 2, 8, 4, path_start=10)
    path = tmp_path / "batch.csv"
    dump_batch(b, path)
    back = load_batch(path, grid, seed=8)
    assert back.path_start == 10
    assert np.array_equal(back.increments, b.increments)
