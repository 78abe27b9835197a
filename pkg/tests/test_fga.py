import logging

import numpy as np
import pytest

from calsim.errors import ConfigError, SingularZError
from calsim.fga import (SpatialGrid, TrajectoryState, axis_points, build_grid, default_y_grid, evaluate_psi_k,
                        evolve, initial_overlap, psi_prefactor, rhs, rk4_step, trajectory_energy)
from calsim.oracle import exact_quadratic_evolution, gaussian_overlap_analytic
from calsim.potentials import DoubleWell, Harmonic, Potential
from calsim.wavefunctions import GaussianPacket

EPS = 1 / 64


class Free(Potential):
    kind = "free"

    def value(self, x):
        x = self._check(x)
        return np.zeros(x.shape[:-1])

    def derivatives(self, x):
        x = self._check(x)
        return np.zeros_like(x), np.zeros(x.shape + (x.shape[-1],))


# ---------------------------------------------------------------- grids


def test_paper_grid_count_1d():
    grid = build_grid([(-2, 2)], [(-2, 2)], 1 / 32, 1 / 32)
    assert grid.size == 129 * 129 == 16641


def test_double_slit_grid_count():
    grid = build_grid([(-1.5, 1.5), (7, 9)], [(-2, 2), (-2, 0)], 1 / 16, 1 / 16)
    assert grid.size == 49 * 33 * 65 * 33


def test_weights_sum_is_node_count_times_cell():
    # each node carries the full cell (dp dq)^D, so the sum exceeds the box volume by the boundary layer
    grid = build_grid([(-2, 2)], [(-1, 1)], 0.5, 0.25)
    assert np.sum(grid.weights) == pytest.approx(9 * 9 * 0.125)
    assert np.all(grid.weights == 0.125)


def test_grid_ordering_and_subset():
    grid = build_grid([(0, 1)], [(0, 2)], 1.0, 1.0)
    assert grid.p[:, 0].tolist() == [0, 0, 0, 1, 1, 1]
    assert grid.q[:, 0].tolist() == [0, 1, 2, 0, 1, 2]
    sub = grid.subset(slice(2, 4))
    assert sub.size == 2 and sub.q[:, 0].tolist() == [2, 0]


@pytest.mark.parametrize("lo, hi, step", [(0, 1, 0.3), (1, 0, 0.1), (0, 1, 0.0)])
def test_axis_points_errors(lo, hi, step):
    with pytest.raises(ConfigError):
        axis_points(lo, hi, step)


def test_build_grid_dimension_mismatch():
    with pytest.raises(ConfigError):
        build_grid([(0, 1)], [(0, 1), (0, 1)], 0.5, 0.5)


def test_default_y_grid_covers_window():
    y = default_y_grid([(-2, 2)], 1 / 32, EPS)
    ax = y.axes[0]
    assert ax[0] <= -2 - 6 * np.sqrt(EPS) and ax[-1] >= 2 + 6 * np.sqrt(EPS)
    assert y.steps[0] == pytest.approx(1 / 32)


# ---------------------------------------------------------------- dynamics


def test_harmonic_amplitude_closed_form():
    for D in (1, 2):
        p = np.array([[0.3] * D, [-1.0] * D])
        q = np.array([[0.5] * D, [0.0] * D])
        t, n = 1.0, 1000
        hist = evolve(p, q, Harmonic(D), n, t / n)
        expected = 2 ** (D / 2) * np.exp(-1j * D * t / 2)
        assert np.max(np.abs(hist.final.a - expected)) <= 1e-10
        assert np.allclose(np.abs(hist.final.a), 2 ** (D / 2), atol=1e-10)
        det = np.linalg.det(hist.final.Z)
        assert np.allclose(det, 2**D * np.exp(-1j * D * t), atol=1e-9)


def test_free_particle():
    p = np.array([[0.7, -0.2]])
    q = np.array([[0.1, 0.4]])
    t, n = 2.0, 200
    hist = evolve(p, q, Free(2), n, t / n)
    fin = hist.final
    assert np.allclose(fin.P, p, atol=0)
    assert np.allclose(fin.Q, q + p * t, atol=1e-13)
    assert np.allclose(fin.dzP, -1j * np.eye(2), atol=0)
    assert fin.S[0] == pytest.approx(np.sum(p**2) * t / 2, rel=1e-13)
    # Z = (2 - i t) I and d(ln a)/dt = (D/2) (-i)/(2 - i t), so a^2 = (2 - i t)^D
    assert fin.a[0] ** 2 == pytest.approx((2 - 1j * t) ** 2, rel=1e-10)


def test_harmonic_position_accuracy():
    omega = 1.0
    hist = evolve(np.array([[0.0]]), np.array([[1.0]]), Harmonic(1, omega=omega), 3000, 1e-3)
    t = np.arange(3001) * 1e-3
    assert np.max(np.abs(hist.q_samples[:, 0, 0] - np.cos(omega * t))) <= 1e-8


def test_richardson_local_error_order():
    pot = DoubleWell(1)
    y0 = TrajectoryState.initial(np.array([[0.4]]), np.array([[0.8]])).astuple()

    def gap(h):
        one, _ = rk4_step(y0, pot, h)
        half, _ = rk4_step(y0, pot, h / 2)
        two, _ = rk4_step(half, pot, h / 2)
        return np.hypot(one[0][0, 0] - two[0][0, 0], one[1][0, 0] - two[1][0, 0])

    ratio = gap(0.04) / gap(0.02)
    assert 25 < ratio < 40  # 2^5 = 32


def test_zero_steps_returns_initial_state():
    p = np.array([[1.0], [2.0]])
    q = np.array([[0.0], [-1.0]])
    hist = evolve(p, q, Harmonic(1), 0, 0.1)
    assert hist.n_steps == 0 and hist.q_samples.shape == (1, 2, 1)
    assert np.array_equal(hist.final.P, p) and np.array_equal(hist.final.Q, q)
    assert np.all(hist.final.S == 0) and not hist.dropped.any()


def test_negative_steps_rejected():
    with pytest.raises(ConfigError):
        evolve(np.zeros((1, 1)), np.zeros((1, 1)), Harmonic(1), -1, 0.1)


def test_energy_conservation_double_well():
    rng = np.random.default_rng(11)
    p = rng.uniform(-1, 1, (50, 1))
    q = rng.uniform(-1, 1, (50, 1))
    pot = DoubleWell(1)
    e0 = trajectory_energy(TrajectoryState.initial(p, q), pot)
    hist = evolve(p, q, pot, 1000, 1e-3)
    e1 = trajectory_energy(hist.final, pot)
    assert np.max(np.abs(e1 - e0) / np.maximum(np.abs(e0), 1e-3)) <= 1e-8


def test_singular_Z_signalled():
    state = TrajectoryState.initial(np.zeros((3, 1)), np.zeros((3, 1)))
    state.dzP[1] = 1j * np.eye(1)  # Z = dzQ + i dzP = 0
    with pytest.raises(SingularZError) as info:
        rhs(state, Harmonic(1))
    assert info.value.trajectory_ids == [1]
    _, singular = rk4_step(state.astuple(), Harmonic(1), 1e-3)
    assert singular.tolist() == [False, True, False]


# ---------------------------------------------------------------- wave packets


def test_overlap_quadrature_matches_closed_form():
    rng = np.random.default_rng(4)
    packet = GaussianPacket(EPS, 1, center=0.2, momentum=-0.3, width=1.5)
    # points where the overlap is not negligible: relative accuracy is meaningful there
    p = rng.uniform(-0.6, 0.0, (20, 1))
    q = rng.uniform(-0.1, 0.5, (20, 1))
    y = default_y_grid([(-1, 1)], 1 / 32, EPS)
    num = initial_overlap(p, q, packet(y.points()), y, EPS)
    exact = gaussian_overlap_analytic(p, q, packet, EPS)
    assert np.max(np.abs(num - exact) / np.abs(exact)) <= 1e-8


def test_overlap_quadrature_uniform_error_over_grid():
    packet = GaussianPacket(EPS, 1, center=0.2, momentum=-0.3, width=1.5)
    grid = build_grid([(-2, 2)], [(-2, 2)], 1 / 8, 1 / 8)
    # the y-step must resolve the oscillation exp(i p y / eps) for every |p| in the box
    y = SpatialGrid.from_ranges([-3.5], [3.5], [1 / 64])
    num = initial_overlap(grid.p, grid.q, packet(y.points()), y, EPS)
    exact = gaussian_overlap_analytic(grid.p, grid.q, packet, EPS)
    assert np.max(np.abs(num - exact)) <= 1e-8 * np.max(np.abs(exact))


def test_overlap_quadrature_matches_closed_form_2d():
    rng = np.random.default_rng(9)
    packet = GaussianPacket(EPS, 2, center=[0.1, -0.1], momentum=[0.5, 0.0])
    p = rng.uniform(-0.2, 0.2, (6, 2)) + np.array([0.5, 0.0])
    q = rng.uniform(-0.2, 0.2, (6, 2)) + np.array([0.1, -0.1])
    y = default_y_grid([(-0.5, 0.5)] * 2, 1 / 32, EPS)
    num = initial_overlap(p, q, packet(y.points()), y, EPS)
    exact = gaussian_overlap_analytic(p, q, packet, EPS)
    assert np.max(np.abs(num - exact) / np.abs(exact)) <= 1e-8


def test_window_outside_grid_warns(caplog):
    hist = evolve(np.zeros((1, 1)), np.array([[1.0]]), Harmonic(1), 0, 0.1)
    y = SpatialGrid.from_ranges([-1], [1], [1 / 64])
    psi0 = GaussianPacket(EPS)
    with caplog.at_level(logging.WARNING, logger="calsim.fga"):
        psi_prefactor(hist, psi0(y.points()), y, EPS)
    assert "outside the y-grid" in caplog.text


def test_psi_k_is_gaussian_around_Q():
    hist = evolve(np.array([[0.5]]), np.array([[0.2]]), Harmonic(1), 100, 0.01)
    x = SpatialGrid.from_ranges([-2], [2], [1 / 64])
    y = default_y_grid([(-2, 2)], 1 / 32, EPS)
    psi = evaluate_psi_k(hist, GaussianPacket(EPS), x, y, EPS)[0]
    Q = hist.final.Q[0, 0]
    env = np.exp(-((x.axes[0] - Q) ** 2) / (2 * EPS))
    ratio = np.abs(psi) / env
    assert np.allclose(ratio, ratio[0], rtol=1e-12)


def _fga_wavefunction(dpq, t, n_steps):
    grid = build_grid([(-2, 2)], [(-2, 2)], dpq, dpq)
    x = SpatialGrid.from_ranges([-2], [2], [1 / 64])
    y = default_y_grid([(-2, 2)], dpq, EPS)
    psi0 = GaussianPacket(EPS)
    hist = evolve(grid.p, grid.q, Harmonic(1), n_steps, t / max(n_steps, 1))
    fields = evaluate_psi_k(hist, psi0, x, y, EPS)
    return x, psi0, np.tensordot(grid.weights, fields, axes=1)


def test_reconstruction_at_time_zero():
    x, psi0, psi = _fga_wavefunction(1 / 32, 0.0, 0)
    err = np.sqrt(np.sum(np.abs(psi - psi0(x.points())) ** 2) * x.cell_volume)
    assert err <= 1e-3


def test_herman_kluk_exact_for_harmonic():
    t = 1.0
    x, psi0, psi = _fga_wavefunction(1 / 32, t, 200)
    exact = exact_quadratic_evolution(psi0, 1.0, t, x, EPS)
    err = np.sqrt(np.sum(np.abs(psi - exact) ** 2) * x.cell_volume)
    assert err <= 5e-2
    assert err <= 1e-6  # the ansatz is exact for quadratic potentials; only quadrature/RK4 error remains
