"""Frozen Gaussian (Herman-Kluk) trajectories and the per-trajectory wave packets.

Trajectories are handled in batches: a batch of K phase-space points is a pair of
``(K, D)`` arrays and every state variable carries a leading trajectory axis.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .errors import ConfigError, SingularZError

logger = logging.getLogger(__name__)

SINGULAR_DET = 1e-12
WINDOW_MASS_TOL = 1e-8


def axis_points(lo, hi, step):
    """Equispaced nodes ``lo, lo+step, ..., hi``; (hi-lo)/step must be an integer."""
    if not step > 0:
        raise ConfigError(f"grid step must be positive, got {step}")
    if hi < lo:
        raise ConfigError(f"grid range [{lo}, {hi}] is empty")
    n = (hi - lo) / step
    count = int(round(n))
    if abs(n - count) > 1e-9 * max(1.0, abs(n)):
        raise ConfigError(f"range [{lo}, {hi}] is not a whole number of steps of {step}")
    return lo + step * np.arange(count + 1)


@dataclass(frozen=True)
class PhaseSpaceGrid:
    """Quadrature points (p_k, q_k) with rectangle-rule weights (dp*dq)^D."""

    p: np.ndarray
    q: np.ndarray
    weights: np.ndarray

    @property
    def size(self):
        return len(self.weights)

    @property
    def dimension(self):
        return self.p.shape[1]

    def subset(self, sl):
        return PhaseSpaceGrid(self.p[sl], self.q[sl], self.weights[sl])


def build_grid(p_ranges, q_ranges, dp, dq) -> PhaseSpaceGrid:
    """Tensor-product grid over (p_1..p_D, q_1..q_D), flattened in row-major order."""
    if len(p_ranges) != len(q_ranges):
        raise ConfigError("p and q ranges must have the same dimension")
    D = len(p_ranges)
    axes = [axis_points(lo, hi, dp) for lo, hi in p_ranges] + [axis_points(lo, hi, dq) for lo, hi in q_ranges]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=-1)
    if pts.shape[0] == 0:
        raise ConfigError("empty phase-space grid")
    w = np.full(pts.shape[0], (dp * dq) ** D)
    return PhaseSpaceGrid(p=pts[:, :D].copy(), q=pts[:, D:].copy(), weights=w)


@dataclass(frozen=True)
class SpatialGrid:
    """Rectangular grid given by one 1-D node array per axis."""

    axes: tuple

    @classmethod
    def from_ranges(cls, lows, highs, steps):
        return cls(tuple(axis_points(lo, hi, h) for lo, hi, h in zip(lows, highs, steps)))

    @property
    def dimension(self):
        return len(self.axes)

    @property
    def shape(self):
        return tuple(len(a) for a in self.axes)

    @property
    def size(self):
        return int(np.prod(self.shape))

    @property
    def steps(self):
        return tuple(float(a[1] - a[0]) if len(a) > 1 else 1.0 for a in self.axes)

    @property
    def cell_volume(self):
        return float(np.prod(self.steps))

    def points(self):
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack(mesh, axis=-1)


def default_y_grid(q_ranges, dq, epsilon) -> SpatialGrid:
    """q-range padded by 6 sqrt(eps) on each side, step min(dq, sqrt(eps)/4)."""
    pad = 6.0 * np.sqrt(epsilon)
    step = min(dq, np.sqrt(epsilon) / 4.0)
    axes = []
    for lo, hi in q_ranges:
        n = int(np.ceil((hi - lo + 2 * pad) / step))
        start = 0.5 * (lo + hi) - 0.5 * n * step
        axes.append(start + step * np.arange(n + 1))
    return SpatialGrid(tuple(axes))


@dataclass
class TrajectoryState:
    P: np.ndarray  # (K, D)
    Q: np.ndarray  # (K, D)
    S: np.ndarray  # (K,)
    a: np.ndarray  # (K,) complex
    dzP: np.ndarray  # (K, D, D) complex
    dzQ: np.ndarray  # (K, D, D) complex

    @classmethod
    def initial(cls, p, q):
        p = np.atleast_2d(np.asarray(p, dtype=float))
        q = np.atleast_2d(np.asarray(q, dtype=float))
        K, D = p.shape
        eye = np.broadcast_to(np.eye(D, dtype=complex), (K, D, D))
        return cls(P=p.copy(), Q=q.copy(), S=np.zeros(K), a=np.full(K, 2.0 ** (D / 2), dtype=complex),
                   dzP=-1j * eye.copy(), dzQ=eye.copy())

    def astuple(self):
        return (self.P, self.Q, self.S, self.a, self.dzP, self.dzQ)

    @property
    def Z(self):
        return self.dzQ + 1j * self.dzP


def _det(M):
    D = M.shape[-1]
    if D == 1:
        return M[..., 0, 0]
    if D == 2:
        return M[..., 0, 0] * M[..., 1, 1] - M[..., 0, 1] * M[..., 1, 0]
    return np.linalg.det(M)


def _trace_solve(Z, M, det):
    """tr(Z^{-1} M) batched; small-D closed forms."""
    D = Z.shape[-1]
    if D == 1:
        return M[..., 0, 0] / Z[..., 0, 0]
    if D == 2:
        # Z^{-1} = adj(Z) / det
        tr = Z[..., 1, 1] * M[..., 0, 0] - Z[..., 0, 1] * M[..., 1, 0] - Z[..., 1, 0] * M[..., 0, 1] + Z[..., 0, 0] * M[..., 1, 1]
        return tr / det
    return np.trace(np.linalg.solve(Z, M), axis1=-2, axis2=-1)


def _derivative(y, potential):
    P, Q, S, a, dzP, dzQ = y
    grad, hess = potential.derivatives(Q)
    Z = dzQ + 1j * dzP
    det = _det(Z)
    singular = np.abs(det) <= SINGULAR_DET
    if np.any(singular):
        eye = np.eye(Z.shape[-1])
        Z = np.where(singular[:, None, None], eye, Z)
        det = np.where(singular, 1.0, det)
    dzQ_hess = dzQ @ hess
    tr = _trace_solve(Z, dzP - 1j * dzQ_hess, det)
    dy = (
        -grad,
        P,
        0.5 * np.sum(P**2, axis=-1) - potential.value(Q),
        0.5 * a * tr,
        -dzQ_hess,
        dzP,
    )
    return dy, singular


def rhs(state: TrajectoryState, potential) -> TrajectoryState:
    """Time derivative of every trajectory variable under the effective potential."""
    dy, singular = _derivative(state.astuple(), potential)
    if np.any(singular):
        raise SingularZError(np.flatnonzero(singular))
    return TrajectoryState(*dy)


def _axpy(y, dy, h):
    return tuple(v + h * dv for v, dv in zip(y, dy))


def rk4_step(y, potential, dt):
    k1, s1 = _derivative(y, potential)
    k2, s2 = _derivative(_axpy(y, k1, dt / 2), potential)
    k3, s3 = _derivative(_axpy(y, k2, dt / 2), potential)
    k4, s4 = _derivative(_axpy(y, k3, dt), potential)
    y_new = tuple(v + dt / 6 * (d1 + 2 * d2 + 2 * d3 + d4) for v, d1, d2, d3, d4 in zip(y, k1, k2, k3, k4))
    return y_new, s1 | s2 | s3 | s4


@dataclass
class TrajectoryHistory:
    p: np.ndarray  # (K, D) initial momenta
    q: np.ndarray  # (K, D) initial positions
    q_samples: np.ndarray  # (N_t + 1, K, D)
    final: TrajectoryState
    dt: float
    dropped: np.ndarray  # (K,) bool, singular Z encountered

    @property
    def n_steps(self):
        return self.q_samples.shape[0] - 1

    @property
    def size(self):
        return self.p.shape[0]

    @classmethod
    def from_samples(cls, q_samples, dt):
        """History carrying only prescribed Q samples (N_t+1, K, D); used for synthetic checks."""
        q_samples = np.asarray(q_samples, dtype=float)
        K, D = q_samples.shape[1:]
        q0 = q_samples[0].copy()
        return cls(p=np.zeros((K, D)), q=q0, q_samples=q_samples, final=TrajectoryState.initial(np.zeros((K, D)), q0),
                   dt=float(dt), dropped=np.zeros(K, dtype=bool))


def evolve(p, q, potential, n_steps, dt, ids=None) -> TrajectoryHistory:
    """Classical RK4 over ``n_steps`` fixed steps, recording Q after every step.

    Trajectories whose Z matrix becomes singular are flagged in ``dropped``
    (and logged with their ids) instead of aborting the whole batch.
    """
    state = TrajectoryState.initial(p, q)
    K, D = state.Q.shape
    if int(n_steps) != n_steps or n_steps < 0:
        raise ConfigError(f"n_steps must be a non-negative integer, got {n_steps}")
    n_steps = int(n_steps)
    q_samples = np.empty((n_steps + 1, K, D))
    p0, q0 = state.P.copy(), state.Q.copy()
    q_samples[0] = state.Q
    dropped = np.zeros(K, dtype=bool)
    y = state.astuple()
    for i in range(n_steps):
        y, singular = rk4_step(y, potential, dt)
        dropped |= singular
        q_samples[i + 1] = y[1]
    if np.any(dropped):
        bad = np.flatnonzero(dropped)
        if ids is not None:
            bad = np.asarray(ids)[bad]
        logger.warning("dropping %d trajectories with singular Z: %s", len(bad), bad[:20].tolist())
    return TrajectoryHistory(p=p0, q=q0, q_samples=q_samples, final=TrajectoryState(*y), dt=float(dt),
                             dropped=dropped)


def trajectory_energy(state: TrajectoryState, potential):
    return 0.5 * np.sum(state.P**2, axis=-1) + potential.value(state.Q)


def window_mass_outside(q, y_grid: SpatialGrid, epsilon):
    """Largest mass of the Gaussian window exp(-|y-q|^2/2eps) falling outside the y-grid."""
    sd = np.sqrt(epsilon)
    worst = np.zeros(q.shape[0])
    for d, ax in enumerate(y_grid.axes):
        outside = ndtr((ax[0] - q[:, d]) / sd) + ndtr((q[:, d] - ax[-1]) / sd)
        worst = np.maximum(worst, outside)
    return worst


def initial_overlap(p, q, psi0_values, y_grid: SpatialGrid, epsilon):
    """Rectangle-rule ``int exp(-|y-q|^2/2eps - i p.(y-q)/eps) psi0(y) dy`` for every trajectory.

    ``psi0_values`` is psi0 sampled on ``y_grid`` (shape ``y_grid.shape``).
    """
    K = p.shape[0]
    out = None
    for d, (ax, h) in enumerate(zip(y_grid.axes, y_grid.steps)):
        u = ax[None, :] - q[:, d : d + 1]
        g = np.exp(-(u**2) / (2 * epsilon) - 1j * p[:, d : d + 1] * u / epsilon) * h
        if d == 0:
            out = g @ psi0_values.reshape(len(ax), -1)
        else:
            out = np.einsum("kar,ka->kr", out.reshape(K, len(ax), -1), g)
    return out.reshape(K)


def psi_prefactor(history: TrajectoryHistory, psi0_values, y_grid: SpatialGrid, epsilon):
    """The x-independent factor a (2 pi eps)^(-3D/2) exp(iS/eps) * overlap of each psi_k."""
    D = history.p.shape[1]
    outside = window_mass_outside(history.q, y_grid, epsilon)
    if outside.max(initial=0.0) > WINDOW_MASS_TOL:
        logger.warning("Gaussian window mass outside the y-grid reaches %.2e (> %.0e)", outside.max(), WINDOW_MASS_TOL)
    fin = history.final
    overlap = initial_overlap(history.p, history.q, psi0_values, y_grid, epsilon)
    return fin.a * (2 * np.pi * epsilon) ** (-1.5 * D) * np.exp(1j * fin.S / epsilon) * overlap


def psi_axis_factors(state: TrajectoryState, x_grid: SpatialGrid, epsilon):
    """Per-axis factors exp(-(x_d-Q_d)^2/2eps + i P_d (x_d-Q_d)/eps), each of shape (K, N_d)."""
    out = []
    for d, ax in enumerate(x_grid.axes):
        u = ax[None, :] - state.Q[:, d : d + 1]
        out.append(np.exp(-(u**2) / (2 * epsilon) + 1j * state.P[:, d : d + 1] * u / epsilon))
    return out


def outer_fields(prefactor, factors):
    """Combine per-axis factors into fields of shape (K, N_1 * ... * N_D)."""
    field = prefactor[:, None] * factors[0]
    K = field.shape[0]
    for f in factors[1:]:
        field = (field[:, :, None] * f[:, None, :]).reshape(K, -1)
    return field


def evaluate_psi_k(history: TrajectoryHistory, psi0, x_grid: SpatialGrid, y_grid: SpatialGrid, epsilon):
    """psi_k(t, x) on the x-grid for every trajectory in ``history``; shape (K, *x_grid.shape)."""
    psi0_values = psi0(y_grid.points())
    pref = psi_prefactor(history, psi0_values, y_grid, epsilon)
    fields = outer_fields(pref, psi_axis_factors(history.final, x_grid, epsilon))
    return fields.reshape((history.size,) + x_grid.shape)
