"""Ohmic harmonic bath: modes, two-point correlation function and its low-rank form."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import toeplitz

from .errors import ConfigError, NumericalError

logger = logging.getLogger(__name__)

# above this argument coth(x) == 1 to far below double precision
COTH_CUTOFF = 30.0


@dataclass(frozen=True)
class BathParameters:
    mode_count: int = 400
    omega_max: float = 10.0
    omega_c: float = 2.5
    beta: float = 5.0
    xi: float = 0.0
    epsilon: float = 1.0 / 64

    def __post_init__(self):
        if int(self.mode_count) != self.mode_count or self.mode_count < 1:
            raise ConfigError(f"bath.modes must be a positive integer, got {self.mode_count}")
        for name in ("omega_max", "omega_c", "beta", "epsilon"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"bath.{name} must be positive, got {getattr(self, name)}")
        if self.xi < 0:
            raise ConfigError(f"bath.xi must be non-negative, got {self.xi}")
        if self.epsilon > 1:
            raise ConfigError(f"epsilon must lie in (0, 1], got {self.epsilon}")


@dataclass(frozen=True)
class SpectralModes:
    omegas: np.ndarray
    couplings: np.ndarray

    @property
    def size(self):
        return len(self.omegas)


def ohmic_modes(params: BathParameters) -> SpectralModes:
    """Discretise the Ohmic spectral density into ``params.mode_count`` modes.

    Frequencies are placed so that every mode carries the same share of the
    exponentially cut-off density; the last one lands on ``omega_max``.
    """
    L = int(params.mode_count)
    l = np.arange(1, L + 1, dtype=float)
    tail = -np.expm1(-params.omega_max / params.omega_c)  # 1 - exp(-omega_max/omega_c)
    omegas = -params.omega_c * np.log1p(-(l / L) * tail)
    couplings = params.epsilon * omegas * np.sqrt(params.xi * params.omega_c / L * tail)
    return SpectralModes(omegas=omegas, couplings=couplings)


def _coth(x):
    x = np.asarray(x, dtype=float)
    out = np.ones_like(x)
    small = x <= COTH_CUTOFF
    out[small] = 1.0 / np.tanh(x[small])
    return out


def correlation_function(modes: SpectralModes, params: BathParameters, delta_tau):
    """Bath two-point correlation B~(delta_tau) = B(tau1, tau2) with delta_tau = tau1 - tau2.

    Accepts a scalar or an array of time differences.
    """
    dtau = np.asarray(delta_tau, dtype=float)
    w = modes.omegas
    amp = 0.5 * modes.couplings**2 / (params.epsilon * w)
    coth = _coth(0.5 * params.beta * params.epsilon * w)
    phase = np.multiply.outer(dtau, w)
    values = (amp * coth * np.cos(phase)).sum(axis=-1) - 1j * (amp * np.sin(phase)).sum(axis=-1)
    return values[()] if values.ndim == 0 else values


def correlation_derivative(modes: SpectralModes, params: BathParameters, delta_tau):
    """Analytic d B~ / d delta_tau."""
    dtau = np.asarray(delta_tau, dtype=float)
    w = modes.omegas
    amp = 0.5 * modes.couplings**2 / (params.epsilon * w)
    coth = _coth(0.5 * params.beta * params.epsilon * w)
    phase = np.multiply.outer(dtau, w)
    values = -(amp * coth * w * np.sin(phase)).sum(axis=-1) - 1j * (amp * w * np.cos(phase)).sum(axis=-1)
    return values[()] if values.ndim == 0 else values


@dataclass(frozen=True)
class CorrelationMatrix:
    """Samples ``entries[j, k] = B(k dt, j dt)`` on an equispaced time grid."""

    dt: float
    entries: np.ndarray

    @property
    def size(self):
        return self.entries.shape[0]

    @property
    def n_steps(self):
        return self.size - 1


def correlation_matrix(modes: SpectralModes, params: BathParameters, n_steps: int, dt: float) -> CorrelationMatrix:
    if int(n_steps) != n_steps or n_steps < 1:
        raise ConfigError(f"correlation matrix needs n_steps >= 1, got {n_steps}")
    if not dt > 0:
        raise ConfigError(f"correlation matrix needs dt > 0, got {dt}")
    lags = correlation_function(modes, params, np.arange(n_steps + 1) * dt)
    # entries[j, k] = B~((k - j) dt); B~(-s) = conj(B~(s))
    entries = toeplitz(np.conj(lags), lags)
    return CorrelationMatrix(dt=float(dt), entries=entries)


@dataclass(frozen=True)
class LowRankKernel:
    """Truncated spectral expansion ``B(t_k, t_j) ~ sum_m lambdas[m] conj(V[k, m]) V[j, m]``.

    ``vectors[:, m]`` holds the discrete samples V_m(i dt), used as-is (no sqrt(dt) rescaling).
    """

    lambdas: np.ndarray
    vectors: np.ndarray
    dt: float
    frobenius_error: float
    discarded: np.ndarray

    @property
    def rank(self):
        return len(self.lambdas)

    @property
    def n_steps(self):
        return self.vectors.shape[0] - 1

    def reconstruct(self):
        """Matrix with the same layout as ``CorrelationMatrix.entries``."""
        V = self.vectors
        return (V * self.lambdas) @ V.conj().T

    def truncate(self, rank):
        if not 1 <= rank <= self.rank:
            raise ValueError(f"rank must be in [1, {self.rank}], got {rank}")
        dropped = np.concatenate([self.lambdas[rank:], self.discarded])
        return LowRankKernel(
            lambdas=self.lambdas[:rank],
            vectors=self.vectors[:, :rank],
            dt=self.dt,
            frobenius_error=float(np.sqrt(np.sum(dropped**2))),
            discarded=dropped,
        )


def low_rank_decompose(matrix: CorrelationMatrix, rank: int, tol: float = 1e-10) -> LowRankKernel:
    """Keep the ``rank`` eigenpairs of largest |lambda| of the Hermitian correlation matrix."""
    B = matrix.entries
    size = B.shape[0]
    if int(rank) != rank or not 1 <= rank <= size:
        raise ConfigError(f"rank must be in [1, {size}], got {rank}")
    lam, U = np.linalg.eigh(B)
    norm = np.linalg.norm(B)
    residual = np.linalg.norm(B - (U * lam) @ U.conj().T)
    if residual > tol * norm:
        raise NumericalError(f"eigendecomposition residual {residual:.3e} exceeds {tol:g} * |B|_F = {tol * norm:.3e}")
    order = np.argsort(-np.abs(lam), kind="stable")
    lam, U = lam[order], U[:, order]
    discarded = lam[rank:]
    err = float(np.sqrt(np.sum(discarded**2)))
    logger.debug("low-rank r=%d of %d: frobenius error %.4e", rank, size, err)
    return LowRankKernel(lambdas=lam[:rank].copy(), vectors=U[:, :rank].copy(), dt=matrix.dt,
                         frobenius_error=err, discarded=discarded.copy())
