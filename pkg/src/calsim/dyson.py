"""Factorised Dyson-series assembly of the reduced density.

Each trajectory k contributes ``w_k psi_k(x) J_{k,N} J_k^(m)`` to the field
``I_{n,N}^(m)(x)``; the coupling factor over cross-axis arcs reduces to a
product of one-dimensional integrals and the same-axis factor to a power of one
ordered double integral.  The density is then a weighted sum of products of
these fields.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, MemoryBudgetError

logger = logging.getLogger(__name__)

TRUNCATIONS = ("arcs", "nodes")


@dataclass(frozen=True, order=True)
class MultiIndex:
    """Arc counts N_j^(d), stored flat with slot ``d * rank + j``."""

    counts: tuple
    rank: int
    dimension: int

    @property
    def order(self):
        return sum(self.counts)

    @property
    def factorial(self):
        return math.prod(math.factorial(c) for c in self.counts)

    def as_matrix(self):
        """Counts as a (D, r) array."""
        return np.array(self.counts, dtype=int).reshape(self.dimension, self.rank)

    def lambda_power(self, lambdas):
        lam = np.tile(np.asarray(lambdas)[: self.rank], self.dimension)
        return np.prod(lam ** np.array(self.counts))


def _compositions(n, slots):
    if slots == 1:
        yield (n,)
        return
    for first in range(n + 1):
        for rest in _compositions(n - first, slots - 1):
            yield (first,) + rest


def enumerate_multi_indices(n, r, D):
    """All weak compositions of n into r*D slots, in lexicographic order."""
    if n < 0 or r < 1 or D < 1:
        raise ValueError(f"need n >= 0, r >= 1, D >= 1; got n={n}, r={r}, D={D}")
    return [MultiIndex(c, r, D) for c in _compositions(n, r * D)]


def trapezoid_weights(n_steps, dt):
    w = np.full(n_steps + 1, dt)
    w[0] = w[-1] = dt / 2
    if n_steps == 0:
        w[:] = 0.0
    return w


def _check_grid(history, n_steps, dt):
    if history.n_steps != n_steps or not math.isclose(history.dt, dt, rel_tol=1e-12):
        raise ConfigError(f"time grid mismatch: trajectories ({history.n_steps} x {history.dt}) vs kernel ({n_steps} x {dt})")


def coupling_integrals(history, kernel):
    """I_k^(j,d) = int_0^t V_j(s) Q_{k,d}(s) ds by the trapezoid rule; shape (K, r, D)."""
    _check_grid(history, kernel.n_steps, kernel.dt)
    Q = history.q_samples
    n1, K, D = Q.shape
    Qw = Q * trapezoid_weights(n1 - 1, kernel.dt)[:, None, None]
    out = kernel.vectors.T @ Qw.reshape(n1, K * D)
    return out.reshape(kernel.rank, K, D).transpose(1, 0, 2)


def j_k_N(integrals, index: MultiIndex):
    """(1/N!) prod_{d,j} (I_k^(j,d))^(N_j^(d)) for every trajectory; ``integrals`` is (K, r, D)."""
    integrals = np.asarray(integrals)
    K, r, D = integrals.shape
    counts = index.as_matrix()
    out = np.ones(K, dtype=complex)
    for d in range(D):
        for j in range(r):
            if counts[d, j]:
                out = out * integrals[:, j, d] ** counts[d, j]
    return out / index.factorial


def pair_integral(history, correlation):
    """J_k^(2) = -int_{0<=t1<=t2<=t} B(t2, t1) Q_k(t1).Q_k(t2) on the time grid.

    ``correlation`` maps lags ``t2 - t1 >= 0`` to B~(t2 - t1); it may also be
    the array of B~ at the lags 0, dt, ..., N_t dt.  The ordered
    triangle uses trapezoid weights with the diagonal halved; the lag sums are
    autocorrelations, computed with FFTs.
    """
    Q = history.q_samples
    n1, K, D = Q.shape
    if n1 == 1:
        return np.zeros(K, dtype=complex)
    dt = history.dt
    c = np.ones(n1)
    c[0] = c[-1] = 0.5
    u = Q * c[:, None, None]
    nfft = 2 * n1
    spec = np.fft.rfft(u, n=nfft, axis=0)
    auto = np.fft.irfft(np.abs(spec) ** 2, n=nfft, axis=0)[:n1].sum(axis=-1)  # (n1, K)
    if callable(correlation):
        lags = np.array(correlation(np.arange(n1) * dt), dtype=complex)
    else:
        lags = np.array(correlation, dtype=complex)
        if lags.shape != (n1,):
            raise ConfigError(f"expected {n1} correlation lags, got shape {lags.shape}")
    lags[0] *= 0.5
    return -(dt**2) * (lags @ auto)


def pair_integral_lowrank(history, kernel):
    """Same ordered double integral, but with B replaced by its rank-r reconstruction."""
    _check_grid(history, kernel.n_steps, kernel.dt)
    Q = history.q_samples
    n1, K, D = Q.shape
    c = trapezoid_weights(n1 - 1, kernel.dt)
    out = np.zeros(K, dtype=complex)
    for lam, v in zip(kernel.lambdas, kernel.vectors.T):
        a = (c * v)[:, None, None] * Q  # V_m(t1) at the earlier time
        b = (c * np.conj(v))[:, None, None] * Q  # conj V_m(t2) at the later time
        inner = np.cumsum(a, axis=0) - 0.5 * a
        out += lam * np.sum(b * inner, axis=(0, 2))
    return -out


def j_k_m(pair, m):
    """(J^(2))^(m/2) / (m/2)!."""
    if m < 0 or m % 2:
        raise ValueError(f"m must be a non-negative even integer, got {m}")
    half = m // 2
    return np.asarray(pair) ** half / math.factorial(half)


def exact_field_count(nbar, rank, dimension):
    """Number of stored (N, m) fields for truncation order ``nbar``."""
    return sum(math.comb(rank * dimension + n - 1, n) * (nbar - n + 1) for n in range(nbar + 1))


@dataclass
class _Level:
    indices: list
    parent: np.ndarray  # position of N - e_s in the previous level
    slot: np.ndarray  # s, the first non-zero slot of N
    count: np.ndarray  # N_s
    m_values: tuple


class DysonAccumulator:
    """Fields ``I_{n,N}^(m)(x)`` for ``|N| = n <= nbar`` and even ``m <= 2 nbar - 2 n``.

    ``fields[(n, m)]`` has shape ``(len(levels[n].indices), x_size)``.
    """

    def __init__(self, nbar, rank, dimension, x_size, memory_budget_mb=None):
        if nbar < 0 or rank < 1:
            raise ConfigError(f"need nbar >= 0 and rank >= 1, got nbar={nbar}, rank={rank}")
        self.nbar, self.rank, self.dimension, self.x_size = int(nbar), int(rank), int(dimension), int(x_size)
        n_fields = exact_field_count(self.nbar, self.rank, self.dimension)
        self.nbytes = 16 * n_fields * self.x_size
        if memory_budget_mb is not None and self.nbytes > memory_budget_mb * 2**20:
            raise MemoryBudgetError(
                f"Dyson accumulator needs {self.nbytes / 2**20:.1f} MiB ({n_fields} fields x {self.x_size} points), "
                f"budget is {memory_budget_mb} MiB")
        self.levels = []
        prev = None
        for n in range(self.nbar + 1):
            idx = enumerate_multi_indices(n, self.rank, self.dimension)
            parent = np.zeros(len(idx), dtype=int)
            slot = np.zeros(len(idx), dtype=int)
            count = np.zeros(len(idx), dtype=int)
            if n > 0:
                lookup = {mi.counts: i for i, mi in enumerate(prev)}
                for i, mi in enumerate(idx):
                    s = next(k for k, v in enumerate(mi.counts) if v)
                    c = list(mi.counts)
                    c[s] -= 1
                    parent[i], slot[i], count[i] = lookup[tuple(c)], s, mi.counts[s]
            m_values = tuple(range(0, 2 * (self.nbar - n) + 1, 2))
            self.levels.append(_Level(idx, parent, slot, count, m_values))
            prev = idx
        self.fields = {(n, m): np.zeros((len(lv.indices), self.x_size), dtype=complex)
                       for n, lv in enumerate(self.levels) for m in lv.m_values}

    def empty_like(self):
        other = object.__new__(DysonAccumulator)
        other.__dict__.update(self.__dict__)
        other.fields = {k: np.zeros_like(v) for k, v in self.fields.items()}
        return other

    def coupling_products(self, integrals):
        """J_{k,N} for every stored multi-index, level by level; list of (n_idx, K) arrays."""
        integrals = np.asarray(integrals)
        K = integrals.shape[0]
        flat = integrals.transpose(0, 2, 1).reshape(K, -1)  # slot d * r + j
        out = [np.ones((1, K), dtype=complex)]
        for lv in self.levels[1:]:
            out.append(out[-1][lv.parent] * flat[:, lv.slot].T / lv.count[:, None])
        return out

    def accumulate(self, weights, psi, integrals, pair):
        """Add ``w_k psi_k(x) J_{k,N} J_k^(m)`` for a batch of trajectories.

        ``psi`` is (K, x_size), ``integrals`` (K, r, D), ``pair`` (K,) = J_k^(2).
        """
        weights = np.asarray(weights, dtype=float)
        psi = np.asarray(psi).reshape(len(weights), -1)
        J = self.coupling_products(integrals)
        scaled = {m: psi * (weights * j_k_m(pair, m))[:, None] for m in self.levels[0].m_values}
        for n, lv in enumerate(self.levels):
            for m in lv.m_values:
                self.fields[(n, m)] += J[n] @ scaled[m]

    def merge(self, other):
        for key, val in other.fields.items():
            self.fields[key] += val


def _m_limit(nbar, n, truncation):
    if truncation == "arcs":
        return 2 * (nbar - n)
    if truncation == "nodes":
        return nbar - 2 * n
    raise ConfigError(f"unknown truncation '{truncation}' (choose from {TRUNCATIONS})")


def assemble_density(acc: DysonAccumulator, lambdas, nbar=None, rank=None, truncation="arcs"):
    """Pointwise sum over n, N and (m1, m2) of lambda^N N! I^(m1) conj(I^(m2)).

    ``nbar``/``rank`` below the accumulator's values give the lower-order or
    lower-rank density from the same fields.  ``truncation='arcs'`` keeps
    ``m1 + m2 <= 2 (nbar - n)``; ``'nodes'`` keeps ``m1 + m2 <= nbar - 2 n``.
    Returns ``(rho, imag_residue)`` with ``rho`` real of shape (x_size,).
    """
    nbar = acc.nbar if nbar is None else int(nbar)
    rank = acc.rank if rank is None else int(rank)
    if not 0 <= nbar <= acc.nbar or not 1 <= rank <= acc.rank:
        raise ValueError(f"nbar <= {acc.nbar} and rank <= {acc.rank} required, got nbar={nbar}, rank={rank}")
    lambdas = np.asarray(lambdas, dtype=float)[: acc.rank]
    slot_lambda = np.tile(lambdas, acc.dimension)
    slot_used = np.tile(np.arange(acc.rank) < rank, acc.dimension)
    total = np.zeros(acc.x_size, dtype=complex)
    for n, lv in enumerate(acc.levels[: nbar + 1]):
        limit = _m_limit(nbar, n, truncation)
        if limit < 0:
            continue
        counts = np.array([mi.counts for mi in lv.indices], dtype=float)
        keep = np.all((counts == 0) | slot_used, axis=1)
        if not keep.any():
            continue
        # the fields carry J_{k,N} = prod I^N / N!, so lambda^N N! |.|^2 nets lambda^N |prod I^N|^2 / N!
        coef = np.prod(slot_lambda**counts, axis=1) * np.array([mi.factorial for mi in lv.indices], dtype=float)
        coef = np.where(keep, coef, 0.0)
        ms = [m for m in lv.m_values if m <= limit]
        F = [acc.fields[(n, m)] for m in ms]
        level = np.zeros((len(lv.indices), acc.x_size), dtype=complex)
        for i, m1 in enumerate(ms):
            partner = sum(F[j] for j, m2 in enumerate(ms) if m1 + m2 <= limit)
            level += F[i] * np.conj(partner)
        total += coef @ level
    rho = total.real
    residue = float(np.max(np.abs(total.imag), initial=0.0))
    scale = float(np.max(np.abs(rho), initial=0.0))
    if residue > 1e-8 * scale:
        logger.warning("imaginary residue %.3e exceeds 1e-8 * max|rho| = %.3e", residue, 1e-8 * scale)
    return rho, residue


@dataclass
class DensityGrid:
    """Real density on a spatial grid plus run metadata."""

    values: np.ndarray
    grid: object
    metadata: dict = field(default_factory=dict)

    @property
    def integral(self):
        return float(np.sum(self.values) * self.grid.cell_volume)
