"""Brute-force reference implementations used to validate the fast paths.

Nothing here shares quadrature code with :mod:`calsim.dyson`; the simplex
rules enumerate ordered time tuples explicitly.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Pairing:
    """A perfect matching of {1, ..., m}; each pair is (i, j) with i < j."""

    pairs: tuple

    def __len__(self):
        return len(self.pairs)


def _matchings(items):
    if not items:
        yield ()
        return
    first, rest = items[0], items[1:]
    for k, other in enumerate(rest):
        for tail in _matchings(rest[:k] + rest[k + 1 :]):
            yield ((first, other),) + tail


def wick_pairings(m):
    """All pairings of m ordered points (1-based labels); there are (m-1)!! of them."""
    if m % 2 or m < 0:
        raise ValueError(f"pairings need an even number of points, got {m}")
    if m > 10:
        raise ValueError(f"pairing enumeration is limited to m <= 10, got {m}")
    return [Pairing(p) for p in _matchings(tuple(range(1, m + 1)))]


def double_factorial(n):
    return math.prod(range(n, 0, -2)) if n > 0 else 1


def brute_L_same(tau, correlation, dot=None):
    """Sum over pairings of prod B(tau_j, tau_i) [* dot(tau_i, tau_j)] for ordered times.

    ``tau`` has shape (m,) or (M, m) with each row ascending; ``correlation``
    maps a non-negative lag ``tau_j - tau_i`` to B~.  The optional ``dot`` adds
    the per-pair factor Q(tau_i).Q(tau_j) of the same-axis integrand.
    """
    tau = np.atleast_2d(np.asarray(tau, dtype=float))
    m = tau.shape[1]
    total = np.zeros(tau.shape[0], dtype=complex)
    for pairing in wick_pairings(m):
        term = np.ones(tau.shape[0], dtype=complex)
        for i, j in pairing.pairs:
            a, b = tau[:, i - 1], tau[:, j - 1]
            term = term * correlation(b - a)
            if dot is not None:
                term = term * dot(a, b)
        total += term
    return total


def recursive_L_same(tau, correlation):
    """Same quantity via L(tau) = sum_k B(tau_k, tau_1) L(tau without tau_1, tau_k); 1-D tau."""
    tau = list(np.asarray(tau, dtype=float))
    if not tau:
        return 1.0 + 0j
    if len(tau) % 2:
        raise ValueError("odd number of times")
    first, rest = tau[0], tau[1:]
    return sum(correlation(rest[k] - first) * recursive_L_same(rest[:k] + rest[k + 1 :], correlation)
               for k in range(len(rest)))


def index_set(counts, rank, dimension):
    """All sequences ((j_1, d_1), ..., (j_n, d_n)) whose (j, d) tallies equal ``counts``.

    ``counts`` is flat over slots ``d * rank + j`` (0-based j, d).  Returned sorted.
    """
    items = []
    for s, c in enumerate(counts):
        d, j = divmod(s, rank)
        items.extend([(j, d)] * c)
    return sorted(set(itertools.permutations(items)))


def _ordered_tuple_weights(tuples, node_weights):
    """Product of node weights divided by the multiplicity factorials of repeated nodes."""
    w = np.prod(node_weights[tuples], axis=1)
    n = tuples.shape[1]
    if n > 1:
        run = np.ones(len(tuples))
        denom = np.ones(len(tuples))
        for l in range(1, n):
            same = tuples[:, l] == tuples[:, l - 1]
            run = np.where(same, run + 1, 1.0)
            denom = denom * np.where(same, run, 1.0)
        w = w / denom
    return w


def brute_simplex_integral(integrand, n, t, subdivisions=None, mc_samples=None, rng=None, batch=200_000):
    """Integral of ``integrand`` over the ordered simplex 0 <= s_1 <= ... <= s_n <= t.

    ``integrand`` maps an (M, n) array of ascending times to M values.

    * ``subdivisions=N``: nested rule on the grid {i t / N}; each ordered tuple
      i_1 <= ... <= i_n gets the product of trapezoid node weights divided by
      the factorials of its repetition counts (so the diagonal of a triangle
      carries half weight).  Returns the complex value.
    * ``mc_samples=M``: uniform Monte Carlo on the simplex.  Returns
      ``(estimate, standard_error)``.
    """
    if (subdivisions is None) == (mc_samples is None):
        raise ValueError("give exactly one of subdivisions or mc_samples")
    if n == 0:
        val = complex(np.asarray(integrand(np.zeros((1, 0))))[0])
        return val if mc_samples is None else (val, 0.0)
    if mc_samples is not None:
        rng = np.random.default_rng() if rng is None else rng
        volume = t**n / math.factorial(n)
        total = 0.0 + 0j
        total_sq = 0.0
        done = 0
        while done < mc_samples:
            size = min(batch, mc_samples - done)
            s = np.sort(rng.uniform(0.0, t, size=(size, n)), axis=1)
            f = np.asarray(integrand(s), dtype=complex)
            total += f.sum()
            total_sq += float(np.sum(np.abs(f) ** 2))
            done += size
        mean = total / mc_samples
        var = max(total_sq / mc_samples - abs(mean) ** 2, 0.0)
        return volume * mean, volume * math.sqrt(var / mc_samples)
    if n > 4:
        raise ValueError("nested simplex quadrature is limited to n <= 4")
    N = int(subdivisions)
    h = t / N
    nodes = np.arange(N + 1) * h
    node_w = np.full(N + 1, h)
    node_w[0] = node_w[-1] = h / 2
    total = 0.0 + 0j
    combos = itertools.combinations_with_replacement(range(N + 1), n)
    while True:
        chunk = np.array(list(itertools.islice(combos, batch)), dtype=int)
        if chunk.size == 0:
            break
        chunk = chunk.reshape(-1, n)
        total += np.sum(_ordered_tuple_weights(chunk, node_w) * np.asarray(integrand(nodes[chunk]), dtype=complex))
    return total


def _gaussian_params(packet, dimension):
    c = np.broadcast_to(np.asarray(packet.center, dtype=float), (dimension,))
    k = np.broadcast_to(np.asarray(packet.momentum, dtype=float), (dimension,))
    s = np.broadcast_to(np.asarray(packet.width, dtype=float), (dimension,))
    return c, k, s


def gaussian_overlap_analytic(p, q, packet, epsilon):
    """Closed form of int exp(-|y-q|^2/2eps - i p.(y-q)/eps) psi0(y) dy for a Gaussian psi0.

    ``packet`` has ``center``, ``momentum`` and ``width`` (per axis) as in
    ``psi0 = prod (pi eps s)^(-1/4) exp(-(y-c)^2/(2 eps s) + i k (y-c)/eps)``.
    ``p``, ``q`` are (K, D).
    """
    p = np.atleast_2d(np.asarray(p, dtype=float))
    q = np.atleast_2d(np.asarray(q, dtype=float))
    D = p.shape[1]
    c, k, s = _gaussian_params(packet, D)
    eps = epsilon
    alpha = (1 + 1 / s) / (2 * eps)
    beta = (q - 1j * p + c / s + 1j * k) / eps
    gamma = (-(q**2) / 2 + 1j * p * q - c**2 / (2 * s) - 1j * k * c) / eps
    per_axis = np.sqrt(np.pi / alpha) * np.exp(beta**2 / (4 * alpha) + gamma) * (np.pi * eps * s) ** -0.25
    return np.prod(per_axis, axis=1)


def exact_quadratic_evolution(packet, omega, t, x_grid, epsilon):
    """Exact evolution of a Gaussian packet under V = omega^2 |x|^2 / 2 (hbar = epsilon).

    The packet keeps Gaussian form exp(i/eps [A/2 (x-x_t)^2 + p_t (x-x_t) + S_t]) with
    A = A' / Y, Y = cos(w t) + A0 sin(w t)/w, A0 = i/s, and amplitude Y^(-1/2) on a
    continuous branch.  ``omega = 0`` gives free spreading.  Returns values on
    ``x_grid`` (shape ``x_grid.shape``).
    """
    D = x_grid.dimension
    c, k, s = _gaussian_params(packet, D)
    eps = epsilon
    w = float(omega)

    def sinc_t(tt):  # sin(w tt) / w, continuous at w = 0
        return tt * np.sinc(w * tt / np.pi)

    cos_t = np.cos(w * t)
    x_t = c * cos_t + k * sinc_t(t)
    p_t = -c * w**2 * sinc_t(t) + k * cos_t
    A0 = 1j / s
    Y = cos_t + A0 * sinc_t(t)
    Ydot = A0 * cos_t - w**2 * sinc_t(t)
    A = Ydot / Y
    action = 0.5 * (p_t * x_t - k * c)
    # continuous branch of arg Y along [0, t]
    grid_t = np.linspace(0.0, t, 2049)
    path = np.cos(w * grid_t)[:, None] + A0[None, :] * sinc_t(grid_t)[:, None]
    phase = np.unwrap(np.angle(path), axis=0)[-1]
    amp = np.abs(Y) ** -0.5 * np.exp(-0.5j * phase) * (np.pi * eps * s) ** -0.25
    out = np.ones(x_grid.shape, dtype=complex)
    for d, ax in enumerate(x_grid.axes):
        u = ax - x_t[d]
        f = amp[d] * np.exp(1j / eps * (0.5 * A[d] * u**2 + p_t[d] * u + action[d]))
        shape = [1] * D
        shape[d] = len(ax)
        out = out * f.reshape(shape)
    return out
