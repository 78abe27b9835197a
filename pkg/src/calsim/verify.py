"""Oracle checks comparing the fast formulas with brute-force references.

Each ``*_case`` function builds a randomised synthetic problem and returns the
fast value together with the oracle value; :func:`run_suite` runs a quick
selection and reports a pass/fail table (the ``calsim verify`` command).
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .bath import (BathParameters, LowRankKernel, correlation_function, correlation_matrix, low_rank_decompose,
                   ohmic_modes)
from .dyson import MultiIndex, coupling_integrals, j_k_m, j_k_N, pair_integral
from .fga import SpatialGrid, TrajectoryHistory, initial_overlap
from .oracle import (brute_L_same, brute_simplex_integral, double_factorial, gaussian_overlap_analytic, index_set,
                     recursive_L_same, wick_pairings)
from .wavefunctions import GaussianPacket

REFERENCE_BATH = dict(mode_count=400, omega_max=10.0, omega_c=2.5, beta=5.0)


@dataclass
class SmoothFamily:
    """Random smooth functions f(s) = a + b cos(w s + phi) (+ i c sin(v s) when complex)."""

    a: np.ndarray
    b: np.ndarray
    w: np.ndarray
    phi: np.ndarray
    c: np.ndarray
    v: np.ndarray

    @classmethod
    def random(cls, rng, count, complex_valued):
        c = rng.uniform(-1, 1, count) if complex_valued else np.zeros(count)
        return cls(a=rng.uniform(-1, 1, count), b=rng.uniform(0.2, 1, count), w=rng.uniform(0.5, 4, count),
                   phi=rng.uniform(0, 2 * np.pi, count), c=c, v=rng.uniform(0.5, 4, count))

    def __call__(self, s):
        s = np.asarray(s, dtype=float)[..., None]
        out = self.a + self.b * np.cos(self.w * s + self.phi)
        if np.any(self.c):
            out = out + 1j * self.c * np.sin(self.v * s)
        return out  # (..., count)


def random_multi_index(rng, n, r, D):
    slots = rng.integers(0, r * D, size=n)
    counts = np.bincount(slots, minlength=r * D)
    return MultiIndex(tuple(int(c) for c in counts), r, D)


def prop31_case(rng, D, r, n, n_steps=200, t=1.0):
    """J_{k,N} by the product formula vs the ordered-simplex sum over the index set."""
    V = SmoothFamily.random(rng, r, complex_valued=True)
    Q = SmoothFamily.random(rng, D, complex_valued=False)
    grid = np.linspace(0.0, t, n_steps + 1)
    dt = t / n_steps
    kernel = LowRankKernel(lambdas=np.ones(r), vectors=V(grid), dt=dt, frobenius_error=0.0, discarded=np.zeros(0))
    hist = TrajectoryHistory.from_samples(Q(grid).real[:, None, :], dt)
    index = random_multi_index(rng, n, r, D)
    fast = complex(j_k_N(coupling_integrals(hist, kernel), index)[0])
    sequences = index_set(index.counts, r, D)

    def integrand(s):
        vs, qs = V(s), Q(s).real  # (M, n, r), (M, n, D)
        total = np.zeros(s.shape[0], dtype=complex)
        for seq in sequences:
            term = np.ones(s.shape[0], dtype=complex)
            for l, (j, d) in enumerate(seq):
                term = term * vs[:, l, j] * qs[:, l, d]
            total += term
        return total

    brute = complex(brute_simplex_integral(integrand, n, t, subdivisions=n_steps))
    return fast, brute, index


def reference_correlation(xi=1.6, epsilon=1.0 / 64):
    params = BathParameters(xi=xi, epsilon=epsilon, **REFERENCE_BATH)
    modes = ohmic_modes(params)
    return lambda lag: correlation_function(modes, params, lag)


def prop32_case(rng, D, m, n_steps, t=1.0, correlation=None):
    """J_k^(m) by the power formula vs the pairing sum integrated over the m-simplex."""
    correlation = correlation or reference_correlation()
    Q = SmoothFamily.random(rng, D, complex_valued=False)
    grid = np.linspace(0.0, t, n_steps + 1)
    hist = TrajectoryHistory.from_samples(Q(grid).real[:, None, :], t / n_steps)
    fast = complex(j_k_m(pair_integral(hist, correlation), m)[0])

    def dot(a, b):
        return np.sum(Q(a).real * Q(b).real, axis=-1)

    sign = (-1) ** (m // 2)
    brute = complex(brute_simplex_integral(lambda s: sign * brute_L_same(s, correlation, dot), m, t,
                                           subdivisions=n_steps))
    return fast, brute


def rel_err(a, b):
    return abs(a - b) / max(abs(b), 1e-300)


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float


def _timed(name, fn):
    t0 = time.perf_counter()
    try:
        passed, detail = fn()
    except Exception as exc:  # a crash is a failed check, reported not raised
        passed, detail = False, f"error: {exc!r}"
    return CheckResult(name, bool(passed), detail, time.perf_counter() - t0)


def _check_wick():
    counts = [len(wick_pairings(m)) for m in (2, 4, 6, 8)]
    expected = [double_factorial(m - 1) for m in (2, 4, 6, 8)]
    return counts == expected, f"counts {counts}, expected {expected}"


def _check_L_recursion(rng):
    corr = reference_correlation()
    worst = 0.0
    for m in (2, 4, 6):
        tau = np.sort(rng.uniform(0, 1, m))
        worst = max(worst, rel_err(brute_L_same(tau, corr)[0], recursive_L_same(tau, corr)))
    return worst < 1e-12, f"max rel diff {worst:.2e}"


def _check_prop31(rng, cases=4, n_steps=60):
    worst = 0.0
    for i in range(cases):
        D, r, n = 1 + i % 2, 1 + (i // 2) % 2, 1 + i % 3
        fast, brute, _ = prop31_case(rng, D, r, n, n_steps)
        worst = max(worst, rel_err(fast, brute))
    return worst <= 1e-6, f"max rel err {worst:.2e} over {cases} cases"


def _check_prop32(rng):
    worst = 0.0
    for m, n_steps in ((2, 100), (4, 24)):
        for D in (1, 2):
            fast, brute = prop32_case(rng, D, m, n_steps)
            worst = max(worst, rel_err(fast, brute))
    return worst <= 1e-6, f"max rel err {worst:.2e} (m=2,4; D=1,2)"


def _check_lowrank():
    params = BathParameters(xi=1.6, **REFERENCE_BATH)
    mat = correlation_matrix(ohmic_modes(params), params, 100, 0.01)
    full = low_rank_decompose(mat, 101)
    rel = np.linalg.norm(full.reconstruct() - mat.entries) / np.linalg.norm(mat.entries)
    errs = [low_rank_decompose(mat, r).frobenius_error for r in (2, 5, 10, 20)]
    mono = all(a >= b for a, b in zip(errs, errs[1:]))
    k10 = low_rank_decompose(mat, 10)
    direct = np.linalg.norm(k10.reconstruct() - mat.entries)
    match = abs(direct - k10.frobenius_error) <= 1e-10 * max(1.0, np.linalg.norm(mat.entries))
    return rel <= 1e-10 and mono and match, f"full-rank rel {rel:.1e}; monotone {mono}; discarded-norm match {match}"


def _check_ohmic():
    modes = ohmic_modes(BathParameters(xi=1.6, **REFERENCE_BATH))
    err = abs(modes.omegas[-1] - 10.0)
    return err <= 1e-12, f"|omega_L - omega_max| = {err:.1e}"


def _check_overlap(rng):
    eps = 1.0 / 64
    packet = GaussianPacket(eps, 1, center=0.1, momentum=0.3, width=1.3)
    y = SpatialGrid((np.linspace(-3, 3, 1201),))
    p = rng.uniform(-1, 1, (5, 1))
    q = rng.uniform(-1, 1, (5, 1))
    num = initial_overlap(p, q, packet(y.points()), y, eps)
    exact = gaussian_overlap_analytic(p, q, packet, eps)
    err = float(np.max(np.abs(num - exact)) / np.max(np.abs(exact)))
    return err <= 1e-8, f"max rel err {err:.1e}"


def run_suite(seed=2024):
    rng = np.random.default_rng(seed)
    checks = [
        ("wick pairing counts (m-1)!!", _check_wick),
        ("pairing sum: direct vs recursion", lambda: _check_L_recursion(rng)),
        ("cross-arc product formula vs simplex sum", lambda: _check_prop31(rng)),
        ("same-axis power formula vs pairing sum", lambda: _check_prop32(rng)),
        ("low-rank exactness and monotonicity", _check_lowrank),
        ("ohmic endpoint omega_L = omega_max", _check_ohmic),
        ("initial overlap vs Gaussian closed form", lambda: _check_overlap(rng)),
    ]
    return [_timed(name, fn) for name, fn in checks]


def format_table(results):
    width = max(len(r.name) for r in results)
    lines = [f"{'check'.ljust(width)}  status  time     detail"]
    for r in results:
        lines.append(f"{r.name.ljust(width)}  {'PASS' if r.passed else 'FAIL'}    {r.seconds:6.2f}s  {r.detail}")
    return "\n".join(lines)


__all__ = ["prop31_case", "prop32_case", "run_suite", "format_table", "rel_err", "SmoothFamily",
           "reference_correlation"]
