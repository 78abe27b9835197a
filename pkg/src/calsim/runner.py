"""End-to-end density computation: bath -> low rank -> trajectories -> accumulate -> assemble.

Trajectories are processed in fixed chunks (``execution.chunk_size``) whose
boundaries do not depend on the number of workers.  Each chunk contributes a
private partial accumulator and partials are merged in ascending chunk order,
with BLAS pinned to one thread, so the result is bit-identical for any worker
count.
"""

from __future__ import annotations

import logging
import multiprocessing as mp
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .bath import BathParameters, correlation_function, correlation_matrix, low_rank_decompose, ohmic_modes
from .config import RunConfig
from .dyson import (DensityGrid, DysonAccumulator, assemble_density, coupling_integrals, exact_field_count,
                    pair_integral, pair_integral_lowrank)
from .errors import ConfigError
from .fga import SpatialGrid, build_grid, default_y_grid, evolve, outer_fields, psi_axis_factors, psi_prefactor
from .potentials import effective, make_potential
from .wavefunctions import make_wavefunction

logger = logging.getLogger(__name__)

WORKERS_ENV = "CALSIM_WORKERS"


@dataclass
class Setup:
    """Everything a chunk worker needs; built once per run."""

    config: RunConfig
    bath: BathParameters
    modes: object
    potential: object
    psi0: object
    psi0_values: np.ndarray
    pq: object
    x_grid: SpatialGrid
    y_grid: SpatialGrid
    kernel: object
    lags: np.ndarray
    n_steps: int
    dt: float

    @property
    def epsilon(self):
        return self.config.system.epsilon


def prepare(config: RunConfig) -> Setup:
    s, g, t = config.system, config.grid, config.time
    D = s.dimension
    bath = BathParameters(mode_count=config.bath.modes, omega_max=config.bath.omega_max, omega_c=config.bath.omega_c,
                          beta=config.bath.beta, xi=config.bath.xi, epsilon=s.epsilon)
    modes = ohmic_modes(bath)
    base = make_potential(s.potential, D, **s.potential_params)
    potential = effective(base, modes)
    psi0 = make_wavefunction(s.initial, s.epsilon, D, **dict(s.initial_params))
    if psi0.dimension != D:
        raise ConfigError(f"system.initial: wavefunction has dimension {psi0.dimension}, system has {D}")
    pq = build_grid(list(zip(g.p_min, g.p_max)), list(zip(g.q_min, g.q_max)), g.dp, g.dq)
    x_grid = SpatialGrid.from_ranges(g.x_min, g.x_max, g.dx)
    if g.y_min is not None:
        y_grid = SpatialGrid.from_ranges(g.y_min, g.y_max, g.dy)
    else:
        y_grid = default_y_grid(list(zip(g.q_min, g.q_max)), g.dq, s.epsilon)
    psi0_values = psi0(y_grid.points())
    norm = float(np.sum(np.abs(psi0_values) ** 2) * y_grid.cell_volume)
    if abs(norm - 1.0) > 1e-6:
        logger.warning("initial wavefunction has norm %.8f on the y-grid (|norm - 1| > 1e-6)", norm)
    n_steps, dt = t.n_steps, t.step
    if config.dyson.rank > n_steps + 1:
        raise ConfigError(f"dyson.rank: must not exceed N_t + 1 = {n_steps + 1}")
    if n_steps >= 1:
        kernel = low_rank_decompose(correlation_matrix(modes, bath, n_steps, dt), config.dyson.rank)
    else:
        kernel = None
    lags = np.asarray(correlation_function(modes, bath, np.arange(n_steps + 1) * dt), dtype=complex).reshape(-1)
    return Setup(config, bath, modes, potential, psi0, psi0_values, pq, x_grid, y_grid, kernel, lags, n_steps, dt)


def new_accumulator(setup: Setup):
    c = setup.config
    return DysonAccumulator(c.dyson.nbar, c.dyson.rank, c.system.dimension, setup.x_grid.size)


def chunk_bounds(total, chunk_size):
    return [(a, min(a + chunk_size, total)) for a in range(0, total, chunk_size)]


def process_chunk(setup: Setup, start, stop, acc: DysonAccumulator):
    """Evolve trajectories ``start:stop`` and add their contributions to ``acc``; returns dropped ids."""
    eps = setup.epsilon
    pts = setup.pq.subset(slice(start, stop))
    hist = evolve(pts.p, pts.q, setup.potential, setup.n_steps, setup.dt, ids=np.arange(start, stop))
    keep = ~hist.dropped
    pref = psi_prefactor(hist, setup.psi0_values, setup.y_grid, eps)
    psi = outer_fields(np.where(keep, pref, 0.0), psi_axis_factors(hist.final, setup.x_grid, eps))
    psi[~keep] = 0.0
    K, D, r = pts.size, setup.config.system.dimension, setup.config.dyson.rank
    if setup.n_steps >= 1 and acc.nbar > 0:
        integrals = coupling_integrals(hist, setup.kernel)
        if setup.config.dyson.use_lowrank_for_pair:
            pair = pair_integral_lowrank(hist, setup.kernel)
        else:
            pair = pair_integral(hist, setup.lags)
        integrals[~keep] = 0.0
        pair[~keep] = 0.0
    else:
        integrals = np.zeros((K, r, D), dtype=complex)
        pair = np.zeros(K, dtype=complex)
    weights = np.where(keep, pts.weights, 0.0)
    acc.accumulate(weights, psi, integrals, pair)
    return start + np.flatnonzero(~keep)


_WORKER_SETUP = None


def _worker_init(setup):
    global _WORKER_SETUP
    _WORKER_SETUP = setup


def _worker_chunk(bounds):
    start, stop = bounds
    with threadpool_limits(limits=1):
        acc = new_accumulator(_WORKER_SETUP)
        dropped = process_chunk(_WORKER_SETUP, start, stop, acc)
    return acc.fields, dropped


@dataclass
class SimulationResult:
    setup: Setup
    accumulator: DysonAccumulator
    dropped: np.ndarray
    wall_time: float
    workers: int
    metadata: dict = field(default_factory=dict)

    @property
    def x_grid(self):
        return self.setup.x_grid

    def density(self, nbar=None, rank=None, truncation=None) -> DensityGrid:
        """Density from the accumulated fields, optionally at a lower order or rank."""
        cfg = self.setup.config
        truncation = truncation or cfg.dyson.truncation
        lambdas = self.setup.kernel.lambdas if self.setup.kernel is not None else np.zeros(cfg.dyson.rank)
        rho, residue = assemble_density(self.accumulator, lambdas, nbar=nbar, rank=rank, truncation=truncation)
        grid = DensityGrid(values=rho.reshape(self.x_grid.shape), grid=self.x_grid)
        meta = dict(self.metadata)
        meta.update({
            "result.nbar": self.accumulator.nbar if nbar is None else int(nbar),
            "result.rank": self.accumulator.rank if rank is None else int(rank),
            "result.truncation": truncation,
            "result.imag_residue": residue,
            "result.integral": grid.integral,
        })
        if self.setup.kernel is not None:
            r = self.accumulator.rank if rank is None else int(rank)
            meta["result.frobenius_error"] = self.setup.kernel.truncate(r).frobenius_error
        grid.metadata = meta
        return grid


def resolve_workers(requested=None, config: RunConfig | None = None):
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ConfigError(f"{WORKERS_ENV}: expected an integer, got '{env}'") from None
    elif requested is not None:
        n = int(requested)
    else:
        n = config.execution.workers if config is not None else 1
    if n < 1:
        raise ConfigError(f"worker count must be >= 1, got {n}")
    return n


def check_memory(config: RunConfig, x_size, workers):
    c = config.dyson
    per_acc = 16 * exact_field_count(c.nbar, c.rank, config.system.dimension) * x_size
    copies = 1 if workers == 1 else 1 + 2 * workers
    needed_mb = per_acc * copies / 2**20
    from .errors import MemoryBudgetError

    if needed_mb > config.execution.memory_budget_mb:
        raise MemoryBudgetError(
            f"accumulator needs {needed_mb:.1f} MiB ({copies} cop{'y' if copies == 1 else 'ies'} of "
            f"{per_acc / 2**20:.1f} MiB), budget execution.memory_budget_mb = {config.execution.memory_budget_mb}")
    return needed_mb


def simulate(config: RunConfig, workers=None) -> SimulationResult:
    """Run the full algorithm for ``config``."""
    t0 = time.perf_counter()
    workers = resolve_workers(workers, config)
    setup = prepare(config)
    check_memory(config, setup.x_grid.size, workers)
    acc = new_accumulator(setup)
    bounds = chunk_bounds(setup.pq.size, config.execution.chunk_size)
    logger.info("%d trajectories in %d chunks, N_t=%d, dt=%g, workers=%d", setup.pq.size, len(bounds),
                setup.n_steps, setup.dt, workers)
    dropped = []
    with threadpool_limits(limits=1):
        if workers == 1 or len(bounds) == 1:
            for i, (a, b) in enumerate(bounds):
                dropped.append(process_chunk(setup, a, b, acc))
                logger.debug("chunk %d/%d done", i + 1, len(bounds))
        else:
            ctx = mp.get_context("fork")
            with ProcessPoolExecutor(max_workers=workers, mp_context=ctx, initializer=_worker_init,
                                     initargs=(setup,)) as pool:
                window = 2 * workers
                pending = []
                it = iter(bounds)
                for b in it:
                    pending.append(pool.submit(_worker_chunk, b))
                    if len(pending) >= window:
                        break
                while pending:
                    fields, drop = pending.pop(0).result()
                    for key, val in fields.items():
                        acc.fields[key] += val
                    dropped.append(drop)
                    nxt = next(it, None)
                    if nxt is not None:
                        pending.append(pool.submit(_worker_chunk, nxt))
    dropped = np.concatenate(dropped) if dropped else np.zeros(0, dtype=int)
    if len(dropped):
        logger.warning("%d trajectories dropped (singular Z); ids: %s", len(dropped), dropped[:50].tolist())
    wall = time.perf_counter() - t0
    meta = {f"config.{k}": v for k, v in config.flat(include_execution=False).items()}
    meta.update({
        "run_id": config.run_id(),
        "calsim_version": __version__,
        "n_trajectories": setup.pq.size,
        "n_steps": setup.n_steps,
        "dt_used": setup.dt,
        "dropped_trajectories": len(dropped),
        "dropped_weight": float(np.sum(setup.pq.weights[dropped])) if len(dropped) else 0.0,
        "bath_quadratic_shift": setup.potential.quadratic_shift,
    })
    return SimulationResult(setup=setup, accumulator=acc, dropped=dropped, wall_time=wall, workers=workers,
                            metadata=meta)
