"""Command line interface: ``calsim run|bath|lowrank|diff|verify``.

Exit codes: 0 success, 1 failed verification or unexpected error, 2 configuration
error, 3 numerical failure, 4 memory-budget refusal.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .errors import CalsimError, ConfigError

logger = logging.getLogger("calsim")


def _ranks(text):
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got '{text}'") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty rank list")
    return vals


def cmd_run(args):
    from .config import load_config
    from .io import write_density
    from .runner import simulate

    cfg = load_config(args.config)
    if args.output:
        cfg.output.directory = args.output
    result = simulate(cfg, workers=args.workers)
    out_dir = Path(cfg.output.directory)
    extra = {"run.wall_time_s": round(result.wall_time, 3), "run.workers": result.workers,
             "run.config_file": cfg.source or ""}
    orders = [None, *range(cfg.dyson.nbar + 1)] if args.all_orders else [None]
    for nbar in orders:
        density = result.density(nbar=nbar)
        name = cfg.output.name if nbar is None else f"{cfg.output.name}_nbar{nbar}"
        path, _ = write_density(out_dir / f"{name}.csv", density, extra)
        print(f"wrote {path}  integral={density.integral:.10f}  nbar={density.metadata['result.nbar']}")
    if len(result.dropped):
        print(f"dropped trajectories: {len(result.dropped)}")
    return 0


def cmd_bath(args):
    from .bath import BathParameters, correlation_function, correlation_matrix, ohmic_modes
    from .config import load_config

    cfg = load_config(args.config)
    b = cfg.bath
    params = BathParameters(mode_count=b.modes, omega_max=b.omega_max, omega_c=b.omega_c, beta=b.beta, xi=b.xi,
                            epsilon=cfg.system.epsilon)
    modes = ohmic_modes(params)
    L = modes.size
    rows = range(L) if args.all or L <= 12 else [*range(5), *range(L - 5, L)]
    print(f"{'l':>5} {'omega_l':>22} {'c_l':>22}")
    for i in rows:
        print(f"{i + 1:5d} {modes.omegas[i]:22.15e} {modes.couplings[i]:22.15e}")
    print(f"omega_L - omega_max = {modes.omegas[-1] - params.omega_max:.3e}")
    print(f"all couplings zero: {bool(np.all(modes.couplings == 0))}")
    b0 = complex(correlation_function(modes, params, 0.0))
    terms = [0.5 * c * c / (params.epsilon * w) / math.tanh(0.5 * params.beta * params.epsilon * w)
             for c, w in zip(modes.couplings.tolist(), modes.omegas.tolist())]
    oracle = math.fsum(terms)
    print(f"B(0) = {b0.real:.17g} {b0.imag:+.3g}i   compensated sum = {oracle:.17g}   diff = {abs(b0 - oracle):.2e}")
    print(f"quadratic shift sum c^2/(2 w^2) = {float(np.sum(modes.couplings**2 / (2 * modes.omegas**2))):.17g}")
    n = cfg.time.n_steps
    if n >= 1:
        mat = correlation_matrix(modes, params, n, cfg.time.step)
        lam = np.linalg.eigvalsh(mat.entries)
        nz = np.abs(lam[np.abs(lam) > 0])
        cond = float(nz.max() / nz.min()) if len(nz) else float("nan")
        print(f"correlation matrix {mat.size}x{mat.size}, dt={mat.dt:g}: |B|_F = {np.linalg.norm(mat.entries):.6e}, "
              f"eigenvalues in [{lam.min():.3e}, {lam.max():.3e}], |lambda| ratio = {cond:.3e}")
    return 0


def cmd_lowrank(args):
    from .bath import BathParameters, correlation_matrix, low_rank_decompose, ohmic_modes
    from .config import load_config

    cfg = load_config(args.config)
    b = cfg.bath
    params = BathParameters(mode_count=b.modes, omega_max=b.omega_max, omega_c=b.omega_c, beta=b.beta, xi=b.xi,
                            epsilon=cfg.system.epsilon)
    n = cfg.time.n_steps
    if n < 1:
        raise ConfigError("time.t_final: low-rank analysis needs at least one time step")
    mat = correlation_matrix(ohmic_modes(params), params, n, cfg.time.step)
    norm = np.linalg.norm(mat.entries)
    print(f"N_t = {n}, dt = {mat.dt:g}, |B|_F = {norm:.6e}")
    print(f"{'rank':>6} {'frobenius_error':>18} {'relative':>12} {'direct':>18}")
    prev = math.inf
    monotone = True
    for r in sorted(args.ranks):
        if not 1 <= r <= mat.size:
            raise ConfigError(f"--ranks: rank {r} outside [1, {mat.size}]")
        k = low_rank_decompose(mat, r)
        direct = np.linalg.norm(k.reconstruct() - mat.entries)
        rel = k.frobenius_error / norm if norm else 0.0
        print(f"{r:6d} {k.frobenius_error:18.6e} {rel:12.3e} {direct:18.6e}")
        monotone &= k.frobenius_error <= prev
        prev = k.frobenius_error
    print(f"monotone non-increasing: {monotone}")
    return 0


def cmd_diff(args):
    from .io import density_difference, read_density

    l2, mx = density_difference(read_density(args.a), read_density(args.b))
    print(f"L2 = {l2:.10e}")
    print(f"max = {mx:.10e}")
    return 0


def cmd_verify(args):
    from .verify import format_table, run_suite

    results = run_suite(seed=args.seed)
    print(format_table(results))
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return 1 if failed else 0


def build_parser():
    p = argparse.ArgumentParser(prog="calsim", description="Reduced density of the Caldeira-Leggett model.")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging (-v info, -vv debug)")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="compute the density for a config file")
    r.add_argument("--config", required=True)
    r.add_argument("--output", help="output directory (overrides output.directory)")
    r.add_argument("--workers", type=int, help="worker processes (CALSIM_WORKERS overrides)")
    r.add_argument("--all-orders", action="store_true", help="also write densities for every lower order nbar")
    r.set_defaults(func=cmd_run)

    b = sub.add_parser("bath", help="print the bath modes and correlation summary")
    b.add_argument("--config", required=True)
    b.add_argument("--all", action="store_true", help="print every mode")
    b.set_defaults(func=cmd_bath)

    lr = sub.add_parser("lowrank", help="Frobenius error of rank-r truncations")
    lr.add_argument("--config", required=True)
    lr.add_argument("--ranks", type=_ranks, default=[5, 10, 20, 40])
    lr.set_defaults(func=cmd_lowrank)

    d = sub.add_parser("diff", help="L2 and max-norm difference of two density files")
    d.add_argument("a")
    d.add_argument("b")
    d.set_defaults(func=cmd_diff)

    v = sub.add_parser("verify", help="run the oracle suite")
    v.add_argument("--seed", type=int, default=2024)
    v.set_defaults(func=cmd_verify)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CalsimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
