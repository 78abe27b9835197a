"""Density files: CSV with ``# key=value`` header lines plus a paired ``.meta`` file."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .fga import SpatialGrid


def _meta_lines(metadata):
    return [f"# {k}={_fmt(v)}" for k, v in sorted(metadata.items())]


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_density(path, density, extra_meta=None):
    """Write ``path`` (CSV) and ``path.with_suffix('.meta')``.

    The CSV header only carries run-invariant metadata, so identical runs give
    identical bytes; ``extra_meta`` (wall time, worker count, ...) goes to the
    ``.meta`` file only.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    grid = density.grid
    D = grid.dimension
    header = _meta_lines(density.metadata)
    names = ",".join([f"x{d + 1}" for d in range(D)] + ["rho"])
    pts = grid.points().reshape(-1, D)
    table = np.column_stack([pts, np.asarray(density.values, dtype=float).reshape(-1)])
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.writelines(line + "\n" for line in header)
        fh.write(names + "\n")
        np.savetxt(fh, table, fmt="%.17g", delimiter=",")
    meta = dict(density.metadata)
    meta.update(extra_meta or {})
    meta_path = path.with_suffix(".meta")
    with open(meta_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.writelines(line + "\n" for line in _meta_lines(meta))
    return path, meta_path


@dataclass
class DensityFile:
    grid: SpatialGrid
    values: np.ndarray
    metadata: dict


def read_density(path) -> DensityFile:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"density file not found: {path}")
    meta = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            key, _, val = line[1:].strip().partition("=")
            meta[key] = val
    data = np.loadtxt(path, delimiter=",", skiprows=len(meta) + 1, ndmin=2, encoding="utf-8")
    D = data.shape[1] - 1
    axes = tuple(np.unique(data[:, d]) for d in range(D))
    shape = tuple(len(a) for a in axes)
    if int(np.prod(shape)) != data.shape[0]:
        raise ConfigError(f"{path}: rows do not form a rectangular grid")
    return DensityFile(grid=SpatialGrid(axes), values=data[:, D].reshape(shape), metadata=meta)


def density_difference(a: DensityFile, b: DensityFile, tol=1e-9):
    """(L2, max) norms of a - b; L2 by the rectangle rule on the shared grid."""
    if a.grid.shape != b.grid.shape or any(
            not np.allclose(u, v, rtol=0, atol=tol * max(1.0, float(np.max(np.abs(u)))))
            for u, v in zip(a.grid.axes, b.grid.axes)):
        raise ConfigError(f"grid mismatch: {a.grid.shape} vs {b.grid.shape}")
    diff = a.values - b.values
    return float(np.sqrt(np.sum(diff**2) * a.grid.cell_volume)), float(np.max(np.abs(diff), initial=0.0))


def l2_norm(values, grid: SpatialGrid):
    return float(np.sqrt(np.sum(np.asarray(values) ** 2) * grid.cell_volume))
