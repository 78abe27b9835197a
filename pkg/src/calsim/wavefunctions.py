"""Initial system wavefunctions. All are callables on position arrays of shape ``(..., D)``."""

from __future__ import annotations

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .errors import ConfigError


class Wavefunction:
    kind = "custom"
    dimension = 1

    def __call__(self, y):
        raise NotImplementedError

    def parameters(self):
        return {}


class GaussianPacket(Wavefunction):
    """Normalised Gaussian ``prod_d (pi eps s_d)^(-1/4) exp(-(y-c)^2/(2 eps s) + i p (y-c)/eps)``.

    With zero center/momentum and unit width this is the standard coherent state.
    """

    kind = "gaussian"

    def __init__(self, epsilon, dimension=1, center=0.0, momentum=0.0, width=1.0):
        self.epsilon = float(epsilon)
        self.dimension = int(dimension)
        self.center = np.broadcast_to(np.asarray(center, dtype=float), (self.dimension,)).copy()
        self.momentum = np.broadcast_to(np.asarray(momentum, dtype=float), (self.dimension,)).copy()
        self.width = np.broadcast_to(np.asarray(width, dtype=float), (self.dimension,)).copy()
        if np.any(self.width <= 0):
            raise ConfigError("gaussian width must be positive")

    def parameters(self):
        return {"center": self.center.tolist(), "momentum": self.momentum.tolist(), "width": self.width.tolist()}

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        eps, c, p, s = self.epsilon, self.center, self.momentum, self.width
        expo = -((y - c) ** 2) / (2 * eps * s) + 1j * p * (y - c) / eps
        norm = np.prod((np.pi * eps * s) ** -0.25)
        return norm * np.exp(expo.sum(axis=-1))


def _double_well_pair(x, eps):
    # C = 5 (41 + 40 exp(-1/(8 eps)))^(-1/2) (2 pi eps)^(-1/4) makes the pair unit-norm
    c = 5.0 * (41.0 + 40.0 * np.exp(-1.0 / (8.0 * eps))) ** -0.5 * (2 * np.pi * eps) ** -0.25
    return c * (np.exp(-((x - 0.5) ** 2) / (4 * eps)) + 0.8 * np.exp(-((x + 0.5) ** 2) / (4 * eps)))


class DoubleWellPair(Wavefunction):
    """Two unequal Gaussians at x = +1/2 and x = -1/2 (1-D)."""

    kind = "double_well_pair"
    dimension = 1

    def __init__(self, epsilon):
        self.epsilon = float(epsilon)

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        return _double_well_pair(y[..., 0], self.epsilon).astype(complex)


class ProductWavefunction(Wavefunction):
    """Tensor product of 1-D factors, one per axis."""

    kind = "product"

    def __init__(self, factors):
        self.factors = list(factors)
        if any(f.dimension != 1 for f in self.factors):
            raise ConfigError("product wavefunction factors must be one-dimensional")
        self.dimension = len(self.factors)

    def parameters(self):
        return {"factors": [f.kind for f in self.factors]}

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        out = np.ones(y.shape[:-1], dtype=complex)
        for d, f in enumerate(self.factors):
            out = out * f(y[..., d : d + 1])
        return out


class DoubleSlitPacket(Wavefunction):
    """Two Gaussians at x1 = +-q1 (aligned with the slits), centered at x2 = q2, momentum (p1, p2)."""

    kind = "double_slit"
    dimension = 2

    def __init__(self, epsilon, q1=0.425, q2=-1.0, p1=0.0, p2=8.0):
        self.epsilon = float(epsilon)
        self.q1, self.q2, self.p1, self.p2 = map(float, (q1, q2, p1, p2))

    def parameters(self):
        return {"q1": self.q1, "q2": self.q2, "p1": self.p1, "p2": self.p2}

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        eps = self.epsilon
        x1, x2 = y[..., 0], y[..., 1]
        c = (8 * np.pi * eps * (1 + np.exp(-self.q1**2 / (4 * eps)))) ** -0.5
        g1 = np.exp(-((x1 - self.q1) ** 2) / (8 * eps)) + np.exp(-((x1 + self.q1) ** 2) / (8 * eps))
        g2 = np.exp(-((x2 - self.q2) ** 2) / (8 * eps))
        return c * g1 * g2 * np.exp(1j * (self.p1 * x1 + self.p2 * x2) / eps)


class TabulatedWavefunction(Wavefunction):
    """Linear interpolation of complex values on a rectangular grid; zero outside."""

    kind = "table"

    def __init__(self, axes, values):
        self.axes = [np.asarray(a, dtype=float) for a in axes]
        self.dimension = len(self.axes)
        values = np.asarray(values, dtype=complex)
        opts = dict(bounds_error=False, fill_value=0.0)
        self._re = RegularGridInterpolator(self.axes, values.real, **opts)
        self._im = RegularGridInterpolator(self.axes, values.imag, **opts)

    @classmethod
    def from_csv(cls, path):
        """Rows ``x1[,x2,...],re,im`` in row-major grid order."""
        data = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
        D = data.shape[1] - 2
        axes = [np.unique(data[:, d]) for d in range(D)]
        shape = tuple(len(a) for a in axes)
        if np.prod(shape) != data.shape[0]:
            raise ConfigError(f"{path}: table is not a full rectangular grid")
        values = (data[:, D] + 1j * data[:, D + 1]).reshape(shape)
        return cls(axes, values)

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        return self._re(y) + 1j * self._im(y)


def make_wavefunction(kind, epsilon, dimension, **params) -> Wavefunction:
    if kind == "gaussian":
        return GaussianPacket(epsilon, dimension, **params)
    if kind == "double_well_pair":
        if dimension != 1:
            raise ConfigError("double_well_pair initial state is one-dimensional; use 'product' for D > 1")
        return DoubleWellPair(epsilon)
    if kind == "product":
        names = params.pop("factors", None)
        if names is None or len(names) != dimension:
            raise ConfigError("product initial state needs 'factors' with one entry per dimension")
        return ProductWavefunction([make_wavefunction(n, epsilon, 1) for n in names])
    if kind == "double_slit":
        return DoubleSlitPacket(epsilon, **params)
    if kind == "table":
        path = params.get("path")
        if path is None:
            raise ConfigError("table initial state needs 'path'")
        return TabulatedWavefunction.from_csv(path)
    raise ConfigError(f"unknown initial wavefunction '{kind}'")
