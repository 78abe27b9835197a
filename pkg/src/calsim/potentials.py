"""System potentials with analytic gradients/Hessians, and the bath-shifted effective potential.

Every potential works on arrays of positions with shape ``(..., D)``:
``value`` returns ``(...)``, ``gradient`` ``(..., D)`` and ``hessian`` ``(..., D, D)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .bath import SpectralModes
from .errors import ConfigError

# degree-5 smoothstep: f(0)=0, f(1)=1, f'(0)=f'(1)=f''(0)=f''(1)=0
SMOOTHSTEP_COEFFS = np.array([0.0, 0.0, 0.0, 10.0, -15.0, 6.0])


def smoothstep(t):
    t = np.asarray(t, dtype=float)
    if np.any((t < 0) | (t > 1)):
        raise ValueError("smoothstep argument must lie in [0, 1]")
    return t**3 * (10.0 + t * (-15.0 + 6.0 * t))


def _smoothstep_all(t):
    """(f, f', f'') without the range check; callers guarantee t in [0, 1]."""
    f = t**3 * (10.0 + t * (-15.0 + 6.0 * t))
    df = 30.0 * t**2 * (t - 1.0) ** 2
    d2f = 60.0 * t * (t - 1.0) * (2.0 * t - 1.0)
    return f, df, d2f


class Potential:
    kind = "custom"

    def __init__(self, dimension):
        self.dimension = int(dimension)

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (self.dimension,):
            raise ValueError(f"expected positions with trailing dimension {self.dimension}, got shape {x.shape}")
        return x

    def value(self, x):
        raise NotImplementedError

    def gradient(self, x):
        return self.derivatives(x)[0]

    def hessian(self, x):
        return self.derivatives(x)[1]

    def derivatives(self, x):
        """Return ``(gradient, hessian)``; used once per RK stage."""
        raise NotImplementedError

    def parameters(self):
        return {}


class Harmonic(Potential):
    kind = "harmonic"

    def __init__(self, dimension=1, omega=1.0):
        super().__init__(dimension)
        self.omega = float(omega)

    def value(self, x):
        x = self._check(x)
        return 0.5 * self.omega**2 * np.sum(x**2, axis=-1)

    def derivatives(self, x):
        x = self._check(x)
        hess = np.broadcast_to(self.omega**2 * np.eye(self.dimension), x.shape + (self.dimension,))
        return self.omega**2 * x, hess

    def parameters(self):
        return {"omega": self.omega}


class DoubleWell(Potential):
    """Sum over axes of ``-x^2 + 2 x^4``."""

    kind = "double_well"

    def value(self, x):
        x = self._check(x)
        return np.sum(-(x**2) + 2.0 * x**4, axis=-1)

    def derivatives(self, x):
        x = self._check(x)
        grad = -2.0 * x + 8.0 * x**3
        diag = -2.0 + 24.0 * x**2
        hess = diag[..., :, None] * np.eye(self.dimension)
        return grad, hess


class DoubleSlit(Potential):
    """Barrier ``h * S1(x1) * S2(x2)`` built from smoothstep splines.

    ``S1`` is 1 on the barrier and dips to 0 inside two slits of width ``w``
    at distance ``d1 + b`` from the origin; ``S2`` confines the barrier to a
    band of half-width ``d2`` (plus buffers ``b``) around ``x2 = 0``.
    """

    kind = "double_slit"

    def __init__(self, dimension=2, h=10.0, d1=0.35, d2=0.1, w=0.05, b=0.05):
        if dimension != 2:
            raise ConfigError("double_slit potential requires dimension 2")
        super().__init__(dimension)
        self.h, self.d1, self.d2, self.w, self.b = map(float, (h, d1, d2, w, b))
        if min(self.d1, self.d2, self.w, self.b) <= 0:
            raise ConfigError("double_slit lengths must be positive")

    def parameters(self):
        return {"h": self.h, "d1": self.d1, "d2": self.d2, "w": self.w, "b": self.b}

    def _profile1(self, x1):
        d1, b, w = self.d1, self.b, self.w
        u = np.abs(x1)
        s = np.where(x1 < 0, -1.0, 1.0)
        f = np.ones_like(u)
        df = np.zeros_like(u)
        d2f = np.zeros_like(u)
        down = (u >= d1) & (u < d1 + b)
        up = (u >= d1 + b + w) & (u < d1 + 2 * b + w)
        gap = (u >= d1 + b) & (u < d1 + b + w)
        f[gap] = 0.0
        t = np.clip((d1 + b - u) / b, 0.0, 1.0)
        g, dg, d2g = _smoothstep_all(t)
        f = np.where(down, g, f)
        df = np.where(down, -dg / b * s, df)
        d2f = np.where(down, d2g / b**2, d2f)
        t = np.clip((u - d1 - b - w) / b, 0.0, 1.0)
        g, dg, d2g = _smoothstep_all(t)
        f = np.where(up, g, f)
        df = np.where(up, dg / b * s, df)
        d2f = np.where(up, d2g / b**2, d2f)
        return f, df, d2f

    def _profile2(self, x2):
        d2, b = self.d2, self.b
        u = np.abs(x2)
        s = np.where(x2 < 0, -1.0, 1.0)
        f = np.where(u < d2, 1.0, 0.0)
        df = np.zeros_like(u)
        d2f = np.zeros_like(u)
        ramp = (u >= d2) & (u < d2 + b)
        t = np.clip((d2 + b - u) / b, 0.0, 1.0)
        g, dg, d2g = _smoothstep_all(t)
        f = np.where(ramp, g, f)
        df = np.where(ramp, -dg / b * s, df)
        d2f = np.where(ramp, d2g / b**2, d2f)
        return f, df, d2f

    def value(self, x):
        x = self._check(x)
        return self.h * self._profile1(x[..., 0])[0] * self._profile2(x[..., 1])[0]

    def derivatives(self, x):
        x = self._check(x)
        f1, df1, d2f1 = self._profile1(x[..., 0])
        f2, df2, d2f2 = self._profile2(x[..., 1])
        grad = self.h * np.stack([df1 * f2, f1 * df2], axis=-1)
        cross = df1 * df2
        hess = self.h * np.stack([np.stack([d2f1 * f2, cross], axis=-1),
                                  np.stack([cross, f1 * d2f2], axis=-1)], axis=-2)
        return grad, hess


class CustomPotential(Potential):
    """Potential given by user callables (value, gradient, hessian) on ``(..., D)`` arrays."""

    def __init__(self, dimension, value: Callable, gradient: Callable, hessian: Callable):
        super().__init__(dimension)
        self._value, self._gradient, self._hessian = value, gradient, hessian

    def value(self, x):
        return np.asarray(self._value(self._check(x)), dtype=float)

    def derivatives(self, x):
        x = self._check(x)
        return np.asarray(self._gradient(x), dtype=float), np.asarray(self._hessian(x), dtype=float)


POTENTIALS = {"harmonic": Harmonic, "double_well": DoubleWell, "double_slit": DoubleSlit}


def make_potential(kind, dimension, **params) -> Potential:
    try:
        cls = POTENTIALS[kind]
    except KeyError:
        raise ConfigError(f"unknown potential '{kind}' (choose from {sorted(POTENTIALS)})") from None
    try:
        return cls(dimension=dimension, **params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for potential '{kind}': {exc}") from None


@dataclass(frozen=True)
class EffectivePotential:
    """``V~(x) = V(x) + quadratic_shift * |x|^2`` (bath counter-term)."""

    base: Potential
    quadratic_shift: float = 0.0

    @property
    def dimension(self):
        return self.base.dimension

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return self.base.value(x) + self.quadratic_shift * np.sum(x**2, axis=-1)

    def derivatives(self, x):
        x = np.asarray(x, dtype=float)
        grad, hess = self.base.derivatives(x)
        if self.quadratic_shift == 0.0:
            return grad, hess
        D = self.dimension
        return grad + 2.0 * self.quadratic_shift * x, hess + 2.0 * self.quadratic_shift * np.eye(D)

    def gradient(self, x):
        return self.derivatives(x)[0]

    def hessian(self, x):
        return self.derivatives(x)[1]


def effective(model: Potential, modes: SpectralModes) -> EffectivePotential:
    shift = float(np.sum(modes.couplings**2 / (2.0 * modes.omegas**2)))
    return EffectivePotential(base=model, quadratic_shift=shift)
