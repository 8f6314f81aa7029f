"""Absorption nonlinearities g(x, u) for the p-Laplacian solver.

Supported kinds:
  none         g = 0
  power        g(x,u) = |x|^(-beta) |u|^(q-1) u
  exponential  g(x,u) = sign(u) (exp(tau |u|^lambda) - 1)
  custom       user-supplied odd nondecreasing g with primitive and derivative

Every kind exposes the pointwise value, the primitive G(x,u) = int_0^u g,
and du g, all vectorized over grid arrays.  `scalar_growth` strips the
spatial weight and returns the growth profile s -> g(s) on s >= 0, which is
what the subcritical/tail integral tests consume.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .grids import ParameterError

_GLX, _GLW = np.polynomial.legendre.leggauss(24)


@dataclass
class AbsorptionSpec:
    kind: str = "none"
    q: float = 0.0
    beta: float = 0.0
    tau: float = 0.0
    lam: float = 1.0
    g_fn: Callable | None = None
    G_fn: Callable | None = None
    gu_fn: Callable | None = None

    def __post_init__(self):
        if self.kind not in ("none", "power", "exponential", "custom"):
            raise ParameterError(f"unknown absorption kind {self.kind!r}")
        if self.kind == "power":
            if self.q <= 0:
                raise ParameterError("power absorption needs q > 0")
            if self.beta < 0:
                raise ParameterError("power absorption needs beta >= 0")
        if self.kind == "exponential":
            if self.tau <= 0:
                raise ParameterError("exponential absorption needs tau > 0")
            if self.lam < 1:
                raise ParameterError("exponential absorption needs lambda >= 1")
        if self.kind == "custom" and (self.g_fn is None or self.G_fn is None or self.gu_fn is None):
            raise ParameterError("custom absorption needs g, G, and du g callables")

    # weight carried by the power kind; 1 elsewhere
    def weight(self, absx: np.ndarray) -> np.ndarray:
        if self.kind == "power" and self.beta > 0:
            return np.asarray(absx, dtype=float) ** (-self.beta)
        return np.ones_like(np.asarray(absx, dtype=float))

    def g(self, absx, u):
        u = np.asarray(u, dtype=float)
        if self.kind == "none":
            return np.zeros_like(u)
        if self.kind == "power":
            # sign(u) |u|^q, the indeterminate-free form of |u|^(q-1) u
            return self.weight(absx) * np.sign(u) * np.abs(u) ** self.q
        if self.kind == "exponential":
            with np.errstate(over="ignore"):
                return np.sign(u) * np.expm1(self.tau * np.abs(u) ** self.lam)
        return self.g_fn(absx, u)

    def G(self, absx, u):
        u = np.asarray(u, dtype=float)
        if self.kind == "none":
            return np.zeros_like(u)
        if self.kind == "power":
            return self.weight(absx) * np.abs(u) ** (self.q + 1.0) / (self.q + 1.0)
        if self.kind == "exponential":
            a = np.abs(u)
            if self.lam == 1.0:
                with np.errstate(over="ignore"):
                    return (np.expm1(self.tau * a) - self.tau * a) / self.tau
            # primitive of exp(tau s^lambda) - 1 on [0, a] by Gauss-Legendre
            s = 0.5 * a[..., None] * (_GLX + 1.0)
            with np.errstate(over="ignore"):
                vals = np.expm1(self.tau * s**self.lam)
            return 0.5 * a * (vals @ _GLW)
        return self.G_fn(absx, u)

    def gu(self, absx, u):
        u = np.asarray(u, dtype=float)
        if self.kind == "none":
            return np.zeros_like(u)
        if self.kind == "power":
            with np.errstate(divide="ignore"):
                return self.weight(absx) * self.q * np.abs(u) ** (self.q - 1.0)
        if self.kind == "exponential":
            a = np.abs(u)
            with np.errstate(over="ignore"):
                return self.tau * self.lam * a ** (self.lam - 1.0) * np.exp(self.tau * a**self.lam)
        return self.gu_fn(absx, u)

    def scalar_growth(self, s):
        """Growth profile on s >= 0 with the spatial weight stripped."""
        s = np.asarray(s, dtype=float)
        if self.kind == "none":
            return np.zeros_like(s)
        if self.kind == "power":
            return s**self.q
        if self.kind == "exponential":
            with np.errstate(over="ignore"):
                return np.expm1(self.tau * s**self.lam)
        return self.g_fn(1.0, s)


def power_absorption(q: float, beta: float = 0.0) -> AbsorptionSpec:
    return AbsorptionSpec(kind="power", q=q, beta=beta)


def exponential_absorption(tau: float, lam: float = 1.0) -> AbsorptionSpec:
    return AbsorptionSpec(kind="exponential", tau=tau, lam=lam)


def no_absorption() -> AbsorptionSpec:
    return AbsorptionSpec(kind="none")
