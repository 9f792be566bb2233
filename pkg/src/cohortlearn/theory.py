"""Closed-form limit quantities: covariance kernel, Hessian limit and weight approximations."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gamma as gamma_fn

from .errors import DomainError, IdentificationError


def _check_pole(g1, g2):
    if np.any(np.asarray(g1) + np.asarray(g2) <= 1.0):
        raise DomainError("kernel requires g1 + g2 > 1")


def phi(g1, g2):
    """Covariance kernel ``g1 g2 / (g1 + g2 - 1)``; accepts arrays."""
    _check_pole(g1, g2)
    g1 = np.asarray(g1, dtype=float)
    g2 = np.asarray(g2, dtype=float)
    out = g1 * g2 / (g1 + g2 - 1.0)
    return float(out) if out.ndim == 0 else out


def upsilon(k: int, g1, g2):
    """Limit of ``s E[r^(k)(g1) r^(k)(g2)] / omega^2``; ``k = 0`` is :func:`phi`."""
    if k < 0:
        raise DomainError("derivative order must be non-negative")
    if k == 0:
        return phi(g1, g2)
    _check_pole(g1, g2)
    a = np.asarray(g1, dtype=float)
    b = np.asarray(g2, dtype=float)
    g1, g2 = np.minimum(a, b), np.maximum(a, b)  # fixed order makes symmetry exact
    num = k * (1.0 - (g1 - g2) ** 2) + (g1 - 1.0) * g1 + (g2 - 1.0) * g2
    out = k * gamma_fn(2 * k - 1) * num / (g1 + g2 - 1.0) ** (2 * k + 1)
    return float(out) if out.ndim == 0 else out


def kernel_matrix(grid) -> np.ndarray:
    g = np.asarray(grid, dtype=float)
    return phi(g[:, None], g[None, :])


@dataclass(frozen=True)
class LimitParams:
    omega2: float
    lambda2: float

    def __post_init__(self):
        if not self.omega2 > 0:
            raise DomainError("omega2 must be positive")
        if not 0 < self.lambda2 <= 1:
            raise DomainError("lambda2 must lie in (0, 1]")

    @classmethod
    def plug_in(cls, n: int, u: int, l: int, omega2: float) -> "LimitParams":
        """Finite-sample ``lambda^2 = (log u - log l) / log n * (1 - u/n)``."""
        lam2 = (math.log(u) - math.log(l)) / math.log(n) * (1.0 - u / n)
        return cls(omega2, lam2)


def ar1_long_run_variance(phi_y: float) -> float:
    """Sum of autocovariances of a unit-variance AR(1): ``(1 + phi) / (1 - phi)``."""
    if not abs(phi_y) < 1:
        raise DomainError("AR coefficient must lie in (-1, 1)")
    return (1.0 + phi_y) / (1.0 - phi_y)


def hessian_c(theta, lim: LimitParams) -> np.ndarray:
    """Half the limiting Hessian of the scaled criterion, ordered ``(beta, gamma)``.

    ``theta`` is anything with ``beta`` and ``gamma`` attributes.
    """
    beta, gamma = float(theta.beta), float(theta.gamma)
    if beta == 0:
        raise IdentificationError("the limit Hessian is singular at beta = 0")
    if not gamma > 2.0 / 3.0:
        raise DomainError("gamma must exceed 2/3")
    scale = lim.omega2 * lim.lambda2 * phi(gamma, gamma)
    off = beta / gamma * (gamma - 1.0) / (2.0 * gamma - 1.0)
    dd = beta ** 2 / gamma * (1.0 / gamma + 2.0 * (gamma - 1.0)) / (2.0 * gamma - 1.0) ** 2
    return scale * np.array([[1.0, off], [off, dd]])


def h_weight(j, s, gamma: float, k: int = 0):
    """Power-law approximation ``gamma j^(gamma-1) / s^gamma`` and its gamma-derivatives."""
    j = np.asarray(j, dtype=float)
    if np.any(j < 1) or np.any(j > s):
        raise DomainError("need 1 <= j <= s")
    h = gamma / s ** gamma * j ** (gamma - 1.0)
    if k == 0:
        out = h
    else:
        lr = np.log(j / s)
        out = h * lr ** (k - 1) * (lr + k / gamma)
    return float(out) if np.ndim(out) == 0 else out


def r_approx(gamma: float, k: int, y_window) -> float:
    """Approximate (derivative of the) centred forecast from a length-``s`` window."""
    y = np.asarray(y_window, dtype=float)
    s = y.size
    return float(h_weight(np.arange(1, s + 1), s, gamma, k) @ y)
