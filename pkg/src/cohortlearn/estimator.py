"""Profiled nonlinear least squares for ``(beta, gamma)``.

Parameter vectors are ordered ``(beta, gamma)`` everywhere, including the
Hessian and the standard errors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateDataError, DomainError, NumericError
from .learning import PlmConfig, forecast_panels
from .panel import CohortPanel, demean_time

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class Theta:
    beta: float
    gamma: float

    def as_array(self) -> np.ndarray:
        return np.array([self.beta, self.gamma], dtype=float)

    @classmethod
    def from_array(cls, v) -> "Theta":
        return cls(float(v[0]), float(v[1]))


@dataclass(frozen=True)
class SearchConfig:
    gamma_lower: float = 2.0 / 3.0 + 1e-6
    gamma_upper: float = 10.0
    grid_points: int = 60
    tol: float = 1e-6
    max_iter: int = 200
    hessian_step: float | None = None  # None: (n log n)^(-1/4)

    def __post_init__(self):
        if not (0 < self.gamma_lower < self.gamma_upper < math.inf):
            raise DomainError(
                f"need 0 < gamma_lower < gamma_upper < inf, got {self.gamma_lower}, {self.gamma_upper}")
        if self.grid_points < 3:
            raise DomainError("grid_points must be at least 3")
        if not self.tol > 0:
            raise DomainError("tol must be positive")

    def grid(self) -> np.ndarray:
        return np.linspace(self.gamma_lower, self.gamma_upper, self.grid_points)


def nu_n(n: int) -> float:
    return n * math.log(n)


def default_hessian_step(n: int) -> float:
    return nu_n(n) ** -0.25


class ForecastCache:
    """Memoised time-demeaned forecast panels for one panel and PLM."""

    def __init__(self, panel: CohortPanel, plm: PlmConfig = PlmConfig()):
        self.panel = panel
        self.plm = plm
        self.z_tilde = demean_time(panel.z)
        self._store: dict[float, np.ndarray] = {}

    def prefetch(self, gammas) -> None:
        todo = [float(g) for g in np.atleast_1d(gammas) if float(g) not in self._store]
        if not todo:
            return
        p = self.panel
        for start in range(0, len(todo), 50):
            chunk = todo[start:start + 50]
            panels = demean_time(forecast_panels(p.y, p.x, chunk, p.l, p.u, self.plm))
            for g, a in zip(chunk, panels):
                self._store[g] = a

    def a_tilde(self, gamma: float) -> np.ndarray:
        g = float(gamma)
        if g not in self._store:
            self.prefetch([g])
        return self._store[g]

    def stack(self, gammas) -> np.ndarray:
        self.prefetch(gammas)
        return np.stack([self._store[float(g)] for g in gammas])


def _cache(panel, plm, cache):
    if cache is None:
        return ForecastCache(panel, plm)
    return cache


def objective_q(theta: Theta, panel: CohortPanel, plm: PlmConfig = PlmConfig(), cache=None) -> float:
    """Least squares criterion on time-demeaned data."""
    c = _cache(panel, plm, cache)
    r = c.z_tilde - theta.beta * c.a_tilde(theta.gamma)
    q = float(np.sum(r * r))
    if not math.isfinite(q):
        raise NumericError(f"non-finite objective at {theta}")
    return q


def profile_beta(gamma: float, panel: CohortPanel, plm: PlmConfig = PlmConfig(), cache=None) -> float:
    c = _cache(panel, plm, cache)
    a = c.a_tilde(gamma)
    saa = float(np.sum(a * a))
    if not saa > 0:
        raise DegenerateDataError(f"demeaned forecasts vanish at gamma={gamma}")
    return float(np.sum(a * c.z_tilde)) / saa


def profile_objective(gamma: float, panel: CohortPanel, plm: PlmConfig = PlmConfig(), cache=None) -> float:
    """Criterion with beta concentrated out."""
    c = _cache(panel, plm, cache)
    return objective_q(Theta(profile_beta(gamma, panel, plm, c), gamma), panel, plm, c)


def profile_on_grid(grid, cache: ForecastCache):
    """Profiled slopes and criteria on a grid, batched."""
    A = cache.stack(grid)
    zt = cache.z_tilde
    saz = np.einsum("gij,ij->g", A, zt)
    saa = np.einsum("gij,gij->g", A, A)
    if np.any(~(saa > 0)):
        bad = np.asarray(grid)[~(saa > 0)][0]
        raise DegenerateDataError(f"demeaned forecasts vanish at gamma={bad}")
    beta = saz / saa
    resid = zt[None] - beta[:, None, None] * A
    q = np.einsum("gij,gij->g", resid, resid)
    return beta, q


def golden_section(f, lo: float, hi: float, tol: float, max_iter: int = 200):
    """Minimise ``f`` on ``[lo, hi]``; returns ``(x, f(x), iterations, converged)``."""
    a, b = lo, hi
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    it = 0
    while b - a > tol and it < max_iter:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
        it += 1
    x, fx = (c, fc) if fc <= fd else (d, fd)
    return x, fx, it, b - a <= tol


def numerical_hessian(objective, theta_hat: Theta, step: float, gamma_bounds=None) -> np.ndarray:
    """Four-point second differences of ``objective`` at ``theta_hat``.

    Evaluation points whose gamma falls outside ``gamma_bounds`` are clipped to
    the boundary; use :func:`hessian_clipped` to detect this.
    """
    if not step > 0:
        raise DomainError("step must be positive")
    center = theta_hat.as_array()
    memo = {}

    def q(offset):
        key = tuple(offset)
        if key not in memo:
            v = center + step * np.asarray(offset, dtype=float)
            if gamma_bounds is not None:
                v[1] = min(max(v[1], gamma_bounds[0]), gamma_bounds[1])
            val = objective(Theta.from_array(v))
            if not math.isfinite(val):
                raise NumericError(f"non-finite objective at {v}")
            memo[key] = val
        return memo[key]

    M = np.empty((2, 2))
    for i in range(2):
        for j in range(i, 2):
            ei = np.eye(2, dtype=int)[i]
            ej = np.eye(2, dtype=int)[j]
            M[i, j] = (q(ei + ej) - q(-ei + ej) - q(ei - ej) + q(-ei - ej)) / (2.0 * step) ** 2
            M[j, i] = M[i, j]
    return M


def hessian_clipped(theta_hat: Theta, step: float, gamma_bounds) -> bool:
    return theta_hat.gamma - 2 * step < gamma_bounds[0] or theta_hat.gamma + 2 * step > gamma_bounds[1]


def standard_errors(hessian, s2) -> np.ndarray:
    inv = np.linalg.inv(hessian)
    with np.errstate(invalid="ignore"):
        return np.sqrt(2.0 * s2 * np.diag(inv))


@dataclass(frozen=True)
class FitResult:
    theta_hat: Theta
    q_min: float
    s2: float
    hessian: np.ndarray
    se: np.ndarray  # (beta, gamma)
    gamma_grid: np.ndarray = field(repr=False)
    q_grid: np.ndarray = field(repr=False)
    iterations: int = 0
    converged: bool = True
    interior: bool = True
    hessian_step: float = 0.0
    hessian_clipped: bool = False
    n: int = 0
    n_obs: int = 0

    @property
    def beta(self) -> float:
        return self.theta_hat.beta

    @property
    def gamma(self) -> float:
        return self.theta_hat.gamma

    @property
    def se_reliable(self) -> bool:
        return self.interior and not self.hessian_clipped and bool(np.all(np.isfinite(self.se)))

    def to_dict(self) -> dict:
        return {
            "beta": self.beta,
            "gamma": self.gamma,
            "s2": self.s2,
            "se_beta": _json_float(self.se[0]),
            "se_gamma": _json_float(self.se[1]),
            "hessian": self.hessian.tolist(),
            "q_min": self.q_min,
            "converged": bool(self.converged),
            "interior": bool(self.interior),
        }


def _json_float(v):
    v = float(v)
    return v if math.isfinite(v) else None


def estimate(panel: CohortPanel, plm: PlmConfig = PlmConfig(), search: SearchConfig = SearchConfig(),
             cache: ForecastCache | None = None, grid=None) -> FitResult:
    """Grid search plus golden-section refinement of the profiled criterion.

    ``grid`` overrides the coarse grid of ``search`` (its panels are cached, so a
    grid shared with the supF statistic costs nothing extra).
    """
    c = _cache(panel, plm, cache)
    bounds = (search.gamma_lower, search.gamma_upper)
    grid = search.grid() if grid is None else np.asarray(grid, dtype=float)
    _, q_grid = profile_on_grid(grid, c)
    if not np.all(np.isfinite(q_grid)):
        raise NumericError("non-finite profiled criterion on the grid")
    i = int(np.argmin(q_grid))
    lo = grid[max(i - 1, 0)]
    hi = grid[min(i + 1, grid.size - 1)]

    def fstar(g):
        return profile_objective(g, panel, plm, c)

    g_hat, q_hat, iters, converged = golden_section(fstar, lo, hi, search.tol, search.max_iter)
    if q_grid[i] < q_hat:
        g_hat, q_hat = float(grid[i]), float(q_grid[i])
    g_hat = float(g_hat)
    b_hat = profile_beta(g_hat, panel, plm, c)
    theta = Theta(b_hat, g_hat)
    q_min = objective_q(theta, panel, plm, c)
    s2 = q_min / panel.n_obs
    step = search.hessian_step if search.hessian_step is not None else default_hessian_step(panel.n)
    M = numerical_hessian(lambda th: objective_q(th, panel, plm, c), theta, step, bounds)
    try:
        se = standard_errors(M, s2)
    except np.linalg.LinAlgError:
        se = np.full(2, np.nan)
    interior = bool(g_hat - bounds[0] > search.tol and bounds[1] - g_hat > search.tol)
    return FitResult(
        theta_hat=theta, q_min=q_min, s2=s2, hessian=M, se=se,
        gamma_grid=grid, q_grid=q_grid, iterations=iters, converged=bool(converged),
        interior=interior, hessian_step=step,
        hessian_clipped=bool(hessian_clipped(theta, step, bounds)),
        n=panel.n, n_obs=panel.n_obs,
    )
