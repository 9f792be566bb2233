"""Wald and t tests under identification; supF test for ``beta = 0``.

Under ``beta = 0`` the gain is not identified, so Wald-type inference is
refused there and the supF statistic takes over, with critical values from a
simulated Gaussian process or p-values from a multiplier bootstrap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import DegenerateDataError, DomainError, IdentificationError, NumericError
from .estimator import ForecastCache, FitResult, golden_section, profile_objective
from .learning import PlmConfig
from .panel import CohortPanel, replication_rng
from .theory import kernel_matrix

DEFAULT_LEVELS = (0.01, 0.05, 0.10)


def default_supf_grid(points: int = 200, lower: float = 2.0 / 3.0 + 1e-6, upper: float = 10.0) -> np.ndarray:
    return np.linspace(lower, upper, points)


# --------------------------------------------------------------------------
# Wald / t


@dataclass(frozen=True)
class WaldSpec:
    R: np.ndarray
    rho0: np.ndarray

    def __post_init__(self):
        R = np.atleast_2d(np.asarray(self.R, dtype=float))
        rho0 = np.atleast_1d(np.asarray(self.rho0, dtype=float))
        if R.shape[1] != 2 or R.shape[0] not in (1, 2):
            raise DomainError(f"restriction matrix must be 1x2 or 2x2, got {R.shape}")
        if rho0.shape != (R.shape[0],):
            raise DomainError("rho0 must have one entry per restriction")
        if np.linalg.matrix_rank(R) != R.shape[0]:
            raise DomainError("restriction matrix must have full row rank")
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "rho0", rho0)

    @property
    def q(self) -> int:
        return self.R.shape[0]

    def restricts_beta_to_zero(self) -> bool:
        """True if every parameter satisfying the null has ``beta = 0``."""
        if self.q == 2:
            return abs(np.linalg.solve(self.R, self.rho0)[0]) == 0.0
        r = self.R[0]
        return r[1] == 0.0 and self.rho0[0] == 0.0

    @classmethod
    def single(cls, which: str, value: float) -> "WaldSpec":
        row = {"beta": [1.0, 0.0], "gamma": [0.0, 1.0]}[which]
        return cls(np.array([row]), np.array([value]))


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    df: int = 1
    kind: str = "wald"

    def to_dict(self) -> dict:
        return {"test": self.kind, "statistic": self.statistic, "p_value": self.p_value, "df": self.df}


def wald(fit: FitResult, spec: WaldSpec, force: bool = False) -> TestResult:
    """Wald statistic with chi-square(q) p-value.

    ``force=True`` skips the ``beta = 0`` guard; the resulting p-value is not
    valid and is only meant for demonstrating the size distortion.
    """
    if spec.restricts_beta_to_zero() and not force:
        raise IdentificationError(
            "the null restricts beta = 0, where gamma is not identified; use the supF test")
    d = spec.R @ fit.theta_hat.as_array() - spec.rho0
    try:
        Minv = np.linalg.inv(fit.hessian)
        V = spec.R @ Minv @ spec.R.T
        w = 0.5 * float(d @ np.linalg.solve(V, d)) / fit.s2
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"singular Hessian: {exc}") from exc
    if not math.isfinite(w):
        raise NumericError("non-finite Wald statistic")
    return TestResult(w, float(stats.chi2.sf(w, spec.q)), spec.q, "wald")


def t_test(fit: FitResult, which: str, null: float, alternative: str = "two-sided",
           force: bool = False) -> TestResult:
    """t-ratio ``(estimate - null) / SE`` against the standard normal law."""
    if which not in ("beta", "gamma"):
        raise DomainError(f"unknown parameter {which!r}")
    if which == "beta" and null == 0 and not force:
        raise IdentificationError(
            "H0: beta = 0 leaves gamma unidentified; use the supF test")
    idx = 0 if which == "beta" else 1
    se = float(fit.se[idx])
    if not (se > 0 and math.isfinite(se)):
        raise NumericError(f"standard error of {which} is not available ({se})")
    t = (float(fit.theta_hat.as_array()[idx]) - null) / se
    if alternative == "two-sided":
        p = 2.0 * stats.norm.sf(abs(t))
    elif alternative == "greater":
        p = stats.norm.sf(t)
    elif alternative == "less":
        p = stats.norm.cdf(t)
    else:
        raise DomainError(f"unknown alternative {alternative!r}")
    return TestResult(t, float(p), 1, f"t-{alternative}")


# --------------------------------------------------------------------------
# supF


@dataclass(frozen=True)
class SupFResult:
    f_n: float
    profile: np.ndarray = field(repr=False)
    grid: np.ndarray = field(repr=False)
    f_closed: float = math.nan
    gamma_hat: float = math.nan
    crit: dict = field(default_factory=dict)
    p_boot: float | None = None
    B: int = 0
    boot_draws: np.ndarray | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "f_n": self.f_n,
            "f_closed": self.f_closed,
            "gamma_hat": self.gamma_hat,
            "p_boot": self.p_boot,
            "B": self.B,
            "crit": {str(k): v for k, v in self.crit.items()},
            "grid": [float(self.grid[0]), float(self.grid[-1]), int(self.grid.size)],
        }


def _cache(panel, plm, cache):
    return ForecastCache(panel, plm) if cache is None else cache


def _score_sums(A, zt):
    saz = np.einsum("gij,ij->g", A, zt)
    saa = np.einsum("gij,gij->g", A, A)
    return saz, saa


def supf_statistic(panel: CohortPanel, plm: PlmConfig = PlmConfig(), grid=None, cache=None,
                   gamma_hat: float | None = None, tol: float = 1e-8) -> SupFResult:
    """supF statistic over ``grid`` plus its closed form at the profiled minimiser.

    If ``gamma_hat`` is not given it is found by golden-section search around
    the best grid point.  The closed form can only exceed the grid supremum by
    the discretisation gap; with ``gamma_hat`` on the grid the two coincide.
    """
    c = _cache(panel, plm, cache)
    grid = default_supf_grid() if grid is None else np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 1:
        raise DomainError("grid must be a non-empty 1-d array")
    zt = c.z_tilde
    N = panel.n_obs
    sigma_tilde2 = float(np.mean(zt * zt))
    if not sigma_tilde2 > 0:
        raise DegenerateDataError("demeaned survey panel is identically zero")
    A = c.stack(grid)
    saz, saa = _score_sums(A, zt)
    if np.any(~(saa > 0)):
        raise DegenerateDataError("demeaned forecasts vanish on the grid")
    beta = saz / saa
    resid = zt[None] - beta[:, None, None] * A
    sigma_hat2 = np.einsum("gij,gij->g", resid, resid) / N
    if np.any(sigma_hat2 <= 0):
        raise DegenerateDataError("perfect fit on the grid: supF is infinite")
    profile = N * (sigma_tilde2 - sigma_hat2) / sigma_hat2

    if gamma_hat is None:
        if grid.size >= 3:
            i = int(np.argmax(profile))
            lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
            g, q, _, _ = golden_section(lambda g_: profile_objective(g_, panel, plm, c), lo, hi, tol)
            if q > sigma_hat2[i] * N:
                g = float(grid[i])
        else:
            g = float(grid[int(np.argmax(profile))])
        gamma_hat = g
    s2_hat = profile_objective(gamma_hat, panel, plm, c) / N
    if not s2_hat > 0:
        raise DegenerateDataError("perfect fit at gamma_hat: supF is infinite")
    f_closed = N * (sigma_tilde2 - s2_hat) / s2_hat
    f_n = float(profile.max())
    if f_closed < f_n * (1 - 1e-8) - 1e-10:
        raise NumericError(
            f"closed-form supF {f_closed:.6g} below grid supremum {f_n:.6g}: gamma_hat is not the minimiser")
    return SupFResult(f_n=f_n, profile=profile, grid=grid, f_closed=float(f_closed),
                      gamma_hat=float(gamma_hat))


def _chol_with_jitter(K):
    base = 1.0 + float(np.max(np.diag(K)))
    jitter = 1e-10
    while jitter <= 1e-6 * (1 + 1e-9):
        try:
            return np.linalg.cholesky(K + jitter * base * np.eye(K.shape[0]))
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise NumericError("kernel matrix is not positive definite even after maximal jitter")


def gp_critical_values(grid, draws: int = 10_000, levels=DEFAULT_LEVELS, seed: int = 0,
                       chunk: int = 1000, return_draws: bool = False):
    """Quantiles of ``max_j S(g_j)^2 / phi(g_j, g_j)`` for the kernel-``phi`` process.

    Draws are generated in fixed chunks, each from its own derived stream, so
    the result depends only on ``seed``.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 1:
        raise DomainError("grid must be a non-empty 1-d array")
    if np.any(grid <= 0.5):
        raise DomainError("grid points must exceed 1/2")
    if grid.size > 1 and np.any(np.diff(grid) <= 0):
        raise DomainError("grid must be strictly increasing")
    if draws < 1:
        raise DomainError("draws must be positive")
    K = kernel_matrix(grid)
    L = _chol_with_jitter(K)
    diag = np.diag(K)
    out = np.empty(draws)
    for c0 in range(0, draws, chunk):
        size = min(chunk, draws - c0)
        Z = replication_rng(seed, c0 // chunk).standard_normal((grid.size, size))
        S = L @ Z
        out[c0:c0 + size] = np.max(S * S / diag[:, None], axis=0)
    crit = {float(a): float(np.quantile(out, 1.0 - a)) for a in levels}
    return (crit, out) if return_draws else crit


def multiplier_bootstrap_supf(panel: CohortPanel, plm: PlmConfig = PlmConfig(), grid=None,
                              B: int = 100, seed: int = 0, cache=None, f_n: float | None = None):
    """Multiplier bootstrap for supF under ``beta = 0``: returns ``(p_value, draws)``.

    Null residuals are the demeaned survey values; each draw perturbs them with
    i.i.d. standard normal multipliers from its own derived stream.
    """
    if B < 1:
        raise DomainError("B must be at least 1")
    c = _cache(panel, plm, cache)
    grid = default_supf_grid() if grid is None else np.asarray(grid, dtype=float)
    if f_n is None:
        f_n = supf_statistic(panel, plm, grid, c).f_n
    e0 = c.z_tilde.ravel()
    sigma_tilde2 = float(np.mean(e0 * e0))
    if not sigma_tilde2 > 0:
        raise DegenerateDataError("demeaned survey panel is identically zero")
    A = c.stack(grid).reshape(grid.size, -1)
    saa = np.einsum("gk,gk->g", A, A)
    if np.any(~(saa > 0)):
        raise DegenerateDataError("demeaned forecasts vanish on the grid")
    draws = np.empty(B)
    block = 50
    for b0 in range(0, B, block):
        size = min(block, B - b0)
        eta = np.stack([replication_rng(seed, b).standard_normal(e0.size) for b in range(b0, b0 + size)])
        score = (eta * e0) @ A.T  # (size, G)
        draws[b0:b0 + size] = np.max(score * score / (sigma_tilde2 * saa), axis=1)
    p = (1.0 + np.count_nonzero(draws >= f_n)) / (B + 1.0)
    return float(p), draws


def supf_test(panel: CohortPanel, plm: PlmConfig = PlmConfig(), grid=None, B: int = 100, seed: int = 0,
              cache=None, gamma_hat: float | None = None, crit: dict | None = None) -> SupFResult:
    """supF statistic with bootstrap p-value (and optional tabulated critical values)."""
    c = _cache(panel, plm, cache)
    res = supf_statistic(panel, plm, grid, c, gamma_hat=gamma_hat)
    p, draws = multiplier_bootstrap_supf(panel, plm, res.grid, B, seed, c, f_n=res.f_n)
    return SupFResult(f_n=res.f_n, profile=res.profile, grid=res.grid, f_closed=res.f_closed,
                      gamma_hat=res.gamma_hat, crit=dict(crit or {}), p_boot=p, B=B, boot_draws=draws)


def write_critical_values_csv(crit: dict, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("level,value\n")
        for level in sorted(crit):
            fh.write(f"{level!r},{crit[level]!r}\n")
