"""Adaptive learning from experience: gains, belief recursions and forecast panels.

Time is 1-based throughout: ``y[0]`` holds ``y_1``.  A cohort born in period
``b`` first updates at ``t = b + 1`` (age 1).  Forecast panels have one row per
period ``t = u+1..n`` and one column per age ``l..u``; the cohort in cell
``(t, age)`` was born at ``b = t - age``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import DomainError, SingularStateError

RLS_INIT_SCALE = 1e-6
MAX_CONDITION = 1e12


class GainFamily(str, Enum):
    BASELINE = "baseline"
    CODE_VARIANT = "code-variant"


class Plm(str, Enum):
    """Perceived law of motion used by the agents."""

    CONSTANT = "constant"
    REGRESSION = "regression"
    AR1 = "ar1"


class Timing(str, Enum):
    END_OF_PERIOD = "end-of-period"  # a_{t,s} = phi_{t,s}' x_{t+1}
    ONE_STEP = "one-step"  # a_{t,s} = phi_{t-1,s}' x_t


@dataclass(frozen=True)
class GainSpec:
    family: GainFamily
    gamma: float

    def __post_init__(self):
        object.__setattr__(self, "family", GainFamily(self.family))
        if not (self.gamma > 0 and math.isfinite(self.gamma)):
            raise DomainError(f"gain parameter must be positive, got {self.gamma}")

    @property
    def plateau_horizon(self) -> float:
        """Last age at which the gain sits on its plateau."""
        return self.gamma if self.family is GainFamily.BASELINE else 2.0 * self.gamma


@dataclass(frozen=True)
class PlmConfig:
    plm: Plm = Plm.CONSTANT
    family: GainFamily = GainFamily.BASELINE
    timing: Timing = Timing.ONE_STEP

    def __post_init__(self):
        object.__setattr__(self, "plm", Plm(self.plm))
        object.__setattr__(self, "family", GainFamily(self.family))
        object.__setattr__(self, "timing", Timing(self.timing))


def gain(spec: GainSpec, age: int) -> float:
    if age < 1:
        raise DomainError(f"age must be >= 1, got {age}")
    if spec.family is GainFamily.BASELINE:
        return spec.gamma / age if age > spec.gamma else 1.0
    return spec.gamma / age if age > 2.0 * spec.gamma else 0.5


def gain_array(family, gamma, age) -> np.ndarray:
    """Vectorised :func:`gain`; ``gamma`` and ``age`` broadcast."""
    gamma = np.asarray(gamma, dtype=float)
    age = np.asarray(age, dtype=float)
    if np.any(age < 1):
        raise DomainError("age must be >= 1")
    if GainFamily(family) is GainFamily.BASELINE:
        return np.where(age > gamma, gamma / age, 1.0)
    return np.where(age > 2.0 * gamma, gamma / age, 0.5)


# --------------------------------------------------------------------------
# belief states


@dataclass(frozen=True)
class ScalarBeliefState:
    a: float
    age: int = 0


def update_scalar(state: ScalarBeliefState, y_t: float, spec: GainSpec) -> ScalarBeliefState:
    g = gain(spec, state.age + 1)
    a = y_t if g == 1.0 else state.a + g * (y_t - state.a)  # unit gain forgets the prior exactly
    return ScalarBeliefState(a, state.age + 1)


@dataclass(frozen=True)
class RlsBeliefState:
    phi: np.ndarray
    R: np.ndarray
    age: int = 0

    @classmethod
    def initial(cls, d: int) -> "RlsBeliefState":
        return cls(np.zeros(d), RLS_INIT_SCALE * np.eye(d), 0)


def rls_update(state: RlsBeliefState, x_t, y_t: float, spec: GainSpec,
               cohort=None, t=None) -> RlsBeliefState:
    """One recursive least squares step with age-dependent gain.

    The coefficient update divides by the *updated* second-moment matrix.
    """
    x = np.atleast_1d(np.asarray(x_t, dtype=float))
    phi = np.atleast_1d(np.asarray(state.phi, dtype=float))
    R = np.atleast_2d(np.asarray(state.R, dtype=float))
    if x.shape != phi.shape:
        raise DomainError(f"regressor has dimension {x.size}, state has {phi.size}")
    g = gain(spec, state.age + 1)
    R_new = R + g * (np.outer(x, x) - R)
    cond = np.linalg.cond(R_new)
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise SingularStateError(cohort, t, cond)
    phi_new = phi + g * np.linalg.solve(R_new, x) * (y_t - phi @ x)
    return RlsBeliefState(phi_new, R_new, state.age + 1)


# --------------------------------------------------------------------------
# closed-form weights


@dataclass(frozen=True)
class WeightVector:
    gamma: float
    s: int
    kappa: np.ndarray = field(repr=False)

    @property
    def start(self) -> int:
        """Age index ``j`` of the first weight (``floor(gamma)``)."""
        return int(math.floor(self.gamma))

    @property
    def j(self) -> np.ndarray:
        return np.arange(self.start, self.s + 1)


def weights_kappa(gamma: float, s: int) -> WeightVector:
    """Weights of the observations seen at ages ``floor(gamma)..s``.

    Suffix products ``prod_{i=j+1}^{s} (1 - gamma/i)`` are built by one backward
    scan, so every factor is taken once.
    """
    if not gamma > 0:
        raise DomainError(f"gamma must be positive, got {gamma}")
    j0 = int(math.floor(gamma))
    if s < j0:
        raise DomainError(f"age {s} is younger than the discard horizon floor(gamma)={j0}")
    j = np.arange(j0, s + 1, dtype=float)
    factors = 1.0 - gamma / (j[1:])  # (1 - gamma/i) for i = j0+1..s
    suffix = np.ones(j.size)
    suffix[:-1] = np.cumprod(factors[::-1])[::-1]
    kappa = np.empty(j.size)
    kappa[0] = suffix[0]
    kappa[1:] = gamma / j[1:] * suffix[1:]
    return WeightVector(float(gamma), int(s), kappa)


def forecast_scalar(gamma: float, y_window) -> float:
    """Weighted mean of ``y_{t-s+floor(gamma)}, ..., y_t``.

    The age ``s`` is implied by the window length.
    """
    y_window = np.asarray(y_window, dtype=float)
    s = y_window.size - 1 + int(math.floor(gamma))
    if y_window.ndim != 1 or y_window.size == 0:
        raise DomainError("window must be a non-empty 1-d sequence")
    w = weights_kappa(gamma, s)
    if w.kappa.size != y_window.size:
        raise DomainError(f"window of length {y_window.size} does not match {w.kappa.size} weights")
    return float(w.kappa @ y_window)


# --------------------------------------------------------------------------
# forecast panels


def _check_bounds(n, l, u):
    if not (1 <= l < u < n):
        raise DomainError(f"need 1 <= l < u < n, got l={l}, u={u}, n={n}")


def regressor_matrix(y, x, plm: Plm) -> np.ndarray:
    """Regressors ``x_t`` as an ``(T, d)`` array with ``x_matrix[t-1] = x_t``.

    For the AR(1) law ``x_t = (1, y_{t-1})``; row 0 (needing ``y_0``) is NaN and
    never used because every cohort is born at ``b >= 1``.  The AR(1) matrix has
    ``n + 1`` rows so that end-of-period forecasts can use ``x_{n+1}``.
    """
    y = np.asarray(y, dtype=float)
    plm = Plm(plm)
    if plm is Plm.CONSTANT:
        return np.ones((y.size + 1, 1))
    if plm is Plm.AR1:
        lag = np.concatenate([[np.nan], y])
        return np.column_stack([np.ones(y.size + 1), lag])
    if x is None:
        raise DomainError("regression PLM requires a regressor series x")
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] < y.size:
        raise DomainError(f"regressor has {x.shape[0]} periods, macro series has {y.size}")
    return x


def forecast_panel(y, x, spec: GainSpec, l: int, u: int, plm=Plm.CONSTANT,
                   timing=Timing.ONE_STEP, method: str = "auto") -> np.ndarray:
    """Forecast panel ``a_{t,s}`` for a single gain value; shape ``(n-u, u-l+1)``."""
    cfg = PlmConfig(plm, spec.family, timing)
    return forecast_panels(y, x, [spec.gamma], l, u, cfg, method=method)[0]


def forecast_panels(y, x, gammas, l: int, u: int, config: PlmConfig = PlmConfig(),
                    method: str = "auto") -> np.ndarray:
    """Forecast panels for several gain values at once; shape ``(G, n-u, m)``.

    ``method`` selects the constant-PLM route: ``"closed"`` uses the weight
    representation (baseline gain only), ``"recursive"`` iterates the update.
    ``"auto"`` picks the weights whenever they apply.
    """
    y = np.asarray(y, dtype=float)
    if y.ndim != 1:
        raise DomainError("macro series must be one-dimensional")
    n = y.size
    _check_bounds(n, l, u)
    gammas = np.atleast_1d(np.asarray(gammas, dtype=float))
    if np.any(~(gammas > 0)):
        raise DomainError("all gain parameters must be positive")
    if config.plm is Plm.CONSTANT:
        closed_ok = config.family is GainFamily.BASELINE
        if method == "closed" and not closed_ok:
            raise DomainError("closed-form weights exist only for the baseline gain")
        if method in ("auto", "closed") and closed_ok:
            return np.stack([_constant_closed(y, g, l, u, config.timing) for g in gammas])
        return _constant_recursive(y, gammas, l, u, config)
    X = regressor_matrix(y, x, config.plm)
    return _rls_panels(y, X, gammas, l, u, config)


def _lag_matrix(y, l, u):
    n = y.size
    rows = u + np.arange(n - u)[:, None] - np.arange(u + 1)[None, :]
    return y[rows]  # [i, L] = y_{t-L}, t = u+1+i


def _constant_closed(y, gamma, l, u, timing):
    m = u - l + 1
    K = np.zeros((m, u + 1))
    shift = 1 if Timing(timing) is Timing.ONE_STEP else 0
    for col, age in enumerate(range(l, u + 1)):
        s = age - shift
        if s < math.floor(gamma):
            K[col, shift] = 1.0  # still on the unit-gain plateau: belief is the latest value
            continue
        w = weights_kappa(gamma, s)
        # weight on y_{t-shift-(s-j)}; lag L = shift + s - j
        lags = shift + s - w.j
        K[col, lags] = w.kappa
    return _lag_matrix(y, l, u) @ K.T


def _constant_recursive(y, gammas, l, u, config):
    n = y.size
    C = n - l
    G = gammas.size
    births = np.arange(1, C + 1)
    a = np.tile(y[:C], (G, 1))  # belief at birth set to the birth-period value
    out = np.full((G, n - u, u - l + 1), np.nan)
    gcol = gammas[:, None]
    one_step = config.timing is Timing.ONE_STEP
    for t in range(2, n + 1):
        if one_step and t > u:
            _record(out, a, t, l, u)
        k = min(t - 1, C)
        g = gain_array(config.family, gcol, t - births[:k])
        a[:, :k] = np.where(g == 1.0, y[t - 1], a[:, :k] + g * (y[t - 1] - a[:, :k]))
        if not one_step and t > u:
            _record(out, a, t, l, u)
    return out


def _record(out, values, t, l, u):
    # cohorts b = t-l, t-l-1, ..., t-u  -> columns age l..u
    hi = t - l  # 1-based birth of the youngest cohort
    lo = t - u
    out[:, t - u - 1, :] = values[:, lo - 1:hi][:, ::-1]


def _min_max_eig(R):
    d = R.shape[-1]
    if d == 1:
        v = R[..., 0, 0]
        return v, v
    if d == 2:
        a, b, c = R[..., 0, 0], R[..., 0, 1], R[..., 1, 1]
        mid = 0.5 * (a + c)
        rad = np.sqrt(0.25 * (a - c) ** 2 + b * b)
        return mid - rad, mid + rad
    ev = np.linalg.eigvalsh(R)
    return ev[..., 0], ev[..., -1]


def _rls_panels(y, X, gammas, l, u, config):
    n = y.size
    d = X.shape[1]
    C = n - l
    G = gammas.size
    one_step = config.timing is Timing.ONE_STEP
    if not one_step and X.shape[0] < n + 1:
        raise DomainError("end-of-period timing needs the regressor for period n+1")
    births = np.arange(1, C + 1)
    phi = np.zeros((G, C, d))
    R = np.broadcast_to(RLS_INIT_SCALE * np.eye(d), (G, C, d, d)).copy()
    ready = np.zeros((G, C), dtype=bool)
    gcol = gammas[:, None]
    horizon = gcol if config.family is GainFamily.BASELINE else 2.0 * gcol
    out = np.full((G, n - u, u - l + 1), np.nan)

    def emit(t, x_next):
        vals = np.where(ready, phi @ x_next, np.nan)
        _record(out, vals, t, l, u)

    for t in range(2, n + 1):
        xt = X[t - 1]
        if one_step and t > u:
            emit(t, xt)
        k = min(t - 1, C)
        ages = t - births[:k]
        g = gain_array(config.family, gcol, ages)  # (G, k)
        Rk = R[:, :k]
        Rk += g[..., None, None] * (np.outer(xt, xt) - Rk)
        lo, hi = _min_max_eig(Rk)
        with np.errstate(divide="ignore", invalid="ignore"):
            cond = np.where(lo > 0, np.abs(hi) / lo, np.inf)
        ok = np.isfinite(cond) & (cond <= MAX_CONDITION)
        if not ok.all():
            late = ~ok & (ages[None, :] > horizon)
            if late.any():
                gi, ci = np.argwhere(late)[0]
                raise SingularStateError(int(births[ci]), t, float(cond[gi, ci]))
        err = y[t - 1] - phi[:, :k] @ xt  # (G, k)
        if d == 1:
            step = xt[0] / np.where(ok, Rk[..., 0, 0], 1.0)
            phi[:, :k, 0] += np.where(ok, g * step * err, 0.0)
        else:
            safe = np.where(ok[..., None, None], Rk, np.eye(d))
            direction = np.linalg.solve(safe, np.broadcast_to(xt, (G, k, d))[..., None])[..., 0]
            phi[:, :k] += np.where(ok[..., None], (g * err)[..., None] * direction, 0.0)
        ready[:, :k] |= ok
        if not one_step and t > u:
            emit(t, X[t])
    if np.isnan(out).any():
        raise DomainError("forecast requested before the RLS state became nonsingular")
    return out
