"""Cohort panels: container, within transformations, simulation designs and CSV I/O."""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import ConfigError, PanelFormatError
from .learning import GainFamily, GainSpec, Plm, PlmConfig, Timing, forecast_panel


@dataclass(frozen=True)
class CohortPanel:
    """Survey panel ``z`` with rows ``t = u+1..n`` and columns ``age = l..u``."""

    z: np.ndarray
    y: np.ndarray
    l: int
    u: int
    x: np.ndarray | None = None

    def __post_init__(self):
        z = np.asarray(self.z, dtype=float)
        y = np.asarray(self.y, dtype=float)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "y", y)
        if self.x is not None:
            object.__setattr__(self, "x", np.asarray(self.x, dtype=float))
        n = y.size
        if not (1 <= self.l < self.u < n):
            raise PanelFormatError(f"need 1 <= l < u < n, got l={self.l}, u={self.u}, n={n}")
        if z.shape != (n - self.u, self.u - self.l + 1):
            raise PanelFormatError(
                f"z has shape {z.shape}, expected {(n - self.u, self.u - self.l + 1)}")
        if not np.all(np.isfinite(z)):
            raise PanelFormatError("z contains missing or non-finite cells")

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def m(self) -> int:
        return self.u - self.l + 1

    @property
    def n_obs(self) -> int:
        return self.z.size

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.u + 1, self.n + 1)

    @property
    def ages(self) -> np.ndarray:
        return np.arange(self.l, self.u + 1)

    def births(self) -> np.ndarray:
        return self.times[:, None] - self.ages[None, :]

    def with_z(self, z) -> "CohortPanel":
        return CohortPanel(z, self.y, self.l, self.u, self.x)


def demean_time(mat) -> np.ndarray:
    """Subtract each period's cross-sectional mean over ages (time fixed effects)."""
    mat = np.asarray(mat, dtype=float)
    return mat - mat.mean(axis=-1, keepdims=True)


def demean_cohort(mat) -> np.ndarray:
    """Subtract each column's mean over time (cohort fixed effects)."""
    mat = np.asarray(mat, dtype=float)
    return mat - mat.mean(axis=-2, keepdims=True)


# --------------------------------------------------------------------------
# simulation designs


class Scenario(str, Enum):
    S1 = "S1"  # constant regressor
    S2 = "S2"  # strictly exogenous AR(1) regressor
    S3 = "S3"  # lagged dependent variable


@dataclass(frozen=True)
class DgpConfig:
    scenario: Scenario = Scenario.S1
    k: int = 2
    beta0: float = 0.6
    gamma0: float = 3.0
    mu_y: float = 0.0
    phi_y: float = 0.5
    mu_x: float = 0.0
    phi_x: float = 0.5
    family: GainFamily = GainFamily.BASELINE
    plm: Plm = Plm.REGRESSION
    timing: Timing = Timing.ONE_STEP
    noise_scale: float = 1.0
    seed: int = 0
    n: int | None = None
    u: int | None = None
    l: int = 25

    def __post_init__(self):
        object.__setattr__(self, "scenario", Scenario(self.scenario))
        object.__setattr__(self, "family", GainFamily(self.family))
        object.__setattr__(self, "plm", Plm(self.plm))
        object.__setattr__(self, "timing", Timing(self.timing))
        for name in ("phi_y", "phi_x"):
            if not abs(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must lie in (-1, 1), got {getattr(self, name)}")
        if self.k < 1:
            raise ConfigError(f"scale factor k must be >= 1, got {self.k}")
        if not self.gamma0 > 0:
            raise ConfigError(f"gamma0 must be positive, got {self.gamma0}")
        if self.noise_scale < 0:
            raise ConfigError("noise_scale must be non-negative")
        if not (1 <= self.l < self.u_resolved < self.n_resolved):
            raise ConfigError(
                f"need 1 <= l < u < n, got l={self.l}, u={self.u_resolved}, n={self.n_resolved}")

    @property
    def n_resolved(self) -> int:
        return self.n if self.n is not None else 150 * self.k

    @property
    def u_resolved(self) -> int:
        return self.u if self.u is not None else 75 * self.k

    @property
    def plm_config(self) -> PlmConfig:
        return PlmConfig(self.plm, self.family, self.timing)

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("scenario", "family", "plm", "timing"):
            d[key] = getattr(self, key).value
        d["n"], d["u"] = self.n_resolved, self.u_resolved
        return d


def replication_rng(seed: int, *key: int) -> np.random.Generator:
    """Independent counter-based stream for ``(seed, *key)``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def _stationary_ar1(rng, n, mu, phi):
    # y_0 drawn from the exact stationary law N(mu, 1)
    out = np.empty(n + 1)
    out[0] = mu + rng.standard_normal()
    scale = math.sqrt(1.0 - phi * phi)
    shocks = rng.standard_normal(n)
    for t in range(1, n + 1):
        out[t] = (1.0 - phi) * mu + phi * out[t - 1] + scale * shocks[t - 1]
    return out


def simulate_dgp(cfg: DgpConfig, replication: int = 0, rng=None) -> CohortPanel:
    """Simulate one panel ``z = alpha_t + beta0 a(gamma0) + eps``.

    Draw order is fixed (y, x, alpha, eps) so the panel depends only on
    ``(cfg.seed, replication)``.
    """
    if rng is None:
        rng = replication_rng(cfg.seed, replication)
    n, u, l = cfg.n_resolved, cfg.u_resolved, cfg.l
    y_full = _stationary_ar1(rng, n, cfg.mu_y, cfg.phi_y)  # y_0..y_n
    if cfg.scenario is Scenario.S1:
        x = np.ones(n)
    elif cfg.scenario is Scenario.S2:
        x = _stationary_ar1(rng, n, cfg.mu_x, cfg.phi_x)[1:]
    else:
        x = y_full[:-1].copy()  # x_t = y_{t-1}
    y = y_full[1:]
    a = forecast_panel(y, x, GainSpec(cfg.family, cfg.gamma0), l, u, cfg.plm, cfg.timing)
    alpha = rng.uniform(0.0, 1.0, size=n - u)
    eps = rng.standard_normal(a.shape)
    z = alpha[:, None] + cfg.beta0 * a + cfg.noise_scale * eps
    return CohortPanel(z, y, l, u, x)


# --------------------------------------------------------------------------
# CSV I/O


PANEL_HEADER = ["t", "s", "z"]


def write_panel_csv(panel: CohortPanel, path, macro_path) -> None:
    """Write the long-format panel (``t,s,z``) and the macro file (``t,y[,x]``)."""
    path, macro_path = Path(path), Path(macro_path)
    births = panel.births()
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PANEL_HEADER)
        for i, t in enumerate(panel.times):
            for j in range(panel.m):
                w.writerow([int(t), int(births[i, j]), repr(float(panel.z[i, j]))])
    with macro_path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        has_x = panel.x is not None
        w.writerow(["t", "y", "x"] if has_x else ["t", "y"])
        for t in range(1, panel.n + 1):
            row = [t, repr(float(panel.y[t - 1]))]
            if has_x:
                row.append(repr(float(panel.x[t - 1])))
            w.writerow(row)


def _parse_int(value, path, lineno, name):
    try:
        return int(value)
    except ValueError:
        raise PanelFormatError(f"{path}:{lineno}: column {name!r} is not an integer: {value!r}")


def _parse_float(value, path, lineno, name):
    try:
        return float(value)
    except ValueError:
        raise PanelFormatError(f"{path}:{lineno}: column {name!r} is not a number: {value!r}")


def _read_macro(macro_path):
    with Path(macro_path).open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader, [])]
        if header not in (["t", "y"], ["t", "y", "x"]):
            raise PanelFormatError(f"{macro_path}: expected header 't,y' or 't,y,x', got {','.join(header)!r}")
        rows = {}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise PanelFormatError(f"{macro_path}:{lineno}: expected {len(header)} fields")
            t = _parse_int(row[0], macro_path, lineno, "t")
            if t in rows:
                raise PanelFormatError(f"{macro_path}:{lineno}: duplicate period t={t}")
            rows[t] = [_parse_float(v, macro_path, lineno, h) for v, h in zip(row[1:], header[1:])]
    n = len(rows)
    for t in range(1, n + 1):
        if t not in rows:
            raise PanelFormatError(f"{macro_path}: macro series must cover t=1..{n}; missing t={t}")
    vals = np.array([rows[t] for t in range(1, n + 1)])
    y = vals[:, 0]
    x = vals[:, 1] if len(header) == 3 else None
    return y, x


def load_panel_csv(path, macro_path) -> CohortPanel:
    """Read a panel written by :func:`write_panel_csv` (rows in any order)."""
    y, x = _read_macro(macro_path)
    cells = {}
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader, [])]
        if header != PANEL_HEADER:
            raise PanelFormatError(f"{path}: expected header 't,s,z', got {','.join(header)!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise PanelFormatError(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
            t = _parse_int(row[0], path, lineno, "t")
            s = _parse_int(row[1], path, lineno, "s")
            key = (t, s)
            if key in cells:
                raise PanelFormatError(f"{path}:{lineno}: duplicate cell t={t}, s={s}")
            cells[key] = (_parse_float(row[2], path, lineno, "z"), lineno)
    if not cells:
        raise PanelFormatError(f"{path}: no data rows")
    ages = [t - s for t, s in cells]
    l, u = min(ages), max(ages)
    n = y.size
    for (t, s), (_, lineno) in sorted(cells.items(), key=lambda kv: kv[1][1]):
        if not (u + 1 <= t <= n):
            raise PanelFormatError(
                f"{path}:{lineno}: period t={t} outside u+1..n = {u + 1}..{n}")
    z = np.empty((n - u, u - l + 1))
    for i, t in enumerate(range(u + 1, n + 1)):
        for j, age in enumerate(range(l, u + 1)):
            s = t - age
            if (t, s) not in cells:
                raise PanelFormatError(f"incomplete rectangle at t={t}, s={s}")
            z[i, j] = cells[(t, s)][0]
    return CohortPanel(z, y, l, u, x)
