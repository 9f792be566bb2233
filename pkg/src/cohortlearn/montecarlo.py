"""Monte Carlo harness: simulate, estimate and test across replications."""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .errors import CohortLearnError, ConfigError
from .estimator import ForecastCache, SearchConfig, estimate
from .inference import default_supf_grid, multiplier_bootstrap_supf, supf_statistic, t_test
from .panel import DgpConfig, Scenario, replication_rng, simulate_dgp

FAILURE_WARN_SHARE = 0.05


@dataclass(frozen=True)
class StudyConfig:
    dgp: DgpConfig = DgpConfig()
    replications: int = 1000
    k_values: tuple = (2, 3, 4)
    scenarios: tuple = (Scenario.S1,)
    tests: tuple = ("t", "supf")
    B: int = 100
    level: float = 0.05
    seed: int = 0
    grid_points: int = 200
    search: SearchConfig = SearchConfig()

    def __post_init__(self):
        if self.replications < 1:
            raise ConfigError("replications must be at least 1")
        if not 0 < self.level < 1:
            raise ConfigError("level must lie in (0, 1)")
        if self.B < 1:
            raise ConfigError("B must be at least 1")
        bad = set(self.tests) - {"t", "supf"}
        if bad:
            raise ConfigError(f"unknown tests {sorted(bad)}")
        object.__setattr__(self, "k_values", tuple(int(k) for k in self.k_values))
        object.__setattr__(self, "scenarios", tuple(Scenario(s) for s in self.scenarios))
        if not self.k_values or not self.scenarios:
            raise ConfigError("need at least one k value and one scenario")

    def cell_dgp(self, scenario: Scenario, k: int) -> DgpConfig:
        return replace(self.dgp, scenario=scenario, k=k, n=None, u=None)

    def to_dict(self) -> dict:
        d = {
            "dgp": self.dgp.to_dict(),
            "replications": self.replications,
            "k_values": list(self.k_values),
            "scenarios": [s.value for s in self.scenarios],
            "tests": list(self.tests),
            "B": self.B,
            "level": self.level,
            "seed": self.seed,
            "grid_points": self.grid_points,
            "search": asdict(self.search),
        }
        return d


@dataclass(frozen=True)
class ReplicationRecord:
    scenario: str
    k: int
    rep: int
    beta_hat: float = math.nan
    gamma_hat: float = math.nan
    se_beta: float = math.nan
    se_gamma: float = math.nan
    t_beta: float = math.nan
    t_gamma: float = math.nan
    reject_beta: bool | None = None
    reject_gamma: bool | None = None
    supf: float = math.nan
    supf_p: float = math.nan
    reject_supf: bool | None = None
    interior: bool = False
    converged: bool = False
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None

    @property
    def usable(self) -> bool:
        """Counts toward moments and t-test frequencies."""
        return not self.failed and self.interior

    def to_dict(self) -> dict:
        return {k: (None if isinstance(v, float) and not math.isfinite(v) else v)
                for k, v in asdict(self).items()}


def _stream_seed(seed: int, *key: int) -> int:
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def _scenario_index(s: Scenario) -> int:
    return list(Scenario).index(s)


def run_replication(cfg: StudyConfig, rep: int, scenario: Scenario | None = None, k: int | None = None
                    ) -> ReplicationRecord:
    """One replication; estimation failures are recorded, not raised."""
    scenario = Scenario(scenario if scenario is not None else cfg.scenarios[0])
    k = int(k if k is not None else cfg.k_values[0])
    dgp = cfg.cell_dgp(scenario, k)
    key = (_scenario_index(scenario), k, rep)
    rec = {"scenario": scenario.value, "k": k, "rep": rep}
    try:
        panel = simulate_dgp(dgp, rng=replication_rng(cfg.seed, *key))
        plm = dgp.plm_config
        cache = ForecastCache(panel, plm)
        grid = default_supf_grid(cfg.grid_points, cfg.search.gamma_lower, cfg.search.gamma_upper)
        fit = estimate(panel, plm, cfg.search, cache=cache, grid=grid)
        rec.update(beta_hat=fit.beta, gamma_hat=fit.gamma, se_beta=float(fit.se[0]),
                   se_gamma=float(fit.se[1]), interior=fit.interior, converged=fit.converged)
        if "t" in cfg.tests and fit.interior:
            tg = t_test(fit, "gamma", dgp.gamma0)
            rec.update(t_gamma=tg.statistic, reject_gamma=bool(tg.p_value < cfg.level))
            # under beta0 = 0 this is the naive (invalid) test, kept to show its size distortion
            tb = t_test(fit, "beta", dgp.beta0, force=dgp.beta0 == 0)
            rec.update(t_beta=tb.statistic, reject_beta=bool(tb.p_value < cfg.level))
        if "supf" in cfg.tests:
            sf = supf_statistic(panel, plm, grid, cache, gamma_hat=fit.gamma)
            p, _ = multiplier_bootstrap_supf(panel, plm, grid, cfg.B, _stream_seed(cfg.seed, *key, 1),
                                             cache, f_n=sf.f_n)
            rec.update(supf=sf.f_n, supf_p=p, reject_supf=bool(p <= cfg.level))
    except CohortLearnError as exc:
        rec["error"] = f"{type(exc).__name__}: {exc}"
    return ReplicationRecord(**rec)


def _run_chunk(args):
    cfg, scenario, k, reps = args
    return [run_replication(cfg, r, scenario, k) for r in reps]


@dataclass(frozen=True)
class CellSummary:
    scenario: str
    k: int
    beta0: float
    gamma0: float
    replications: int
    usable: int
    failures: int
    boundary: int
    mean_gamma: float
    var_gamma: float
    mean_beta: float
    var_beta: float
    t_gamma: float
    t_beta: float
    supf: float
    warning: str | None = None


@dataclass(frozen=True)
class StudySummary:
    config: StudyConfig
    cells: list
    records: list = field(default_factory=list, repr=False)

    def cell(self, scenario, k) -> CellSummary:
        for c in self.cells:
            if c.scenario == Scenario(scenario).value and c.k == k:
                return c
        raise KeyError((scenario, k))

    @property
    def warnings(self) -> list:
        return [c.warning for c in self.cells if c.warning]

    def to_dict(self, records: bool = False) -> dict:
        out = {
            "config": self.config.to_dict(),
            "cells": [{k: (None if isinstance(v, float) and not math.isfinite(v) else v)
                       for k, v in asdict(c).items()} for c in self.cells],
        }
        if records:
            out["records"] = [r.to_dict() for r in self.records]
        return out


def _freq(flags) -> float:
    vals = [f for f in flags if f is not None]
    return float(np.mean(vals)) if vals else math.nan


def _moments(v):
    v = np.asarray(v, dtype=float)
    if v.size == 0:
        return math.nan, math.nan
    return float(v.mean()), float(v.var(ddof=1)) if v.size > 1 else math.nan


def summarize_cell(cfg: StudyConfig, scenario: Scenario, k: int, records) -> CellSummary:
    usable = [r for r in records if r.usable]
    failures = sum(r.failed for r in records)
    boundary = sum((not r.failed) and (not r.interior) for r in records)
    mg, vg = _moments([r.gamma_hat for r in usable])
    mb, vb = _moments([r.beta_hat for r in usable])
    warning = None
    if failures > FAILURE_WARN_SHARE * len(records):
        warning = (f"{scenario.value} k={k}: {failures} of {len(records)} replications failed "
                   f"(> {FAILURE_WARN_SHARE:.0%})")
    return CellSummary(
        scenario=scenario.value, k=k, beta0=cfg.dgp.beta0, gamma0=cfg.dgp.gamma0,
        replications=len(records), usable=len(usable), failures=failures, boundary=boundary,
        mean_gamma=mg, var_gamma=vg, mean_beta=mb, var_beta=vb,
        t_gamma=_freq(r.reject_gamma for r in usable),
        t_beta=_freq(r.reject_beta for r in usable),
        supf=_freq(r.reject_supf for r in records if not r.failed),
        warning=warning,
    )


def run_study(cfg: StudyConfig, workers: int = 1, chunk: int = 10) -> StudySummary:
    """Run every (scenario, k) cell; output is independent of ``workers``."""
    workers = max(1, int(workers))
    cells, all_records = [], []
    for scenario in cfg.scenarios:
        for k in cfg.k_values:
            reps = list(range(cfg.replications))
            jobs = [(cfg, scenario, k, reps[i:i + chunk]) for i in range(0, len(reps), chunk)]
            if workers == 1:
                results = [_run_chunk(j) for j in jobs]
            else:
                with ProcessPoolExecutor(max_workers=workers) as pool:
                    results = list(pool.map(_run_chunk, jobs))
            records = sorted((r for part in results for r in part), key=lambda r: r.rep)
            cells.append(summarize_cell(cfg, scenario, k, records))
            all_records.extend(records)
    return StudySummary(cfg, cells, all_records)


TABLE_COLUMNS = ["scenario", "k", "beta0", "gamma0", "mean_gamma", "var_gamma", "mean_beta", "var_beta",
                 "t_gamma", "t_beta", "supf", "replications", "usable", "failures", "boundary"]


def write_summary_csv(summary: StudySummary, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TABLE_COLUMNS)
        for c in summary.cells:
            row = asdict(c)
            w.writerow([_fmt(row[col]) for col in TABLE_COLUMNS])


def _fmt(v):
    if isinstance(v, float):
        return "" if not math.isfinite(v) else f"{v:.6g}"
    return v


def write_summary_json(summary: StudySummary, path, records: bool = False) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(summary.to_dict(records), fh, indent=2)
        fh.write("\n")


def default_workers() -> int:
    return max(1, len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else os.cpu_count() or 1)
