import json
import math
from dataclasses import replace
from pathlib import Path

import jsonschema
import numpy as np
import pytest
from scipy import stats

from cohortlearn import montecarlo
from cohortlearn.errors import ConfigError, NumericError
from cohortlearn.montecarlo import (StudyConfig, run_replication, run_study, summarize_cell,
                                    write_summary_csv, write_summary_json)
from cohortlearn.panel import DgpConfig, Scenario

SCHEMAS = Path(montecarlo.__file__).parent / "schemas"
SMALL = StudyConfig(dgp=DgpConfig(), replications=6, k_values=(1,), scenarios=("S1",), B=19,
                    seed=3, grid_points=40)


def test_study_config_validation():
    with pytest.raises(ConfigError):
        StudyConfig(replications=0)
    with pytest.raises(ConfigError):
        StudyConfig(level=1.0)
    with pytest.raises(ConfigError):
        StudyConfig(tests=("lm",))
    assert StudyConfig().k_values == (2, 3, 4)


def test_replication_deterministic():
    a = run_replication(SMALL, 2, "S1", 1)
    b = run_replication(SMALL, 2, "S1", 1)
    assert a == b
    assert a != run_replication(SMALL, 3, "S1", 1)
    assert a.error is None and a.usable and a.reject_supf is not None


def test_failures_recorded(monkeypatch):
    def boom(*args, **kwargs):
        raise NumericError("synthetic failure")
    monkeypatch.setattr(montecarlo, "estimate", boom)
    rec = run_replication(SMALL, 0, "S1", 1)
    assert rec.failed and "synthetic failure" in rec.error
    summary = run_study(replace(SMALL, replications=3))
    cell = summary.cells[0]
    assert cell.failures == 3 and cell.usable == 0 and cell.warning
    assert math.isnan(cell.mean_gamma)


def test_thread_count_invariance():
    cfg = replace(SMALL, replications=8)
    ref = run_study(cfg, workers=1, chunk=1)
    for workers in (4, 8):
        other = run_study(cfg, workers=workers, chunk=1)
        assert other.cells == ref.cells
        assert other.records == ref.records


def test_summary_and_exports(tmp_path):
    summary = run_study(SMALL)
    cell = summary.cell("S1", 1)
    for f in (cell.t_gamma, cell.t_beta, cell.supf):
        assert 0 <= f <= 1
    assert cell.usable + cell.failures + cell.boundary == cell.replications
    write_summary_csv(summary, tmp_path / "t.csv")
    header = (tmp_path / "t.csv").read_text().splitlines()[0].split(",")
    assert header[:6] == ["scenario", "k", "beta0", "gamma0", "mean_gamma", "var_gamma"]
    write_summary_json(summary, tmp_path / "t.json", records=True)
    data = json.loads((tmp_path / "t.json").read_text())
    assert len(data["records"]) == SMALL.replications
    data.update(command="study", version="x", seed=SMALL.seed, warnings=summary.warnings)
    jsonschema.validate(data, json.loads((SCHEMAS / "study.json").read_text()))


def test_boundary_excluded_from_moments():
    recs = [montecarlo.ReplicationRecord("S1", 2, 0, beta_hat=1.0, gamma_hat=10.0, interior=False,
                                         reject_supf=True),
            montecarlo.ReplicationRecord("S1", 2, 1, beta_hat=0.5, gamma_hat=3.0, interior=True,
                                         reject_gamma=False, reject_beta=True, reject_supf=True),
            montecarlo.ReplicationRecord("S1", 2, 2, beta_hat=0.7, gamma_hat=2.0, interior=True,
                                         reject_gamma=True, reject_beta=False, reject_supf=False)]
    cell = summarize_cell(SMALL, Scenario.S1, 2, recs)
    assert cell.boundary == 1 and cell.usable == 2
    assert cell.mean_gamma == pytest.approx(2.5) and cell.var_gamma == pytest.approx(0.5)
    assert cell.t_gamma == 0.5 and cell.supf == pytest.approx(2 / 3)


@pytest.mark.xfail(strict=True, reason="on exact data the residuals are optimiser error, so t ~ sqrt(N)")
def test_noiseless_replication_accepts():
    cfg = replace(SMALL, dgp=replace(SMALL.dgp, noise_scale=0.0), tests=("t",))
    rec = run_replication(cfg, 0, "S1", 1)
    assert rec.reject_gamma is False and rec.reject_beta is False


def test_variance_decreases_in_k():
    cfg = StudyConfig(replications=40, k_values=(2, 3), scenarios=("S1",), tests=(), seed=77)
    summary = run_study(cfg)
    assert summary.cell("S1", 2).var_gamma > summary.cell("S1", 3).var_gamma


def test_size_within_binomial_band(s1_k2_study):
    cell = s1_k2_study.cell("S1", 2)
    band = 3 * math.sqrt(0.05 * 0.95 / cell.usable)
    assert abs(cell.t_gamma - 0.05) <= band
    assert abs(cell.t_beta - 0.05) <= band


def test_wald_pvalues_roughly_uniform(s1_k2_study):
    t = np.array([r.t_gamma for r in s1_k2_study.records if r.usable])
    p = 2 * stats.norm.sf(np.abs(t))  # one-restriction Wald p-values equal two-sided t p-values
    # 0.06 at 1000 draws rescaled to the sample size in use
    assert stats.kstest(p, "uniform").statistic < 0.06 * math.sqrt(1000 / p.size)
