import math

import numpy as np
import pytest
from scipy.special import ndtr

from branchmlmc.diagnostics import (StudyTable, complexity_sweep, cond_density_study, fit_rate, fit_xy,
                                    tau_study, variance_study, work_study)
from branchmlmc.estimators import make_config
from branchmlmc.mlmc import LevelConfig


def _table(x, y, se=None):
    t = StudyTable("t")
    for i, (a, b) in enumerate(zip(x, y)):
        t.add_row(a, b, 0.0 if se is None else se[i], 10)
    return t


def test_fit_rate_examples(rng):
    x = 2.0 ** -np.arange(2, 10)
    f = fit_rate(_table(x, 7 * x**2))
    assert f.slope == pytest.approx(2.0, abs=1e-9) and f.r2 == pytest.approx(1.0)
    assert fit_rate(_table(x, np.full(x.size, 3.0))).slope == pytest.approx(0.0, abs=1e-12)
    noisy = np.sqrt(x) * (1 + 0.01 * rng.standard_normal(x.size))
    assert fit_rate(_table(x, noisy)).slope == pytest.approx(0.5, abs=0.02)


def test_fit_rate_drops_noisy_rows_and_rejects_bad_input():
    x = 2.0 ** -np.arange(5)
    y = x.copy()
    y[-1] = 100.0
    se = np.zeros(5)
    se[-1] = 50.0
    f = fit_rate(_table(x, y, se))
    assert f.points == 4 and f.slope == pytest.approx(1.0)
    with pytest.raises(ValueError):
        fit_xy([1, 2], [1, 2])
    with pytest.raises(ValueError):
        fit_rate(_table(x, -x))


def test_table_invariants_and_csv(tmp_path):
    t = StudyTable("demo", meta={"seed": 3})
    t.add_row(0.5, 1.25, 0.1, 100, level=0)
    t.add_row(0.25, 0.5, 0.05, 100, level=1)
    with pytest.raises(ValueError):
        t.add_row(0.5, 1.0, 0.1, 1, level=2)
    with pytest.raises(ValueError):
        t.add_row(0.125, 1.0, -0.1, 1, level=2)
    with pytest.raises(ValueError):
        t.add_row(0.125, 1.0, 0.1, 1, other=2)
    text = t.to_csv(tmp_path / "demo.csv")
    lines = text.splitlines()
    assert lines[:3] == ["# study=demo", "# seed=3", "abscissa,statistic,stderr,n,level"]
    assert lines[3] == "0.5,1.25,0.1,100,0.0"
    assert (tmp_path / "demo.csv").read_text() == text


def test_variance_study_shape():
    cfgs = {"plain": make_config(branching=False, seed=1), "branching": make_config(seed=1)}
    t = variance_study([2, 3, 4], 2000, cfgs, threads=1)
    assert len(t) == 3
    np.testing.assert_array_equal(t.column("level"), [2, 3, 4])
    np.testing.assert_array_equal(t.column("abscissa"), [2**-3, 2**-4, 2**-5])
    assert np.all(t.column("branching.work") == [16, 40, 96])
    assert np.all(t.column("plain.work") == [8, 16, 32])
    with pytest.raises(ValueError):
        variance_study([2], 10, cfgs)


def test_work_study_matches_series():
    t = work_study(range(0, 6), make_config(eta=4 / 3))
    assert t.column("statistic").tolist() == [2, 4, 12, 34, 80, 152]


def _exact_tau_oracle(tau, mu=0.05, sig=0.2):
    """``E[P(X_1 <= 1 | F_{1-tau})^2]`` for one-asset GBM by Gauss-Hermite quadrature."""
    z, w = np.polynomial.hermite_e.hermegauss(80)
    a = mu - 0.5 * sig * sig
    s = 1.0 - tau
    logx = a * s + sig * math.sqrt(s) * z
    p = ndtr((-logx - a * tau) / (sig * math.sqrt(tau)))
    return float(np.sum(w * p * p) / math.sqrt(2 * math.pi))


def test_nested_estimator_is_unbiased_against_quadrature():
    cfg = make_config(scheme="exact", seed=9)
    n = 40_000
    t = tau_study(0, [0.5], n, cfg, n_inner=8, threads=1)
    est, se = t.statistic[0], t.stderr[0]
    assert abs(est - _exact_tau_oracle(0.5)) < 4 * se


def test_tau_study_everywhere_and_range_checks():
    cfg = make_config(dset="everywhere", seed=0)
    t = tau_study(3, [0.5, 0.25, 0.0625], 256, cfg, n_inner=4, threads=1)
    # level differences vanish identically
    assert t.statistic == [0.0, 0.0, 0.0]
    with pytest.raises(ValueError):
        tau_study(3, [2**-6], 16, cfg)
    with pytest.raises(ValueError):
        tau_study(3, [0.25], 16, cfg, n_inner=6)


def test_cond_density_everywhere_is_zero():
    cfg = make_config(dset="everywhere", seed=0)
    t = cond_density_study([0.5, 0.25], [0.01, 0.001], 256, cfg, n_inner=4, threads=1)
    assert all(v == 0.0 for v in t.statistic)
    assert math.isnan(t.meta["exponent_delta"])


def test_cond_density_small_grid_scaling():
    cfg = make_config(scheme="exact", seed=2)
    t = cond_density_study([0.5, 0.125], [2**-5, 2**-6], 20_000, cfg, n_inner=16, level=3, threads=1)
    assert len(t) == 2
    assert 1.4 < t.meta["exponent_delta"] < 2.6


def test_complexity_sweep_columns():
    cfgs = {"plain": make_config(branching=False, seed=0)}
    t = complexity_sweep([0.04, 0.02], cfgs, LevelConfig(warmup=1000), threads=1)
    assert len(t) == 2
    for col in ("plain.work_eps2", "plain.work_run", "plain.L", "plain.estimate", "plain.unconverged"):
        assert col in t.aux
    assert np.all(t.column("plain.work_eps2") > 0)
    assert np.all(np.abs(t.column("plain.estimate") - 0.4403823076297575) < 0.15)
    with pytest.raises(ValueError):
        complexity_sweep([0.01, 0.02], cfgs)
