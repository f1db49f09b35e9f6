import math

import numpy as np
import pytest

from slelab import experiments as E
from slelab.errors import ConfigInvalid, DegenerateDesign, UnknownExperiment
from slelab.stats import EnsembleEstimate


# fitting


def test_power_fit_exact_line():
    x = np.array([1.0, 2.0, 4.0, 8.0])
    y = 3.0 * x ** -0.75
    fit = E.fit_power_law(np.column_stack([x, y, 0.01 * y]))
    assert fit.slope == pytest.approx(-0.75, abs=1e-12)
    assert math.exp(fit.intercept) == pytest.approx(3.0, rel=1e-12)


def test_power_fit_slope_error_matches_scatter():
    # with 1% log errors on four points spanning a decade, the 3-sigma interval covers the truth
    rng = np.random.default_rng(0)
    x = np.array([1.0, 2.0, 5.0, 10.0])
    covered = 0
    trials = 2000
    for _ in range(trials):
        y = 2.0 * x ** 0.5 * np.exp(0.01 * rng.normal(size=x.size))
        fit = E.fit_power_law(np.column_stack([x, y, 0.01 * y]))
        covered += abs(fit.slope - 0.5) <= 3 * fit.slope_err
    assert covered / trials >= 0.99


@pytest.mark.parametrize("pts", [
    [(1.0, 1.0, 0.1), (2.0, 0.5, 0.1)],
    [(1.0, 1.0, 0.1), (1.2, 0.9, 0.1), (1.5, 0.8, 0.1)],
    [(1.0, 1.0, 0.1), (2.0, 0.0, 0.1), (4.0, 0.3, 0.1)],
])
def test_power_fit_degenerate(pts):
    with pytest.raises(DegenerateDesign):
        E.fit_power_law(pts)


def test_weighted_mean():
    est = E.weighted_mean([1.0, 3.0], [1.0, 1.0])
    assert est.mean == 2.0 and est.stderr == pytest.approx(1 / math.sqrt(2))


def test_bernoulli_stderr_is_exact():
    est = EnsembleEstimate.bernoulli(30, 100, seed=1)
    assert est.mean == 0.3
    assert est.stderr == math.sqrt(0.3 * 0.7 / 100)
    samples = np.r_[np.ones(30), np.zeros(70)]
    assert EnsembleEstimate.from_samples(samples, 1).stderr == pytest.approx(est.stderr, rel=1e-14)


def test_estimate_within():
    est = EnsembleEstimate(1.0, 0.1, 100, 0)
    assert est.within(1.29) and not est.within(1.31)
    assert est.within(1.4, extra_se=0.1)


# configuration


def test_packaged_configs_match_defaults():
    for name in E.CATALOG:
        assert E.validate_config(name, E.packaged_config(name)) == E.validate_config(name)


@pytest.mark.parametrize("override, message", [
    ({"nope": 1}, "unknown key"),
    ({"n": "many"}, "must be a number"),
    ({"n": 2.5}, "integer"),
    ({"kappa": 9.0}, "kappa"),
    ({"n": 1}, "at least 2"),
    ({"dt": 0.0}, "positive"),
    ({"grid": {"eps": [0.1, 0.05]}}, "three"),
    ({"geometry": 3}, "object"),
    ({"name": "distance_law"}, "not"),
])
def test_config_validation_errors(override, message):
    with pytest.raises(ConfigInvalid, match=message):
        E.validate_config("radius_law", override)


def test_config_scalar_becomes_list():
    cfg = E.validate_config("invariant_density", {"kappa": 4.0, "n": 10})
    assert cfg["kappa"] == [4.0] and cfg["n"] == 10


def test_unknown_experiment():
    with pytest.raises(UnknownExperiment):
        E.run_experiment("nonsense")
    with pytest.raises(UnknownExperiment):
        E.validate_config("nonsense")


def test_run_rejects_bad_workers_and_seed():
    with pytest.raises(ConfigInvalid):
        E.run_experiment("radius_law", {"n": 10}, workers=0)
    with pytest.raises(ConfigInvalid):
        E.run_experiment("radius_law", {"n": 10}, master_seed=-1)


# small runs


def test_radius_law_small_run_is_deterministic():
    cfg = {"n": 200}
    a = E.run_experiment("radius_law", cfg)
    b = E.run_experiment("radius_law", cfg)
    assert [r.estimate for r in a.rows] == [r.estimate for r in b.rows]
    assert a.fits == b.fits
    means = [r.estimate.mean for r in a.rows]
    assert np.all(np.diff(means) <= 0)


def test_master_seed_changes_the_ensemble():
    a = E.run_experiment("radius_law", {"n": 200})
    b = E.run_experiment("radius_law", {"n": 200}, master_seed=5)
    assert [r.estimate.mean for r in a.rows] != [r.estimate.mean for r in b.rows]


def test_two_point_swap_replays_the_same_runs():
    geo = {"s_w": [1.0], "q": [0.2, 0.5, 0.9]}
    a = E.run_experiment("two_point_band", {"n": 20, "geometry": {**geo, "swap": False}})
    b = E.run_experiment("two_point_band", {"n": 20, "geometry": {**geo, "swap": True}})
    for ra, rb in zip(a.rows, b.rows):
        assert ra.estimate.mean == pytest.approx(rb.estimate.mean, rel=1e-12)
        assert (ra.inputs["z_im"], ra.inputs["w_im"]) == (rb.inputs["w_im"], rb.inputs["z_im"])
    assert a.fits["band"] == pytest.approx(b.fits["band"], rel=1e-12)


def test_invariant_density_small_run():
    rep = E.run_experiment("invariant_density", {"n": 50, "kappa": 4.0})
    assert len(rep.rows) == 1
    assert 0 < rep.fits["ks_kappa4"] < 1


def test_report_passed_needs_verdicts():
    rep = E.ExperimentReport("x", {}, 0)
    assert not rep.passed
    rep.verdicts = {"a": True, "b": True}
    assert rep.passed


def test_radius_law_is_settled_by_the_horizon():
    # points sealed off late in the run keep their conformal radius; they are not hits
    short = E.run_experiment("radius_law", {"n": 500, "horizon": 20.0})
    long = E.run_experiment("radius_law", {"n": 500, "horizon": 160.0})
    for a, b in zip(short.rows, long.rows):
        assert abs(a.estimate.mean - b.estimate.mean) <= 0.004
