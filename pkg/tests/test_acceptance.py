"""Desk-scale acceptance suite, one test per criterion.

Each test prints a ``criterion NN: PASS/FAIL`` line (also collected in the
terminal summary) before asserting, so a failing criterion is reported with
its measured numbers rather than hidden behind a traceback.
"""

import math
import time

import pytest

from slelab import experiments as E
from slelab import greens as G
from slelab import io as IO
from slelab import loewner as L
from slelab import sampler as S
from slelab.selftest import run_selftest

pytestmark = pytest.mark.acceptance


@pytest.fixture(scope="module")
def production_tables():
    """Default-grid hitting-time tables for the kappas that carry a table identity."""
    tc = E.TABLE_DEFAULT
    grid = G.PhiGrid.parse(tc["grid"])
    return {k: G.build_phi_table(S.kappa_params(k), grid, tc["n_per_node"], tc["seed"], dt=tc["dt"])
            for k in (2.0, 8.0 / 3.0)}


def _verdicts(rep):
    return ", ".join(f"{k}={'ok' if v else 'FAIL'}" for k, v in rep.verdicts.items())


def test_c01_exact_identities(acceptance_log):
    t0 = time.perf_counter()
    checks = run_selftest()
    wall = time.perf_counter() - t0
    failed = [c.name for c in checks if not c.passed]
    ok = not failed and wall < 60.0
    acceptance_log(1, ok, f"{len(checks) - len(failed)}/{len(checks)} identities in {wall:.1f}s"
                   + (f"; failed {failed}" if failed else ""))
    assert ok


def test_c02_capacity_oracle(acceptance_log, k83):
    drv = S.sample_chordal(k83, 0.5, 1e-3, seed=1)
    hull = L.hull_polyline(drv, max_gap=0.01)
    est = L.hcap_oracle(hull, n_walkers=10_000, rng_seed=1)
    target = k83.a * 0.5
    ok = est.within(target, 3.0)
    acceptance_log(2, ok, f"hcap {est.mean:.4f} +- {est.stderr:.4f} vs {target} "
                   f"({(est.mean - target) / est.stderr:+.2f} stderr)")
    assert ok


def test_c03_conformal_radius_law(acceptance_log):
    rep = E.run_experiment("radius_law")
    f = rep.fits
    acceptance_log(3, rep.passed, f"slope {f['slope']:.4f} (target {f['slope_target']:.4f}), "
                   f"prefactor {f['prefactor']:.4f} vs {f['c_star']:.4f}; {_verdicts(rep)}")
    assert rep.passed


def test_c04_distance_law(acceptance_log):
    rep = E.run_experiment("distance_law")
    f = rep.fits
    slopes = ", ".join(f"{v['slope']:.3f}" for k, v in f.items() if k.startswith("config"))
    acceptance_log(4, rep.passed, f"slopes [{slopes}] (target {f['slope_target']:.4f}), "
                   f"c-hat ratio {f.get('c_hat_ratio', math.nan):.3f}; {_verdicts(rep)}")
    assert rep.passed


def test_c05_martingale_identities(acceptance_log, production_tables):
    rep = E.run_experiment("martingale_identity", tables=production_tables)
    worst = max(abs(r.estimate.mean - r.inputs["target"]) / math.hypot(r.estimate.stderr, r.inputs["target_se"])
                for r in rep.rows)
    acceptance_log(5, rep.passed, f"{len(rep.rows)} identities, worst {worst:.2f} combined stderr; {_verdicts(rep)}")
    assert rep.passed


def test_c06_phi_table_laws(acceptance_log, production_tables):
    table = production_tables[8.0 / 3.0]
    res = E.phi_table_checks(table, n=2000, n_nodes=20, seed=1, r=2.0)
    n_ok = sum(x["ok"] for x in res["scaling"])
    ok = res["zero_region"] and res["scaling_ok"] and res["censor_fraction"] < 0.01
    acceptance_log(6, ok, f"zero region {res['zero_region']}, scaling {n_ok}/{len(res['scaling'])} nodes, "
                   f"censored {res['censor_fraction']:.4f}")
    assert ok


def test_c07_invariant_angle_density(acceptance_log):
    rep = E.run_experiment("invariant_density")
    ks = ", ".join(f"{k[3:]}: {v:.4f}" for k, v in rep.fits.items())
    acceptance_log(7, rep.passed, f"KS {ks}; {_verdicts(rep)}")
    assert rep.passed


def test_c08_theta_mean_identity(acceptance_log, production_tables):
    rep = E.run_experiment("theta_consistency", tables=production_tables)
    f = rep.fits
    v = rep.verdicts
    ok = v["mean_identity"] and v["increments_nonnegative"] and v["mean_shift_trend"] and v["censoring"]
    shifts = ", ".join(f"{abs(x):.4f}" for x in f["mean_shifts"])
    l1 = ", ".join(f"{x:.4f}" for x in f["l1_shifts"])
    acceptance_log(8, ok, f"level-6 mean {f['means'][-1]:.4f} vs {f['target']:.4f} "
                   f"(rel {rep.rows[-1].inputs['rel']:+.3f}), min increment {f['min_increment']:.2e}, "
                   f"mean shifts [{shifts}], per-trace L1 shifts [{l1}]; {_verdicts(rep)}")
    assert ok


def test_c09_two_point_band(acceptance_log):
    rep = E.run_experiment("two_point_band")
    trends = "; ".join(f"S={k[7:]}: monotone={v['monotone']}, end gap {v['end_gap_sigma']:.1f} sigma"
                       for k, v in rep.fits.items() if k.startswith("trend_"))
    acceptance_log(9, rep.passed, f"band {rep.fits['band']:.3f}; {trends}; {_verdicts(rep)}")
    assert rep.passed


def test_c10_domain_covariance(acceptance_log):
    rep = E.run_experiment("domain_covariance")
    f = rep.fits
    acceptance_log(10, rep.passed, f"median relative discrepancy {f.get('median_rel', math.nan):.4f} "
                   f"over {f.get('accepted', 0)} traces; {_verdicts(rep)}")
    assert rep.passed


def test_c11_worker_count_reproducibility(acceptance_log, tmp_path):
    cfg = {"n": 1000}
    rows = []
    for workers in (1, 2):
        rep = E.run_experiment("radius_law", cfg, workers=workers)
        path = IO.write_report_csv(tmp_path / f"radius_law_w{workers}.csv", rep, IO.provenance(rep.master_seed))
        rows.append(IO.data_lines(path))
    ok = rows[0] == rows[1] and len(rows[0]) > 1
    acceptance_log(11, ok, f"radius_law n=1000, workers 1 vs 2: {len(rows[0]) - 1} data rows "
                   f"{'identical' if ok else 'differ'}")
    assert ok
