"""Experiment catalog: seeded Monte-Carlo ensembles and their verdicts.

Every replica draws its randomness from ``replica_seed(master, row, r)``,
and replicas are grouped into fixed-size chunks whose results are
reassembled in replica order.  A report is therefore a pure function of
``(name, config, master_seed)``; the worker count only changes wall time.
"""

from __future__ import annotations

import copy
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from typing import Callable, NamedTuple

import numpy as np
from scipy import integrate, stats

from . import _kernels as K
from . import greens as G
from . import loewner as L
from . import natparam as N
from . import sampler as S
from .errors import (ConfigInvalid, DegenerateDesign, MapSingularOnTrace, SLELabError,
                     UnderResolved, UnknownExperiment)
from .stats import EnsembleEstimate

CHUNK = 200


# ---------------------------------------------------------------------------
# fitting


class PowerFit(NamedTuple):
    slope: float
    intercept: float
    slope_err: float


def fit_power_law(points) -> PowerFit:
    """Weighted least squares of ``log y`` on ``log x``.

    ``points`` holds ``(x, y, y_err)`` triples; the weight of a point is
    ``(y / y_err)**2``, the inverse variance of ``log y`` to first order.
    ``slope_err`` comes from the inverse normal matrix (weights taken as known).
    """
    arr = np.asarray(points, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 3 or arr.shape[0] < 3:
        raise DegenerateDesign("a power-law fit needs at least three (x, y, y_err) points")
    x, y, ye = arr.T
    if np.any(x <= 0) or np.any(y <= 0):
        raise DegenerateDesign("power-law fits need positive x and y")
    if np.any(ye <= 0):
        raise ValueError("y_err must be positive")
    if x.max() / x.min() < 2.0:
        raise DegenerateDesign("x values span less than a factor of 2")
    lx, ly = np.log(x), np.log(y)
    w = (y / ye) ** 2
    A = np.column_stack([np.ones_like(lx), lx])
    M = A.T @ (A * w[:, None])
    cov = np.linalg.inv(M)
    intercept, slope = cov @ (A.T @ (w * ly))
    return PowerFit(float(slope), float(intercept), float(math.sqrt(cov[1, 1])))


def weighted_mean(values, errors) -> EnsembleEstimate:
    v = np.asarray(values, dtype=float)
    e = np.asarray(errors, dtype=float)
    if np.any(e <= 0):
        raise ValueError("weights need positive errors")
    w = 1.0 / e ** 2
    return EnsembleEstimate(float(np.dot(w, v) / w.sum()), float(1.0 / math.sqrt(w.sum())), int(v.size), 0)


# ---------------------------------------------------------------------------
# report types


@dataclass(frozen=True)
class Row:
    """One line of a report: its inputs, the ensemble estimate and the verdict.

    ``verdict`` is ``"pass"``, ``"fail"`` or ``"info"`` (rows that feed a
    fit rather than carrying a test of their own).
    """

    row_id: int
    inputs: dict
    estimate: EnsembleEstimate | None
    censored: int = 0
    verdict: str = "info"


@dataclass
class ExperimentReport:
    name: str
    params: dict
    master_seed: int
    rows: list[Row] = field(default_factory=list)
    fits: dict = field(default_factory=dict)
    verdicts: dict = field(default_factory=dict)
    wall_time: float = 0.0

    @property
    def passed(self) -> bool:
        return bool(self.verdicts) and all(self.verdicts.values())


# ---------------------------------------------------------------------------
# configuration


TABLE_DEFAULT = {"grid": "32x96:0.001-10000", "n_per_node": 2000, "seed": 11, "dt": 0.01}

DEFAULTS: dict[str, dict] = {
    "radius_law": {
        "kappa": 8.0 / 3.0, "n": 10_000, "seed": 2023, "dt": 0.01, "horizon": 20.0,
        "geometry": {"z": [0.0, 1.0]},
        "grid": {"eps": [0.2, 0.14, 0.1, 0.07, 0.05, 0.035]},
        "thresholds": {"slope_tol": 0.05, "prefactor_rel": 0.15, "max_censored": 0.05},
    },
    "distance_law": {
        "kappa": 8.0 / 3.0, "n": 10_000, "seed": 2024, "dt": 0.01, "horizon": 20.0,
        "geometry": {"configs": [{"domain": "half-plane", "z": [0.0, 1.0]},
                                 {"domain": "disk", "mark_angle": math.pi},
                                 {"domain": "disk", "mark_angle": math.pi / 2}]},
        "grid": {"eps": [0.2, 0.14, 0.1, 0.07, 0.05, 0.035]},
        "thresholds": {"slope_tol": 0.07, "ratio_max": 1.3, "max_censored": 0.05},
    },
    "minkowski_expectation": {
        "kappa": 8.0 / 3.0, "n": 40, "seed": 2025, "dt": 0.01, "horizon": 20.0,
        "geometry": {"center": [0.0, 1.0], "radius": 0.5, "lattice": 0.05},
        "grid": {"eps": [0.1, 0.07, 0.05, 0.035]},
        "thresholds": {"ratio_max": 1.3, "max_censored": 0.05},
    },
    "two_point_band": {
        "kappa": 8.0 / 3.0, "n": 2000, "seed": 2026, "dt": 0.01,
        "geometry": {"s_w": [1.0, 0.4, 0.1], "q": [0.05, 0.2, 0.5, 0.9], "swap": False},
        "grid": {"hit_rel": 1e-3},
        "thresholds": {"band_max": 10.0, "trend_sigma": 3.0, "max_censored": 0.05},
    },
    "invariant_density": {
        "kappa": [8.0 / 3.0, 4.0], "n": 2000, "seed": 2027, "dt": 0.01,
        "geometry": {"z": [0.0, 1.0]},
        "grid": {"s_sample": 4.0, "s_run": 5.0},
        "thresholds": {"ks_max": 0.05, "max_censored": 0.05},
    },
    "theta_consistency": {
        "kappa": 8.0 / 3.0, "n": 200, "seed": 2028, "dt": 2.0 ** -13, "horizon": 1.0,
        "grid": {"levels": [4, 5, 6], "t": 1.0, "n_r": 32, "n_theta": 16},
        "table": dict(TABLE_DEFAULT),
        "thresholds": {"mean_rel": 0.10, "max_censored": 0.05},
    },
    "domain_covariance": {
        "kappa": 8.0 / 3.0, "n": 50, "seed": 2029, "dt": 1e-4, "horizon": 0.25,
        "geometry": {"slit_u": 1.0, "slit_L": 0.5, "margin": 0.3, "max_replicas": 2000},
        "grid": {"eps": 0.02, "f_rule": "sqrt"},
        "thresholds": {"median_rel": 0.15, "max_censored": 0.05},
    },
    "martingale_identity": {
        "kappa": [2.0, 8.0 / 3.0, 4.0, 6.0], "n": 20_000, "seed": 2030, "dt": 0.01,
        "geometry": {"z": [0.0, 1.0]},
        "grid": {"sigma": 1.0, "eps": 0.05, "times": [0.25, 1.0], "table_kappas": [2.0, 8.0 / 3.0]},
        "table": dict(TABLE_DEFAULT),
        "thresholds": {"k_sigma": 3.0, "max_censored": 0.05},
    },
    "holder_trend": {
        "kappa": 8.0 / 3.0, "n": 40, "seed": 2031, "horizon": 1.0,
        "grid": {"dt_levels": [8, 10, 12], "alpha_factors": [0.8, 1.5], "window": [0.25, 1.0]},
        "thresholds": {"k_sigma": 3.0, "n_boot": 400, "max_censored": 0.05},
    },
}

CATALOG = tuple(DEFAULTS)


def packaged_config(name: str) -> dict:
    """The JSON config shipped with the package for ``name``."""
    if name not in DEFAULTS:
        raise UnknownExperiment(name)
    text = resources.files("slelab").joinpath("configs", f"{name}.json").read_text()
    return json.loads(text)


def _merge(base, override, path):
    if isinstance(base, dict):
        if not isinstance(override, dict):
            raise ConfigInvalid(f"{path or 'config'} must be an object")
        out = copy.deepcopy(base)
        for k, v in override.items():
            if k not in base:
                raise ConfigInvalid(f"unknown key {path + k!r}")
            out[k] = _merge(base[k], v, f"{path}{k}.")
        return out
    if isinstance(base, bool):
        if not isinstance(override, bool):
            raise ConfigInvalid(f"{path[:-1]} must be a boolean")
        return override
    if isinstance(base, (int, float)):
        if isinstance(override, bool) or not isinstance(override, (int, float)):
            raise ConfigInvalid(f"{path[:-1]} must be a number")
        if isinstance(base, int) and isinstance(override, float):
            if not override.is_integer():
                raise ConfigInvalid(f"{path[:-1]} must be an integer")
            return int(override)
        return override
    if isinstance(base, str):
        if not isinstance(override, str):
            raise ConfigInvalid(f"{path[:-1]} must be a string")
        return override
    if isinstance(base, list):
        if isinstance(override, (int, float)) and not isinstance(override, bool):
            return [override]
        if not isinstance(override, list):
            raise ConfigInvalid(f"{path[:-1]} must be a list")
        return copy.deepcopy(override)
    return override


def validate_config(name: str, config: dict | None = None) -> dict:
    """Defaults for ``name`` overlaid with ``config``; unknown or mistyped keys raise."""
    if name not in DEFAULTS:
        raise UnknownExperiment(name)
    config = dict(config or {})
    given = config.pop("name", name)
    if given != name:
        raise ConfigInvalid(f"config is for {given!r}, not {name!r}")
    merged = _merge(DEFAULTS[name], config, "")
    kappas = merged["kappa"] if isinstance(merged["kappa"], list) else [merged["kappa"]]
    for kp in kappas:
        if isinstance(kp, bool) or not isinstance(kp, (int, float)) or not 0 < kp < 8:
            raise ConfigInvalid(f"kappa must lie in (0, 8), got {kp!r}")
    if merged["n"] < 2:
        raise ConfigInvalid("n must be at least 2")
    if merged["seed"] < 0:
        raise ConfigInvalid("seed must be non-negative")
    for key in ("dt", "horizon"):
        if key in merged and merged[key] <= 0:
            raise ConfigInvalid(f"{key} must be positive")
    eps = merged.get("grid", {}).get("eps")
    if isinstance(eps, list) and (len(eps) < 3 or min(eps) <= 0):
        raise ConfigInvalid("grid.eps needs at least three positive values")
    merged["name"] = name
    return merged


def _point(pair) -> complex:
    if not (isinstance(pair, list) and len(pair) == 2):
        raise ConfigInvalid(f"points are [re, im] pairs, got {pair!r}")
    z = complex(float(pair[0]), float(pair[1]))
    if z.imag <= 0:
        raise ConfigInvalid(f"point {pair!r} is not in the upper half-plane")
    return z


def _as_list(kappa) -> list[float]:
    return [float(k) for k in kappa] if isinstance(kappa, list) else [float(kappa)]


# ---------------------------------------------------------------------------
# replica fan-out


def _run_chunk(task):
    fn, payload, master, row, start, stop = task
    return [fn(payload, S.replica_seed(master, row, r)) for r in range(start, stop)]


class _Runner:
    """Maps replica functions over ``(master, row, r)`` seeds, in order."""

    def __init__(self, workers: int):
        self.workers = int(workers)
        self.pool = ProcessPoolExecutor(self.workers) if self.workers > 1 else None

    def close(self):
        if self.pool is not None:
            self.pool.shutdown()

    def replicas(self, fn: Callable, payload, master: int, row: int, n: int, start: int = 0) -> list:
        tasks = [(fn, payload, master, row, s, min(s + CHUNK, start + n))
                 for s in range(start, start + n, CHUNK)]
        if self.pool is None:
            chunks = map(_run_chunk, tasks)
        else:
            chunks = self.pool.map(_run_chunk, tasks)
        out = []
        for c in chunks:
            out.extend(c)
        return out

    def until(self, fn: Callable, payload, master: int, row: int, accept: int, max_n: int):
        """Results of the first ``accept`` replicas (by index) that are not None.

        Replicas are evaluated in blocks of ``CHUNK * max(workers, 1)``; the
        accepted set depends only on the replica indices.
        """
        done: list = []
        start = 0
        block = CHUNK * max(self.workers, 1)
        while start < max_n:
            n = min(block, max_n - start)
            done.extend(self.replicas(fn, payload, master, row, n, start))
            start += n
            if sum(r is not None for r in done) >= accept:
                break
        kept = [(i, r) for i, r in enumerate(done) if r is not None][:accept]
        tried = kept[-1][0] + 1 if len(kept) == accept else len(done)
        return kept, tried


def _censor_ok(censored: int, n: int, limit: float) -> bool:
    return n > 0 and censored / n <= limit


# ---------------------------------------------------------------------------
# replica functions (module level so that worker processes can pickle them)


def _rep_radius(p, seed):
    params = S.kappa_params(p["kappa"])
    res = S.track_points(params, [p["z"]], p["horizon"], p["dt"], seed, stop_ups=p["stop"])
    if res.status in (K.TOO_COARSE, K.LOST):
        return None
    # a dead point is sealed off (Im Z ~ 0) or under the floor; either way its
    # conformal radius is frozen at the last value
    return float(res.ups[0])


def _apollonius(zh: complex, R: float):
    """Euclidean disk in H mapped onto ``|zeta| <= R`` by ``zeta = (w - zh)/(w - conj zh)``."""
    X, Y = zh.real, zh.imag
    c = complex(X, Y * (1 + R * R) / (1 - R * R))
    return c, 2.0 * R * Y / (1 - R * R)


def _rep_distance(p, seed):
    params = S.kappa_params(p["kappa"])
    zh, scale = p["zh"], p["scale"]
    emin, emax = p["eps_min"], p["eps_max"]
    res = S.track_points(params, [zh], p["horizon"], p["dt"], seed, stop_ups=emin / (2.0 * scale), record=True)
    if res.status in (K.TOO_COARSE, K.LOST):
        return None
    if res.stopped:
        return 0.0
    ups_d = float(res.ups[0]) * scale
    if ups_d / 2.0 > emax:
        return math.inf
    R = min(2.0 * ups_d, emax) * (1.0 + 1e-9)
    gap = emin / 4.0
    if p["theta"] is None:
        center, radius, gap_h, zd = zh, R, gap, zh
    else:
        center, radius = _apollonius(zh, R)
        dmin = abs(center - zh.conjugate()) - radius
        gap_h = gap * dmin * dmin / (2.0 * zh.imag)
        zd = 0j
    drv = res.driving
    k_end = min(L.saturation_index(res.trajectory.upsilon) + 10, drv.n_steps)
    runs = L.hull_near(drv, center, radius, gap_h, k_end=k_end)
    if p["theta"] is not None:
        F, _, _ = G.disk_from_half_plane(p["theta"])
        runs = [F(r) for r in runs]
    for r in runs:
        if r.size > 1:
            inside = (np.abs(r[1:] - zd) <= R) & (np.abs(r[:-1] - zd) <= R)
            if np.any(np.abs(np.diff(r))[inside] > gap * (1 + 1e-9)):
                return None  # under-resolved near the point: censored
    return L.distance_to_runs(runs, zd)


def _rep_local_content(p, seed):
    params = S.kappa_params(p["kappa"])
    c, rad, h = p["center"], p["radius"], p["lattice"]
    g = np.arange(-rad, rad + 1e-12, h)
    gx, gy = np.meshgrid(g, g)
    pts = (c + gx + 1j * gy).ravel()
    pts = pts[(np.abs(pts - c) <= rad) & (pts.imag > 0)]
    res = S.track_points(params, pts, p["horizon"], p["dt"], seed, record=True)
    if res.status in (K.TOO_COARSE, K.LOST):
        return None
    eps = p["eps"]
    reach = rad + max(eps)
    runs = L.hull_near(res.driving, c, reach, min(eps) / 4.0)
    return [N.local_content(runs, e, c, rad, params.d) for e in eps]


def _rep_green2(p, seed):
    params = S.kappa_params(p["kappa"])
    v = G.green2_sample(p["z"], p["w"], params, seed, p["hit"], dt=p["dt"])
    return v


def _rep_angle(p, seed):
    params = S.kappa_params(p["kappa"])
    z = p["z"]
    try:
        run = S.sample_two_sided(params, z, p["dt"], seed, hit_radius=z.imag * math.exp(-p["s_run"]))
        s, th = S.radial_angle_series(run, s_min=p["s_run"])
    except SLELabError:
        return None
    return float(th[int(np.searchsorted(s, p["s_sample"]))])


def _rep_theta(p, seed):
    params = S.kappa_params(p["kappa"])
    drv = S.sample_chordal(params, p["horizon"], p["dt"], seed)
    out = []
    for n in p["levels"]:
        ser = N.theta_dyadic(drv, p["t"], n, p["table"], params, n_r=p["n_r"], n_theta=p["n_theta"])
        out.append((ser.total, float(ser.increments.min())))
    return out


def _rep_covariance(p, seed):
    params = S.kappa_params(p["kappa"])
    u, Ls, eps = p["u"], p["L"], p["eps"]
    drv = S.sample_chordal(params, p["horizon"], p["dt"], seed)
    coarse = L.hull_polyline(drv)
    img, _ = G.slit_map(coarse.points, u, Ls)
    seg_y = np.clip(img.imag, 0.0, Ls)
    if np.min(np.abs(img - (u + 1j * seg_y))) < p["margin"]:
        return None
    dom = G.DomainSpec("slit-half-plane", marks=(float(G.slit_map(0j, u, Ls)[0].real), G.INF), slit=(u, Ls))
    gap = eps / 8.0
    for _ in range(4):
        hp = L.hull_polyline(drv, max_gap=gap)
        img, dimg = G.slit_map(hp.points, u, Ls)
        if np.abs(np.diff(img)).max() <= eps / 4.0:
            break
        gap /= 2.0
    else:
        return math.nan
    try:
        mass = N.content_measure(hp, None, eps, G.HALF_PLANE, p["f_rule"])
        moved = N.transport_theta(hp, mass, lambda w: G.slit_map(w, u, Ls)[1], params.d)
        direct = N.minkowski_content(img, None, eps, dom, p["f_rule"], d=params.d)
    except (UnderResolved, MapSingularOnTrace):
        return math.nan
    return (moved, direct)


def _rep_holder(p, seed):
    params = S.kappa_params(p["kappa"])
    levels = sorted(p["levels"])
    fine = S.sample_chordal(params, p["horizon"], 2.0 ** -levels[-1], seed)
    out = []
    for lev in levels:
        stride = 2 ** (levels[-1] - lev)
        drv = L.DrivingPath(2.0 ** -lev, fine.values[::stride].copy(), params.a)
        tr = L.extract_trace(drv)
        out.append([N.holder_statistic(tr, al, tuple(p["window"])) for al in p["alphas"]])
    return out


def _rep_mart_stopped(p, seed):
    params = S.kappa_params(p["kappa"])
    res = S.track_points(params, [p["z"]], p["sigma"], p["dt"], seed, stop_ups=p["eps"])
    if res.status in (K.TOO_COARSE, K.LOST):
        return None
    if res.status == K.ALL_DEAD:
        return 0.0
    return float(G.local_mart(res.ups[0], res.ssin[0], params))


def _rep_mart_fixed(p, seed):
    params = S.kappa_params(p["kappa"])
    res = S.track_points(params, [p["z"]], p["t"], p["dt"], seed)
    if res.status in (K.TOO_COARSE, K.LOST):
        return None
    if res.status == K.ALL_DEAD:
        return 0.0
    return float(G.local_mart(res.ups[0], res.ssin[0], params))


# ---------------------------------------------------------------------------
# experiments


def _bernoulli_rows(report, start_id, dists, eps_list, extra_inputs, seed, limit):
    valid = [d for d in dists if d is not None]
    cens = len(dists) - len(valid)
    arr = np.array(valid, dtype=float)
    rows = []
    for j, e in enumerate(eps_list):
        hits = int(np.count_nonzero(arr <= e))
        est = EnsembleEstimate.bernoulli(hits, arr.size, seed)
        verdict = "info" if _censor_ok(cens, len(dists), limit) else "fail"
        rows.append(Row(start_id + j, {**extra_inputs, "eps": float(e)}, est, cens, verdict))
    report.rows.extend(rows)
    return rows, cens


def _hitting_prefactor(rows, eps_list, d, green):
    pts, pref, pref_err = [], [], []
    for row, e in zip(rows, eps_list):
        est = row.estimate
        pts.append((1.0 / e, est.mean, est.stderr))
        if est.mean > 0:
            c = e ** (d - 2.0) / green
            pref.append(est.mean * c)
            pref_err.append(est.stderr * c)
    fit = fit_power_law(pts)
    return fit, weighted_mean(pref, pref_err)


def _exp_radius_law(cfg, master, run, tables):
    kappa = float(cfg["kappa"])
    params = S.kappa_params(kappa)
    z = _point(cfg["geometry"]["z"])
    eps = sorted(cfg["grid"]["eps"], reverse=True)
    th = cfg["thresholds"]
    payload = {"kappa": kappa, "z": z, "horizon": cfg["horizon"], "dt": cfg["dt"], "stop": min(eps)}
    ups = run.replicas(_rep_radius, payload, master, 0, cfg["n"])
    rep = ExperimentReport("radius_law", cfg, master)
    rows, cens = _bernoulli_rows(rep, 0, ups, eps, {"kappa": kappa}, master, th["max_censored"])
    target = -(2.0 - params.d)
    try:
        fit, pref = _hitting_prefactor(rows, eps, params.d, G.green_h(z, params))
    except DegenerateDesign:
        rep.verdicts.update(slope=False, prefactor=False)
        return rep
    rep.fits = {"slope": fit.slope, "intercept": fit.intercept, "slope_err": fit.slope_err,
                "slope_target": target, "prefactor": pref.mean, "prefactor_err": pref.stderr,
                "c_star": params.c_star, "censored": cens}
    rep.verdicts["slope"] = abs(fit.slope - target) <= th["slope_tol"]
    rep.verdicts["prefactor"] = abs(pref.mean / params.c_star - 1.0) <= th["prefactor_rel"]
    rep.verdicts["censoring"] = _censor_ok(cens, len(ups), th["max_censored"])
    return rep


def _geometry_case(case, params):
    """``(z_H, |F'(z_H)|, theta, G_D)`` for one distance-law configuration."""
    kind = case.get("domain", "half-plane")
    if kind == "half-plane":
        zh = _point(case["z"])
        return zh, 1.0, None, G.green_h(zh, params), {"domain": kind, "z_re": zh.real, "z_im": zh.imag}
    if kind == "disk":
        ang = float(case["mark_angle"])
        if not 0 < ang < 2 * math.pi:
            raise ConfigInvalid("mark_angle must lie in (0, 2 pi)")
        theta = ang / 2.0
        _, dF, zh = G.disk_from_half_plane(theta)
        dom = G.DomainSpec("disk", marks=(1.0 + 0j, complex(math.cos(ang), math.sin(ang))))
        gd = G.green_domain(0j, dom, params)
        return zh, abs(dF(zh)), theta, gd, {"domain": kind, "mark_angle": ang}
    raise ConfigInvalid(f"unknown domain {kind!r}")


def _exp_distance_law(cfg, master, run, tables):
    kappa = float(cfg["kappa"])
    params = S.kappa_params(kappa)
    eps = sorted(cfg["grid"]["eps"], reverse=True)
    th = cfg["thresholds"]
    rep = ExperimentReport("distance_law", cfg, master)
    target = -(2.0 - params.d)
    chats = []
    ok = True
    for ci, case in enumerate(cfg["geometry"]["configs"]):
        zh, scale, theta, gd, inputs = _geometry_case(case, params)
        payload = {"kappa": kappa, "zh": zh, "scale": scale, "theta": theta, "eps_min": min(eps),
                   "eps_max": max(eps), "horizon": cfg["horizon"], "dt": cfg["dt"]}
        dists = run.replicas(_rep_distance, payload, master, ci, cfg["n"])
        rows, cens = _bernoulli_rows(rep, len(rep.rows), dists, eps, {"config": ci, **inputs},
                                     master, th["max_censored"])
        try:
            fit, chat = _hitting_prefactor(rows, eps, params.d, gd)
        except DegenerateDesign:
            ok = False
            continue
        chats.append(chat.mean)
        rep.fits[f"config{ci}"] = {"slope": fit.slope, "slope_err": fit.slope_err, "c_hat": chat.mean,
                                   "c_hat_err": chat.stderr, "green": gd, "censored": cens}
        rep.verdicts[f"slope_config{ci}"] = abs(fit.slope - target) <= th["slope_tol"]
        rep.verdicts[f"censoring_config{ci}"] = _censor_ok(cens, len(dists), th["max_censored"])
    rep.fits["slope_target"] = target
    if ok and chats and min(chats) > 0:
        ratio = max(chats) / min(chats)
        rep.fits["c_hat_ratio"] = ratio
        rep.verdicts["universality"] = ratio <= th["ratio_max"]
    else:
        rep.verdicts["universality"] = False
    return rep


def integral_green_disk(params, center: complex, radius: float) -> float:
    """``int_{|w - center| <= radius} G(w) dA(w)`` (disk inside H)."""
    if center.imag <= radius:
        raise ConfigInvalid("the region must stay inside the half-plane")

    def f(r, phi):
        w = center + r * complex(math.cos(phi), math.sin(phi))
        return G.green_h(w, params) * r

    val, _ = integrate.dblquad(f, 0.0, 2 * math.pi, 0.0, radius, epsabs=1e-10, epsrel=1e-9)
    return float(val)


def _exp_minkowski_expectation(cfg, master, run, tables):
    kappa = float(cfg["kappa"])
    params = S.kappa_params(kappa)
    geo, th = cfg["geometry"], cfg["thresholds"]
    c = _point(geo["center"])
    eps = sorted(cfg["grid"]["eps"], reverse=True)
    payload = {"kappa": kappa, "center": c, "radius": float(geo["radius"]), "lattice": float(geo["lattice"]),
               "eps": eps, "horizon": cfg["horizon"], "dt": cfg["dt"]}
    vals = run.replicas(_rep_local_content, payload, master, 0, cfg["n"])
    good = np.array([v for v in vals if v is not None], dtype=float)
    cens = len(vals) - good.shape[0]
    gint = integral_green_disk(params, c, float(geo["radius"]))
    rep = ExperimentReport("minkowski_expectation", cfg, master)
    ratios = []
    for j, e in enumerate(eps):
        est = EnsembleEstimate.from_samples(good[:, j], master)
        rep.rows.append(Row(j, {"eps": e, "green_integral": gint}, est, cens, "info"))
        ratios.append(est.mean / gint)
    spread = max(ratios) / min(ratios) if min(ratios) > 0 else math.inf
    rep.fits = {"ratios": ratios, "ratio_spread": spread, "green_integral": gint}
    rep.verdicts["ratio_stability"] = spread <= th["ratio_max"]
    rep.verdicts["censoring"] = _censor_ok(cens, len(vals), th["max_censored"])
    return rep


def _two_point_configs(geo):
    out = []
    for sw in geo["s_w"]:
        for q in geo["q"]:
            if not (0 < sw <= 1 and 0 < q < 1):
                raise ConfigInvalid("need 0 < S(w) <= 1 and 0 < q < 1")
            w = complex(math.sqrt(1 - sw * sw), sw)
            z = w * (1 - q)
            out.append((float(sw), float(q), z, w))
    return out


def _exp_two_point_band(cfg, master, run, tables):
    kappa = float(cfg["kappa"])
    params = S.kappa_params(kappa)
    geo, th = cfg["geometry"], cfg["thresholds"]
    hit_rel = float(cfg["grid"]["hit_rel"])
    rep = ExperimentReport("two_point_band", cfg, master)
    ratios = []
    for i, (sw, q, z, w) in enumerate(_two_point_configs(geo)):
        a, b = (w, z) if geo["swap"] else (z, w)
        parts = []
        cens = 0
        # seeds follow the point the run is tilted to, so a swapped row replays the same runs
        for j, (tgt, other) in enumerate(sorted([(a, b), (b, a)], key=lambda p: (abs(p[0]), p[0].real))):
            payload = {"kappa": kappa, "z": tgt, "w": other, "hit": hit_rel * tgt.imag, "dt": cfg["dt"]}
            vals = run.replicas(_rep_green2, payload, master, 2 * i + j, cfg["n"])
            good = [v for v in vals if v is not None]
            cens += len(vals) - len(good)
            parts.append(EnsembleEstimate.from_samples(good, master).scaled(G.green_h(tgt, params)))
        total = EnsembleEstimate(parts[0].mean + parts[1].mean, math.hypot(parts[0].stderr, parts[1].stderr),
                                 parts[0].n + parts[1].n, master)
        env = G.two_point_envelope(a, b, params)
        ratio = total.scaled(1.0 / env)
        ratios.append((sw, q, ratio))
        verdict = "info" if _censor_ok(cens, 2 * cfg["n"], th["max_censored"]) else "fail"
        rep.rows.append(Row(i, {"s_w": sw, "q": q, "z_re": a.real, "z_im": a.imag, "w_re": b.real,
                                "w_im": b.imag, "envelope": env}, ratio, cens, verdict))
    vals = [r.mean for _, _, r in ratios]
    band = max(vals) / min(vals) if min(vals) > 0 else math.inf
    rep.fits["band"] = band
    rep.verdicts["band"] = band <= th["band_max"]
    trend_ok = True
    for sw in geo["s_w"]:
        grp = [(q, r.mean, r.stderr) for s, q, r in ratios if s == sw]
        try:
            fit = fit_power_law(grp)
        except DegenerateDesign:
            continue
        grp.sort()
        steps = np.sign(np.diff([m for _, m, _ in grp]))
        monotone = bool(np.all(steps > 0) or np.all(steps < 0))
        gap = abs(grp[-1][1] - grp[0][1])
        sigma = math.hypot(grp[-1][2], grp[0][2])
        flagged = monotone and gap > th["trend_sigma"] * sigma
        rep.fits[f"trend_s{sw:g}"] = {"slope": fit.slope, "slope_err": fit.slope_err,
                                      "monotone": monotone, "end_gap_sigma": gap / sigma if sigma > 0 else math.inf}
        if flagged:
            trend_ok = False
    rep.verdicts["no_trend"] = trend_ok
    rep.verdicts["censoring"] = all(r.verdict != "fail" for r in rep.rows)
    return rep


def _exp_invariant_density(cfg, master, run, tables):
    th = cfg["thresholds"]
    z = _point(cfg["geometry"]["z"])
    rep = ExperimentReport("invariant_density", cfg, master)
    for i, kappa in enumerate(_as_list(cfg["kappa"])):
        params = S.kappa_params(kappa)
        payload = {"kappa": kappa, "z": z, "dt": cfg["dt"], "s_run": float(cfg["grid"]["s_run"]),
                   "s_sample": float(cfg["grid"]["s_sample"])}
        vals = run.replicas(_rep_angle, payload, master, i, cfg["n"])
        good = np.array([v for v in vals if v is not None])
        cens = len(vals) - good.size
        ks = float(stats.kstest(good, lambda x: S.sin_power_cdf(params, x)).statistic)
        ok = ks <= th["ks_max"] and _censor_ok(cens, len(vals), th["max_censored"])
        est = EnsembleEstimate.from_samples(good, master)
        rep.rows.append(Row(i, {"kappa": kappa, "ks": ks}, est, cens, "pass" if ok else "fail"))
        rep.fits[f"ks_kappa{kappa:g}"] = ks
        rep.verdicts[f"ks_kappa{kappa:g}"] = ok
    return rep


def _table_for(kappa, cfg, tables, run):
    for k, tab in (tables or {}).items():
        if abs(float(k) - kappa) <= 1e-9 * max(1.0, kappa):
            tab.check_kappa(kappa)
            return tab
    tc = cfg["table"]
    return G.build_phi_table(S.kappa_params(kappa), G.PhiGrid.parse(tc["grid"]), tc["n_per_node"],
                             tc["seed"], dt=tc["dt"], workers=run.workers)


def _exp_theta_consistency(cfg, master, run, tables):
    kappa = float(cfg["kappa"])
    params = S.kappa_params(kappa)
    gr, th = cfg["grid"], cfg["thresholds"]
    table = _table_for(kappa, cfg, tables, run)
    levels = sorted(int(x) for x in gr["levels"])
    t = float(gr["t"])
    payload = {"kappa": kappa, "horizon": max(cfg["horizon"], t), "dt": cfg["dt"], "levels": levels, "t": t,
               "table": table, "n_r": gr["n_r"], "n_theta": gr["n_theta"]}
    vals = run.replicas(_rep_theta, payload, master, 0, cfg["n"])
    good = [v for v in vals if v is not None]
    cens = len(vals) - len(good)
    target = t ** (params.d / 2.0) * N.integral_g1(table, params)
    rep = ExperimentReport("theta_consistency", cfg, master)
    means = []
    min_inc = math.inf
    for j, lev in enumerate(levels):
        tot = np.array([g[j][0] for g in good])
        min_inc = min(min_inc, min(g[j][1] for g in good))
        est = EnsembleEstimate.from_samples(tot, master)
        means.append(est.mean)
        rel = est.mean / target - 1.0
        verdict = "info"
        if lev == max(levels):
            verdict = "pass" if abs(rel) <= th["mean_rel"] else "fail"
        rep.rows.append(Row(j, {"level": lev, "t": t, "target": target, "rel": rel}, est, cens, verdict))
    totals = np.array([[g[j][0] for j in range(len(levels))] for g in good])
    # per-trace distance between successive levels; L1 convergence makes it shrink
    l1 = [float(np.mean(np.abs(totals[:, j + 1] - totals[:, j]))) for j in range(len(levels) - 1)]
    rep.fits = {"target": target, "means": means, "min_increment": min_inc,
                "mean_shifts": list(np.diff(means)), "l1_shifts": l1}
    rep.verdicts["mean_identity"] = rep.rows[-1].verdict == "pass"
    rep.verdicts["increments_nonnegative"] = min_inc >= 0.0
    if len(l1) >= 2:
        shifts = np.abs(np.diff(means))
        rep.verdicts["mean_shift_trend"] = bool(shifts[-1] < shifts[-2])
        rep.verdicts["l1_shift_trend"] = l1[-1] < l1[-2]
    rep.verdicts["censoring"] = _censor_ok(cens, len(vals), th["max_censored"])
    return rep


def _exp_domain_covariance(cfg, master, run, tables):
    kappa = float(cfg["kappa"])
    geo, gr, th = cfg["geometry"], cfg["grid"], cfg["thresholds"]
    payload = {"kappa": kappa, "u": float(geo["slit_u"]), "L": float(geo["slit_L"]), "margin": float(geo["margin"]),
               "eps": float(gr["eps"]), "f_rule": gr["f_rule"], "horizon": cfg["horizon"], "dt": cfg["dt"]}
    kept, tried = run.until(_rep_covariance, payload, master, 0, cfg["n"], int(geo["max_replicas"]))
    good = [(i, r) for i, r in kept if not (isinstance(r, float) and math.isnan(r))]
    cens = len(kept) - len(good)
    rep = ExperimentReport("domain_covariance", cfg, master)
    if len(good) < 2:
        rep.verdicts.update(median=False, censoring=False)
        return rep
    moved = np.array([r[0] for _, r in good])
    direct = np.array([r[1] for _, r in good])
    rel = np.abs(moved - direct) / direct
    for name, arr in (("transported", moved), ("direct", direct), ("relative_discrepancy", rel)):
        rep.rows.append(Row(len(rep.rows), {"quantity": name, "median": float(np.median(arr))},
                            EnsembleEstimate.from_samples(arr, master), cens, "info"))
    med = float(np.median(rel))
    rep.fits = {"median_rel": med, "accepted": len(kept), "tried": tried}
    rep.verdicts["median"] = len(kept) == cfg["n"] and med <= th["median_rel"]
    rep.verdicts["censoring"] = _censor_ok(cens, len(kept), th["max_censored"])
    return rep


def _mart_row(rep, inputs, vals, target, target_se, master, k, limit):
    good = [v for v in vals if v is not None]
    cens = len(vals) - len(good)
    est = EnsembleEstimate.from_samples(good, master)
    ok = est.within(target, k, target_se) and _censor_ok(cens, len(vals), limit)
    rep.rows.append(Row(len(rep.rows), {**inputs, "target": target, "target_se": target_se}, est, cens,
                        "pass" if ok else "fail"))
    return ok


def _exp_martingale_identity(cfg, master, run, tables):
    gr, th = cfg["grid"], cfg["thresholds"]
    z = _point(cfg["geometry"]["z"])
    rep = ExperimentReport("martingale_identity", cfg, master)
    table_kappas = [float(k) for k in gr["table_kappas"]]
    row = 0
    for kappa in _as_list(cfg["kappa"]):
        params = S.kappa_params(kappa)
        g = G.green_h(z, params)
        payload = {"kappa": kappa, "z": z, "sigma": float(gr["sigma"]), "eps": float(gr["eps"]), "dt": cfg["dt"]}
        vals = run.replicas(_rep_mart_stopped, payload, master, row, cfg["n"])
        row += 1
        key = f"stopped_kappa{kappa:g}"
        rep.verdicts[key] = _mart_row(rep, {"kappa": kappa, "kind": "stopped", "t": float(gr["sigma"])},
                                      vals, g, 0.0, master, th["k_sigma"], th["max_censored"])
        if not any(abs(kappa - k) < 1e-9 for k in table_kappas):
            continue
        table = _table_for(kappa, cfg, tables, run)
        for t in gr["times"]:
            t = float(t)
            phi = table.phi(z, t)
            phi_se = _phi_stderr(table, z, t)
            payload = {"kappa": kappa, "z": z, "t": t, "dt": cfg["dt"]}
            vals = run.replicas(_rep_mart_fixed, payload, master, row, cfg["n"])
            row += 1
            rep.verdicts[f"fixed_kappa{kappa:g}_t{t:g}"] = _mart_row(
                rep, {"kappa": kappa, "kind": "fixed", "t": t}, vals, g * (1.0 - phi), g * phi_se,
                master, th["k_sigma"], th["max_censored"])
    return rep


def _phi_stderr(table: G.PhiTable, z: complex, t: float) -> float:
    """Stderr of the interpolated phi, interpolating the node stderrs the same way."""
    shadow = G.PhiTable(table.kappa, table.theta_grid, table.s_grid, table.stderr, table.stderr,
                        table.n_samples, table.censored, table.master_seed, table.meta)
    val = shadow.phi_array(np.angle(z), t / abs(z) ** 2)
    return float(np.nan_to_num(val))


def _log_median_shift(samples, first, last, n_boot, seed):
    """Change of log-median between two columns and its bootstrap stderr."""
    lo, hi = np.log(samples[:, first]), np.log(samples[:, last])
    shift = float(np.median(hi) - np.median(lo))
    rng = np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), 7]))
    idx = rng.integers(0, samples.shape[0], size=(n_boot, samples.shape[0]))
    boot = np.median(hi[idx], axis=1) - np.median(lo[idx], axis=1)
    return shift, float(np.std(boot))


def _exp_holder_trend(cfg, master, run, tables):
    kappa = float(cfg["kappa"])
    params = S.kappa_params(kappa)
    gr, th = cfg["grid"], cfg["thresholds"]
    levels = sorted(int(x) for x in gr["dt_levels"])
    factors = sorted(float(f) for f in gr["alpha_factors"])
    if len(factors) != 2 or not factors[0] < 1 < factors[1]:
        raise ConfigInvalid("alpha_factors needs one factor below 1 and one above")
    if len(levels) < 2:
        raise ConfigInvalid("dt_levels needs at least two levels")
    alphas = [params.alpha_star * f for f in factors]
    if any(not 0 < a < 1 for a in alphas):
        raise ConfigInvalid("alpha_star * factors must lie in (0, 1)")
    payload = {"kappa": kappa, "horizon": cfg["horizon"], "levels": levels, "alphas": alphas,
               "window": [float(x) for x in gr["window"]]}
    vals = run.replicas(_rep_holder, payload, master, 0, cfg["n"])
    good = np.array([v for v in vals if v is not None], dtype=float)
    cens = len(vals) - good.shape[0]
    rep = ExperimentReport("holder_trend", cfg, master)
    shifts = []
    for ia, al in enumerate(alphas):
        col = good[:, :, ia]
        for il, lev in enumerate(levels):
            est = EnsembleEstimate.from_samples(col[:, il], master)
            rep.rows.append(Row(len(rep.rows), {"alpha": al, "dt_level": lev, "median": float(np.median(col[:, il]))},
                                est, cens, "info"))
        shift, se = _log_median_shift(col, 0, len(levels) - 1, int(th["n_boot"]), master + ia)
        shifts.append((shift, se))
        rep.fits[f"log_median_shift_alpha{al:.4f}"] = {"shift": shift, "stderr": se}
    rep.fits["alpha_star"] = params.alpha_star
    k = th["k_sigma"]
    rep.verdicts["bounded_below"] = shifts[0][0] <= k * shifts[0][1]
    rep.verdicts["grows_above"] = shifts[1][0] > k * shifts[1][1]
    rep.verdicts["censoring"] = _censor_ok(cens, len(vals), th["max_censored"])
    return rep


_RUNNERS = {
    "radius_law": _exp_radius_law,
    "distance_law": _exp_distance_law,
    "minkowski_expectation": _exp_minkowski_expectation,
    "two_point_band": _exp_two_point_band,
    "invariant_density": _exp_invariant_density,
    "theta_consistency": _exp_theta_consistency,
    "domain_covariance": _exp_domain_covariance,
    "martingale_identity": _exp_martingale_identity,
    "holder_trend": _exp_holder_trend,
}


def run_experiment(name: str, config: dict | None = None, master_seed: int | None = None, *,
                   workers: int = 1, tables: dict | None = None) -> ExperimentReport:
    """Run one catalog experiment.

    ``config`` overrides the defaults of ``name`` (see :data:`DEFAULTS`);
    ``master_seed`` overrides ``config["seed"]``.  ``tables`` maps kappa
    to a prebuilt :class:`PhiTable` for experiments that need one.
    """
    if name not in _RUNNERS:
        raise UnknownExperiment(name)
    cfg = validate_config(name, config)
    if master_seed is not None:
        if master_seed < 0:
            raise ConfigInvalid("seed must be non-negative")
        cfg["seed"] = int(master_seed)
    if workers < 1:
        raise ConfigInvalid("workers must be at least 1")
    t0 = time.perf_counter()
    run = _Runner(workers)
    try:
        rep = _RUNNERS[name](cfg, cfg["seed"], run, tables)
    finally:
        run.close()
    rep.wall_time = time.perf_counter() - t0
    return rep


def phi_table_checks(table: G.PhiTable, n: int = 2000, n_nodes: int = 20, seed: int = 0, r: float = 2.0,
                     k: float = 3.0, dt: float | None = None) -> dict:
    """Exact-zero region, scaling ``phi(z; t) = phi(r z; r^2 t)`` and censoring of a table.

    The scaling check draws ``n`` fresh runs from ``r e^{i theta}`` at
    ``n_nodes`` random grid nodes and compares the empirical CDF at
    ``r^2 s`` with the tabulated value at ``(theta, s)``.
    """
    params = S.kappa_params(table.kappa)
    th, sg = np.meshgrid(table.theta_grid, table.s_grid, indexing="ij")
    zero = 2.0 * params.a * sg <= np.sin(th) ** 2
    zero_ok = bool(np.all(table.values[zero] == 0.0))
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    cand = np.argwhere(~zero & (table.values > 0.02) & (table.values < 0.98))
    pick = cand[rng.choice(cand.shape[0], size=min(n_nodes, cand.shape[0]), replace=False)]
    dt = float(table.meta.get("dt", 0.01)) if dt is None else dt
    hit_rel = float(table.meta.get("hit_rel", 1e-3))
    results = []
    for m, (i, j) in enumerate(pick):
        theta, s = float(table.theta_grid[i]), float(table.s_grid[j])
        z = r * complex(math.cos(theta), math.sin(theta))
        horizon = max(S.default_horizon_cap(params, z), r * r * s * 1.01)
        hits = 0
        used = 0
        for rr in range(n):
            try:
                run = S.sample_two_sided(params, z, dt, S.replica_seed(seed, m, rr), hit_rel * z.imag,
                                         horizon=horizon, record=False, censor_ok=True)
            except SLELabError:
                used += 1
                continue
            used += 1
            hits += run.hit and max(run.hit_time, z.imag ** 2 / (2 * params.a)) <= r * r * s
        est = EnsembleEstimate.bernoulli(hits, used, seed)
        tab_se = float(table.stderr[i, j])
        ok = est.within(float(table.values[i, j]), k, tab_se)
        results.append({"theta": theta, "s": s, "table": float(table.values[i, j]), "table_se": tab_se,
                        "scaled": est.mean, "scaled_se": est.stderr, "ok": bool(ok)})
    cens = float(np.sum(table.censored) / np.sum(table.n_samples)) if table.censored is not None else 0.0
    return {"zero_region": zero_ok, "scaling": results, "scaling_ok": all(x["ok"] for x in results),
            "censor_fraction": cens}
