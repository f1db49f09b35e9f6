"""Natural-length estimators.

Two independent routes: Minkowski content of a sampled trace, and the
dyadic sums ``Theta^(n)_t = sum_j L(j/2^n, (j+1)/2^n)`` where each
``L(s, s+delta) = int |f_s'(w)|^d G^delta(w) dA(w)`` is computed by quadrature
over the localized disk ``|w| <= n 2^{-n/2}``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from . import _kernels as K
from .errors import MapSingularOnTrace, QuadratureDiverged, TableRange, UnderResolved
from .greens import HALF_PLANE, DomainSpec, PhiTable, green_h
from .loewner import DrivingPath, TracePolyline, densify
from .sampler import KappaParams


# ---------------------------------------------------------------------------
# Minkowski content


@dataclass(frozen=True)
class ContentProfile:
    epsilons: np.ndarray
    contents: np.ndarray
    f_rule: str
    domain: DomainSpec


def floor_distance(eps: float, f_rule: str) -> float:
    if f_rule == "sqrt":
        return math.sqrt(eps)
    if f_rule == "none":
        return 0.0
    raise ValueError(f"unknown floor rule {f_rule!r}")


def _sausage_cells(pts: np.ndarray, eps: float, dom: DomainSpec, f_rule: str):
    """Centres of lattice cells (side eps/4) inside the eps-sausage and the domain.

    ``pts`` is one polyline or a list of separate polylines.

    The lattice is anchored at the origin so that sausages of nested curves
    give nested cell sets.  Returns the centres and the index of the nearest
    densified sample for each.
    """
    side = eps / 4.0
    runs = pts if isinstance(pts, list) else [pts]
    dense = np.concatenate([densify(r, eps / 16.0) if r.size > 1 else r for r in runs])
    tree = cKDTree(np.column_stack([dense.real, dense.imag]))
    reach = int(math.ceil(eps / side)) + 1
    base = np.unique(np.column_stack([np.floor(dense.real / side), np.floor(dense.imag / side)]).astype(np.int64), axis=0)
    offs = np.arange(-reach, reach + 1)
    ox, oy = np.meshgrid(offs, offs, indexing="ij")
    ox, oy = ox.ravel(), oy.ravel()
    keep = (np.maximum(np.abs(ox) - 1, 0) ** 2 + np.maximum(np.abs(oy) - 1, 0) ** 2) * side ** 2 <= eps ** 2
    ox, oy = ox[keep], oy[keep]
    chunks = []
    for i0 in range(0, base.shape[0], 2048):
        b = base[i0:i0 + 2048]
        c = np.stack([(b[:, 0:1] + ox[None, :]).ravel(), (b[:, 1:2] + oy[None, :]).ravel()], axis=1)
        chunks.append(c)
    allc = np.unique(np.concatenate(chunks), axis=0)
    centres = (allc[:, 0] + 0.5) * side + 1j * (allc[:, 1] + 0.5) * side
    dist, idx = tree.query(np.column_stack([centres.real, centres.imag]), distance_upper_bound=eps * (1 + 1e-12))
    ok = np.isfinite(dist)
    centres, idx = centres[ok], idx[ok]
    inside = dom.contains(centres)
    floor = floor_distance(eps, f_rule)
    if floor > 0:
        inside &= dom.boundary_distance(centres) >= floor
    return centres[inside], idx[inside], dense


def _check_resolution(pts: np.ndarray, eps: float):
    if pts.size > 1:
        gap = float(np.abs(np.diff(pts)).max())
        if gap > eps / 4.0 * (1 + 1e-9):
            raise UnderResolved(f"trace spacing {gap:.3g} exceeds eps/4 = {eps / 4:.3g}")


def minkowski_content(trace: TracePolyline | np.ndarray, upto: float | None, eps: float,
                      dom: DomainSpec = HALF_PLANE, f_rule: str = "sqrt",
                      d: float | None = None) -> float:
    """``eps**(d-2) * Area{dist(., gamma_upto) <= eps, dist(., boundary) >= f(eps)}``.

    ``d`` defaults to ``1 + kappa/8`` of the trace.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if isinstance(trace, TracePolyline):
        pts = trace.prefix(upto)
        if d is None:
            d = 1.0 + trace.kappa / 8.0
    else:
        pts = np.asarray(trace, dtype=complex)
        if d is None:
            raise ValueError("d is required for bare point arrays")
    if pts.size == 0:
        return 0.0
    _check_resolution(pts, eps)
    centres, _, _ = _sausage_cells(pts, eps, dom, f_rule)
    return eps ** (d - 2.0) * centres.size * (eps / 4.0) ** 2


def local_content(runs: list[np.ndarray], eps: float, center: complex, radius: float, d: float) -> float:
    """``eps**(d-2) * Area`` of the eps-sausage of ``runs`` inside the disk ``B(center, radius)``.

    An empty list (no curve near the disk) has content zero.
    """
    runs = [np.asarray(r, dtype=complex) for r in runs if np.size(r)]
    if not runs:
        return 0.0
    for r in runs:
        _check_resolution(r, eps)
    centres, _, _ = _sausage_cells(runs, eps, HALF_PLANE, "none")
    n_in = int(np.count_nonzero(np.abs(centres - center) <= radius))
    return eps ** (d - 2.0) * n_in * (eps / 4.0) ** 2


def content_profile(trace: TracePolyline, upto: float | None, epsilons, dom: DomainSpec = HALF_PLANE,
                    f_rule: str = "sqrt") -> ContentProfile:
    eps = np.sort(np.asarray(epsilons, dtype=float))[::-1]
    vals = np.array([minkowski_content(trace, upto, e, dom, f_rule) for e in eps])
    return ContentProfile(eps, vals, f_rule, dom)


def content_measure(trace: TracePolyline, upto: float | None, eps: float, dom: DomainSpec = HALF_PLANE,
                    f_rule: str = "sqrt") -> np.ndarray:
    """Content split among trace vertices: each sausage cell goes to its nearest vertex.

    Returns one mass per vertex of the prefix; the masses sum to
    :func:`minkowski_content`.
    """
    pts = trace.prefix(upto)
    d = 1.0 + trace.kappa / 8.0
    mass = np.zeros(pts.size)
    if pts.size == 0:
        return mass
    _check_resolution(pts, eps)
    centres, idx, dense = _sausage_cells(pts, eps, dom, f_rule)
    owner = _nearest_vertex(dense, pts)
    np.add.at(mass, owner[idx], eps ** (d - 2.0) * (eps / 4.0) ** 2)
    return mass


def _nearest_vertex(dense: np.ndarray, pts: np.ndarray) -> np.ndarray:
    tree = cKDTree(np.column_stack([pts.real, pts.imag]))
    return tree.query(np.column_stack([dense.real, dense.imag]))[1]


# ---------------------------------------------------------------------------
# L(s, s + delta) by quadrature


@dataclass(frozen=True)
class QuadRule:
    """Nodes ``v`` and weights ``G^1(v) dA(v)`` on ``rho_min <= |v| <= radius``."""

    nodes: np.ndarray
    weights: np.ndarray
    radius: float
    n_r: int
    n_theta: int

    @property
    def total(self) -> float:
        return float(self.weights.sum())


def quad_rule(table: PhiTable, params: KappaParams, radius: float, n_r: int = 32,
              n_theta: int = 16) -> QuadRule:
    """Polar rule for ``int_{|v| <= radius} (.) G^1(v) dA(v)``.

    Radii are midpoints in ``log r`` between ``1/sqrt(s_max)`` and ``radius``;
    the region ``|v| < 1/sqrt(s_max)``, where the table gives no values, is
    left out (its share of the integral is of order ``s_max**(-d/2)``).  At
    each radius the angles cover the part of ``[theta_0, pi - theta_0]``
    below the line ``Im v = sqrt(2a)``, outside which ``G^1`` vanishes.
    """
    table.check_kappa(params.kappa)
    key = (id(table), params.kappa, float(radius), int(n_r), int(n_theta))
    return _quad_rule_cached(key, table, params, radius, n_r, n_theta)


_RULES: dict = {}


def _quad_rule_cached(key, table, params, radius, n_r, n_theta):
    hit = _RULES.get(key)
    if hit is not None and hit[0] is table:
        return hit[1]
    rho = 1.0 / math.sqrt(table.s_grid[-1])
    if radius <= rho:
        raise TableRange("localization radius lies inside the untabulated core")
    edges = np.linspace(math.log(rho), math.log(radius), n_r + 1)
    lr = 0.5 * (edges[1:] + edges[:-1])
    dlr = edges[1] - edges[0]
    r = np.exp(lr)
    th0, th1 = table.theta_grid[0], table.theta_grid[-1]
    ymax = math.sqrt(2.0 * params.a)
    gx, gw = np.polynomial.legendre.leggauss(n_theta)
    hx, hw = np.polynomial.legendre.leggauss(max(n_theta // 2, 2))
    nodes, weights = [], []
    for ri in r:
        tc = math.asin(min(1.0, ymax / ri))
        if tc >= math.pi / 2 or tc >= math.pi - th1:
            lo, hi = th0, th1
            th = 0.5 * (hi - lo) * gx + 0.5 * (hi + lo)
            wt = 0.5 * (hi - lo) * gw
        else:
            if tc <= th0:
                continue
            th_a = 0.5 * (tc - th0) * hx + 0.5 * (tc + th0)
            th = np.concatenate([th_a, math.pi - th_a])
            wt = np.concatenate([0.5 * (tc - th0) * hw] * 2)
        v = ri * np.exp(1j * th)
        nodes.append(v)
        weights.append(wt * ri * ri * dlr)
    v = np.concatenate(nodes)
    w = np.concatenate(weights)
    phi = table.phi_array(np.angle(v), 1.0 / np.abs(v) ** 2)
    phi[v.imag ** 2 >= 2.0 * params.a] = 0.0
    if np.any(np.isnan(phi)):
        raise TableRange("quadrature nodes leave the phi table")
    w = w * green_h(v, params) * phi
    keep = w > 0
    rule = QuadRule(v[keep], w[keep], float(radius), n_r, n_theta)
    _RULES[key] = (table, rule)
    return rule


def localization_radius(n_level: int) -> float:
    """``delta_n / sqrt(2^-n) = n``: the localized disk in scaled coordinates."""
    return float(n_level)


def _l_with_rule(driving: DrivingPath, s_index: int, delta: float, rule: QuadRule, d: float) -> float:
    w = math.sqrt(delta) * rule.nodes
    if s_index == 0:
        deriv_d = np.ones(w.size)
    else:
        deriv_d = K.pullback_abs_deriv(driving.t, driving.values, driving.a, int(s_index), w) ** d
    return delta ** (d / 2.0) * float(np.dot(rule.weights, deriv_d))


def l_quadrature(driving: DrivingPath, s_index: int, delta: float, table: PhiTable, n_level: int,
                 params: KappaParams, *, n_r: int = 32, n_theta: int = 16, adaptive: bool = False,
                 tol: float = 0.01, radius: float | None = None) -> float:
    """``L(s, s+delta)`` at ``s = t[s_index]`` over the localized disk.

    With ``adaptive`` the polar grid is doubled in both directions until two
    successive values agree to ``tol``; three doublings without agreement
    raise :class:`QuadratureDiverged`.
    """
    if delta <= 0:
        return 0.0
    if not 0 <= s_index <= driving.n_steps:
        raise IndexError("s_index outside the driving grid")
    if radius is None:
        radius = localization_radius(n_level)
    rule = quad_rule(table, params, radius, n_r, n_theta)
    val = _l_with_rule(driving, s_index, delta, rule, params.d)
    if not adaptive:
        return val
    for _ in range(3):
        n_r, n_theta = 2 * n_r, 2 * n_theta
        rule = quad_rule(table, params, radius, n_r, n_theta)
        new = _l_with_rule(driving, s_index, delta, rule, params.d)
        if abs(new - val) <= tol * abs(new):
            return new
        val = new
    raise QuadratureDiverged(f"L(s, s+{delta:g}) did not settle to {tol:.0%}")


def integral_g1(table: PhiTable, params: KappaParams, radius: float = 20.0, n_r: int = 128,
                n_theta: int = 64) -> float:
    """Reference value of ``int G^1 dA`` (the table's range, large radius)."""
    radius = min(radius, 1.0 / math.sqrt(table.s_grid[0]))
    return quad_rule(table, params, radius, n_r, n_theta).total


@dataclass(frozen=True)
class ThetaSeries:
    n: int
    times: np.ndarray
    increments: np.ndarray
    cumulative: np.ndarray

    @property
    def total(self) -> float:
        return float(self.cumulative[-1])


def theta_dyadic(driving: DrivingPath, t: float, n_level: int, table: PhiTable, params: KappaParams, *,
                 n_r: int = 32, n_theta: int = 16, adaptive: bool = False) -> ThetaSeries:
    """Dyadic sum of ``L`` over cells ``[j 2^-n, (j+1) 2^-n]`` up to ``t``."""
    if t > driving.horizon * (1 + 1e-12):
        raise ValueError("t exceeds the driving horizon")
    delta = 2.0 ** (-n_level)
    m = int(math.floor(t / delta + 1e-9))
    times = np.arange(m + 1) * delta
    inc = np.zeros(m)
    for j in range(m):
        k = driving.index_of(j * delta)
        inc[j] = l_quadrature(driving, k, delta, table, n_level, params, n_r=n_r,
                              n_theta=n_theta, adaptive=adaptive)
    cum = np.concatenate([[0.0], np.cumsum(inc)])
    return ThetaSeries(int(n_level), times, inc, cum)


# ---------------------------------------------------------------------------
# transport and regularity


def transport_theta(trace: TracePolyline, increments, map_deriv, d: float | None = None,
                    bounds: tuple[float, float] = (1e-8, 1e8)) -> float:
    """``sum_j |F'(gamma(s_j))|**d * dTheta_j``.

    ``increments`` is either a :class:`ThetaSeries` (cell ``j`` is weighted at
    the trace point at its left end) or an array with one mass per trace
    vertex, as returned by :func:`content_measure`.
    """
    if d is None:
        d = 1.0 + trace.kappa / 8.0
    if isinstance(increments, ThetaSeries):
        ts = trace.t
        idx = np.clip(np.searchsorted(ts, increments.times[:-1] * (1 - 1e-12)), 0, ts.size - 1)
        pts = trace.points[idx]
        mass = increments.increments
    else:
        mass = np.asarray(increments, dtype=float)
        pts = trace.points[: mass.size]
    used = mass != 0
    fp = np.abs(np.asarray(map_deriv(pts[used]), dtype=complex))
    if np.any(~np.isfinite(fp)) or np.any(fp < bounds[0]) or np.any(fp > bounds[1]):
        raise MapSingularOnTrace("map derivative degenerates on the trace")
    return float(np.dot(fp ** d, mass[used]))


def holder_statistic(trace: TracePolyline, alpha: float, window: tuple[float, float]) -> float:
    """``max |gamma(t) - gamma(s)| / (t-s)**alpha`` over dyadic pairs inside ``window``."""
    t1, t2 = window
    if not 0 < t1 < t2:
        raise ValueError("window must satisfy 0 < t1 < t2")
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    ts = trace.t
    if t2 > ts[-1] * (1 + 1e-12):
        raise ValueError("window exceeds the trace")
    best = 0.0
    m = 0
    dt_min = float(np.min(np.diff(ts))) if ts.size > 1 else trace.dt
    while 2.0 ** (-m) >= dt_min * (1 - 1e-9):
        width = 2.0 ** (-m)
        j0 = int(math.ceil(t1 / width - 1e-9))
        j1 = int(math.floor(t2 / width + 1e-9))
        if j1 > j0:
            grid = np.arange(j0, j1 + 1) * width
            idx = np.searchsorted(ts, grid - 1e-12 * max(1.0, t2))
            idx = np.clip(idx, 0, ts.size - 1)
            p = trace.points[idx]
            incr = np.abs(np.diff(p)) / width ** alpha
            best = max(best, float(incr.max()))
        m += 1
    return best
