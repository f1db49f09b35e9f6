"""Green's functions, conformal covariance and hitting-time tables.

Every domain is handled through an explicit conformal map onto the upper
half-plane sending the marks ``(w1, w2)`` to ``(0, inf)``.  In the
half-plane the one-point Green's function is
``G(z) = Im(z)**(d-2) * sin(arg z)**(4a-1)`` and for other domains
``G_D(z) = |f'(z)|**(2-d) * G(f(z))``.
"""

from __future__ import annotations

import cmath
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import CoincidentPoints, OutsideDomain, StepTooCoarse, TableMismatch, TableRange
from .sampler import (DEFAULT_THRESH, KappaParams, default_horizon_cap, kappa_params,
                      replica_seed, sample_two_sided, track_points)
from .stats import EnsembleEstimate


class _Infinity:
    """Boundary point at infinity (a tag, never a large float)."""

    _inst = None

    def __new__(cls):
        if cls._inst is None:
            cls._inst = super().__new__(cls)
        return cls._inst

    def __repr__(self):
        return "INF"

    def __reduce__(self):
        return (_Infinity, ())


INF = _Infinity()


def _is_inf(w) -> bool:
    return w is INF


# ---------------------------------------------------------------------------
# maps onto the half-plane


def halfplane_mobius(w1, w2):
    """Orientation-preserving Mobius map of H sending real marks ``w1 -> 0``, ``w2 -> inf``.

    Returns ``(m, dm)``, the map and its derivative.
    """
    if _is_inf(w2):
        return (lambda z: z - w1), (lambda z: np.ones_like(np.asarray(z, dtype=complex)))
    if _is_inf(w1):
        return (lambda z: -1.0 / (z - w2)), (lambda z: 1.0 / (z - w2) ** 2)
    s = 1.0 if w1 > w2 else -1.0
    return (lambda z: s * (z - w1) / (z - w2)), (lambda z: s * (w1 - w2) / (z - w2) ** 2)


def cayley(zeta):
    """``i(1+zeta)/(1-zeta)``: unit disk onto H with ``1 -> inf`` and ``-1 -> 0``."""
    return 1j * (1 + zeta) / (1 - zeta)


def cayley_deriv(zeta):
    return 2j / (1 - zeta) ** 2


def slit_map(z, u: float, L: float):
    """``F(z) = u + sqrt((z-u)**2 - L**2)``: H onto H minus the slit ``[u, u+iL]``.

    Returns ``(F(z), F'(z))``; the branch satisfies ``F(z) ~ z`` at infinity.
    """
    d = np.asarray(z, dtype=complex) - u
    r = _sqrt_up_arr(d * d - L * L, d.real)
    return u + r, d / r


def slit_unmap(z, u: float, L: float):
    """Inverse of :func:`slit_map`: ``u + sqrt((z-u)**2 + L**2)`` and its derivative."""
    d = np.asarray(z, dtype=complex) - u
    r = _sqrt_up_arr(d * d + L * L, d.real)
    return u + r, d / r


def _sqrt_up_arr(w, ref):
    r = np.sqrt(np.asarray(w, dtype=complex))
    flip = (r.imag < 0) | ((r.imag == 0) & (r.real * ref < 0))
    return np.where(flip, -r, r)


def disk_from_half_plane(theta: float):
    """Mobius ``F`` from H onto the unit disk with ``0 -> 1``, ``inf -> e^{2i theta}``.

    Returns ``(F, F', z_H)`` where ``z_H = e^{i(pi - theta)}`` is sent to 0.
    """
    zh = cmath.exp(1j * (math.pi - theta))
    rot = cmath.exp(2j * theta)

    def F(w):
        return rot * (w - zh) / (w - zh.conjugate())

    def dF(w):
        return rot * (zh - zh.conjugate()) / (w - zh.conjugate()) ** 2

    return F, dF, zh


@dataclass(frozen=True)
class DomainSpec:
    """Simply connected domain with two boundary marks.

    ``kind`` is ``"half-plane"``, ``"disk"`` or ``"slit-half-plane"``.  Marks
    are real numbers (or :data:`INF`) for the half-plane kinds and unit
    complex numbers for the disk.  A slit domain is ``H`` minus ``[u, u+iL]``.
    """

    kind: str = "half-plane"
    marks: tuple = (0.0, INF)
    slit: tuple | None = None

    def __post_init__(self):
        if self.kind not in ("half-plane", "disk", "slit-half-plane"):
            raise ValueError(f"unknown domain kind {self.kind!r}")
        w1, w2 = self.marks
        if (_is_inf(w1) and _is_inf(w2)) or (not _is_inf(w1) and not _is_inf(w2) and w1 == w2):
            raise ValueError("boundary marks must differ")
        if self.kind == "disk":
            for w in self.marks:
                if _is_inf(w) or abs(abs(complex(w)) - 1.0) > 1e-12:
                    raise ValueError("disk marks must lie on the unit circle")
        if self.kind == "slit-half-plane":
            if self.slit is None:
                raise ValueError("slit domain needs (u, L)")
            u, L = self.slit
            if u == 0 or L <= 0:
                raise ValueError("slit base must be off the origin and length positive")

    def contains(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        if self.kind == "disk":
            return np.abs(z) < 1.0
        inside = z.imag > 0
        if self.kind == "slit-half-plane":
            u, L = self.slit
            inside &= ~((z.real == u) & (z.imag <= L))
        return inside

    def boundary_distance(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        if self.kind == "disk":
            return 1.0 - np.abs(z)
        dist = z.imag.copy()
        if self.kind == "slit-half-plane":
            u, L = self.slit
            dy = np.clip(z.imag, 0.0, L)
            dist = np.minimum(dist, np.abs(z - (u + 1j * dy)))
        return dist

    def to_half_plane(self, z):
        """``(f(z), f'(z))`` for the map onto H sending the marks to ``(0, inf)``."""
        z = np.asarray(z, dtype=complex)
        w1, w2 = self.marks
        if self.kind == "half-plane":
            m, dm = halfplane_mobius(w1, w2)
            return m(z), dm(z)
        if self.kind == "disk":
            x = [INF if complex(w) == 1 else cayley(complex(w)).real for w in (w1, w2)]
            m, dm = halfplane_mobius(*x)
            c = cayley(z)
            return m(c), dm(c) * cayley_deriv(z)
        u, L = self.slit
        g, dg = slit_unmap(z, u, L)
        x = [w if _is_inf(w) else float(slit_unmap(complex(w), u, L)[0].real) for w in (w1, w2)]
        m, dm = halfplane_mobius(*x)
        return m(g), dm(g) * dg


HALF_PLANE = DomainSpec()


# ---------------------------------------------------------------------------
# closed forms


def green_h(z, params: KappaParams):
    """Chordal Green's function in H with marks (0, inf); arrays accepted."""
    z = np.asarray(z, dtype=complex)
    if np.any(z.imag <= 0):
        raise OutsideDomain("green_h needs Im z > 0")
    y = z.imag
    s = y / np.abs(z)
    out = y ** (params.d - 2.0) * s ** params.green_exponent
    return float(out) if out.ndim == 0 else out


def upsilon_s_closed(z, dom: DomainSpec = HALF_PLANE):
    """Half conformal radius ``Upsilon_D(z)`` and angle sine ``S_D(z)``."""
    z = np.asarray(z, dtype=complex)
    if not np.all(dom.contains(z)):
        raise OutsideDomain(f"{z} is not interior to the {dom.kind}")
    f, df = dom.to_half_plane(z)
    ups = f.imag / np.abs(df)
    s = f.imag / np.abs(f)
    if ups.ndim == 0:
        return float(ups), float(s)
    return ups, s


def green_domain(z, dom: DomainSpec, params: KappaParams):
    """``G_D(z; w1, w2) = Upsilon_D(z)**(d-2) * S_D(z)**(4a-1)``."""
    ups, s = upsilon_s_closed(z, dom)
    out = np.asarray(ups) ** (params.d - 2.0) * np.asarray(s) ** params.green_exponent
    return float(out) if out.ndim == 0 else out


def two_point_envelope(z: complex, w: complex, params: KappaParams) -> float:
    """``q**(d-2) * max(S(w), q)**(-beta) * G(z) * G(w)`` with ``|z| <= |w|``."""
    z, w = complex(z), complex(w)
    if z == w:
        raise CoincidentPoints("two-point quantities need z != w")
    if z.imag <= 0 or w.imag <= 0:
        raise OutsideDomain("two-point quantities need interior points")
    if abs(z) > abs(w):
        z, w = w, z
    q = abs(w - z) / abs(w)
    sw = w.imag / abs(w)
    return q ** (params.d - 2.0) * max(sw, q) ** (-params.beta) * green_h(z, params) * green_h(w, params)


# ---------------------------------------------------------------------------
# hitting-time tables


@dataclass(frozen=True)
class PhiGrid:
    n_theta: int = 32
    s_min: float = 1e-3
    s_max: float = 1e2
    n_s: int = 64

    def thetas(self) -> np.ndarray:
        return (np.arange(self.n_theta) + 0.5) * math.pi / self.n_theta

    def svalues(self) -> np.ndarray:
        return np.geomspace(self.s_min, self.s_max, self.n_s)

    def describe(self) -> str:
        return f"{self.n_theta}x{self.n_s}:{self.s_min:g}-{self.s_max:g}"

    @classmethod
    def parse(cls, text: str) -> "PhiGrid":
        shape, rng = text.split(":")
        nt, ns = shape.split("x")
        lo, hi = rng.split("-", 1)
        return cls(int(nt), float(lo), float(hi), int(ns))


@dataclass(frozen=True)
class PhiTable:
    """Empirical ``phi(e^{i theta}; s) = P*{T <= s}`` on a (theta, s) grid.

    By scaling, ``phi(z; t)`` is read at ``(arg z, t/|z|**2)``.
    """

    kappa: float
    theta_grid: np.ndarray
    s_grid: np.ndarray
    values: np.ndarray
    stderr: np.ndarray
    n_samples: np.ndarray
    censored: np.ndarray = field(default=None)
    master_seed: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def a(self) -> float:
        return 2.0 / self.kappa

    @property
    def censor_fraction(self) -> np.ndarray:
        if self.censored is None:
            return np.zeros(self.theta_grid.size)
        return self.censored / self.n_samples

    def check_kappa(self, kappa: float):
        if abs(kappa - self.kappa) > 1e-9 * max(1.0, kappa):
            raise TableMismatch(f"table built for kappa={self.kappa}, requested {kappa}")

    def phi_array(self, theta, s) -> np.ndarray:
        """Interpolated phi; NaN where the request leaves the table and no exact clamp applies."""
        theta = np.asarray(theta, dtype=float)
        s = np.asarray(s, dtype=float)
        theta, s = np.broadcast_arrays(theta, s)
        out = np.full(theta.shape, np.nan)
        zero = s * 2.0 * self.a <= np.sin(theta) ** 2
        out[zero] = 0.0
        tg, sg = self.theta_grid, self.s_grid
        ok = (~zero) & (theta >= tg[0]) & (theta <= tg[-1]) & (s >= sg[0]) & (s <= sg[-1])
        if np.any(ok):
            th, ls = theta[ok], np.log(s[ok])
            lg = np.log(sg)
            i = np.clip(np.searchsorted(tg, th) - 1, 0, tg.size - 2)
            j = np.clip(np.searchsorted(lg, ls) - 1, 0, lg.size - 2)
            u = (th - tg[i]) / (tg[i + 1] - tg[i])
            v = (ls - lg[j]) / (lg[j + 1] - lg[j])
            V = self.values
            out[ok] = ((1 - u) * (1 - v) * V[i, j] + u * (1 - v) * V[i + 1, j]
                       + (1 - u) * v * V[i, j + 1] + u * v * V[i + 1, j + 1])
        return out

    def phi(self, z: complex, t: float) -> float:
        z = complex(z)
        if t <= 0 or z.imag ** 2 >= 2.0 * self.a * t:
            return 0.0
        val = float(self.phi_array(cmath.phase(z), t / abs(z) ** 2))
        if math.isnan(val):
            raise TableRange(f"(theta={cmath.phase(z):.4g}, s={t / abs(z) ** 2:.4g}) is outside the table")
        return val


def _phi_node(args):
    kappa, theta, s_grid, n, seed, node, dt, hit_rel, horizon, thresh = args
    params = kappa_params(kappa)
    z = cmath.exp(1j * theta)
    y2 = math.sin(theta) ** 2 / (2.0 * params.a)
    times = np.empty(n)
    for r in range(n):
        try:
            run = sample_two_sided(params, z, dt, replica_seed(seed, node, r), hit_rel * z.imag,
                                   horizon=horizon, thresh=thresh, record=False, censor_ok=True)
        except StepTooCoarse:
            times[r] = math.inf
            continue
        times[r] = max(run.hit_time, y2) if run.hit else math.inf
    return times


def build_phi_table(params: KappaParams, grid: PhiGrid = PhiGrid(), n_per_node: int = 2000,
                    seed: int = 0, *, dt: float = 0.01, hit_rel: float = 1e-3,
                    horizon: float | None = None, thresh: float = DEFAULT_THRESH,
                    workers: int = 1, return_times: bool = False):
    """Monte-Carlo table of the hitting-time CDF from ``e^{i theta}``.

    Every node runs ``n_per_node`` two-sided runs with seeds
    ``(seed, node, replica)``.  Runs not reaching the point by the horizon
    cap count in the denominator only.  The recorded time is
    ``max(T_hat, sin(theta)**2/(2a))`` so the exact vanishing region is kept.
    """
    if n_per_node < 100:
        raise ValueError("n_per_node must be at least 100")
    thetas = grid.thetas()
    sg = grid.svalues()
    if horizon is None:
        horizon = max(default_horizon_cap(params, 1.0), grid.s_max)
    horizon = max(horizon, grid.s_max)
    tasks = [(params.kappa, float(th), sg, n_per_node, seed, i, dt, hit_rel, horizon, thresh)
             for i, th in enumerate(thetas)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            all_times = list(ex.map(_phi_node, tasks))
    else:
        all_times = [_phi_node(t) for t in tasks]
    T = np.array(all_times)
    vals = (T[:, :, None] <= sg[None, None, :]).mean(axis=1)
    n = np.full(thetas.size, n_per_node)
    se = np.sqrt(vals * (1 - vals) / n_per_node)
    cens = np.isinf(T).sum(axis=1)
    meta = {"dt": dt, "hit_rel": hit_rel, "horizon": horizon, "thresh": thresh, "grid": grid.describe()}
    table = PhiTable(params.kappa, thetas, sg, vals, se, n, cens, int(seed), meta)
    return (table, T) if return_times else table


# ---------------------------------------------------------------------------
# time-dependent Green's function and martingales


def green_t(z: complex, t: float, table: PhiTable | None, params: KappaParams) -> float:
    """``G^t(z) = G(z) * phi(z; t)``; ``table=None`` means ``phi = 1``."""
    z = complex(z)
    if z.imag <= 0:
        raise OutsideDomain("green_t needs Im z > 0")
    if t == math.inf or table is None:
        return green_h(z, params)
    if table is not None:
        table.check_kappa(params.kappa)
    return green_h(z, params) * table.phi(z, t)


def green_t_array(w: np.ndarray, t: float, table: PhiTable, params: KappaParams) -> np.ndarray:
    w = np.asarray(w, dtype=complex)
    phi = table.phi_array(np.angle(w), t / np.abs(w) ** 2)
    phi[w.imag ** 2 >= 2.0 * params.a * t] = 0.0
    if np.any(np.isnan(phi)):
        raise TableRange("quadrature nodes leave the phi table")
    return green_h(w, params) * phi


def mart_weight(traj, k: int, t_total: float, table: PhiTable | None, params: KappaParams) -> float:
    """``M_s^t(z) = |g_s'(z)|**(2-d) * G^{t-s}(Z_s)`` at grid index ``k``."""
    if traj.swallow_index is not None and k >= traj.swallow_index:
        raise IndexError("k is past the swallowing index")
    tk = float(traj.times[k])
    if tk >= t_total:
        return 0.0
    weight = math.exp((2.0 - params.d) * float(traj.logderiv[k]))
    return weight * green_t(complex(traj.zt[k]), t_total - tk, table, params)


def local_mart(ups, ssin, params: KappaParams):
    """``M_t = Upsilon_t**(d-2) * S_t**(4a-1)`` from flow summaries."""
    return np.asarray(ups) ** (params.d - 2.0) * np.asarray(ssin) ** params.green_exponent


@dataclass(frozen=True)
class FlaggedEstimate(EnsembleEstimate):
    censored: int = 0
    high_variance: bool = False


def green2_sample(z: complex, w: complex, params: KappaParams, seed: int, hit_radius: float, *,
                  dt: float = 0.01, thresh: float = DEFAULT_THRESH) -> float | None:
    """One replica of ``M_{T_z}(w)`` under SLE tilted towards ``z``.

    Returns None when the run does not reach ``z`` (censored) and 0 when
    ``w`` was touched by the hull first.
    """
    horizon = default_horizon_cap(params, z)
    res = track_points(params, [z, w], horizon, dt, seed, two_sided=True,
                       stop_ups=hit_radius, thresh=thresh, ups_floor=1e-3 * hit_radius)
    if not res.stopped:
        return None
    if not res.alive[1]:
        return 0.0
    return float(local_mart(res.ups[1], res.ssin[1], params))


def green2_hat_mc(z: complex, w: complex, params: KappaParams, n: int, seed: int,
                  hit_radius: float | None = None, *, dt: float = 0.01,
                  thresh: float = DEFAULT_THRESH, row: int = 0) -> FlaggedEstimate:
    """Monte-Carlo ``G(z) * E*_z[M_{T_z}(w)]``.

    Each replica runs SLE tilted towards ``z`` while flowing ``w`` under the
    same driving, and scores ``M(w)`` when ``Upsilon(z)`` reaches
    ``hit_radius``.  A ``w`` touched by the hull scores zero.
    """
    z, w = complex(z), complex(w)
    if z == w:
        raise CoincidentPoints("Ghat needs z != w")
    if hit_radius is None:
        hit_radius = 1e-3 * z.imag
    vals = []
    censored = 0
    for r in range(n):
        v = green2_sample(z, w, params, replica_seed(seed, row, r), hit_radius, dt=dt, thresh=thresh)
        if v is None:
            censored += 1
        else:
            vals.append(v)
    est = EnsembleEstimate.from_samples(vals, seed).scaled(green_h(z, params))
    return FlaggedEstimate(est.mean, est.stderr, est.n, est.seed, censored, est.rel_err > 0.3)
