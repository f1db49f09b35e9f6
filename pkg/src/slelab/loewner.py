"""Deterministic Loewner-flow engine.

The driving function is piecewise constant on its grid; on each cell the
hull grows by an exact vertical slit, so the hull at grid time ``t_k`` has
half-plane capacity exactly ``a * t_k``.  We normalise maps as
``g(z) = z + hcap/z + O(z^-2)``; under this convention the slit ``[0, iL]``
has capacity ``L**2/2`` (references using ``g = z + 2t/z`` get ``L**2/4``).

Points are plain Python ``complex`` numbers (or complex arrays) with
non-negative imaginary part.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import ConvexHull, cKDTree

from . import _kernels as K
from .errors import InsufficientWalkers, LossOfPrecision, SwallowedThisStep
from .stats import EnsembleEstimate

UPSILON_FLOOR = 1e-6


@dataclass(frozen=True)
class DrivingPath:
    """Driving values ``U_k`` on a time grid, plus the capacity rate ``a``.

    The grid is ``k*dt`` unless ``times`` is given; refined grids (from the
    adaptive samplers) keep every coarse node ``k*dt`` and subdivide cells.
    """

    dt: float
    values: np.ndarray
    a: float
    times: np.ndarray | None = None

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if values.ndim != 1 or values.size < 1:
            raise ValueError("values must be a non-empty 1-d sequence")
        if values[0] != 0.0:
            raise ValueError("driving paths start at U_0 = 0")
        if self.times is not None:
            times = np.ascontiguousarray(self.times, dtype=float)
            if times.shape != values.shape or times[0] != 0.0 or np.any(np.diff(times) < 0):
                raise ValueError("times must start at 0, be nondecreasing, and match values")
            object.__setattr__(self, "times", times)

    @property
    def t(self) -> np.ndarray:
        if self.times is not None:
            return self.times
        return np.arange(self.values.size) * self.dt

    @property
    def n_steps(self) -> int:
        return self.values.size - 1

    @property
    def horizon(self) -> float:
        return float(self.t[-1])

    @property
    def kappa(self) -> float:
        return 2.0 / self.a

    def index_of(self, t: float) -> int:
        """Grid index of time ``t`` (which must be a grid node)."""
        ts = self.t
        k = int(np.searchsorted(ts, t - 1e-12 * max(1.0, abs(t))))
        if k >= ts.size or abs(ts[k] - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"t={t} is not a grid node")
        return k

    def truncated(self, k: int) -> "DrivingPath":
        times = None if self.times is None else self.times[: k + 1]
        return DrivingPath(self.dt, self.values[: k + 1], self.a, times)

    def scaled(self, r: float) -> "DrivingPath":
        """Brownian rescaling: time by ``r**2`` and values by ``r``."""
        times = None if self.times is None else self.times * r * r
        return DrivingPath(self.dt * r * r, self.values * r, self.a, times)


@dataclass(frozen=True)
class FlowTrajectory:
    """Forward flow of a single point ``z0`` along a driving path.

    Arrays hold grid indices ``0 .. n-1``; ``swallow_index`` (if set) is the
    first index at which the point was hit by a slit or fell below the
    Upsilon floor, and nothing from that index on is stored.
    """

    z0: complex
    times: np.ndarray
    zt: np.ndarray
    logderiv: np.ndarray
    swallow_index: int | None = None
    floor_hit: bool = False

    @property
    def upsilon(self) -> np.ndarray:
        return self.zt.imag * np.exp(-self.logderiv)

    @property
    def ssin(self) -> np.ndarray:
        return self.zt.imag / np.abs(self.zt)

    @property
    def swallow_time(self) -> float | None:
        if self.swallow_index is None:
            return None
        return float(self.times[self.swallow_index - 1])

    def __len__(self) -> int:
        return self.zt.size


@dataclass(frozen=True)
class TracePolyline:
    """Sampled curve ``gamma(t_k)`` in the closed upper half-plane."""

    dt: float
    points: np.ndarray
    kappa: float
    times: np.ndarray | None = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "points", np.ascontiguousarray(self.points, dtype=complex))

    @property
    def t(self) -> np.ndarray:
        if self.times is not None:
            return self.times
        return np.arange(self.points.size) * self.dt

    def prefix(self, upto: float | None) -> np.ndarray:
        if upto is None:
            return self.points
        k = int(np.searchsorted(self.t, upto * (1 + 1e-12), side="right"))
        return self.points[: max(k, 0)]

    def max_spacing(self, upto: float | None = None) -> float:
        p = self.prefix(upto)
        if p.size < 2:
            return 0.0
        return float(np.abs(np.diff(p)).max())

    def diameter(self, upto: float | None = None) -> float:
        return point_set_diameter(self.prefix(upto))

    def mapped(self, fn) -> "TracePolyline":
        return TracePolyline(self.dt, fn(self.points), self.kappa, self.times)


# ---------------------------------------------------------------------------
# elementary maps


def slit_step(z: complex, u: float, h: float) -> complex:
    """Exact map for one cell with constant driving ``u`` and capacity ``h``.

    ``g = u + sqrt((z-u)**2 + 2h)`` on the branch with ``Im g >= 0``.
    """
    if h < 0:
        raise ValueError("capacity increment must be non-negative")
    z = complex(z)
    if z.imag < 0:
        raise ValueError("point must lie in the closed upper half-plane")
    d = z - u
    g = u + _sqrt_up(d * d + 2.0 * h, d.real)
    if z.imag > 0 and g.imag <= 0:
        raise SwallowedThisStep(f"{z} lies on the slit grown from {u}")
    return g


def slit_step_deriv(z: complex, u: float, h: float) -> complex:
    """Derivative of :func:`slit_step` in ``z``."""
    z = complex(z)
    d = z - u
    r = _sqrt_up(d * d + 2.0 * h, d.real)
    if z.imag > 0 and r.imag <= 0:
        raise SwallowedThisStep(f"{z} lies on the slit grown from {u}")
    if r == 0:
        raise SwallowedThisStep(f"{z} is the base of the slit")
    return d / r


def inverse_slit_step(w: complex, u: float, h: float) -> complex:
    """Inverse of :func:`slit_step`: ``u + sqrt((w-u)**2 - 2h)``."""
    d = complex(w) - u
    return u + _sqrt_up(d * d - 2.0 * h, d.real)


def _sqrt_up(w: complex, ref: float) -> complex:
    r = cmath.sqrt(w)
    if r.imag < 0 or (r.imag == 0 and r.real * ref < 0):
        r = -r
    return r


# ---------------------------------------------------------------------------
# flows


def advance_flow(driving: DrivingPath, z: complex, ups_floor: float = UPSILON_FLOOR) -> FlowTrajectory:
    """Compose slit steps along the whole driving path for one point."""
    z = complex(z)
    if z.imag <= 0:
        raise ValueError("advance_flow needs an interior point")
    ts = driving.t
    zt, logd, status, n = K.flow_path(ts, driving.values, driving.a, z, ups_floor)
    swallow = None if status == 0 else int(n)
    return FlowTrajectory(
        z0=z,
        times=ts[:n].copy(),
        zt=zt[:n].copy(),
        logderiv=logd[:n].copy(),
        swallow_index=swallow,
        floor_hit=status == 2,
    )


def flow_points(driving: DrivingPath, zs, k_end: int | None = None):
    """Centred images ``Z_t`` and ``log|g_t'|`` of many points at index ``k_end``.

    Points hit by a slit keep their last pre-hit values; the returned
    ``hit`` mask flags them.
    """
    zs = np.atleast_1d(np.asarray(zs, dtype=complex))
    if k_end is None:
        k_end = driving.n_steps
    Z, logd, status = K.flow_final(driving.t, driving.values, driving.a, zs, int(k_end))
    return Z, logd, status.astype(bool)


def g_map(driving: DrivingPath, zs, k_end: int | None = None) -> np.ndarray:
    """Uncentred ``g_t(z)`` (helper for normalisation checks)."""
    if k_end is None:
        k_end = driving.n_steps
    Z, _, _ = flow_points(driving, zs, k_end)
    return Z + driving.values[k_end]


def inverse_points(driving: DrivingPath, t_index, w, want_deriv: bool = False):
    """``f_t(w) = g_t^{-1}(w + U_t)`` for arrays of points and indices."""
    w = np.atleast_1d(np.asarray(w, dtype=complex))
    k = np.broadcast_to(np.asarray(t_index, dtype=np.int64), w.shape).copy()
    if np.any(k < 0) or np.any(k > driving.n_steps):
        raise IndexError("t_index outside the driving grid")
    out, der = K.pullback(driving.t, driving.values, driving.a, k, w, want_deriv)
    return (out, der) if want_deriv else out


def inverse_point(driving: DrivingPath, t_index: int, w: complex) -> complex:
    """Evaluate ``f_t(w)`` by composing inverse slit maps in reverse order."""
    w = complex(w)
    if w.imag <= 0:
        raise ValueError("inverse_point needs an interior point")
    out = complex(inverse_points(driving, t_index, w)[0])
    # inverse maps can only push points up; anything else is round-off damage
    if not cmath.isfinite(out) or out.imag < w.imag * (1 - 1e-9):
        raise LossOfPrecision(f"reverse composition degraded at t_index={t_index}")
    return out


def default_tip_offset(driving: DrivingPath) -> float:
    return 0.5 * math.sqrt(driving.a * driving.dt)


def extract_trace(driving: DrivingPath, tip_offset: float | None = None) -> TracePolyline:
    """Approximate ``gamma(t_k)`` by ``f_{t_k}(i * tip_offset)`` for every k."""
    if tip_offset is None:
        tip_offset = default_tip_offset(driving)
    if tip_offset <= 0:
        raise ValueError("tip_offset must be positive")
    n = driving.values.size
    w = np.full(n, 1j * tip_offset)
    pts = inverse_points(driving, np.arange(n), w)
    if not np.all(np.isfinite(pts)) or np.any(pts.imag < tip_offset * (1 - 1e-9)):
        raise LossOfPrecision("trace extraction lost precision")
    return TracePolyline(driving.dt, pts, driving.kappa, driving.times)


# ---------------------------------------------------------------------------
# geometry


def point_set_diameter(p: np.ndarray) -> float:
    p = np.asarray(p, dtype=complex)
    if p.size < 2:
        return 0.0
    xy = np.column_stack([p.real, p.imag])
    if p.size > 3:
        try:
            xy = xy[ConvexHull(xy).vertices]
        except Exception:  # degenerate (collinear) sets
            pass
    q = xy[:, 0] + 1j * xy[:, 1]
    return float(np.abs(q[:, None] - q[None, :]).max())


def densify(points: np.ndarray, spacing: float) -> np.ndarray:
    """Insert points along each segment so that no gap exceeds ``spacing``."""
    p = np.asarray(points, dtype=complex)
    if p.size < 2:
        return p.copy()
    seg = np.diff(p)
    nsub = np.maximum(1, np.ceil(np.abs(seg) / spacing).astype(np.int64))
    idx = np.repeat(np.arange(seg.size), nsub)
    start = np.concatenate([[0], np.cumsum(nsub)[:-1]])
    frac = (np.arange(idx.size) - np.repeat(start, nsub)) / np.repeat(nsub, nsub)
    out = p[idx] + frac * seg[idx]
    return np.concatenate([out, p[-1:]])


def trace_distance(trace: TracePolyline | np.ndarray, z) -> float | np.ndarray:
    """Euclidean distance from ``z`` (scalar or array) to the polyline."""
    p = trace.points if isinstance(trace, TracePolyline) else np.asarray(trace, dtype=complex)
    if p.size == 0:
        raise ValueError("trace is empty")
    zz = np.atleast_1d(np.asarray(z, dtype=complex))
    if p.size == 1:
        d = np.abs(zz - p[0])
    else:
        a, b = p[:-1], p[1:]
        ab = b - a
        L2 = np.abs(ab) ** 2
        d = np.empty(zz.size)
        for i0 in range(0, zz.size, 256):
            zc = zz[i0:i0 + 256, None]
            with np.errstate(invalid="ignore", divide="ignore"):
                s = np.where(L2 > 0, ((zc - a) * np.conj(ab)).real / L2, 0.0)
            s = np.clip(s, 0.0, 1.0)
            d[i0:i0 + 256] = np.abs(zc - (a + s * ab)).min(axis=1)
    return float(d[0]) if np.ndim(z) == 0 else d


def diameter_ratio(driving: DrivingPath, trace: TracePolyline, t: float | None = None) -> float:
    """``diam(gamma_t) / max(sqrt(a t), max|U_s|)``: the empirical constant."""
    if t is None:
        t = driving.horizon
    k = driving.index_of(t)
    scale = max(math.sqrt(driving.a * t), float(np.abs(driving.values[: k + 1]).max()))
    pts = trace.points[: k + 1]
    return point_set_diameter(np.concatenate([[0j], pts])) / scale


# ---------------------------------------------------------------------------
# capacity oracle


def hcap_oracle(trace: TracePolyline | np.ndarray, n_walkers: int = 10_000,
                y_start: float | None = None, rng_seed: int = 0,
                upto: float | None = None, stop_tol: float | None = None,
                max_rel_err: float = 0.2) -> EnsembleEstimate:
    """Monte-Carlo half-plane capacity ``y * E^{iy}[Im B_tau]``.

    Brownian motion is run by walk-on-spheres from ``i*y_start`` until it
    comes within ``stop_tol`` of the real line (contributing 0) or of the
    hull (contributing the height of the nearest hull point).
    """
    if isinstance(trace, TracePolyline):
        pts = trace.prefix(upto)
    else:
        pts = np.asarray(trace, dtype=complex)
    pts = np.concatenate([[0j], pts]) if pts.size else pts
    diam = point_set_diameter(pts)
    if pts.size == 0 or diam == 0.0 or np.all(pts.imag <= 0):
        return EnsembleEstimate(0.0, 0.0, int(n_walkers), int(rng_seed))
    if y_start is None:
        y_start = 10.0 * diam
    if y_start < 10.0 * diam * (1 - 1e-12):
        raise ValueError("y_start must be at least 10 x diam(hull)")
    tol = stop_tol if stop_tol is not None else 1e-3 * diam
    dense = densify(pts, tol)
    tree = cKDTree(np.column_stack([dense.real, dense.imag]))
    gap = 0.5 * np.abs(np.diff(dense)).max() if dense.size > 1 else 0.0
    rng = np.random.default_rng(np.random.SeedSequence(rng_seed))

    pos = np.full(n_walkers, 1j * y_start)
    value = np.zeros(n_walkers)
    active = np.arange(n_walkers)
    for _ in range(200_000):
        if active.size == 0:
            break
        p = pos[active]
        dh, ih = tree.query(np.column_stack([p.real, p.imag]))
        dh = dh - gap
        on_hull = dh < tol
        on_line = (p.imag < tol) & ~on_hull
        value[active[on_hull]] = dense[ih[on_hull]].imag
        keep = ~(on_hull | on_line)
        active = active[keep]
        r = np.minimum(p.imag[keep], dh[keep])
        pos[active] = p[keep] + r * np.exp(2j * np.pi * rng.random(active.size))
    est = EnsembleEstimate.from_samples(y_start * value, rng_seed)
    if est.mean <= 0 or est.stderr > max_rel_err * est.mean:
        raise InsufficientWalkers(f"hcap estimate {est.mean:.4g} +- {est.stderr:.2g} is too noisy")
    return est


# ---------------------------------------------------------------------------
# exact hull boundary


class _HullPieces:
    """Boundary walk of the slit hull as a list of straight slit pieces.

    Piece ``p`` runs along slit ``slit[p]`` from height ``y0[p]`` to
    ``y1[p]``; a point on slit ``s`` at height ``y`` is ``f_{t_s}(i y)``.
    ``tag`` is the end time of the cell for connector pieces and ``-1`` for
    the climb of a fresh slit.
    """

    def __init__(self, ts, us, a, k_start, k_end):
        self.ts, self.us, self.a = ts, us, a
        H = np.sqrt(2.0 * a * np.diff(ts[: k_end + 1]))
        par_s, par_y = K.landings(ts, us, a, k_end)
        slits, y0s, y1s, tags = [], [], [], []

        def piece(s, ya, yb, tag):
            slits.append(s)
            y0s.append(ya)
            y1s.append(yb)
            tags.append(tag)

        for c in range(k_start, k_end):
            piece(c, 0.0, H[c], -1.0)
            if c + 1 >= k_end:
                break
            tag = ts[c + 1]
            s, h = c, H[c]
            q, yq = int(par_s[c + 1]), float(par_y[c + 1])
            tail = []
            while s != q:
                if s > q:
                    piece(s, h, 0.0, tag)
                    s, h = int(par_s[s]), float(par_y[s])
                else:
                    tail.append((q, 0.0, yq))
                    q, yq = int(par_s[q]), float(par_y[q])
            piece(s, h, yq, tag)
            for (qq, ya, yb) in reversed(tail):
                piece(qq, ya, yb, tag)
        self.slits = np.array(slits, dtype=np.int64)
        self.y0s = np.array(y0s)
        self.y1s = np.array(y1s)
        self.tags = np.array(tags)
        self.par_s, self.par_y = par_s, par_y
        self.k_end = k_end

    def height(self, pid, u):
        return self.y0s[pid] + u * (self.y1s[pid] - self.y0s[pid])

    def _map(self, s, y):
        out = np.empty(s.size, dtype=complex)
        real = s < 0
        out[real] = y[real]
        if np.any(~real):
            out[~real] = K.pullback(self.ts, self.us, self.a, s[~real],
                                    (1j * y[~real]).astype(complex), False)[0]
        return out

    def evaluate(self, pid, u):
        return self._map(self.slits[pid], self.height(pid, u))

    def endpoints(self):
        """Start plus every piece end, evaluating each distinct hull point once."""
        pid = np.concatenate([[0], np.arange(self.slits.size)])
        u = np.concatenate([[0.0], np.ones(self.slits.size)])
        s0 = self.slits[pid]
        y = np.where(u > 0.5, self.y1s[pid], self.y0s[pid])
        # a slit base is a point on its parent
        for _ in range(self.k_end + 1):
            base = (s0 >= 0) & (y == 0.0)
            if not base.any():
                break
            y = np.where(base, self.par_y[np.maximum(s0, 0)], y)
            s0 = np.where(base, self.par_s[np.maximum(s0, 0)], s0)
        keys, inv = np.unique(np.stack([s0.astype(float), y]), axis=1, return_inverse=True)
        first = self._map(keys[0].astype(np.int64), keys[1])
        return pid, u, first[inv.ravel()]

    def refine(self, pid, u, pts, max_gap, focus, max_rounds):
        """Bisect pieces until neighbours inside the focus disk are ``max_gap`` apart."""
        for _ in range(max_rounds):
            gap = np.abs(np.diff(pts))
            want = gap > max_gap
            if focus is not None:
                mid = 0.5 * (pts[1:] + pts[:-1])
                want &= np.abs(mid - focus[0]) <= focus[1] + gap
            bad = np.nonzero(want)[0]
            if bad.size == 0:
                break
            p_new = pid[bad + 1]
            u_lo = np.where(pid[bad] == p_new, u[bad], 0.0)
            u_new = 0.5 * (u_lo + u[bad + 1])
            new = self.evaluate(p_new, u_new)
            pid = np.concatenate([pid, p_new])
            u = np.concatenate([u, u_new])
            pts = np.concatenate([pts, new])
            o = np.lexsort((u, pid))
            pid, u, pts = pid[o], u[o], pts[o]
        return pid, u, pts


def hull_polyline(driving: DrivingPath, max_gap: float | None = None, k_end: int | None = None,
                  max_rounds: int = 16, k_start: int = 0,
                  focus: tuple[complex, float] | None = None) -> TracePolyline:
    """Polyline through points lying exactly on the piecewise-slit hull.

    Cell ``c`` adds the image under ``f_{t_c}`` of a vertical slit of height
    ``H_c = sqrt(2 a h_c)`` whose base sits at the preimage of ``U_c``, which
    is usually a point on the previous slit rather than its tip.  The
    polyline climbs each slit to ``gamma(t_{c+1})`` and then walks along
    the hull boundary (down and up the slits in between) to the base of the
    next slit.  With ``max_gap`` extra points are bisected in on any piece
    until neighbours are at most ``max_gap`` apart.

    ``times`` records when each point became part of the hull
    (connector points carry the end time of their cell), so prefixes by
    time are prefixes of the polyline.

    ``k_start`` skips the cells before it (the polyline then starts at the
    base of slit ``k_start``); ``focus = (z, R)`` restricts the bisection to
    segments within ``R`` of ``z``.
    """
    if k_end is None:
        k_end = driving.n_steps
    ts, us, a = driving.t, driving.values, driving.a
    if k_end <= k_start:
        return TracePolyline(driving.dt, np.array([0j]), driving.kappa, np.array([0.0]))
    hp = _HullPieces(ts, us, a, k_start, k_end)
    pid, u, pts = hp.endpoints()
    if max_gap is not None:
        pid, u, pts = hp.refine(pid, u, pts, max_gap, focus, max_rounds)
    s = hp.slits[pid]
    y = hp.height(pid, u)
    t_own = np.where(s >= 0, ts[np.maximum(s, 0)] + y * y / (2.0 * a), 0.0)
    times = np.where(hp.tags[pid] >= 0, hp.tags[pid], t_own)
    times[0] = ts[k_start]
    times = np.maximum.accumulate(times)
    return TracePolyline(driving.dt, pts, driving.kappa, times)


def saturation_index(upsilon: np.ndarray, rel: float = 1e-4) -> int:
    """First index where ``upsilon`` is within a factor ``1 + rel`` of its last value."""
    ups = np.asarray(upsilon, dtype=float)
    return int(np.argmax(ups <= ups[-1] * (1.0 + rel)))


def hull_near(driving: DrivingPath, center: complex, radius: float, max_gap: float,
              k_end: int | None = None, ratio: float = 8.0, max_rounds: int = 24) -> list[np.ndarray]:
    """Runs of the hull polyline that may come within ``radius`` of ``center``.

    Everything grown before the last grid time ``t_m`` with
    ``Upsilon_{t_m}(center) > ratio * radius`` is farther than ``radius``
    by Koebe.  Later cells are walked in the frame of ``g_{t_m}``.  With
    ``zeta`` the disk coordinate centred at the image ``Z`` of ``center``,
    the distortion theorem gives
    ``|f(w) - center| >= 2 Upsilon |zeta| / (1 + |zeta|)**2``,
    so only frame points with small ``|zeta|`` can matter.  Only those
    are mapped back, after bisection in the frame fine enough that their
    images are at most ``max_gap`` apart.

    Returns the consecutive runs of mapped points (each run has at least
    two points unless the hull is a single point).
    """
    center = complex(center)
    if k_end is None:
        k_end = driving.n_steps
    ts, us, a = driving.t, driving.values, driving.a
    if k_end <= 0:
        return [np.array([0j])]
    zt, logd, _, n_valid = K.flow_path(ts[: k_end + 1], us[: k_end + 1], a, center, 1e-300)
    ups = zt[:n_valid].imag * np.exp(-logd[:n_valid])
    big = np.nonzero(ups > ratio * radius)[0]
    if big.size == 0:
        hp = _HullPieces(ts, us, a, 0, k_end)
        pid, u, pts = hp.endpoints()
        pid, u, pts = hp.refine(pid, u, pts, max_gap, (center, radius), max_rounds)
        keep = np.abs(pts - center) <= radius + max_gap
        return _runs(pts, keep)
    m = int(big[-1])
    if m >= k_end:
        return []
    Z = zt[m] + us[m]
    U = float(ups[m])
    c = radius / (2.0 * U)
    rho_thr = ((1.0 - 2.0 * c) - math.sqrt(1.0 - 4.0 * c)) / (2.0 * c)
    rho = min(1.5 * rho_thr, 0.5)
    # sup of |f'| over the frame disk {|zeta| <= rho}
    dmax = U / Z.imag * ((1.0 + rho) / (1.0 - rho)) ** 3
    f_center = Z.real + 1j * Z.imag * (1.0 + rho * rho) / (1.0 - rho * rho)
    f_radius = 2.0 * rho * Z.imag / (1.0 - rho * rho)
    hp = _HullPieces(ts[m:k_end + 1], us[m:k_end + 1], a, 0, k_end - m)
    pid, u, pts = hp.endpoints()
    pid, u, pts = hp.refine(pid, u, pts, max_gap / dmax, (f_center, f_radius), max_rounds)
    zeta = np.abs((pts - Z) / (pts - np.conj(Z)))
    near = zeta < rho
    # neighbours close the segments that cross the disk boundary
    keep = near.copy()
    keep[1:] |= near[:-1]
    keep[:-1] |= near[1:]
    if not keep.any():
        return []
    w = pts[keep] - us[m]
    mapped = np.empty(pts.size, dtype=complex)
    mapped[keep] = K.pullback(ts[: m + 1], us[: m + 1], a, np.full(w.size, m, dtype=np.int64),
                              w.astype(complex), False)[0]
    return _runs(mapped, keep)


def _runs(pts: np.ndarray, keep: np.ndarray) -> list[np.ndarray]:
    idx = np.nonzero(keep)[0]
    if idx.size == 0:
        return []
    cut = np.nonzero(np.diff(idx) > 1)[0] + 1
    return [pts[g] for g in np.split(idx, cut)]


def distance_to_runs(runs: list[np.ndarray], z) -> float:
    """Distance from ``z`` to a union of polylines (``inf`` when there are none)."""
    if not runs:
        return math.inf
    return min(trace_distance(r, z) for r in runs)
