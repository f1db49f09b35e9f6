"""Random driving functions: chordal SLE and two-sided radial SLE.

Seeding: every stochastic routine takes an integer seed.  Ensembles derive
per-replica seeds from ``(master, row, replica)`` through
:class:`numpy.random.SeedSequence`, so a replica's output never depends on
which worker ran it or in which order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from . import _kernels as K
from .errors import HorizonExceeded, OutOfRange, StepTooCoarse, TooShort
from .loewner import DrivingPath, FlowTrajectory

DEFAULT_THRESH = 10.0
DEFAULT_MAX_LEVEL = 60


@dataclass(frozen=True)
class KappaParams:
    kappa: float
    a: float
    d: float
    beta: float
    alpha_star: float
    c_star: float

    @property
    def green_exponent(self) -> float:
        """Power ``4a - 1`` of the angular factor of the Green's function."""
        return 4.0 * self.a - 1.0


def kappa_params(kappa: float) -> KappaParams:
    kappa = float(kappa)
    if not 0.0 < kappa < 8.0:
        raise OutOfRange(f"kappa must lie in (0, 8), got {kappa}")
    a = 2.0 / kappa
    d = 1.0 + kappa / 8.0
    beta = kappa / 8.0 + 8.0 / kappa - 2.0
    alpha = 1.0 - kappa / (24.0 + 2.0 * kappa - 8.0 * math.sqrt(8.0 + kappa))
    integral, _ = integrate.quad(lambda x: math.sin(x) ** (4.0 * a), 0.0, math.pi,
                                 epsabs=1e-13, epsrel=1e-12)
    return KappaParams(kappa, a, d, beta, alpha, 2.0 / integral)


def replica_seed(master: int, row: int = 0, replica: int = 0) -> int:
    """32-bit stream seed for one replica, derived from a counter triple."""
    ss = np.random.SeedSequence([int(master) & (2**64 - 1), int(row), int(replica)])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def _kernel_seed(seed: int) -> int:
    return int(np.random.SeedSequence(int(seed) & (2**64 - 1)).generate_state(1, dtype=np.uint32)[0])


def sample_chordal(params: KappaParams, horizon: float, dt: float, seed: int) -> DrivingPath:
    """Standard Brownian driving sampled on ``k*dt`` up to ``horizon``."""
    if horizon <= 0 or dt <= 0:
        raise ValueError("horizon and dt must be positive")
    n = int(round(horizon / dt))
    rng = np.random.default_rng(np.random.SeedSequence(int(seed) & (2**64 - 1)))
    u = np.empty(n + 1)
    u[0] = 0.0
    np.cumsum(rng.standard_normal(n) * math.sqrt(dt), out=u[1:])
    return DrivingPath(dt, u, params.a)


# ---------------------------------------------------------------------------
# adaptive point tracking


@dataclass(frozen=True)
class TrackResult:
    """Outcome of :func:`track_points`.

    ``ups`` and ``ssin`` are the final (or last pre-hit) values per point;
    ``hit`` flags points touched by the growing hull.  ``driving`` and
    ``trajectory`` (of point 0) are present only when recording was on.
    """

    status: int
    t: float
    n_steps: int
    zt: np.ndarray
    logderiv: np.ndarray
    alive: np.ndarray
    driving: DrivingPath | None
    trajectory: FlowTrajectory | None

    @property
    def ups(self) -> np.ndarray:
        return self.zt.imag * np.exp(-self.logderiv)

    @property
    def ssin(self) -> np.ndarray:
        return self.zt.imag / np.abs(self.zt)

    @property
    def stopped(self) -> bool:
        return self.status == K.STOPPED


def track_points(params: KappaParams, points, horizon: float, dt: float, seed: int, *,
                 two_sided: bool = False, stop_ups: float = 0.0,
                 thresh: float = DEFAULT_THRESH, max_level: int = DEFAULT_MAX_LEVEL,
                 ups_floor: float = 1e-9, record: bool = False, cap: int | None = None) -> TrackResult:
    """Run the flow of a few marked points with driving generated on the fly.

    Cells of ``dt`` are subdivided as ``dt/4**L`` whenever a live point comes
    within ``thresh * sqrt(a*h)`` of the driving point, so the elementary
    slits stay small compared with the distance to every tracked point.
    With ``two_sided`` the driving is tilted towards ``points[0]``.
    """
    z0 = np.atleast_1d(np.asarray(points, dtype=complex)).copy()
    if np.any(z0.imag <= 0):
        raise ValueError("tracked points must be interior")
    n_cells = int(round(horizon / dt))
    kseed = _kernel_seed(seed)
    if cap is None:
        cap = min(4 * n_cells, 50_000) + 20_000 if record else 0
    while True:
        out = K.track(z0, params.a, dt, n_cells, two_sided, thresh, max_level,
                      stop_ups, ups_floor, kseed, cap)
        if out[0] != K.OVERFLOW:
            break
        cap *= 4
    status, t, n, Z, ld, alive, rec_t, rec_u, rec_z, rec_ld = out
    driving = traj = None
    if record:
        n1 = n + 1
        times = rec_t[:n1].copy()
        driving = DrivingPath(dt, rec_u[:n1].copy(), params.a, times)
        traj = FlowTrajectory(z0=complex(z0[0]), times=times, zt=rec_z[:n1].copy(),
                              logderiv=rec_ld[:n1].copy())
    return TrackResult(int(status), float(t), int(n), Z.copy(), ld.copy(), alive.copy(), driving, traj)


# ---------------------------------------------------------------------------
# two-sided radial SLE


@dataclass(frozen=True)
class TwoSidedRun:
    """One tilted run; ``driving`` and ``trajectory`` are None when not recorded."""

    driving: DrivingPath | None
    marked: complex
    trajectory: FlowTrajectory | None
    hit_time: float
    hit: bool
    hit_radius: float
    horizon_cap: float


def default_hit_radius(z: complex) -> float:
    return 1e-3 * complex(z).imag


def default_horizon_cap(params: KappaParams, z: complex) -> float:
    return 50.0 * abs(complex(z)) ** 2 / params.a


def sample_two_sided(params: KappaParams, z: complex, dt: float, seed: int,
                     hit_radius: float | None = None, *, horizon: float | None = None,
                     scheme: str = "slit", thresh: float = DEFAULT_THRESH,
                     max_level: int = DEFAULT_MAX_LEVEL, record: bool = True,
                     censor_ok: bool = False) -> TwoSidedRun:
    """Chordal SLE tilted to pass through ``z``, stopped when ``Upsilon <= hit_radius``.

    The driving increment on each (refined) step is
    ``dU = (4a-1) X/|Z|^2 h - dB``.  With ``scheme="slit"`` the marked point
    is then moved by the exact slit map, so the stored trajectory is exactly
    the flow of the stored driving.  ``scheme="euler"`` instead advances
    ``(X, Y)`` by the Euler rule for the radial SDE and keeps the rebuilt
    driving alongside; it exists to validate the reconstruction.

    ``censor_ok`` returns an unhit run at the horizon cap instead of raising.
    """
    z = complex(z)
    if z.imag <= 0:
        raise ValueError("marked point must be interior")
    if hit_radius is None:
        hit_radius = default_hit_radius(z)
    if hit_radius <= 0:
        raise ValueError("hit_radius must be positive")
    if horizon is None:
        horizon = default_horizon_cap(params, z)
    n_cells = int(math.ceil(horizon / dt))
    if scheme == "slit":
        res = track_points(params, [z], n_cells * dt, dt, seed, two_sided=True,
                           stop_ups=hit_radius, thresh=thresh, max_level=max_level,
                           ups_floor=min(1e-9, 1e-3 * hit_radius), record=record)
        status, driving, traj, t = res.status, res.driving, res.trajectory, res.t
    elif scheme == "euler":
        kseed = _kernel_seed(seed)
        cap = min(4 * n_cells, 50_000) + 20_000
        while True:
            out = K.two_sided_euler(z, params.a, dt, n_cells, thresh, max_level, hit_radius, kseed, cap)
            if out[0] != K.OVERFLOW:
                break
            cap *= 4
        status, n, rec_t, rec_u, rec_z, rec_ld = out
        n1 = n + 1
        times = rec_t[:n1].copy()
        driving = DrivingPath(dt, rec_u[:n1].copy(), params.a, times)
        traj = FlowTrajectory(z0=z, times=times, zt=rec_z[:n1].copy(), logderiv=rec_ld[:n1].copy())
        t = float(times[-1])
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    if status in (K.TOO_COARSE, K.LOST):
        raise StepTooCoarse(f"refinement exhausted near the marked point (seed={seed})")
    hit = status == K.STOPPED
    if not hit and not censor_ok:
        raise HorizonExceeded(f"marked point not reached by t={horizon:g} (seed={seed})")
    return TwoSidedRun(driving=driving, marked=z, trajectory=traj, hit_time=float(t),
                       hit=hit, hit_radius=float(hit_radius), horizon_cap=float(n_cells * dt))


def radial_angle_series(run: TwoSidedRun, s_min: float = 5.0) -> tuple[np.ndarray, np.ndarray]:
    """Radial time ``s = log(Upsilon_0/Upsilon_t)`` and angle ``arg Z_t`` along a run.

    Repeated ``s`` values (steps on which the point barely moved) are
    dropped so that the series is strictly increasing.
    """
    if not run.hit:
        raise TooShort("run did not reach its marked point")
    if run.trajectory is None:
        raise ValueError("run was sampled without recording")
    ups = run.trajectory.upsilon
    s = np.log(ups[0] / ups)
    theta = np.angle(run.trajectory.zt)
    keep = np.concatenate([[True], np.diff(s) > 0])
    s, theta = s[keep], theta[keep]
    if s[-1] < s_min:
        raise TooShort(f"radial time reached only {s[-1]:.3g} < {s_min}")
    return s, theta


def sin_power_cdf(params: KappaParams, theta):
    """CDF on (0, pi) of the density proportional to ``sin(x)**(4a)``."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    p = 4.0 * params.a
    total = 2.0 / params.c_star
    grid = np.linspace(0.0, math.pi, 4097)
    dens = np.sin(grid) ** p
    cum = integrate.cumulative_simpson(dens, x=grid, initial=0.0)
    return np.interp(theta, grid, cum / total)
