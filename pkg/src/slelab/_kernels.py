"""Compiled inner loops for the Loewner flow.

Everything here works in the centred frame ``Z = g - U``.  One step of
capacity time ``h`` with frozen driving grows a vertical slit of half-plane
capacity ``a*h`` at the current driving value, so that

    Z  ->  sqrt(Z**2 + 2*a*h) - dU.

The square root is always taken on the closed upper half-plane.
"""

import math

import numpy as np
from numba import njit

INT_LEVEL = 30

# status codes returned by ``track``
HORIZON = 0
STOPPED = 1
ALL_DEAD = 2
TOO_COARSE = 3
OVERFLOW = 4
LOST = 5


@njit(cache=True)
def sqrt_up(w, ref):
    """Root of ``w`` with non-negative imaginary part.

    On the real axis the tie is broken by giving the root the sign of ``ref``.
    """
    # principal root from real square roots (faster than cmath.sqrt here)
    x = w.real
    y = w.imag
    m = math.hypot(x, y)
    if x >= 0.0:
        re = math.sqrt(0.5 * (m + x))
        im = 0.5 * y / re if re > 0.0 else 0.0
    else:
        im = math.sqrt(0.5 * (m - x))
        re = 0.5 * y / im
    if im < 0.0 or (im == 0.0 and re * ref < 0.0):
        re = -re
        im = -im
    return complex(re, im)


@njit(cache=True)
def flow_path(ts, us, a, z0, ups_floor):
    """Forward flow of a single point along a recorded driving path.

    Returns ``(zt, logd, status, n_valid)``; entries past ``n_valid`` are
    garbage.  ``status`` is 0 (alive), 1 (hit by a slit) or 2 (Upsilon floor).
    """
    n = ts.shape[0]
    zt = np.empty(n, dtype=np.complex128)
    logd = np.empty(n)
    Z = z0 - us[0]
    ld = 0.0
    zt[0] = Z
    logd[0] = 0.0
    log_floor = math.log(ups_floor)
    for k in range(n - 1):
        h = a * (ts[k + 1] - ts[k])
        r = sqrt_up(Z * Z + 2.0 * h, Z.real)
        if r.imag <= 0.0:
            return zt, logd, 1, k + 1
        ld += math.log(abs(Z) / abs(r))
        Z = r - (us[k + 1] - us[k])
        zt[k + 1] = Z
        logd[k + 1] = ld
        if math.log(Z.imag) - ld < log_floor:
            return zt, logd, 2, k + 1
    return zt, logd, 0, n


@njit(cache=True)
def flow_final(ts, us, a, zs, k_end):
    """Final centred position and log|g'| of many points at grid index k_end.

    ``status`` per point: 0 alive, 1 hit by a slit (values frozen at the
    last pre-hit step).
    """
    m = zs.shape[0]
    out = np.empty(m, dtype=np.complex128)
    logd = np.zeros(m)
    status = np.zeros(m, dtype=np.int64)
    for i in range(m):
        Z = zs[i] - us[0]
        ld = 0.0
        for k in range(k_end):
            h = a * (ts[k + 1] - ts[k])
            r = sqrt_up(Z * Z + 2.0 * h, Z.real)
            if r.imag <= 0.0 and Z.imag > 0.0:
                status[i] = 1
                break
            if Z.imag > 0.0:
                ld += math.log(abs(Z) / abs(r))
            Z = r - (us[k + 1] - us[k])
        out[i] = Z
        logd[i] = ld
    return out, logd, status


@njit(cache=True, inline="always")
def _root_up(sx, sy, dx):
    """Components of the root of ``sx + i sy`` with non-negative imaginary part.

    Ties on the real axis take the sign of ``dx``.  Written on real
    scalars so that loops over many points vectorise.
    """
    mod = math.sqrt(sx * sx + sy * sy)
    big = math.sqrt(0.5 * (mod + abs(sx)))
    small = 0.5 * abs(sy) / big if big > 0.0 else 0.0
    re = big if sx >= 0.0 else small
    im = small if sx >= 0.0 else big
    re = math.copysign(re, sy) if im > 0.0 else math.copysign(re, dx)
    return re, im


@njit(cache=True)
def pullback(ts, us, a, k_end, w, want_deriv):
    """Apply ``f_t(w) = g_t^{-1}(w + U_t)`` for each point at its own index.

    ``k_end[i]`` is the grid index of the map applied to ``w[i]``.  Returns the
    images and (optionally) the complex derivatives ``f_t'(w)``.  Points are
    swept together, cell by cell from the latest index down, which keeps
    the inner loop over points.
    """
    m = w.shape[0]
    order = np.argsort(-k_end)
    X = np.empty(m)
    Y = np.empty(m)
    DR = np.ones(m)
    DI = np.zeros(m)
    ks = np.empty(m, dtype=np.int64)
    for q in range(m):
        i = order[q]
        ks[q] = k_end[i]
        X[q] = w[i].real + us[k_end[i]]
        Y[q] = w[i].imag
    n_act = 0
    kmax = ks[0] if m > 0 else 0
    for j in range(kmax - 1, -1, -1):
        while n_act < m and ks[n_act] > j:
            n_act += 1
        u = us[j]
        h2 = 2.0 * a * (ts[j + 1] - ts[j])
        for q in range(n_act):
            dx = X[q] - u
            dy = Y[q]
            re, im = _root_up(dx * dx - dy * dy - h2, 2.0 * dx * dy, dx)
            if want_deriv:
                den = re * re + im * im
                qr = (dx * re + dy * im) / den
                qi = (dy * re - dx * im) / den
                dr = DR[q] * qr - DI[q] * qi
                DI[q] = DR[q] * qi + DI[q] * qr
                DR[q] = dr
            X[q] = u + re
            Y[q] = im
    out = np.empty(m, dtype=np.complex128)
    der = np.ones(m, dtype=np.complex128)
    for q in range(m):
        i = order[q]
        out[i] = complex(X[q], Y[q])
        der[i] = complex(DR[q], DI[q])
    return out, der


@njit(cache=True)
def pullback_abs_deriv(ts, us, a, k_end, w):
    """``|f_t'(w)|`` for points sharing one map index, accumulated in logs."""
    m = w.shape[0]
    X = np.empty(m)
    Y = np.empty(m)
    P = np.ones(m)
    ld = np.zeros(m)
    for q in range(m):
        X[q] = w[q].real + us[k_end]
        Y[q] = w[q].imag
    for j in range(k_end - 1, -1, -1):
        u = us[j]
        h2 = 2.0 * a * (ts[j + 1] - ts[j])
        for q in range(m):
            dx = X[q] - u
            dy = Y[q]
            re, im = _root_up(dx * dx - dy * dy - h2, 2.0 * dx * dy, dx)
            P[q] *= (dx * dx + dy * dy) / (re * re + im * im)
            X[q] = u + re
            Y[q] = im
        if (j & 31) == 0:
            for q in range(m):
                ld[q] += 0.5 * math.log(P[q])
                P[q] = 1.0
    out = np.empty(m)
    for q in range(m):
        out[q] = math.exp(ld[q] + 0.5 * math.log(P[q]))
    return out


@njit(cache=True)
def track(z0, a, dt, n_cells, two_sided, thresh, max_level,
          stop_ups, ups_floor, seed, cap):
    """Adaptive Loewner flow of a few marked points with on-the-fly driving.

    The coarse grid is ``k*dt``.  Inside a cell the step is ``dt/4**L`` with
    the smallest ``L`` such that ``|Z| >= thresh*sqrt(a*h)`` for every live
    point, and steps never straddle a coarse node.  Positions inside a cell
    are exact integers down to ``dt/4**INT_LEVEL``; finer steps are summed
    in floating point and do not move the coarse bookkeeping.

    ``two_sided`` tilts the driving towards point 0 (two-sided radial SLE
    through ``z0[0]``).  The run stops when point 0 has
    ``Upsilon <= stop_ups`` (if ``stop_ups > 0``), at ``n_cells*dt``, or when
    no point is left alive.

    Returns ``(status, t, n, Z, logd, alive, rec_t, rec_u, rec_z, rec_ld)``;
    the records (driving and point-0 trajectory) hold ``n + 1`` entries when
    ``cap > 0``.
    """
    np.random.seed(seed)
    m = z0.shape[0]
    Z = z0.copy()
    ld = np.zeros(m)
    alive = np.ones(m, dtype=np.bool_)
    ncap = cap + 1 if cap > 0 else 1
    rec_t = np.empty(ncap)
    rec_u = np.empty(ncap)
    rec_z = np.empty(ncap, dtype=np.complex128)
    rec_ld = np.empty(ncap)
    rec_t[0] = 0.0
    rec_u[0] = 0.0
    rec_z[0] = Z[0]
    rec_ld[0] = 0.0

    unit = np.int64(1) << np.int64(2 * INT_LEVEL)
    pos = np.int64(0)
    extra = 0.0
    kc = 0
    U = 0.0
    t = 0.0
    n = 0
    log_stop = math.log(stop_ups) if stop_ups > 0.0 else -np.inf
    log_floor = math.log(ups_floor)
    thr = thresh * thresh * a * dt
    status = HORIZON
    while True:
        if kc >= n_cells:
            status = HORIZON
            break
        zmin2 = np.inf
        for j in range(m):
            if alive[j]:
                q = Z[j].real * Z[j].real + Z[j].imag * Z[j].imag
                if q < zmin2:
                    zmin2 = q
        if zmin2 == np.inf:
            status = ALL_DEAD
            break
        L = 0
        lim = thr
        while lim > zmin2 and L <= max_level:
            lim *= 0.25
            L += 1
        if L > max_level:
            status = TOO_COARSE
            break
        if L <= INT_LEVEL:
            step = unit >> np.int64(2 * L)
            while pos % step != 0:
                step >>= np.int64(2)
            h = dt * (step / unit)
        else:
            step = np.int64(0)
            h = dt * 0.25 ** L
            extra += h
        dB = math.sqrt(h) * np.random.standard_normal()
        if two_sided:
            X0 = Z[0].real
            dU = (4.0 * a - 1.0) * X0 / (X0 * X0 + Z[0].imag * Z[0].imag) * h - dB
        else:
            dU = dB
        for j in range(m):
            if not alive[j]:
                continue
            zj = Z[j]
            r = sqrt_up(zj * zj + 2.0 * a * h, zj.real)
            if r.imag <= 0.0:
                alive[j] = False
                continue
            ld[j] += math.log(abs(zj) / abs(r))
            zj = r - dU
            Z[j] = zj
            if zj.imag <= 1e-13 * abs(zj) or math.log(zj.imag) - ld[j] < log_floor:
                alive[j] = False
        U += dU
        pos += step
        if pos == unit:
            pos = np.int64(0)
            kc += 1
        t = (kc + pos / unit) * dt + extra
        n += 1
        if cap > 0:
            if n > cap:
                status = OVERFLOW
                break
            rec_t[n] = t
            rec_u[n] = U
            rec_z[n] = Z[0]
            rec_ld[n] = ld[0]
        if two_sided and not alive[0]:
            status = LOST
            break
        if alive[0] and math.log(Z[0].imag) - ld[0] <= log_stop:
            status = STOPPED
            break
    return status, t, n, Z, ld, alive, rec_t, rec_u, rec_z, rec_ld


@njit(cache=True)
def two_sided_euler(z0, a, dt, n_cells, thresh, max_level, stop_ups, seed, cap):
    """Euler-Maruyama for the two-sided radial SDE of a single point.

    ``X`` takes Euler steps of ``dX = (1-3a) X/|Z|^2 dt + dB``, ``Y`` is
    integrated exactly with frozen ``|Z|`` and ``log|g'|`` by the Euler rule
    ``d log|g'| = -a Re(Z^-2) dt``.  The driving increments are rebuilt as
    ``dU = (4a-1) X/|Z|^2 dt - dB``.  Refinement follows ``track``.

    Returns ``(status, n, rec_t, rec_u, rec_z, rec_ld)``.
    """
    np.random.seed(seed)
    ncap = cap + 1
    rec_t = np.empty(ncap)
    rec_u = np.empty(ncap)
    rec_z = np.empty(ncap, dtype=np.complex128)
    rec_ld = np.empty(ncap)
    X = z0.real
    Y = z0.imag
    ld = 0.0
    U = 0.0
    rec_t[0] = 0.0
    rec_u[0] = 0.0
    rec_z[0] = z0
    rec_ld[0] = 0.0
    unit = np.int64(1) << np.int64(2 * INT_LEVEL)
    pos = np.int64(0)
    extra = 0.0
    kc = 0
    n = 0
    log_stop = math.log(stop_ups)
    thr = thresh * thresh * a * dt
    while True:
        if kc >= n_cells:
            return HORIZON, n, rec_t, rec_u, rec_z, rec_ld
        q = X * X + Y * Y
        L = 0
        lim = thr
        while lim > q and L <= max_level:
            lim *= 0.25
            L += 1
        if L > max_level:
            return TOO_COARSE, n, rec_t, rec_u, rec_z, rec_ld
        if L <= INT_LEVEL:
            step = unit >> np.int64(2 * L)
            while pos % step != 0:
                step >>= np.int64(2)
            h = dt * (step / unit)
        else:
            step = np.int64(0)
            h = dt * 0.25 ** L
            extra += h
        dB = math.sqrt(h) * np.random.standard_normal()
        Z = complex(X, Y)
        ld += -a * (1.0 / (Z * Z)).real * h
        Xn = X + (1.0 - 3.0 * a) * X / q * h + dB
        Y = Y * math.exp(-a * h / q)
        U += (4.0 * a - 1.0) * X / q * h - dB
        X = Xn
        pos += step
        if pos == unit:
            pos = np.int64(0)
            kc += 1
        n += 1
        if n > cap:
            return OVERFLOW, n, rec_t, rec_u, rec_z, rec_ld
        rec_t[n] = (kc + pos / unit) * dt + extra
        rec_u[n] = U
        rec_z[n] = complex(X, Y)
        rec_ld[n] = ld
        if math.log(Y) - ld <= log_stop:
            return STOPPED, n, rec_t, rec_u, rec_z, rec_ld


@njit(cache=True)
def landings(ts, us, a, k_end):
    """Where the base of each slit sits on the earlier hull.

    Slit ``c`` grows from ``us[c]`` in the frame of ``g_{t_c}``.  Pulling that
    real point back through the earlier cells, it lands either on slit ``j``
    at height ``y`` (returned as ``(j, y)``) or on the real line
    (``j = -1`` and ``y`` holds the real coordinate).
    """
    slit = np.empty(k_end, dtype=np.int64)
    height = np.empty(k_end)
    for c in range(k_end):
        x = us[c]
        j = c - 1
        landed = False
        while j >= 0:
            H2 = 2.0 * a * (ts[j + 1] - ts[j])
            dd = x - us[j]
            if dd * dd < H2:
                slit[c] = j
                height[c] = math.sqrt(H2 - dd * dd)
                landed = True
                break
            r = math.sqrt(dd * dd - H2)
            x = us[j] + (r if dd > 0 else -r)
            j -= 1
        if not landed:
            slit[c] = -1
            height[c] = x
    return slit, height
