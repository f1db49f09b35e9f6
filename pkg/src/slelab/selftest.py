"""Deterministic identity checks that need no Monte Carlo (well under a minute)."""

from __future__ import annotations

import math
import time
from typing import Callable, NamedTuple

import numpy as np

from . import _kernels as K
from . import greens as G
from . import loewner as L
from . import natparam as N
from . import sampler as S


class Check(NamedTuple):
    name: str
    passed: bool
    detail: str


def _rng(tag: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([20_240_901, tag]))


def check_slit_roundtrip() -> Check:
    rng = _rng(1)
    worst = 0.0
    for _ in range(2000):
        z = complex(rng.uniform(-3, 3), rng.uniform(0.05, 3))
        u, h = rng.uniform(-1, 1), rng.uniform(0, 0.1)
        back = L.inverse_slit_step(L.slit_step(z, u, h), u, h)
        worst = max(worst, abs(back - z) / max(1.0, abs(z)))
    # whole-path composition forward then backward
    params = S.kappa_params(8.0 / 3.0)
    drv = S.sample_chordal(params, 1.0, 1e-3, seed=5)
    zs = np.array([0.5 + 2j, -1 + 1.5j, 0.1 + 3j, 2 + 1j])
    Z, _, hit = L.flow_points(drv, zs)
    back = L.inverse_points(drv, drv.n_steps, Z[~hit])
    path = float(np.max(np.abs(back - zs[~hit]) / np.maximum(1.0, np.abs(zs[~hit]))))
    err = max(worst, path)
    return Check("slit-map round trip", err <= 1e-8, f"max rel error {err:.2e} (limit 1e-8)")


def check_derivatives() -> Check:
    rng = _rng(2)
    worst = 0.0
    for _ in range(500):
        z = complex(rng.uniform(-2, 2), rng.uniform(0.2, 2))
        u, h = rng.uniform(-1, 1), rng.uniform(1e-3, 0.05)
        st = 1e-6
        fd = (L.slit_step(z + st, u, h) - L.slit_step(z - st, u, h)) / (2 * st)
        an = L.slit_step_deriv(z, u, h)
        worst = max(worst, abs(fd - an) / abs(an))
    params = S.kappa_params(4.0)
    drv = S.sample_chordal(params, 0.5, 1e-3, seed=9)
    w = np.array([0.3 + 1j, -0.5 + 0.7j, 1.2 + 0.4j])
    _, der = L.inverse_points(drv, drv.n_steps, w, want_deriv=True)
    st = 1e-6
    fd = (L.inverse_points(drv, drv.n_steps, w + st) - L.inverse_points(drv, drv.n_steps, w - st)) / (2 * st)
    worst = max(worst, float(np.max(np.abs(fd - der) / np.abs(der))))
    return Check("derivative vs finite difference", worst <= 1e-4, f"max rel error {worst:.2e} (limit 1e-4)")


def check_green_scaling() -> Check:
    worst = 0.0
    for kappa in (2.0, 8.0 / 3.0, 4.0, 6.0):
        params = S.kappa_params(kappa)
        zs = np.array([1j, 0.3 + 0.2j, -2 + 0.05j])
        g0 = G.green_h(zs, params)
        for e in range(-10, 11):
            r = 2.0 ** e
            ratio = G.green_h(r * zs, params) / (r ** (params.d - 2.0) * g0)
            worst = max(worst, float(np.max(np.abs(ratio - 1.0))))
    return Check("Green's function scaling", worst <= 1e-12, f"max rel error {worst:.2e} (limit 1e-12)")


def check_mobius_closure() -> Check:
    rng = _rng(3)
    params = S.kappa_params(8.0 / 3.0)
    worst = 0.0
    zs = rng.uniform(-2, 2, 50) + 1j * rng.uniform(0.1, 2, 50)
    for theta in (0.3, math.pi / 4, math.pi / 2, 1.2):
        F, dF, _ = G.disk_from_half_plane(theta)
        dom = G.DomainSpec("disk", (1.0 + 0j, complex(np.exp(2j * theta))))
        w = F(zs)
        back, dback = dom.to_half_plane(w)
        # same marks, so the round trip is z -> lam * z with lam > 0
        lam = back / zs
        worst = max(worst, float(np.max(np.abs(lam / lam[0] - 1.0))), abs(lam[0].imag) / abs(lam[0]))
        # covariance of G: G_D(F z) |F'(z)|^{2-d} = G_H(z)
        gd = G.green_domain(w, dom, params) * np.abs(dF(zs)) ** (2.0 - params.d)
        worst = max(worst, float(np.max(np.abs(gd / G.green_h(zs, params) - 1.0))))
        worst = max(worst, float(np.max(np.abs(dback * dF(zs) / lam[0] - 1.0))))
    # an automorphism T of H moves the marks and must carry G along
    def T(z):
        return (2 * z + 1) / (z + 1)

    def dT(z):
        return 1 / (z + 1) ** 2

    for w1, w2 in ((-0.5, 2.0), (3.0, -0.25), (G.INF, 1.0)):
        dom = G.DomainSpec("half-plane", (w1, w2))
        moved = G.DomainSpec("half-plane", tuple(2.0 if w is G.INF else float(T(w).real) for w in (w1, w2)))
        lhs = G.green_domain(zs, dom, params)
        rhs = G.green_domain(T(zs), moved, params) * np.abs(dT(zs)) ** (2.0 - params.d)
        worst = max(worst, float(np.max(np.abs(lhs / rhs - 1.0))))
    return Check("Mobius covariance closure", worst <= 1e-10, f"max rel error {worst:.2e} (limit 1e-10)")


def check_height_bound() -> Check:
    rng = _rng(4)
    bad = 0
    for i in range(1000):
        kappa = float(rng.uniform(0.5, 7.5))
        params = S.kappa_params(kappa)
        drv = S.sample_chordal(params, 0.25, 2.0 ** -8, seed=int(rng.integers(2**31)))
        z = complex(rng.uniform(-1, 1), rng.uniform(0.05, 1.0))
        zt, _, _, n = K.flow_path(drv.t, drv.values, drv.a, z, 0.0)
        y2 = zt[:n].imag ** 2
        # Im Z_t^2 >= Im z^2 - 2at before the point is swallowed, up to rounding
        slack = 4 * np.finfo(float).eps * max(1.0, z.imag ** 2)
        bad += int(np.any(y2 < z.imag ** 2 - 2.0 * params.a * drv.t[:n] - slack))
    return Check("height bound Im Z^2 >= Im z^2 - 2at", bad == 0, f"{bad} of 1000 trajectories violate")


def check_l_vanishes() -> Check:
    params = S.kappa_params(8.0 / 3.0)
    drv = S.sample_chordal(params, 0.5, 2.0 ** -8, seed=3)
    table = _unit_table(params)
    vals = [N.l_quadrature(drv, k, dlt, table, 4, params) for k in (0, 10, 100) for dlt in (0.0, -0.1)]
    ok = all(v == 0.0 for v in vals)
    return Check("L(s, t) = 0 for t <= s", ok, f"values {sorted(set(vals))}")


def _unit_table(params) -> G.PhiTable:
    th = G.PhiGrid(4, 1e-3, 1e2, 8)
    shape = (th.n_theta, th.n_s)
    n = np.full(th.n_theta, 100)
    return G.PhiTable(params.kappa, th.thetas(), th.svalues(), np.ones(shape), np.zeros(shape), n)


CHECKS: tuple[Callable[[], Check], ...] = (
    check_slit_roundtrip,
    check_derivatives,
    check_green_scaling,
    check_mobius_closure,
    check_height_bound,
    check_l_vanishes,
)


def run_selftest(verbose: bool = False) -> list[Check]:
    out = []
    for fn in CHECKS:
        t0 = time.perf_counter()
        try:
            res = fn()
        except Exception as exc:  # a crash is a failed check, not an aborted suite
            res = Check(fn.__name__, False, f"raised {type(exc).__name__}: {exc}")
        out.append(res)
        if verbose:
            tag = "PASS" if res.passed else "FAIL"
            print(f"{tag}  {res.name}: {res.detail}  [{time.perf_counter() - t0:.1f}s]")
    return out
