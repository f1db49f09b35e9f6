import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slelab import greens as G
from slelab import loewner as L
from slelab import sampler as S
from slelab.errors import CoincidentPoints, OutsideDomain, TableMismatch, TableRange


@pytest.fixture(scope="module")
def k4():
    return S.kappa_params(4.0)


def test_green_h_examples(k83, k4):
    assert G.green_h(1j, k83) == 1.0
    assert G.green_h(2j, k83) == pytest.approx(2 ** (-2 / 3), rel=1e-15)
    z = cmath.exp(1j * math.pi / 4)
    assert G.green_h(z, k4) == pytest.approx((math.sqrt(2) / 2) ** 0.5, rel=1e-14)


def test_green_h_rejects_boundary(k83):
    with pytest.raises(OutsideDomain):
        G.green_h(1.0 + 0j, k83)


@settings(max_examples=100, deadline=None)
@given(x=st.floats(-5, 5), y=st.floats(0.01, 5), e=st.integers(-10, 10))
def test_green_h_scaling(k83, x, y, e):
    z = complex(x, y)
    r = 2.0 ** e
    assert G.green_h(r * z, k83) == pytest.approx(r ** (k83.d - 2) * G.green_h(z, k83), rel=1e-12)


def test_green_domain_identity_marks(k83, rng):
    zs = rng.uniform(-2, 2, 20) + 1j * rng.uniform(0.1, 2, 20)
    assert np.allclose(G.green_domain(zs, G.HALF_PLANE, k83), G.green_h(zs, k83), rtol=1e-14)


@pytest.mark.parametrize("theta", [0.4, math.pi / 4, math.pi / 2, 1.3])
def test_green_disk_center(k83, theta):
    dom = G.DomainSpec("disk", (1.0 + 0j, cmath.exp(2j * theta)))
    # Upsilon_D(0) = 1/2, so G = 2**(2-d) sin(theta)**(4a-1)
    expect = 2 ** (2 - k83.d) * math.sin(theta) ** k83.green_exponent
    assert G.green_domain(0j, dom, k83) == pytest.approx(expect, rel=1e-12)


def test_green_disk_marks_pm1(k83):
    dom = G.DomainSpec("disk", (1.0 + 0j, -1.0 + 0j))
    assert G.green_domain(0j, dom, k83) == pytest.approx(2 ** (2 / 3), rel=1e-12)


def test_upsilon_examples():
    disk = G.DomainSpec("disk", (1.0 + 0j, -1.0 + 0j))
    assert G.upsilon_s_closed(0j, disk)[0] == pytest.approx(0.5, rel=1e-14)
    assert G.upsilon_s_closed(0.3 + 0.7j)[0] == pytest.approx(0.7, rel=1e-15)
    ups, _ = G.upsilon_s_closed(0.9 + 0j, disk)
    assert ups == pytest.approx(0.095, rel=1e-12)
    assert ups / 2 <= 0.1 <= 2 * ups


def test_koebe_on_random_slit_domain(rng):
    dom = G.DomainSpec("slit-half-plane", (0.0, G.INF), slit=(1.0, 0.5))
    zs = rng.uniform(-2, 3, 200) + 1j * rng.uniform(0.05, 2, 200)
    zs = zs[dom.contains(zs)]
    ups, _ = G.upsilon_s_closed(zs, dom)
    dist = dom.boundary_distance(zs)
    assert np.all(ups / 2 <= dist * (1 + 1e-12))
    assert np.all(dist <= 2 * ups * (1 + 1e-12))


def test_outside_domain(k83):
    disk = G.DomainSpec("disk", (1.0 + 0j, -1.0 + 0j))
    with pytest.raises(OutsideDomain):
        G.green_domain(1.5 + 0j, disk, k83)


def test_slit_map_round_trip(rng):
    zs = rng.uniform(-2, 3, 50) + 1j * rng.uniform(0.05, 2, 50)
    w, dw = G.slit_map(zs, 1.0, 0.5)
    back, db = G.slit_unmap(w, 1.0, 0.5)
    assert np.allclose(back, zs, atol=1e-12)
    assert np.allclose(dw * db, 1.0, atol=1e-10)


def test_two_point_envelope_symmetry(k83):
    z, w = 0.2 + 0.3j, -0.5 + 1.2j
    assert G.two_point_envelope(z, w, k83) == G.two_point_envelope(w, z, k83)


def test_two_point_envelope_far_apart(k83):
    z = 1j
    w = 1e6j
    env = G.two_point_envelope(z, w, k83)
    assert env == pytest.approx(G.green_h(z, k83) * G.green_h(w, k83), rel=1e-5)


def test_two_point_envelope_small_q(k83):
    w = 0.6 + 0.8j
    z = w * (1 - 1e-3)
    q = 1e-3
    expect = q ** (k83.d - 2) * 0.8 ** (-k83.beta) * G.green_h(z, k83) * G.green_h(w, k83)
    assert G.two_point_envelope(z, w, k83) == pytest.approx(expect, rel=1e-12)


def test_two_point_envelope_coincident(k83):
    with pytest.raises(CoincidentPoints):
        G.two_point_envelope(1j, 1j, k83)


def test_green2_hat_swap_is_consistent(k83):
    z, w = 0.5j, 1j
    a = G.green2_hat_mc(z, w, k83, 200, seed=1)
    b = G.green2_hat_mc(w, z, k83, 200, seed=2)
    a2 = G.green2_hat_mc(z, w, k83, 200, seed=2)
    b2 = G.green2_hat_mc(w, z, k83, 200, seed=1)
    assert abs((a.mean + b.mean) - (a2.mean + b2.mean)) <= 3 * math.hypot(
        math.hypot(a.stderr, b.stderr), math.hypot(a2.stderr, b2.stderr))


# hitting-time tables


def test_phi_table_invariants(small_table, k83):
    v = small_table.values
    assert np.all((v >= 0) & (v <= 1))
    assert np.all(np.diff(v, axis=1) >= 0)
    th, sg = np.meshgrid(small_table.theta_grid, small_table.s_grid, indexing="ij")
    assert np.all(v[2 * k83.a * sg <= np.sin(th) ** 2] == 0.0)
    assert np.all(v[:, -1] > 0.97)


def test_phi_table_kappa_guard(small_table):
    with pytest.raises(TableMismatch):
        small_table.check_kappa(4.0)


def test_green_t_limits(small_table, k83):
    z = 0.3 + 0.6j
    assert G.green_t(z, 0.99 * z.imag ** 2 / (2 * k83.a), small_table, k83) == 0.0
    big = G.green_t(z, 0.99e4 * abs(z) ** 2, small_table, k83)
    assert big == pytest.approx(G.green_h(z, k83), rel=0.03)
    assert G.green_t(z, 1.0, None, k83) == G.green_h(z, k83)


def test_green_t_refuses_extrapolation(small_table, k83):
    with pytest.raises(TableRange):
        G.green_t(1j, 1e9, small_table, k83)


def test_mart_weight_at_start(small_table, k83):
    drv = S.sample_chordal(k83, 1.0, 0.01, seed=2)
    traj = L.advance_flow(drv, 0.4 + 1j)
    assert G.mart_weight(traj, 0, 2.0, small_table, k83) == G.green_t(0.4 + 1j, 2.0, small_table, k83)
    m = G.mart_weight(traj, 10, math.inf, None, k83)
    assert m == pytest.approx(G.local_mart(traj.upsilon[10], traj.ssin[10], k83), rel=1e-12)
