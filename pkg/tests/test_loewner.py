import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from slelab import loewner as L
from slelab import sampler as S
from slelab.errors import SwallowedThisStep

upper = st.complex_numbers(min_magnitude=0.0, max_magnitude=5.0, allow_nan=False, allow_infinity=False).filter(
    lambda z: z.imag > 0.05)


def zero_driving(kappa=8.0 / 3.0, horizon=1.0, dt=1e-3):
    n = int(round(horizon / dt))
    return L.DrivingPath(dt, np.zeros(n + 1), 2.0 / kappa)


# elementary slit map


def test_slit_step_imaginary_point():
    assert L.slit_step(2j, 0.0, 0.5) == pytest.approx(1j * math.sqrt(3), abs=1e-15)


def test_slit_step_real_point_stays_real():
    w = L.slit_step(10.0 + 0j, 0.0, 0.5)
    assert w.imag == 0.0
    assert w.real == pytest.approx(math.sqrt(101), rel=1e-15)


def test_slit_step_on_slit_is_swallowed():
    with pytest.raises(SwallowedThisStep):
        L.slit_step(1j, 0.0, 1.0)


def test_slit_step_deriv_examples():
    assert L.slit_step_deriv(2j, 0.0, 0.5) == pytest.approx(2 / math.sqrt(3), rel=1e-14)
    assert L.slit_step_deriv(10.0 + 0j, 0.0, 0.5) == pytest.approx(10 / math.sqrt(101), rel=1e-14)
    assert L.slit_step_deriv(0.3 + 0.7j, 0.1, 1e-14) == pytest.approx(1.0, abs=1e-12)


def test_slit_step_rejects_negative_capacity():
    with pytest.raises(ValueError):
        L.slit_step(1j, 0.0, -0.1)


@settings(max_examples=200, deadline=None)
@given(z=upper, u=st.floats(-2, 2), h=st.floats(0, 0.5))
def test_slit_step_inverse_round_trip(z, u, h):
    # points on (or numerically at) the new slit are swallowed, not mapped
    assume(abs(z.real - u) > 1e-6 or z.imag ** 2 > 2 * h + 1e-6)
    w = L.slit_step(z, u, h)
    assert w.imag >= 0
    assert abs(L.inverse_slit_step(w, u, h) - z) <= 1e-9 * max(1.0, abs(z))


@settings(max_examples=100, deadline=None)
@given(z=upper, u=st.floats(-2, 2), h=st.floats(1e-4, 0.2))
def test_slit_step_deriv_matches_finite_difference(z, u, h):
    # stay clear of the new slit, where the derivative blows up
    assume(L.trace_distance(np.array([u + 0j, u + 1j * math.sqrt(2 * h)]), z) > 0.05)
    step = 1e-6
    fd = (L.slit_step(z + step, u, h) - L.slit_step(z - step, u, h)) / (2 * step)
    an = L.slit_step_deriv(z, u, h)
    assert abs(fd - an) <= 1e-4 * abs(an)


# flows


def test_zero_driving_flow_closed_form():
    # g_t(z) = sqrt(z^2 + 2at); on the imaginary axis this is i sqrt(y^2 - 2at)
    drv = zero_driving(horizon=0.1)
    traj = L.advance_flow(drv, 0.8j)
    expect = 1j * np.sqrt(0.64 - 2 * drv.a * traj.times)
    assert np.max(np.abs(traj.zt - expect)) < 1e-12
    assert traj.swallow_index is None
    z = 0.5 + 0.8j
    traj = L.advance_flow(drv, z)
    assert np.max(np.abs(traj.zt - np.sqrt(z * z + 2 * drv.a * traj.times))) < 1e-12


def test_zero_driving_swallow_time():
    # i*y is on the slit once 2at >= y^2
    drv = zero_driving(horizon=1.0, dt=1e-3)
    y = 0.6
    traj = L.advance_flow(drv, 1j * y)
    t_swallow = traj.times[-1]
    assert t_swallow == pytest.approx(y * y / (2 * drv.a), abs=2e-3)


def test_flow_invariants_on_random_driving(k83):
    drv = S.sample_chordal(k83, 1.0, 1e-3, seed=3)
    for z in (0.2 + 0.5j, -1 + 0.3j, 2j):
        tr = L.advance_flow(drv, z)
        y = tr.zt.imag
        assert np.all(np.diff(y) <= 1e-15)
        assert np.all(y ** 2 >= z.imag ** 2 - 2 * drv.a * tr.times - 1e-14)
        ups = tr.upsilon
        assert np.all(np.diff(ups) <= 1e-15 * ups[0])
        s = tr.ssin
        assert np.all((s > 0) & (s <= 1))


def test_swallow_time_lower_bound(k83):
    for seed in range(20):
        drv = S.sample_chordal(k83, 1.0, 1e-3, seed=seed)
        z = 0.1 + 0.5j
        tr = L.advance_flow(drv, z)
        if tr.swallow_index is not None:
            assert tr.times[-1] >= z.imag ** 2 / (2 * drv.a) - drv.dt


def test_inverse_point_identity_at_zero():
    drv = zero_driving()
    assert L.inverse_point(drv, 0, 0.3 + 0.4j) == 0.3 + 0.4j


def test_inverse_point_zero_driving():
    drv = zero_driving()
    k = drv.n_steps
    t = drv.t[k]
    assert L.inverse_point(drv, k, 1j) == pytest.approx(1j * math.sqrt(1 + 2 * drv.a * t), rel=1e-12)


def test_inverse_round_trip_random_driving(k83, rng):
    drv = S.sample_chordal(k83, 1.0, 1e-3, seed=8)
    zs = rng.uniform(-2, 2, 40) + 1j * rng.uniform(1.5, 3, 40)
    Z, _, hit = L.flow_points(drv, zs)
    back = L.inverse_points(drv, drv.n_steps, Z[~hit])
    assert np.max(np.abs(back - zs[~hit]) / np.abs(zs[~hit])) < 1e-8


# traces


def test_zero_driving_trace_is_vertical_slit():
    drv = zero_driving(horizon=1.0, dt=1e-3)
    tr = L.extract_trace(drv)
    tip = L.default_tip_offset(drv)
    expect = 1j * np.sqrt(2 * drv.a * tr.t)
    assert np.max(np.abs(tr.points - expect)) <= 2 * tip


def test_trace_starts_near_origin(k83):
    drv = S.sample_chordal(k83, 0.5, 1e-3, seed=1)
    tr = L.extract_trace(drv)
    assert abs(tr.points[0]) <= 2 * L.default_tip_offset(drv)


def test_linear_driving_trace_leaves_axis():
    dt = 1e-3
    t = np.arange(1001) * dt
    drv = L.DrivingPath(dt, 2.0 * t, 0.75)
    tr = L.extract_trace(drv)
    assert np.all(tr.points[1:].imag > 0)
    assert tr.points[-1].real > 0.1


def test_hull_polyline_zero_driving_lies_on_slit():
    drv = zero_driving(horizon=0.5, dt=1e-2)
    hp = L.hull_polyline(drv, max_gap=0.01)
    assert np.max(np.abs(hp.points.real)) < 1e-12
    assert np.max(hp.points.imag) == pytest.approx(math.sqrt(2 * drv.a * 0.5), rel=1e-12)
    assert np.all(np.diff(hp.times) >= 0)
    assert np.max(np.abs(np.diff(hp.points))) <= 0.01 * (1 + 1e-9)


def test_hull_near_agrees_with_full_walk(k83):
    drv = S.track_points(k83, [1j], 5.0, 0.01, seed=21, record=True).driving
    full = L.hull_polyline(drv, max_gap=0.01)
    runs = L.hull_near(drv, 1j, 0.4, 0.01)
    zs = 1j + 0.3 * np.exp(2j * np.pi * np.arange(16) / 16)
    zs = np.concatenate([zs, [1j, 0.9j, 1.1j]])
    for z in zs:
        df = L.trace_distance(full, z)
        dn = L.distance_to_runs(runs, z)
        if df < 0.4 - 0.02:
            assert dn == pytest.approx(df, abs=0.011)


def test_diameter_constant_is_moderate(k83):
    ratios = []
    for seed in range(10):
        drv = S.sample_chordal(k83, 1.0, 1e-3, seed=seed)
        ratios.append(L.diameter_ratio(drv, L.extract_trace(drv)))
    assert max(ratios) < 10.0


# geometry


def test_trace_distance_examples():
    seg = np.array([0j, 1j])
    assert L.trace_distance(seg, 1.0 + 0j) == pytest.approx(1.0)
    assert L.trace_distance(seg, 1j) == 0.0
    assert L.trace_distance(seg, 0.5 + 0.5j) == pytest.approx(0.5)


def test_trace_distance_vs_dense_sampling(rng):
    pts = np.cumsum(rng.normal(size=30) + 1j * np.abs(rng.normal(size=30))) * 0.1
    dense = L.densify(pts, 1e-4)
    for z in rng.uniform(-1, 1, 10) + 1j * rng.uniform(0, 2, 10):
        brute = np.min(np.abs(dense - z))
        assert L.trace_distance(pts, z) == pytest.approx(brute, abs=1e-4)


def test_densify_limits_gaps(rng):
    pts = rng.normal(size=20) + 1j * rng.normal(size=20)
    d = L.densify(pts, 0.05)
    assert np.max(np.abs(np.diff(d))) <= 0.05 * (1 + 1e-12)
    assert d[0] == pts[0] and d[-1] == pts[-1]


# capacity


def test_hcap_empty_hull_is_zero():
    assert L.hcap_oracle(np.array([], dtype=complex)).mean == 0.0


def test_hcap_vertical_slit():
    L_ = 1.0
    slit = 1j * np.linspace(0, L_, 201)
    est = L.hcap_oracle(slit, n_walkers=4000, rng_seed=3)
    assert abs(est.mean - L_ ** 2 / 2) <= 3 * est.stderr + 0.01
