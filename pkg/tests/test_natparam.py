import math

import numpy as np
import pytest

from slelab import greens as G
from slelab import loewner as L
from slelab import natparam as N
from slelab import sampler as S
from slelab.errors import MapSingularOnTrace, UnderResolved


def vertical_slit(length=1.0, spacing=1e-3, kappa=8.0 / 3.0):
    n = int(round(length / spacing))
    return L.TracePolyline(spacing, 1j * np.linspace(0.0, length, n + 1), kappa)


# Minkowski content


def test_content_of_empty_prefix_is_zero():
    tr = vertical_slit()
    assert N.minkowski_content(tr, -1.0, 0.05) == 0.0
    assert N.local_content([], 0.05, 1j, 0.5, 4 / 3) == 0.0


def test_content_of_vertical_segment():
    # eps-neighbourhood of [0, i] in H: a 2 eps strip plus the half-disk cap at the tip
    tr = vertical_slit()
    d = 4.0 / 3.0
    for eps in (0.04, 0.02):
        exact = eps ** (d - 2) * (2 * eps + math.pi * eps ** 2 / 2)
        got = N.minkowski_content(tr, None, eps, f_rule="none")
        assert got == pytest.approx(exact, rel=0.01)


def test_content_scaling_by_two():
    drv = S.sample_chordal(S.kappa_params(8.0 / 3.0), 0.25, 1e-3, seed=6)
    pts = L.hull_polyline(drv, max_gap=0.005).points
    d = 4.0 / 3.0
    c1 = N.minkowski_content(pts, None, 0.02, f_rule="none", d=d)
    c2 = N.minkowski_content(2 * pts, None, 0.04, f_rule="none", d=d)
    assert c2 == pytest.approx(2 ** d * c1, rel=1e-9)


def test_content_floor_removes_boundary_layer():
    tr = vertical_slit()
    assert N.minkowski_content(tr, None, 0.02, f_rule="sqrt") < N.minkowski_content(tr, None, 0.02, f_rule="none")


def test_content_refuses_coarse_trace():
    tr = vertical_slit(spacing=0.05)
    with pytest.raises(UnderResolved):
        N.minkowski_content(tr, None, 0.04)


def test_content_measure_sums_to_content():
    tr = vertical_slit()
    mass = N.content_measure(tr, 0.5, 0.02)
    assert mass.size == tr.prefix(0.5).size
    assert mass.sum() == pytest.approx(N.minkowski_content(tr, 0.5, 0.02), rel=1e-12)


def test_content_profile_sorted_descending():
    prof = N.content_profile(vertical_slit(), None, [0.01, 0.04, 0.02])
    assert list(prof.epsilons) == [0.04, 0.02, 0.01]
    assert np.all(prof.contents > 0)


# L(s, s + delta) and dyadic sums


def test_l_quadrature_nonpositive_delta(small_table, k83):
    drv = S.sample_chordal(k83, 0.25, 2 ** -10, seed=1)
    assert N.l_quadrature(drv, 0, 0.0, small_table, 4, k83) == 0.0
    assert N.l_quadrature(drv, 0, -1.0, small_table, 4, k83) == 0.0


def test_l_quadrature_scaling_at_start(small_table, k83):
    # at s = 0 the map is the identity and L is delta^(d/2) times a fixed integral
    drv = S.sample_chordal(k83, 0.25, 2 ** -10, seed=1)
    l1 = N.l_quadrature(drv, 0, 2 ** -4, small_table, 4, k83)
    l2 = N.l_quadrature(drv, 0, 2 ** -6, small_table, 4, k83)
    assert l1 / l2 == pytest.approx(4.0 ** (k83.d / 2), rel=1e-12)


def test_l_quadrature_positive_inside_path(small_table, k83):
    drv = S.sample_chordal(k83, 0.5, 2 ** -10, seed=2)
    k = drv.index_of(0.25)
    val = N.l_quadrature(drv, k, 2 ** -5, small_table, 5, k83)
    assert 0 < val < math.inf


def test_theta_dyadic_zero_time(small_table, k83):
    drv = S.sample_chordal(k83, 0.25, 2 ** -10, seed=3)
    th = N.theta_dyadic(drv, 0.0, 4, small_table, k83)
    assert th.total == 0.0 and th.increments.size == 0


def test_theta_dyadic_increments_nonnegative(small_table, k83):
    drv = S.sample_chordal(k83, 0.25, 2 ** -10, seed=3)
    th = N.theta_dyadic(drv, 0.25, 5, small_table, k83)
    assert th.increments.size == 8
    assert np.all(th.increments >= 0)
    assert np.all(np.diff(th.cumulative) >= 0)
    assert th.total == pytest.approx(th.increments.sum(), rel=1e-14)


def test_theta_dyadic_rejects_long_window(small_table, k83):
    drv = S.sample_chordal(k83, 0.25, 2 ** -10, seed=3)
    with pytest.raises(ValueError):
        N.theta_dyadic(drv, 0.5, 4, small_table, k83)


# transport and regularity


def test_transport_identity_and_dilation(small_table, k83):
    drv = S.sample_chordal(k83, 0.25, 2 ** -10, seed=4)
    tr = L.extract_trace(drv)
    th = N.theta_dyadic(drv, 0.25, 4, small_table, k83)
    ident = N.transport_theta(tr, th, lambda z: np.ones_like(z))
    assert ident == pytest.approx(th.total, rel=1e-14)
    dil = N.transport_theta(tr, th, lambda z: 2 * np.ones_like(z))
    assert dil == pytest.approx(2 ** k83.d * th.total, rel=1e-14)


def test_transport_vertex_masses():
    tr = vertical_slit()
    mass = N.content_measure(tr, 0.5, 0.02)
    assert N.transport_theta(tr, mass, lambda z: np.ones_like(z)) == pytest.approx(mass.sum(), rel=1e-14)


def test_transport_rejects_singular_map():
    tr = vertical_slit()
    mass = N.content_measure(tr, 0.5, 0.02)
    with pytest.raises(MapSingularOnTrace):
        N.transport_theta(tr, mass, lambda z: np.zeros_like(z))


def test_holder_constant_path_is_zero():
    tr = L.TracePolyline(2 ** -8, np.full(257, 0.5j), 8 / 3)
    assert N.holder_statistic(tr, 0.3, (0.25, 1.0)) == 0.0


def test_holder_linear_path():
    # |gamma(t) - gamma(s)| = t - s; the widest dyadic cell in [1/4, 1] is 1/2
    t = np.arange(257) * 2 ** -8
    tr = L.TracePolyline(2 ** -8, t + 0j, 8 / 3)
    for alpha in (0.2, 0.5, 0.9):
        assert N.holder_statistic(tr, alpha, (0.25, 1.0)) == pytest.approx(0.5 ** (1 - alpha), rel=1e-12)


def test_holder_monotone_in_alpha(k83):
    drv = S.sample_chordal(k83, 1.0, 2 ** -10, seed=9)
    tr = L.extract_trace(drv)
    vals = [N.holder_statistic(tr, a, (0.25, 1.0)) for a in (0.1, 0.3, 0.5, 0.7, 0.9)]
    assert np.all(np.diff(vals) >= 0)


def test_holder_argument_checks():
    tr = vertical_slit()
    with pytest.raises(ValueError):
        N.holder_statistic(tr, 1.5, (0.25, 0.5))
    with pytest.raises(ValueError):
        N.holder_statistic(tr, 0.5, (0.0, 0.5))
    with pytest.raises(ValueError):
        N.holder_statistic(tr, 0.5, (0.25, 5.0))


def test_quad_rule_weights_positive(small_table, k83):
    rule = N.quad_rule(small_table, k83, 4.0)
    assert np.all(rule.weights > 0)
    assert np.all(np.abs(rule.nodes) <= 4.0)
    assert np.all(rule.nodes.imag ** 2 < 2 * k83.a)
    assert N.quad_rule(small_table, k83, 4.0) is rule
    assert isinstance(small_table, G.PhiTable)
