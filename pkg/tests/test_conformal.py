import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from chordarc.conformal import (ExteriorPower, GratingMap, IdentityH, Power, SewingMap, boundary_value,
                                cauchy_derivatives, grating, halfplane, map_eval_derivs, map_inverse, parse_domain,
                                poincare_ratio, quasisymmetric_constant, sector, sewing_eval, vertical_ray_point)
from chordarc.errors import DomainError, MonotonicityError, UnsupportedDomainError
from chordarc.geometry import CurveWindow, Grating, SectorBoundary

MAPS = [(Power(0.5), 1 + 2j), (Power(1.5), -1 + 0.5j), (ExteriorPower(0.5), 1 - 1j),
        (ExteriorPower(1.5), -2 - 0.3j), (GratingMap(0.6), 0.4 + 0.7j)]


@pytest.mark.parametrize("m,z", MAPS)
def test_derivatives_match_cauchy_integrals(m, z):
    r = 0.4 * abs(z.imag)
    ref = cauchy_derivatives(m.eval, z, r, k_max=4, n=128)
    got = map_eval_derivs(m, z, 4)
    for k in range(5):
        assert got[k] == pytest.approx(ref[k], rel=1e-9, abs=1e-12)


@pytest.mark.parametrize("m,z", MAPS)
def test_wrong_half_plane_rejected(m, z):
    with pytest.raises(DomainError):
        map_eval_derivs(m, z.conjugate(), 1)


def test_derivative_order_limit():
    with pytest.raises(ValueError):
        map_eval_derivs(Power(0.5), 1j, 5)


@pytest.mark.parametrize("m,z", MAPS)
def test_inverse_roundtrip(m, z):
    w = m.eval(z)
    assert map_inverse(m, w) == pytest.approx(z, abs=1e-11)


@settings(max_examples=40, deadline=None)
@given(st.floats(-30, 30), st.floats(-9, 1.5))
def test_grating_inverse_near_and_far(x, logy):
    m = GratingMap(0.9)
    z = complex(x, 10 ** logy)
    w = complex(m.eval(z))
    back = map_inverse(m, w, tol=1e-13)
    assert abs(complex(m.eval(back)) - w) <= 1e-12 * max(1, abs(w))


def test_inverse_needs_positive_tol():
    with pytest.raises(ValueError):
        map_inverse(Power(0.5), 1j, tol=0)


def test_traces_lie_on_the_curves():
    x = np.linspace(-5, 5, 41)
    for alpha in (0.5, 1.5):
        curve = SectorBoundary(alpha)
        for m in (Power(alpha), ExteriorPower(alpha)):
            d, _ = curve.distance(m.trace(x))
            assert np.max(d) < 1e-12
    assert np.allclose(GratingMap(0.6).trace(x), Grating(0.6).eval(x))


def test_exterior_power_matches_interior_on_the_boundary():
    # both maps send +1 to 1 and -1 to the far ray
    for alpha in (0.25, 1.0, 1.75):
        phi, psi = Power(alpha), ExteriorPower(alpha)
        assert complex(phi.trace(-1.0)) == pytest.approx(complex(psi.trace(-1.0)), abs=1e-14)
        assert complex(phi.trace(2.0)) == pytest.approx(2.0 ** alpha)
        assert complex(psi.trace(2.0)) == pytest.approx(2.0 ** (2 - alpha))


@pytest.mark.parametrize("m", [Power(0.5), Power(1.5), ExteriorPower(0.5), GratingMap(0.9)])
def test_trace_divided_differences_without_cancellation(m):
    mp.mp.dps = 50
    pairs = [(1.0, 1.0 + 1e-12), (3.0, 2.0), (-2.0, -2.0 - 1e-10), (-1.0, 0.5)]
    for x, y in pairs:
        got = complex(m.trace_dd(np.array([x]), np.array([y]))[0])
        X, Y = mp.mpf(x), mp.mpf(y)
        if isinstance(m, GratingMap):
            f = lambda t: t + m.c * mp.exp(1j * t)
        else:
            a = m.alpha if isinstance(m, Power) else m.beta
            rot = mp.exp(1j * mp.pi * m.alpha)

            def f(t, a=a, rot=rot):
                return abs(t) ** a if t >= 0 else abs(t) ** a * rot
        ref = complex((f(X) - f(Y)) / (X - Y))
        assert got == pytest.approx(ref, rel=1e-11)


@pytest.mark.parametrize("m", [Power(0.5), ExteriorPower(1.5), GratingMap(0.6)])
def test_boundary_value_extrapolation(m):
    x = np.array([-2.0, 0.7, 3.0])
    val, err = boundary_value(m, x)
    assert np.allclose(val, m.trace(x), atol=1e-9)
    assert np.all(np.abs(val - m.trace(x)) <= err + 1e-12)


# ---- domains


def test_parse_domain():
    assert parse_domain("halfplane").label == "halfplane"
    assert parse_domain("sector:alpha=0.5").label == "sector:alpha=0.5"
    assert parse_domain("Grating: c=0.6").curve == Grating(0.6)
    with pytest.raises(ValueError):
        parse_domain("sector")
    with pytest.raises(ValueError):
        parse_domain("annulus:r=2")
    with pytest.raises(ValueError):
        parse_domain("grating:c")


def test_grating_has_no_exterior_map():
    with pytest.raises(UnsupportedDomainError):
        grating(0.6).require_exterior()
    with pytest.raises(UnsupportedDomainError):
        parse_domain("parabola").require_interior()


@pytest.mark.parametrize("domain,side", [(sector(0.5), "interior"), (sector(1.5), "interior"),
                                         (sector(0.5), "exterior"), (sector(1.5), "exterior"),
                                         (grating(0.6), "interior")])
def test_delta_pullback_matches_direct_distance(domain, side):
    rng = np.random.default_rng(11)
    sgn = 1 if side == "interior" else -1
    z = rng.uniform(-3, 3, 25) + sgn * 1j * 10 ** rng.uniform(-3, 1, 25)
    m = domain.interior_map if side == "interior" else domain.exterior_map
    got = domain.delta_pullback(z, side)
    ref = domain.delta(m.eval(z))
    assert np.allclose(got, ref, rtol=1e-9, atol=0)


def test_delta_pullback_keeps_precision_at_tiny_heights():
    d = sector(0.5).delta_pullback(np.array([2.0 + 1e-14j]))
    # delta ~ Im z |phi'(z)| = 1e-14 * 0.5 * 2^-0.5
    assert d[0] == pytest.approx(1e-14 * 0.5 * 2 ** -0.5, rel=1e-6)


def test_poincare_ratio_koebe_range():
    assert poincare_ratio(halfplane(), 3 + 2j) == 1.0
    rng = np.random.default_rng(5)
    z = rng.uniform(-5, 5, 200) + 1j * 10 ** rng.uniform(-4, 2, 200)
    for dom in (sector(0.25), sector(1.75), grating(0.9)):
        r = poincare_ratio(dom, z)
        assert np.all((r >= 0.25) & (r <= 4.0))


def test_vertical_ray_point():
    dom = sector(0.5)
    w = complex(Power(0.5).eval(1 + 1j))
    assert vertical_ray_point(dom, w, 0.0) == w
    assert vertical_ray_point(dom, w, 2.0) == pytest.approx(complex(Power(0.5).eval(1 + 3j)), abs=1e-12)
    with pytest.raises(ValueError):
        vertical_ray_point(dom, w, -1.0)


# ---- sewing


@pytest.mark.parametrize("alpha", [0.5, 1.0, 1.5])
def test_sector_sewing_closed_form(alpha):
    # t = x^alpha on the positive ray from the inside, s^(2 - alpha) from the outside
    h = SewingMap(sector(alpha), tol=1e-12)
    k = alpha / (2 - alpha)
    for x in (0.3, 1.0, 4.0):
        assert h(x) == pytest.approx(x ** k, rel=1e-8)
        assert h(-x) == pytest.approx(-(x ** k), rel=1e-8)


def test_halfplane_sewing_is_identity():
    assert sewing_eval(halfplane(), 2.5) == 2.5


def test_sewing_needs_exterior_map():
    with pytest.raises(UnsupportedDomainError):
        sewing_eval(grating(0.3), 1.0)


def test_quasisymmetric_constant():
    win = CurveWindow(-2.0, 2.0, 9)
    assert quasisymmetric_constant(lambda x: 3 * x + 1, win, [0.5, 1.0]) == pytest.approx(1.0)
    cube = quasisymmetric_constant(lambda x: x ** 3, CurveWindow(-1.0, 1.0, 3), [1.0])
    # at x = 1, s = 1: (8 - 1) / (1 - 0) = 7
    assert cube == pytest.approx(7.0)
    with pytest.raises(MonotonicityError):
        quasisymmetric_constant(lambda x: x ** 2, win, [1.0])
    with pytest.raises(ValueError):
        quasisymmetric_constant(lambda x: x, win, [0.0])


def test_identity_maps():
    m = IdentityH()
    assert m.eval(1 + 1j) == 1 + 1j
    assert m.trace_dd(np.array([1.0]), np.array([2.0]))[0] == 1
