import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from nmm.curvegeom import (
    ConvergenceError,
    CurveError,
    HarmonicMoments,
    PolynomialCurve,
    area_parameter,
    contour_convergence,
    critical_radius,
    curve_from_moments,
    eval_map,
    interior_moments,
    moments_of_curve,
    validate_curve,
)

CIRCLE = PolynomialCurve(0.5)
ELLIPSE = PolynomialCurve(0.5, (0, 0.2))
HYPO = PolynomialCurve(0.3, (0, 0, 0.027))


def random_curve(rng, d=None):
    while True:
        dd = rng.integers(1, 4) if d is None else d
        r = rng.uniform(0.05, 0.5)
        a = [0j] + [0.2 * r * np.sqrt(rng.uniform()) * np.exp(2j * np.pi * rng.uniform()) for _ in range(dd)]
        c = PolynomialCurve(r, tuple(a))
        if validate_curve(c).valid:
            return c


@st.composite
def curves(draw, max_degree=3):
    d = draw(st.integers(1, max_degree))
    r = draw(st.floats(0.05, 0.5))
    mods = draw(st.lists(st.floats(0.0, 0.2), min_size=d - 1, max_size=d - 1)) + [draw(st.floats(0.01, 0.2))]
    args = draw(st.lists(st.floats(0, 2 * np.pi), min_size=d, max_size=d))
    a = (0j,) + tuple(r * m * np.exp(1j * t) for m, t in zip(mods, args))
    c = PolynomialCurve(r, a)
    assume(validate_curve(c).valid)
    return c


# -- evaluation --------------------------------------------------------------


@pytest.mark.parametrize(
    "curve, w, expected",
    [(CIRCLE, 1, 0.5), (ELLIPSE, 1, 0.7), (HYPO, 1j, 0.3j - 0.027)],
)
def test_eval_map_examples(curve, w, expected):
    assert abs(eval_map(curve, w) - expected) < 1e-15


def test_eval_map_rejects_origin():
    with pytest.raises((ZeroDivisionError, ValueError, CurveError)):
        eval_map(ELLIPSE, 0)


def test_curve_rejects_bad_radius():
    with pytest.raises(CurveError):
        PolynomialCurve(-1.0)


def test_trailing_zero_coefficients_lower_degree():
    assert PolynomialCurve(0.5, (0, 0.2, 0, 0)).degree == 1


# -- critical radius ---------------------------------------------------------


def test_critical_radius_circle():
    assert critical_radius(CIRCLE) == 0


def test_critical_radius_ellipse():
    assert critical_radius(ELLIPSE) == pytest.approx(np.sqrt(0.2 / 0.5), abs=1e-13)


@pytest.mark.parametrize("r, a", [(0.3, 0.027), (1.0, 0.2), (0.5, 0.1)])
def test_critical_radius_hypotrochoid(r, a):
    c = PolynomialCurve(r, (0, 0, a))
    assert critical_radius(c) == pytest.approx((2 * a / r) ** (1 / 3), rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(curves())
def test_critical_radius_zeros_derivative(curve):
    # oracle: numpy companion-matrix roots of w^{d+1} h'(w)
    d = curve.degree
    poly = np.zeros(d + 2, dtype=complex)
    poly[0] = curve.r
    for j in range(1, d + 1):
        poly[j + 1] = -j * curve.coeff(j)
    roots = np.roots(poly)
    assert critical_radius(curve) == pytest.approx(np.max(np.abs(roots)), abs=1e-10)


# -- validation --------------------------------------------------------------


def test_validate_circle():
    rep = validate_curve(PolynomialCurve(1.0))
    assert rep.valid and rep.tangent_winding == 1


def test_validate_ellipse():
    assert validate_curve(ELLIPSE).valid


def test_validate_degenerate_cusp():
    rep = validate_curve(PolynomialCurve(0.5, (0, 0.5)))
    assert not rep.valid
    assert rep.reason


def test_validate_self_intersecting():
    rep = validate_curve(PolynomialCurve(0.3, (0, 0, 0.25)))
    assert not rep.valid


# -- forward moments ---------------------------------------------------------


def test_moments_circle():
    m = moments_of_curve(CIRCLE, 4)
    assert m.t0 == pytest.approx(0.25, abs=1e-14)
    assert np.max(np.abs(m.t)) < 1e-14


def test_moments_ellipse():
    m = moments_of_curve(ELLIPSE, 4)
    assert m.t0 == pytest.approx(0.21, abs=1e-13)
    assert abs(m.tk(2) - 0.2) < 1e-13
    assert abs(m.tk(1)) < 1e-14


def test_moments_hypotrochoid():
    m = moments_of_curve(HYPO, 5)
    assert m.t0 == pytest.approx(0.088542, abs=1e-13)
    assert abs(m.tk(3) - 0.1) < 1e-13


def test_moments_residue_matches_contour():
    rng = np.random.default_rng(11)
    for _ in range(10):
        c = random_curve(rng)
        a = moments_of_curve(c, c.degree + 1, method="contour").as_vector()
        b = moments_of_curve(c, c.degree + 1, method="residue").as_vector()
        assert np.max(np.abs(a - b)) < 1e-12


def test_origin_not_enclosed_needs_shift():
    shifted = PolynomialCurve(0.2, (0.5, 0.05))
    with pytest.raises(CurveError):
        moments_of_curve(shifted, 3)
    m = moments_of_curve(shifted, 3, shifted=True)
    assert np.isfinite(m.t0)


@settings(max_examples=30, deadline=None)
@given(curves())
def test_vanishing_tail(curve):
    d = curve.degree
    m = moments_of_curve(curve, 2 * d + 4, method="residue")
    assert np.max(np.abs([m.tk(k) for k in range(d + 2, 2 * d + 5)])) < 1e-12


@settings(max_examples=30, deadline=None)
@given(curves())
def test_vanishing_tail_contour(curve):
    # t_k carries length dimension 2 - k, so rounding on |w| = 1 scales like r^(2-k)
    d = curve.degree
    m = moments_of_curve(curve, 2 * d + 4)
    tail = [abs(m.tk(k)) * min(1.0, curve.r ** (k - 2)) for k in range(d + 2, 2 * d + 5)]
    assert max(tail) < 1e-12


@settings(max_examples=30, deadline=None)
@given(curves(), st.sampled_from([0.5, 2.0]))
def test_weighted_homogeneity(curve, lam):
    d = curve.degree
    m = moments_of_curve(curve, d + 1)
    ms = moments_of_curve(curve.scaled(lam), d + 1)
    assert ms.t0 == pytest.approx(lam**2 * m.t0, rel=1e-12)
    for k in range(1, d + 2):
        assert abs(ms.tk(k) - lam ** (2 - k) * m.tk(k)) <= 1e-12 * max(1.0, abs(lam ** (2 - k) * m.tk(k)))


@settings(max_examples=30, deadline=None)
@given(curves())
def test_area_consistency(curve):
    assert moments_of_curve(curve, curve.degree + 1).t0 == pytest.approx(area_parameter(curve), abs=1e-10)


def test_trapezoid_convergence_reported():
    m_star = contour_convergence(HYPO, 6)
    assert 8 <= m_star <= 2**16


# -- interior moments --------------------------------------------------------


def test_interior_moments_circle():
    assert np.max(np.abs(interior_moments(CIRCLE, 6).v)) < 1e-14


def test_interior_moments_ellipse_odd_vanish():
    v = interior_moments(ELLIPSE, 5).v
    assert abs(v[0]) < 1e-15 and abs(v[2]) < 1e-15


def test_interior_moment_v2_ellipse_closed_form():
    # (1/pi) int z^2 over the ellipse with half-axes b1, b2 is b1 b2 (b1^2 - b2^2) / 4
    b1, b2 = 0.7, 0.3
    assert interior_moments(ELLIPSE, 2).v[1] == pytest.approx(b1 * b2 * (b1**2 - b2**2) / 4, abs=1e-14)


def test_interior_moment_v2_ellipse_brute_force():
    # midpoint area integral with point-in-region indicator; boundary error is O(h)
    n = 2000
    b1, b2 = 0.7, 0.3
    xs = -b1 + 2 * b1 * (np.arange(n) + 0.5) / n
    ys = -b2 + 2 * b2 * (np.arange(n) + 0.5) / n
    z = xs[:, None] + 1j * ys[None, :]
    inside = (z.real / b1) ** 2 + (z.imag / b2) ** 2 <= 1
    area = (2 * b1 / n) * (2 * b2 / n)
    v2 = np.sum(z[inside] ** 2) * area / np.pi
    assert abs(v2 - interior_moments(ELLIPSE, 2).v[1]) < 2e-5


# -- inverse map -------------------------------------------------------------


def test_inverse_circle():
    c = curve_from_moments(HarmonicMoments(0.25))
    assert c.r == pytest.approx(0.5, abs=1e-14)
    assert np.max(np.abs(c.coefficients())) < 1e-14


def test_inverse_ellipse():
    c = curve_from_moments(HarmonicMoments(0.21, (0, 0.2)))
    assert abs(c.r - 0.5) < 1e-10
    assert np.max(np.abs(c.coefficients() - [0, 0.2])) < 1e-10


def test_inverse_hypotrochoid():
    c = curve_from_moments(HarmonicMoments(0.088542, (0, 0, 0.1)))
    assert abs(c.r - 0.3) < 1e-10
    assert np.max(np.abs(c.coefficients() - [0, 0, 0.027])) < 1e-10


def test_inverse_trailing_zero_lowers_degree():
    c = curve_from_moments(HarmonicMoments(0.21, (0, 0.2, 0, 0)))
    assert c.degree == 1


def test_inverse_outside_moment_space_fails_explicitly():
    with pytest.raises(ConvergenceError) as info:
        curve_from_moments(HarmonicMoments(0.25, (0, 0.49, 0.3)))
    assert "residual" in str(info.value) or hasattr(info.value, "residual")


@settings(max_examples=40, deadline=None)
@given(curves())
def test_round_trip(curve):
    back = curve_from_moments(moments_of_curve(curve, curve.degree + 1))
    assert abs(back.r - curve.r) < 1e-8
    d = max(back.degree, curve.degree)
    diff = [back.coeff(j) - curve.coeff(j) for j in range(d + 1)]
    assert np.max(np.abs(diff)) < 1e-8


def test_json_round_trip():
    assert PolynomialCurve.from_json(HYPO.to_json()) == HYPO
    m = HarmonicMoments(0.1, (0, 0.2 + 0.1j))
    assert HarmonicMoments.from_json(m.to_json()) == m
