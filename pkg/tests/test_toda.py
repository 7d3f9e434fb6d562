import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nmm.curvegeom import HarmonicMoments, PolynomialCurve
from nmm.toda import (
    FlowStencil,
    LaurentSeries,
    T0Stencil,
    laurent_of_curve,
    poisson_bracket,
    string_residual,
    toda_hamiltonian,
    toda_hamiltonian_conjugate,
    verify_flow,
)

ELLIPSE_M = HarmonicMoments(0.21, (0, 0.2))
HYPO_M = HarmonicMoments(0.088542, (0, 0, 0.1))


def series_equal(a: LaurentSeries, b: LaurentSeries, tol: float = 1e-15) -> bool:
    return (a - b).max_abs() <= tol


# -- series ------------------------------------------------------------------


def test_laurent_of_circle():
    z, zt = laurent_of_curve(PolynomialCurve(0.5))
    assert z.to_dict() == {1: 0.5}
    assert zt.to_dict() == {-1: 0.5}


def test_laurent_of_ellipse():
    z, zt = laurent_of_curve(PolynomialCurve(0.5, (0, 0.2)))
    assert z.to_dict() == {1: 0.5, -1: 0.2}
    assert zt.to_dict() == {-1: 0.5, 1: 0.2}


def test_laurent_of_hypotrochoid():
    _, zt = laurent_of_curve(PolynomialCurve(0.3, (0, 0, 0.027)))
    assert zt[2] == 0.027


def test_series_evaluation_matches_coefficients():
    f = LaurentSeries.from_dict({-2: 1 + 1j, 0: 0.5, 3: -2})
    w = 0.7 * np.exp(0.3j)
    assert abs(f(w) - ((1 + 1j) * w**-2 + 0.5 - 2 * w**3)) < 1e-14


def test_window_tracks_discarded_mass():
    f = LaurentSeries.from_dict({-3: 1e-3, 0: 1.0, 2: 0.5})
    g = f.window(-2, 2)
    assert g.discarded == pytest.approx(1e-3)
    assert g[2] == 0.5


def test_projections_partition():
    f = LaurentSeries.from_dict({-2: 1.0, -1: 2.0, 0: 3.0, 1: 4.0})
    assert series_equal(f.plus() + f.zero() + f.minus(), f)


# -- Hamiltonians ------------------------------------------------------------


def test_hamiltonian_circle():
    z, _ = laurent_of_curve(PolynomialCurve(0.5))
    assert series_equal(toda_hamiltonian(z, 1), LaurentSeries.from_dict({1: 0.5}))


def test_hamiltonian_ellipse_k2():
    z, _ = laurent_of_curve(PolynomialCurve(0.5, (0, 0.2)))
    assert series_equal(toda_hamiltonian(z, 2), LaurentSeries.from_dict({2: 0.25, 0: 0.1}), 1e-16)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_conjugate_hamiltonian_mirrors(k):
    z, zt = laurent_of_curve(PolynomialCurve(0.3, (0.01, 0.02, 0.027)))
    assert series_equal(toda_hamiltonian_conjugate(zt, k), toda_hamiltonian(z, k).mirror(), 1e-16)


def test_hamiltonian_rejects_zero_index():
    z, _ = laurent_of_curve(PolynomialCurve(0.5))
    with pytest.raises(ValueError):
        toda_hamiltonian(z, 0)


# -- Poisson bracket ---------------------------------------------------------


def linear_stencil(c: LaurentSeries, slope: LaurentSeries, eps: float) -> T0Stencil:
    """Stencil of c + (t0 - t0*) slope, for which central differences are exact."""
    return T0Stencil(c - slope * eps, c, c + slope * eps, eps)


coeff = st.complex_numbers(max_magnitude=1.0, allow_nan=False, allow_infinity=False)


@st.composite
def series(draw):
    lo = draw(st.integers(-3, 0))
    n = draw(st.integers(1, 5))
    return LaurentSeries(lo, np.array(draw(st.lists(coeff, min_size=n, max_size=n)), dtype=complex))


@st.composite
def stencils(draw):
    return linear_stencil(draw(series()), draw(series()), 1e-3)


def test_bracket_self_vanishes():
    z = linear_stencil(LaurentSeries.from_dict({1: 0.5, -1: 0.2}), LaurentSeries.from_dict({1: 1.0}), 1e-3)
    assert poisson_bracket(z, z).max_abs() == 0


def test_bracket_with_constant():
    eps = 1e-3
    w = T0Stencil.frozen(LaurentSeries.from_dict({1: 1.0}), eps)
    # c(t0) = t0^2 about t0 = 0.3: c' = 0.6
    c = T0Stencil(*(LaurentSeries.constant(t * t) for t in (0.3 - eps, 0.3, 0.3 + eps)), eps)
    assert series_equal(poisson_bracket(w, c), LaurentSeries.from_dict({1: 0.6}), 1e-12)


@settings(max_examples=60, deadline=None)
@given(stencils(), stencils())
def test_bracket_antisymmetric(f, g):
    assert (poisson_bracket(f, g) + poisson_bracket(g, f)).max_abs() <= 1e-12


@settings(max_examples=60, deadline=None)
@given(stencils(), stencils(), stencils())
def test_bracket_leibniz(f, g, h):
    lhs = poisson_bracket(f, g * h)
    rhs = poisson_bracket(f, g) * h.center + g.center * poisson_bracket(f, h)
    assert (lhs - rhs).max_abs() <= 1e-12


def test_bracket_rejects_mismatched_steps():
    f = T0Stencil.frozen(LaurentSeries.constant(1.0), 1e-3)
    g = T0Stencil.frozen(LaurentSeries.constant(1.0), 1e-4)
    with pytest.raises(ValueError):
        poisson_bracket(f, g)


# -- string equation ---------------------------------------------------------


def test_string_equation_ellipse_plain():
    assert string_residual(ELLIPSE_M, eps=1e-4, richardson=False) <= 1e-7


@pytest.mark.parametrize("moments", [ELLIPSE_M, HYPO_M])
def test_string_equation_richardson(moments):
    assert string_residual(moments, eps=1e-3) <= 1e-7


def test_string_equation_second_order_sweep():
    # defect / eps^2 stays bounded over a family sweep, and halving eps quarters it
    family = [HarmonicMoments(t0, (0, t2)) for t0, t2 in [(0.05, 0.1), (0.1, 0.1), (0.1, 0.2), (0.2, 0.15)]]
    family.append(HarmonicMoments(0.05, (0, 0, 0.05)))
    for m in family:
        coarse = string_residual(m, eps=1e-2, richardson=False)
        fine = string_residual(m, eps=5e-3, richardson=False)
        assert coarse / 1e-4 < 1e3
        assert 3.5 < coarse / fine < 4.5


# -- flows -------------------------------------------------------------------


def test_flow_circle_k1():
    rep = verify_flow(HarmonicMoments(0.25), 1, eps=1e-4)
    assert rep.max_flow_residual <= 1e-7


def test_flow_ellipse_k2():
    rep = verify_flow(HarmonicMoments(0.1, (0, 0.1)), 2)
    assert rep.max_flow_residual <= 1e-6 and rep.string_residual <= 1e-6


def test_flow_hypotrochoid_k3():
    rep = verify_flow(HarmonicMoments(0.05, (0, 0, 0.05)), 3)
    assert rep.max_flow_residual <= 1e-6


@pytest.mark.parametrize("moments, k", [(HarmonicMoments(0.1, (0, 0.1)), 2), (HarmonicMoments(0.05, (0, 0, 0.05)), 3)])
def test_flow_residual_second_order(moments, k):
    coarse = verify_flow(moments, k, eps=1e-2, richardson=False)
    fine = verify_flow(moments, k, eps=5e-3, richardson=False)
    assert 3.5 < coarse.residual_z / fine.residual_z < 4.5


def test_flow_stencil_inversions_converge():
    st_ = FlowStencil.build(HYPO_M, 2, 1e-4)
    assert set(st_.curves) == {"base", "t0+", "t0-", "re+", "re-", "im+", "im-"}


def test_flow_report_json_keys():
    rep = verify_flow(HarmonicMoments(0.1, (0, 0.1)), 1)
    assert {"flow_k", "epsilon", "residual_z", "residual_ztilde", "string_residual"} <= set(rep.to_json())
