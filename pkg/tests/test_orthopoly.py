import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from nmm import orthopoly as op
from nmm.acceptance import kernel_identities, level_spacing_bruteforce
from nmm.schwarz import ZeroDensityLaw


def make_family(pot, n_max, n_r=200, n_theta=256, method="arnoldi"):
    grid = op.build_grid(op.default_cutoff(pot, n_max), n_r, n_theta)
    return op.build_family(pot, grid, n_max, method=method)


@pytest.fixture(scope="module")
def disc():
    return make_family(op.PotentialSpec(0.1, (), 24), 24)


@pytest.fixture(scope="module")
def gaussian():
    return make_family(op.PotentialSpec.gaussian(0.1, 24, 0.2), 24)


@pytest.fixture(scope="module")
def gaussian32():
    return make_family(op.PotentialSpec.gaussian(0.1, 32, 0.2), 24)


@pytest.fixture(scope="module")
def cubic():
    return make_family(op.PotentialSpec.monomial(0.05, 24, 3, 0.05), 24)


@pytest.fixture(scope="module")
def cubic30():
    return make_family(op.PotentialSpec.monomial(0.05, 30, 3, 0.05), 30)


# -- potential and grid ------------------------------------------------------


def test_potential_value():
    pot = op.PotentialSpec(0.5, (0.1, 0.2j), 4)
    z = 0.3 + 0.4j
    expected = (abs(z) ** 2 - 2 * (0.1 * z + 0.2j * z**2).real) / 0.5
    assert pot(z) == pytest.approx(expected, abs=1e-15)


def test_potential_rejects_large_t2():
    with pytest.raises(ValueError):
        op.PotentialSpec.gaussian(0.1, 8, 0.5)


@pytest.mark.parametrize("tk, order", [((), None), ((0, 0.2), 2), ((0, 0, 0.05), 3), ((0.1, 0.2), 1)])
def test_symmetry_order(tk, order):
    assert op.PotentialSpec(0.1, tk, 8).symmetry_order == order


@pytest.mark.parametrize("n_r, n_theta", [(16, 16), (40, 64), (100, 33)])
def test_grid_area(n_r, n_theta):
    g = op.build_grid(1.0, n_r, n_theta)
    assert np.sum(g.weights) == pytest.approx(np.pi, abs=1e-12)


def test_grid_moments():
    g = op.build_grid(1.0, 32, 32)
    assert np.sum(g.weights * np.abs(g.nodes) ** 2) == pytest.approx(np.pi / 2, abs=1e-12)
    assert abs(np.sum(g.weights * g.nodes)) < 1e-14


def test_grid_rejects_small_sizes():
    with pytest.raises(ValueError):
        op.build_grid(1.0, 8, 64)


def test_inner_product_gaussian_mass():
    t0, N = 0.1, 8
    pot = op.PotentialSpec(t0, (), N)
    g = op.build_grid(6 * np.sqrt(t0), 64, 64)
    assert op.inner_product([1], [1], pot, g) == pytest.approx(np.pi * t0 / N, rel=1e-10)


def test_inner_product_angular_orthogonality():
    pot = op.PotentialSpec(0.1, (), 8)
    g = op.build_grid(6 * np.sqrt(0.1), 64, 64)
    assert abs(op.inner_product([0, 0, 1], [0, 0, 0, 1], pot, g)) < 1e-15


def test_inner_product_second_moment():
    t0 = 0.1
    pot = op.PotentialSpec(t0, (), 1)
    g = op.build_grid(6 * np.sqrt(t0), 64, 64)
    assert op.inner_product([0, 1], [0, 1], pot, g) == pytest.approx(np.pi * t0**2, rel=1e-10)


def test_inner_product_unresolved_grid_reports():
    pot = op.PotentialSpec(0.1, (), 200)
    g = op.build_grid(6 * np.sqrt(0.1), 16, 16)
    with pytest.raises(op.QuadratureError) as info:
        op.inner_product([0] * 30 + [1], [0] * 30 + [1], pot, g)
    assert info.value.coarse != info.value.fine


# -- families ----------------------------------------------------------------


def test_disc_family_is_monomial(disc):
    t0, N = 0.1, 24
    for n in range(disc.n_max + 1):
        c = disc.monomial_coefficients(n)
        assert c[n] == pytest.approx(1.0, abs=1e-14)
        assert np.max(np.abs(c[:n]) * np.sqrt(t0) ** (n - np.arange(n)), initial=0) < 1e-10
    n = np.arange(disc.n_max + 1)
    exact = np.log(np.pi) + (n + 1) * np.log(t0 / N) + np.array([math.lgamma(k + 1) for k in n])
    assert np.max(np.abs(disc.log_norms - exact)) < 1e-10


def test_gaussian_recursion_formula(gaussian32):
    t0, t2, N = 0.1, 0.2, 32
    rec = op.recursion_coefficients(gaussian32)
    n = np.arange(1, 25)
    assert np.max(np.abs(rec.r[1:25] / np.sqrt(t0 * n / (N * (1 - 4 * t2**2))) - 1)) < 1e-5
    assert np.max(np.abs(rec.a[:23] - 2 * t2 * rec.r[1:24])) < 1e-10


def test_norms_positive_partition_finite(gaussian, cubic):
    for fam in (gaussian, cubic):
        assert np.all(fam.norms > 0)
        assert np.isfinite(fam.log_partition())


def test_monic(cubic):
    for n in range(cubic.n_max + 1):
        assert cubic.monomial_coefficients(n)[n] == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("name", ["disc", "gaussian", "cubic"])
def test_orthogonality(name, request):
    fam = request.getfixturevalue(name)
    G = fam.values.conj() @ fam.values.T
    assert np.max(np.abs(G - np.eye(len(G)))) < 1e-8


def test_orthogonality_from_coefficients(gaussian):
    # independent route: monomial coefficients on a refined grid
    g = gaussian.grid.refined()
    pot = gaussian.potential
    ps = [np.polynomial.polynomial.polyval(g.nodes, gaussian.monomial_coefficients(n)) for n in range(13)]
    w = g.weights * np.exp(-pot.N * pot(g.nodes))
    h = gaussian.norms
    for m in range(13):
        for n in range(13):
            ip = np.sum(w * np.conj(ps[m]) * ps[n])
            if m == n:
                assert ip.real == pytest.approx(h[n], rel=1e-8)
            else:
                assert abs(ip) <= 1e-8 * np.sqrt(h[m] * h[n])


def test_cholesky_matches_arnoldi():
    pot = op.PotentialSpec(0.1, (0, 0.1, 0.03), 32)
    a = make_family(pot, 20)
    c = make_family(pot, 20, method="cholesky")
    assert np.max(np.abs(a.log_norms - c.log_norms)) < 1e-9
    for n in range(21):
        assert np.max(np.abs(a.monomial_coefficients(n) - c.monomial_coefficients(n)) * np.sqrt(0.1) ** (n - np.arange(n + 1))) < 1e-8


def test_cholesky_truncates_with_warning():
    pot = op.PotentialSpec.gaussian(0.1, 48, 0.45)
    with pytest.warns(op.PrecisionWarning):
        fam = make_family(pot, 48, method="cholesky")
    assert fam.n_max < 48


@pytest.mark.parametrize("use_symmetry", [True, False])
def test_symmetry_selection(use_symmetry):
    pot = op.PotentialSpec.monomial(0.05, 24, 3, 0.05)
    grid = op.build_grid(op.default_cutoff(pot, 24), 200, 256)
    fam = op.build_family(pot, grid, 24, use_symmetry=use_symmetry)
    for n in range(25):
        c = fam.coeffs[n, : n + 1]
        off = [abs(c[m]) for m in range(n + 1) if (m - n) % 3]
        assert max(off, default=0.0) <= 1e-10


def test_build_family_preconditions():
    pot = op.PotentialSpec(0.1, (), 10)
    with pytest.raises(ValueError):
        make_family(pot, 11)
    with pytest.raises(ValueError):
        op.build_family(pot, op.build_grid(1.0, 32, 16), 10)


# -- kernel and densities ----------------------------------------------------


@pytest.mark.parametrize("name", ["disc", "gaussian", "cubic"])
def test_kernel_identities(name, request):
    trace, repro = kernel_identities(request.getfixturevalue(name))
    assert trace <= 1e-6 and repro <= 1e-6


def test_kernel_identities_stable_under_refinement():
    pot = op.PotentialSpec.gaussian(0.1, 16, 0.2)
    coarse = kernel_identities(make_family(pot, 16, 120, 160))
    fine = kernel_identities(make_family(pot, 16, 240, 320))
    for c, f in zip(coarse, fine):
        assert max(c, f) <= max(2 * min(c, f), 1e-13)


def test_kernel_hermitian(gaussian):
    w, z = 0.1 + 0.05j, -0.08 + 0.02j
    assert abs(op.kernel(gaussian, w, z) - np.conj(op.kernel(gaussian, z, w))) < 1e-12


def test_kernel_needs_full_family():
    fam = make_family(op.PotentialSpec(0.1, (), 24), 10)
    with pytest.raises(ValueError):
        op.kernel(fam, 0.1, 0.1)


def test_disc_density_matches_closed_form(disc):
    z = np.linspace(0, 0.5, 11) * np.exp(0.3j)
    assert np.max(np.abs(op.one_point_density(disc, z) - op.gaussian_density(0.1, 24, z))) < 1e-10


def test_gaussian_density_series_oracle():
    # direct partial sum, computed with math.factorial
    t0, N, z = 0.1, 20, 0.2
    x = N * z * z / t0
    direct = math.exp(-x) * sum(x**n / math.factorial(n) for n in range(N)) / (math.pi * t0)
    assert op.gaussian_density(t0, N, z) == pytest.approx(direct, rel=1e-13)


def test_gaussian_density_examples():
    t0 = 0.1
    target = 1 / (np.pi * t0)
    assert abs(op.gaussian_density(t0, 64, 0.0) - target) <= 0.02 * target
    assert op.gaussian_density(t0, 64, 1.3 * np.sqrt(t0)) <= 1e-3 * target
    ratio = op.gaussian_density(t0, 256, np.sqrt(t0)) / op.gaussian_density(t0, 256, 0.0)
    assert abs(ratio - 0.5) <= 0.05 * 0.5


def test_correlation_two_point(gaussian):
    pts = [0.05, -0.1j]
    K = op.kernel_matrix(gaussian, pts, pts)
    assert op.correlation(gaussian, pts) == pytest.approx((K[0, 0] * K[1, 1] - abs(K[0, 1]) ** 2).real, rel=1e-12)


# -- operators ---------------------------------------------------------------


def test_disc_operator_is_weighted_shift(disc):
    L, Ls, A = op.operator_matrices(disc)
    n = np.arange(disc.n_max)
    shift = np.sqrt(0.1 * (n + 1) / 24)
    M = L.matrix.copy()
    assert np.max(np.abs(np.diag(M, -1) - shift)) < 1e-12
    M[np.arange(1, disc.n_max + 1), n] = 0
    assert np.max(np.abs(M)) < 1e-12
    assert np.max(np.abs(Ls.matrix - L.matrix.conj().T)) == 0


@pytest.mark.parametrize("name", ["disc", "gaussian", "cubic"])
def test_band_and_bound(name, request):
    fam = request.getfixturevalue(name)
    L = op.operator_matrices(fam)[0]
    assert L.band_violation() <= 1e-8
    assert np.max(np.abs(L.matrix)) <= fam.grid.radius


def test_operator_identity_disc(disc):
    assert op.check_operator_identity(disc).residual <= 1e-8


@pytest.mark.parametrize("name", ["gaussian32", "cubic"])
def test_operator_identity(name, request):
    rep = op.check_operator_identity(request.getfixturevalue(name))
    assert rep.residual <= 1e-6
    assert rep.boundary_term < 1e-12


def test_operator_identity_grid_independent():
    pot = op.PotentialSpec.gaussian(0.1, 32, 0.2)
    a = op.check_operator_identity(make_family(pot, 24, 200, 256)).residual
    b = op.check_operator_identity(make_family(pot, 24, 300, 384)).residual
    assert max(a, b) <= 1e-6


def test_string_equation_disc(disc):
    rep = op.check_string_equation(disc)
    assert rep.diagonal_residual <= 1e-12 and rep.offdiagonal <= 1e-12


def test_string_equation_gaussian(gaussian):
    rep = op.check_string_equation(gaussian)
    assert rep.target == pytest.approx(0.1 / 24)
    assert rep.diagonal_residual <= 1e-6 and rep.offdiagonal <= 1e-6


def test_string_equation_cubic(cubic):
    assert op.check_string_equation(cubic).diagonal_residual <= 1e-5


def test_recursion_cubic(cubic):
    rep = op.recursion_coefficients(cubic)
    assert rep.residual_1 <= 1e-4 and rep.residual_2 <= 1e-4
    assert np.all(rep.r[1:] > 0)


def test_recursion_rejects_mixed_potential():
    fam = make_family(op.PotentialSpec(0.1, (0, 0.1, 0.03), 16), 16)
    with pytest.raises(ValueError):
        op.recursion_coefficients(fam)


# -- zeros -------------------------------------------------------------------


def test_disc_zeros_at_origin(disc):
    assert np.all(op.polynomial_zeros(disc, 7) == 0)


def test_gaussian_zeros_real_and_supported(gaussian32):
    n = 20
    zeros = op.polynomial_zeros(gaussian32, n)
    assert len(zeros) == n
    assert np.max(np.abs(zeros.imag)) <= 1e-8
    c = ZeroDensityLaw.gaussian(0.1, 0.2, n / 32).support_end
    assert np.max(np.abs(zeros.real)) <= c + 0.05


def test_gaussian_zeros_are_roots(gaussian32):
    n = 12
    zeros = op.polynomial_zeros(gaussian32, n)
    coeffs = gaussian32.monomial_coefficients(n)
    oracle = np.sort_complex(np.roots(coeffs[::-1]))
    assert np.max(np.abs(np.sort_complex(zeros) - oracle)) < 1e-8


def test_generic_zeros_by_aberth():
    fam = make_family(op.PotentialSpec(0.1, (0, 0.1 + 0.05j, 0.03), 16), 16)
    n = 10
    zeros = op.polynomial_zeros(fam, n)
    q = fam.evaluate(zeros, n)[n]
    assert np.max(np.abs(q)) < 1e-8 * np.max(np.abs(fam.evaluate(np.array([0.3]), n)[n]))


def test_cubic_zeros_on_rays(cubic30):
    zeros = op.polynomial_zeros(cubic30, 30)
    nz = zeros[np.abs(zeros) > 0]
    assert np.max(np.abs((nz**3).imag) / np.abs(nz) ** 3) <= 1e-6
    branch = np.round(np.angle(nz) / (2 * np.pi / 3)).astype(int) % 3
    assert np.all(np.abs(np.bincount(branch, minlength=3) - 10) <= 1)


def test_cubic_zero_counts_with_remainder(cubic30):
    zeros = op.polynomial_zeros(cubic30, 28)
    assert len(zeros) == 28
    assert np.count_nonzero(zeros == 0) == 1


def test_reduced_zeros_interlace(cubic30):
    for n in range(3, 31):
        rep = op.reduced_zero_report(cubic30, n)
        assert rep.ok, rep.to_json()


def test_reduced_zeros_rejects_generic():
    fam = make_family(op.PotentialSpec(0.1, (0, 0.1, 0.03), 16), 16)
    with pytest.raises(ValueError):
        op.reduced_zeros(fam, 4)


def test_zero_statistics_gaussian_ks():
    fam = make_family(op.PotentialSpec.gaussian(0.1, 40, 0.2), 40)
    stats = op.zero_statistics(op.polynomial_zeros(fam, 40), ZeroDensityLaw.gaussian(0.1, 0.2, 1.0))
    assert stats.ks <= 0.12 and stats.off_support == 0


def test_zero_statistics_ks_decreases():
    ks = []
    for n in (10, 20, 40):
        fam = make_family(op.PotentialSpec.gaussian(0.1, n, 0.2), n)
        ks.append(op.zero_statistics(op.polynomial_zeros(fam, n), ZeroDensityLaw.gaussian(0.1, 0.2)).ks)
    assert ks[0] > ks[1] > ks[2]


def test_zero_statistics_cubic(cubic30):
    stats = op.zero_statistics(op.polynomial_zeros(cubic30, 30), ZeroDensityLaw.cubic(0.05, 0.05))
    assert stats.off_support == 0 and stats.ks < 0.2


# -- level spacing -----------------------------------------------------------


@pytest.mark.parametrize("t0, x", [(1.0, 1.0), (0.1, 0.37), (2.0, 0.01)])
def test_level_spacing_single(t0, x):
    assert op.gaussian_level_spacing(t0, 1, x, 0) == pytest.approx(np.exp(-x / t0), rel=1e-14)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.05, 5.0), st.integers(1, 32), st.floats(0.0, 40.0))
def test_level_spacing_normalised(t0, N, x):
    table = op.gaussian_level_spacing(t0, N, x)
    assert abs(table.sum() - 1) <= 1e-12
    assert np.all(table >= 0)


def test_level_spacing_two_particle_integral():
    # direct integration of the N = 2 joint density over the disc and its complement
    t0, x, N = 1.0, 1.0, 2
    rad = np.sqrt(x / N)

    def p(r):
        return np.exp(-N * r * r / t0)

    # radial weights of the two orthonormal modes |z|^0 and |z|^2
    m0 = integrate.quad(lambda r: 2 * np.pi * r * p(r), 0, np.inf)[0]
    m1 = integrate.quad(lambda r: 2 * np.pi * r**3 * p(r), 0, np.inf)[0]
    in0 = integrate.quad(lambda r: 2 * np.pi * r * p(r), 0, rad)[0] / m0
    in1 = integrate.quad(lambda r: 2 * np.pi * r**3 * p(r), 0, rad)[0] / m1
    one = in0 * (1 - in1) + in1 * (1 - in0)
    assert op.gaussian_level_spacing(t0, N, x, 1) == pytest.approx(one, abs=1e-12)
    assert op.gaussian_level_spacing(t0, N, x, 1) == pytest.approx(level_spacing_bruteforce(t0, N, x)[1], abs=1e-6)


def test_level_spacing_three_particles_bruteforce():
    table = op.gaussian_level_spacing(0.5, 3, 0.4)
    assert np.max(np.abs(table - level_spacing_bruteforce(0.5, 3, 0.4))) <= 1e-6


def test_level_spacing_vanishing_disc():
    assert op.gaussian_level_spacing(1.0, 16, 0.0, 0) == 1.0


def test_level_spacing_large_disc():
    assert op.gaussian_level_spacing(0.1, 16, 50.0, 16) == pytest.approx(1.0, abs=1e-12)


def test_level_spacing_rejects_bad_n():
    with pytest.raises(ValueError):
        op.gaussian_level_spacing(1.0, 4, 1.0, 5)


# -- output ------------------------------------------------------------------


def test_csv_writers(tmp_path, cubic):
    op.write_norms_csv(tmp_path / "n.csv", cubic)
    op.write_recursion_csv(tmp_path / "r.csv", op.recursion_coefficients(cubic))
    op.write_zeros_csv(tmp_path / "z.csv", 6, op.polynomial_zeros(cubic, 6))
    norms = (tmp_path / "n.csv").read_text().splitlines()
    assert norms[0] == "n,h_n,log_h_n" and len(norms) == 26
    value = norms[5].split(",")[1]
    assert float(value) == pytest.approx(cubic.norms[4], rel=1e-16)
    assert len((tmp_path / "z.csv").read_text().splitlines()) == 7


def test_no_warnings_on_default_build():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        make_family(op.PotentialSpec.gaussian(0.1, 16, 0.2), 16)
