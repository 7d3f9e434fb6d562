"""The twelve acceptance criteria as callable checks.

Each check returns a :class:`Criterion` carrying the measured quantities and
the thresholds; ``nmm check`` and the test-suite both run them.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import gas, orthopoly as op, schwarz, toda
from .curvegeom import HarmonicMoments, PolynomialCurve, curve_from_moments, interior_moments, moments_of_curve, validate_curve

ELLIPSE = HarmonicMoments(0.21, (0j, 0.2 + 0j))
HYPOTROCHOID = HarmonicMoments(0.088542, (0j, 0j, 0.1 + 0j))


@dataclass
class Criterion:
    number: int
    name: str
    passed: bool
    details: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        info = ", ".join(f"{k}={_short(v)}" for k, v in self.details.items())
        return f"[{status}] criterion {self.number:2d} {self.name} ({self.seconds:.1f}s): {info}"

    def to_json(self) -> dict:
        return {"number": self.number, "name": self.name, "passed": self.passed, "seconds": self.seconds,
                "details": {k: _plain(v) for k, v in self.details.items()}}


def _short(v):
    if isinstance(v, float):
        return f"{v:.3g}"
    return str(v)


def _plain(v):
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    return v


def _timed(number, name, fn):
    t = time.perf_counter()
    passed, details = fn()
    return Criterion(number, name, bool(passed), details, time.perf_counter() - t)


# ---------------------------------------------------------------------------
# 1-4: curves, Schwarz function, Toda


def random_valid_curves(count: int, seed: int = 1) -> list[PolynomialCurve]:
    """Curves with r in [0.05, 0.5], degree 1..3 and |a_j| <= 0.2 r, rejection-sampled."""
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        d = int(rng.integers(1, 4))
        r = float(rng.uniform(0.05, 0.5))
        a = tuple(0.2 * r * np.sqrt(rng.random()) * np.exp(2j * np.pi * rng.random()) for _ in range(d + 1))
        curve = PolynomialCurve(r, a)
        if validate_curve(curve).valid:
            out.append(curve)
    return out


def criterion_1():
    curves = random_valid_curves(200)
    t = time.perf_counter()
    worst = 0.0
    for c in curves:
        back = curve_from_moments(moments_of_curve(c, c.degree + 1))
        err = max([abs(back.r - c.r)] + [abs(back.coeff(j) - c.coeff(j)) for j in range(max(c.degree, back.degree) + 1)])
        worst = max(worst, err)
    elapsed = time.perf_counter() - t
    return worst <= 1e-8 and elapsed < 30, {"max_error": worst, "seconds": elapsed}


def criterion_2():
    curve = curve_from_moments(HarmonicMoments(0.25, (0j,)).lowered())
    rng = np.random.default_rng(2)
    z = rng.uniform(0.6, 3.0, 64) * np.exp(2j * np.pi * rng.random(64))
    err = max(abs(schwarz.schwarz_eval(curve, p).value - 0.25 / p) for p in z)
    return err <= 1e-12, {"max_error": err}


def criterion_3():
    worst = 0.0
    for m in (ELLIPSE, HYPOTROCHOID):
        curve = curve_from_moments(m)
        d = curve.degree
        ref = moments_of_curve(curve, d + 1)
        v = interior_moments(curve, 5).v
        t_hat, t0_hat, v_hat = schwarz.laurent_tail(curve, 5)
        errs = [abs(t0_hat - ref.t0)] + [abs(t_hat[k - 1] - ref.tk(k)) for k in range(1, d + 2)]
        errs += [abs(v_hat[k] - v[k]) for k in range(5)]
        worst = max(worst, max(errs))
    return worst <= 1e-10, {"max_error": worst}


def criterion_4():
    string = max(toda.string_residual(m) for m in (ELLIPSE, HYPOTROCHOID))
    flow = 0.0
    for m in (ELLIPSE, HYPOTROCHOID):
        for k in range(1, m.degree + 2):
            flow = max(flow, toda.verify_flow(m, k).max_flow_residual)
    return string <= 1e-7 and flow <= 1e-6, {"string_residual": string, "flow_residual": flow}


# ---------------------------------------------------------------------------
# 5-8: orthogonal polynomials


def family(potential: op.PotentialSpec, n_max: int, n_r: int = 200, n_theta: int = 256) -> op.OrthogonalFamily:
    grid = op.build_grid(op.default_cutoff(potential, n_max), n_r, n_theta)
    return op.build_family(potential, grid, n_max)


def criterion_5():
    t = time.perf_counter()
    t0, t2, N = 0.1, 0.2, 32
    fam = family(op.PotentialSpec.gaussian(t0, N, t2), N)
    rec = op.recursion_coefficients(fam)
    n = np.arange(1, 25)
    exact = np.sqrt(t0 * n / (N * (1 - 4 * t2**2)))
    rel = float(np.max(np.abs(rec.r[1:25] - exact) / exact))
    elapsed = time.perf_counter() - t
    return rel <= 1e-5 and elapsed < 120, {"max_relative_error": rel, "seconds": elapsed}


def criterion_6():
    g = op.check_string_equation(family(op.PotentialSpec.gaussian(0.1, 24, 0.2), 24))
    c = op.check_string_equation(family(op.PotentialSpec.monomial(0.05, 24, 3, 0.05), 24))
    return g.diagonal_residual <= 1e-5 and c.diagonal_residual <= 1e-4, {
        "gaussian_diagonal": g.diagonal_residual,
        "cubic_diagonal": c.diagonal_residual,
    }


def reference_potentials(N: int = 24) -> dict[str, op.PotentialSpec]:
    return {
        "disc": op.PotentialSpec(0.1, (), N),
        "gaussian": op.PotentialSpec.gaussian(0.1, N, 0.2),
        "cubic": op.PotentialSpec.monomial(0.05, N, 3, 0.05),
    }


def kernel_identities(fam: op.OrthogonalFamily, pairs: int = 10, seed: int = 4) -> tuple[float, float]:
    """Relative errors of the trace-N and reproducing identities on the grid."""
    g = fam.grid
    N = fam.N
    k_diag = op.one_point_density(fam, g.nodes) * N
    trace = abs(float(np.sum(g.weights * k_diag)) - N) / N
    rng = np.random.default_rng(seed)
    scale = np.sqrt(fam.potential.t0)
    w = scale * np.sqrt(rng.random(pairs)) * np.exp(2j * np.pi * rng.random(pairs))
    z = scale * np.sqrt(rng.random(pairs)) * np.exp(2j * np.pi * rng.random(pairs))
    Kwv = op.kernel_matrix(fam, w, g.nodes)
    Kvz = op.kernel_matrix(fam, g.nodes, z)
    lhs = np.einsum("iv,v,vi->i", Kwv, g.weights, Kvz)
    rhs = op.kernel(fam, w, z)
    norm = np.sqrt(np.real(op.kernel(fam, w, w)) * np.real(op.kernel(fam, z, z)))
    repro = float(np.max(np.abs(lhs - rhs) / norm))
    return trace, repro


def criterion_7():
    details = {}
    ok = True
    for name, pot in reference_potentials().items():
        trace, repro = kernel_identities(family(pot, 24))
        details[f"{name}_trace"] = trace
        details[f"{name}_reproducing"] = repro
        ok &= trace <= 1e-6 and repro <= 1e-6
    return ok, details


def criterion_8():
    t0, N = 0.1, 256
    target = 1 / (np.pi * t0)
    centre = op.gaussian_density(t0, N, 0.0)
    edge = op.gaussian_density(t0, N, np.sqrt(t0))
    dev = abs(centre - target) / target
    ratio = edge / centre
    return dev <= 0.02 and abs(ratio - 0.5) <= 0.05, {"centre_deviation": dev, "edge_ratio": ratio}


# ---------------------------------------------------------------------------
# 9: level spacing


def level_spacing_bruteforce(t0: float, N: int, x: float, radial: int = 40, angular: int = 8) -> np.ndarray:
    """A_N(n) by direct quadrature of the joint eigenvalue density.

    Polar coordinates for each eigenvalue; every radius runs over Gauss-Legendre
    nodes on [0, lam] and [lam, R] with lam = sqrt(x/N), and every angle but
    the first over a trapezoid rule, which is exact for the trigonometric
    polynomial |Vandermonde|^2.  Only for N <= 3.
    """
    if N > 3:
        raise ValueError("brute-force quadrature is limited to N <= 3")
    lam = np.sqrt(x / N)
    rmax = np.sqrt(60 * t0 / N)
    xg, wg = np.polynomial.legendre.leggauss(radial)
    r_in = lam * (xg + 1) / 2
    w_in = wg * lam / 2
    r_out = lam + (rmax - lam) * (xg + 1) / 2
    w_out = wg * (rmax - lam) / 2
    r = np.concatenate([r_in, r_out])
    wr = np.concatenate([w_in, w_out]) * r * np.exp(-N * r**2 / t0)
    inside = np.concatenate([np.ones(radial, int), np.zeros(radial, int)])
    phi = 2 * np.pi * np.arange(angular) / angular
    out = np.zeros(N + 1)
    if N == 1:
        np.add.at(out, inside, wr)
        return out / out.sum()
    grids = np.meshgrid(*([np.arange(2 * radial)] * N), indexing="ij")
    idx = [g.ravel() for g in grids]
    count = sum(inside[i] for i in idx)
    weight = np.prod([wr[i] for i in idx], axis=0)
    vand = np.zeros(len(idx[0]))
    angles = np.meshgrid(*([phi] * (N - 1)), indexing="ij")
    angles = [np.zeros_like(angles[0].ravel())] + [a.ravel() for a in angles]
    for combo in range(len(angles[0])):
        pts = [r[i] * np.exp(1j * angles[k][combo]) for k, i in enumerate(idx)]
        v = np.ones(len(idx[0]))
        for a in range(N):
            for b in range(a + 1, N):
                v = v * np.abs(pts[a] - pts[b]) ** 2
        vand += v
    np.add.at(out, count, weight * vand)
    return out / out.sum()


def criterion_9(sweeps: int = 100_000):
    brute = 0.0
    for N in (2, 3):
        exact = op.gaussian_level_spacing(1.0, N, 1.0)
        brute = max(brute, float(np.max(np.abs(level_spacing_bruteforce(1.0, N, 1.0) - exact))))
    total = abs(float(op.gaussian_level_spacing(1.0, 16, 1.0).sum()) - 1)
    mc = gas.level_spacing_mc(1.0, 16, 1.0, sweeps, sweeps // 10, seed=3)
    exact16 = op.gaussian_level_spacing(1.0, 16, 1.0)
    z = np.abs(mc.probabilities[:5] - exact16[:5]) / mc.stderr[:5]
    sigma = float(np.max(z))
    return brute <= 1e-6 and total <= 1e-12 and sigma <= 3, {"bruteforce_error": brute, "sum_error": total, "mc_max_sigma": sigma}


# ---------------------------------------------------------------------------
# 10-12: Coulomb gas, effective field, zeros


def exact_interior_mass(t0: float, t2: float, N: int, n_r: int = 200, n_theta: int = 256) -> float:
    """Finite-N expected fraction of eigenvalues inside the droplet, from the kernel."""
    pot = op.PotentialSpec.gaussian(t0, N, t2)
    fam = family(pot, N - 1, n_r, n_theta)
    curve = curve_from_moments(HarmonicMoments(t0, (0j, t2)))
    g = fam.grid
    inside = gas.points_inside(gas.boundary_polyline(curve), g.nodes)
    rho = op.one_point_density(fam, g.nodes)
    return float(np.sum(g.weights * rho * inside))


def criterion_10(sweeps: int = 200_000):
    t0, t2, N = 0.1, 0.2, 32
    t = time.perf_counter()
    pot = op.PotentialSpec.gaussian(t0, N, t2)
    run = gas.mcmc_run(pot, sweeps, sweeps // 10, seed=7)
    elapsed = time.perf_counter() - t
    curve = curve_from_moments(HarmonicMoments(t0, (0j, t2)))
    rep = gas.density_compare(run.measure, curve, t0, N)
    v2 = interior_moments(curve, 2).v[1]
    m2, se2 = run.m_hat[1], run.m_se[1]
    sigma = float(max(abs((m2 - v2).real) / se2.real, abs((m2 - v2).imag) / se2.imag))
    passed = rep.interior_mass >= 0.97 and rep.max_relative_deviation <= 0.10 and sigma <= 3 and elapsed < 300
    return passed, {
        "interior_mass": rep.interior_mass,
        "exact_finite_N_mass": exact_interior_mass(t0, t2, N),
        "max_bin_deviation": rep.max_relative_deviation,
        "interior_bins": rep.interior_bins,
        "m2_sigma": sigma,
        "seconds": elapsed,
    }


def criterion_11():
    t0, t2 = 0.1, 0.2
    curve = curve_from_moments(HarmonicMoments(t0, (0j, t2)))
    pot = op.PotentialSpec.gaussian(t0, 32, t2)
    grid = gas.FieldGrid.build(curve, 1200)
    interior = [0.0, 0.1, 0.05 + 0.1j, -0.2 + 0.03j, 0.25 - 0.05j]
    exterior = [0.7, 0.5 + 0.4j, -0.6 - 0.1j, 0.45j, 1.0 + 1.0j]
    e_in = max(abs(gas.effective_field(curve, pot, z, grid).value) for z in interior)
    g_out = max(gas.effective_field(curve, pot, z, grid).gradient_residual for z in exterior)
    return e_in <= 5e-3 and g_out <= 1e-3, {"max_interior_field": e_in, "max_gradient_residual": g_out}


def criterion_12():
    t0, t2 = 0.1, 0.2
    fam = family(op.PotentialSpec.gaussian(t0, 40, t2), 40)
    zeros = op.polynomial_zeros(fam, 40)
    imag = float(np.max(np.abs(zeros.imag)))
    ks = op.zero_statistics(zeros, schwarz.ZeroDensityLaw.gaussian(t0, t2, 1.0)).ks

    cubic = family(op.PotentialSpec.monomial(0.05, 30, 3, 0.05), 30)
    cz = op.polynomial_zeros(cubic, 30)
    nz = cz[np.abs(cz) > 0]
    ray = float(np.max(np.abs((nz**3).imag) / np.abs(nz) ** 3))
    branch = np.round(np.angle(nz) / (2 * np.pi / 3)).astype(int) % 3
    counts = np.bincount(branch, minlength=3)
    reduced = all(op.reduced_zero_report(cubic, n).ok for n in range(3, 31))

    s = np.linspace(0.01, 0.99, 200)
    b1, b2 = 0.7, 0.3
    c = np.sqrt(b1**2 - b2**2)
    alpha, dalpha = schwarz.segment(-c, c)(s)
    cut_e = schwarz.branch_cut_check(schwarz.cut_jump(lambda z: schwarz.ellipse_schwarz(b1, b2, z), alpha, dalpha), dalpha)
    r, a = 0.3, 0.027
    end = (27 / 4 * a * r * r) ** (1 / 3)
    alpha, dalpha = schwarz.segment(0, end)(s)
    cut_h = schwarz.branch_cut_check(schwarz.cut_jump(lambda z: schwarz.hypotrochoid_schwarz(r, a, z), alpha, dalpha), dalpha)
    passed = (
        imag <= 1e-8 and ks <= 0.12 and ray <= 1e-6 and np.all(np.abs(counts - 10) <= 1) and reduced
        and cut_e <= 1e-8 and cut_h <= 1e-8
    )
    return passed, {
        "gaussian_max_imag": imag,
        "gaussian_ks": ks,
        "cubic_ray_deviation": ray,
        "cubic_branch_counts": counts.tolist(),
        "reduced_zeros_ok": reduced,
        "ellipse_cut": cut_e,
        "hypotrochoid_cut": cut_h,
    }


CRITERIA = [
    (1, "moment round trip", criterion_1),
    (2, "circle Schwarz law", criterion_2),
    (3, "Laurent consistency", criterion_3),
    (4, "dispersionless string equation and flows", criterion_4),
    (5, "Gaussian recursion", criterion_5),
    (6, "finite-N string equation", criterion_6),
    (7, "kernel identities", criterion_7),
    (8, "Gaussian density profile", criterion_8),
    (9, "level spacing", criterion_9),
    (10, "equilibrium measure (Monte Carlo)", criterion_10),
    (11, "effective field", criterion_11),
    (12, "zero laws and branch cuts", criterion_12),
]


def run_criterion(number: int, quick: bool = False) -> Criterion:
    _, name, fn = CRITERIA[number - 1]
    if quick and number == 9:
        return _timed(number, name, lambda: criterion_9(20_000))
    if quick and number == 10:
        return _timed(number, name, lambda: criterion_10(40_000))
    return _timed(number, name, fn)


def run_all(quick: bool = False) -> list[Criterion]:
    return [run_criterion(n, quick) for n, _, _ in CRITERIA]
