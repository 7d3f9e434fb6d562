"""Schwarz functions of polynomial curves, closed forms and zero densities."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .curvegeom import (
    PolynomialCurve,
    critical_radius,
    eval_conjugate_map,
    eval_derivative,
    eval_map,
)
from .roots import polynomial_roots

CUT_OFFSET = 1e-7


class BranchError(ValueError):
    """Point lies on a branch cut or outside the region where S is single valued."""


@dataclass(frozen=True)
class SchwarzEvaluation:
    value: complex | np.ndarray
    branch_witness: complex | np.ndarray


@dataclass(frozen=True)
class ZeroDensityLaw:
    """Limiting zero density of the orthogonal polynomials at fill fraction x.

    family is ``"gaussian-ellipse"`` (params b1, b2) or ``"cubic-hypotrochoid"``
    (params r, a).
    """

    family: str
    params: tuple[float, float]
    x: float = 1.0

    def __post_init__(self):
        p, q = self.params
        if self.family == "gaussian-ellipse":
            if not p > q > 0:
                raise ValueError("ellipse law needs b1 > b2 > 0")
        elif self.family == "cubic-hypotrochoid":
            if not 0 < 2 * q < p:
                raise ValueError("hypotrochoid law needs 0 < 2a < r")
        else:
            raise ValueError(f"unknown family {self.family!r}")
        if not 0 < self.x <= 1:
            raise ValueError("fill fraction must lie in (0, 1]")

    @classmethod
    def gaussian(cls, t0: float, t2: float, x: float = 1.0) -> "ZeroDensityLaw":
        """Half-axes of the ellipse with area pi x t0 and second moment t2 > 0."""
        b1 = np.sqrt((1 + 2 * t2) / (1 - 2 * t2) * x * t0)
        b2 = np.sqrt((1 - 2 * t2) / (1 + 2 * t2) * x * t0)
        return cls("gaussian-ellipse", (float(b1), float(b2)), x)

    @classmethod
    def cubic(cls, t0: float, t3: float, x: float = 1.0) -> "ZeroDensityLaw":
        s = np.sqrt(1 - 72 * x * t0 * t3**2)
        r = np.sqrt(1 - s) / (6 * t3)
        a = (1 - s) / (12 * t3)
        return cls("cubic-hypotrochoid", (float(r), float(a)), x)

    @property
    def support_end(self) -> float:
        """Largest |z| on a support branch."""
        p, q = self.params
        if self.family == "gaussian-ellipse":
            return float(np.sqrt(p * p - q * q))
        return float((27 / 4 * q * p * p) ** (1 / 3))

    @property
    def branches(self) -> int:
        return 2 if self.family == "gaussian-ellipse" else 3

    def density(self, s):
        """Line density at support coordinate s (signed abscissa for the
        ellipse, distance from the origin along one ray for the hypotrochoid)."""
        p, q = self.params
        if self.family == "gaussian-ellipse":
            return ellipse_zero_density(p, q, s)
        return hypotrochoid_zero_density(p, q, s)

    def coordinate(self, zeros) -> np.ndarray:
        """Project zeros to the 1D support coordinate of the law."""
        zeros = np.asarray(zeros, dtype=complex)
        if self.family == "gaussian-ellipse":
            return zeros.real
        return np.abs(zeros)

    def cdf(self, u: float) -> float:
        """Distribution function in the support coordinate (adaptive quadrature)."""
        end = self.support_end
        if self.family == "gaussian-ellipse":
            u = min(max(u, -end), end)
            mass, _ = integrate.quad(self.density, -end, u, limit=200, epsabs=1e-13)
            return float(mass)
        u = min(max(u, 0.0), end)
        mass, _ = integrate.quad(self.density, 0.0, u, limit=200, epsabs=1e-13)
        return float(self.branches * mass)

    def on_support(self, zeros, tol: float) -> np.ndarray:
        """Mask of zeros within tol of the support graph."""
        zeros = np.asarray(zeros, dtype=complex)
        end = self.support_end
        if self.family == "gaussian-ellipse":
            return (np.abs(zeros.imag) <= tol) & (np.abs(zeros.real) <= end + tol)
        rays = np.exp(2j * np.pi * np.arange(3) / 3)
        proj = np.clip((zeros[:, None] * np.conj(rays)[None, :]).real, 0.0, end)
        dist = np.min(np.abs(zeros[:, None] - proj * rays[None, :]), axis=1)
        return dist <= tol


# ---------------------------------------------------------------------------
# generic evaluation


def invert_map(curve: PolynomialCurve, z, max_iter: int = 64):
    """Solve h(w) = z for the preimage with |w| > R.

    Newton from w0 = z/r first; points that fail fall back to the full root
    set of w^d (h(w) - z), from which the unique root outside the critical
    radius is selected.
    """
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    R = critical_radius(curve)
    w = z / curve.r
    ok = np.zeros(z.shape, dtype=bool)
    with np.errstate(all="ignore"):
        for _ in range(max_iter):
            f = eval_map(curve, w) - z
            step = f / eval_derivative(curve, w)
            w = w - step
            ok = np.isfinite(w) & (np.abs(step) <= 1e-15 * np.maximum(1.0, np.abs(w)))
            if ok.all():
                break
        resid = np.abs(eval_map(curve, w) - z)
    ok &= (np.abs(w) > R) & (resid <= 1e-12 * (1 + np.abs(z)))
    d = curve.degree
    for idx in np.flatnonzero(~ok):
        # r w^{d+1} + (a_0 - z) w^d + a_1 w^{d-1} + ... + a_d
        coeffs = np.concatenate([[curve.r, curve.coeff(0) - z[idx]], curve.coefficients()[1:]])
        roots = polynomial_roots(coeffs)
        outside = roots[np.abs(roots) > R * (1 + 1e-12)]
        if len(outside) != 1:
            raise BranchError(f"z = {z[idx]} is not in the image of |w| > R")
        w[idx] = outside[0]
    return w


def schwarz_eval(curve: PolynomialCurve, z) -> SchwarzEvaluation:
    """S(z) = conj(h)(1/h^{-1}(z)) on h(|w| > R)."""
    scalar = np.ndim(z) == 0
    w = invert_map(curve, z)
    value = eval_conjugate_map(curve, w)
    if scalar:
        return SchwarzEvaluation(complex(value[0]), complex(w[0]))
    return SchwarzEvaluation(value.reshape(np.shape(z)), w.reshape(np.shape(z)))


def schwarz_reflection(curve: PolynomialCurve, z):
    """rho(z) = conj(S(z))."""
    return np.conj(schwarz_eval(curve, z).value)


def laurent_tail(curve: PolynomialCurve, k_max: int, radius_factor: float = 1.5, nodes: int = 512):
    """Laurent coefficients of S at infinity read off as moment estimates.

    Returns ``(t_hat[1..d+1], t0_hat, v_hat[1..k_max])``.
    """
    if radius_factor <= 1:
        raise ValueError("radius_factor must exceed 1")
    boundary = eval_map(curve, np.exp(2j * np.pi * np.arange(1024) / 1024))
    rad = radius_factor * float(np.max(np.abs(boundary)))
    d = curve.degree
    z = rad * np.exp(2j * np.pi * np.arange(nodes) / nodes)
    S = schwarz_eval(curve, z).value

    def coeff(m):
        # coefficient of z^m: (1/2 pi i) contour S z^{-m-1} dz
        return np.mean(S * z ** (-m))

    t_hat = np.array([coeff(k - 1) / k for k in range(1, d + 2)])
    t0_hat = coeff(-1)
    v_hat = np.array([coeff(-k - 1) for k in range(1, k_max + 1)])
    return t_hat, complex(t0_hat), v_hat


# ---------------------------------------------------------------------------
# ellipse


def _ellipse_root(z, c):
    # z sqrt(1 - c^2/z^2) with cut on [-c, c], ~ z at infinity
    return np.sqrt(z - c) * np.sqrt(z + c)


def ellipse_schwarz(b1: float, b2: float, z):
    """Closed-form Schwarz function of the ellipse x^2/b1^2 + y^2/b2^2 = 1."""
    if not b1 > b2 > 0:
        raise ValueError("need b1 > b2 > 0")
    z = np.asarray(z, dtype=complex)
    c2 = b1 * b1 - b2 * b2
    c = np.sqrt(c2)
    if np.any((np.abs(z.imag) == 0) & (np.abs(z.real) < c)):
        raise BranchError("z lies on the focal segment")
    out = ((b1 * b1 + b2 * b2) * z - 2 * b1 * b2 * _ellipse_root(z, c)) / c2
    return out[()] if out.ndim == 0 else out


def ellipse_zero_density(b1: float, b2: float, y):
    """Semicircle density 2 sqrt(c^2 - y^2)/(c^2 pi) on [-c, c], c^2 = b1^2 - b2^2."""
    c2 = b1 * b1 - b2 * b2
    y = np.asarray(y, dtype=float)
    c = np.sqrt(c2)
    out = 2 * np.sqrt(np.clip((c - y) * (c + y), 0.0, None)) / (c2 * np.pi)
    return out[()] if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# hypotrochoid


def _cbrt(x):
    # principal cube root, argument in (-pi, pi]
    x = np.asarray(x, dtype=complex)
    return np.abs(x) ** (1 / 3) * np.exp(1j * np.angle(x) / 3)


def _omega(y):
    s = np.sqrt(1 - y + 0j)
    return _cbrt(1 - (2 / y) * (1 + s)) + _cbrt(1 - (2 / y) * (1 - s))


def hypotrochoid_schwarz(r: float, a: float, z):
    """Closed-form Schwarz function of h(w) = r w + a w^-2 (0 < 2a < r)."""
    if not 0 < 2 * a < r:
        raise ValueError("need 0 < 2a < r")
    z = np.asarray(z, dtype=complex)
    z3 = z**3
    on_cut = (np.abs(z3.imag) <= 1e-15 * np.abs(z3)) & (z3.real >= 0) & (z3.real <= 27 / 4 * a * r * r)
    if np.any(on_cut):
        raise BranchError("z lies on a branch cut of the hypotrochoid Schwarz function")
    zeta = z / (3 * r)
    om = _omega(4 * r * zeta**3 / a)
    out = ((a * a - r * r) * om**2 + (2 * a * a + r * r) * om + a * a + 2 * r * r) * zeta**2 / a
    return out[()] if out.ndim == 0 else out


def hypotrochoid_zero_density(r: float, a: float, s):
    """Line density of zeros at distance s along one branch z^3 in (0, 27 a r^2/4)."""
    s = np.asarray(s, dtype=float)
    end = (27 / 4 * a * r * r) ** (1 / 3)
    inside = (s > 0) & (s < end)
    ss = np.where(inside, s, end / 2)
    zeta = ss / (3 * r)
    y = 4 * r * zeta**3 / a
    root = np.sqrt(np.clip(1 - y, 0.0, None))
    wp = np.cbrt((2 / y) * (1 + root) - 1)
    wm = np.cbrt((2 / y) * (1 - root) - 1)
    rho = ((wp**2 - wm**2) * (r * r - a * a) - (wp - wm) * (r * r + 2 * a * a)) * np.sqrt(3) / (
        2 * np.pi * (r * r - 2 * a * a)
    )
    out = np.where(inside, rho * zeta**2 / a, 0.0)
    return out[()] if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# branch cuts


def branch_cut_check(delta_s, dalpha) -> float:
    """Max |Re(delta S(alpha(t)) alpha'(t))| over samples of a candidate cut.

    Zero-density edges must make this vanish: the zero mass on any piece of
    the cut, delta S dz / (2 pi i x t0), has to be real.
    """
    delta_s = np.asarray(delta_s, dtype=complex)
    dalpha = np.asarray(dalpha, dtype=complex)
    return float(np.max(np.abs((delta_s * dalpha).real)))


def cut_jump(schwarz, alpha, dalpha, offset: float = CUT_OFFSET):
    """Two-sided jump S(left) - S(right) across a cut, offset along the normal."""
    alpha = np.asarray(alpha, dtype=complex)
    normal = 1j * np.asarray(dalpha, dtype=complex) / np.abs(dalpha)
    return schwarz(alpha + offset * normal) - schwarz(alpha - offset * normal)


def ellipse_branch_jump(b1: float, b2: float, z):
    """Difference of the two algebraic branches of the ellipse Schwarz function.

    Any cut joining the foci carries this jump (up to sign), so it can be
    sampled on arbitrary candidate paths.
    """
    c2 = b1 * b1 - b2 * b2
    z = np.asarray(z, dtype=complex)
    return 4 * b1 * b2 * np.sqrt(z * z - c2 + 0j) / c2


def segment(p0: complex, p1: complex):
    """Straight path t -> (alpha, alpha') from p0 to p1, t in [0, 1]."""
    def path(t):
        t = np.asarray(t, dtype=float)
        return p0 + (p1 - p0) * t, np.full(t.shape, p1 - p0, dtype=complex)
    return path


def arc(p0: complex, p1: complex, bulge: float):
    """Circular-ish arc from p0 to p1 bowed sideways by ``bulge`` at the midpoint."""
    chord = p1 - p0
    side = 1j * chord / abs(chord)

    def path(t):
        t = np.asarray(t, dtype=float)
        s = 4 * t * (1 - t)
        return p0 + chord * t + bulge * side * s, chord + bulge * side * (4 - 8 * t)
    return path


def write_density_csv(path, law: ZeroDensityLaw, samples: int = 200) -> None:
    """CSV with columns branch_index, arclength, re_z, im_z, density."""
    end = law.support_end
    s = np.linspace(0.0, end, samples)
    dens = law.density(s)
    if law.family == "gaussian-ellipse":
        directions = [1.0, -1.0]
    else:
        directions = [np.exp(2j * np.pi * k / 3) for k in range(3)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["branch_index", "arclength", "re_z", "im_z", "density"])
        for b, u in enumerate(directions):
            for si, di in zip(s, dens):
                z = si * u
                writer.writerow([b, f"{si:.17g}", f"{z.real:.17g}", f"{z.imag:.17g}", f"{float(di):.17g}"])
