"""Dispersionless Toda checks on families of polynomial curves.

Curves are differentiated in moment space by central differences through
the full Newton inversion; derivatives in the complex moments t_k are
Wirtinger derivatives d/dt_k = (d/dRe t_k - i d/dIm t_k)/2.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .curvegeom import ConvergenceError, HarmonicMoments, PolynomialCurve, curve_from_moments, moments_of_curve

DISCARD_TOL = 1e-13
STENCIL_TOL = 1e-11


class WindowError(ValueError):
    """Series arithmetic would discard coefficients above the threshold."""


@dataclass(frozen=True)
class LaurentSeries:
    """f(w) = sum_k c_k w^k for k in [lo, lo + len(coeffs) - 1].

    ``discarded`` accumulates the largest coefficient magnitude dropped by
    truncation.
    """

    lo: int
    coeffs: np.ndarray
    discarded: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "coeffs", np.atleast_1d(np.asarray(self.coeffs, dtype=complex)))

    @classmethod
    def from_dict(cls, terms: dict[int, complex]) -> "LaurentSeries":
        if not terms:
            return cls(0, np.zeros(1))
        lo, hi = min(terms), max(terms)
        c = np.zeros(hi - lo + 1, dtype=complex)
        for k, v in terms.items():
            c[k - lo] += v
        return cls(lo, c)

    @classmethod
    def constant(cls, value: complex) -> "LaurentSeries":
        return cls(0, np.array([value]))

    @property
    def hi(self) -> int:
        return self.lo + len(self.coeffs) - 1

    def __getitem__(self, k: int) -> complex:
        i = k - self.lo
        return complex(self.coeffs[i]) if 0 <= i < len(self.coeffs) else 0j

    def to_dict(self, tol: float = 0.0) -> dict[int, complex]:
        return {self.lo + i: complex(c) for i, c in enumerate(self.coeffs) if abs(c) > tol}

    def _aligned(self, other: "LaurentSeries"):
        lo, hi = min(self.lo, other.lo), max(self.hi, other.hi)
        a = np.zeros(hi - lo + 1, dtype=complex)
        b = np.zeros_like(a)
        a[self.lo - lo : self.hi - lo + 1] = self.coeffs
        b[other.lo - lo : other.hi - lo + 1] = other.coeffs
        return lo, a, b

    def __add__(self, other):
        if not isinstance(other, LaurentSeries):
            other = LaurentSeries.constant(other)
        lo, a, b = self._aligned(other)
        return LaurentSeries(lo, a + b, max(self.discarded, other.discarded))

    __radd__ = __add__

    def __neg__(self):
        return LaurentSeries(self.lo, -self.coeffs, self.discarded)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, LaurentSeries):
            return LaurentSeries(self.lo + other.lo, np.convolve(self.coeffs, other.coeffs), max(self.discarded, other.discarded))
        return LaurentSeries(self.lo, self.coeffs * other, self.discarded)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return LaurentSeries(self.lo, self.coeffs / scalar, self.discarded)

    def __pow__(self, k: int):
        if k < 0:
            raise ValueError("only non-negative powers of a Laurent polynomial are finite")
        out = LaurentSeries.constant(1.0)
        for _ in range(k):
            out = out * self
        return out

    def w_derivative(self) -> "LaurentSeries":
        """w df/dw: c_k -> k c_k."""
        k = np.arange(self.lo, self.hi + 1)
        return LaurentSeries(self.lo, k * self.coeffs, self.discarded)

    def plus(self) -> "LaurentSeries":
        return self.window(1, max(self.hi, 1), strict=False)

    def zero(self) -> "LaurentSeries":
        return LaurentSeries.constant(self[0])

    def minus(self) -> "LaurentSeries":
        return self.window(min(self.lo, -1), -1, strict=False)

    def mirror(self) -> "LaurentSeries":
        """conj(f(1/conj w)): c_k -> conj(c_{-k})."""
        return LaurentSeries(-self.hi, np.conj(self.coeffs[::-1]), self.discarded)

    def window(self, lo: int, hi: int, strict: bool = True) -> "LaurentSeries":
        """Restrict to [lo, hi]; with ``strict`` the dropped mass is recorded."""
        c = np.zeros(hi - lo + 1, dtype=complex)
        dropped = 0.0
        for i, v in enumerate(self.coeffs):
            k = self.lo + i
            if lo <= k <= hi:
                c[k - lo] = v
            elif strict:
                dropped = max(dropped, abs(v))
        return LaurentSeries(lo, c, max(self.discarded, dropped))

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.coeffs), initial=0.0))

    def __call__(self, w):
        w = np.asarray(w, dtype=complex)
        k = np.arange(self.lo, self.hi + 1)
        return np.sum(self.coeffs[:, None] * w.ravel()[None, :] ** k[:, None], axis=0).reshape(w.shape)


def laurent_of_curve(curve: PolynomialCurve) -> tuple[LaurentSeries, LaurentSeries]:
    """z(w) = h(w) and ztilde(w) = conj(h(1/conj w))."""
    terms = {1: curve.r}
    for j, a in enumerate(curve.a):
        terms[-j] = terms.get(-j, 0) + a
    z = LaurentSeries.from_dict(terms)
    return z, z.mirror()


def toda_hamiltonian(z: LaurentSeries, k: int, window: int | None = None) -> LaurentSeries:
    """M_k = (z^k)_+ + (z^k)_0 / 2."""
    if k < 1:
        raise ValueError("flow index must be positive")
    zk = z**k
    if window is not None and (zk.hi > window or zk.lo < -window):
        raise WindowError(f"z^{k} exceeds the window [-{window}, {window}]")
    return zk.plus() + zk.zero() * 0.5


def toda_hamiltonian_conjugate(ztilde: LaurentSeries, k: int, window: int | None = None) -> LaurentSeries:
    """Mtilde_k = (ztilde^k)_- + (ztilde^k)_0 / 2."""
    if k < 1:
        raise ValueError("flow index must be positive")
    zk = ztilde**k
    if window is not None and (zk.hi > window or zk.lo < -window):
        raise WindowError(f"ztilde^{k} exceeds the window [-{window}, {window}]")
    return zk.minus() + zk.zero() * 0.5


@dataclass(frozen=True)
class T0Stencil:
    """A series sampled at t0 - eps, t0, t0 + eps."""

    minus: LaurentSeries
    center: LaurentSeries
    plus: LaurentSeries
    eps: float

    def map(self, fn) -> "T0Stencil":
        return T0Stencil(fn(self.minus), fn(self.center), fn(self.plus), self.eps)

    def __add__(self, other: "T0Stencil") -> "T0Stencil":
        return T0Stencil(self.minus + other.minus, self.center + other.center, self.plus + other.plus, self.eps)

    def __mul__(self, other: "T0Stencil") -> "T0Stencil":
        return T0Stencil(self.minus * other.minus, self.center * other.center, self.plus * other.plus, self.eps)

    def d_t0(self) -> LaurentSeries:
        return (self.plus - self.minus) / (2 * self.eps)

    @classmethod
    def frozen(cls, series: LaurentSeries, eps: float) -> "T0Stencil":
        """A t0-independent series."""
        return cls(series, series, series, eps)


def poisson_bracket(f: T0Stencil, g: T0Stencil) -> LaurentSeries:
    """{f, g} = w f_w g_{t0} - w f_{t0} g_w at the stencil centre."""
    if f.eps != g.eps:
        raise ValueError("stencils use different steps")
    return f.center.w_derivative() * g.d_t0() - f.d_t0() * g.center.w_derivative()


# ---------------------------------------------------------------------------
# stencils in moment space


def _shift(moments: HarmonicMoments, t0: float = 0.0, k: int = 0, dt: complex = 0j) -> HarmonicMoments:
    t = list(moments.t)
    if k:
        while len(t) < k:
            t.append(0j)
        t[k - 1] += dt
    return HarmonicMoments(moments.t0 + t0, tuple(t))


def _invert(moments: HarmonicMoments) -> PolynomialCurve:
    curve = curve_from_moments(moments)
    m = moments_of_curve(curve, max(moments.degree + 1, 1), method="residue")
    res = max(abs(m.t0 - moments.t0), max((abs(m.tk(k) - moments.tk(k)) for k in range(1, moments.degree + 2)), default=0.0))
    if res > STENCIL_TOL:
        raise ConvergenceError("stencil inversion above tolerance", res, 0)
    return curve


@dataclass
class FlowStencil:
    """Curves at t0 +- eps and t_k +- eps (real and imaginary directions)."""

    moments: HarmonicMoments
    k: int
    eps: float
    curves: dict[str, PolynomialCurve] = field(repr=False)

    @classmethod
    def build(cls, moments: HarmonicMoments, k: int, eps: float) -> "FlowStencil":
        if k < 1:
            raise ValueError("flow index must be positive")
        shifts = {
            "base": {},
            "t0+": {"t0": eps},
            "t0-": {"t0": -eps},
            "re+": {"k": k, "dt": eps},
            "re-": {"k": k, "dt": -eps},
            "im+": {"k": k, "dt": 1j * eps},
            "im-": {"k": k, "dt": -1j * eps},
        }
        curves = {name: _invert(_shift(moments, **kw)) for name, kw in shifts.items()}
        return cls(moments, k, eps, curves)

    def series(self, name: str) -> tuple[LaurentSeries, LaurentSeries]:
        return laurent_of_curve(self.curves[name])

    def t0_stencil(self, which: int) -> T0Stencil:
        """z (which=0) or ztilde (which=1) sampled in t0."""
        parts = [self.series(n)[which] for n in ("t0-", "base", "t0+")]
        return T0Stencil(*parts, self.eps)

    def d_tk(self, which: int, conjugate: bool = False) -> LaurentSeries:
        """Wirtinger derivative of z or ztilde in t_k (or conj t_k)."""
        d_re = (self.series("re+")[which] - self.series("re-")[which]) / (2 * self.eps)
        d_im = (self.series("im+")[which] - self.series("im-")[which]) / (2 * self.eps)
        return (d_re + 1j * d_im) * 0.5 if conjugate else (d_re - 1j * d_im) * 0.5


@dataclass
class FlowDefects:
    """Defect series of every equation checked at one step size."""

    z: LaurentSeries
    ztilde: LaurentSeries
    z_conj: LaurentSeries
    ztilde_conj: LaurentSeries
    string: LaurentSeries

    def combine(self, other: "FlowDefects", a: float, b: float) -> "FlowDefects":
        return FlowDefects(*(a * getattr(self, n) + b * getattr(other, n) for n in ("z", "ztilde", "z_conj", "ztilde_conj", "string")))


def flow_defects(stencil: FlowStencil) -> FlowDefects:
    k = stencil.k
    z = stencil.t0_stencil(0)
    zt = stencil.t0_stencil(1)
    M = z.map(lambda s: toda_hamiltonian(s, k))
    Mt = zt.map(lambda s: toda_hamiltonian_conjugate(s, k))
    return FlowDefects(
        z=stencil.d_tk(0) - poisson_bracket(M, z),
        ztilde=stencil.d_tk(1) - poisson_bracket(M, zt),
        z_conj=stencil.d_tk(0, conjugate=True) - poisson_bracket(z, Mt),
        ztilde_conj=stencil.d_tk(1, conjugate=True) - poisson_bracket(zt, Mt),
        string=poisson_bracket(z, zt) - 1.0,
    )


def default_epsilon(moments: HarmonicMoments, k: int) -> float:
    return 1e-4 * max(1.0, abs(moments.tk(k)))


@dataclass
class FlowReport:
    flow_k: int
    epsilon: float
    residual_z: float
    residual_ztilde: float
    residual_conjugate: float
    string_residual: float
    richardson: bool = True

    @property
    def max_flow_residual(self) -> float:
        return max(self.residual_z, self.residual_ztilde, self.residual_conjugate)

    def to_json(self) -> dict:
        return {
            "flow_k": self.flow_k,
            "epsilon": self.epsilon,
            "residual_z": self.residual_z,
            "residual_ztilde": self.residual_ztilde,
            "residual_conjugate": self.residual_conjugate,
            "string_residual": self.string_residual,
            "richardson": self.richardson,
        }


def verify_flow(moments: HarmonicMoments, k: int, eps: float | None = None, richardson: bool = True) -> FlowReport:
    """Residuals of dz/dt_k = {M_k, z} and companions, and of {z, ztilde} = 1.

    With ``richardson`` the defects at eps and eps/2 are combined as
    (4 D(eps/2) - D(eps)) / 3 before taking the largest coefficient.
    """
    eps = default_epsilon(moments, k) if eps is None else eps
    d = flow_defects(FlowStencil.build(moments, k, eps))
    if richardson:
        half = flow_defects(FlowStencil.build(moments, k, eps / 2))
        d = half.combine(d, 4 / 3, -1 / 3)
    return FlowReport(
        k,
        eps,
        d.z.max_abs(),
        d.ztilde.max_abs(),
        max(d.z_conj.max_abs(), d.ztilde_conj.max_abs()),
        d.string.max_abs(),
        richardson,
    )


def string_residual(moments: HarmonicMoments, eps: float = 1e-4, richardson: bool = True) -> float:
    """max |coefficient of {z, ztilde} - 1| from a t0 stencil."""

    def defect(e):
        curves = [_invert(_shift(moments, t0=s)) for s in (-e, 0.0, e)]
        z = T0Stencil(*(laurent_of_curve(c)[0] for c in curves), e)
        zt = T0Stencil(*(laurent_of_curve(c)[1] for c in curves), e)
        return poisson_bracket(z, zt) - 1.0

    d = defect(eps)
    if richardson:
        d = defect(eps / 2) * (4 / 3) - d * (1 / 3)
    return d.max_abs()
