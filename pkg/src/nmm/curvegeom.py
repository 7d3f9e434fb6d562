"""Polynomial curves h(w) = r w + sum_j a_j w^-j and their harmonic moments.

A curve is stored by its conformal-map coefficients; the exterior moments
``t_k`` and the area ``pi t0`` form the coordinate system in which the
matrix model is parametrised.  The forward map (curve -> moments) is
available both as a trapezoid contour integral and as an exact
residue-at-infinity expansion; the inverse map is a damped Newton solve.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .roots import polynomial_roots

DEFAULT_NODES = 512
MAX_NODES = 2**16
CONTOUR_TOL = 1e-12


class CurveError(ValueError):
    """Invalid curve data or a failed geometric precondition."""


class ConvergenceError(RuntimeError):
    """Newton inversion failed; carries the last residual."""

    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(f"{message} (residual={residual:.3e}, iterations={iterations})")
        self.residual = residual
        self.iterations = iterations


def _trim(values: Sequence[complex], keep: int) -> tuple[complex, ...]:
    vals = [complex(v) for v in values]
    while len(vals) > keep and vals[-1] == 0:
        vals.pop()
    return tuple(vals)


@dataclass(frozen=True)
class PolynomialCurve:
    """Conformal map h(w) = r w + a_0 + a_1/w + ... + a_d/w^d."""

    r: float
    a: tuple[complex, ...] = ()

    def __post_init__(self):
        if not np.isfinite(self.r) or self.r <= 0:
            raise CurveError(f"leading radius must be positive, got {self.r}")
        a = _trim(self.a, 0)
        if not all(np.isfinite(x) for x in a):
            raise CurveError("non-finite coefficient")
        object.__setattr__(self, "r", float(self.r))
        object.__setattr__(self, "a", a)

    @property
    def degree(self) -> int:
        return max(len(self.a) - 1, 0)

    def coeff(self, j: int) -> complex:
        return self.a[j] if j < len(self.a) else 0j

    def coefficients(self) -> np.ndarray:
        """a_0..a_d as an array (length d+1)."""
        return np.array([self.coeff(j) for j in range(self.degree + 1)], dtype=complex)

    def scaled(self, lam: float) -> "PolynomialCurve":
        return PolynomialCurve(lam * self.r, tuple(lam * x for x in self.a))

    def to_json(self) -> dict:
        return {"r": self.r, "a": [[x.real, x.imag] for x in self.coefficients()], "degree": self.degree}

    @classmethod
    def from_json(cls, data: dict) -> "PolynomialCurve":
        return cls(float(data["r"]), tuple(complex(re, im) for re, im in data.get("a", [])))


@dataclass(frozen=True)
class HarmonicMoments:
    """Area t0 (in units of pi) and exterior moments t_1..t_{d+1}."""

    t0: float
    t: tuple[complex, ...] = (0j,)

    def __post_init__(self):
        if not np.isfinite(self.t0) or self.t0 <= 0:
            raise CurveError(f"t0 must be positive, got {self.t0}")
        t = tuple(complex(x) for x in self.t) or (0j,)
        object.__setattr__(self, "t0", float(self.t0))
        object.__setattr__(self, "t", t)

    @property
    def degree(self) -> int:
        return len(self.t) - 1

    def tk(self, k: int) -> complex:
        if k == 0:
            return complex(self.t0)
        return self.t[k - 1] if 1 <= k <= len(self.t) else 0j

    def lowered(self, tol: float = 0.0) -> "HarmonicMoments":
        """Drop trailing moments with modulus <= tol (lowers d)."""
        t = list(self.t)
        while len(t) > 1 and abs(t[-1]) <= tol:
            t.pop()
        return HarmonicMoments(self.t0, tuple(t))

    def as_vector(self) -> np.ndarray:
        return np.concatenate([[self.t0], np.asarray(self.t, dtype=complex)])

    def to_json(self) -> dict:
        return {"t0": self.t0, "t": [[x.real, x.imag] for x in self.t], "degree": self.degree}

    @classmethod
    def from_json(cls, data: dict) -> "HarmonicMoments":
        return cls(float(data["t0"]), tuple(complex(re, im) for re, im in data.get("t", [[0, 0]])))


@dataclass(frozen=True)
class InteriorMoments:
    v: tuple[complex, ...]

    def to_json(self) -> dict:
        return {"v": [[x.real, x.imag] for x in self.v]}


# ---------------------------------------------------------------------------
# evaluation


def eval_map(curve: PolynomialCurve, w):
    """h(w); raises on w = 0 for curves with a pole there."""
    w = np.asarray(w, dtype=complex)
    if curve.degree >= 1 and np.any(w == 0):
        raise CurveError("h has a pole at w = 0")
    out = curve.r * w + curve.coeff(0)
    for j in range(1, curve.degree + 1):
        out = out + curve.a[j] * w ** (-j)
    return out[()] if out.ndim == 0 else out


def eval_derivative(curve: PolynomialCurve, w):
    w = np.asarray(w, dtype=complex)
    out = np.full_like(w, curve.r)
    for j in range(1, curve.degree + 1):
        out = out - j * curve.a[j] * w ** (-j - 1)
    return out[()] if out.ndim == 0 else out


def eval_conjugate_map(curve: PolynomialCurve, w):
    """conj(h)(1/w) = r/w + sum conj(a_j) w^j; equals conj(h(w)) on |w| = 1."""
    w = np.asarray(w, dtype=complex)
    out = curve.r / w
    for j in range(curve.degree + 1):
        out = out + np.conj(curve.coeff(j)) * w**j
    return out[()] if out.ndim == 0 else out


def critical_radius(curve: PolynomialCurve) -> float:
    """Largest modulus of a critical point of h in C*."""
    d = curve.degree
    a = curve.coefficients()
    if d == 0 or not np.any(a[1:]):
        return 0.0
    # w^{d+1} h'(w) = r w^{d+1} - sum_j j a_j w^{d-j}
    coeffs = np.zeros(d + 2, dtype=complex)
    coeffs[0] = curve.r
    for j in range(1, d + 1):
        coeffs[1 + j] = -j * a[j]
    return float(np.max(np.abs(polynomial_roots(coeffs))))


# ---------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class ValidationReport:
    valid: bool
    critical_radius: float
    min_chord_ratio: float
    self_intersections: int
    tangent_winding: int
    origin_winding: int
    reason: str | None = None

    @property
    def encloses_origin(self) -> bool:
        return self.origin_winding == 1

    def to_json(self) -> dict:
        return {
            "valid": self.valid,
            "critical_radius": self.critical_radius,
            "min_chord_ratio": self.min_chord_ratio,
            "self_intersections": self.self_intersections,
            "tangent_winding": self.tangent_winding,
            "origin_winding": self.origin_winding,
            "reason": self.reason,
        }


def _winding(values: np.ndarray) -> int:
    arg = np.angle(np.concatenate([values, values[:1]]))
    return int(round(np.sum(np.angle(np.exp(1j * np.diff(arg)))) / (2 * np.pi)))


def _count_crossings(pts: np.ndarray) -> int:
    # proper crossings between non-adjacent segments of a closed polyline
    p = pts
    q = np.roll(pts, -1)
    n = len(p)
    d = q - p

    def cross(u, v):
        return u.real * v.imag - u.imag * v.real

    i, j = np.triu_indices(n, k=2)
    keep = ~((i == 0) & (j == n - 1))
    i, j = i[keep], j[keep]
    count = 0
    for start in range(0, len(i), 200_000):
        ii, jj = i[start:start + 200_000], j[start:start + 200_000]
        o1 = cross(d[ii], p[jj] - p[ii])
        o2 = cross(d[ii], q[jj] - p[ii])
        o3 = cross(d[jj], p[ii] - p[jj])
        o4 = cross(d[jj], q[ii] - p[jj])
        count += int(np.count_nonzero((o1 * o2 < 0) & (o3 * o4 < 0)))
    return count


def validate_curve(curve: PolynomialCurve, samples: int = 512, chord_tol: float = 1e-9) -> ValidationReport:
    """Numerical check that h parametrises a positively oriented simple curve."""
    d = curve.degree
    if samples < 8 * (d + 1):
        raise CurveError(f"need at least {8 * (d + 1)} samples, got {samples}")
    theta = 2 * np.pi * np.arange(samples) / samples
    w = np.exp(1j * theta)
    z = eval_map(curve, w)
    R = critical_radius(curve)
    tangent = 1j * w * eval_derivative(curve, w)

    i, j = np.triu_indices(samples, k=1)
    ratio = float(np.min(np.abs(z[i] - z[j]) / np.abs(w[i] - w[j]))) / curve.r
    crossings = _count_crossings(z)
    tw = _winding(tangent) if np.all(np.abs(tangent) > 0) else 0
    ow = _winding(z) if np.all(np.abs(z) > 0) else 0

    reason = None
    if R >= 1:
        reason = f"critical radius {R:.6g} >= 1"
    elif ratio <= chord_tol:
        reason = "h is not injective on the unit circle"
    elif crossings:
        reason = f"boundary polyline self-intersects ({crossings} crossings)"
    elif tw != 1:
        reason = f"tangent winding number is {tw}, expected +1"
    return ValidationReport(reason is None, R, ratio, crossings, tw, ow, reason)


# ---------------------------------------------------------------------------
# forward map


def _trapezoid(integrand, radius: float = 1.0, nodes: int = DEFAULT_NODES, tol: float = CONTOUR_TOL):
    """(1/2 pi i) contour integral over |w| = radius, node count auto-doubled.

    ``integrand(w)`` returns an array whose last axis indexes the nodes.
    Returns ``(value, nodes_used)``.
    """
    def rule(m):
        w = radius * np.exp(2j * np.pi * np.arange(m) / m)
        return np.mean(integrand(w) * w, axis=-1)

    m = nodes
    prev = rule(m)
    while m < MAX_NODES:
        m *= 2
        cur = rule(m)
        if np.max(np.abs(cur - prev)) <= tol:
            return cur, m
        prev = cur
    return prev, m


def _series_inverse_power(u: np.ndarray, k: int, order: int) -> np.ndarray:
    """Coefficients of (1 + u(x))^{-k} up to x^order, u given with u[0] = 0."""
    base = np.zeros(order + 1, dtype=complex)
    base[0] = 1.0
    base[1:] = u[1:order + 1]
    # inverse of 1 + u by recursion
    inv = np.zeros(order + 1, dtype=complex)
    inv[0] = 1.0
    for n in range(1, order + 1):
        inv[n] = -np.dot(base[1:n + 1], inv[n - 1::-1][:n])
    out = np.zeros(order + 1, dtype=complex)
    out[0] = 1.0
    for _ in range(k):
        out = np.convolve(out, inv)[:order + 1]
    return out


def _moments_residue(curve: PolynomialCurve, k_max: int) -> tuple[float, np.ndarray]:
    """Exact expansion at w = infinity (series in x = 1/w)."""
    d = curve.degree
    r = curve.r
    a = curve.coefficients()
    order = d + 2
    # h'(w) = r - sum j a_j x^{j+1}
    hp = np.zeros(order + 1, dtype=complex)
    hp[0] = r
    for j in range(1, d + 1):
        hp[j + 1] -= j * a[j]
    # h(w) = r w (1 + u),  u = sum (a_j/r) x^{j+1}
    u = np.zeros(order + 1, dtype=complex)
    for j in range(d + 1):
        u[j + 1] = a[j] / r
    t0 = (r * hp[0] + sum(np.conj(a[j]) * hp[j + 1] for j in range(d + 1))).real
    t = np.zeros(k_max, dtype=complex)
    for k in range(1, min(k_max, d + 1) + 1):
        # P(x) = h'(w) h(w)^{-k} = r^{-k} x^k hp(x) (1+u)^{-k}
        inner = np.convolve(hp, _series_inverse_power(u, k, order))[:order + 1]
        P = np.zeros(order + k + 1, dtype=complex)
        P[k:k + order + 1] = inner * r ** (-k)
        val = sum(np.conj(a[j]) * P[1 + j] for j in range(d + 1) if 1 + j < len(P))
        t[k - 1] = val / k
    return float(t0), t


def moments_of_curve(
    curve: PolynomialCurve,
    k_max: int | None = None,
    method: str = "contour",
    shifted: bool = False,
    nodes: int = DEFAULT_NODES,
) -> HarmonicMoments:
    """Exterior harmonic moments t_1..t_{k_max} and area parameter t0.

    ``method="contour"`` integrates conj(h)(1/w) h'(w) h(w)^-k over |w| = 1
    with an auto-refined trapezoid rule; ``method="residue"`` expands at
    infinity exactly.  Curves not enclosing the origin need ``shifted=True``,
    which selects the residue expansion (the defining equation system).
    """
    d = curve.degree
    k_max = d + 1 if k_max is None else k_max
    if k_max < 1:
        raise CurveError("k_max must be positive")
    if shifted:
        method = "residue"
    elif method == "contour":
        z = eval_map(curve, np.exp(2j * np.pi * np.arange(256) / 256))
        if np.any(np.abs(z) == 0) or _winding(z) != 1:
            raise CurveError("origin is not enclosed by the curve; pass shifted=True")
    if method == "residue":
        t0, t = _moments_residue(curve, k_max)
        return HarmonicMoments(t0, tuple(t))
    if method != "contour":
        raise ValueError(f"unknown method {method!r}")

    ks = np.arange(1, k_max + 1)

    def integrand(w):
        hw = eval_map(curve, w)
        base = eval_conjugate_map(curve, w) * eval_derivative(curve, w)
        rows = [base] + [base * hw ** (-k) / k for k in ks]
        return np.array(rows)

    vals, _ = _trapezoid(integrand, nodes=nodes)
    return HarmonicMoments(float(vals[0].real), tuple(vals[1:]))


def area_parameter(curve: PolynomialCurve) -> float:
    """Closed-form t0 = r^2 - sum j |a_j|^2."""
    a = curve.coefficients()
    return curve.r**2 - float(sum(j * abs(a[j]) ** 2 for j in range(1, len(a))))


def interior_moments(curve: PolynomialCurve, k_max: int, nodes: int = DEFAULT_NODES) -> InteriorMoments:
    """v_k = (1/2 pi i) contour of h^k conj(h)(1/w) h'(w) over |w| = 1."""
    ks = np.arange(1, k_max + 1)

    def integrand(w):
        hw = eval_map(curve, w)
        base = eval_conjugate_map(curve, w) * eval_derivative(curve, w)
        return np.array([base * hw**k for k in ks])

    vals, _ = _trapezoid(integrand, nodes=nodes)
    return InteriorMoments(tuple(complex(v) for v in vals))


def contour_convergence(curve: PolynomialCurve, k_max: int, tol: float = 1e-12, start: int = 8) -> int:
    """Smallest node count M (power of two) from which doubling changes all
    t_k and v_k by less than ``tol``."""
    ks = np.arange(1, k_max + 1)

    def rule(m):
        w = np.exp(2j * np.pi * np.arange(m) / m)
        hw = eval_map(curve, w)
        base = eval_conjugate_map(curve, w) * eval_derivative(curve, w) * w
        rows = [base] + [base * hw ** (-k) / k for k in ks] + [base * hw**k for k in ks]
        return np.mean(np.array(rows), axis=-1)

    m = start
    prev = rule(m)
    while m < MAX_NODES:
        cur = rule(2 * m)
        if np.max(np.abs(cur - prev)) < tol:
            return m
        m *= 2
        prev = cur
    return m


# ---------------------------------------------------------------------------
# inverse map


def _pack(rho: float, alpha: np.ndarray) -> np.ndarray:
    return np.concatenate([[rho], alpha.real, alpha.imag])


def _unpack(x: np.ndarray, d: int) -> tuple[float, np.ndarray]:
    return x[0], x[1:d + 2] + 1j * x[d + 2:]


def _curve_from_scaled(x: np.ndarray, d: int) -> PolynomialCurve:
    rho, alpha = _unpack(x, d)
    if rho <= 0:
        raise CurveError("non-positive rho")
    r = np.sqrt(rho)
    return PolynomialCurve(r, tuple(alpha * r ** np.arange(d + 1)))


def _forward_scaled(x: np.ndarray, d: int) -> np.ndarray:
    curve = _curve_from_scaled(x, d)
    t0, t = _moments_residue(curve, d + 1)
    return np.concatenate([[t0], t.real, t.imag])


def _newton(target: np.ndarray, x: np.ndarray, d: int, tol: float, max_iter: int) -> np.ndarray:
    def residual(x):
        return _forward_scaled(x, d) - target

    res = residual(x)
    norm = np.max(np.abs(res))
    it = 0
    for it in range(1, max_iter + 1):
        if norm <= tol:
            break
        n = len(x)
        J = np.empty((n, n))
        for i in range(n):
            h = 1e-6 * max(1.0, abs(x[i]))
            e = np.zeros(n)
            e[i] = h
            J[:, i] = (_forward_scaled(x + e, d) - _forward_scaled(x - e, d)) / (2 * h)
        try:
            step = np.linalg.solve(J, -res)
        except np.linalg.LinAlgError as exc:
            raise ConvergenceError("singular Jacobian", norm, it) from exc
        lam = 1.0
        while True:
            trial = x + lam * step
            if trial[0] > 0:
                tres = residual(trial)
                tnorm = np.max(np.abs(tres))
                if tnorm < norm:
                    break
            lam /= 2
            if lam < 1e-10:
                raise ConvergenceError("line search failed", norm, it)
        x, res, norm = trial, tres, tnorm
    if norm > tol:
        raise ConvergenceError("Newton did not converge", norm, it)
    return x


def _target(m: HarmonicMoments, d: int) -> np.ndarray:
    t = np.array([m.tk(k) for k in range(1, d + 2)], dtype=complex)
    return np.concatenate([[m.t0], t.real, t.imag])


def _admissible(curve: PolynomialCurve) -> ValidationReport:
    return validate_curve(curve, max(512, 8 * (curve.degree + 1)))


def _continuation(m: HarmonicMoments, tol: float, max_iter: int, min_step: float = 1e-3) -> np.ndarray:
    # follow t_k -> lam t_k from the circle (lam = 0) with warm starts
    d = m.degree
    x = _pack(m.t0, np.zeros(d + 1, dtype=complex))
    lam, step = 0.0, 0.25
    while lam < 1.0:
        nxt = min(1.0, lam + step)
        part = HarmonicMoments(m.t0, tuple(nxt * t for t in m.t))
        try:
            trial = _newton(_target(part, d), x, d, tol, max_iter)
            ok = nxt < 1.0 or _admissible(_curve_from_scaled(trial, d)).valid
        except ConvergenceError:
            ok = False
        if ok:
            x, lam = trial, nxt
            step = min(2 * step, 0.25)
        else:
            step /= 2
            if step < min_step:
                raise ConvergenceError(f"continuation stalled at lambda = {lam:.4g}", float("nan"), 0)
    return x


def curve_from_moments(
    moments: HarmonicMoments,
    tol: float = 1e-14,
    max_iter: int = 100,
    validate: bool = True,
    continuation: bool = True,
) -> PolynomialCurve:
    """Invert the moment map by damped Newton in scaled coordinates.

    Unknowns are rho = r^2 and alpha_j = r^-j a_j, started from
    rho = t0/(1 - 4|t_2|^2), alpha_j = (j+1) conj(t_{j+1}).  If that start
    fails or lands on an inadmissible curve and ``continuation`` is set, the
    solve is repeated along t_k -> lam t_k from the circle at lam = 0.
    """
    m = moments.lowered(1e-15)
    d = m.degree
    t2 = m.tk(2)
    if abs(t2) >= 0.5:
        raise CurveError(f"|t_2| = {abs(t2):.6g} must be below 1/2")
    target = _target(m, d)
    alpha0 = np.array([(j + 1) * np.conj(m.tk(j + 1)) for j in range(d + 1)], dtype=complex)
    start = _pack(m.t0 / (1 - 4 * abs(t2) ** 2), alpha0)
    try:
        x = _newton(target, start, d, tol, max_iter)
        curve = _curve_from_scaled(x, d)
        failure = None if not validate else _admissible(curve)
        if failure is not None and failure.valid:
            failure = None
    except ConvergenceError as exc:
        if not continuation:
            raise
        failure = exc
    if failure is None:
        return curve
    if not continuation:
        raise ConvergenceError(f"converged curve is not admissible: {failure.reason}", float(np.max(np.abs(_forward_scaled(x, d) - target))), 0)
    x = _continuation(m, tol, max_iter)
    curve = _curve_from_scaled(x, d)
    if validate:
        report = _admissible(curve)
        if not report.valid:
            raise ConvergenceError(f"converged curve is not admissible: {report.reason}", 0.0, 0)
    return curve
