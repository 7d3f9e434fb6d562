"""Orthogonal polynomials for the weight exp(-N V) on a disc cut-off.

The family is built by Arnoldi-style orthogonalisation of z q_n against the
previous orthonormal polynomials on a polar tensor quadrature grid.  For
potentials with a single harmonic t_{d+1} the projections are restricted to
the residue class allowed by the z -> exp(2 pi i/(d+1)) z symmetry, which
block-diagonalises the problem.  A moment-matrix Cholesky route is kept as
an independent cross-check.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammainc, gammaincc, gammaln, logsumexp

from .roots import aberth, initial_ring

MAX_DEGREE = 48


class QuadratureError(RuntimeError):
    """Quadrature did not resolve an integrand; carries both estimates."""

    def __init__(self, message: str, coarse: complex, fine: complex):
        super().__init__(f"{message}: {coarse!r} vs {fine!r}")
        self.coarse = coarse
        self.fine = fine


class PrecisionWarning(UserWarning):
    pass


class PrecisionError(RuntimeError):
    """Positivity of the inner product was lost numerically."""

    def __init__(self, message: str, achieved: int):
        super().__init__(message)
        self.achieved = achieved


@dataclass(frozen=True)
class PotentialSpec:
    """V(z) = (|z|^2 - 2 Re sum_k t_k z^k) / t0 with matrix size N."""

    t0: float
    tk: tuple[complex, ...] = ()
    N: int = 1

    def __post_init__(self):
        if self.t0 <= 0:
            raise ValueError("t0 must be positive")
        if self.N < 1:
            raise ValueError("N must be a positive integer")
        tk = tuple(complex(x) for x in self.tk)
        while tk and tk[-1] == 0:
            tk = tk[:-1]
        object.__setattr__(self, "tk", tk)
        if len(tk) >= 2 and abs(tk[1]) >= 0.5:
            raise ValueError("|t_2| must be below 1/2")

    @classmethod
    def gaussian(cls, t0: float, N: int, t2: complex = 0.0) -> "PotentialSpec":
        return cls(t0, (0.0, t2), N)

    @classmethod
    def monomial(cls, t0: float, N: int, k: int, tk: complex) -> "PotentialSpec":
        t = [0j] * k
        t[k - 1] = tk
        return cls(t0, tuple(t), N)

    @property
    def degree(self) -> int:
        """d such that t_{d+1} is the last non-zero moment (0 for |z|^2)."""
        return max(len(self.tk) - 1, 0)

    def t(self, k: int) -> complex:
        return self.tk[k - 1] if 1 <= k <= len(self.tk) else 0j

    @property
    def symmetry_order(self) -> int | None:
        """Order of the rotation symmetry; None for the rotation-invariant case."""
        nonzero = [k for k, t in enumerate(self.tk, start=1) if t != 0]
        if not nonzero:
            return None
        if len(nonzero) == 1 and nonzero[0] >= 2:
            return nonzero[0]
        return 1

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        harm = np.zeros(z.shape, dtype=complex)
        for k, t in enumerate(self.tk, start=1):
            if t != 0:
                harm = harm + t * z**k
        return (np.abs(z) ** 2 - 2 * harm.real) / self.t0


@dataclass(frozen=True)
class QuadratureGrid:
    """Polar tensor grid: Gauss-Legendre in r on [0, R_c], trapezoid in theta."""

    radius: float
    n_r: int
    n_theta: int
    nodes: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)

    def refined(self) -> "QuadratureGrid":
        return build_grid(self.radius, 2 * self.n_r, 2 * self.n_theta)


def build_grid(radius: float, n_r: int, n_theta: int) -> QuadratureGrid:
    if radius <= 0:
        raise ValueError("cut-off radius must be positive")
    if n_r < 16 or n_theta < 16:
        raise ValueError("need n_r >= 16 and n_theta >= 16")
    x, wx = np.polynomial.legendre.leggauss(n_r)
    r = radius * (x + 1) / 2
    wr = wx * radius / 2 * r
    theta = 2 * np.pi * np.arange(n_theta) / n_theta
    nodes = (r[:, None] * np.exp(1j * theta)[None, :]).ravel()
    weights = (wr[:, None] * np.full(n_theta, 2 * np.pi / n_theta)[None, :]).ravel()
    return QuadratureGrid(float(radius), n_r, n_theta, nodes, weights)


def default_cutoff(potential: PotentialSpec, n_max: int, curve_radius: float = 0.0) -> float:
    """max(6 sqrt(t0 n_max / N), 3 x outer radius of the droplet)."""
    return max(6 * np.sqrt(potential.t0 * max(n_max, 1) / potential.N), 3 * curve_radius)


def _check_positive(potential: PotentialSpec, grid: QuadratureGrid) -> None:
    v = potential(grid.nodes)
    far = np.abs(grid.nodes) > 1e-12
    if np.any(v[far] <= 0):
        raise ValueError("V is not positive on the cut-off away from its minimum")


def inner_product(f, g, potential: PotentialSpec, grid: QuadratureGrid, check: bool = True, rtol: float = 1e-9) -> complex:
    """(f, g)_N = sum_i w_i conj(f(z_i)) g(z_i) exp(-N V(z_i)).

    f and g are monomial coefficients in ascending powers.  With ``check`` the
    value is recomputed on a doubled grid and must agree to ``rtol``.
    """
    def value(gr):
        z = gr.nodes
        fz = np.polynomial.polynomial.polyval(z, np.asarray(f, dtype=complex))
        gz = np.polynomial.polynomial.polyval(z, np.asarray(g, dtype=complex))
        return complex(np.sum(gr.weights * np.conj(fz) * gz * np.exp(-potential.N * potential(z))))

    coarse = value(grid)
    if check:
        fine = value(grid.refined())
        scale = max(abs(fine), abs(value_abs(f, g, potential, grid)))
        if abs(coarse - fine) > rtol * scale:
            raise QuadratureError("inner product not resolved by the grid", coarse, fine)
    return coarse


def value_abs(f, g, potential, grid):
    # sum of |integrand|, the natural scale for cancelling integrals
    z = grid.nodes
    fz = np.polynomial.polynomial.polyval(z, np.asarray(f, dtype=complex))
    gz = np.polynomial.polynomial.polyval(z, np.asarray(g, dtype=complex))
    return float(np.sum(grid.weights * np.abs(fz * gz) * np.exp(-potential.N * potential(z))))


# ---------------------------------------------------------------------------
# the family


@dataclass(frozen=True)
class OrthogonalFamily:
    """Orthogonal polynomials p_0..p_{n_max} on a grid.

    ``coeffs[n, m]`` is the coefficient of (z/scale)^m in the monic p_n;
    ``hessenberg[m, n] = (q_m, z q_n)`` from the recurrence (size
    (n_max+2) x (n_max+1)); ``values[n]`` holds q_n(z_i) sqrt(w_i exp(-N V)).
    """

    potential: PotentialSpec
    grid: QuadratureGrid
    n_max: int
    scale: float
    coeffs: np.ndarray = field(repr=False)
    log_norms: np.ndarray = field(repr=False)
    hessenberg: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    method: str = "arnoldi"

    @property
    def norms(self) -> np.ndarray:
        return np.exp(self.log_norms)

    @property
    def N(self) -> int:
        return self.potential.N

    def log_partition(self, n: int | None = None) -> float:
        """log Z_n = log n! + sum_{k<n} log h_k (defaults to n = N)."""
        n = self.N if n is None else n
        return float(gammaln(n + 1) + np.sum(self.log_norms[:n]))

    def monomial_coefficients(self, n: int) -> np.ndarray:
        """Coefficients of p_n in ascending powers of z (unscaled)."""
        return self.coeffs[n, : n + 1] / self.scale ** np.arange(n + 1)

    def evaluate(self, z, n_top: int | None = None, derivative: bool = False):
        """Orthonormal q_0..q_{n_top} at points z via the recurrence.

        Returns an array of shape (n_top+1, *z.shape) (and the derivatives).
        """
        n_top = self.n_max if n_top is None else n_top
        z = np.asarray(z, dtype=complex)
        H = self.hessenberg
        q = np.zeros((n_top + 1,) + z.shape, dtype=complex)
        dq = np.zeros_like(q)
        q[0] = np.exp(-0.5 * self.log_norms[0])
        for n in range(n_top):
            col = H[: n + 1, n]
            nz = np.flatnonzero(col)
            acc = z * q[n] - np.tensordot(col[nz], q[nz], axes=1)
            q[n + 1] = acc / H[n + 1, n]
            if derivative:
                dacc = q[n] + z * dq[n] - np.tensordot(col[nz], dq[nz], axes=1)
                dq[n + 1] = dacc / H[n + 1, n]
        return (q, dq) if derivative else q

    def weight_sqrt(self, z):
        return np.exp(-0.5 * self.N * self.potential(z))


def _allowed(order: int | None, k: int, n: int) -> bool:
    # (q_k, z q_n) can be non-zero only if k = n+1 mod order
    if order is None:
        return k == n + 1
    return (k - n - 1) % order == 0


def build_family(
    potential: PotentialSpec,
    grid: QuadratureGrid,
    n_max: int,
    method: str = "arnoldi",
    use_symmetry: bool = True,
) -> OrthogonalFamily:
    """Monic orthogonal polynomials up to degree n_max.

    ``method="arnoldi"`` orthogonalises z q_n against q_0..q_n with one
    reorthogonalisation pass; ``method="cholesky"`` factors the moment
    matrix in the scaled monomial basis (z/sqrt(t0))^m.
    """
    if n_max > MAX_DEGREE:
        raise ValueError(f"n_max is capped at {MAX_DEGREE}")
    if n_max > potential.N:
        raise ValueError("n_max must not exceed N")
    d = potential.degree
    if grid.n_theta < 4 * (n_max + 1) + 4 * (d + 1):
        raise ValueError("angular resolution too low for this degree")
    _check_positive(potential, grid)
    scale = float(np.sqrt(potential.t0))
    if method == "arnoldi":
        return _build_arnoldi(potential, grid, n_max, scale, use_symmetry)
    if method == "cholesky":
        return _build_cholesky(potential, grid, n_max, scale)
    raise ValueError(f"unknown method {method!r}")


def _build_arnoldi(potential, grid, n_max, scale, use_symmetry):
    order = potential.symmetry_order if use_symmetry else 1
    top = n_max + 1
    z = grid.nodes
    sw = np.sqrt(grid.weights * np.exp(-potential.N * potential(z)))
    Q = np.zeros((top + 1, len(z)), dtype=complex)
    H = np.zeros((top + 1, top), dtype=complex)
    C = np.zeros((top + 1, top + 1), dtype=complex)  # orthonormal q_n in powers of z/scale
    h0 = float(np.sum(sw**2))
    Q[0] = sw / np.sqrt(h0)
    C[0, 0] = 1 / np.sqrt(h0)
    log_h = np.zeros(top + 1)
    log_h[0] = np.log(h0)
    u = z / scale
    # V(conj z) = V(z) makes every recurrence coefficient real
    real = all(t.imag == 0 for t in potential.tk)
    for n in range(top):
        v = u * Q[n]
        ks = [k for k in range(n + 1) if _allowed(order, k, n)]
        coef = np.zeros(n + 1, dtype=complex)
        for _ in range(2):
            if ks:
                c = Q[ks].conj() @ v
                if real:
                    c = c.real.astype(complex)
                v = v - c @ Q[ks]
                coef[ks] += c
        beta = float(np.linalg.norm(v))
        if beta <= 1e-14 * np.sqrt(np.sum(np.abs(u * Q[n]) ** 2)):
            raise PrecisionError(f"orthogonalisation broke down at degree {n + 1}", n)
        Q[n + 1] = v / beta
        H[: n + 1, n] = coef * scale
        H[n + 1, n] = beta * scale
        C[n + 1, 1:] = C[n, :-1]
        C[n + 1] -= coef @ C[: n + 1]
        C[n + 1] /= beta
        log_h[n + 1] = log_h[n] + 2 * np.log(beta * scale)
    # monic p_n = sqrt(h_n) q_n; coefficient of (z/s)^n is s^n
    P = C[: n_max + 1, : n_max + 1] * np.exp(0.5 * log_h[: n_max + 1])[:, None]
    values = Q[: n_max + 1]
    return OrthogonalFamily(potential, grid, n_max, scale, P, log_h[: n_max + 1], H, values, "arnoldi")


def _build_cholesky(potential, grid, n_max, scale):
    z = grid.nodes
    u = z / scale
    om = grid.weights * np.exp(-potential.N * potential(z))
    V = u[None, :] ** np.arange(n_max + 2)[:, None]
    G = (V.conj() * om) @ V.T
    dg = np.sqrt(np.real(np.diag(G)))
    Ge = G / np.outer(dg, dg)
    achieved = n_max + 1
    try:
        Lc = np.linalg.cholesky(Ge)
    except np.linalg.LinAlgError:
        # find the first failing leading block
        achieved = 1
        for m in range(2, n_max + 3):
            try:
                np.linalg.cholesky(Ge[:m, :m])
                achieved = m
            except np.linalg.LinAlgError:
                break
        if achieved < 2:
            raise PrecisionError("moment matrix not positive definite", 0)
        warnings.warn(f"moment matrix lost positivity; family truncated at degree {achieved - 2}", PrecisionWarning)
        n_max = achieved - 2
        Ge, dg = Ge[: n_max + 2, : n_max + 2], dg[: n_max + 2]
        Lc = np.linalg.cholesky(Ge)
        V = V[: n_max + 2]
    # orthonormal coefficients A = conj(inv(L)) in the equilibrated basis
    A = np.conj(np.linalg.inv(Lc)) / dg[None, :]
    Qall = A @ V
    Q = Qall * np.sqrt(om)[None, :]
    log_h = -2 * np.log(np.abs(np.diag(A))) + 2 * np.arange(len(A)) * np.log(scale)
    # Hessenberg from quadrature, same layout as the Arnoldi route
    H = (Q.conj() @ (z[None, :] * Q[:-1]).T)
    P = A[: n_max + 1, : n_max + 1] / np.diag(A)[: n_max + 1, None] * scale ** np.arange(n_max + 1)[:, None]
    return OrthogonalFamily(potential, grid, n_max, scale, P, log_h[: n_max + 1], H, Q[: n_max + 1], "cholesky")


# ---------------------------------------------------------------------------
# kernel and densities


def kernel(family: OrthogonalFamily, w, z):
    """K_N(w, z) = exp(-N (V(w) + V(z))/2) sum_{n<N} conj(q_n(w)) q_n(z)."""
    N = family.N
    if N > family.n_max + 1:
        raise ValueError("family does not cover degrees 0..N-1")
    w = np.asarray(w, dtype=complex)
    z = np.asarray(z, dtype=complex)
    qw = family.evaluate(w, N - 1)
    qz = family.evaluate(z, N - 1)
    return np.sum(np.conj(qw) * qz, axis=0) * family.weight_sqrt(w) * family.weight_sqrt(z)


def kernel_matrix(family: OrthogonalFamily, w, z) -> np.ndarray:
    """Matrix K_N(w_i, z_j) for point arrays w and z."""
    N = family.N
    qw = family.evaluate(np.asarray(w, dtype=complex), N - 1) * family.weight_sqrt(w)
    qz = family.evaluate(np.asarray(z, dtype=complex), N - 1) * family.weight_sqrt(z)
    return np.conj(qw).T @ qz


def correlation(family: OrthogonalFamily, points) -> float:
    """k-point correlation function det(K_N(z_i, z_j))."""
    pts = np.asarray(points, dtype=complex)
    return float(np.linalg.det(kernel_matrix(family, pts, pts)).real)


def one_point_density(family: OrthogonalFamily, z):
    """(1/N) K_N(z, z)."""
    return np.real(kernel(family, z, z)) / family.N


def gaussian_density(t0: float, N: int, z):
    """Exact (1/N) K_N(z,z) for V = |z|^2/t0 on C:
    (1/(pi t0)) exp(-x) sum_{n<N} x^n/n!, x = N|z|^2/t0, summed in log space."""
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    x = N * np.abs(z) ** 2 / t0
    n = np.arange(N)
    logx = np.log(np.where(x > 0, x, 1.0))
    powers = n[None, :] * logx[:, None]
    # at z = 0 only the n = 0 term survives
    powers = np.where((x[:, None] == 0) & (n[None, :] > 0), -np.inf, powers)
    terms = powers - gammaln(n + 1)[None, :] - x[:, None]
    out = np.exp(logsumexp(terms, axis=1)) / (np.pi * t0)
    return out if out.size > 1 else float(out[0])


# ---------------------------------------------------------------------------
# operator matrices and string equation


@dataclass(frozen=True)
class OperatorMatrix:
    matrix: np.ndarray
    role: str

    def band_violation(self) -> float:
        """max |O_{m,n}| for m >= n+2."""
        n = self.matrix.shape[0]
        i, j = np.tril_indices(n, k=-2)
        return float(np.max(np.abs(self.matrix[i, j]), initial=0.0))


def operator_matrices(family: OrthogonalFamily) -> tuple[OperatorMatrix, OperatorMatrix, OperatorMatrix]:
    """L = (q_m, z q_n), L* and A = (q_m, dq_n/dz), all by quadrature.

    Derivatives come from differentiating the recurrence on the grid.
    """
    g = family.grid
    Qw = family.values
    L = Qw.conj() @ (g.nodes[None, :] * Qw).T
    _, dq = family.evaluate(g.nodes, derivative=True)
    sw = np.sqrt(g.weights) * family.weight_sqrt(g.nodes)
    A = Qw.conj() @ (dq * sw[None, :]).T
    return OperatorMatrix(L, "L"), OperatorMatrix(L.conj().T, "L*"), OperatorMatrix(A, "A")


def boundary_term(family: OrthogonalFamily, nodes: int = 256) -> float:
    """max |(1/2i) contour over |z| = R_c of conj(q_m) q_n exp(-N V) dz|."""
    R = family.grid.radius
    th = 2 * np.pi * np.arange(nodes) / nodes
    z = R * np.exp(1j * th)
    q = family.evaluate(z) * family.weight_sqrt(z)
    dz = 1j * z * (2 * np.pi / nodes)
    M = (q.conj() * dz[None, :]) @ q.T / 2j
    return float(np.max(np.abs(M)))


@dataclass
class OperatorIdentityReport:
    residual: float
    block: int
    boundary_term: float

    def to_json(self) -> dict:
        return {"residual": self.residual, "block": self.block, "boundary_term": self.boundary_term}


def check_operator_identity(family: OrthogonalFamily) -> OperatorIdentityReport:
    """Residual of L* = (t0/N) A + sum_k k t_k L^{k-1} on the valid block."""
    pot = family.potential
    d = pot.degree
    if family.n_max < d + 2:
        raise ValueError("n_max must be at least d + 2")
    L, Ls, A = (m.matrix for m in operator_matrices(family))
    rhs = pot.t0 / pot.N * A
    power = np.eye(L.shape[0], dtype=complex)
    for k in range(1, len(pot.tk) + 1):
        if k > 1:
            power = power @ L
        rhs = rhs + k * pot.t(k) * power
    block = family.n_max - (d + 1) + 1
    res = (Ls - rhs)[:block, :block]
    return OperatorIdentityReport(float(np.max(np.abs(res))), block, boundary_term(family))


@dataclass
class StringEquationReport:
    diagonal_residual: float
    offdiagonal: float
    block: int
    target: float
    diagonal: np.ndarray = field(repr=False)

    def to_json(self) -> dict:
        return {
            "diagonal_residual": self.diagonal_residual,
            "offdiagonal": self.offdiagonal,
            "block": self.block,
            "target": self.target,
            "diagonal": [float(x) for x in self.diagonal.real],
        }


def check_string_equation(family: OrthogonalFamily, d: int | None = None) -> StringEquationReport:
    """Pi_{N-d}([Pi_N(L*), Pi_N(L)]) against t0/N times the identity."""
    pot = family.potential
    d = pot.degree if d is None else d
    if d < 1:
        d = 1
    N = pot.N
    if family.n_max < N:
        raise ValueError("family must cover degrees 0..N")
    L = operator_matrices(family)[0].matrix[: N + 1, : N + 1]
    Ls = L.conj().T
    comm = (Ls @ L - L @ Ls)[: N - d + 1, : N - d + 1]
    target = pot.t0 / N
    diag = np.diag(comm)
    off = comm - np.diag(diag)
    return StringEquationReport(
        float(np.max(np.abs(diag - target))), float(np.max(np.abs(off))), N - d + 1, target, diag
    )


@dataclass
class RecursionReport:
    r: np.ndarray
    a: np.ndarray
    residual_1: float
    residual_2: float

    def to_json(self) -> dict:
        return {"residual_1": self.residual_1, "residual_2": self.residual_2}


def recursion_coefficients(family: OrthogonalFamily, d: int | None = None) -> RecursionReport:
    """r_{n+1} = L_{n+1,n} and a_n = L_{n,n+d} for single-harmonic potentials.

    ``r[n]`` holds r_n (r[0] = 0).  Residuals measure the relations
    conj(a_n) = (d+1) t_{d+1} prod_k r_{n+k} and
    |a_n|^2 = r_{n+1}^2 - sum_{k<d} |a_{n-d+k}|^2 - (t0/N)(n+1).
    """
    pot = family.potential
    order = pot.symmetry_order
    if order is None or order == 1:
        raise ValueError("recursion coefficients need a single-harmonic potential t_{d+1}")
    d = order - 1 if d is None else d
    if d != order - 1:
        raise ValueError("d does not match the potential")
    H = family.hessenberg
    n_max = family.n_max
    r = np.zeros(n_max + 1)
    r[1:] = np.real(np.diag(H[1 : n_max + 1, :n_max]))
    a = np.array([H[n, n + d] for n in range(n_max + 1 - d)])
    td = pot.t(d + 1)
    res1 = max(abs(np.conj(a[n]) - (d + 1) * td * np.prod(r[n + 1 : n + d + 1])) for n in range(len(a)))

    def a_at(m):
        return a[m] if 0 <= m < len(a) else 0.0

    res2 = 0.0
    for n in range(min(len(a), n_max)):
        val = abs(a[n]) ** 2 - r[n + 1] ** 2 + sum(abs(a_at(n - d + k)) ** 2 for k in range(1, d)) + pot.t0 / pot.N * (n + 1)
        res2 = max(res2, abs(val))
    return RecursionReport(r, a, float(res1), float(res2))


# ---------------------------------------------------------------------------
# zeros


def _ring_radius(family: OrthogonalFamily, n: int) -> float:
    # spectrum of the truncated multiplication operator sets the ring size
    radius = float(np.max(np.abs(np.linalg.eigvals(family.hessenberg[:n, :n]))))
    return radius if radius > 1e-12 else family.scale * np.sqrt(n / family.N)


def polynomial_zeros(family: OrthogonalFamily, n: int, tol: float = 1e-13, seed: int = 0) -> np.ndarray:
    """Zeros of p_n by Aberth-Ehrlich iteration, p_n evaluated by the recurrence.

    For single-harmonic potentials the iteration runs on the reduced
    polynomial in u = z^{d+1}; the zeros are its (d+1)-th roots in every
    sector together with the s-fold zero at the origin.  For the
    rotation-invariant potential p_n = z^n exactly.
    """
    if not 0 <= n <= family.n_max:
        raise ValueError("degree out of range")
    order = family.potential.symmetry_order
    if n == 0 or order is None:
        return np.zeros(n, dtype=complex)
    if order > 1:
        j, s = divmod(n, order)
        u = reduced_zeros(family, n, seed=seed)
        roots = _principal_root(u, order)
        sectors = np.exp(2j * np.pi * np.arange(order) / order)
        return np.concatenate([(roots[None, :] * sectors[:, None]).ravel(), np.zeros(s, dtype=complex)])

    def evaluate(z):
        q, dq = family.evaluate(z, n, derivative=True)
        return q[n], dq[n]

    return aberth(evaluate, initial_ring(n, _ring_radius(family, n), seed), tol=tol)


def reduced_zeros(family: OrthogonalFamily, n: int, tol: float = 1e-14, seed: int = 0) -> np.ndarray:
    """Zeros u_k of the reduced polynomial with q_n(z) = z^s qred(z^{d+1}).

    Aberth iteration in u = z^{d+1}; valid for single-harmonic potentials.
    Sorted by real part.
    """
    order = family.potential.symmetry_order
    if order is None or order == 1:
        raise ValueError("reduced polynomials need a single-harmonic potential")
    j, s = divmod(n, order)
    if j == 0:
        return np.zeros(0, dtype=complex)

    def evaluate(u):
        z = _principal_root(u, order)
        q, dq = family.evaluate(z, n, derivative=True)
        val = q[n] * z ** (-s)
        dval = (dq[n] * z ** (-s) - s * q[n] * z ** (-s - 1)) / (order * z ** (order - 1))
        return val, dval

    radius = _ring_radius(family, n) ** order
    u = aberth(evaluate, initial_ring(j, 0.7 * radius, seed) + 0.3 * radius, tol=tol)
    return u[np.argsort(u.real)]


def _principal_root(u, order):
    u = np.asarray(u, dtype=complex)
    return np.abs(u) ** (1 / order) * np.exp(1j * np.angle(u) / order)


@dataclass
class ReducedZeroReport:
    """Reality, positivity, distinctness and interlacing of reduced zeros."""

    n: int
    zeros: np.ndarray
    max_imag: float
    real: bool
    positive: bool
    distinct: bool
    interlacing: bool

    @property
    def ok(self) -> bool:
        return self.real and self.positive and self.distinct and self.interlacing

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "max_relative_imag": self.max_imag,
            "real": self.real,
            "positive": self.positive,
            "distinct": self.distinct,
            "interlacing": self.interlacing,
        }


def reduced_zero_report(family: OrthogonalFamily, n: int, rtol: float = 1e-6) -> ReducedZeroReport:
    """Check the reduced zeros of p_n against those of p_{n-(d+1)}."""
    order = family.potential.symmetry_order
    u = reduced_zeros(family, n)
    scale = np.maximum(np.abs(u), 1e-300)
    max_imag = float(np.max(np.abs(u.imag) / scale, initial=0.0))
    x = u.real
    real = max_imag <= rtol
    positive = bool(np.all(x > 0))
    distinct = bool(np.all(np.diff(x) > rtol * x[1:])) if len(x) > 1 else True
    interlacing = True
    if n - order >= 0 and len(x) > 1:
        prev = reduced_zeros(family, n - order).real
        # one zero of the lower polynomial strictly between neighbours
        interlacing = len(prev) == len(x) - 1 and bool(np.all((x[:-1] < prev) & (prev < x[1:])))
    return ReducedZeroReport(n, u, max_imag, real, positive, distinct, interlacing)


@dataclass
class ZeroStatistics:
    ks: float
    n_zeros: int
    off_support: int

    def to_json(self) -> dict:
        return {"ks": self.ks, "n_zeros": self.n_zeros, "off_support": self.off_support}


def zero_statistics(zeros, law, support_tol: float = 0.05) -> ZeroStatistics:
    """Kolmogorov-Smirnov distance between zeros and a limiting zero law."""
    zeros = np.asarray(zeros, dtype=complex)
    off = int(np.count_nonzero(~law.on_support(zeros, support_tol)))
    x = np.sort(law.coordinate(zeros))
    n = len(x)
    F = np.array([law.cdf(v) for v in x])
    i = np.arange(1, n + 1)
    ks = float(max(np.max(i / n - F), np.max(F - (i - 1) / n)))
    return ZeroStatistics(ks, n, off)


# ---------------------------------------------------------------------------
# level spacing for the Gaussian |z|^2/t0 ensemble


def gaussian_level_spacing(t0: float, N: int, x: float, n: int | None = None):
    """Probability of exactly n eigenvalues in the disc of radius sqrt(x/N)
    about the origin, V = |z|^2/t0 on C.

    Sigma_i = exp(-x/t0) sum_{j<i} (x/t0)^j/j! is the probability that the
    i-th radial mode lies outside; A_N(n) is the coefficient of s^n in
    prod_i (Sigma_i + (1 - Sigma_i) s), accumulated by the elementary
    symmetric recurrence.
    """
    if x < 0:
        raise ValueError("x must be non-negative")
    y = x / t0
    e = np.zeros(N + 1)
    e[0] = 1.0
    for i in range(1, N + 1):
        # Sigma_i is the regularised upper incomplete gamma Q(i, y)
        out_p, in_p = float(gammaincc(i, y)), float(gammainc(i, y))
        e[1 : i + 1] = e[1 : i + 1] * out_p + e[0:i] * in_p
        e[0] *= out_p
    if n is None:
        return e
    if not 0 <= n <= N:
        raise ValueError("n must lie in 0..N")
    return float(e[n])


# ---------------------------------------------------------------------------
# CSV output


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def write_norms_csv(path, family: OrthogonalFamily) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "h_n", "log_h_n"])
        for n, lh in enumerate(family.log_norms):
            w.writerow([n, _fmt(np.exp(lh)), _fmt(lh)])


def write_recursion_csv(path, report: RecursionReport) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "r_n", "abs_a_n"])
        for n in range(len(report.r)):
            a = abs(report.a[n]) if n < len(report.a) else float("nan")
            w.writerow([n, _fmt(report.r[n]), _fmt(a)])


def write_zeros_csv(path, n: int, zeros) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "re", "im"])
        for z in zeros:
            w.writerow([n, _fmt(z.real), _fmt(z.imag)])


def write_density_csv(path, points, density) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["re_z", "im_z", "density"])
        for z, rho in zip(points, density):
            w.writerow([_fmt(z.real), _fmt(z.imag), _fmt(float(rho))])
