"""Metropolis sampler for the two-dimensional Coulomb gas of eigenvalues.

The target density on D^N is proportional to
exp(-N sum V(z_i)) prod_{i<j} |z_i - z_j|^2.  Random numbers come from
numpy's PCG64 seeded through SeedSequence and are drawn in fixed-size chunks,
so a run is bitwise reproducible for a given configuration.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .curvegeom import PolynomialCurve, eval_map
from .orthopoly import PotentialSpec
from .schwarz import schwarz_reflection

RNG_ALGORITHM = "numpy.random.PCG64 via SeedSequence"
REFRESH_SWEEPS = 10_000
CHUNK_SWEEPS = 1_000
BOUNDARY_NODES = 4096


# ---------------------------------------------------------------------------
# energy


def _potential_values(potential: PotentialSpec, z) -> np.ndarray:
    return np.asarray(potential(np.asarray(z, dtype=complex)), dtype=float)


def log_weight(positions, potential: PotentialSpec) -> float:
    """-N sum V(z_i) + 2 sum_{i<j} log|z_i - z_j|."""
    z = np.asarray(positions, dtype=complex)
    iu = np.triu_indices(len(z), k=1)
    with np.errstate(divide="ignore"):
        pair = np.log(np.abs(z[:, None] - z[None, :])[iu])
    return float(-potential.N * np.sum(_potential_values(potential, z)) + 2 * np.sum(pair))


def energy(positions, potential: PotentialSpec) -> float:
    """I(delta_z) = (1/N) sum V(z_i) + (1/N^2) sum_{i != j} log|z_i - z_j|^-1.

    N here is the number of positions; coincident points give +inf.
    """
    z = np.asarray(positions, dtype=complex)
    n = len(z)
    dist = np.abs(z[:, None] - z[None, :])[~np.eye(n, dtype=bool)]
    if np.any(dist == 0):
        return float("inf")
    return float(np.mean(_potential_values(potential, z)) - np.sum(np.log(dist)) / n**2)


# ---------------------------------------------------------------------------
# sampler kernel


@njit(cache=True)
def _v(z, tk, t0):
    harm = 0.0
    zk = 1.0 + 0.0j
    for k in range(tk.shape[0]):
        zk = zk * z
        harm += (tk[k] * zk).real
    return (z.real * z.real + z.imag * z.imag - 2.0 * harm) / t0


@njit(cache=True)
def _log_table(z):
    n = z.shape[0]
    tab = np.zeros((n, n))
    total = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            v = np.log(abs(z[i] - z[j]))
            tab[i, j] = v
            tab[j, i] = v
            total += v
    return tab, total


@njit(cache=True)
def _full_log_weight(z, tk, t0, nf):
    tab, pair = _log_table(z)
    pot = 0.0
    for i in range(z.shape[0]):
        pot += _v(z[i], tk, t0)
    return tab, -nf * pot + 2.0 * pair


@njit(cache=True)
def _delta(z, tab, i, prop, tk, t0, nf, new_logs):
    """Change of log_weight when z[i] moves to prop; fills new_logs[j] = log|prop - z[j]|."""
    delta = -nf * (_v(prop, tk, t0) - _v(z[i], tk, t0))
    for j in range(z.shape[0]):
        if j == i:
            continue
        dist = abs(prop - z[j])
        if dist == 0.0:
            return False, 0.0
        new_logs[j] = np.log(dist)
        delta += 2.0 * (new_logs[j] - tab[i, j])
    return True, delta


def delta_log_weight(positions, potential: PotentialSpec, i: int, proposal: complex) -> float:
    """Incremental O(N) change of log_weight used by the sampler; -inf on collision."""
    z = np.array(positions, dtype=complex)
    tab, _ = _log_table(z)
    ok, delta = _delta(z, tab, i, complex(proposal), np.array(potential.tk, dtype=complex), potential.t0,
                       float(potential.N), np.empty(len(z)))
    return float(delta) if ok else float("-inf")


@njit(cache=True)
def _chunk(z, tab, logw, tk, t0, nf, rc2, scale, gauss, unif, powers, obs, trace, hist, lo, width, nb, radius2, counts, snap, record):
    """Run gauss.shape[0] sweeps in place; returns (accepted, logw)."""
    n = z.shape[0]
    accepted = 0
    new_logs = np.empty(n)
    for s in range(gauss.shape[0]):
        for i in range(n):
            zi = z[i]
            prop = zi + scale * (gauss[s, i, 0] + 1j * gauss[s, i, 1])
            if prop.real * prop.real + prop.imag * prop.imag > rc2:
                continue
            ok, delta = _delta(z, tab, i, prop, tk, t0, nf, new_logs)
            if not ok:
                continue
            if delta >= 0.0 or unif[s, i] < np.exp(delta):
                z[i] = prop
                for j in range(n):
                    if j != i:
                        tab[i, j] = new_logs[j]
                        tab[j, i] = new_logs[j]
                logw += delta
                accepted += 1
        trace[s] = logw
        if record:
            for k in range(powers):
                acc = 0.0 + 0.0j
                for i in range(n):
                    acc += z[i] ** (k + 1)
                obs[s, k] = acc
            inside = 0
            for i in range(n):
                x = z[i]
                if x.real * x.real + x.imag * x.imag <= radius2:
                    inside += 1
                ix = int((x.real - lo) / width)
                iy = int((x.imag - lo) / width)
                if 0 <= ix < nb and 0 <= iy < nb:
                    hist[ix, iy] += 1.0
            counts[s] = inside
            for i in range(n):
                snap[s, i] = z[i]
    return accepted, logw


# ---------------------------------------------------------------------------
# run data


@dataclass
class GasState:
    positions: np.ndarray
    log_weight: float
    steps: int
    accepted: int
    seed: int
    proposal_scale: float
    max_drift: float = 0.0

    @property
    def acceptance(self) -> float:
        return self.accepted / max(self.steps * len(self.positions), 1)


@dataclass
class EmpiricalMeasure:
    """Histogram over [lo, lo + nb*width]^2 plus thinned position samples."""

    counts: np.ndarray
    lo: float
    width: float
    samples: np.ndarray = field(repr=False)

    @property
    def total(self) -> float:
        return float(self.counts.sum())

    @property
    def mass(self) -> np.ndarray:
        return self.counts / self.total

    @property
    def density(self) -> np.ndarray:
        return self.mass / self.width**2

    def centers(self) -> np.ndarray:
        c = self.lo + self.width * (np.arange(self.counts.shape[0]) + 0.5)
        return c[:, None] + 1j * c[None, :]

    def merge(self, other: "EmpiricalMeasure") -> "EmpiricalMeasure":
        if other.lo != self.lo or other.width != self.width or other.counts.shape != self.counts.shape:
            raise ValueError("histograms use different bins")
        return EmpiricalMeasure(self.counts + other.counts, self.lo, self.width, np.concatenate([self.samples, other.samples]))


def batch_means(series: np.ndarray, batches: int = 50) -> tuple[np.ndarray, np.ndarray]:
    """Mean and batch-means standard error along axis 0."""
    series = np.asarray(series)
    n = (len(series) // batches) * batches
    if n == 0:
        raise ValueError("not enough samples for batch means")
    b = series[:n].reshape((batches, n // batches) + series.shape[1:]).mean(axis=1)
    mean = series.mean(axis=0)
    root = np.sqrt(batches)
    if np.iscomplexobj(b):
        # real and imaginary parts carry separate errors
        return mean, (b.real.std(axis=0, ddof=1) + 1j * b.imag.std(axis=0, ddof=1)) / root
    return mean, b.std(axis=0, ddof=1) / root


@dataclass
class GasRun:
    state: GasState
    measure: EmpiricalMeasure
    m_hat: np.ndarray
    m_se: np.ndarray
    energy_trace: np.ndarray = field(repr=False)
    disc_counts: np.ndarray | None = field(default=None, repr=False)
    config: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "config": self.config,
            "seed": self.state.seed,
            "rng": RNG_ALGORITHM,
            "acceptance_rate": self.state.acceptance,
            "proposal_scale": self.state.proposal_scale,
            "max_log_weight_drift": self.state.max_drift,
            "m_hat": [
                {"k": k + 1, "value": [float(v.real), float(v.imag)], "stderr": [float(s.real), float(s.imag)]}
                for k, (v, s) in enumerate(zip(self.m_hat, self.m_se))
            ],
        }


def _check_cutoff(potential: PotentialSpec, radius: float) -> None:
    z = radius * np.exp(2j * np.pi * np.arange(512) / 512)
    if np.any(_potential_values(potential, z) <= 0):
        raise ValueError("V must stay positive on the cut-off circle")


def mcmc_run(
    potential: PotentialSpec,
    sweeps: int,
    burn_in: int,
    seed: int = 0,
    proposal_scale: float | None = None,
    cutoff: float | None = None,
    bins: int = 96,
    thin: int = 10,
    disc_radius: float | None = None,
    batches: int = 50,
) -> GasRun:
    """Single-site Metropolis on N = potential.N particles.

    A sweep proposes a Gaussian move for every particle in turn.  During
    burn-in the proposal scale is adapted every 100 sweeps towards an
    acceptance rate in [0.3, 0.5] and then frozen.  Observables are
    (t0/N) sum_i z_i^k for k = 1..d+3, recorded every post-burn-in sweep.
    ``disc_radius`` additionally records per-sweep counts of particles in
    the disc of that radius about the origin.
    """
    N = potential.N
    if N < 2:
        raise ValueError("need at least two particles")
    if sweeps <= burn_in:
        raise ValueError("sweeps must exceed burn_in")
    t0 = potential.t0
    rc = 6 * np.sqrt(t0) if cutoff is None else cutoff
    _check_cutoff(potential, rc)
    scale = 0.5 * np.sqrt(t0 / N) if proposal_scale is None else proposal_scale
    tk = np.array(potential.tk, dtype=complex)
    powers = potential.degree + 3
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))

    # dispersed start: uniform in the disc of radius 2 sqrt(t0)
    rad = 2 * np.sqrt(t0) * np.sqrt(rng.random(N))
    z = (rad * np.exp(2j * np.pi * rng.random(N))).astype(complex)
    tab, logw = _full_log_weight(z, tk, t0, float(N))

    width = 2 * rc / bins
    hist = np.zeros((bins, bins))
    kept = sweeps - burn_in
    obs = np.zeros((kept, powers), dtype=complex)
    counts = np.zeros(kept, dtype=np.int64)
    trace = np.zeros(sweeps)
    radius2 = -1.0 if disc_radius is None else disc_radius**2
    samples = []
    accepted_total = 0
    drift = 0.0
    done = 0
    since_refresh = 0
    window_acc = 0
    window_n = 0
    while done < sweeps:
        record = done >= burn_in
        limit = sweeps if record else burn_in
        m = min(CHUNK_SWEEPS, limit - done, REFRESH_SWEEPS - since_refresh)
        if not record:
            m = min(m, 100)
        gauss = rng.standard_normal((m, N, 2))
        unif = rng.random((m, N))
        off = done - burn_in
        if record:
            o, c = obs[off : off + m], counts[off : off + m]
        else:
            o, c = np.zeros((m, powers), dtype=complex), np.zeros(m, dtype=np.int64)
        snap = np.zeros((m if record else 0, N), dtype=complex)
        acc, logw = _chunk(z, tab, logw, tk, t0, float(N), rc * rc, scale, gauss, unif, powers, o,
                           trace[done : done + m], hist, -rc, width, bins, radius2, c, snap, record)
        if record:
            keep = (off + np.arange(m)) % thin == 0
            samples.append(snap[keep].ravel())
            accepted_total += acc
        else:
            window_acc += acc
            window_n += m * N
            if window_n >= 100 * N:
                rate = window_acc / window_n
                if rate < 0.3:
                    scale *= 0.8
                elif rate > 0.5:
                    scale *= 1.25
                window_acc = window_n = 0
        done += m
        since_refresh += m
        if since_refresh >= REFRESH_SWEEPS:
            tab, fresh = _full_log_weight(z, tk, t0, float(N))
            drift = max(drift, abs(fresh - logw) / max(abs(fresh), 1.0))
            logw = fresh
            since_refresh = 0
    scaled = obs * (t0 / N)
    mean, se = batch_means(scaled, min(batches, kept))
    state = GasState(z.copy(), float(logw), sweeps, accepted_total, seed, float(scale), float(drift))
    measure = EmpiricalMeasure(hist, -rc, width, np.concatenate(samples) if samples else np.zeros(0, complex))
    config = {
        "t0": t0,
        "tk": [[t.real, t.imag] for t in potential.tk],
        "N": N,
        "sweeps": sweeps,
        "burn_in": burn_in,
        "seed": seed,
        "cutoff": rc,
        "bins": bins,
    }
    return GasRun(state, measure, mean, se, -trace / N**2, counts if disc_radius is not None else None, config)


# ---------------------------------------------------------------------------
# point-in-region


@njit(cache=True)
def _inside_banded(px, py, ex0, ey0, ex1, ey1, band_lo, band_h, starts, index):
    out = np.zeros(px.shape[0], dtype=np.bool_)
    nb = starts.shape[0] - 1
    for p in range(px.shape[0]):
        b = int((py[p] - band_lo) / band_h)
        if b < 0 or b >= nb:
            continue
        crossings = 0
        for q in range(starts[b], starts[b + 1]):
            e = index[q]
            y0 = ey0[e]
            y1 = ey1[e]
            if (y0 > py[p]) != (y1 > py[p]):
                xc = ex0[e] + (py[p] - y0) * (ex1[e] - ex0[e]) / (y1 - y0)
                if xc > px[p]:
                    crossings += 1
        out[p] = crossings % 2 == 1
    return out


def boundary_polyline(curve: PolynomialCurve, nodes: int = BOUNDARY_NODES) -> np.ndarray:
    return eval_map(curve, np.exp(2j * np.pi * np.arange(nodes) / nodes))


def points_inside(boundary: np.ndarray, points) -> np.ndarray:
    """Point-in-region test against a closed polyline.

    Crossing parity along a horizontal ray, which equals the winding number
    for simple curves.  Edges are bucketed into horizontal bands so each
    point only visits the edges of its band.
    """
    pts = np.asarray(points, dtype=complex)
    shape = pts.shape
    pts = pts.ravel()
    b0 = np.asarray(boundary, dtype=complex)
    b1 = np.roll(b0, -1)
    ylo, yhi = float(np.min(b0.imag)), float(np.max(b0.imag))
    nbands = max(1, len(b0) // 8)
    h = (yhi - ylo) / nbands * (1 + 1e-12) or 1.0
    e_lo = np.minimum(b0.imag, b1.imag)
    e_hi = np.maximum(b0.imag, b1.imag)
    first = np.clip(((e_lo - ylo) / h).astype(int), 0, nbands - 1)
    last = np.clip(((e_hi - ylo) / h).astype(int), 0, nbands - 1)
    lists = [[] for _ in range(nbands)]
    for e, (a, b) in enumerate(zip(first, last)):
        for band in range(a, b + 1):
            lists[band].append(e)
    starts = np.zeros(nbands + 1, dtype=np.int64)
    starts[1:] = np.cumsum([len(x) for x in lists])
    index = np.array([e for x in lists for e in x], dtype=np.int64)
    out = _inside_banded(pts.real.copy(), pts.imag.copy(), b0.real.copy(), b0.imag.copy(), b1.real.copy(), b1.imag.copy(), ylo, h, starts, index)
    return out.reshape(shape)


def _distance_to_polyline(boundary: np.ndarray, points: np.ndarray) -> np.ndarray:
    # nearest boundary node; nodes are dense enough for layer tests
    pts = np.asarray(points, dtype=complex).ravel()
    best = np.full(pts.shape, np.inf)
    for chunk in np.array_split(boundary, max(1, len(boundary) // 512)):
        best = np.minimum(best, np.min(np.abs(pts[:, None] - chunk[None, :]), axis=1))
    return best.reshape(np.shape(points))


# ---------------------------------------------------------------------------
# comparison with the equilibrium measure


@dataclass
class DensityReport:
    interior_mass: float
    exterior_far_mass: float
    target_density: float
    interior_bins: int
    mean_density: float
    max_relative_deviation: float
    mean_relative_deviation: float

    def to_json(self) -> dict:
        return dict(self.__dict__)


def density_compare(measure: EmpiricalMeasure, curve: PolynomialCurve, t0: float, N: int) -> DensityReport:
    """Compare an empirical measure with the uniform density 1/(pi t0) on the
    curve's interior.

    Interior bins have all four corners inside and their centres at least
    2 sqrt(t0/N) away from the boundary.  The far
    exterior is the set at distance above half the curve diameter.
    """
    boundary = boundary_polyline(curve)
    samples = measure.samples
    inside = points_inside(boundary, samples)
    interior_mass = float(np.mean(inside))
    diameter = float(np.max(np.abs(boundary[:, None] - boundary[None, ::16])))
    outside = samples[~inside]
    far = _distance_to_polyline(boundary, outside) > 0.5 * diameter if len(outside) else np.zeros(0, bool)
    far_mass = float(np.count_nonzero(far) / max(len(samples), 1))

    centers = measure.centers()
    layer = 2 * np.sqrt(t0 / N)
    half = measure.width / 2
    mask = _distance_to_polyline(boundary, centers) > layer
    for corner in (half + half * 1j, half - half * 1j, -half + half * 1j, -half - half * 1j):
        mask &= points_inside(boundary, centers + corner)
    target = 1 / (np.pi * t0)
    dens = measure.density[mask]
    if dens.size:
        rel = np.abs(dens - target) / target
        mean_d, max_rel, mean_rel = float(dens.mean()), float(rel.max()), float(rel.mean())
    else:
        mean_d = max_rel = mean_rel = float("nan")
    return DensityReport(interior_mass, far_mass, target, int(mask.sum()), mean_d, max_rel, mean_rel)


# ---------------------------------------------------------------------------
# effective field


def _log_cell_primitive(x, y):
    # F with F_xy = log(x^2 + y^2); F = 0 on the axes
    r2 = x * x + y * y
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = np.where(r2 > 0, x * y * np.log(np.where(r2 > 0, r2, 1.0)), 0.0)
        t2 = np.where(x != 0, x * x * np.arctan(y / np.where(x != 0, x, 1.0)), 0.0)
        t3 = np.where(y != 0, y * y * np.arctan(x / np.where(y != 0, y, 1.0)), 0.0)
    return t1 - 3 * x * y + t2 + t3


def log_cell_average(center: complex, half: float, point: complex) -> float:
    """Average of log|zeta - point| over the square cell of half-width ``half``."""
    x0 = center.real - half - point.real
    x1 = center.real + half - point.real
    y0 = center.imag - half - point.imag
    y1 = center.imag + half - point.imag
    total = _log_cell_primitive(x1, y1) - _log_cell_primitive(x0, y1) - _log_cell_primitive(x1, y0) + _log_cell_primitive(x0, y0)
    return float(total / 2 / (2 * half) ** 2)


@dataclass
class FieldGrid:
    """Midpoint cells of the curve's bounding box that lie inside it."""

    centers: np.ndarray
    h: float

    @classmethod
    def build(cls, curve: PolynomialCurve, n: int = 1200) -> "FieldGrid":
        b = boundary_polyline(curve)
        xlo, xhi = b.real.min(), b.real.max()
        ylo, yhi = b.imag.min(), b.imag.max()
        h = max(xhi - xlo, yhi - ylo) / n
        xs = xlo + h * (np.arange(int(np.ceil((xhi - xlo) / h))) + 0.5)
        ys = ylo + h * (np.arange(int(np.ceil((yhi - ylo) / h))) + 0.5)
        c = (xs[:, None] + 1j * ys[None, :]).ravel()
        return cls(c[points_inside(b, c)], float(h))

    def log_potential(self, z: complex) -> float:
        """sum over cells of h^2 (log|zeta| - log|z - zeta|) with exact
        averages in the cells holding the two singularities."""
        c = self.centers
        h = self.h
        with np.errstate(divide="ignore"):
            at_origin = np.log(np.abs(c))
            at_z = np.log(np.abs(z - c))
        for p, values in ((0j, at_origin), (z, at_z)):
            hit = np.flatnonzero((np.abs(c.real - p.real) <= h / 2) & (np.abs(c.imag - p.imag) <= h / 2))
            for i in hit:
                values[i] = log_cell_average(c[i], h / 2, p)
        return float(h * h * np.sum(at_origin - at_z))


@dataclass
class FieldReport:
    z: complex
    value: float
    gradient_residual: float | None

    def to_json(self) -> dict:
        return {"z": [self.z.real, self.z.imag], "value": self.value, "gradient_residual": self.gradient_residual}


def effective_field(
    curve: PolynomialCurve,
    potential: PotentialSpec,
    z: complex,
    grid: FieldGrid | None = None,
    n: int = 1200,
    step: float = 1e-5,
    boundary_tol: float = 1e-3,
) -> FieldReport:
    """E(z) = V(z) + (2/(pi t0)) integral over D of log|z/zeta - 1|^-1.

    For exterior z the report also carries |dE/dzbar - (z - rho(z))/t0| with
    the derivative from central differences and rho the Schwarz reflection.
    """
    boundary = boundary_polyline(curve)
    if _distance_to_polyline(boundary, np.array([z]))[0] <= boundary_tol:
        raise ValueError("z lies in the boundary layer")
    grid = FieldGrid.build(curve, n) if grid is None else grid
    t0 = potential.t0

    def E(p):
        return float(_potential_values(potential, p)) + 2 / (np.pi * t0) * grid.log_potential(p)

    value = E(z)
    residual = None
    if not points_inside(boundary, np.array([z]))[0]:
        ex = (E(z + step) - E(z - step)) / (2 * step)
        ey = (E(z + 1j * step) - E(z - 1j * step)) / (2 * step)
        dzbar = 0.5 * (ex + 1j * ey)
        residual = float(abs(dzbar - (z - schwarz_reflection(curve, z)) / t0))
    return FieldReport(complex(z), value, residual)


def circle_effective_field(t0: float, z):
    """Exact E for V = |z|^2/t0: zero inside, (|z|^2 - t0 - t0 log(|z|^2/t0))/t0 outside."""
    r2 = np.abs(np.asarray(z)) ** 2
    with np.errstate(divide="ignore"):
        out = (r2 - t0 - t0 * np.log(r2 / t0)) / t0
    return np.where(r2 <= t0, 0.0, out)


# ---------------------------------------------------------------------------
# level spacing


@dataclass
class LevelSpacingMC:
    x: float
    probabilities: np.ndarray
    stderr: np.ndarray
    samples: int

    def to_json(self) -> dict:
        return {
            "x": self.x,
            "samples": self.samples,
            "table": [{"n": n, "p": float(p), "stderr": float(s)} for n, (p, s) in enumerate(zip(self.probabilities, self.stderr))],
        }


def level_spacing_mc(t0: float, N: int, x: float, sweeps: int, burn_in: int, seed: int = 0, batches: int = 50) -> LevelSpacingMC:
    """Empirical distribution of the number of eigenvalues in the disc of
    radius sqrt(x/N) about the origin, for V = |z|^2/t0.

    Standard errors are batch means, floored by the independent-sample
    binomial error.
    """
    pot = PotentialSpec(t0, (), N)
    run = mcmc_run(pot, sweeps, burn_in, seed, disc_radius=np.sqrt(x / N), bins=8, batches=batches)
    c = run.disc_counts
    onehot = (c[:, None] == np.arange(N + 1)[None, :]).astype(float)
    p, se = batch_means(onehot, batches)
    se = np.maximum(se, np.sqrt(p * (1 - p) / len(c)))
    return LevelSpacingMC(x, p, se, len(c))


# ---------------------------------------------------------------------------
# output


def write_histogram_csv(path, measure: EmpiricalMeasure) -> None:
    centers = measure.centers()
    mass = measure.mass
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["ix", "iy", "center_re", "center_im", "mass"])
        for ix in range(mass.shape[0]):
            for iy in range(mass.shape[1]):
                c = centers[ix, iy]
                w.writerow([ix, iy, f"{c.real:.17g}", f"{c.imag:.17g}", f"{mass[ix, iy]:.17g}"])


def write_run_json(path, run: GasRun, extra: dict | None = None) -> None:
    data = run.to_json()
    if extra:
        data.update(extra)
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
