"""Simultaneous polynomial root finding (Aberth-Ehrlich) with Newton polish."""

from __future__ import annotations

from typing import Callable

import numpy as np


class RootFindingError(RuntimeError):
    """Raised when the simultaneous iteration fails to converge."""


Evaluator = Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]


def _horner(coeffs: np.ndarray) -> Evaluator:
    # coeffs in descending powers
    def evaluate(z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        p = np.full_like(z, coeffs[0])
        dp = np.zeros_like(z)
        for c in coeffs[1:]:
            dp = dp * z + p
            p = p * z + c
        return p, dp

    return evaluate


def _cauchy_radius(coeffs: np.ndarray) -> float:
    # upper bound on root moduli
    lead = abs(coeffs[0])
    return 1.0 + float(np.max(np.abs(coeffs[1:]) / lead)) if len(coeffs) > 1 else 1.0


def initial_ring(degree: int, radius: float, seed: int = 0) -> np.ndarray:
    """Randomly perturbed ring of starting points (deterministic for a given seed)."""
    rng = np.random.default_rng(seed)
    k = np.arange(degree)
    phase = 2 * np.pi * k / degree + 0.4 + 0.25 * rng.standard_normal(degree) / max(degree, 1)
    rad = radius * (1.0 + 0.05 * rng.standard_normal(degree))
    return rad * np.exp(1j * phase)


def aberth(
    evaluate: Evaluator,
    start: np.ndarray,
    tol: float = 1e-13,
    max_sweeps: int = 500,
) -> np.ndarray:
    """Aberth-Ehrlich iteration for a polynomial given by an evaluator.

    ``evaluate(z)`` must return ``(p(z), p'(z))`` for an array ``z``; the
    number of starting points equals the degree.
    """
    z = np.array(start, dtype=complex)
    n = len(z)
    if n == 0:
        return z
    active = np.ones(n, dtype=bool)
    for _ in range(max_sweeps):
        p, dp = evaluate(z)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(p == 0, 0.0, p / dp)
        diff = z[:, None] - z[None, :]
        np.fill_diagonal(diff, 1.0)
        repulsion = (1.0 / diff).sum(axis=1) - 1.0  # remove the diagonal 1/1
        with np.errstate(divide="ignore", invalid="ignore"):
            step = ratio / (1.0 - ratio * repulsion)
        step = np.where(np.isfinite(step), step, 0.0)
        step[~active] = 0.0
        z = z - step
        scale = np.maximum(np.abs(z), 1e-300)
        active = np.abs(step) > tol * scale
        if not active.any():
            break
    else:
        raise RootFindingError(f"Aberth iteration did not converge in {max_sweeps} sweeps")
    return newton_polish(evaluate, z, tol=tol)


def newton_polish(evaluate: Evaluator, z: np.ndarray, tol: float = 1e-13, steps: int = 3) -> np.ndarray:
    """A few guarded Newton steps; a step is kept only if it reduces |p|."""
    z = np.array(z, dtype=complex)
    p, dp = evaluate(z)
    for _ in range(steps):
        with np.errstate(divide="ignore", invalid="ignore"):
            step = np.where(dp != 0, p / dp, 0.0)
        step = np.where(np.isfinite(step), step, 0.0)
        trial = z - step
        pt, dpt = evaluate(trial)
        better = np.abs(pt) < np.abs(p)
        z = np.where(better, trial, z)
        p = np.where(better, pt, p)
        dp = np.where(better, dpt, dp)
        if np.all(np.abs(step) <= tol * np.maximum(np.abs(z), 1e-300)):
            break
    return z


def polynomial_roots(coeffs, tol: float = 1e-13, seed: int = 0, max_sweeps: int = 500) -> np.ndarray:
    """All roots of a polynomial with coefficients in descending powers.

    Leading zeros are stripped; trailing zeros give exact roots at the origin.
    """
    c = np.trim_zeros(np.asarray(coeffs, dtype=complex), "f")
    if len(c) == 0:
        raise ValueError("zero polynomial has no well-defined roots")
    zero_roots = 0
    while len(c) > 1 and c[-1] == 0:
        c = c[:-1]
        zero_roots += 1
    degree = len(c) - 1
    if degree == 0:
        return np.zeros(zero_roots, dtype=complex)
    c = c / c[0]
    if degree == 1:
        roots = np.array([-c[1]])
    else:
        # geometric-mean modulus of the roots as ring radius
        radius = abs(c[-1]) ** (1.0 / degree)
        radius = min(radius, _cauchy_radius(c))
        roots = aberth(_horner(c), initial_ring(degree, radius, seed), tol=tol, max_sweeps=max_sweeps)
    return np.concatenate([roots, np.zeros(zero_roots, dtype=complex)])
