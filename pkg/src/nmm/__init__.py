"""Numerical laboratory for the normal matrix model.

Modules: ``curvegeom`` (polynomial curves and harmonic moments),
``schwarz`` (Schwarz functions and zero-density laws), ``toda``
(dispersionless flows), ``orthopoly`` (orthogonal polynomials, kernels,
string equation), ``gas`` (Coulomb-gas Monte Carlo) and ``cli``.
"""

__version__ = "0.1.0"
