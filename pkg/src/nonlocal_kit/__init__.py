"""Numerical toolkit for fractional Laplacians of functions with polynomial growth.

Modules
-------
kernels      closed-form kernels and constants
quadrature   adaptive integration for singular, improper and exterior integrals
operator     classical and k-divergent fractional Laplacians, truncations
dirichlet    standard and divergent Dirichlet problems on balls
approx       s-harmonic shadowing, linear and nonlinear
oracle       Monte Carlo and brute-force cross-checks
cli          command-line entry point
"""

__version__ = "0.1.0"

from .kernels import FracParams  # noqa: E402,F401
from .quadrature import QuadratureConfig  # noqa: E402,F401
