"""Multi-indices and multivariate polynomials in the monomial basis."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import GridTooCoarseError


@dataclass(frozen=True, order=True)
class MultiIndex:
    components: tuple[int, ...]

    def __post_init__(self):
        comps = tuple(int(c) for c in self.components)
        if any(c < 0 for c in comps):
            raise ValueError(f"negative multi-index component in {comps}")
        object.__setattr__(self, "components", comps)

    @property
    def order(self) -> int:
        return sum(self.components)

    @property
    def n(self) -> int:
        return len(self.components)

    def factorial(self) -> int:
        return math.prod(math.factorial(c) for c in self.components)

    def monomial(self, points) -> np.ndarray:
        """Evaluate x**alpha at points of shape (..., n)."""
        points = np.asarray(points, dtype=float)
        out = np.ones(points.shape[:-1])
        for i, c in enumerate(self.components):
            if c:
                out = out * points[..., i] ** c
        return out

    def __iter__(self):
        return iter(self.components)

    def __len__(self):
        return len(self.components)


def multi_indices(n: int, max_order: int, min_order: int = 0) -> list[MultiIndex]:
    """All multi-indices of n components with min_order <= |alpha| <= max_order.

    Graded lexicographic order: by total order first, then lexicographically
    descending in the components (x^2 before xy before y^2).
    """
    out = []
    for d in range(max(min_order, 0), max_order + 1):
        level = [c for c in itertools.product(range(d, -1, -1), repeat=n) if sum(c) == d]
        out.extend(MultiIndex(c) for c in level)
    return out


def monomial_count(n: int, degree: int) -> int:
    """Number of monomials of degree <= ``degree`` in n variables."""
    if degree < 0:
        return 0
    return math.comb(degree + n, n)


def count_Nk(n: int, k: int) -> int:
    """Dimension of the polynomials of degree at most k-1 in n variables.

    Evaluated as the sum over j < k of binom(j + n - 1, n - 1).
    """
    if n < 1 or k < 0:
        raise ValueError("count_Nk needs n >= 1 and k >= 0")
    return sum(math.comb(j + n - 1, n - 1) for j in range(k))


def vandermonde(points, degree: int) -> tuple[np.ndarray, list[MultiIndex]]:
    points = np.atleast_2d(np.asarray(points, dtype=float))
    idx = multi_indices(points.shape[-1], degree)
    if not idx:
        return np.zeros((points.shape[0], 0)), idx
    return np.stack([a.monomial(points) for a in idx], axis=-1), idx


@dataclass
class Polynomial:
    """Multivariate polynomial stored as {MultiIndex: coefficient}."""

    n: int
    coeffs: dict = field(default_factory=dict)

    def __post_init__(self):
        clean = {}
        for a, c in self.coeffs.items():
            a = a if isinstance(a, MultiIndex) else MultiIndex(tuple(a))
            if len(a) != self.n:
                raise ValueError(f"multi-index {a.components} has wrong length for n={self.n}")
            clean[a] = clean.get(a, 0.0) + float(c)
        self.coeffs = clean

    @classmethod
    def monomial(cls, alpha, coef: float = 1.0) -> "Polynomial":
        alpha = alpha if isinstance(alpha, MultiIndex) else MultiIndex(tuple(alpha))
        return cls(alpha.n, {alpha: coef})

    @classmethod
    def zero(cls, n: int) -> "Polynomial":
        return cls(n, {})

    @property
    def degree(self) -> int:
        nz = [a.order for a, c in self.coeffs.items() if c != 0.0]
        return max(nz) if nz else -1

    def __call__(self, points) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        out = np.zeros(points.shape[:-1])
        for a, c in self.coeffs.items():
            out = out + c * a.monomial(points)
        return out

    def derivative(self, alpha, points) -> np.ndarray:
        alpha = tuple(alpha)
        points = np.asarray(points, dtype=float)
        out = np.zeros(points.shape[:-1])
        for a, c in self.coeffs.items():
            comps = a.components
            if any(ai < di for ai, di in zip(comps, alpha)):
                continue
            fac = c
            for ai, di in zip(comps, alpha):
                fac *= math.perm(ai, di)
            out = out + fac * MultiIndex(tuple(ai - di for ai, di in zip(comps, alpha))).monomial(points)
        return out

    def __add__(self, other: "Polynomial") -> "Polynomial":
        merged = dict(self.coeffs)
        for a, c in other.coeffs.items():
            merged[a] = merged.get(a, 0.0) + c
        return Polynomial(self.n, merged)

    def __mul__(self, scalar: float) -> "Polynomial":
        return Polynomial(self.n, {a: c * scalar for a, c in self.coeffs.items()})

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-other)

    def to_dict(self) -> dict:
        return {"n": self.n, "terms": [[list(a.components), c] for a, c in sorted(self.coeffs.items())]}


def fit_polynomial(points, values, degree: int) -> tuple[Polynomial, np.ndarray]:
    """Least-squares polynomial of total degree <= ``degree`` (SVD solve).

    Returns the polynomial and the residual ``values - q(points)``.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    values = np.asarray(values, dtype=float)
    n = points.shape[-1]
    if degree < 0:
        return Polynomial.zero(n), values.copy()
    V, idx = vandermonde(points, degree)
    if V.shape[0] < V.shape[1]:
        raise GridTooCoarseError(
            f"{V.shape[0]} grid points cannot determine {V.shape[1]} coefficients of degree {degree}"
        )
    coef, *_ = np.linalg.lstsq(V, values, rcond=None)
    q = Polynomial(n, dict(zip(idx, coef)))
    return q, values - V @ coef
