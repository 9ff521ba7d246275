"""Fractional Dirichlet problems on balls, standard and k-divergent, and the multiplicity space.

Interior values of a solution are two kernel integrals (Green function against
the source, Poisson kernel against the exterior datum). Both are computed with
fixed graded Gauss rules in polar coordinates, so a solution field depends
smoothly on the evaluation point; this matters because fields are later fed
back into the operator module, whose principal values take second differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
from numpy.polynomial import chebyshev as C

from .errors import (GridTooCoarseError, NotInUkError, ParameterError, PreconditionError,
                     TailDivergenceError)
from .functions import FunctionHandle, restrict
from .kernels import FracParams, green_const, green_inner_integral, normalization_const, poisson_const
from .operator import chebyshev_grid, divergent_flap
from .polynomials import Polynomial, count_Nk, multi_indices
from .quadrature import QuadratureConfig, graded_rule, sphere_hits, sphere_product_rule

__all__ = [
    "DirichletSpec", "FieldRule", "SolutionField", "BallInterpolant", "solve_standard",
    "rhs_of_exterior_part", "solve_divergent", "monomial_source_solution", "multiplicity_basis",
    "count_Nk",
]

LOW_ACCURACY_FRACTION = 0.95
_CHUNK = 1_500_000  # kernel samples per vectorised block


@dataclass(frozen=True)
class FieldRule:
    """Fixed quadrature used to evaluate solution fields (fine rule and a coarser twin)."""

    levels: int = 12
    ratio: float = 0.15
    order: int = 10
    coarse_order: int = 7
    circle: int = 128
    sphere: int = 18

    def coarse(self) -> "FieldRule":
        return replace(self, order=self.coarse_order, circle=self.circle // 2, sphere=2 * self.sphere // 3)


def _directions(n, rule: FieldRule):
    if n == 1:
        return np.array([[1.0], [-1.0]]), np.array([1.0, 1.0])
    if n == 2:
        M = rule.circle
        th = 2.0 * math.pi * np.arange(M) / M
        return np.stack([np.cos(th), np.sin(th)], -1), np.full(M, 2.0 * math.pi / M)
    return sphere_product_rule(rule.sphere)


def _as_points(x, n):
    X = np.asarray(x, dtype=float)
    if n == 1:
        return X.reshape(-1, 1)
    return np.atleast_2d(X)


@dataclass
class DirichletSpec:
    """Problem data: (-Delta)^s u = f in B_r (mod polynomials of degree k-1), u = u0 off B_r."""

    radius: float
    source: FunctionHandle | None
    exterior: FunctionHandle | None
    k: int = 0

    def __post_init__(self):
        if self.radius <= 0:
            raise ParameterError("radius must be positive")
        if self.k < 0:
            raise ParameterError("order k must be non-negative")


class SolutionField:
    """u = Green(source) + Poisson(boundary) inside B_r, u = exterior outside.

    Parameters
    ----------
    params : FracParams
    radius : float
    source : FunctionHandle or None
        Right-hand side in the convention of ``params`` (rescaled internally).
    boundary : FunctionHandle or None
        Exterior datum fed to the Poisson integral.
    exterior : FunctionHandle or None
        Values returned outside B_r (defaults to ``boundary``).
    components : dict
        Free-form metadata describing how the field was built.
    """

    def __init__(self, params: FracParams, radius: float, source=None, boundary=None, exterior=None,
                 components=None, rule: FieldRule | None = None):
        self.params = params
        self.n = params.n
        self.s = params.s
        self.r = float(radius)
        self.source = source
        self.boundary = boundary
        self.exterior = boundary if exterior is None else exterior
        self.components = dict(components or {})
        self.rule = rule or FieldRule()
        # Green and Poisson kernels belong to the normalised operator
        self._source_scale = 1.0 if params.normalized else normalization_const(params.n, params.s)
        if boundary is not None and boundary.atoms:
            raise ParameterError("point masses are not supported in exterior data")

    # -- interior integrals --------------------------------------------------

    def _green_part(self, X, rule):
        n, s, r = self.n, self.s, self.r
        dirs, wdir = _directions(n, rule)
        tau, wtau = graded_rule(rule.levels, rule.ratio, rule.order)
        q = 1.0 / (2.0 * s) if (2.0 * s < n and s < 0.5) else 1.0
        kappa = green_const(n, s)
        out = np.zeros(X.shape[0])
        D, T = dirs.shape[0], tau.size
        step = max(1, _CHUNK // (D * T))
        for i0 in range(0, X.shape[0], step):
            x = X[i0:i0 + step]
            P = x.shape[0]
            rmax = sphere_hits(x[:, None, :], dirs[None, :, :], r)[1]  # (P, D)
            rho = rmax[..., None] * tau[None, None, :] ** q  # (P, D, T)
            y = x[:, None, None, :] + rho[..., None] * dirs[None, :, None, :]
            fy = self.source(y)
            # rho^{2s-n} * rho^{n-1} * d rho / d tau, combined to avoid underflow
            jac = rmax[..., None] ** (2.0 * s) * q * tau[None, None, :] ** (2.0 * s * q - 1.0)
            xr2 = np.sum(x * x, -1)[:, None, None]
            yr2 = np.sum(y * y, -1)
            with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
                r0 = np.maximum(r * r - xr2, 0.0) * np.maximum(r * r - yr2, 0.0) / (r * r * rho * rho)
            r0 = np.where(np.isfinite(r0), r0, 1e300)
            I = green_inner_integral(r0, n, s)
            vals = kappa * I * jac * fy
            out[i0:i0 + step] = np.einsum("pdt,t,d->p", vals, wtau, wdir)
        return out

    def _radial_pieces(self, rule):
        """Radial rules for |y| in (r, inf) against the exterior datum: (rho, weight*rho^{n-1}, sing_factor)."""
        g = self.boundary
        n, s, r = self.n, self.s, self.r
        tau, wtau = graded_rule(rule.levels, rule.ratio, rule.order)
        start = max(r, g.zero_inside)
        stop = g.support_radius
        if stop <= start:
            return np.zeros(0), np.zeros(0)
        inner = sorted(b for b in g.breaks if start < b < stop)
        T = max([2.0 * r, start * 1.5] + inner)
        if math.isfinite(stop):
            T = stop
        knots = [start] + [b for b in inner if b < T] + [T]
        rho_all, w_all = [], []
        for j, (a, b) in enumerate(zip(knots[:-1], knots[1:])):
            L = b - a
            if j == 0 and start == r:
                # absorb (rho - r)^{-s} through rho = r + L tau^{1/(1-s)}
                e = 1.0 / (1.0 - s)
                # small tau rounds rho to r itself; keep the datum sampled strictly outside
                rho = np.maximum(r + L * tau**e, np.nextafter(r, math.inf))
                w = wtau * L ** (1.0 - s) * e  # times (rho-r)^{s}: handled below
                rho_all.append(rho)
                w_all.append(w * (rho + r) ** (-s) * rho ** (n - 1.0))
            else:
                rho = a + L * tau
                rho_all.append(rho)
                w_all.append(wtau * L * (rho * rho - r * r) ** (-s) * rho ** (n - 1.0))
        if not math.isfinite(stop):
            gamma = g.tail_exponent
            q = 1.0 / (2.0 * s - gamma) if gamma > -math.inf else 1.0
            q = max(1.0, q)
            t = tau**q / T
            rho = 1.0 / t
            dt = q * tau ** (q - 1.0) / T
            rho_all.append(rho)
            w_all.append(wtau * dt * t ** (-n - 1.0) * (rho * rho - r * r) ** (-s))
        return np.concatenate(rho_all), np.concatenate(w_all)

    def _poisson_part(self, X, rule):
        n, s, r = self.n, self.s, self.r
        rho, w = self._radial_pieces(rule)
        if rho.size == 0:
            return np.zeros(X.shape[0])
        dirs, wdir = _directions(n, rule)
        y = rho[None, :, None] * dirs[:, None, :]  # (D, T, n)
        gy = self.boundary(y)
        base = gy * w[None, :]
        out = np.zeros(X.shape[0])
        D, T = y.shape[0], y.shape[1]
        step = max(1, _CHUNK // (D * T))
        for i0 in range(0, X.shape[0], step):
            x = X[i0:i0 + step]
            d = np.sqrt(np.sum((x[:, None, None, :] - y[None]) ** 2, -1))
            out[i0:i0 + step] = np.einsum("pdt,dt,d->p", d ** (-float(n)), base, wdir)
        fac = poisson_const(n, s) * np.maximum(r * r - np.sum(X * X, -1), 0.0) ** s
        return fac * out

    def _interior(self, X, rule):
        val = np.zeros(X.shape[0])
        if self.source is not None:
            val += self._source_scale * self._green_part(X, rule)
        if self.boundary is not None:
            val += self._poisson_part(X, rule)
        return val

    # -- public evaluation -----------------------------------------------------

    def evaluate(self, x, with_error: bool = True):
        """Values, error estimates and low-accuracy flags at the given points."""
        X = _as_points(x, self.n)
        rad = np.sqrt(np.sum(X * X, -1))
        inside = rad < self.r
        vals = np.zeros(X.shape[0])
        errs = np.zeros(X.shape[0])
        if np.any(~inside):
            vals[~inside] = self.exterior(X[~inside]) if self.exterior is not None else 0.0
        if np.any(inside):
            Xi = X[inside]
            fine = self._interior(Xi, self.rule)
            vals[inside] = fine
            if with_error:
                errs[inside] = np.abs(fine - self._interior(Xi, self.rule.coarse()))
        low = inside & (rad > LOW_ACCURACY_FRACTION * self.r)
        return vals, errs, low

    def __call__(self, x) -> np.ndarray:
        X = np.asarray(x, dtype=float)
        shape = X.shape[:-1] if (self.n > 1 or (X.ndim >= 1 and X.shape[-1] == 1)) else X.shape
        return self.evaluate(X.reshape(-1, self.n), with_error=False)[0].reshape(shape)

    def as_function(self, name: str = "u") -> FunctionHandle:
        """Wrap the field as a FunctionHandle for the operator module."""
        ext = self.exterior
        breaks = (self.r,) + (tuple(ext.breaks) if ext is not None else ())
        return FunctionHandle(
            n=self.n,
            eval=self.__call__,
            tail_exponent=ext.tail_exponent if ext is not None else -math.inf,
            m_avail=2,
            support_radius=max(self.r, ext.support_radius) if ext is not None else self.r,
            breaks=tuple(sorted(set(breaks))),
            name=name,
        )

    def surrogate(self, degree: int | None = None, grid_size: int | None = None):
        """Fit u / (r^2 - |x|^2)^s by a polynomial; returns (FunctionHandle, residual).

        Only meaningful for source-only fields with a smooth source, where this
        quotient extends smoothly to the closed ball (exactly polynomial for
        polynomial sources).
        """
        if self.boundary is not None:
            raise PreconditionError("surrogates need a field without exterior datum")
        if degree is None:
            degree = {1: 20, 2: 12, 3: 8}[self.n]
        interp = BallInterpolant.fit(
            lambda X: self(X) / (self.r**2 - np.sum(X * X, -1)) ** self.s,
            self.n, self.r, degree, grid_size, shrink=0.97,
        )
        r2, s = self.r**2, self.s

        def ev(x):
            return interp(x) * np.maximum(r2 - np.sum(x * x, -1), 0.0) ** s

        fn = FunctionHandle(n=self.n, eval=ev, tail_exponent=-math.inf, m_avail=2,
                            support_radius=self.r, breaks=(self.r,), name="surrogate",
                            eval_error=interp.error * r2**s)
        return fn, interp.error * r2**s


# ----------------------------------------------------------------------------
# smooth interpolants on balls
# ----------------------------------------------------------------------------


@lru_cache(maxsize=None)
def _index_array(n, degree):
    return np.array([a.components for a in multi_indices(n, degree)], dtype=int)


def _cheb_basis(X, radius, degree):
    """Total-degree tensor Chebyshev basis on [-radius, radius]^n."""
    n = X.shape[1]
    idx = _index_array(n, degree)
    out = C.chebvander(X[:, 0] / radius, degree)[:, idx[:, 0]]
    for i in range(1, n):
        out = out * C.chebvander(X[:, i] / radius, degree)[:, idx[:, i]]
    return out


@dataclass
class BallInterpolant:
    """Least-squares Chebyshev polynomial on a ball, with a validation error."""

    n: int
    radius: float
    degree: int
    coef: np.ndarray
    error: float

    @classmethod
    def fit(cls, fn, n, radius, degree, grid_size=None, shrink=1.0):
        if grid_size is None:
            grid_size = {1: 2 * degree + 2, 2: 2 * degree + 3, 3: 2 * degree + 1}[n]
        X = chebyshev_grid(n, grid_size, radius * shrink)
        V = _cheb_basis(X, radius, degree)
        if V.shape[0] < V.shape[1]:
            raise GridTooCoarseError("interpolation grid smaller than basis")
        vals = fn(X)
        coef, *_ = np.linalg.lstsq(V, vals, rcond=None)
        # validate on an offset grid
        Y = chebyshev_grid(n, grid_size + 1, radius * shrink * 0.995)
        err = float(np.max(np.abs(_cheb_basis(Y, radius, degree) @ coef - fn(Y))))
        err = max(err, float(np.max(np.abs(V @ coef - vals))))
        return cls(n, float(radius), degree, coef, err)

    def __call__(self, x):
        X = np.asarray(x, dtype=float)
        shape = X.shape[:-1]
        flat = X.reshape(-1, self.n)
        return (_cheb_basis(flat, self.radius, self.degree) @ self.coef).reshape(shape)

    def as_function(self, name="interpolant") -> FunctionHandle:
        return FunctionHandle(n=self.n, eval=self.__call__, tail_exponent=-math.inf, m_avail=10**6,
                              name=name, eval_error=self.error)


# ----------------------------------------------------------------------------
# solvers
# ----------------------------------------------------------------------------


def solve_standard(r: float, f: FunctionHandle | None, g_ext: FunctionHandle | None, params: FracParams,
                   cfg: QuadratureConfig | None = None, rule: FieldRule | None = None) -> SolutionField:
    """Solution of (-Delta)^s w = f in B_r, w = g_ext outside, by Green and Poisson integrals."""
    if g_ext is not None and not g_ext.tail_exponent < 2.0 * params.s:
        raise TailDivergenceError(
            f"exterior datum grows like |y|^{g_ext.tail_exponent:g}; int |g| / (1 + |y|^(n+2s)) diverges, "
            "use solve_divergent with a suitable k"
        )
    for h in (f, g_ext):
        if h is not None and h.n != params.n:
            raise ParameterError("dimension mismatch")
    return SolutionField(params, r, source=f, boundary=g_ext, rule=rule,
                         components={"kind": "standard", "radius": r})


def rhs_of_exterior_part(u0: FunctionHandle, params: FracParams, cfg: QuadratureConfig | None = None,
                         r: float = 1.0, degree: int | None = None) -> BallInterpolant:
    """f_{u1} for u1 = u0 restricted to |y| >= 2r, as a polynomial interpolant on B_r."""
    cfg = cfg or QuadratureConfig()
    u1 = restrict(u0, 2.0 * r, math.inf)
    if degree is None:
        degree = {1: 24, 2: 14, 3: 8}[params.n]
    if u1.support_radius <= 2.0 * r and not u1.atoms:
        return BallInterpolant(params.n, r, 0, np.zeros(len(multi_indices(params.n, 0))), 0.0)

    def fn(X):
        return divergent_flap(u1, X, params, cfg, inner_radius=2.0 * r).value

    return BallInterpolant.fit(fn, params.n, r, degree)


def solve_divergent(spec: DirichletSpec, params: FracParams, cfg: QuadratureConfig | None = None,
                    rule: FieldRule | None = None) -> SolutionField:
    """Solution of the k-divergent problem: u = u0 outside B_r, (-Delta)^s u = f mod degree k-1 inside."""
    cfg = cfg or QuadratureConfig()
    params = params.with_k(spec.k)
    r = spec.radius
    u0 = spec.exterior
    if u0 is not None and not u0.in_Uk(params.s, params.k):
        raise NotInUkError(
            f"exterior datum grows like |y|^{u0.tail_exponent:g}; int |u0| / (1 + |y|^(n+2s+k)) diverges "
            f"for s={params.s:g}, k={params.k}"
        )
    if u0 is None:
        return SolutionField(params, r, source=spec.source, rule=rule, components={"kind": "divergent"})
    u2 = restrict(u0, r, 2.0 * r)
    f1 = rhs_of_exterior_part(u0, params, cfg, r)
    source = f1.as_function("f_u1") * -1.0
    if spec.source is not None:
        source = spec.source + source
    field = SolutionField(params, r, source=source, boundary=u2, exterior=u0, rule=rule,
                          components={"kind": "divergent", "f_u1_fit_error": f1.error, "radius": r})
    field.components["f_u1"] = f1
    return field


def monomial_source_solution(P: Polynomial, params: FracParams, cfg: QuadratureConfig | None = None,
                             r: float = 1.0, rule: FieldRule | None = None) -> SolutionField:
    """u_P: (-Delta)^s u_P = P in B_r, u_P = 0 outside."""
    if P.degree > params.k - 1:
        raise ParameterError(f"source degree {P.degree} exceeds k-1 = {params.k - 1}")
    from .functions import polynomial
    return SolutionField(params, r, source=polynomial(P), rule=rule,
                         components={"kind": "u_P", "P": P.to_dict()})


@dataclass
class MultiplicityBasis:
    fields: list
    monomials: list
    gram: np.ndarray
    singular_values: np.ndarray
    rank: int
    expected: int


def multiplicity_basis(params: FracParams, cfg: QuadratureConfig | None = None,
                       grid_size: int | None = None) -> MultiplicityBasis:
    """u_P for each monomial of degree <= k-1, with Gram matrix on a B_1 grid and its numerical rank."""
    mons = multi_indices(params.n, params.k - 1)
    fields = [monomial_source_solution(Polynomial.monomial(a.components), params, cfg) for a in mons]
    N = count_Nk(params.n, params.k)
    if not fields:
        return MultiplicityBasis([], [], np.zeros((0, 0)), np.zeros(0), 0, N)
    X = chebyshev_grid(params.n, grid_size)
    V = np.stack([f(X) for f in fields])
    gram = V @ V.T / X.shape[0]
    sv = np.linalg.svd(gram, compute_uv=False)
    rank = int(np.sum(sv > 1e-8 * sv[0])) if sv[0] > 0 else 0
    return MultiplicityBasis(fields, [a.components for a in mons], gram, sv, rank, N)
