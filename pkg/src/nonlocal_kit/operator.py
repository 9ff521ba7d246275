"""Classical and k-divergent fractional Laplacians, truncations, and polynomial-class comparison.

The k-divergent operator returns the representative

    f_u(x) = PV int_{B_2} (u(x) - u(y)) K(x,y) dy + u(x) int_{B_2^c} K(x,y) dy
             - int_{B_2^c} u(y) [K(x,y) - T_k(x,y)] dy,

where K(x,y) = |x-y|^{-(n+2s)} and T_k is the Taylor polynomial of degree k-1
of K in x about 0. Any other choice differs by a polynomial of degree k-1 on
B_1, so comparisons go through :func:`mod_poly_distance`.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, NotInUkError, ParameterError, PreconditionError, TailDivergenceError
from .functions import FunctionHandle, restrict
from .kernels import FracParams, kernel_x_derivative, sphere_area, taylor_remainder
from .polynomials import Polynomial, fit_polynomial, multi_indices
from .quadrature import QuadratureConfig, QuadResult, integrate_rays, pv_second_difference, sphere_hits

DEFAULT_GRID_SIZE = {1: 33, 2: 13, 3: 9}


def chebyshev_grid(n: int, size: int | None = None, radius: float = 1.0) -> np.ndarray:
    """Chebyshev points of the first kind, tensorised for n >= 2 and clipped to the open ball."""
    size = DEFAULT_GRID_SIZE[n] if size is None else int(size)
    t = radius * np.cos((2 * np.arange(size) + 1) * math.pi / (2 * size))[::-1]
    if n == 1:
        return t[:, None]
    mesh = np.stack(np.meshgrid(*([t] * n), indexing="ij"), axis=-1).reshape(-1, n)
    return mesh[np.sum(mesh * mesh, axis=1) < radius * radius]


def _points(x, n):
    X = np.asarray(x, dtype=float)
    scalar = X.ndim == 0 or (X.ndim == 1 and (n != 1 or X.size == 1) and X.shape[-1] == n)
    if n == 1:
        X = X.reshape(-1, 1)
    else:
        X = np.atleast_2d(X)
        if X.shape[-1] != n:
            raise DomainError(f"points must have last axis {n}")
    return X, scalar


def _finish(value, error, conv, scalar):
    if scalar:
        return QuadResult(float(value[0]), float(error[0]), bool(conv[0]))
    return QuadResult(np.asarray(value), np.asarray(error), np.asarray(conv))


def _raw(params: FracParams) -> FracParams:
    return FracParams(params.n, params.s, params.k, False)


def _riesz(X, y, p):
    d = np.sqrt(np.sum((X - y) ** 2, axis=-1))
    return d ** (-p)


def _local_part(u, X, params, cfg):
    """Near field over B_delta(x) plus the exact u(x) * int_{|z|>delta} |z|^{-p} dz."""
    near = pv_second_difference(u, X, params.s, cfg)
    delta = cfg.split_radius
    far_const = sphere_area(params.n) * delta ** (-2.0 * params.s) / (2.0 * params.s)
    return near.value + u(X) * far_const, near.error, near.converged


def _atom_terms(u, X, params, kernel_for):
    out = np.zeros(X.shape[0])
    for a, mass in u.atoms:
        a = np.asarray(a, dtype=float).reshape(params.n)
        out -= mass * kernel_for(X, a)
    return out


def classical_flap(u: FunctionHandle, x, params: FracParams, cfg: QuadratureConfig | None = None) -> QuadResult:
    """Fractional Laplacian PV int (u(x) - u(y)) |x-y|^{-(n+2s)} dy (times c(n,s) if normalised).

    ``x`` is a single point or an array of points; the result carries value,
    error estimate and convergence flag in matching shape.
    """
    cfg = cfg or QuadratureConfig()
    if u.n != params.n:
        raise DomainError("dimension mismatch between function and parameters")
    if not u.tail_exponent < 2.0 * params.s:
        raise TailDivergenceError(
            f"{u.name} grows like |y|^{u.tail_exponent:g} and int |u| / (1 + |y|^(n+2s)) diverges "
            f"for s={params.s:g}; use divergent_flap with k > {u.tail_exponent - 2 * params.s:g}"
        )
    X, scalar = _points(x, params.n)
    p = params.p
    val, err, conv = _local_part(u, X, params, cfg)
    S = u.support_radius
    if math.isfinite(S):
        def hi(c, th):
            far = sphere_hits(c, th, S)[1]
            return np.where(np.isfinite(far), np.maximum(far, cfg.split_radius), cfg.split_radius)
    else:
        hi = math.inf
    far = integrate_rays(lambda pi, rho, y: u(y) * rho ** (-p), X, cfg.split_radius, hi, cfg, breaks=u.breaks)
    val = val - far.value + _atom_terms(u, X, params, lambda X_, a: _riesz(X_, a, p))
    err = err + far.error
    conv = conv & far.converged
    return _finish(params.scale * val, params.scale * err, conv, scalar)


def divergent_flap(u: FunctionHandle, x, params: FracParams, cfg: QuadratureConfig | None = None,
                   inner_radius: float = 2.0) -> QuadResult:
    """Canonical representative of the order-k divergent fractional Laplacian on B_{inner_radius/2}."""
    cfg = cfg or QuadratureConfig()
    if u.n != params.n:
        raise DomainError("dimension mismatch between function and parameters")
    if not u.in_Uk(params.s, params.k):
        raise NotInUkError(
            f"{u.name} grows like |y|^{u.tail_exponent:g}, so int |u| / (1 + |y|^(n+2s+k)) diverges "
            f"for s={params.s:g}, k={params.k}; need growth exponent < 2s+k = {2 * params.s + params.k:g}"
        )
    X, scalar = _points(x, params.n)
    if np.any(np.sqrt(np.sum(X * X, axis=1)) >= inner_radius / 2.0):
        raise DomainError(f"divergent_flap evaluates only inside B_{inner_radius / 2.0:g}")
    p = params.p
    raw = _raw(params)
    P = X.shape[0]
    val = np.zeros(P)
    err = np.zeros(P)
    conv = np.ones(P, bool)

    near_needed = u.zero_inside < inner_radius
    if near_needed:
        v, e, c = _local_part(u, X, params, cfg)
        val += v
        err += e
        conv &= c

        def hi_inner(c_, th):
            return sphere_hits(c_, th, inner_radius)[1]

        mid = integrate_rays(lambda pi, rho, y: u(y) * rho ** (-p), X, cfg.split_radius, hi_inner, cfg,
                             breaks=u.breaks)
        val -= mid.value
        err += mid.error
        conv &= mid.converged

    if u.support_radius > inner_radius:
        def outer(pi, rho, y):
            return u(y) * taylor_remainder(raw, X[pi], y)

        lo = max(inner_radius, u.zero_inside)
        hi = u.support_radius
        ext = integrate_rays(outer, np.zeros((P, params.n)), lo, hi, cfg, breaks=u.breaks)
        val -= ext.value
        err += ext.error
        conv &= ext.converged

    def atom_kernel(X_, a):
        if np.linalg.norm(a) < inner_radius:
            return _riesz(X_, a, p)
        return taylor_remainder(raw, X_, np.broadcast_to(a, X_.shape))

    val += _atom_terms(u, X, params, atom_kernel)
    return _finish(params.scale * val, params.scale * err, conv, scalar)


# ----------------------------------------------------------------------------
# truncation family
# ----------------------------------------------------------------------------


@dataclass
class TruncationReport:
    R: float
    points: np.ndarray
    f_R: np.ndarray
    P_R: Polynomial
    residual_to_limit: float
    error: float = 0.0

    def to_dict(self) -> dict:
        return {
            "R": self.R,
            "P_R": self.P_R.to_dict(),
            "residual_to_limit": self.residual_to_limit,
            "error": self.error,
            "points": self.points.tolist(),
            "f_R": self.f_R.tolist(),
        }


def compensation_polynomial(u: FunctionHandle, R: float, params: FracParams,
                            cfg: QuadratureConfig | None = None) -> tuple[Polynomial, float]:
    """P_R(x) = -sum_{|a|<=k-1} x^a/a! int_{2<|y|<R} u(y) d^a_x K(0,y) dy, with its error estimate."""
    cfg = cfg or QuadratureConfig()
    coeffs = {}
    total_err = 0.0
    origin = np.zeros((1, params.n))
    lo = max(2.0, u.zero_inside)
    hi = min(R, u.support_radius)
    for a in multi_indices(params.n, params.k - 1):
        if hi <= lo:
            coeffs[a.components] = 0.0
            continue
        res = integrate_rays(lambda pi, rho, y: u(y) * kernel_x_derivative(params, a.components, y),
                             origin, lo, hi, cfg, breaks=u.breaks)
        atom_sum = sum(
            m * float(kernel_x_derivative(params, a.components, np.asarray(pt, float).reshape(1, -1))[0])
            for pt, m in u.atoms if lo <= np.linalg.norm(pt) < hi
        )
        coeffs[a.components] = -(float(res.value[0]) + atom_sum) / a.factorial()
        total_err += float(res.error[0]) / a.factorial()
    return Polynomial(params.n, coeffs), total_err


def truncated_flap(u: FunctionHandle, points, R: float, params: FracParams,
                   cfg: QuadratureConfig | None = None, limit: np.ndarray | None = None) -> TruncationReport:
    """f_R = classical operator of u * 1_{B_R} minus P_R, sampled on ``points``.

    ``limit`` may pass precomputed divergent_flap values on the same points.
    """
    cfg = cfg or QuadratureConfig()
    if R <= 3:
        raise ParameterError("truncation radius must exceed 3")
    if not u.in_Uk(params.s, params.k):
        raise NotInUkError(f"{u.name} is not in U_k for s={params.s:g}, k={params.k}")
    X, _ = _points(points, params.n)
    uR = restrict(u, 0.0, R)
    cl = classical_flap(uR, X, params, cfg)
    PR, perr = compensation_polynomial(u, R, params, cfg)
    fR = cl.value - PR(X)
    if limit is None:
        limit = divergent_flap(u, X, params, cfg).value
    resid = float(np.max(np.abs(fR - limit)))
    return TruncationReport(float(R), X, fR, PR, resid, float(np.max(cl.error)) + perr)


# ----------------------------------------------------------------------------
# comparison and tail size
# ----------------------------------------------------------------------------


def mod_poly_distance(points, f, g, degree: int) -> tuple[float, Polynomial]:
    """sup |f - g - q| over the grid for the least-squares polynomial q of degree <= ``degree``."""
    if degree < -1:
        raise ParameterError("degree must be >= -1")
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    X = np.asarray(points, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if f.shape != g.shape or f.shape[0] != X.shape[0]:
        raise DomainError("grids do not coincide")
    q, resid = fit_polynomial(X, f - g, degree)
    return float(np.max(np.abs(resid))) if resid.size else 0.0, q


def tail_integral(u: FunctionHandle, R: float, params: FracParams, cfg: QuadratureConfig | None = None) -> float:
    """int_{|y|>R} |u(y)| |y|^{-(n+2s+k)} dy, atoms included."""
    cfg = cfg or QuadratureConfig()
    if R <= 0:
        raise ParameterError("radius must be positive")
    if not u.in_Uk(params.s, params.k):
        raise NotInUkError(f"{u.name} is not in U_k for s={params.s:g}, k={params.k}")
    q = params.p + params.k
    total = sum(abs(m) * float(np.linalg.norm(pt)) ** (-q) for pt, m in u.atoms if np.linalg.norm(pt) > R)
    lo = max(R, u.zero_inside)
    if u.support_radius <= lo:
        return total
    res = integrate_rays(lambda pi, rho, y: np.abs(u(y)) * rho ** (-q), np.zeros((1, params.n)), lo,
                         u.support_radius, cfg, breaks=u.breaks)
    return total + float(res.value[0])


# ----------------------------------------------------------------------------
# grid reports
# ----------------------------------------------------------------------------


@dataclass
class GridReport:
    points: np.ndarray
    values: np.ndarray
    errors: np.ndarray
    meta: dict = field(default_factory=dict)

    def columns(self) -> list[str]:
        n = self.points.shape[1]
        return [f"x{i + 1}" for i in range(n)] + ["value", "error"]

    def write_csv(self, path, comments=()):
        with open(path, "w", newline="") as fh:
            for line in comments:
                fh.write(f"# {line}\n")
            w = csv.writer(fh)
            w.writerow(self.columns())
            for pt, v, e in zip(self.points, self.values, self.errors):
                w.writerow([repr(float(c)) for c in pt] + [repr(float(v)), repr(float(e))])

    def to_dict(self) -> dict:
        return {
            "_meta": self.meta,
            "columns": self.columns(),
            "points": self.points.tolist(),
            "values": np.asarray(self.values).tolist(),
            "errors": np.asarray(self.errors).tolist(),
        }

    def write_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)


def read_grid_csv(path) -> GridReport:
    rows = []
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader)
    for row in reader:
        rows.append([float(c) for c in row])
    arr = np.array(rows)
    n = len(header) - 2
    return GridReport(arr[:, :n], arr[:, n], arr[:, n + 1])
