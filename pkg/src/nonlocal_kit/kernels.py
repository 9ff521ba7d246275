"""Closed-form kernels: Riesz kernel, its Taylor compensation, and ball kernels.

All functions accept points as arrays whose last axis has length n and
broadcast over the leading axes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import special

from .errors import DomainError, ParameterError, UnsupportedOrderError
from .polynomials import MultiIndex, multi_indices

K_MAX = 4  # cap on |alpha| for the symbolic derivative recursion


@dataclass(frozen=True)
class FracParams:
    """Dimension, fractional order, compensation order and normalisation flag."""

    n: int
    s: float
    k: int = 0
    normalized: bool = False

    def __post_init__(self):
        if int(self.n) != self.n or self.n not in (1, 2, 3):
            raise ParameterError(f"dimension n must be 1, 2 or 3, got {self.n!r}")
        if not 0.0 < float(self.s) < 1.0:
            raise ParameterError(f"fractional order s must lie in (0, 1), got {self.s!r}")
        if int(self.k) != self.k or self.k < 0:
            raise ParameterError(f"compensation order k must be a non-negative integer, got {self.k!r}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "s", float(self.s))
        object.__setattr__(self, "k", int(self.k))
        object.__setattr__(self, "normalized", bool(self.normalized))

    @property
    def p(self) -> float:
        """Kernel exponent n + 2s."""
        return self.n + 2.0 * self.s

    @property
    def scale(self) -> float:
        return normalization_const(self.n, self.s) if self.normalized else 1.0

    @property
    def admissible_degree(self) -> int:
        """Degree up to which a k-divergent right-hand side is defined."""
        return self.k if self.s <= 0.5 else self.k + 1

    def with_k(self, k: int) -> "FracParams":
        return FracParams(self.n, self.s, k, self.normalized)

    def to_dict(self) -> dict:
        return {"n": self.n, "s": self.s, "k": self.k, "normalized": self.normalized}


def _validate_ns(n, s):
    FracParams(n, s)


def normalization_const(n: int, s: float) -> float:
    """c(n,s) = 4^s Gamma(n/2+s) / (pi^{n/2} |Gamma(-s)|)."""
    _validate_ns(n, s)
    abs_gamma_neg = special.gamma(1.0 - s) / s  # |Gamma(-s)| for s in (0,1)
    return 4.0**s * special.gamma(n / 2.0 + s) / (math.pi ** (n / 2.0) * abs_gamma_neg)


def sphere_area(n: int) -> float:
    """Surface measure of the unit sphere in R^n (2 for n=1)."""
    return 2.0 * math.pi ** (n / 2.0) / special.gamma(n / 2.0)


def getoor_constant(n: int, s: float) -> float:
    """Value of the normalised operator on (1-|x|^2)_+^s inside B_1."""
    _validate_ns(n, s)
    return 4.0**s * special.gamma(1.0 + s) * special.gamma(n / 2.0 + s) / special.gamma(n / 2.0)


def poisson_const(n: int, s: float) -> float:
    """C(n,s) = Gamma(n/2) sin(pi s) / pi^{n/2+1}."""
    _validate_ns(n, s)
    return special.gamma(n / 2.0) * math.sin(math.pi * s) / math.pi ** (n / 2.0 + 1.0)


def green_const(n: int, s: float) -> float:
    """kappa(n,s) = Gamma(n/2) / (4^s pi^{n/2} Gamma(s)^2)."""
    _validate_ns(n, s)
    return special.gamma(n / 2.0) / (4.0**s * math.pi ** (n / 2.0) * special.gamma(s) ** 2)


def constants_table(lattice) -> list[dict]:
    """c, C and kappa on a list of (n, s) pairs, for golden files."""
    rows = []
    for n, s in lattice:
        rows.append(
            {
                "n": int(n),
                "s": float(s),
                "c": normalization_const(n, s),
                "C": poisson_const(n, s),
                "kappa": green_const(n, s),
            }
        )
    return rows


def _as_points(a, n):
    a = np.asarray(a, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1)
    if a.shape[-1] != n:
        if n == 1:
            a = a[..., None]
        else:
            raise DomainError(f"expected points with last axis {n}, got shape {a.shape}")
    return a


def _norm(a):
    return np.sqrt(np.sum(a * a, axis=-1))


# ----------------------------------------------------------------------------
# Riesz kernel and derivatives
# ----------------------------------------------------------------------------


def riesz_kernel(params: FracParams, x, y) -> np.ndarray:
    """|x-y|^{-(n+2s)}, times c(n,s) when ``params.normalized``."""
    x = _as_points(x, params.n)
    y = _as_points(y, params.n)
    d = _norm(x - y)
    if np.any(d == 0.0):
        raise DomainError("riesz_kernel is singular at coincident points")
    return params.scale * d ** (-params.p)


@lru_cache(maxsize=None)
def _derivative_terms(alpha: tuple, p: float) -> tuple:
    """Expand d^alpha |z|^{-p} as a sum of coef * z^beta * |z|^{-q}."""
    n = len(alpha)
    terms = {((0,) * n, p): 1.0}
    for i, count in enumerate(alpha):
        for _ in range(count):
            new = {}
            for (beta, q), c in terms.items():
                if beta[i] > 0:
                    b = list(beta)
                    b[i] -= 1
                    key = (tuple(b), q)
                    new[key] = new.get(key, 0.0) + c * beta[i]
                b = list(beta)
                b[i] += 1
                key = (tuple(b), q + 2.0)
                new[key] = new.get(key, 0.0) - c * q
            terms = {kk: v for kk, v in new.items() if v != 0.0}
    return tuple((beta, q, c) for (beta, q), c in terms.items())


def riesz_derivative(params: FracParams, alpha, z) -> np.ndarray:
    """d^alpha |z|^{-(n+2s)} at z (no normalisation, no order cap)."""
    alpha = tuple(MultiIndex(tuple(alpha)).components)
    z = _as_points(z, params.n)
    r = _norm(z)
    out = np.zeros(z.shape[:-1])
    for beta, q, c in _derivative_terms(alpha, params.p):
        out = out + c * MultiIndex(beta).monomial(z) * r ** (-q)
    return out


def kernel_x_derivative(params: FracParams, alpha, y) -> np.ndarray:
    """d^alpha_x |x-y|^{-(n+2s)} evaluated at x = 0 (times c(n,s) if normalised)."""
    alpha = MultiIndex(tuple(alpha))
    if alpha.n != params.n:
        raise DomainError(f"multi-index {alpha.components} does not match n={params.n}")
    if alpha.order > K_MAX:
        raise UnsupportedOrderError(f"derivative order {alpha.order} exceeds cap {K_MAX}")
    y = _as_points(y, params.n)
    if np.any(_norm(y) == 0.0):
        raise DomainError("kernel_x_derivative needs y != 0")
    # d/dx of f(x - y) equals d/dz of f at z = -y
    return params.scale * riesz_derivative(params, alpha.components, -y)


def taylor_sum(params: FracParams, x, y, order: int | None = None) -> np.ndarray:
    """Sum over |alpha| <= order-1 of x^alpha/alpha! * d^alpha K(0, y).

    ``order`` defaults to params.k. Uses the multi-index derivative route.
    """
    order = params.k if order is None else order
    x = _as_points(x, params.n)
    y = _as_points(y, params.n)
    out = np.zeros(np.broadcast_shapes(x.shape[:-1], y.shape[:-1]))
    for a in multi_indices(params.n, order - 1):
        out = out + a.monomial(x) / a.factorial() * kernel_x_derivative(params, a.components, y)
    return out


def _gegenbauer(u, lam, jmax):
    """C_j^lam(u) for j = 0..jmax stacked on a new leading axis."""
    out = np.empty((jmax + 1,) + np.shape(u))
    out[0] = 1.0
    if jmax >= 1:
        out[1] = 2.0 * lam * u
    for j in range(2, jmax + 1):
        out[j] = (2.0 * u * (j + lam - 1.0) * out[j - 1] - (j + 2.0 * lam - 2.0) * out[j - 2]) / j
    return out


_SERIES_TAIL = 40


def taylor_remainder(params: FracParams, x, y) -> np.ndarray:
    """K(x,y) minus its order-k Taylor polynomial in x about 0.

    The remainder is evaluated through the Gegenbauer expansion of
    |x-y|^{-p} in powers of |x|/|y|, which avoids cancellation when |x| << |y|.
    """
    x = _as_points(x, params.n)
    y = _as_points(y, params.n)
    k = params.k
    xr = _norm(x)
    yr = _norm(y)
    if np.any(yr == 0.0):
        raise DomainError("taylor_remainder needs y != 0")
    if np.any(_norm(x - y) == 0.0):
        raise DomainError("taylor_remainder is singular at x == y")
    if k == 0:
        return riesz_kernel(params, x, y)
    xr, yr = np.broadcast_arrays(xr, yr)
    dot = np.sum(x * y, axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        u = np.where(xr > 0, dot / np.where(xr > 0, xr * yr, 1.0), 0.0)
    u = np.clip(u, -1.0, 1.0)
    tau = xr / yr
    lam = params.p / 2.0
    out = np.empty(tau.shape)
    small = tau < 0.25
    if np.any(small):
        ts, us = tau[small], u[small]
        C = _gegenbauer(us, lam, k + _SERIES_TAIL)
        powers = ts[None, :] ** np.arange(k, k + _SERIES_TAIL + 1)[:, None]
        out[small] = np.sum(C[k:] * powers, axis=0)
    big = ~small
    if np.any(big):
        tb, ub = tau[big], u[big]
        C = _gegenbauer(ub, lam, k - 1)
        partial = np.sum(C * tb[None, :] ** np.arange(k)[:, None], axis=0)
        out[big] = (1.0 - 2.0 * ub * tb + tb * tb) ** (-lam) - partial
    return params.scale * out * yr ** (-params.p)


def psi(params: FracParams, x, y, inner_radius: float = 2.0) -> np.ndarray:
    """Compensated kernel -|y|^{n+2s+k} * taylor_remainder(x, y).

    Defined for |x| < inner_radius/2 and |y| >= inner_radius.
    """
    x = _as_points(x, params.n)
    y = _as_points(y, params.n)
    if np.any(_norm(x) >= inner_radius / 2.0):
        raise DomainError(f"psi needs |x| < {inner_radius / 2.0}")
    if np.any(_norm(y) < inner_radius):
        raise DomainError(f"psi needs |y| >= {inner_radius}")
    return _psi(params, x, y)


def _psi(params, x, y):
    return -(_norm(y) ** (params.p + params.k)) * taylor_remainder(params, x, y)


def psi_limit(params: FracParams, x, direction) -> np.ndarray:
    """Limit of psi(x, t*direction) as t -> infinity (direction a unit vector)."""
    x = _as_points(x, params.n)
    e = _as_points(direction, params.n)
    k = params.k
    xr = _norm(x)
    if k == 0:
        return -params.scale * np.ones_like(xr)
    with np.errstate(invalid="ignore", divide="ignore"):
        u = np.where(xr > 0, np.sum(x * e, axis=-1) / np.where(xr > 0, xr, 1.0), 0.0)
    C = _gegenbauer(np.clip(u, -1, 1), params.p / 2.0, k)[k]
    return -params.scale * C * xr**k


def psi_bound(params: FracParams, nx: int = 81, ny: int = 161, x_radius: float = 1.0,
              y_max: float = 1e3, inner_radius: float = 2.0) -> float:
    """Empirical sup of |psi| over a lattice of B_{x_radius} x {inner_radius <= |y| <= y_max}.

    The asymptotic limit |y| -> infinity is included. Rotation invariance lets
    y range over the positive e_1 axis while x sweeps a half-disc lattice.
    """
    n = params.n
    radii = np.geomspace(inner_radius, y_max, ny)
    if n == 1:
        xs = np.linspace(-x_radius, x_radius, nx)[:, None]
    else:
        a = np.linspace(-x_radius, x_radius, nx)
        b = np.linspace(0.0, x_radius, (nx + 1) // 2)
        A, B = np.meshgrid(a, b, indexing="ij")
        keep = A**2 + B**2 <= x_radius**2 * (1 + 1e-12)
        xs = np.zeros((int(keep.sum()), n))
        xs[:, 0] = A[keep]
        xs[:, 1] = B[keep]
    if n == 1:
        ys = np.concatenate([radii, -radii])[:, None]
    else:
        ys = np.zeros((ny, n))
        ys[:, 0] = radii
    vals = np.abs(_psi(params, xs[:, None, :], ys[None, :, :]))
    e = np.zeros(n)
    e[0] = 1.0
    lim = np.abs(psi_limit(params, xs, e))
    if n == 1:
        lim = np.maximum(lim, np.abs(psi_limit(params, xs, -e)))
    return float(max(vals.max(), lim.max()))


# ----------------------------------------------------------------------------
# Ball kernels
# ----------------------------------------------------------------------------


def poisson_kernel_ball(params: FracParams, r: float, x, y) -> np.ndarray:
    """s-Poisson kernel of B_r: C(n,s) ((r^2-|x|^2)/(|y|^2-r^2))^s |x-y|^{-n}."""
    x = _as_points(x, params.n)
    y = _as_points(y, params.n)
    xr2 = np.sum(x * x, axis=-1)
    yr2 = np.sum(y * y, axis=-1)
    if np.any(xr2 >= r * r) or np.any(yr2 <= r * r):
        raise DomainError("poisson_kernel_ball needs |x| < r < |y|")
    return _poisson(params.n, params.s, r, x, y)


def _poisson(n, s, r, x, y):
    xr2 = np.sum(x * x, axis=-1)
    yr2 = np.sum(y * y, axis=-1)
    ratio = (r * r - xr2) / (yr2 - r * r)
    return poisson_const(n, s) * ratio**s * _norm(x - y) ** (-n)


@lru_cache(maxsize=None)
def _jacobi_rule(order: int, beta: float):
    """Gauss-Jacobi nodes/weights on [-1, 1] for weight (1+xi)^beta."""
    xi, w = special.roots_jacobi(order, 0.0, beta)
    return xi, w


def _gauss_power(a, beta, g, order):
    """Integral over [0, a] of t^beta g(t) dt for array ``a`` (Gauss-Jacobi)."""
    xi, w = _jacobi_rule(order, float(beta))
    a = np.asarray(a, dtype=float)
    t = a[..., None] * (1.0 + xi) / 2.0
    return (a / 2.0) ** (beta + 1.0) * np.sum(w * g(t), axis=-1)


_GREEN_ORDER = 20


def green_inner_integral(r0, n: int, s: float, order: int = _GREEN_ORDER) -> np.ndarray:
    """Integral over t in [0, r0] of t^{s-1} (1+t)^{-n/2}.

    The t^{s-1} endpoint behaviour is absorbed into Gauss-Jacobi weights; for
    r0 > 1 the range [1, r0] is inverted and its leading power integrated in
    closed form, so the rule stays uniform for r0 spanning many decades.
    """
    r0 = np.asarray(r0, dtype=float)
    half = n / 2.0

    def g(t):
        return (1.0 + t) ** (-half)

    def h(t):
        # ((1+t)^{-n/2} - 1) / t, continuous at t = 0
        safe = np.where(t > 0, t, 1.0)
        return np.where(t > 0, np.expm1(-half * np.log1p(safe)) / safe, -half)

    out = np.empty(r0.shape)
    lo = r0 <= 1.0
    if np.any(lo):
        out[lo] = _gauss_power(r0[lo], s - 1.0, g, order)
    hi = ~lo
    if np.any(hi):
        rh = r0[hi]
        i1 = _gauss_power(np.array(1.0), s - 1.0, g, order)
        e1 = half - s  # exponent of tau in the leading term is e1 - 1
        log_r = np.log(rh)
        if abs(e1) < 1e-14:
            lead = log_r
        else:
            lead = -np.expm1(-e1 * log_r) / e1
        h1 = _gauss_power(np.array(1.0), e1, h, order)
        corr = h1 - _gauss_power(1.0 / rh, e1, h, order)
        out[hi] = i1 + lead + corr
    return out


def green_ball(params: FracParams, r: float, x, y) -> np.ndarray:
    """Green function of the normalised operator on B_r (independent of ``normalized``)."""
    x = _as_points(x, params.n)
    y = _as_points(y, params.n)
    if np.any(np.sum(x * x, -1) >= r * r) or np.any(np.sum(y * y, -1) >= r * r):
        raise DomainError("green_ball needs both points inside B_r")
    if np.any(_norm(x - y) == 0.0):
        raise DomainError("green_ball is singular at coincident points")
    return _green(params.n, params.s, r, x, y)


def _green(n, s, r, x, y, dist=None):
    d = _norm(x - y) if dist is None else dist
    xr2 = np.sum(x * x, axis=-1)
    yr2 = np.sum(y * y, axis=-1)
    r0 = np.maximum(r * r - xr2, 0.0) * np.maximum(r * r - yr2, 0.0) / (r * r * d * d)
    return green_const(n, s) * d ** (2.0 * s - n) * green_inner_integral(r0, n, s)


def radial_power_derivative(alpha, z, p: float) -> np.ndarray:
    """d^alpha |z|^{-p} for an arbitrary exponent p."""
    alpha = tuple(int(a) for a in alpha)
    z = _as_points(z, len(alpha))
    r = _norm(z)
    out = np.zeros(z.shape[:-1])
    for beta, q, c in _derivative_terms(alpha, float(p)):
        out = out + c * MultiIndex(beta).monomial(z) * r ** (-q)
    return out


@lru_cache(maxsize=None)
def _weight_terms(alpha: tuple, s: float) -> tuple:
    """Expand d^alpha (r^2 - |x|^2)^s as a sum of coef * x^beta * (r^2 - |x|^2)^{s-j}."""
    n = len(alpha)
    terms = {((0,) * n, 0): 1.0}
    for i, count in enumerate(alpha):
        for _ in range(count):
            new = {}
            for (beta, j), c in terms.items():
                if beta[i] > 0:
                    b = list(beta)
                    b[i] -= 1
                    key = (tuple(b), j)
                    new[key] = new.get(key, 0.0) + c * beta[i]
                b = list(beta)
                b[i] += 1
                key = (tuple(b), j + 1)
                new[key] = new.get(key, 0.0) - 2.0 * c * (s - j)
            terms = {kk: v for kk, v in new.items() if v != 0.0}
    return tuple((beta, j, c) for (beta, j), c in terms.items())


def ball_weight_derivative(alpha, x, s: float, r: float = 1.0) -> np.ndarray:
    """d^alpha (r^2 - |x|^2)^s for |x| < r."""
    alpha = tuple(int(a) for a in alpha)
    x = _as_points(x, len(alpha))
    d = r * r - np.sum(x * x, axis=-1)
    out = np.zeros(x.shape[:-1])
    for beta, j, c in _weight_terms(alpha, float(s)):
        out = out + c * MultiIndex(beta).monomial(x) * d ** (s - j)
    return out


def poisson_kernel_derivative(params: FracParams, r: float, alpha, x, y) -> np.ndarray:
    """d^alpha_x of the s-Poisson kernel of B_r, by the Leibniz rule on its two x-dependent factors."""
    alpha = tuple(MultiIndex(tuple(alpha)).components)
    n, s = params.n, params.s
    x = _as_points(x, n)
    y = _as_points(y, n)
    yr2 = np.sum(y * y, axis=-1)
    if np.any(np.sum(x * x, -1) >= r * r) or np.any(yr2 <= r * r):
        raise DomainError("poisson_kernel_derivative needs |x| < r < |y|")
    out = 0.0
    for gamma in multi_indices(n, sum(alpha)):
        g = gamma.components
        if any(gi > ai for gi, ai in zip(g, alpha)):
            continue
        rest = tuple(a - b for a, b in zip(alpha, g))
        coef = math.prod(math.comb(a, b) for a, b in zip(alpha, g))
        out = out + coef * ball_weight_derivative(g, x, s, r) * radial_power_derivative(rest, x - y, float(n))
    return poisson_const(n, s) * (yr2 - r * r) ** (-s) * out
