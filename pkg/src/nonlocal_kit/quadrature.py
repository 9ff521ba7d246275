"""Adaptive quadrature for singular, improper and exterior-domain integrals.

The workhorse is :func:`gk_batch`, a vectorised adaptive Gauss-Kronrod (7/15)
integrator that refines many independent one-dimensional integrals at once.
Integrals over balls, shells and exteriors are reduced to radial integrals
along rays (polar coordinates about a chosen centre); the angular variable
uses the trapezoid rule (n = 2) or a Gauss-Legendre x trapezoid product rule
(n = 3) with doubling until the angular error estimate settles.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from functools import lru_cache
from typing import Callable, NamedTuple

import numpy as np

from .errors import EvaluationError, ParameterError, PreconditionError

# Gauss-Kronrod 7/15 abscissae and weights (QUADPACK dqk15)
_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG7 = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])

GK_NODES = np.concatenate([-_XGK[:7], [0.0], _XGK[6::-1]])
GK_WEIGHTS = np.concatenate([_WGK[:7], [_WGK[7]], _WGK[6::-1]])
G7_WEIGHTS = np.zeros(15)
G7_WEIGHTS[[1, 3, 5]] = _WG7[:3]
G7_WEIGHTS[7] = _WG7[3]
G7_WEIGHTS[[13, 11, 9]] = _WG7[:3]

_EPS = np.finfo(float).eps


@dataclass
class QuadratureConfig:
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    max_subdivisions: int = 2000
    split_radius: float = 0.1
    tail_cut: float = 1e3

    def __post_init__(self):
        if self.rel_tol <= 0 or self.abs_tol <= 0:
            raise ParameterError("quadrature tolerances must be positive")
        if not 0 < self.split_radius < 1:
            raise ParameterError("split_radius must lie in (0, 1)")
        if self.tail_cut <= 3:
            raise ParameterError("tail_cut must exceed 3")
        if self.max_subdivisions < 1:
            raise ParameterError("max_subdivisions must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict | None) -> "QuadratureConfig":
        data = dict(data or {})
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ParameterError(f"unknown quadrature keys: {sorted(unknown)}")
        return cls(**data)


class QuadResult(NamedTuple):
    value: np.ndarray | float
    error: np.ndarray | float
    converged: np.ndarray | bool


# ----------------------------------------------------------------------------
# batched adaptive Gauss-Kronrod
# ----------------------------------------------------------------------------


@lru_cache(maxsize=None)
def _reference_partition(grade_lo: bool, grade_hi: bool, levels: int, ratio: float):
    pts = {0.0, 1.0, 0.5}
    for j in range(1, levels + 1):
        if grade_lo:
            pts.add(0.5 * ratio**j)
        if grade_hi:
            pts.add(1.0 - 0.5 * ratio**j)
    return np.array(sorted(pts))


def gk_batch(fn: Callable, a, b, sing_a=None, sing_b=None, *, abs_tol=1e-10, rel_tol=1e-8,
             max_subdivisions=2000, grade_levels=4, grade_ratio=0.1, split_frac=0.15,
             max_rounds=200) -> QuadResult:
    """Integrate many 1-D integrals over [a_i, b_i] adaptively.

    ``fn(ids, x)`` receives integral indices of shape (p,) and nodes of shape
    (p, 15) and must return integrand values of shape (p, 15). Ends flagged in
    ``sing_a``/``sing_b`` get a geometrically graded initial mesh and are split
    off-centre when refined, which handles algebraic and logarithmic endpoint
    singularities.
    """
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    m = a.size
    sing_a = np.ones(m, bool) if sing_a is None else np.broadcast_to(np.asarray(sing_a, bool), (m,))
    sing_b = np.ones(m, bool) if sing_b is None else np.broadcast_to(np.asarray(sing_b, bool), (m,))
    if m == 0:
        return QuadResult(np.zeros(0), np.zeros(0), np.ones(0, bool))

    owners, pa, pb, fa, fb = [], [], [], [], []
    for lo_flag in (False, True):
        for hi_flag in (False, True):
            sel = np.nonzero((sing_a == lo_flag) & (sing_b == hi_flag))[0]
            if sel.size == 0:
                continue
            ref = _reference_partition(lo_flag, hi_flag, grade_levels, grade_ratio)
            npan = ref.size - 1
            L = (b[sel] - a[sel])[:, None]
            left = a[sel][:, None] + L * ref[None, :-1]
            right = a[sel][:, None] + L * ref[None, 1:]
            owners.append(np.repeat(sel, npan))
            pa.append(left.ravel())
            pb.append(right.ravel())
            f_lo = np.zeros((sel.size, npan), bool)
            f_hi = np.zeros((sel.size, npan), bool)
            f_lo[:, 0] = lo_flag
            f_hi[:, -1] = hi_flag
            fa.append(f_lo.ravel())
            fb.append(f_hi.ravel())
    owner = np.concatenate(owners)
    pa = np.concatenate(pa)
    pb = np.concatenate(pb)
    fa = np.concatenate(fa)
    fb = np.concatenate(fb)
    val = np.zeros(owner.size)
    err = np.zeros(owner.size)
    fresh = np.ones(owner.size, bool)
    converged = np.zeros(m, bool)

    for _ in range(max_rounds):
        idx = np.nonzero(fresh)[0]
        if idx.size:
            half = 0.5 * (pb[idx] - pa[idx])
            mid = 0.5 * (pb[idx] + pa[idx])
            x = mid[:, None] + half[:, None] * GK_NODES[None, :]
            f = np.asarray(fn(owner[idx], x), dtype=float)
            if not np.all(np.isfinite(f)):
                bad = np.argwhere(~np.isfinite(f))[0]
                raise EvaluationError(
                    f"non-finite integrand at node {x[bad[0], bad[1]]!r} of integral {owner[idx][bad[0]]}",
                    point=float(x[bad[0], bad[1]]),
                )
            K = half * (f @ GK_WEIGHTS)
            G = half * (f @ G7_WEIGHTS)
            resabs = np.abs(half) * (np.abs(f) @ GK_WEIGHTS)
            val[idx] = K
            err[idx] = np.maximum(np.abs(K - G), 50.0 * _EPS * resabs)
            fresh[idx] = False
        tot_val = np.bincount(owner, weights=val, minlength=m)
        tot_err = np.bincount(owner, weights=err, minlength=m)
        count = np.bincount(owner, minlength=m)
        tol = np.maximum(abs_tol, rel_tol * np.abs(tot_val))
        converged = tot_err <= tol
        active = ~converged & (count < max_subdivisions)
        if not np.any(active):
            break
        thresh = tol / np.maximum(count, 1)
        split = active[owner] & (err > thresh[owner])
        if not np.any(split):
            break
        s_idx = np.nonzero(split)[0]
        A, B = pa[s_idx], pb[s_idx]
        lo_f, hi_f = fa[s_idx], fb[s_idx]
        frac = np.where(lo_f, split_frac, np.where(hi_f, 1.0 - split_frac, 0.5))
        cut = A + frac * (B - A)
        keep = ~split
        owner = np.concatenate([owner[keep], owner[s_idx], owner[s_idx]])
        pa = np.concatenate([pa[keep], A, cut])
        pb = np.concatenate([pb[keep], cut, B])
        fa = np.concatenate([fa[keep], lo_f, np.zeros(s_idx.size, bool)])
        fb = np.concatenate([fb[keep], np.zeros(s_idx.size, bool), hi_f])
        val = np.concatenate([val[keep], np.zeros(2 * s_idx.size)])
        err = np.concatenate([err[keep], np.zeros(2 * s_idx.size)])
        fresh = np.concatenate([np.zeros(keep.sum(), bool), np.ones(2 * s_idx.size, bool)])
    tot_val = np.bincount(owner, weights=val, minlength=m)
    tot_err = np.bincount(owner, weights=err, minlength=m)
    return QuadResult(tot_val, tot_err, converged)


# ----------------------------------------------------------------------------
# fixed graded rules (smooth dependence on the interval)
# ----------------------------------------------------------------------------


@lru_cache(maxsize=None)
def graded_rule(levels: int = 24, ratio: float = 0.15, order: int = 12):
    """Composite Gauss-Legendre rule on [0, 1] graded geometrically at both ends."""
    inner = [0.5 * ratio**j for j in range(levels, 0, -1)]
    breaks = np.array([0.0] + inner + [0.5] + [1.0 - t for t in inner[::-1]] + [1.0])
    xg, wg = np.polynomial.legendre.leggauss(order)
    L = np.diff(breaks)
    nodes = (breaks[:-1, None] + 0.5 * L[:, None] * (xg[None, :] + 1.0)).ravel()
    weights = (0.5 * L[:, None] * wg[None, :]).ravel()
    return nodes, weights


# ----------------------------------------------------------------------------
# angular rules
# ----------------------------------------------------------------------------


def circle_directions(M: int, offset: float = 0.0):
    th = offset + 2.0 * math.pi * np.arange(M) / M
    return np.stack([np.cos(th), np.sin(th)], axis=-1), np.full(M, 2.0 * math.pi / M)


@lru_cache(maxsize=None)
def sphere_product_rule(N: int):
    """Gauss-Legendre (N) in cos(theta) x trapezoid (2N) in phi; exact to degree 2N-1."""
    z, wz = np.polynomial.legendre.leggauss(N)
    M = 2 * N
    phi = 2.0 * math.pi * np.arange(M) / M
    Z, P = np.meshgrid(z, phi, indexing="ij")
    st = np.sqrt(1.0 - Z**2)
    dirs = np.stack([st * np.cos(P), st * np.sin(P), Z], axis=-1).reshape(-1, 3)
    w = (wz[:, None] * np.full(M, 2.0 * math.pi / M)[None, :]).ravel()
    return dirs, w


def direction_rule(n: int, level: int = 0):
    """Directions and weights for the unit sphere S^{n-1}."""
    if n == 1:
        return np.array([[1.0], [-1.0]]), np.array([1.0, 1.0])
    if n == 2:
        return circle_directions(32 * 2**level)
    if n == 3:
        return sphere_product_rule(9 * 2**level)
    raise ParameterError(f"unsupported dimension {n}")


# ----------------------------------------------------------------------------
# ray machinery
# ----------------------------------------------------------------------------


def sphere_hits(c, theta, radius):
    """Both roots rho of |c + rho*theta| = radius (NaN where the ray misses)."""
    cd = np.sum(c * theta, axis=-1)
    disc = cd * cd - np.sum(c * c, axis=-1) + radius * radius
    root = np.sqrt(np.where(disc >= 0, disc, np.nan))
    return -cd - root, -cd + root


def _ray_segments(c, th, lo, hi, breaks, mirror, tail_cut):
    """Segments per ray: rho-space pieces and (for infinite hi) a t = 1/rho piece."""
    R = c.shape[0]
    finite_hi = np.isfinite(hi)
    end = np.where(finite_hi, hi, np.maximum(tail_cut, lo))
    cand = [lo[:, None], end[:, None]]
    tcand = []
    for b in breaks:
        for sign in ((1.0, -1.0) if mirror else (1.0,)):
            for root in sphere_hits(c, sign * th, b):
                inside = (root > lo) & (root < end)
                cand.append(np.where(inside, root, np.nan)[:, None])
                beyond = ~finite_hi & (root > end)
                tcand.append(np.where(beyond, 1.0 / np.where(beyond, root, 1.0), np.nan)[:, None])
    pts = np.sort(np.concatenate(cand, axis=1), axis=1)
    a, bb = pts[:, :-1], pts[:, 1:]
    ok = np.isfinite(a) & np.isfinite(bb) & (bb > a)
    ray_id = np.broadcast_to(np.arange(R)[:, None], a.shape)
    seg_a, seg_b, seg_ray = a[ok], bb[ok], ray_id[ok]
    seg_t = np.zeros(seg_a.size, bool)
    if np.any(~finite_hi):
        tr = np.nonzero(~finite_hi)[0]
        t_end = 1.0 / end[tr]
        tc = [np.zeros((tr.size, 1)), t_end[:, None]]
        if tcand:
            tc.append(np.concatenate(tcand, axis=1)[tr])
        tp = np.sort(np.concatenate(tc, axis=1), axis=1)
        ta, tb = tp[:, :-1], tp[:, 1:]
        tok = np.isfinite(ta) & np.isfinite(tb) & (tb > ta)
        tid = np.broadcast_to(tr[:, None], ta.shape)
        seg_a = np.concatenate([seg_a, ta[tok]])
        seg_b = np.concatenate([seg_b, tb[tok]])
        seg_ray = np.concatenate([seg_ray, tid[tok]])
        seg_t = np.concatenate([seg_t, np.ones(int(tok.sum()), bool)])
    return seg_a, seg_b, seg_ray, seg_t


def _radial_integrals(integrand, centers, dirs, lo, hi, cfg, breaks, mirror):
    P, n = centers.shape
    D = dirs.shape[0]
    c = np.repeat(centers, D, axis=0)
    th = np.tile(dirs, (P, 1))
    lo_r = np.repeat(np.broadcast_to(lo, (P,)), D).astype(float)
    hi_r = np.asarray(hi(c, th) if callable(hi) else np.broadcast_to(
        np.repeat(np.broadcast_to(hi, (P,)), D), (P * D,)), dtype=float)
    seg_a, seg_b, seg_ray, seg_t = _ray_segments(c, th, lo_r, hi_r, breaks, mirror, cfg.tail_cut)
    pidx_of_ray = np.arange(P * D) // D

    def fn(ids, x):
        ray = seg_ray[ids]
        tflag = seg_t[ids][:, None]
        rho = np.where(tflag, 1.0 / x, x)
        y = c[ray][:, None, :] + rho[..., None] * th[ray][:, None, :]
        vals = integrand(np.broadcast_to(pidx_of_ray[ray][:, None], rho.shape), rho, y)
        jac = np.where(tflag, x ** (-n - 1.0), rho ** (n - 1.0))
        return vals * jac

    res = gk_batch(fn, seg_a, seg_b, abs_tol=cfg.abs_tol, rel_tol=cfg.rel_tol,
                   max_subdivisions=cfg.max_subdivisions)
    ray_val = np.bincount(seg_ray, weights=res.value, minlength=P * D).reshape(P, D)
    ray_err = np.bincount(seg_ray, weights=res.error, minlength=P * D).reshape(P, D)
    bad = np.bincount(seg_ray, weights=(~res.converged).astype(float), minlength=P * D).reshape(P, D)
    return ray_val, ray_err, bad == 0


def integrate_rays(integrand: Callable, centers, lo, hi, cfg: QuadratureConfig, *, breaks=(),
                   mirror_breaks=False, max_level=5) -> QuadResult:
    """Integrate over {lo < |y - c| < hi(c, theta)} in polar coordinates about each centre.

    ``integrand(pidx, rho, y)`` returns values (without the rho^{n-1} Jacobian)
    for centre indices ``pidx``, radii ``rho`` and points ``y``. ``hi`` is a
    scalar, an array per centre, ``inf``, or a callable ``hi(c, theta)``.
    Results are arrays over centres.
    """
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    P, n = centers.shape
    lo = np.asarray(lo, dtype=float)
    if n == 1:
        dirs, w = direction_rule(1)
        v, e, ok = _radial_integrals(integrand, centers, dirs, lo, hi, cfg, breaks, mirror_breaks)
        return QuadResult(v @ w, e @ w, np.all(ok, axis=1))
    if n == 2:
        dirs, w = direction_rule(2, 0)
        v, e, ok = _radial_integrals(integrand, centers, dirs, lo, hi, cfg, breaks, mirror_breaks)
        T = v @ w
        rad_err = e @ w
        conv = np.all(ok, axis=1)
        M = dirs.shape[0]
        ang_err = np.full(P, np.inf)
        for _ in range(max_level):
            new_dirs, _ = circle_directions(M, offset=math.pi / M)
            v2, e2, ok2 = _radial_integrals(integrand, centers, new_dirs, lo, hi, cfg, breaks, mirror_breaks)
            h = 2.0 * math.pi / (2 * M)
            T2 = 0.5 * T + h * v2.sum(axis=1)
            rad_err = 0.5 * rad_err + h * e2.sum(axis=1)
            conv &= np.all(ok2, axis=1)
            ang_err = np.abs(T2 - T)
            T = T2
            M *= 2
            if np.all(ang_err <= np.maximum(cfg.abs_tol, cfg.rel_tol * np.abs(T))):
                break
        ang_conv = ang_err <= np.maximum(cfg.abs_tol, cfg.rel_tol * np.abs(T))
        return QuadResult(T, rad_err + ang_err, conv & ang_conv)
    prev = None
    for level in range(max_level):
        dirs, w = direction_rule(3, level)
        v, e, ok = _radial_integrals(integrand, centers, dirs, lo, hi, cfg, breaks, mirror_breaks)
        T = v @ w
        if prev is not None:
            ang_err = np.abs(T - prev)
            if np.all(ang_err <= np.maximum(cfg.abs_tol, cfg.rel_tol * np.abs(T))) or level == max_level - 1:
                ang_conv = ang_err <= np.maximum(cfg.abs_tol, cfg.rel_tol * np.abs(T))
                return QuadResult(T, e @ w + ang_err, np.all(ok, axis=1) & ang_conv)
        prev = T
    raise AssertionError("unreachable")


def _scalar(res: QuadResult) -> QuadResult:
    return QuadResult(float(res.value[0]), float(res.error[0]), bool(res.converged[0]))


def integrate_ball(f: Callable, center, radius: float, cfg: QuadratureConfig | None = None,
                   breaks=()) -> QuadResult:
    """Integral of f over B_radius(center); f may have an integrable singularity at the centre."""
    cfg = cfg or QuadratureConfig()
    center = np.atleast_1d(np.asarray(center, dtype=float))
    res = integrate_rays(lambda p, rho, y: f(y), center[None, :], 0.0, float(radius), cfg, breaks=breaks)
    return _scalar(res)


def integrate_exterior(f: Callable, radius: float, cfg: QuadratureConfig | None = None, *, n: int = 1,
                       decay: float | None = None, breaks=(), support_radius: float = math.inf) -> QuadResult:
    """Integral of f over {|y| > radius}; the radial tail is mapped to t = 1/r.

    ``decay`` is the exponent eta in |f(y)| <= C |y|^{-n-eta}; a non-positive
    value is rejected before any sampling.
    """
    cfg = cfg or QuadratureConfig()
    if decay is not None and decay <= 0:
        raise PreconditionError(f"integrand decays like |y|^(-n-{decay}); not integrable at infinity")
    if support_radius <= radius:
        return QuadResult(0.0, 0.0, True)
    hi = support_radius
    res = integrate_rays(lambda p, rho, y: f(y), np.zeros((1, n)), float(radius), hi, cfg, breaks=breaks)
    return _scalar(res)


_PV_CORE = 0.02  # inner core radius as a fraction of delta


def pv_second_difference(u, x, s: float, cfg: QuadratureConfig | None = None) -> QuadResult:
    """-(1/2) * integral over B_delta of (u(x+z) + u(x-z) - 2u(x)) |z|^{-n-2s} dz.

    ``x`` may hold several points (shape (P, n)); results are then arrays.
    Inside a small core |z| < 0.02*delta the second difference is replaced by
    its quadratic Taylor term, which is integrated exactly; sampling it there
    would only amplify rounding error.
    """
    cfg = cfg or QuadratureConfig()
    u.require_smoothness(2)
    n = u.n
    X = np.atleast_2d(np.asarray(x, dtype=float))
    if n == 1 and X.shape[-1] != 1:
        X = X.reshape(-1, 1)
    ux = u(X)
    p = n + 2.0 * s
    core = _PV_CORE * cfg.split_radius

    def integrand(pidx, rho, y):
        c = X[pidx]
        second = u(y) + u(2.0 * c - y) - 2.0 * ux[pidx]
        return -0.5 * second * rho ** (-p)

    res = integrate_rays(integrand, X, core, cfg.split_radius, cfg, breaks=u.breaks, mirror_breaks=True)
    lap = sum(u.derivative(tuple(2 if j == i else 0 for j in range(n)), X) for i in range(n))
    area = 2.0 * math.pi ** (n / 2.0) / math.gamma(n / 2.0)
    inner = -0.5 * lap / n * area * core ** (2.0 - 2.0 * s) / (2.0 - 2.0 * s)
    return QuadResult(res.value + inner, res.error + 1e-5 * np.abs(inner), res.converged)
