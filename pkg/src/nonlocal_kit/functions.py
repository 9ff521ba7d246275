"""Function handles: scalar fields on R^n with declared growth and smoothness.

A :class:`FunctionHandle` bundles a vectorised evaluator with the metadata the
integrators need: the polynomial growth exponent at infinity, radii of
spheres (about the origin) where the function is not smooth, an optional
support radius, an optional radius inside which it vanishes, and point
masses carried outside the evaluation region.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .errors import PreconditionError
from .polynomials import MultiIndex, Polynomial


def _points(x, n):
    x = np.asarray(x, dtype=float)
    if n == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        x = x[..., None]
    return x


def _radius(x):
    return np.sqrt(np.sum(x * x, axis=-1))


@dataclass(frozen=True)
class FunctionHandle:
    """Vectorised scalar field with declared growth and regularity.

    Parameters
    ----------
    n : int
        Spatial dimension.
    eval : callable
        Maps an array of points of shape (..., n) to values of shape (...).
    tail_exponent : float
        g such that |u(y)| <= C (1 + |y|^g); ``-inf`` for compact support or
        faster-than-polynomial decay.
    deriv : callable, optional
        ``deriv(alpha, points)`` for multi-indices with order <= ``m_avail``.
    m_avail : int
        Order of derivatives the function is smooth to (away from ``breaks``).
    support_radius : float
        u vanishes for |y| >= support_radius (``inf`` if unbounded support).
    zero_inside : float
        u vanishes for |y| < zero_inside.
    breaks : tuple of float
        Radii of spheres about the origin across which u is not smooth.
    atoms : tuple of (point, mass)
        Point masses, used only by the integral operators.
    """

    n: int
    eval: Callable
    tail_exponent: float = 0.0
    deriv: Callable | None = None
    m_avail: int = 2
    support_radius: float = math.inf
    zero_inside: float = 0.0
    breaks: tuple = ()
    atoms: tuple = ()
    name: str = "u"
    eval_error: float = 0.0

    def __call__(self, x) -> np.ndarray:
        x = _points(x, self.n)
        return np.asarray(self.eval(x), dtype=float)

    def derivative(self, alpha, x, h: float = 1e-3) -> np.ndarray:
        """Partial derivative d^alpha u; falls back to central differences."""
        alpha = MultiIndex(tuple(alpha))
        x = _points(x, self.n)
        if alpha.order == 0:
            return self(x)
        if self.deriv is not None:
            return np.asarray(self.deriv(alpha.components, x), dtype=float)
        return _fd_derivative(self, alpha.components, x, h)

    def require_smoothness(self, order: int):
        if self.m_avail < order:
            raise PreconditionError(
                f"{self.name} declares derivatives only up to order {self.m_avail}, {order} needed"
            )

    def in_Uk(self, s: float, k: int) -> bool:
        return self.tail_exponent < 2.0 * s + k

    def __add__(self, other: "FunctionHandle") -> "FunctionHandle":
        return add(self, other)

    def __sub__(self, other):
        return add(self, scale(other, -1.0))

    def __mul__(self, c: float):
        return scale(self, c)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)


def _fd_derivative(u, alpha, x, h):
    """Tensor central differences (4th order per direction)."""
    stencil = {
        1: ([-2, -1, 1, 2], [1 / 12, -2 / 3, 2 / 3, -1 / 12]),
        2: ([-2, -1, 0, 1, 2], [-1 / 12, 4 / 3, -5 / 2, 4 / 3, -1 / 12]),
    }
    pts = [(np.zeros(u.n), 1.0)]
    for i, order in enumerate(alpha):
        if order == 0:
            continue
        reps = []
        for _ in range(order // 2):
            reps.append(2)
        if order % 2:
            reps.append(1)
        for o in reps:
            offs, wts = stencil[o]
            new = []
            for shift, w in pts:
                for off, wt in zip(offs, wts):
                    s2 = shift.copy()
                    s2[i] += off * h
                    new.append((s2, w * wt / h**o))
            pts = new
    out = np.zeros(x.shape[:-1])
    for shift, w in pts:
        out = out + w * u(x + shift)
    return out


def _merge_breaks(*groups):
    vals = sorted({float(b) for g in groups for b in g if np.isfinite(b) and b > 0})
    return tuple(vals)


def add(a: FunctionHandle, b: FunctionHandle) -> FunctionHandle:
    if a.n != b.n:
        raise ValueError("dimension mismatch")

    def ev(x):
        return a.eval(x) + b.eval(x)

    deriv = None
    if a.deriv is not None or b.deriv is not None:
        def deriv(alpha, x):
            return a.derivative(alpha, x) + b.derivative(alpha, x)

    return FunctionHandle(
        n=a.n,
        eval=ev,
        tail_exponent=max(a.tail_exponent, b.tail_exponent),
        deriv=deriv,
        m_avail=min(a.m_avail, b.m_avail),
        support_radius=max(a.support_radius, b.support_radius),
        zero_inside=min(a.zero_inside, b.zero_inside),
        breaks=_merge_breaks(a.breaks, b.breaks),
        atoms=tuple(a.atoms) + tuple(b.atoms),
        name=f"({a.name} + {b.name})",
        eval_error=a.eval_error + b.eval_error,
    )


def scale(a: FunctionHandle, c: float) -> FunctionHandle:
    c = float(c)
    deriv = None
    if a.deriv is not None:
        def deriv(alpha, x):
            return c * a.deriv(alpha, x)
    return replace(
        a,
        eval=lambda x: c * a.eval(x),
        deriv=deriv,
        atoms=tuple((p, c * m) for p, m in a.atoms),
        name=f"{c:g}*{a.name}",
        eval_error=abs(c) * a.eval_error,
    )


def restrict(u: FunctionHandle, inner: float = 0.0, outer: float = math.inf) -> FunctionHandle:
    """u times the indicator of {inner <= |y| < outer}."""
    inner = float(inner)
    outer = float(outer)

    def ev(x):
        r = _radius(x)
        mask = (r >= inner) & (r < outer)
        out = np.zeros(x.shape[:-1])
        if np.any(mask):
            out[mask] = u.eval(x[mask])
        return out

    deriv = None
    if u.deriv is not None:
        def deriv(alpha, x):
            r = _radius(x)
            mask = (r >= inner) & (r < outer)
            out = np.zeros(x.shape[:-1])
            if np.any(mask):
                out[mask] = u.deriv(alpha, x[mask])
            return out

    atoms = tuple((p, m) for p, m in u.atoms if inner <= float(np.linalg.norm(p)) < outer)
    return FunctionHandle(
        n=u.n,
        eval=ev,
        tail_exponent=u.tail_exponent if math.isinf(outer) else -math.inf,
        deriv=deriv,
        m_avail=u.m_avail,
        support_radius=min(u.support_radius, outer),
        zero_inside=max(u.zero_inside, inner),
        breaks=_merge_breaks(u.breaks, [inner, outer]),
        atoms=atoms,
        name=f"{u.name}|[{inner:g},{outer:g})",
        eval_error=u.eval_error,
    )


# ----------------------------------------------------------------------------
# built-in families
# ----------------------------------------------------------------------------


def constant(n: int, c: float = 1.0) -> FunctionHandle:
    return polynomial(Polynomial(n, {(0,) * n: c}), name=f"const({c:g})")


def polynomial(P: Polynomial, name: str | None = None) -> FunctionHandle:
    deg = max(P.degree, 0)
    return FunctionHandle(
        n=P.n,
        eval=P,
        tail_exponent=float(P.degree) if P.degree >= 0 else -math.inf,
        deriv=P.derivative,
        m_avail=10**6,
        name=name or "poly",
    )


def monomial(exponent, coef: float = 1.0) -> FunctionHandle:
    exponent = tuple(int(e) for e in np.atleast_1d(exponent))
    P = Polynomial.monomial(exponent, coef)
    return polynomial(P, name=f"{coef:g}*y^{exponent}")


def gaussian_bump(n: int, center=None, width: float = 0.5, amplitude: float = 1.0) -> FunctionHandle:
    c = np.zeros(n) if center is None else np.asarray(center, dtype=float).reshape(n)
    w2 = float(width) ** 2

    def ev(x):
        d = x - c
        return amplitude * np.exp(-np.sum(d * d, axis=-1) / w2)

    return FunctionHandle(n=n, eval=ev, tail_exponent=-math.inf, m_avail=10**6, name="gaussian-bump")


def compact_bump(n: int, center=None, radius: float = 0.5, amplitude: float = 1.0) -> FunctionHandle:
    """C-infinity bump a*exp(1 - 1/(1 - |y-c|^2/rho^2)) supported in B_rho(c)."""
    c = np.zeros(n) if center is None else np.asarray(center, dtype=float).reshape(n)
    rho2 = float(radius) ** 2

    def ev(x):
        q = np.sum((x - c) ** 2, axis=-1) / rho2
        out = np.zeros(q.shape)
        inside = q < 1.0
        out[inside] = amplitude * np.exp(1.0 - 1.0 / (1.0 - q[inside]))
        return out

    return FunctionHandle(
        n=n,
        eval=ev,
        tail_exponent=-math.inf,
        m_avail=10**6,
        support_radius=float(np.linalg.norm(c)) + float(radius),
        name="compact-bump",
    )


def annulus_indicator(n: int, inner: float, outer: float, value: float = 1.0) -> FunctionHandle:
    def ev(x):
        r = _radius(x)
        return np.where((r > inner) & (r < outer), value, 0.0)

    return FunctionHandle(
        n=n,
        eval=ev,
        tail_exponent=-math.inf,
        m_avail=10**6,
        support_radius=float(outer),
        zero_inside=float(inner),
        breaks=_merge_breaks([inner, outer]),
        name=f"1[{inner:g}<|y|<{outer:g}]",
    )


def smooth_step(t):
    """C-infinity transition: 0 for t <= 0, 1 for t >= 1."""
    t = np.asarray(t, dtype=float)
    a = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
    b = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1.0 - t, 1.0)), 0.0)
    return a / (a + b)


def power_tail(n: int, power: float, cut_start: float = 3.0, cut_end: float = 4.0,
               coef: float = 1.0) -> FunctionHandle:
    """coef * |y|^power * cutoff, the cutoff vanishing on B_cut_start and equal to 1 off B_cut_end."""

    def ev(x):
        r = _radius(x)
        out = np.zeros(r.shape)
        m = r > cut_start
        rm = r[m]
        out[m] = coef * rm**power * smooth_step((rm - cut_start) / (cut_end - cut_start))
        return out

    return FunctionHandle(
        n=n,
        eval=ev,
        tail_exponent=float(power),
        m_avail=10**6,
        zero_inside=float(cut_start),
        name=f"|y|^{power:g}-tail",
    )


def getoor_profile(n: int, s: float, radius: float = 1.0, amplitude: float = 1.0) -> FunctionHandle:
    """amplitude * (r^2 - |y|^2)_+^s."""
    r2 = float(radius) ** 2

    def ev(x):
        return amplitude * np.maximum(r2 - np.sum(x * x, axis=-1), 0.0) ** s

    return FunctionHandle(
        n=n,
        eval=ev,
        tail_exponent=-math.inf,
        m_avail=10**6,
        support_radius=float(radius),
        breaks=(float(radius),),
        name="getoor-profile",
    )


def sin_composite(n: int, frequency: float = 1.0, amplitude: float = 1.0, phase: float = 0.0,
                  direction=None) -> FunctionHandle:
    """amplitude * sin(frequency * (e . y) + phase)."""
    e = np.eye(n)[0] if direction is None else np.asarray(direction, dtype=float).reshape(n)

    def ev(x):
        return amplitude * np.sin(frequency * (x @ e) + phase)

    def deriv(alpha, x):
        order = sum(alpha)
        fac = amplitude * frequency**order * np.prod(e ** np.asarray(alpha))
        return fac * np.sin(frequency * (x @ e) + phase + order * math.pi / 2)

    return FunctionHandle(n=n, eval=ev, tail_exponent=0.0, deriv=deriv, m_avail=10**6, name="sin-composite")
