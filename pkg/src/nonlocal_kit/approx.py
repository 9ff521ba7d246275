"""Local s-harmonic shadowing with prescribed values near infinity, linear and nonlinear.

The s-harmonic approximant is a least-squares combination of Poisson kernels
of the unit ball with poles outside it. Each entry x -> P_1(x, y_j) is the
solution of the Dirichlet problem whose exterior datum is a unit point mass at
y_j, so the fitted function is exactly s-harmonic in B_1 and vanishes outside
B_1 apart from finitely many point masses.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .dirichlet import BallInterpolant, DirichletSpec, SolutionField, solve_divergent, solve_standard
from .errors import IllConditionedError, ParameterError, PreconditionError
from .functions import FunctionHandle, restrict
from .kernels import FracParams, poisson_kernel_derivative, psi_bound
from .operator import chebyshev_grid, divergent_flap, mod_poly_distance, tail_integral
from .polynomials import multi_indices
from .quadrature import QuadratureConfig

MAX_POLES = 4096
_GOLDEN = math.pi * (3.0 - math.sqrt(5.0))


def _van_der_corput(j: int) -> float:
    v, denom = 0.0, 1.0
    while j:
        denom *= 2.0
        j, bit = divmod(j, 2)
        v += bit / denom
    return v


def _direction(n: int, j: int, count: int):
    if n == 2:
        a = j * _GOLDEN
        return np.array([math.cos(a), math.sin(a)])
    # golden spiral on the sphere, index-stable so prefixes are nested
    z = 1.0 - 2.0 * ((j * 0.6180339887498949) % 1.0)
    rho = math.sqrt(max(0.0, 1.0 - z * z))
    a = j * _GOLDEN
    return np.array([rho * math.cos(a), rho * math.sin(a), z])


@dataclass
class Dictionary:
    """Poisson kernels of B_1 with poles y_j, 1 < |y_j| < rho."""

    params: FracParams
    poles: np.ndarray
    rho: float

    @classmethod
    def log_spaced(cls, params: FracParams, count: int, rho: float = 8.0, r_min: float = 1.05) -> "Dictionary":
        """Nested pole sets: the first N poles of a larger dictionary form the size-N dictionary.

        Radii are r_min * (rho/r_min)^t with t running through the van der Corput
        sequence, so any power-of-two prefix is exactly log-uniform. For n = 1
        poles alternate between the two half-lines.
        """
        if not 1.0 < r_min < rho:
            raise ParameterError("need 1 < r_min < rho")
        if count < 1 or count > MAX_POLES:
            raise ParameterError(f"pole count must lie in [1, {MAX_POLES}]")
        n = params.n
        poles = np.zeros((count, n))
        for j in range(count):
            if n == 1:
                t = _van_der_corput(j // 2)
                poles[j, 0] = (1 if j % 2 == 0 else -1) * r_min * (rho / r_min) ** t
            else:
                t = _van_der_corput(j)
                poles[j] = r_min * (rho / r_min) ** t * _direction(n, j, count)
        return cls(params, poles, float(rho))

    @property
    def size(self) -> int:
        return self.poles.shape[0]

    def matrix(self, X, alpha=None) -> np.ndarray:
        """Columns d^alpha_x P_1(x, y_j) at the rows' points."""
        alpha = (0,) * self.params.n if alpha is None else tuple(alpha)
        X = np.asarray(X, dtype=float).reshape(-1, self.params.n)
        return poisson_kernel_derivative(self.params, 1.0, alpha, X[:, None, :], self.poles[None, :, :])

    def function(self, weights, name: str = "v") -> FunctionHandle:
        """sum_j w_j P_1(., y_j) inside B_1, zero outside, with point masses w_j at y_j."""
        weights = np.asarray(weights, dtype=float)
        n = self.params.n
        poles = self.poles
        params = self.params

        def ev(x):
            x = np.asarray(x, dtype=float)
            shape = x.shape[:-1]
            flat = x.reshape(-1, n)
            out = np.zeros(flat.shape[0])
            inside = np.sum(flat * flat, -1) < 1.0
            if np.any(inside):
                out[inside] = self.matrix(flat[inside]) @ weights
            return out.reshape(shape)

        def deriv(alpha, x):
            x = np.asarray(x, dtype=float)
            shape = x.shape[:-1]
            flat = x.reshape(-1, n)
            out = np.zeros(flat.shape[0])
            inside = np.sum(flat * flat, -1) < 1.0
            if np.any(inside):
                out[inside] = self.matrix(flat[inside], alpha) @ weights
            return out.reshape(shape)

        atoms = tuple((poles[j].copy(), float(weights[j])) for j in range(self.size) if weights[j] != 0.0)
        return FunctionHandle(n=n, eval=ev, tail_exponent=-math.inf, deriv=deriv, m_avail=10**6,
                              support_radius=1.0, breaks=(1.0,), atoms=atoms, name=name)

    def to_dict(self) -> dict:
        return {"rho": self.rho, "poles": self.poles.tolist()}


@dataclass
class Target:
    """Values and derivatives d^alpha (|alpha| <= m) of a function on a grid."""

    points: np.ndarray
    m: int
    data: dict

    @classmethod
    def from_function(cls, u: FunctionHandle, points, m: int) -> "Target":
        u.require_smoothness(m)
        X = np.asarray(points, dtype=float).reshape(-1, u.n)
        data = {a.components: u.derivative(a.components, X) for a in multi_indices(u.n, m)}
        return cls(X, m, data)


def cm_distance(a: dict, b: dict) -> float:
    """Discrete C^m distance: max over derivative orders and grid points."""
    return max(float(np.max(np.abs(a[k] - b[k]))) for k in a)


def fit_sharmonic(target: Target, dictionary: Dictionary, ridge: float = 0.0):
    """Least-squares fit of dictionary weights to values and derivatives up to order m.

    Returns
    -------
    weights : ndarray
    fit_error : float
        max over grid points and |alpha| <= m of |d^alpha (v - target)|.
    """
    if ridge < 0:
        raise ParameterError("ridge must be non-negative")
    rows, rhs = [], []
    for alpha, vals in target.data.items():
        rows.append(dictionary.matrix(target.points, alpha))
        rhs.append(vals)
    A = np.vstack(rows)
    b = np.concatenate(rhs)
    J = dictionary.size
    if ridge > 0:
        A_aug = np.vstack([A, math.sqrt(ridge) * np.eye(J)])
        b_aug = np.concatenate([b, np.zeros(J)])
        w, *_ = np.linalg.lstsq(A_aug, b_aug, rcond=None)
    else:
        w, _, rank, _ = np.linalg.lstsq(A, b, rcond=None)
        if rank < J:
            raise IllConditionedError(
                f"dictionary matrix has rank {rank} < {J} columns; use a positive ridge parameter"
            )
    err = float(np.max(np.abs(A @ w - b))) if b.size else 0.0
    return w, err


# ----------------------------------------------------------------------------
# linear shadowing
# ----------------------------------------------------------------------------


@dataclass
class ApproxReport:
    weights: np.ndarray
    rho: float
    Rbar: float
    w_field: SolutionField | None
    achieved_cm_error: float
    harmonicity_residual: float
    harmonicity_error: float
    R_eps: float
    epsilon: float
    achieved: bool
    fit_error: float
    tail: float
    psi_bound: float
    u_eps: FunctionHandle = field(repr=False, default=None)
    v: FunctionHandle = field(repr=False, default=None)
    u_tilde: FunctionHandle = field(repr=False, default=None)
    w: FunctionHandle = field(repr=False, default=None)
    f_eps: BallInterpolant | None = field(repr=False, default=None)
    dictionary: Dictionary | None = field(repr=False, default=None)
    norms: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "weights": np.asarray(self.weights).tolist(),
            "rho": self.rho,
            "Rbar": self.Rbar,
            "R_eps": self.R_eps,
            "epsilon": self.epsilon,
            "achieved": self.achieved,
            "achieved_cm_error": self.achieved_cm_error,
            "fit_error": self.fit_error,
            "harmonicity_residual": self.harmonicity_residual,
            "harmonicity_error": self.harmonicity_error,
            "tail_integral": self.tail,
            "psi_bound": self.psi_bound,
            "norms": self.norms,
            "poles": self.dictionary.poles.tolist() if self.dictionary is not None else [],
        }


def choose_Rbar(u: FunctionHandle, eps: float, params: FracParams, cfg=None, safety: float = 10.0,
                start: float = 8.0, max_doublings: int = 40):
    """Smallest R in {start, 2 start, ...} with tail_integral(u, R) <= eps / (psi_bound * safety)."""
    pb = psi_bound(params)
    R = start
    for _ in range(max_doublings):
        T = tail_integral(u, R, params, cfg)
        if T * pb * safety <= eps:
            return R, T, pb
        R *= 2.0
    raise PreconditionError(f"tail of {u.name} too heavy: no radius up to {R:g} meets the threshold")


def _assemble(v: FunctionHandle, ut: FunctionHandle, w: FunctionHandle | None, u: FunctionHandle,
              name="u_eps") -> FunctionHandle:
    """u_eps = v + u_tilde - w, evaluated by composition."""
    n = u.n

    def ev(x):
        out = v(x) + ut(x)
        if w is not None:
            out = out - w(x)
        return out

    breaks = set(v.breaks) | set(ut.breaks) | (set(w.breaks) if w is not None else set())
    return FunctionHandle(n=n, eval=ev, tail_exponent=u.tail_exponent, m_avail=2,
                          support_radius=u.support_radius, breaks=tuple(sorted(breaks)),
                          atoms=tuple(v.atoms) + tuple(ut.atoms), name=name)


def _zero(n):
    return FunctionHandle(n=n, eval=lambda x: np.zeros(np.asarray(x).shape[:-1]), tail_exponent=-math.inf,
                          m_avail=10**6, support_radius=0.0, name="0")


def shadow_harmonic(u: FunctionHandle, m: int, eps: float, params: FracParams,
                    cfg: QuadratureConfig | None = None, *, poles: int = 64, rho: float = 8.0,
                    ridge: float = 1e-10, dictionary: Dictionary | None = None, Rbar: float | None = None,
                    grid_size: int | None = None, check_harmonicity: bool = True,
                    prepared: dict | None = None) -> ApproxReport:
    """Build u_eps, s-harmonic mod polynomials in B_1, C^m-close to u on B_1, equal to u far out.

    ``prepared`` may carry the dictionary-independent stages (R-bar, u_tilde,
    f_eps, w) from an earlier call with the same u, so dictionary sweeps reuse them.
    """
    cfg = cfg or QuadratureConfig()
    if eps <= 0:
        raise ParameterError("epsilon must be positive")
    if not u.in_Uk(params.s, params.k):
        raise PreconditionError(f"{u.name} is not in U_k for s={params.s:g}, k={params.k}")
    n = params.n
    stages = prepared if prepared is not None else prepare_shadow(u, eps, params, cfg, Rbar=Rbar)
    Rb, T, pb = stages["Rbar"], stages["tail"], stages["psi_bound"]
    ut, f_eps, w_field, w = stages["u_tilde"], stages["f_eps"], stages["w_field"], stages["w"]

    X = chebyshev_grid(n, grid_size)
    tu = Target.from_function(u, X, m)
    tw = Target.from_function(w, X, m) if w is not None else None
    tut = Target.from_function(ut, X, m)
    target = Target(X, m, {a: tu.data[a] - tut.data[a] + (tw.data[a] if tw else 0.0) for a in tu.data})
    dico = dictionary or Dictionary.log_spaced(params, poles, rho)
    if not np.any(target.data[(0,) * n]) and all(not np.any(vv) for vv in target.data.values()):
        weights, fit_err = np.zeros(dico.size), 0.0
    else:
        weights, fit_err = fit_sharmonic(target, dico, ridge)
    v = dico.function(weights)
    u_eps = _assemble(v, ut, w, u)

    # achieved C^m error, recomputed from the assembled components
    tv = Target.from_function(v, X, m)
    approx = {a: tv.data[a] + tut.data[a] - (tw.data[a] if tw else 0.0) for a in tu.data}
    achieved = cm_distance(approx, tu.data)

    h_res, h_err = float("nan"), 0.0
    if check_harmonicity:
        Xh = chebyshev_grid(n, grid_size, radius=0.5)
        fl = divergent_flap(u_eps, Xh, params, cfg)
        h_res, _ = mod_poly_distance(Xh, fl.value, np.zeros_like(fl.value), params.admissible_degree)
        h_err = float(np.max(fl.error))
    norms = {"w_B1": float(np.max(np.abs(tw.data[(0,) * n]))) if tw else 0.0,
             "f_eps_B2": stages["f_eps_norm"]}
    return ApproxReport(
        weights=weights, rho=dico.rho, Rbar=Rb, w_field=w_field, achieved_cm_error=achieved,
        harmonicity_residual=float(h_res), harmonicity_error=h_err, R_eps=dico.rho + Rb, epsilon=eps,
        achieved=achieved <= eps, fit_error=fit_err, tail=T, psi_bound=pb, u_eps=u_eps, v=v, u_tilde=ut,
        w=w, f_eps=f_eps, dictionary=dico, norms=norms,
    )


def prepare_shadow(u: FunctionHandle, eps: float, params: FracParams, cfg: QuadratureConfig | None = None,
                   Rbar: float | None = None, use_surrogate: bool | None = None) -> dict:
    """Dictionary-independent stages: R-bar, u_tilde, f_eps on B_2 and the corrector w."""
    cfg = cfg or QuadratureConfig()
    n = params.n
    if Rbar is None:
        Rb, T, pb = choose_Rbar(u, eps, params, cfg)
    else:
        Rb, T, pb = float(Rbar), tail_integral(u, Rbar, params, cfg), psi_bound(params)
    ut = restrict(u, Rb, math.inf)
    if ut.support_radius <= Rb and not ut.atoms:
        return {"Rbar": Rb, "tail": T, "psi_bound": pb, "u_tilde": ut, "f_eps": None, "w_field": None,
                "w": None, "f_eps_norm": 0.0}
    degree = {1: 24, 2: 14, 3: 8}[n]
    f_eps = BallInterpolant.fit(lambda X: divergent_flap(ut, X, params, cfg, inner_radius=Rb).value,
                                n, 2.0, degree)
    w_field = solve_standard(2.0, f_eps.as_function("f_eps"), None, params, cfg)
    if use_surrogate is None:
        use_surrogate = n > 1
    w = w_field.surrogate()[0] if use_surrogate else w_field.as_function("w")
    Y = chebyshev_grid(n, None, 2.0)
    return {"Rbar": Rb, "tail": T, "psi_bound": pb, "u_tilde": ut, "f_eps": f_eps, "w_field": w_field,
            "w": w, "f_eps_norm": float(np.max(np.abs(f_eps(Y))))}


def schauder_diagnostic(u: FunctionHandle, params: FracParams, radii, cfg=None, grid_size=None) -> dict:
    """||w||_{B_1 grid} against ||f_eps||_{B_2 grid} over a sequence of truncation radii.

    Reported only: the constant in the underlying estimate is not explicit.
    """
    rows = []
    X = chebyshev_grid(params.n, grid_size)
    for R in radii:
        st = prepare_shadow(u, 1.0, params, cfg, Rbar=R)
        wn = float(np.max(np.abs(st["w"](X)))) if st["w"] is not None else 0.0
        rows.append({"Rbar": float(R), "w_B1": wn, "f_eps_B2": st["f_eps_norm"]})
    ratios = [r["w_B1"] / r["f_eps_B2"] for r in rows if r["f_eps_B2"] > 0]
    C = max(ratios) if ratios else 0.0
    return {"rows": rows, "C": C}


# ----------------------------------------------------------------------------
# nonlinear shadowing
# ----------------------------------------------------------------------------


def pack_size(n: int, m: int) -> int:
    """N(m) = n + sum_{j<=m} n^j."""
    return n + sum(n**j for j in range(m + 1))


def _tensor_indices(n, j):
    """Multi-indices of the n^j ordered j-fold partials, in lexicographic order of index tuples."""
    out = []
    for tup in itertools.product(range(n), repeat=j):
        a = [0] * n
        for i in tup:
            a[i] += 1
        out.append(tuple(a))
    return out


def derivative_pack(u: FunctionHandle, x, m: int) -> np.ndarray:
    """(x, u, Du, ..., D^m u) with full tensors, shape (..., N(m))."""
    u.require_smoothness(m)
    n = u.n
    X = np.asarray(x, dtype=float)
    if n == 1 and (X.ndim == 0 or X.shape[-1] != 1):
        X = X[..., None]
    cols = [X[..., i] for i in range(n)]
    for j in range(m + 1):
        for a in _tensor_indices(n, j):
            cols.append(u.derivative(a, X))
    return np.stack(cols, axis=-1)


def estimate_lipschitz(F, n: int, m: int, S: float, samples: int = 4000, seed: int = 0,
                       h: float = 1e-6) -> float:
    """max over sampled box points of max_i |dF/dp_i| over the non-x slots of the pack."""
    N = pack_size(n, m)
    rng = np.random.Generator(np.random.Philox(seed))
    P = rng.uniform(-S, S, size=(samples, N))
    P[:, :n] = rng.uniform(-1.0, 1.0, size=(samples, n))
    L = 0.0
    for i in range(n, N):
        e = np.zeros(N)
        e[i] = h
        g = (F(P + e) - F(P - e)) / (2 * h)
        L = max(L, float(np.max(np.abs(g))))
    return L


@dataclass
class NonlinearReport:
    shadow: ApproxReport
    eta_sup: float
    lipschitz: float
    bound_factor: int
    bound: float
    holds: bool
    S: float
    points: np.ndarray = field(repr=False, default=None)
    eta: np.ndarray = field(repr=False, default=None)
    u_values: np.ndarray = field(repr=False, default=None)
    u_eps_values: np.ndarray = field(repr=False, default=None)
    u_eps: FunctionHandle = field(repr=False, default=None)
    v_field: SolutionField = field(repr=False, default=None)

    def to_dict(self) -> dict:
        return {
            "shadow": self.shadow.to_dict(),
            "eta_sup": self.eta_sup,
            "lipschitz": self.lipschitz,
            "bound_factor": self.bound_factor,
            "bound": self.bound,
            "holds": self.holds,
            "S": self.S,
        }


def nonlinear_shadow(u: FunctionHandle, F, m: int, eps: float, params: FracParams,
                     cfg: QuadratureConfig | None = None, *, h: float = 0.5, lipschitz: float | None = None,
                     grid_size: int | None = None, **shadow_kw) -> NonlinearReport:
    """u_eps with F(x, u_eps, ..., D^m u_eps) solving the divergent equation of u up to eta on B_1.

    ``F`` maps packs of shape (..., N(m)) to values. ``u`` must be defined on
    a neighbourhood of B_{1+h}; built-in handles are global so no extension
    step is needed.
    """
    cfg = cfg or QuadratureConfig()
    if not 0 < h < 1:
        raise ParameterError("h must lie in (0, 1)")
    u.require_smoothness(max(2 * m, m))
    n = params.n
    R = 1.0 + h

    def fsrc(x):
        return F(derivative_pack(u, x, m))

    f = FunctionHandle(n=n, eval=fsrc, tail_exponent=-math.inf, m_avail=0, name="F(u)")
    v_field = solve_divergent(DirichletSpec(R, f, None, params.k), params, cfg)
    v = v_field.as_function("v")
    w = u - v
    w = FunctionHandle(n=n, eval=w.eval, tail_exponent=u.tail_exponent, deriv=w.deriv,
                       m_avail=u.m_avail, support_radius=u.support_radius, breaks=tuple(sorted(set(u.breaks) | {R})),
                       name="w")
    rep = shadow_harmonic(w, m, eps, params, cfg, grid_size=grid_size, **shadow_kw)
    w_eps = rep.u_eps
    u_eps = _assemble(w_eps, v, None, u, name="u_eps")

    X = chebyshev_grid(n, grid_size)
    pu = derivative_pack(u, X, m)
    # derivatives of u_eps - u equal those of w_eps - w on B_1
    diff = derivative_pack(rep.u_eps, X, m) - derivative_pack(w, X, m) if m > 0 else None
    pe = pu.copy()
    if m == 0:
        pe[:, n] = u_eps(X)
    else:
        pe[:, n:] = pu[:, n:] + diff[:, n:]
    eta = F(pu) - F(pe)
    S = 2.0 + sum(float(np.max(np.abs(pu[:, n + sum(n**i for i in range(j)):n + sum(n**i for i in range(j + 1))])))
                  for j in range(m + 1))
    L = estimate_lipschitz(F, n, m, S) if lipschitz is None else float(lipschitz)
    factor = sum(n**j for j in range(m + 1))
    bound = L * factor * rep.achieved_cm_error
    eta_sup = float(np.max(np.abs(eta)))
    return NonlinearReport(rep, eta_sup, L, factor, bound, eta_sup <= bound * (1 + 1e-12) + 1e-15, S, X, eta,
                           pu[:, n], pe[:, n], u_eps, v_field)
