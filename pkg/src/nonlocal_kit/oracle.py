"""Monte Carlo and brute-force oracles.

The exit position of the 2s-stable process started at x from B_r has the
Poisson kernel as its density, so a boundary-value solution at x is the mean
of the exterior datum over exit samples. Samples are drawn by rejection from
the exit law started at the centre, which has a closed-form radial part.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DomainError, GridTooCoarseError, ParameterError, SamplerDegenerateError
from .functions import FunctionHandle
from .kernels import FracParams, _green, normalization_const
from .polynomials import Polynomial, vandermonde
from .quadrature import QuadratureConfig, integrate_rays, sphere_hits

log = logging.getLogger(__name__)

CHUNK = 1 << 15
MIN_ACCEPTANCE = 1e-3


@dataclass(frozen=True)
class McConfig:
    samples: int = 100_000
    seed: int = 0
    stream_id: int = 0
    threads: int = 1

    def __post_init__(self):
        if self.samples < 1000:
            raise ParameterError("at least 1000 samples are required")
        if not 0 <= self.seed < 2**64:
            raise ParameterError("seed must be an unsigned 64-bit integer")
        if self.threads < 1:
            raise ParameterError("threads must be positive")


def make_rng(seed: int, stream_id: int = 0, chunk: int = 0) -> np.random.Generator:
    """Philox generator keyed by (seed, stream, chunk)."""
    ss = np.random.SeedSequence(seed, spawn_key=(stream_id, chunk))
    return np.random.Generator(np.random.Philox(ss))


def _unit_vectors(rng, size, n):
    if n == 1:
        return np.where(rng.random(size) < 0.5, -1.0, 1.0)[:, None]
    g = rng.standard_normal((size, n))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def centred_exit(rng, size: int, r: float, params: FracParams) -> np.ndarray:
    """Exit points from B_r for the process started at 0: |Y| = r / sqrt(U), U ~ Beta(s, 1-s)."""
    U = rng.beta(params.s, 1.0 - params.s, size)
    return (r / np.sqrt(U))[:, None] * _unit_vectors(rng, size, params.n)


def acceptance_bound(x, r: float, params: FracParams) -> float:
    """Sup of P_r(x, y) / P_r(0, y) over |y| > r."""
    ax = float(np.linalg.norm(x))
    return ((r * r - ax * ax) / (r * r)) ** params.s * (r / (r - ax)) ** params.n


def sample_poisson_exit(x, r: float, params: FracParams, rng: np.random.Generator, size: int = 1):
    """``size`` exterior points with density P_r(x, .) (rejection from the centred exit law)."""
    x = np.asarray(x, dtype=float).reshape(params.n)
    if np.linalg.norm(x) >= r:
        raise DomainError("start point must lie inside the ball")
    M = acceptance_bound(x, r, params)
    if 1.0 / M < MIN_ACCEPTANCE:
        raise SamplerDegenerateError(
            f"acceptance rate {1.0 / M:.2e} below {MIN_ACCEPTANCE:g}; start point too close to the boundary"
        )
    out = np.empty((size, params.n))
    filled = 0
    drawn = 0
    ax2 = float(x @ x)
    scale = ((r * r - ax2) / (r * r)) ** params.s / M
    while filled < size:
        batch = max(64, int(math.ceil(1.2 * (size - filled) * M)))
        Y = centred_exit(rng, batch, r, params)
        ratio = scale * (np.linalg.norm(Y, axis=1) / np.linalg.norm(Y - x, axis=1)) ** params.n
        keep = Y[rng.random(batch) < ratio]
        take = min(keep.shape[0], size - filled)
        out[filled:filled + take] = keep[:take]
        filled += take
        drawn += batch
    log.debug("poisson exit sampler: acceptance %.4f", size / drawn)
    return out


@dataclass
class WosResult:
    estimate: float
    stderr: float
    boundary_mean: float
    green_term: float
    green_error: float
    samples: int
    acceptance_bound: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _chunk_moments(args):
    x, r, params, g, mc, idx, count = args
    rng = make_rng(mc.seed, mc.stream_id, idx)
    Y = sample_poisson_exit(x, r, params, rng, count)
    vals = g(Y)
    return float(np.sum(vals)), float(np.sum(vals * vals)), vals


def green_source_term(x, r: float, f: FunctionHandle, params: FracParams, cfg: QuadratureConfig | None = None):
    """int_{B_r} G_r(x, y) f(y) dy by adaptive quadrature in polar coordinates about x."""
    cfg = cfg or QuadratureConfig()
    X = np.asarray(x, dtype=float).reshape(1, params.n)
    scale = 1.0 if params.normalized else normalization_const(params.n, params.s)

    def hi(c, th):
        return sphere_hits(c, th, r)[1]

    def integrand(pi, rho, y):
        return _green(params.n, params.s, r, X[pi], y, dist=rho) * f(y)

    res = integrate_rays(integrand, X, 0.0, hi, cfg, breaks=f.breaks)
    return float(scale * res.value[0]), float(scale * res.error[0])


def wos_estimate(r: float, f: FunctionHandle | None, g_ext: FunctionHandle | None, x, params: FracParams,
                 mc: McConfig | None = None, cfg: QuadratureConfig | None = None) -> WosResult:
    """Single-jump walk-on-spheres value of the standard Dirichlet solution at x."""
    mc = mc or McConfig()
    if params.k != 0:
        raise ParameterError("the probabilistic representation covers k = 0 only")
    if g_ext is not None and not g_ext.tail_exponent < 2.0 * params.s:
        raise ParameterError("exterior datum violates the order-0 tail condition")
    x = np.asarray(x, dtype=float).reshape(params.n)
    M = acceptance_bound(x, r, params)
    mean = std = 0.0
    if g_ext is not None:
        counts = [min(CHUNK, mc.samples - i) for i in range(0, mc.samples, CHUNK)]
        jobs = [(x, r, params, g_ext, mc, j, c) for j, c in enumerate(counts)]
        if mc.threads > 1:
            with ThreadPoolExecutor(mc.threads) as ex:
                parts = list(ex.map(_chunk_moments, jobs))
        else:
            parts = [_chunk_moments(j) for j in jobs]
        vals = np.concatenate([p[2] for p in parts])
        mean = float(np.mean(vals))
        std = float(np.std(vals, ddof=1))
    gt, ge = green_source_term(x, r, f, params, cfg) if f is not None else (0.0, 0.0)
    return WosResult(mean + gt, std / math.sqrt(mc.samples), mean, gt, ge, mc.samples, M)


def brute_poly_fit(points, values, degree: int):
    """Least-squares polynomial via explicit normal equations and pivoted LU.

    Returns the polynomial and the sup residual.
    """
    X = np.asarray(points, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(values, dtype=float)
    n = X.shape[1]
    if degree < 0:
        return Polynomial.zero(n), float(np.max(np.abs(y)))
    V, idx = vandermonde(X, degree)
    if V.shape[0] < V.shape[1]:
        raise GridTooCoarseError("fewer grid points than monomials")
    G = V.T @ V
    rhs = V.T @ y
    lu, piv = scipy.linalg.lu_factor(G)
    coef = scipy.linalg.lu_solve((lu, piv), rhs)
    return Polynomial(n, dict(zip(idx, coef))), float(np.max(np.abs(y - V @ coef)))
