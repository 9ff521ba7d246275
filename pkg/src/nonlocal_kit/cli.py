"""Command-line entry point: ``nonlocal-kit <subcommand> --config run.json --out DIR``.

Exit codes: 0 success, 2 invalid input (including tail violations), 3 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import os
import sys
from pathlib import Path
from typing import Annotated, Literal, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from . import __version__
from . import functions as F
from .errors import (DomainError, EvaluationError, GridTooCoarseError, IllConditionedError, NonlocalKitError,
                     NumericalError, ParameterError, PreconditionError, SamplerDegenerateError,
                     TailDivergenceError, UnsupportedOrderError)
from .kernels import FracParams
from .quadrature import QuadratureConfig

log = logging.getLogger("nonlocal_kit")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


# -- function specs -----------------------------------------------------------


class MonomialSpec(_Strict):
    name: Literal["monomial"]
    exponent: list[int]
    coef: float = 1.0


class GaussianSpec(_Strict):
    name: Literal["gaussian-bump"]
    center: list[float] | None = None
    width: float = 0.5
    amplitude: float = 1.0


class CompactBumpSpec(_Strict):
    name: Literal["compact-bump"]
    center: list[float] | None = None
    radius: float = 0.5
    amplitude: float = 1.0


class AnnulusSpec(_Strict):
    name: Literal["annulus-indicator"]
    inner: float
    outer: float
    value: float = 1.0


class PowerTailSpec(_Strict):
    name: Literal["power-tail"]
    power: float
    cut_start: float = 3.0
    cut_end: float = 4.0
    coef: float = 1.0


class GetoorSpec(_Strict):
    name: Literal["getoor-profile"]
    radius: float = 1.0
    amplitude: float = 1.0


class SinSpec(_Strict):
    name: Literal["sin-composite"]
    frequency: float = 1.0
    amplitude: float = 1.0
    phase: float = 0.0
    direction: list[float] | None = None


class ConstantSpec(_Strict):
    name: Literal["constant"]
    value: float = 1.0


FunctionSpec = Annotated[
    Union[MonomialSpec, GaussianSpec, CompactBumpSpec, AnnulusSpec, PowerTailSpec, GetoorSpec, SinSpec,
          ConstantSpec],
    Field(discriminator="name"),
]


def build_function(specs, n: int, s: float):
    """Sum of built-ins described by a spec or list of specs (None for an empty list)."""
    if specs is None:
        return None
    if not isinstance(specs, list):
        specs = [specs]
    out = None
    for sp in specs:
        if isinstance(sp, MonomialSpec):
            if len(sp.exponent) != n:
                raise ParameterError(f"monomial exponent must have {n} entries")
            h = F.monomial(sp.exponent, sp.coef)
        elif isinstance(sp, GaussianSpec):
            h = F.gaussian_bump(n, sp.center, sp.width, sp.amplitude)
        elif isinstance(sp, CompactBumpSpec):
            h = F.compact_bump(n, sp.center, sp.radius, sp.amplitude)
        elif isinstance(sp, AnnulusSpec):
            h = F.annulus_indicator(n, sp.inner, sp.outer, sp.value)
        elif isinstance(sp, PowerTailSpec):
            h = F.power_tail(n, sp.power, sp.cut_start, sp.cut_end, sp.coef)
        elif isinstance(sp, GetoorSpec):
            h = F.getoor_profile(n, s, sp.radius, sp.amplitude)
        elif isinstance(sp, SinSpec):
            h = F.sin_composite(n, sp.frequency, sp.amplitude, sp.phase, sp.direction)
        else:
            h = F.constant(n, sp.value)
        out = h if out is None else out + h
    return out


# -- run configuration ----------------------------------------------------------


class ParamsModel(_Strict):
    n: int = 1
    s: float = 0.5
    k: int = 0
    normalized: bool = False

    def build(self) -> FracParams:
        return FracParams(self.n, self.s, self.k, self.normalized)


class QuadModel(_Strict):
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    max_subdivisions: int = 2000
    split_radius: float = 0.1
    tail_cut: float = 1e3


class DictionaryModel(_Strict):
    poles: int = 64
    rho: float = 8.0
    ridge: float = 1e-10
    r_min: float = 1.05


class NonlinearModel(_Strict):
    name: Literal["zero", "constant", "sin", "linear"] = "sin"
    value: float = 0.0
    coefficients: list[float] | None = None
    lipschitz: float | None = None


class McModel(_Strict):
    samples: int = 100_000
    stream_id: int = 0


class RunConfig(_Strict):
    params: ParamsModel = ParamsModel()
    quadrature: QuadModel = QuadModel()
    grids: dict[str, int] = Field(default_factory=lambda: {"1": 33, "2": 13, "3": 9})
    grid_radius: float = 1.0
    points: list[list[float]] | None = None
    function: list[FunctionSpec] | FunctionSpec | None = None
    source: list[FunctionSpec] | FunctionSpec | None = None
    exterior: list[FunctionSpec] | FunctionSpec | None = None
    radius: float = 1.0
    R_values: list[float] = Field(default_factory=lambda: [8.0, 16.0, 32.0, 64.0])
    epsilon: float = 0.1
    m: int = 0
    dictionary: DictionaryModel = DictionaryModel()
    nonlinear: NonlinearModel = NonlinearModel()
    mc: McModel = McModel()
    seed: int = 0
    output_dir: str | None = None
    plot_radius: float | None = None
    svg: bool = True

    @field_validator("grids")
    @classmethod
    def _grid_keys(cls, v):
        for key, size in v.items():
            if key not in {"1", "2", "3"} or size < 2:
                raise ValueError("grids maps dimension '1'..'3' to a size >= 2")
        return v


def config_hash(cfg: RunConfig) -> str:
    blob = json.dumps(cfg.model_dump(mode="json"), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


# -- output helpers ---------------------------------------------------------------


class Writer:
    def __init__(self, out: Path, cfg: RunConfig, command: str):
        self.out = out
        self.out.mkdir(parents=True, exist_ok=True)
        self.meta = {"version": __version__, "config_sha256": config_hash(cfg), "command": command}

    def csv(self, name, header, rows):
        path = self.out / name
        with open(path, "w") as fh:
            fh.write(f"# nonlocal-kit {self.meta['version']}\n")
            fh.write(f"# config-sha256 {self.meta['config_sha256']}\n")
            fh.write(",".join(header) + "\n")
            for row in rows:
                fh.write(",".join(_fmt(v) for v in row) + "\n")
        return path

    def json(self, name, payload):
        path = self.out / name
        data = {"_meta": self.meta}
        data.update(payload)
        with open(path, "w") as fh:
            json.dump(_jsonable(data), fh, indent=2, sort_keys=True)
            fh.write("\n")
        return path

    def svg(self, name, x, curves, title=""):
        path = self.out / name
        path.write_text(_svg_lines(x, curves, title))
        return path


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else str(f)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _svg_lines(x, curves: dict, title: str, width=640, height=400) -> str:
    x = np.asarray(x, float)
    ys = [np.asarray(v, float) for v in curves.values()]
    lo = min(float(np.nanmin(y)) for y in ys)
    hi = max(float(np.nanmax(y)) for y in ys)
    if hi == lo:
        hi = lo + 1.0
    pad = 40
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"]

    def sx(v):
        return pad + (v - x[0]) / (x[-1] - x[0]) * (width - 2 * pad)

    def sy(v):
        return height - pad - (v - lo) / (hi - lo) * (height - 2 * pad)

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
             f'<text x="{pad}" y="20" font-size="14">{title}</text>']
    for i, (label, y) in enumerate(curves.items()):
        pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(x, y) if np.isfinite(b))
        c = colors[i % len(colors)]
        parts.append(f'<polyline fill="none" stroke="{c}" stroke-width="1.5" points="{pts}"/>')
        parts.append(f'<text x="{width - 150}" y="{30 + 16 * i}" font-size="12" fill="{c}">{label}</text>')
    parts.append("</svg>\n")
    return "\n".join(parts)


# -- subcommands -------------------------------------------------------------------


def _grid(cfg: RunConfig, n: int, radius: float | None = None):
    from .operator import chebyshev_grid
    if cfg.points is not None:
        X = np.asarray(cfg.points, dtype=float)
        if X.ndim != 2 or X.shape[1] != n:
            raise ParameterError(f"points must be a list of {n}-vectors")
        return X
    return chebyshev_grid(n, cfg.grids.get(str(n)), cfg.grid_radius if radius is None else radius)


def _need(h, what):
    if h is None:
        raise ParameterError(f"config needs a '{what}' function spec")
    return h


def cmd_eval(cfg, params, qcfg, w: Writer):
    from .operator import classical_flap, divergent_flap
    u = _need(build_function(cfg.function, params.n, params.s), "function")
    X = _grid(cfg, params.n)
    div = divergent_flap(u, X, params, qcfg)
    if u.tail_exponent < 2.0 * params.s:
        cl = classical_flap(u, X, params, qcfg)
        cv, ce = cl.value, cl.error
    else:
        cv = ce = [None] * X.shape[0]
    header = [f"x{i + 1}" for i in range(params.n)] + ["classical", "divergent", "classical_error", "divergent_error"]
    rows = [list(x) + [a, b, c, d] for x, a, b, c, d in zip(X, cv, div.value, ce, div.error)]
    w.csv("eval.csv", header, rows)
    w.json("eval.json", {"params": params.to_dict(), "converged": bool(np.all(div.converged))})


def cmd_convergence(cfg, params, qcfg, w: Writer):
    from .operator import divergent_flap, tail_integral, truncated_flap
    u = _need(build_function(cfg.function, params.n, params.s), "function")
    X = _grid(cfg, params.n)
    lim = divergent_flap(u, X, params, qcfg).value
    rows, reports = [], []
    for R in cfg.R_values:
        rep = truncated_flap(u, X, R, params, qcfg, limit=lim)
        T = tail_integral(u, R, params, qcfg)
        rows.append([R, rep.residual_to_limit, T, rep.error])
        reports.append(rep.to_dict() | {"tail_integral": T})
    w.csv("convergence.csv", ["R", "residual_to_limit", "tail_integral", "error"], rows)
    w.json("convergence.json", {"reports": reports, "limit": lim})


def cmd_solve(cfg, params, qcfg, w: Writer):
    from .dirichlet import DirichletSpec, solve_divergent, solve_standard
    f = build_function(cfg.source, params.n, params.s)
    g = build_function(cfg.exterior, params.n, params.s)
    if params.k == 0:
        field = solve_standard(cfg.radius, f, g, params, qcfg)
    else:
        field = solve_divergent(DirichletSpec(cfg.radius, f, g, params.k), params, qcfg)
    X = _grid(cfg, params.n, cfg.radius * cfg.grid_radius)
    vals, errs, low = field.evaluate(X)
    header = [f"x{i + 1}" for i in range(params.n)] + ["value", "error", "low_accuracy"]
    w.csv("solution.csv", header, [list(x) + [v, e, lo] for x, v, e, lo in zip(X, vals, errs, low)])
    comps = {k: v for k, v in field.components.items() if not hasattr(v, "coef")}
    w.json("solve.json", {"params": params.to_dict(), "radius": cfg.radius, "components": comps})


def cmd_multiplicity(cfg, params, qcfg, w: Writer):
    from .dirichlet import multiplicity_basis
    mb = multiplicity_basis(params, qcfg, cfg.grids.get(str(params.n)))
    X = _grid(cfg, params.n)
    cols = [f(X) for f in mb.fields]
    header = [f"x{i + 1}" for i in range(params.n)] + ["u_" + "".join(map(str, m)) for m in mb.monomials]
    w.csv("basis.csv", header, [list(x) + [c[i] for c in cols] for i, x in enumerate(X)])
    w.json("multiplicity.json", {"monomials": mb.monomials, "gram": mb.gram, "singular_values": mb.singular_values,
                                 "rank": mb.rank, "N_k": mb.expected})


def _curve_points(n, radius, count=401):
    t = np.linspace(-radius, radius, count)
    X = np.zeros((count, n))
    X[:, 0] = t
    return t, X


def cmd_shadow(cfg, params, qcfg, w: Writer):
    from .approx import shadow_harmonic
    u = _need(build_function(cfg.function, params.n, params.s), "function")
    d = cfg.dictionary
    from .approx import Dictionary
    dico = Dictionary.log_spaced(params, d.poles, d.rho, d.r_min)
    rep = shadow_harmonic(u, cfg.m, cfg.epsilon, params, qcfg, dictionary=dico, ridge=d.ridge,
                          grid_size=cfg.grids.get(str(params.n)))
    w.json("shadow.json", {"report": rep.to_dict()})
    t, X = _curve_points(params.n, cfg.plot_radius or 1.5 * rep.R_eps)
    ue = rep.u_eps(X)
    uu = u(X)
    w.csv("curves.csv", ["x", "u", "u_eps"], zip(t, uu, ue))
    if cfg.svg:
        w.svg("curves.svg", t, {"u": uu, "u_eps": ue}, "u and its shadow")


def build_nonlinearity(spec: NonlinearModel, n: int, m: int):
    from .approx import pack_size
    N = pack_size(n, m)
    if spec.name == "zero":
        return lambda P: np.zeros(P.shape[:-1]), 0.0
    if spec.name == "constant":
        return lambda P: np.full(P.shape[:-1], spec.value), 0.0
    if spec.name == "sin":
        return lambda P: np.sin(P[..., n]), 1.0
    c = np.asarray(spec.coefficients or [], dtype=float)
    if c.size != N:
        raise ParameterError(f"linear nonlinearity needs {N} coefficients")
    return lambda P: P @ c, float(np.max(np.abs(c[n:])))


def cmd_nonlinear_shadow(cfg, params, qcfg, w: Writer):
    from .approx import nonlinear_shadow
    u = _need(build_function(cfg.function, params.n, params.s), "function")
    Fn, L_known = build_nonlinearity(cfg.nonlinear, params.n, cfg.m)
    L = cfg.nonlinear.lipschitz
    d = cfg.dictionary
    rep = nonlinear_shadow(u, Fn, cfg.m, cfg.epsilon, params, qcfg, lipschitz=L, poles=d.poles, rho=d.rho,
                           ridge=d.ridge, grid_size=cfg.grids.get(str(params.n)))
    w.json("nonlinear.json", {"report": rep.to_dict()})
    X = rep.points
    w.csv("eta.csv", [f"x{i + 1}" for i in range(params.n)] + ["u", "u_eps", "eta"],
          [list(x) + [a, b, c] for x, a, b, c in zip(X, rep.u_values, rep.u_eps_values, rep.eta)])
    t, Xc = _curve_points(params.n, cfg.plot_radius or 1.5 * rep.shadow.R_eps)
    uu, ue = u(Xc), rep.u_eps(Xc)
    w.csv("curves.csv", ["x", "u", "u_eps"], zip(t, uu, ue))
    if cfg.svg:
        w.svg("curves.svg", t, {"u": uu, "u_eps": ue}, "nonlinear shadow")


def cmd_oracle(cfg, params, qcfg, w: Writer, threads: int):
    from .oracle import McConfig, wos_estimate
    if params.k != 0:
        raise ParameterError("the oracle covers k = 0 only")
    f = build_function(cfg.source, params.n, params.s)
    g = build_function(cfg.exterior, params.n, params.s)
    X = _grid(cfg, params.n, cfg.radius * cfg.grid_radius)
    mc = McConfig(cfg.mc.samples, cfg.seed, cfg.mc.stream_id, threads)
    out = []
    for i, x in enumerate(X):
        r = wos_estimate(cfg.radius, f, g, x, params, McConfig(mc.samples, mc.seed, mc.stream_id + i, threads), qcfg)
        out.append({"x": x, **r.to_dict()})
    w.json("oracle.json", {"estimates": out})


def cmd_selftest(w: Writer | None):
    from .acceptance import run_all
    checks = run_all(echo=lambda line: print(line, flush=True))
    failed = [c for c in checks if c.gating and not c.passed]
    print(f"{len(checks) - len(failed)}/{len(checks)} criteria passed" if not failed
          else f"{len(failed)} gating criteria failed")
    if w is not None:
        w.json("selftest.json", {"checks": [{"number": c.number, "title": c.title, "passed": c.passed,
                                             "gating": c.gating, "detail": c.detail} for c in checks]})
    return EXIT_OK if not failed else EXIT_NUMERIC


COMMANDS = ["eval", "convergence", "solve", "multiplicity", "shadow", "nonlinear-shadow", "oracle", "selftest"]


def build_parser():
    ap = argparse.ArgumentParser(prog="nonlocal-kit", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", type=Path, help="JSON run configuration")
        sp.add_argument("--out", type=Path, help="output directory")
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--threads", type=int, help="worker threads (default NONLOCAL_KIT_THREADS or 1)")
    return ap


def load_config(path: Path | None, seed: int | None) -> RunConfig:
    data = {}
    if path is not None:
        with open(path) as fh:
            data = json.load(fh)
    if seed is not None:
        data["seed"] = seed
    return RunConfig.model_validate(data)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    threads = args.threads or int(os.environ.get("NONLOCAL_KIT_THREADS", "1") or 1)
    try:
        if threads < 1:
            raise ParameterError("threads must be positive")
        cfg = load_config(args.config, args.seed)
        if not 0 <= cfg.seed < 2**64:
            raise ParameterError("seed must be an unsigned 64-bit integer")
        out = args.out or Path(cfg.output_dir or ".")
        if args.command == "selftest":
            return cmd_selftest(Writer(out, cfg, "selftest") if args.out else None)
        params = cfg.params.build()
        qcfg = QuadratureConfig.from_dict(cfg.quadrature.model_dump())
        w = Writer(out, cfg, args.command)
        handler = {
            "eval": cmd_eval,
            "convergence": cmd_convergence,
            "solve": cmd_solve,
            "multiplicity": cmd_multiplicity,
            "shadow": cmd_shadow,
            "nonlinear-shadow": cmd_nonlinear_shadow,
        }.get(args.command)
        if handler is not None:
            handler(cfg, params, qcfg, w)
        else:
            cmd_oracle(cfg, params, qcfg, w, threads)
        return EXIT_OK
    except (ValidationError, json.JSONDecodeError, FileNotFoundError) as exc:
        print(f"error: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ParameterError, DomainError, TailDivergenceError, PreconditionError, UnsupportedOrderError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (EvaluationError, NumericalError, IllConditionedError, SamplerDegenerateError, GridTooCoarseError,
            NonlocalKitError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
