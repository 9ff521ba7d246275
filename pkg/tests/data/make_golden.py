"""Regenerate golden_constants.json with mpmath at 40 digits (run manually; output is frozen)."""

import json
from pathlib import Path

import mpmath as mp

mp.mp.dps = 40

LATTICE = [(n, s) for n in (1, 2, 3) for s in ("0.05", "0.25", "0.5", "0.75", "0.95")]


def c(n, s):
    return 4**s * mp.gamma(n / mp.mpf(2) + s) / (mp.pi ** (n / mp.mpf(2)) * abs(mp.gamma(-s)))


def C(n, s):
    return mp.gamma(n / mp.mpf(2)) * mp.sin(mp.pi * s) / mp.pi ** (n / mp.mpf(2) + 1)


def kappa(n, s):
    return mp.gamma(n / mp.mpf(2)) / (4**s * mp.pi ** (n / mp.mpf(2)) * mp.gamma(s) ** 2)


def getoor(n, s):
    return 4**s * mp.gamma(1 + s) * mp.gamma(n / mp.mpf(2) + s) / mp.gamma(n / mp.mpf(2))


def remainder(n, s, k, x, y):
    """|x-y|^{-p} minus its degree-(k-1) Taylor polynomial in x at 0, via mpmath Taylor coefficients along x."""
    p = n + 2 * s
    x = [mp.mpf(v) for v in x]
    y = [mp.mpf(v) for v in y]

    def f(t):
        return mp.sqrt(sum((t * a - b) ** 2 for a, b in zip(x, y))) ** (-p)

    coeffs = mp.taylor(f, 0, k - 1) if k > 0 else []
    return f(1) - sum(coeffs)


def inner(r0, n, s):
    # int_0^{r0} t^{s-1} (1+t)^{-n/2} dt = r0^s/s * 2F1(n/2, s; s+1; -r0)
    return r0**s / s * mp.hyp2f1(n / mp.mpf(2), s, s + 1, -r0)


def annulus_mass_1d(s):
    # int_{1<|y|<2} P_1(0,y) dy for n=1
    C1 = C(1, s)
    return 2 * C1 * mp.quad(lambda y: (y * y - 1) ** (-s) / y, [1, 2])


out = {"constants": [], "remainders": [], "green_inner": [], "annulus_mass_1d": []}
for n, s in LATTICE:
    s = mp.mpf(s)
    out["constants"].append({"n": n, "s": float(s), "c": mp.nstr(c(n, s), 17), "C": mp.nstr(C(n, s), 17),
                             "kappa": mp.nstr(kappa(n, s), 17), "getoor": mp.nstr(getoor(n, s), 17)})
for n, s, k, x, y in [
    (1, "0.5", 2, [0.5], [4.0]),
    (1, "0.3", 3, [0.9], [-2.0]),
    (1, "0.7", 1, [-0.2], [2.5]),
    (2, "0.5", 2, [0.3, -0.4], [2.0, 1.0]),
    (2, "0.25", 3, [0.7, 0.1], [-1.5, 2.2]),
    (3, "0.6", 2, [0.2, 0.3, -0.5], [1.0, -2.0, 0.5]),
    (3, "0.1", 4, [0.01, 0.02, 0.03], [20.0, 0.0, 0.0]),
]:
    s_ = mp.mpf(s)
    out["remainders"].append({"n": n, "s": float(s_), "k": k, "x": x, "y": y,
                              "value": mp.nstr(remainder(n, s_, k, x, y), 17)})
for n in (1, 2, 3):
    for s in ("0.1", "0.5", "0.9"):
        for r0 in ("1e-6", "0.3", "1", "7.5", "1e4"):
            s_, r_ = mp.mpf(s), mp.mpf(r0)
            out["green_inner"].append({"n": n, "s": float(s_), "r0": float(r_), "value": mp.nstr(inner(r_, n, s_), 17)})
for s in ("0.2", "0.5", "0.8"):
    out["annulus_mass_1d"].append({"s": float(mp.mpf(s)), "value": mp.nstr(annulus_mass_1d(mp.mpf(s)), 17)})

Path(__file__).with_name("golden_constants.json").write_text(json.dumps(out, indent=1) + "\n")
