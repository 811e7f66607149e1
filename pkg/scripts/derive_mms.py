"""Symbolic derivation and cross-check of the manufactured-solution sources.

The closed-form fields and sources in ``porous_opt.mms`` were derived by
hand; this script rebuilds them with sympy from the strong forms of the
state and costate systems (unit permeability and porosity) and compares
both paths at random space-time points.  Run it after touching mms.py.
"""

import pathlib
import sys

import numpy as np
import sympy as sp

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from porous_opt import mms  # noqa: E402
from porous_opt.model import default_model  # noqa: E402

X, Y, T_SYM = sp.symbols("x y t", real=True)
DELTA = sp.Rational(1, 20)  # delta_floor = 0.05
PECLET = 1


def sym_model(c):
    lam_o = DELTA + c**2
    lam_w = DELTA + (1 - c) ** 2
    lam = lam_o + lam_w
    return {
        "alpha": 1 / lam,
        "b": sp.diff(lam_o, c) if c.free_symbols else 2 * c,
        "D": PECLET * lam * lam_o * lam_w,
        "f": -lam_o,
    }


def grad(expr):
    return sp.Matrix([sp.diff(expr, X), sp.diff(expr, Y)])


def div(vec):
    return sp.diff(vec[0], X) + sp.diff(vec[1], Y)


def build_state(exact_kind="default"):
    cc = sp.cos(sp.pi * X) * sp.cos(sp.pi * Y)
    curl = sp.Matrix([sp.sin(sp.pi * X) * sp.cos(sp.pi * Y),
                      -sp.cos(sp.pi * X) * sp.sin(sp.pi * Y)])
    if exact_kind == "default":
        c = sp.Rational(1, 2) + sp.Rational(1, 4) * cc * sp.exp(-T_SYM)
        u = (1 + T_SYM / 2) * curl
    else:  # mild
        c = sp.Rational(1, 2) + sp.Rational(1, 10) * cc * (1 - sp.Rational(2, 5) * T_SYM)
        u = sp.Rational(1, 5) * (1 + T_SYM / 2) * curl
    p = sp.Rational(1, 2) * (1 + T_SYM) * cc
    return c, u, p


def state_sources_sym(c, u, p):
    cs = sp.Symbol("c")
    m = sym_model(cs)
    alpha = m["alpha"].subs(cs, c)
    b = (2 * cs).subs(cs, c)
    D = m["D"].subs(cs, c)
    s_u = alpha * u + grad(p)
    s_c = sp.diff(c, T_SYM) - div(D * grad(c)) + b * (u.T * grad(c))[0]
    return s_u, s_c


def costate_sources_sym(c, u, cstar, ustar, pstar):
    cs = sp.Symbol("c")
    m = sym_model(cs)
    alpha = m["alpha"].subs(cs, c)
    alpha_prime = sp.diff(m["alpha"], cs).subs(cs, c)
    b = (2 * cs).subs(cs, c)
    D = m["D"].subs(cs, c)
    Dp = sp.diff(m["D"], cs).subs(cs, c)
    s_u_star = alpha * ustar + grad(pstar) + cstar * b * grad(c)
    drift = ((b * u - Dp * grad(c)).T * grad(cstar))[0]
    s_c_star = (
        -sp.diff(cstar, T_SYM)
        - div(D * grad(cstar))
        - drift
        + alpha_prime * (ustar.T * u)[0]
    )
    return s_u_star, s_c_star


def compare(label, sym_expr, num_fun, pts, ts, vector=False):
    fn = sp.lambdify((X, Y, T_SYM), sym_expr, "numpy")
    worst = 0.0
    for t in ts:
        sym_v = np.asarray(fn(pts[:, 0], pts[:, 1], t), dtype=float)
        num_v = np.asarray(num_fun(pts, t), dtype=float)
        if vector:
            sym_v = sym_v.reshape(2, -1).T
        worst = max(worst, float(np.max(np.abs(sym_v - num_v))))
    status = "ok" if worst < 1e-12 else "MISMATCH"
    print(f"{label:28s} max |sym - num| = {worst:.3e}  {status}")
    return worst < 1e-12


def main():
    rng = np.random.default_rng(7)
    pts = rng.uniform(0.05, 0.95, size=(40, 2))
    ts = [0.0, 0.3, 0.7, 1.0]
    model = default_model()
    ok = True

    c, u, p = build_state("default")
    s_u, s_c = state_sources_sym(c, u, p)
    exact = mms.StateExact.default()
    src = mms.state_sources(exact, model)
    ok &= compare("state c", c, exact.c, pts, ts)
    ok &= compare("state u", u, exact.u, pts, ts, vector=True)
    ok &= compare("state p", p, exact.p, pts, ts)
    ok &= compare("state source s_u", s_u, src.s_u, pts, ts, vector=True)
    ok &= compare("state source s_c", s_c, src.s_c, pts, ts)

    T = 1.0
    cstar = sp.Rational(3, 10) * (T - T_SYM) * (sp.Rational(1, 2) + sp.Rational(1, 2)
                                                * sp.cos(sp.pi * X) * sp.cos(sp.pi * Y))
    ustar = sp.Rational(2, 5) * (1 + (T - T_SYM)) * sp.Matrix(
        [sp.sin(sp.pi * X) * sp.cos(sp.pi * Y), -sp.cos(sp.pi * X) * sp.sin(sp.pi * Y)]
    )
    pstar = sp.Rational(35, 100) * (1 + (T - T_SYM)) * sp.cos(sp.pi * X) * sp.cos(sp.pi * Y)
    s_us, s_cs = costate_sources_sym(c, u, cstar, ustar, pstar)
    costate = mms.CostateExact.default(T)
    csrc = mms.costate_sources(exact, costate, model)
    ok &= compare("costate c*", cstar, costate.c, pts, ts)
    ok &= compare("costate source s_u*", s_us, csrc.s_u_star, pts, ts, vector=True)
    ok &= compare("costate source s_c*", s_cs, csrc.s_c_star, pts, ts)

    if not ok:
        raise SystemExit("symbolic cross-check FAILED")
    print("all symbolic cross-checks passed")


if __name__ == "__main__":
    main()
