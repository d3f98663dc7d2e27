"""Command-line front end.

Verbs::

    hestondg price   [--preset NAME] [--config FILE] [--set key=value ...]
    hestondg table2  [--degrees 1,2] [--no-mc]
    hestondg table5  [--meshes 8x16,16x64,32x128,64x256]
    hestondg surface --tau 0,0.25 [--nv-out 41 --nx-out 81]
    hestondg adapt   [--mesh-out FILE] [--indicators-out FILE]

Every verb writes CSV with a one-line header to ``--out`` (or stdout).
Exit codes: 0 success, 2 invalid configuration, 3 a requested tolerance
was not met.
"""
from __future__ import annotations

import argparse
import csv
import io
import math
import sys
import time
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import config as cfgmod
from .adaptivity import adapt_loop
from .dg_space import DGSolution
from .mesh import uniform_mesh
from .model import Butterfly, EuropeanCall
from .reference import MCConfig, QuadratureError, heston_price, mc_prices
from .solver import Problem, solve
from .timestepping import Scheme, TimeGrid, step_plan

EXIT_CONFIG = 2
EXIT_TOLERANCE = 3

TABLE5_MESHES = ((8, 16), (16, 64), (32, 128), (64, 256))
DIGITAL_REFERENCE = 0.483827


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (float, np.floating)):
        return "nan" if math.isnan(x) else f"{x:.10g}"
    return str(x)


class _Table:
    def __init__(self, header: Sequence[str]):
        self.header = list(header)
        self.rows: List[list] = []

    def add(self, **row):
        self.rows.append([_fmt(row.get(h)) for h in self.header])

    def write(self, out: Optional[str]):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.header)
        w.writerows(self.rows)
        if out:
            with open(out, "w") as fh:
                fh.write(buf.getvalue())
        else:
            sys.stdout.write(buf.getvalue())


def _parse_set(items: Sequence[str]) -> Dict[str, str]:
    out = {}
    for item in items or ():
        if "=" not in item:
            raise cfgmod.ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _overrides(args) -> Dict[str, object]:
    ov: Dict[str, object] = _parse_set(args.set)
    for key, attr in (
        ("K", "K"),
        ("degree", "degree"),
        ("dt", "dt"),
        ("n_v", "n_v"),
        ("n_x", "n_x"),
        ("scheme", "scheme"),
        ("mc.paths", "paths"),
        ("mc.seed", "seed"),
    ):
        val = getattr(args, attr, None)
        if val is not None:
            ov[key] = val
    return ov


def _mc_config(cfg) -> MCConfig:
    return MCConfig(
        paths=int(cfg.get("mc.paths", 1_000_000)),
        steps=cfg.get("mc.steps"),
        seed=int(cfg.get("mc.seed", 12345)),
        antithetic=bool(cfg.get("mc.antithetic", False)),
    )


def _analytic(option, params):
    try:
        t = time.perf_counter()
        value = heston_price(option, params)
        return value, time.perf_counter() - t
    except (ValueError, TypeError, QuadratureError):
        return None, None


def _rel(a, b):
    if a is None or b is None or b == 0:
        return None
    return abs(a - b) / abs(b)


# -- verbs -----------------------------------------------------------------


def cmd_price(args) -> int:
    cfg = cfgmod.resolve(args.preset or ("table1" if args.config is None else None), args.config, _overrides(args))
    run = cfgmod.build(cfg)
    prob = run.problem
    p = prob.params
    t0 = time.perf_counter()
    res = solve(prob, run.mesh(), run.degree, run.dt, run.scheme)
    x0 = prob.log_moneyness(p.S0)
    pde = res.price(p.v0, x0)
    t_pde = time.perf_counter() - t0
    ana, t_ana = _analytic(prob.option, p)
    mc = se = t_mc = None
    if not args.no_mc:
        t0 = time.perf_counter()
        strike = prob.option.K2 if isinstance(prob.option, Butterfly) else p.K
        est, err = mc_prices(prob.option, p, _mc_config(cfg), [strike])
        mc, se, t_mc = float(est[0]), float(err[0]), time.perf_counter() - t0
    table = _Table(
        ["option", "K", "v0", "S0", "pde_price", "analytic_price", "mc_price", "mc_stderr",
         "rel_err_pde", "rel_err_mc", "time_pde_s", "time_analytic_s", "time_mc_s"]
    )
    table.add(
        option=type(prob.option).__name__, K=p.K, v0=p.v0, S0=p.S0, pde_price=pde, analytic_price=ana,
        mc_price=mc, mc_stderr=se, rel_err_pde=_rel(pde, ana), rel_err_mc=_rel(mc, ana),
        time_pde_s=t_pde, time_analytic_s=t_ana, time_mc_s=t_mc,
    )
    table.write(args.out)
    if args.tolerance is not None:
        err = _rel(pde, ana)
        if err is None or err > args.tolerance:
            print(f"relative error {err} exceeds tolerance {args.tolerance}", file=sys.stderr)
            return EXIT_TOLERANCE
    return 0


def cmd_table2(args) -> int:
    cfg = cfgmod.resolve(args.preset or "table1", args.config, _overrides(args))
    strikes = cfg.get("strikes") or [cfg["K"]]
    degrees = [int(d) for d in args.degrees.split(",")]
    base = cfgmod.build(cfg)
    p0 = base.problem.params
    mesh = base.mesh()
    mc = se = None
    t_mc = None
    if not args.no_mc:
        t0 = time.perf_counter()
        mc, se = mc_prices(EuropeanCall(), p0, _mc_config(cfg), strikes)
        t_mc = time.perf_counter() - t0
    header = ["K", "closed_form", "mc_price", "mc_stderr", "rel_err_mc"]
    for k in degrees:
        header += [f"sipg_p{k}", f"rel_err_sipg_p{k}", f"time_sipg_p{k}_s"]
    header += ["time_mc_s"]
    table = _Table(header)
    worst = 0.0
    for i, K in enumerate(strikes):
        p = p0.with_(K=float(K))
        prob = Problem(p, EuropeanCall(), base.problem.domain, base.problem.example, base.problem.d_minus_variance)
        ref = heston_price(EuropeanCall(), p)
        row = dict(K=K, closed_form=ref, time_mc_s=t_mc)
        if mc is not None:
            row.update(mc_price=mc[i], mc_stderr=se[i], rel_err_mc=_rel(mc[i], ref))
        for k in degrees:
            t0 = time.perf_counter()
            res = solve(prob, mesh, k, base.dt, base.scheme)
            val = res.price(p.v0, prob.log_moneyness(p.S0))
            row[f"sipg_p{k}"] = val
            row[f"rel_err_sipg_p{k}"] = _rel(val, ref)
            row[f"time_sipg_p{k}_s"] = time.perf_counter() - t0
            worst = max(worst, _rel(val, ref))
        table.add(**row)
    table.write(args.out)
    if args.tolerance is not None and worst > args.tolerance:
        return EXIT_TOLERANCE
    return 0


def cmd_table5(args) -> int:
    cfg = cfgmod.resolve(args.preset or "digital", args.config, _overrides(args))
    base = cfgmod.build(cfg)
    prob = base.problem
    p = prob.params
    meshes = [tuple(int(s) for s in m.lower().split("x")) for m in args.meshes.split(",")]
    ref = args.reference
    table = _Table(["n_v", "n_x", "cn_value", "cn_rel_err", "rannacher_value", "rannacher_rel_err"])
    worst = 0.0
    for n_v, n_x in meshes:
        mesh = uniform_mesh(prob.domain, n_v, n_x, base.diagonal)
        row = dict(n_v=n_v, n_x=n_x)
        for name, scheme in (("cn", Scheme.CN), ("rannacher", Scheme.RANNACHER)):
            res = solve(prob, mesh, base.degree, base.dt, scheme)
            val = res.price(p.v0, prob.log_moneyness(p.S0))
            row[f"{name}_value"] = val
            row[f"{name}_rel_err"] = _rel(val, ref)
        worst = max(worst, row["rannacher_rel_err"])
        table.add(**row)
    table.write(args.out)
    if args.tolerance is not None and worst > args.tolerance:
        return EXIT_TOLERANCE
    return 0


def _lattice(domain, nv, nx):
    v = np.linspace(domain.v_min, domain.v_max, nv)
    x = np.linspace(domain.x_min, domain.x_max, nx)
    V, X = np.meshgrid(v, x, indexing="ij")
    return np.stack([V.ravel(), X.ravel()], axis=1)


def cmd_surface(args) -> int:
    cfg = cfgmod.resolve(args.preset or "butterfly", args.config, _overrides(args))
    run = cfgmod.build(cfg)
    prob = run.problem
    T = prob.params.T
    taus = [float(t) for t in args.tau.split(",")]
    for t in taus:
        if not -1e-12 <= t <= T + 1e-12:
            raise cfgmod.ConfigError(f"tau={t} lies outside [0, T={T}]")
    grid = TimeGrid(T, run.dt)
    times = np.concatenate([[0.0], np.cumsum([h for _, h in step_plan(grid, run.scheme)])])
    idx = []
    for t in taus:
        j = int(np.argmin(np.abs(times - t)))
        if abs(times[j] - t) > 1e-9:
            raise cfgmod.ConfigError(f"tau={t} is not a time level of the scheme (dt={run.dt})")
        idx.append(j)
    res = solve(prob, run.mesh(), run.degree, run.dt, run.scheme, snapshot_every=1)
    pts = _lattice(prob.domain, args.nv_out, args.nx_out)
    table = _Table(["tau", "v", "x", "U"])
    for t, j in zip(taus, idx):
        sol: DGSolution = res.snapshots[j]
        vals = sol(pts)
        for (v, x), u in zip(pts, vals):
            table.add(tau=t, v=v, x=x, U=u)
    table.write(args.out)
    return 0


def cmd_adapt(args) -> int:
    cfg = cfgmod.resolve(args.preset or "table3", args.config, _overrides(args))
    run = cfgmod.build(cfg, adaptive=True)
    prob = run.problem
    a = run.adapt
    result = adapt_loop(
        prob, run.mesh(), a["eps"], a["max_rounds"], run.degree, run.dt, a["theta_mark"], run.scheme,
        max_elements=a["max_elements"],
    )
    if args.mesh_out:
        result.mesh.write_text(args.mesh_out)
    if args.indicators_out and result.indicators is not None:
        result.indicators.write_csv(args.indicators_out)
    final = solve(prob, result.mesh, run.degree, run.dt, run.scheme)
    min_val = final.solution.min_value()
    table = _Table(["round", "n_elements", "n_dofs", "eta", "n_marked", "converged", "final_min_over_K"])
    for i, h in enumerate(result.history):
        last = i == len(result.history) - 1
        table.add(
            round=i, n_elements=h.n_elements, n_dofs=h.n_dofs, eta=h.eta, n_marked=h.n_marked,
            converged=int(result.converged) if last else None, final_min_over_K=min_val / prob.params.K if last else None,
        )
    table.write(args.out)
    return 0


# -- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hestondg", description="SIPG pricing of options under the Heston model")
    sub = ap.add_subparsers(dest="verb", required=True)

    def common(p, preset_help):
        p.add_argument("--preset", choices=sorted(cfgmod.PRESETS), help=preset_help)
        p.add_argument("--config", help="YAML or JSON file with flat (or nested) config keys")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any config key (repeatable)")
        p.add_argument("--seed", type=int, help="Monte Carlo seed")
        p.add_argument("--paths", type=int, help="Monte Carlo path count")
        p.add_argument("--K", type=float)
        p.add_argument("--degree", type=int, choices=(1, 2))
        p.add_argument("--dt", type=float)
        p.add_argument("--n-v", dest="n_v", type=int)
        p.add_argument("--n-x", dest="n_x", type=int)
        p.add_argument("--scheme", choices=[s.value for s in Scheme])
        p.add_argument("--out", help="output CSV path (default stdout)")
        p.add_argument("--tolerance", type=float, help="fail with exit code 3 if a relative error exceeds this")

    p = sub.add_parser("price", help="price one contract by PDE, closed form and Monte Carlo")
    common(p, "default: table1")
    p.add_argument("--no-mc", action="store_true")
    p.set_defaults(func=cmd_price)

    p = sub.add_parser("table2", help="call prices for the table1 strike list")
    common(p, "default: table1")
    p.add_argument("--degrees", default="1,2")
    p.add_argument("--no-mc", action="store_true")
    p.set_defaults(func=cmd_table2)

    p = sub.add_parser("table5", help="digital call: plain CN against Rannacher smoothing")
    common(p, "default: digital")
    p.add_argument("--meshes", default=",".join(f"{a}x{b}" for a, b in TABLE5_MESHES))
    p.add_argument("--reference", type=float, default=DIGITAL_REFERENCE)
    p.set_defaults(func=cmd_table5)

    p = sub.add_parser("surface", help="sample U(tau, v, x) on a regular lattice")
    common(p, "default: butterfly")
    p.add_argument("--tau", default="0", help="comma-separated time levels")
    p.add_argument("--nv-out", type=int, default=41)
    p.add_argument("--nx-out", type=int, default=81)
    p.set_defaults(func=cmd_surface)

    p = sub.add_parser("adapt", help="SOLVE-ESTIMATE-MARK-REFINE, then solve on the final mesh")
    common(p, "default: table3")
    p.add_argument("--mesh-out")
    p.add_argument("--indicators-out")
    p.set_defaults(func=cmd_adapt)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except cfgmod.ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
