"""Command-line front end: validate | flow | sample | stopped | smooth |
diffuse | pde | accept.

All floats in CSV artifacts carry 17 significant digits and stochastic
commands require an explicit seed, so identical invocations produce
byte-identical files regardless of thread count.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import acceptance, scenarios
from ._backend import resolve_thread_count, set_num_threads
from .diffusion import build_scheme, exit_stats, plateau_escape, reflection_bound, simulate_sde
from .flow import flow, flow_positions
from .markov import analytic_kernel, empirical_kernel, sample_path
from .pde import bracket_and_converge
from .scenario import load_scenario, validate
from .smooth import convergence_report_multi
from .stopped import MarkovPathSampler, midpoints, stopped_measure

CSV_HEADER_VERSION = "discflow-csv-1"


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def write_csv(path: str, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("# " + CSV_HEADER_VERSION + "\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _outpath(args, name: str) -> str:
    out_dir = args.out_dir or "."
    os.makedirs(out_dir, exist_ok=True)
    return os.path.join(out_dir, name)


def _load(args):
    if not args.scenario:
        raise SystemExit("a --scenario file is required for this command")
    return load_scenario(args.scenario)


def cmd_validate(args) -> int:
    spec = _load(args)
    report = validate(spec)
    for v in report:
        print(f"[{v.code}] at {v.location:g}: {v.message}")
    print("valid" if report.ok else f"{len(report.violations)} violations")
    return 0 if report.ok else 1


def cmd_flow(args) -> int:
    spec = _load(args)
    res = flow(spec, args.x0, args.t, phi_override=args.phi_override)
    print(json.dumps({"position": res.position, "clamped": res.clamped}))
    if args.out:
        ts = np.linspace(0.0, args.t, args.t_grid)
        xs = flow_positions(spec, args.x0, ts, phi_override=args.phi_override)
        write_csv(args.out, ("t", "x"), zip(ts, xs))
    return 0


def cmd_sample(args) -> int:
    spec = _load(args)
    kernel = empirical_kernel(spec, args.x0, args.t, args.n, args.seed)
    grid = np.linspace(kernel.lo - 0.5, kernel.hi + 0.5, args.grid)
    write_csv(args.out or _outpath(args, "cdf.csv"), ("x", "cdf"),
              zip(grid, kernel.evaluate(grid)))
    if args.dump_paths:
        with open(args.dump_paths, "w", encoding="utf-8") as fh:
            for i in range(min(args.n, args.max_dumped)):
                path = sample_path(spec, args.x0, args.t, args.seed, i)
                fh.write(json.dumps({
                    "index": i,
                    "branch": path.branch_choice,
                    "segments": [
                        {"t0": s.t0, "t1": min(s.t1, args.t), "x0": s.x0,
                         "x1": s.x1, "kind": s.kind}
                        for s in path.segments
                    ],
                }) + "\n")
    return 0


def cmd_stopped(args) -> int:
    spec = _load(args)
    ys = midpoints(spec)
    sm = stopped_measure(MarkovPathSampler(spec), args.xbar, args.t, args.n,
                         args.seed, ys)
    ss = np.linspace(0.0, args.t, args.grid)
    for level in sorted(sm.hit_times):
        rows = zip(ss, sm.vertical_cdf(level, ss))
        write_csv(_outpath(args, f"vertical_{level:g}.csv"), ("s", "F"), rows)
    zs = np.linspace(min(ys) - 1.0, max(ys) + 1.0, args.grid)
    write_csv(_outpath(args, "terminal.csv"), ("y", "G"),
              zip(zs, sm.distribution_G(zs)))
    print(json.dumps({"total_mass": sm.total_mass(),
                      "vertical_masses": {f"{k:g}": sm.vertical_mass(k)
                                          for k in sm.hit_times}}))
    return 0


def cmd_smooth(args) -> int:
    spec = _load(args)
    eps_list = [float(e) for e in args.eps.split(",")]
    x0s = [float(v) for v in args.x0.split(",")]
    rows = convergence_report_multi(spec, x0s, eps_list, args.box)
    write_csv(args.out or _outpath(args, "smooth_report.csv"),
              ("eps", "x0", "sup_error", "bound", "case", "passed"),
              [(r.eps, r.x0, r.sup_error, r.bound, r.case, int(r.passed))
               for r in rows])
    ok = all(r.passed for r in rows)
    print(f"{sum(r.passed for r in rows)}/{len(rows)} cells pass")
    return 0 if ok else 1


def cmd_diffuse(args) -> int:
    params = {}
    for item in (args.params.split(",") if args.params else []):
        k, v = item.split("=")
        params[k.strip()] = float(v)
    sigmas = [float(s) for s in args.sigma_seq.split(",")]
    rows = []
    ok = True
    for i, sigma in enumerate(sigmas):
        if args.case == "stop":
            res = plateau_escape(sigma, args.t, args.n, args.seed + i, dt=1e-3)
            bound = reflection_bound(sigma, args.t)
            rows.append((sigma, float(res.exited.mean()), bound, "", ""))
            ok = ok and res.exited.mean() <= bound * 1.5 + 5.0 / args.n
        elif args.case == "branch":
            scheme = build_scheme("branch", params, sigma)
            xi = scheme.params["xi"]
            root = math.sqrt(sigma)
            res = simulate_sde(scheme, 0.0, args.t, (xi - root, xi + root),
                               min(scheme.max_dt(), 1e-4), args.seed + i, args.n)
            theta = params.get("theta", 0.5)
            se = math.sqrt(theta * (1 - theta) / args.n)
            rows.append((sigma, res.frac_high, theta, 3 * se, xi))
            ok = ok and abs(res.frac_high - theta) <= 3 * se
        else:
            a, b = params["a"], params["b"]
            stats = exit_stats(a, b, sigma)
            noise = math.sqrt(sigma)
            scheme = build_scheme("pass", {"a": a / noise, "b": b / noise},
                                  noise, delta=0.0)
            res = simulate_sde(scheme, 0.0, args.t, (-1.0, 1.0),
                               min(scheme.max_dt(), 1.5e-4), args.seed + i, args.n)
            rows.append((sigma, float(res.final_x.mean()),
                         float(stats.mean_exit_point(0.0)),
                         float(res.exit_time.mean()),
                         float(stats.mean_exit_time(0.0))))
    write_csv(args.out or _outpath(args, "diffuse.csv"),
              ("sigma", "empirical", "reference", "extra1", "extra2"), rows)
    return 0 if ok else 1


def cmd_pde(args) -> int:
    s_seq = [float(s) for s in args.s_seq.split(",")]
    window = tuple(float(v) for v in args.window.split(","))
    rows = bracket_and_converge(args.lam, args.a, args.b, s_seq, args.t, window)
    write_csv(args.out or _outpath(args, "pde_report.csv"),
              ("s", "sigma_n", "eps_n", "low_defect", "high_defect",
               "tol_grid", "l1", "bracket_ok"),
              [(r.s, r.sigma_n, r.eps_n, r.bracket_low_defect,
                r.bracket_high_defect, r.tol_grid, r.l1_distance,
                int(r.bracket_ok)) for r in rows])
    l1s = [r.l1_distance for r in rows]
    ok = all(r.bracket_ok for r in rows) and all(b < a for a, b in zip(l1s, l1s[1:]))
    print("L1 sequence:", " ".join(f"{v:.5f}" for v in l1s))
    return 0 if ok else 1


def cmd_accept(args) -> int:
    only = set(int(k) for k in args.only.split(",")) if args.only else None
    results = acceptance.run_suite(only=only, scale=args.scale, seed=args.seed)
    out_dir = args.out_dir or "accept_artifacts"
    os.makedirs(out_dir, exist_ok=True)
    for res in results:
        if res.rows:
            write_csv(os.path.join(out_dir, f"criterion_{res.number:02d}.csv"),
                      res.header, res.rows)
    summary = acceptance.summary_dict(results)
    with open(os.path.join(out_dir, "accept_summary.json"), "w",
              encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    print(f"{summary['passed']}/{summary['total']} criteria pass; "
          f"artifacts in {out_dir}")
    return 0 if summary["passed"] == summary["total"] else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="discflow",
                                description=__doc__.splitlines()[0])
    p.add_argument("--scenario", help="scenario JSON file")
    p.add_argument("--seed", type=int, default=None,
                   help="stream seed (required by stochastic commands)")
    p.add_argument("--out-dir", help="directory for artifacts")
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (DISCFLOW_THREADS overrides the default)")
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("validate", help="check scenario invariants")

    f = sub.add_parser("flow", help="deterministic flow value")
    f.add_argument("--x0", type=float, required=True)
    f.add_argument("--t", type=float, required=True)
    f.add_argument("--phi-override", type=int, choices=(-1, 1), default=None)
    f.add_argument("--out", help="trajectory CSV (t, x)")
    f.add_argument("--t-grid", type=int, default=201)

    s = sub.add_parser("sample", help="empirical kernel CDF of sampled paths")
    s.add_argument("--x0", type=float, required=True)
    s.add_argument("--t", type=float, required=True)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--out")
    s.add_argument("--grid", type=int, default=2001)
    s.add_argument("--dump-paths", help="segment lists as JSON lines")
    s.add_argument("--max-dumped", type=int, default=100)

    st = sub.add_parser("stopped", help="first-stop measure on the comb set")
    st.add_argument("--xbar", type=float, required=True)
    st.add_argument("--t", type=float, required=True)
    st.add_argument("--n", type=int, required=True)
    st.add_argument("--grid", type=int, default=1001)

    sm = sub.add_parser("smooth", help="smooth-flow convergence report")
    sm.add_argument("--eps", required=True, help="comma list of resolutions")
    sm.add_argument("--x0", required=True, help="comma list of starts")
    sm.add_argument("--box", type=float, default=8.0)
    sm.add_argument("--out")

    d = sub.add_parser("diffuse", help="vanishing-noise Monte Carlo checks")
    d.add_argument("--case", required=True,
                   choices=("stop", "branch", "wait", "pass", "trap"))
    d.add_argument("--params", default="", help="k=v comma list (a, b, theta, lambda)")
    d.add_argument("--sigma-seq", required=True)
    d.add_argument("--n", type=int, required=True)
    d.add_argument("--t", type=float, default=1.0)
    d.add_argument("--out")

    q = sub.add_parser("pde", help="pocket bracket-and-converge report")
    q.add_argument("--case", default="wait", choices=("wait",))
    q.add_argument("--lambda", dest="lam", type=float, default=1.0)
    q.add_argument("--a", type=float, default=1.0)
    q.add_argument("--b", type=float, default=1.0)
    q.add_argument("--s-seq", default="2,3,4")
    q.add_argument("--t", type=float, default=1.0)
    q.add_argument("--window", default="-0.5,2.0")
    q.add_argument("--out")

    a = sub.add_parser("accept", help="run the acceptance suite")
    a.add_argument("--only", help="comma list of criterion numbers")
    a.add_argument("--scale", type=float, default=1.0,
                   help="Monte Carlo size multiplier (1 = stated scale)")
    return p


STOCHASTIC = {"sample", "stopped", "diffuse"}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    if args.command in STOCHASTIC and args.seed is None:
        print("error: stochastic commands require --seed", file=sys.stderr)
        return 2
    if args.seed is None:
        args.seed = 0
    set_num_threads(resolve_thread_count(args.threads))
    handlers = {
        "validate": cmd_validate,
        "flow": cmd_flow,
        "sample": cmd_sample,
        "stopped": cmd_stopped,
        "smooth": cmd_smooth,
        "diffuse": cmd_diffuse,
        "pde": cmd_pde,
        "accept": cmd_accept,
    }
    try:
        return handlers[args.command](args)
    except (ValueError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
