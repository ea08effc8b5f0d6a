"""Command-line front end: plant loading, run orchestration, deterministic
seeding, and export of plot-ready CSV/JSON.

Exit codes: 0 success, 1 usage or validation error, 2 infeasible problem,
3 rank or conditioning failure.  All outputs are deterministic for a fixed
seed and configuration; measured wall-clock times are only written when
--timing is given (the bench table always carries its timing columns).
"""

import argparse
import csv
import json
import os
import sys
import time

import numpy as np

from . import (matops, npg_baseline, pi_model_based, pi_sampling, plant,
               riccati, robustness_lab)
from .errors import (BadParams, Blowup, DivergenceDetected, Infeasible,
                     InfeasibleStart, InnerDivergence, NoConvergence,
                     RankDeficient, SearchFailure, ToolkitError)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INFEASIBLE = 2
EXIT_RANK = 3

DEFAULTS = {
    "gamma": 5.0,       # benchmark attenuation level
    "dt": 1e-4,         # integration step
    "outer_max": 20,    # outer iteration budget
}


def _load_plant(args):
    if args.plant_file:
        pl = plant.load_plant(args.plant_file)
    else:
        maker = plant.BUILTIN_PLANTS.get(args.plant)
        if maker is None:
            raise BadParams(f"unknown builtin plant {args.plant!r};"
                            f" choices: {sorted(plant.BUILTIN_PLANTS)}")
        pl = maker()
    if args.noise is not None:
        if args.noise < 0:
            raise BadParams("--noise must be >= 0")
        pl = pl.with_noise(args.noise)
    report = plant.validate_assumptions(pl)
    if not report.ok:
        raise BadParams("plant fails the standing assumptions: "
                        + "; ".join(report.messages))
    return pl


def _design_config(args):
    if args.gamma <= 0:
        raise BadParams("--gamma must be > 0")
    if args.tol <= 0:
        raise BadParams("--tol must be > 0")
    return plant.DesignConfig(gamma=args.gamma, outer_max=args.outer_max,
                              inner_max=args.inner_max, tol=args.tol)


def _outpath(args, name):
    os.makedirs(args.outdir, exist_ok=True)
    return os.path.join(args.outdir, name)


def _provenance(args, extra=None):
    prov = {
        "plant": args.plant_file or args.plant,
        "gamma": args.gamma,
        "tol": args.tol,
        "outer_max": args.outer_max,
        "inner_max": args.inner_max,
    }
    for key in ("dt", "horizon", "ds", "seed", "noise"):
        if hasattr(args, key) and getattr(args, key) is not None:
            prov[key] = getattr(args, key)
    if extra:
        prov.update(extra)
    return prov


def cmd_solve(args):
    pl = _load_plant(args)
    config = _design_config(args)
    trace = pi_model_based.run_double_loop(pl, config)
    certificate = None
    try:
        p_star = riccati.solve_gare_oracle(pl, config.gamma)
        certificate = pi_model_based.certify(trace, p_star, pl,
                                             settle_tol=config.tol)
    except (Infeasible, NoConvergence):
        pass
    pi_model_based.write_trace_csv(trace, _outpath(args, "solve_trace.csv"),
                                   include_timing=args.timing)
    summary = pi_model_based.trace_summary(
        trace, certificate, extra={"provenance": _provenance(args)})
    if args.timing:
        summary["wall_ms_total"] = trace.wall_ms_total
    pi_model_based.write_summary_json(summary, _outpath(args, "solve_summary.json"))
    print(f"solve: converged={trace.converged} iters={trace.iterations}"
          f" trace_P={np.trace(trace.final_P):.10g}")
    return EXIT_OK


def cmd_learn(args):
    pl = _load_plant(args)
    config = _design_config(args)
    gains0 = riccati.initial_gain_search(pl, config.gamma)
    expl = None
    if args.exploration is not None:
        expl = {"r_u": args.exploration, "r_w": args.exploration}
    log = pi_sampling.simulate(pl, gains0, exploration=expl, dt=args.dt,
                               horizon=args.horizon, ds=args.ds,
                               seed=args.seed)
    if args.save_log:
        pi_sampling.save_log(log, _outpath(args, "trajectory_log.npz"))
    cost = pi_sampling.learner_view(pl)
    sys0 = pi_sampling.assemble(
        log, plant.GainPair(log.K0, log.L0), cost.D,
        matops.symmetrize(cost.Q + log.K0.T @ cost.R @ log.K0), config.gamma)
    report = pi_sampling.rank_check(sys0)
    if not report.decision_full_rank:
        print(f"learn: rank failure; rows={report.rows},"
              f" required columns={report.required_columns}"
              f" (printed requirement {report.printed_rank_requirement})",
              file=sys.stderr)
        return EXIT_RANK
    trace = pi_sampling.run_model_free(cost, log, config)
    pi_sampling.annotate_trace(trace, pl, config.gamma)
    pi_model_based.write_trace_csv(trace, _outpath(args, "learn_trace.csv"),
                                   include_timing=args.timing)
    extra = {
        "provenance": _provenance(args, {"exploration": args.exploration}),
        "rank": {
            "rows": report.rows,
            "required_columns": report.required_columns,
            "printed_rank_requirement": report.printed_rank_requirement,
            "decision_condition": report.decision_condition,
        },
    }
    summary = pi_model_based.trace_summary(trace, extra=extra)
    if args.timing:
        summary["wall_ms_total"] = trace.wall_ms_total
    pi_model_based.write_summary_json(summary, _outpath(args, "learn_summary.json"))
    print(f"learn: converged={trace.converged} iters={trace.iterations}"
          f" |K|={np.linalg.norm(trace.final_K):.10g}")
    return EXIT_OK


def cmd_npg(args):
    pl = _load_plant(args)
    config = _design_config(args)
    gains0 = riccati.initial_gain_search(pl, config.gamma)
    npg_config = npg_baseline.NPGConfig(
        step_size=args.step_size, max_iter=args.max_iter, tol=args.tol,
        gamma=config.gamma)
    trace = npg_baseline.run_npg(pl, npg_config, gains0.K)
    pi_model_based.write_trace_csv(trace, _outpath(args, "npg_trace.csv"),
                                   include_timing=args.timing)
    summary = pi_model_based.trace_summary(
        trace, extra={"provenance": _provenance(args)})
    if args.timing:
        summary["wall_ms_total"] = trace.wall_ms_total
    pi_model_based.write_summary_json(summary, _outpath(args, "npg_summary.json"))
    print(f"npg: converged={trace.converged} iters={trace.iterations}")
    return EXIT_OK


BENCH_HEADER = ["plant", "method", "wall_ms", "iterations", "converged",
                "gain_err_vs_oracle", "status"]


def cmd_bench(args):
    names = args.plants.split(",") if args.plants else []
    rows = []
    for name in names:
        name = name.strip()
        maker = plant.BUILTIN_PLANTS.get(name)
        if maker is None:
            print(f"bench: skipping unknown plant {name!r}", file=sys.stderr)
            continue
        pl = maker()
        config = plant.DesignConfig(gamma=args.gamma, outer_max=args.outer_max,
                                    inner_max=args.inner_max, tol=args.tol)
        try:
            p_star = riccati.solve_gare_oracle(pl, args.gamma)
            k_star = np.linalg.solve(pl.R, pl.B.T @ p_star)
            gains0 = riccati.initial_gain_search(pl, args.gamma)
        except ToolkitError as exc:
            rows.append([name, "setup", np.nan, 0, False, np.nan,
                         type(exc).__name__])
            continue

        def record(method, runner):
            t0 = time.perf_counter()
            try:
                trace = runner()
                wall = (time.perf_counter() - t0) * 1e3
                err = float(np.linalg.norm(trace.final_K - k_star, "fro")
                            / np.linalg.norm(k_star, "fro"))
                rows.append([name, method, wall, trace.iterations,
                             trace.converged, err, "ok"])
            except ToolkitError as exc:
                wall = (time.perf_counter() - t0) * 1e3
                rows.append([name, method, wall, 0, False, np.nan,
                             type(exc).__name__])

        record("model-based", lambda: pi_model_based.run_double_loop(
            pl, config, init_gains=gains0, diagnostics=False))
        record("model-free", lambda: pi_sampling.run_model_free(
            pi_sampling.learner_view(pl),
            pi_sampling.simulate(pl, gains0, dt=args.dt, horizon=args.horizon,
                                 ds=args.ds, seed=args.seed),
            config))
        record("npg", lambda: npg_baseline.run_npg(
            pl, npg_baseline.NPGConfig(tol=args.tol, gamma=args.gamma,
                                       max_iter=args.max_iter), gains0.K))

    path = _outpath(args, "bench.csv")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(BENCH_HEADER)
        for row in rows:
            writer.writerow([pi_model_based._fmt(x) if isinstance(x, float)
                             else str(x) for x in row])
    print(f"bench: {len(rows)} rows -> {path}")
    return EXIT_OK


def cmd_hinf(args):
    pl = _load_plant(args)
    if args.gain_file:
        with open(args.gain_file, "r", encoding="utf-8") as fh:
            K = np.array(json.load(fh)["K"], dtype=float)
    elif args.gain == "zero":
        K = np.zeros((pl.m, pl.n))
    elif args.gain == "lqr":
        P = riccati.solve_lqr(pl.A, pl.B, pl.Q, pl.R)
        K = np.linalg.solve(pl.R, pl.B.T @ P)
    else:  # "optimal"
        P = riccati.solve_gare_oracle(pl, args.gamma)
        K = np.linalg.solve(pl.R, pl.B.T @ P)
    chk = riccati.in_constraint_set(pl, K, args.gamma)
    doc = {
        "gamma": args.gamma,
        "K": K.tolist(),
        "hurwitz": bool(chk.hurwitz),
        "hinf": chk.hinf,
        "in_constraint_set": bool(chk),
        "brl_feasible": bool(chk.brl_feasible),
        "routes_agree": bool(chk.routes_agree),
    }
    pi_model_based.write_summary_json(doc, _outpath(args, "hinf_summary.json"))
    print(f"hinf: {chk.hinf:.10g} (gamma={args.gamma},"
          f" in_set={bool(chk)})")
    return EXIT_OK


def cmd_iss(args):
    pl = _load_plant(args)
    config = _design_config(args)
    magnitudes = [float(x) for x in args.magnitudes.split(",")]
    if any(m < 0 for m in magnitudes):
        raise BadParams("--magnitudes must be >= 0")
    report = robustness_lab.iss_outer_sweep(
        pl, config, magnitudes=magnitudes, seeds=range(args.seeds))
    doc = {
        "magnitudes": report.magnitudes,
        "plateaus": report.plateaus,
        "plateau_spread": [list(s) for s in report.plateau_spread],
        "monotone": report.monotone,
        "loglog_slope": report.loglog_slope,
        "feasibility_lost": [list(x) for x in report.feasibility_lost],
        "provenance": _provenance(args, {"magnitudes": magnitudes,
                                         "seeds": args.seeds}),
    }
    pi_model_based.write_summary_json(doc, _outpath(args, "iss_report.json"))
    # per-seed plateau traces
    path = _outpath(args, "iss_traces.csv")
    g0 = riccati.initial_gain_search(pl, config.gamma)
    p_star = riccati.solve_gare_oracle(pl, config.gamma)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["magnitude", "seed", "p", "error"])
        for mag in magnitudes:
            for seed in range(args.seeds):
                spec = robustness_lab.PerturbationSpec("outer", mag, seed)
                _, errors, _ = robustness_lab.run_inexact_outer(
                    pl, config, spec, init_gains=g0, p_star=p_star)
                for p, err in enumerate(errors):
                    writer.writerow([pi_model_based._fmt(float(mag)), seed, p,
                                     pi_model_based._fmt(err)])
    print(f"iss: plateaus={['%.3e' % x for x in report.plateaus]}"
          f" slope={report.loglog_slope:.3f} monotone={report.monotone}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="robustpi",
        description="Mixed H2/H-infinity state-feedback synthesis via"
                    " double-loop policy iteration")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, sampling=False):
        p.add_argument("--plant", default="golden-scalar",
                       help="builtin plant name")
        p.add_argument("--plant-file", default=None,
                       help="JSON plant file (overrides --plant)")
        p.add_argument("--gamma", type=float, default=DEFAULTS["gamma"])
        p.add_argument("--tol", type=float, default=1e-8)
        p.add_argument("--outer-max", type=int, default=DEFAULTS["outer_max"])
        p.add_argument("--inner-max", type=int, default=50)
        p.add_argument("--noise", type=float, default=None,
                       help="override the plant noise intensity")
        p.add_argument("--outdir",
                       default=os.environ.get("ROBUSTPI_OUTDIR", "."))
        p.add_argument("--timing", action="store_true",
                       help="include measured wall-clock fields in outputs")
        if sampling:
            p.add_argument("--dt", type=float, default=DEFAULTS["dt"])
            p.add_argument("--horizon", type=float, default=2.0)
            p.add_argument("--ds", type=float, default=0.02)
            p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("solve", help="model-based double-loop synthesis")
    common(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("learn", help="sampling-based synthesis from one rollout")
    common(p, sampling=True)
    p.add_argument("--exploration", type=float, default=None,
                   help="exploration norm for both channels")
    p.add_argument("--save-log", action="store_true")
    p.set_defaults(func=cmd_learn)

    p = sub.add_parser("npg", help="natural-policy-gradient baseline")
    common(p)
    p.add_argument("--step-size", type=float, default=None)
    p.add_argument("--max-iter", type=int, default=5000)
    p.set_defaults(func=cmd_npg)

    p = sub.add_parser("bench", help="timing table over builtin plants")
    common(p, sampling=True)
    p.add_argument("--plants", default="double-pendulum,triple-pendulum")
    p.add_argument("--max-iter", type=int, default=20000)
    p.set_defaults(func=cmd_bench, horizon=4.0, ds=0.05)

    p = sub.add_parser("hinf", help="closed-loop H-infinity norm of a gain")
    common(p)
    p.add_argument("--gain", choices=["optimal", "lqr", "zero"],
                   default="optimal")
    p.add_argument("--gain-file", default=None,
                   help="JSON file with key 'K'")
    p.set_defaults(func=cmd_hinf)

    p = sub.add_parser("iss", help="perturbation magnitude sweep")
    common(p)
    p.add_argument("--magnitudes", default="0.015,0.05,0.15")
    p.add_argument("--seeds", type=int, default=20)
    p.set_defaults(func=cmd_iss)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0,) else 0
    try:
        return args.func(args)
    except (BadParams, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (Infeasible, InfeasibleStart, SearchFailure, NoConvergence,
            InnerDivergence, DivergenceDetected, Blowup) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except RankDeficient as exc:
        print(f"rank failure: {exc}", file=sys.stderr)
        return EXIT_RANK


if __name__ == "__main__":
    sys.exit(main())
