"""Command-line experiment runner.

Subcommands:

* ``simulate``  one run -> trace CSV + arrival-log CSV
* ``estimate``  trace CSV + config -> per-instant estimates CSV, pooled
  arrival-rate estimate on stdout
* ``posterior`` single observation -> heat-map CSV/SVG + expectations
* ``control``   turn ratios -> balancing quantities, optional trajectory
* ``sweep``     scenario file or bundled suite -> full metric report
* ``selftest``  Monte Carlo estimator/posterior checks, PASS/FAIL lines

Exit codes: 0 success, 2 usage, otherwise the category-specific codes from
``probequeue.errors`` (the category is printed as JSON on stderr).
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from .. import bayes, control, model
from ..errors import ConfigError, ProbeQueueError, exit_code_for
from ..estimators import estimate_lambda_windows, estimate_p_two_lane
from ..sim import LinkSimulation
from . import report as report_mod
from .metrics import run_scenarios
from .scenarios import Scenario, bundled_scenarios, example_yaml, load_scenarios


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_single_scenario(args) -> Scenario:
    scenarios = load_scenarios(args.config)
    if len(scenarios) != 1:
        raise ConfigError(
            f"{args.config} holds {len(scenarios)} scenarios; this command needs one")
    return scenarios[0]


def cmd_simulate(args) -> int:
    scenario = _load_single_scenario(args)
    p = args.p if args.p is not None else scenario.demand.p
    seed = args.seed if args.seed is not None else scenario.seeds[0]
    cfg = scenario.sim_config(p, seed)
    if args.policy is not None:
        from dataclasses import replace

        from ..sim import AssignmentPolicy
        cfg = replace(cfg, assignment_policy=AssignmentPolicy(args.policy))
    trace = LinkSimulation(cfg).run()
    out = _out_dir(args)
    trace.write_trace_csv(out / "trace.csv")
    trace.write_arrivals_csv(out / "arrivals.csv")
    print(f"wrote {out / 'trace.csv'} ({len(trace.rows)} rows)"
          + (" [saturated]" if trace.saturated else ""))
    return 0


def _read_trace_rows(path) -> list[dict]:
    import csv

    with open(path) as fh:
        return list(csv.DictReader(fh))


def cmd_estimate(args) -> int:
    scenario = _load_single_scenario(args)
    p = args.p if args.p is not None else scenario.demand.p
    raw = _read_trace_rows(args.trace)
    out = _out_dir(args)
    demand = scenario.demand
    lines = ["t,r_N,r_M,c_p,l_p,p_hat_raw,p_hat,usable,"
             "p2_n,p2_m,p1_n,p1_m,lp_n,lp_m"]
    for row in raw:
        t = float(row["t"])
        r_n, r_m = float(row["r_N"]), float(row["r_M"])
        c_p = int(row["c_p"])
        l_p = int(row["l_p"]) if row["l_p"] else None
        if r_n <= 0 or r_m <= 0:
            continue
        mu_n, mu_m = model.mu_rates(demand, r_n, r_m)
        kap = model.kappa(demand, r_n, r_m)
        pen = estimate_p_two_lane(c_p, l_p, kap)
        n_max = bayes.default_n_max(mu_n, mu_m, l_p or 0)
        if c_p >= 1:
            post = bayes.posterior_joint(bayes.PosteriorInput(
                mu_n=mu_n, mu_m=mu_m, p=p, l_p=l_p, c_p=c_p, n_max=n_max))
        else:
            post = bayes.posterior_no_probes(mu_n, mu_m, p, n_max)
        p2_n, p2_m = bayes.expected_queue_lengths(post)
        if l_p is not None:
            hi, lo = bayes.lp_point_estimate(l_p, kap)
            lp_n, lp_m = (hi, lo) if mu_n >= mu_m else (lo, hi)
            lp_txt = f"{lp_n:.6f},{lp_m:.6f}"
        else:
            lp_txt = ","
        pen_txt = (f"{pen.raw:.6f},{pen.p_hat:.6f},1" if pen.usable else ",,0")
        lines.append(f"{t:.6f},{r_n:.6f},{r_m:.6f},{c_p},"
                     f"{l_p if l_p is not None else ''},{pen_txt},"
                     f"{p2_n:.6f},{p2_m:.6f},{mu_n:.6f},{mu_m:.6f},{lp_txt}")
    (out / "estimates.csv").write_text("\n".join(lines) + "\n")

    # pooled arrival-rate estimate over the windows where both lanes are red
    windows = []
    for a, b in scenario.timing.common_red_windows(
            max((float(r["t"]) for r in raw), default=0.0)):
        inside = [r for r in raw if a - 1e-9 <= float(r["t"]) <= b + 1e-9]
        if len(inside) >= 2:
            t0, t1 = float(inside[0]["t"]), float(inside[-1]["t"])
            if t1 > t0:
                windows.append((int(inside[0]["x_p"]), int(inside[-1]["x_p"]),
                                t0, t1))
    summary = {"rows": len(lines) - 1, "p": p}
    if windows and p > 0:
        lam, per = estimate_lambda_windows(windows, p)
        summary["lambda_hat"] = lam
        summary["lambda_windows"] = len(per)
    print(json.dumps(summary))
    return 0


def cmd_posterior(args) -> int:
    n_max = args.n_max or bayes.default_n_max(args.mu_n, args.mu_m, args.lp)
    prior = bayes.prior_joint(args.mu_n, args.mu_m, n_max)
    post = bayes.posterior_joint(bayes.PosteriorInput(
        mu_n=args.mu_n, mu_m=args.mu_m, p=args.p, l_p=args.lp, c_p=args.cp,
        n_max=n_max))
    out = _out_dir(args)
    if args.format == "csv":
        prior.write_csv(out / "posterior_prior.csv")
        post.write_csv(out / "posterior_conditional.csv")
    else:
        report_mod.fig_posterior_heatmaps(prior, post, out)
    e_n, e_m = post.expectation()
    print(json.dumps({"E_N": e_n, "E_M": e_m,
                      "prior_E_N": args.mu_n, "prior_E_M": args.mu_m,
                      "n_max": n_max}))
    return 0


def cmd_control(args) -> int:
    l_n, l_m, l_nm = args.ln, args.lm, args.lnm
    total = l_n + l_m + l_nm
    l_n, l_m, l_nm = l_n / total, l_m / total, l_nm / total
    lo, hi = control.interval_I(l_n, l_m, l_nm)
    result = {"interval_I": [lo, "inf" if math.isinf(hi) else hi]}
    if args.alpha is not None:
        result["r_star"] = control.r_star(args.alpha, l_n, l_m, l_nm)
    if args.rbar is not None:
        result["alpha_star"] = control.alpha_star(args.rbar, l_n, l_m, l_nm)
        result["rbar_in_I"] = control.in_interval_I(args.rbar, l_n, l_m, l_nm)
    if args.trajectory:
        timing = model.SignalTiming(
            cycle_s=args.cycle,
            red_window_n=(args.red_n_start, args.red_n_end),
            red_window_m=(args.red_m_start, args.red_m_end))
        points = control.trajectory_alpha_r(timing, l_n, l_m, l_nm,
                                            horizon=args.cycle, dt=args.dt)
        out = _out_dir(args)
        paths = report_mod.fig_trajectory(points, out)
        result["trajectory_files"] = [str(p) for p in paths]
    print(json.dumps(result))
    return 0


def cmd_sweep(args) -> int:
    if args.write_example:
        Path(args.write_example).write_text(example_yaml())
        print(f"wrote {args.write_example}")
        return 0
    if args.builtin:
        scenarios = bundled_scenarios(
            p_sweep=tuple(args.p) if args.p else None,
            seeds=tuple(args.seeds) if args.seeds else None)
    else:
        if not args.config:
            raise ConfigError("sweep needs --config FILE or --builtin")
        scenarios = load_scenarios(args.config)
        if args.p or args.seeds:
            from dataclasses import replace
            scenarios = [replace(
                sc,
                p_sweep=tuple(args.p) if args.p else sc.p_sweep,
                seeds=tuple(args.seeds) if args.seeds else sc.seeds)
                for sc in scenarios]
    report = run_scenarios(scenarios, jobs=args.jobs)
    out = _out_dir(args)
    paths = report_mod.emit_report(report, out)
    for p in paths:
        print(f"wrote {p}")
    return 0


def cmd_selftest(args) -> int:
    from . import selftest

    return selftest.run(full=args.full)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="probequeue",
        description="Probe-vehicle queue estimation and balancing control "
                    "on a signalized two-lane link")
    sub = ap.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="run one simulation to CSV")
    p_sim.add_argument("--config", required=True, help="scenario YAML file")
    p_sim.add_argument("--seed", type=int, default=None)
    p_sim.add_argument("--p", type=float, default=None,
                       help="probe penetration ratio override")
    p_sim.add_argument("--policy", default=None,
                       choices=["bernoulli_alpha", "shortest_queue",
                                "alpha_star_feedback"])
    p_sim.add_argument("--out", required=True)
    p_sim.set_defaults(func=cmd_simulate)

    p_est = sub.add_parser("estimate", help="estimates from a trace CSV")
    p_est.add_argument("--trace", required=True)
    p_est.add_argument("--config", required=True)
    p_est.add_argument("--p", type=float, default=None)
    p_est.add_argument("--out", required=True)
    p_est.set_defaults(func=cmd_estimate)

    p_post = sub.add_parser("posterior", help="joint queue law for one observation")
    p_post.add_argument("--mu-n", dest="mu_n", type=float, required=True)
    p_post.add_argument("--mu-m", dest="mu_m", type=float, required=True)
    p_post.add_argument("--p", type=float, required=True)
    p_post.add_argument("--lp", type=int, required=True)
    p_post.add_argument("--cp", type=int, required=True)
    p_post.add_argument("--n-max", dest="n_max", type=int, default=None)
    p_post.add_argument("--format", choices=["csv", "svg"], default="svg")
    p_post.add_argument("--out", required=True)
    p_post.set_defaults(func=cmd_posterior)

    p_ctl = sub.add_parser("control", help="balancing laws for a demand mix")
    p_ctl.add_argument("--ln", type=float, required=True)
    p_ctl.add_argument("--lm", type=float, required=True)
    p_ctl.add_argument("--lnm", type=float, required=True)
    p_ctl.add_argument("--alpha", type=float, default=None)
    p_ctl.add_argument("--rbar", type=float, default=None)
    p_ctl.add_argument("--trajectory", action="store_true")
    p_ctl.add_argument("--cycle", type=float, default=90.0)
    p_ctl.add_argument("--red-n-start", type=float, default=0.0)
    p_ctl.add_argument("--red-n-end", type=float, default=49.0)
    p_ctl.add_argument("--red-m-start", type=float, default=8.0)
    p_ctl.add_argument("--red-m-end", type=float, default=49.0)
    p_ctl.add_argument("--dt", type=float, default=1.0)
    p_ctl.add_argument("--out", default="control_out")
    p_ctl.set_defaults(func=cmd_control)

    p_sw = sub.add_parser("sweep", help="full scenario sweep to a report")
    p_sw.add_argument("--config", default=None, help="scenario YAML file")
    p_sw.add_argument("--builtin", action="store_true",
                      help="use the five bundled demand scenarios")
    p_sw.add_argument("--p", type=float, nargs="*", default=None)
    p_sw.add_argument("--seeds", type=int, nargs="*", default=None)
    p_sw.add_argument("--jobs", type=int, default=1)
    p_sw.add_argument("--out", default="sweep_out")
    p_sw.add_argument("--write-example", default=None,
                      help="write an example scenario YAML and exit")
    p_sw.set_defaults(func=cmd_sweep)

    p_self = sub.add_parser("selftest", help="Monte Carlo oracle checks")
    p_self.add_argument("--full", action="store_true",
                        help="acceptance-scale sample sizes")
    p_self.set_defaults(func=cmd_selftest)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except ProbeQueueError as exc:
        print(json.dumps({"error": {"category": exc.category,
                                    "message": str(exc)}}), file=sys.stderr)
        return exit_code_for(exc)
    except OSError as exc:
        print(json.dumps({"error": {"category": "io", "message": str(exc)}}),
              file=sys.stderr)
        return exit_code_for(exc)


if __name__ == "__main__":
    sys.exit(main())
