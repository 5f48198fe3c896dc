"""Report emission: CSV tables and SVG figures.

Every figure's underlying numbers are also written as a CSV next to it, so
the plots are derived artifacts and never the only record.  All writers
format floats identically, which keeps re-runs byte-identical.
"""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .. import bayes, control  # noqa: E402
from ..model import Lane  # noqa: E402
from .metrics import InstantEstimates, MetricReport  # noqa: E402

_FLOAT = "{:.6f}"


def _fmt(x) -> str:
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf"
        return _FLOAT.format(x)
    return str(x)


def _write_csv(path: Path, header: list[str], rows: list[list]) -> Path:
    lines = [",".join(header)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")
    return path


def write_long_csv(report: MetricReport, path: Path) -> Path:
    header = ["scenario", "p", "seed",
              "mae_p2_n", "mae_p2_m", "mae_p1_n", "mae_p1_m",
              "mae_lp_n", "mae_lp_m", "mape_p2_n", "mape_p2_m",
              "avg_queue_n", "avg_queue_m", "max_queue_n", "max_queue_m",
              "lambda_hat", "lambda_true", "p_hat_mean", "lp_coverage",
              "n_instants", "saturated"]
    rows = []
    for r in sorted(report.runs, key=lambda r: (r.scenario, r.p, r.seed)):
        rows.append([
            r.scenario, r.p, r.seed,
            r.mae["p2"][0], r.mae["p2"][1], r.mae["p1"][0], r.mae["p1"][1],
            r.mae["lp"][0], r.mae["lp"][1], r.mape_p2[0], r.mape_p2[1],
            r.avg_queue[0], r.avg_queue[1], r.max_queue[0], r.max_queue[1],
            r.lambda_hat, r.lambda_true, r.p_hat_mean, r.lp_coverage,
            r.n_instants, int(r.saturated)])
    return _write_csv(path, header, rows)


def write_lane_table_csv(report: MetricReport, lane: Lane, path: Path) -> Path:
    """Five-column layout: one column per scenario, blocks of rows per p."""
    names = report.scenarios
    idx = 0 if lane is Lane.N else 1
    header = ["metric"] + list(names)
    if not report.runs:
        return _write_csv(path, header, [])

    def seed_mean(name, attr, p=None):
        vals = []
        for r in report.runs:
            if r.scenario != name or (p is not None and r.p != p):
                continue
            vals.append(attr(r))
        vals = [v for v in vals if not math.isnan(v)]
        return sum(vals) / len(vals) if vals else math.nan

    rows = [
        ["avg_queue"] + [seed_mean(n, lambda r: r.avg_queue[idx]) for n in names],
        ["max_queue"] + [seed_mean(n, lambda r: float(r.max_queue[idx])) for n in names],
        ["saturated_runs"] + [
            float(sum(1 for r in report.runs if r.scenario == n and r.saturated))
            for n in names],
    ]
    p_values = sorted({r.p for r in report.runs})
    for p in p_values:
        rows.append([f"p={p:g} MAE(P2)"] +
                    [report.seed_averaged_mae(n, p, "p2", lane) for n in names])
        rows.append([f"p={p:g} MAE(P1)"] +
                    [report.seed_averaged_mae(n, p, "p1", lane) for n in names])
        rows.append([f"p={p:g} MAE(lp)"] +
                    [report.seed_averaged_mae(n, p, "lp", lane) for n in names])
        rows.append([f"p={p:g} MAPE(P2,R)%"] +
                    [report.seed_averaged_mape(n, p, lane) for n in names])
    return _write_csv(path, header, rows)


def write_alpha_table_csv(report: MetricReport, path: Path,
                          intervals: dict[str, tuple[float, float]] | None = None
                          ) -> Path:
    intervals = intervals or {}
    rows = []
    for n, a in report.alpha_table:
        lo, hi = intervals.get(n, (math.nan, math.nan))
        rows.append([n, a, lo, hi])
    return _write_csv(path, ["scenario", "alpha_star_at_rbar_1",
                             "I_low", "I_high"], rows)


# ----------------------------------------------------------------------
# figures (SVG + companion CSV)
# ----------------------------------------------------------------------

def fig_penetration_scatter(report: MetricReport, outdir: Path) -> list[Path]:
    rows = []
    for r in sorted(report.runs, key=lambda r: (r.scenario, r.p, r.seed)):
        if not math.isnan(r.p_hat_mean):
            rows.append([r.scenario, r.p, r.seed, r.p_hat_mean])
    csv = _write_csv(outdir / "penetration_scatter.csv",
                     ["scenario", "p", "seed", "p_hat_mean"], rows)
    if not rows:
        return [csv]
    fig, ax = plt.subplots(figsize=(6, 5))
    for name in report.scenarios:
        pts = [(p, ph) for sc, p, _, ph in rows if sc == name]
        if pts:
            ax.scatter([x for x, _ in pts], [y for _, y in pts],
                       s=18, alpha=0.7, label=name)
    ax.plot([0, 1], [0, 1], "k--", linewidth=1, label="ideal")
    ax.set_xlabel("true penetration ratio p")
    ax.set_ylabel("estimated p (run mean)")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    svg = outdir / "penetration_scatter.svg"
    fig.savefig(svg)
    plt.close(fig)
    return [csv, svg]


def fig_lambda_vs_p(report: MetricReport, outdir: Path) -> list[Path]:
    rows = []
    for name in report.scenarios:
        for p in report.p_values(name):
            vals = [r.lambda_hat for r in report.runs
                    if r.scenario == name and r.p == p
                    and not math.isnan(r.lambda_hat)]
            true = next((r.lambda_true for r in report.runs
                         if r.scenario == name), math.nan)
            if vals:
                rows.append([name, p, sum(vals) / len(vals), true])
    csv = _write_csv(outdir / "lambda_vs_p.csv",
                     ["scenario", "p", "lambda_hat_mean", "lambda_true"], rows)
    if not rows:
        return [csv]
    fig, ax = plt.subplots(figsize=(6, 5))
    for name in report.scenarios:
        pts = [(p, lh, lt) for sc, p, lh, lt in rows if sc == name]
        if pts:
            ax.plot([x for x, _, _ in pts], [y for _, y, _ in pts],
                    "o-", label=f"{name} estimate")
            ax.axhline(pts[0][2], linestyle="--", linewidth=0.8)
    ax.set_xlabel("penetration ratio p")
    ax.set_ylabel("arrival rate (veh/s)")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    svg = outdir / "lambda_vs_p.svg"
    fig.savefig(svg)
    plt.close(fig)
    return [csv, svg]


def fig_posterior_heatmaps(prior, posterior, outdir: Path,
                           stem: str = "posterior") -> list[Path]:
    """Side-by-side prior/posterior heat maps with expectation markers."""
    paths = []
    prior_csv = outdir / f"{stem}_prior.csv"
    prior.write_csv(prior_csv)
    post_csv = outdir / f"{stem}_conditional.csv"
    posterior.write_csv(post_csv)
    paths += [prior_csv, post_csv]

    fig, axes = plt.subplots(1, 2, figsize=(10, 4.5))
    for ax, dist, title in ((axes[0], prior, "unconditional"),
                            (axes[1], posterior, "probe-conditioned")):
        im = ax.imshow(dist.grid.T, origin="lower", aspect="equal",
                       cmap="viridis")
        e_n, e_m = dist.expectation()
        ax.plot([e_n], [e_m], "ro", markersize=6)
        ax.set_xlabel("queue N (vehicles)")
        ax.set_ylabel("queue M (vehicles)")
        ax.set_title(title)
        fig.colorbar(im, ax=ax, shrink=0.8)
    fig.tight_layout()
    svg = outdir / f"{stem}.svg"
    fig.savefig(svg)
    plt.close(fig)
    paths.append(svg)
    return paths


def fig_queue_timeseries(instants: list[InstantEstimates], outdir: Path,
                         stem: str = "queue_timeseries") -> list[Path]:
    rows = [[i.t, i.truth_n, i.truth_m, i.p2[0], i.p2[1], i.p1[0], i.p1[1]]
            for i in instants]
    csv = _write_csv(outdir / f"{stem}.csv",
                     ["t", "truth_n", "truth_m", "p2_n", "p2_m", "p1_n", "p1_m"],
                     rows)
    if not rows:
        return [csv]
    fig, axes = plt.subplots(2, 1, figsize=(9, 6), sharex=True)
    t = [r[0] for r in rows]
    for ax, truth_i, p2_i, p1_i, lane in ((axes[0], 1, 3, 5, "N"),
                                          (axes[1], 2, 4, 6, "M")):
        ax.step(t, [r[truth_i] for r in rows], where="post",
                label="ground truth", linewidth=1.2)
        ax.plot(t, [r[p2_i] for r in rows], ".", markersize=3,
                label="probe-conditioned mean")
        ax.plot(t, [r[p1_i] for r in rows], ",", alpha=0.6,
                label="prior mean")
        ax.set_ylabel(f"queue {lane} (veh)")
        ax.legend(fontsize=8)
        ax.grid(alpha=0.3)
    axes[1].set_xlabel("time (s)")
    fig.tight_layout()
    svg = outdir / f"{stem}.svg"
    fig.savefig(svg)
    plt.close(fig)
    return [csv, svg]


def fig_trajectory(points, outdir: Path, stem: str = "alpha_rbar_trajectory"
                   ) -> list[Path]:
    csv = outdir / f"{stem}.csv"
    control.write_trajectory_csv(points, csv)
    finite = [pt for pt in points if math.isfinite(pt.r_bar)]
    if not finite:
        return [csv]
    fig, ax1 = plt.subplots(figsize=(7, 4.5))
    ax1.plot([pt.t for pt in finite], [pt.r_bar for pt in finite],
             "b-", label="r_bar = r_N / r_M")
    ax1.set_xlabel("time (s)")
    ax1.set_ylabel("red-time ratio", color="b")
    ax2 = ax1.twinx()
    ax2.plot([pt.t for pt in points], [pt.alpha for pt in points],
             "g-", label="alpha_star")
    ax2.set_ylabel("assignment share to lane M", color="g")
    ax2.set_ylim(-0.02, 1.05)
    ax1.grid(alpha=0.3)
    fig.tight_layout()
    svg = outdir / f"{stem}.svg"
    fig.savefig(svg)
    plt.close(fig)
    return [csv, svg]


def fig_interval_vs_common_flow(lam_n: float, lam_m: float,
                                lam_nm_values: list[float], outdir: Path,
                                stem: str = "interval_vs_common_flow"
                                ) -> list[Path]:
    rows = []
    for lam_nm in lam_nm_values:
        total = lam_n + lam_m + lam_nm
        lo, hi = control.interval_I(lam_n / total, lam_m / total,
                                    lam_nm / total)
        rows.append([lam_nm, lo, hi])
    csv = _write_csv(outdir / f"{stem}.csv",
                     ["lambda_nm", "I_low", "I_high"], rows)
    fig, ax = plt.subplots(figsize=(6.5, 4.5))
    x = [r[0] for r in rows]
    ax.plot(x, [r[1] for r in rows], "b-o", markersize=3, label="lower end")
    ax.plot(x, [r[2] for r in rows], "r-o", markersize=3, label="upper end")
    ax.fill_between(x, [r[1] for r in rows], [r[2] for r in rows],
                    alpha=0.15, color="gray")
    ax.set_xlabel("lane-flexible arrival rate (veh/s)")
    ax.set_ylabel("balancing interval for r_bar")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    svg = outdir / f"{stem}.svg"
    fig.savefig(svg)
    plt.close(fig)
    return [csv, svg]


def _exemplar_figures(report: MetricReport, outdir: Path) -> list[Path]:
    """Per-run figures rebuilt from one deterministic exemplar run: queue
    time series with estimator overlays, prior/conditional heat maps for
    the busiest end-of-red observation, the control trajectory over one
    cycle, and the balancing interval as the flexible flow grows."""
    from ..model import mu_rates
    from ..sim import LinkSimulation
    from .metrics import evaluate_trace

    sc = report.exemplar_scenario
    if sc is None:
        return []
    p = max(sc.p_sweep)
    trace = LinkSimulation(sc.sim_config(p, sc.seeds[0])).run()
    instants = evaluate_trace(trace, sc, p)
    paths = fig_queue_timeseries(instants, outdir)

    end_rows = [r for r in trace.rows
                if (r.end_red_n or r.end_red_m) and r.c_p >= 1]
    if end_rows:
        row = max(end_rows, key=lambda r: r.c_p)
        mu_n, mu_m = mu_rates(trace.config.demand, row.r_n, row.r_m)
        n_max = bayes.default_n_max(mu_n, mu_m, row.l_p)
        prior = bayes.prior_joint(mu_n, mu_m, n_max)
        post = bayes.posterior_joint(bayes.PosteriorInput(
            mu_n=mu_n, mu_m=mu_m, p=p, l_p=row.l_p, c_p=row.c_p,
            n_max=n_max))
        paths += fig_posterior_heatmaps(prior, post, outdir)

    l_n, l_m, l_nm = sc.demand.turn_ratios
    points = control.trajectory_alpha_r(sc.timing, l_n, l_m, l_nm,
                                        horizon=sc.timing.cycle_s, dt=1.0)
    paths += fig_trajectory(points, outdir)

    base = max(sc.demand.lambda_n, sc.demand.lambda_m)
    lam_nm_values = [round(f * base, 9) for f in
                     (0.05, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0)]
    paths += fig_interval_vs_common_flow(sc.demand.lambda_n,
                                         sc.demand.lambda_m,
                                         lam_nm_values, outdir)
    return paths


def emit_report(report: MetricReport, outdir) -> list[Path]:
    """All sweep tables plus the report figures; returns written paths."""
    outdir = Path(outdir)
    try:
        outdir.mkdir(parents=True, exist_ok=True)
        paths = [
            write_long_csv(report, outdir / "metrics_long.csv"),
            write_lane_table_csv(report, Lane.N, outdir / "metrics_lane_n.csv"),
            write_lane_table_csv(report, Lane.M, outdir / "metrics_lane_m.csv"),
            write_alpha_table_csv(report, outdir / "alpha_table.csv",
                                  intervals=report.intervals),
        ]
        if report.runs:
            paths += fig_penetration_scatter(report, outdir)
            paths += fig_lambda_vs_p(report, outdir)
            paths += _exemplar_figures(report, outdir)
        return paths
    except OSError as exc:
        raise OSError(f"cannot write report to {outdir}: {exc}") from exc
