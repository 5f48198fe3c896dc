"""Experiment metrics: run scenarios, compare estimators to ground truth.

For every sampled instant where both lanes are red, three queue-length
estimator families are evaluated against the simulator's ground truth:

* ``p2`` — marginal expectations of the probe-conditioned joint law (falls
  back to the zero-probe conditional when no probe is queued);
* ``p1`` — the prior means, rate x elapsed red, ignoring probes entirely;
* ``lp`` — the last-probe anchor (l_p, kappa*l_p), mapped onto lanes by
  whichever expected accumulation is larger; undefined when no probe is
  queued.

MAE averages |estimate - truth| over the instants where an estimator is
defined; MAPE is evaluated only at end-of-red instants with nonzero truth,
in percent.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

from .. import bayes, model
from ..errors import ParameterError
from ..estimators import (
    estimate_lambda_windows,
    estimate_p_two_lane,
    estimate_turn_ratios,
)
from ..model import DemandProfile, Lane
from ..sim import LinkSimulation, Trace
from .scenarios import Scenario


@dataclass(frozen=True)
class InstantEstimates:
    t: float
    truth_n: int
    truth_m: int
    p2: tuple[float, float]
    p1: tuple[float, float]
    lp: tuple[float, float] | None
    end_red_n: bool
    end_red_m: bool
    c_p: int
    l_p: int | None
    p_hat: float | None  # two-lane penetration estimate when usable


@dataclass(frozen=True)
class RunResult:
    scenario: str
    p: float
    seed: int
    mae: dict            # estimator -> (lane N, lane M)
    mape_p2: tuple[float, float]  # percent, nan when no usable instant
    avg_queue: tuple[float, float]
    max_queue: tuple[int, int]
    lambda_hat: float
    lambda_true: float
    p_hat_mean: float    # nan when never usable
    lp_coverage: float   # share of instants where the lp estimator existed
    n_instants: int
    saturated: bool


@dataclass
class MetricReport:
    runs: list[RunResult] = field(default_factory=list)
    scenarios: list[str] = field(default_factory=list)
    alpha_table: list[tuple[str, float]] = field(default_factory=list)
    intervals: dict = field(default_factory=dict)  # name -> (I_low, I_high)
    # first swept scenario, kept so report emission can rebuild one
    # exemplar run for the per-run figures
    exemplar_scenario: Scenario | None = None

    def seed_averaged_mae(self, scenario: str, p: float, estimator: str,
                          lane: Lane) -> float:
        idx = 0 if lane is Lane.N else 1
        vals = [r.mae[estimator][idx] for r in self.runs
                if r.scenario == scenario and r.p == p
                and not math.isnan(r.mae[estimator][idx])]
        return sum(vals) / len(vals) if vals else math.nan

    def seed_averaged_mape(self, scenario: str, p: float, lane: Lane) -> float:
        idx = 0 if lane is Lane.N else 1
        vals = [r.mape_p2[idx] for r in self.runs
                if r.scenario == scenario and r.p == p
                and not math.isnan(r.mape_p2[idx])]
        return sum(vals) / len(vals) if vals else math.nan

    def p_values(self, scenario: str) -> list[float]:
        return sorted({r.p for r in self.runs if r.scenario == scenario})


def _kappa_for_run(scenario: Scenario, trace: Trace, demand: DemandProfile):
    """Return a callable r_n, r_m -> kappa, honoring kappa_source."""
    if scenario.kappa_source == "estimated":
        probe_ids = [a.vehicle_id for a in trace.arrivals if a.is_probe]
        exits = {d.vehicle_id: d.movement for d in trace.departures if d.is_probe}
        est = estimate_turn_ratios(probe_ids, exits)
        if est.usable:
            ersatz = DemandProfile(
                lambda_n=est.l_n_hat * demand.total,
                lambda_m=est.l_m_hat * demand.total,
                lambda_nm=est.l_nm_hat * demand.total,
                p=demand.p, alpha=demand.alpha)
            return lambda r_n, r_m: model.kappa(ersatz, r_n, r_m)
    return lambda r_n, r_m: model.kappa(demand, r_n, r_m)


def evaluate_trace(trace: Trace, scenario: Scenario, p: float
                   ) -> list[InstantEstimates]:
    """Estimator families at every sampled instant with both lanes red."""
    demand = trace.config.demand
    kappa_at = _kappa_for_run(scenario, trace, demand)
    out = []
    for row in trace.rows:
        if row.r_n <= 0.0 or row.r_m <= 0.0:
            continue
        mu_n, mu_m = model.mu_rates(demand, row.r_n, row.r_m)
        kap = kappa_at(row.r_n, row.r_m)
        n_max = bayes.default_n_max(mu_n, mu_m, row.l_p or 0)
        if row.c_p >= 1:
            post = bayes.posterior_joint(bayes.PosteriorInput(
                mu_n=mu_n, mu_m=mu_m, p=p, l_p=row.l_p, c_p=row.c_p,
                n_max=n_max))
        else:
            post = bayes.posterior_no_probes(mu_n, mu_m, p, n_max)
        p2 = bayes.expected_queue_lengths(post)
        p1 = bayes.prior_point_estimate(mu_n, mu_m)
        if row.l_p is not None:
            hi, lo = bayes.lp_point_estimate(row.l_p, kap)
            lp = (hi, lo) if mu_n >= mu_m else (lo, hi)
        else:
            lp = None
        pen = estimate_p_two_lane(row.c_p, row.l_p, kap)
        out.append(InstantEstimates(
            t=row.t, truth_n=row.queue_n, truth_m=row.queue_m,
            p2=p2, p1=p1, lp=lp,
            end_red_n=row.end_red_n, end_red_m=row.end_red_m,
            c_p=row.c_p, l_p=row.l_p,
            p_hat=pen.p_hat if pen.usable else None))
    return out


def lambda_windows_from_trace(trace: Trace) -> list[tuple[int, int, float, float]]:
    """(x_p start, x_p end, t start, t end) per window where both lanes are red.

    Uses the sampled rows closest to the window bounds, so the probe count
    difference is exact over the interval actually reported.
    """
    cfg = trace.config
    windows = cfg.timing.common_red_windows(cfg.duration_s)
    out = []
    for a, b in windows:
        inside = [r for r in trace.rows if a - 1e-9 <= r.t <= b + 1e-9]
        if len(inside) < 2:
            continue
        first, last = inside[0], inside[-1]
        if last.t > first.t:
            out.append((first.x_p, last.x_p, first.t, last.t))
    return out


def _mae(pairs: list[tuple[float, float]]) -> float:
    if not pairs:
        return math.nan
    return sum(abs(e - t) for e, t in pairs) / len(pairs)


def summarize_run(scenario: Scenario, trace: Trace, p: float) -> RunResult:
    inst = evaluate_trace(trace, scenario, p)
    mae = {}
    for name in ("p2", "p1"):
        pairs_n = [(getattr(i, name)[0], i.truth_n) for i in inst]
        pairs_m = [(getattr(i, name)[1], i.truth_m) for i in inst]
        mae[name] = (_mae(pairs_n), _mae(pairs_m))
    lp_n = [(i.lp[0], i.truth_n) for i in inst if i.lp is not None]
    lp_m = [(i.lp[1], i.truth_m) for i in inst if i.lp is not None]
    mae["lp"] = (_mae(lp_n), _mae(lp_m))

    def mape(lane_idx: int) -> float:
        if lane_idx == 0:
            rows = [(i.p2[0], i.truth_n) for i in inst if i.end_red_n and i.truth_n > 0]
        else:
            rows = [(i.p2[1], i.truth_m) for i in inst if i.end_red_m and i.truth_m > 0]
        if not rows:
            return math.nan
        return 100.0 * sum(abs(e - t) / t for e, t in rows) / len(rows)

    q_n = [r.queue_n for r in trace.rows]
    q_m = [r.queue_m for r in trace.rows]
    try:
        lam_windows = lambda_windows_from_trace(trace)
        lambda_hat, _ = estimate_lambda_windows(lam_windows, p) if lam_windows \
            else (math.nan, [])
    except ParameterError:
        lambda_hat = math.nan
    p_hats = [i.p_hat for i in inst if i.p_hat is not None]
    return RunResult(
        scenario=scenario.name, p=p, seed=trace.config.seed,
        mae=mae, mape_p2=(mape(0), mape(1)),
        avg_queue=(sum(q_n) / len(q_n) if q_n else 0.0,
                   sum(q_m) / len(q_m) if q_m else 0.0),
        max_queue=(max(q_n, default=0), max(q_m, default=0)),
        lambda_hat=lambda_hat, lambda_true=trace.config.demand.total,
        p_hat_mean=(sum(p_hats) / len(p_hats) if p_hats else math.nan),
        lp_coverage=(len(lp_n) / len(inst) if inst else 0.0),
        n_instants=len(inst), saturated=trace.saturated)


def _run_grid_point(args: tuple[Scenario, float, int]) -> RunResult:
    scenario, p, seed = args
    trace = LinkSimulation(scenario.sim_config(p, seed)).run()
    return summarize_run(scenario, trace, p)


def run_scenario(scenario: Scenario, jobs: int = 1) -> MetricReport:
    return run_scenarios([scenario], jobs=jobs)


def run_scenarios(scenarios: list[Scenario], jobs: int = 1) -> MetricReport:
    """Full sweep over scenario x p x seed; deterministic result order."""
    grid = [(sc, p, seed)
            for sc in scenarios for p in sc.p_sweep for seed in sc.seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            runs = list(pool.map(_run_grid_point, grid, chunksize=1))
    else:
        runs = [_run_grid_point(g) for g in grid]
    from ..control import interval_I

    report = MetricReport(runs=runs, scenarios=[sc.name for sc in scenarios],
                          exemplar_scenario=scenarios[0] if scenarios else None)
    report.alpha_table = alpha_table(scenarios)
    report.intervals = {sc.name: interval_I(*sc.demand.turn_ratios)
                        for sc in scenarios}
    return report


def alpha_table(scenarios: list[Scenario]) -> list[tuple[str, float]]:
    """alpha_star at r_bar = 1 for each scenario's demand mix."""
    from ..control import alpha_star

    out = []
    for sc in scenarios:
        l_n, l_m, l_nm = sc.demand.turn_ratios
        out.append((sc.name, alpha_star(1.0, l_n, l_m, l_nm)))
    return out
