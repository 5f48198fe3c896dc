"""Acceptance suite: one test per release criterion, each printing a
PASS line with its measured numbers (run with ``pytest -v -s`` to see them).

Statistical criteria fix their seeds, so every run is a deterministic
regression; the Monte Carlo tolerances quoted in each test are the
acceptance thresholds, not tuned values.
"""

import math

import numpy as np
import pytest
from scipy import stats

from probequeue import mc
from probequeue.bayes import PosteriorInput, default_n_max, posterior_joint, prior_joint
from probequeue.control import (
    BalanceInput,
    alpha_star,
    imbalance_f,
    in_interval_I,
    interval_I,
    r_star,
    trajectory_alpha_r,
    write_trajectory_csv,
)
from probequeue.estimators import (
    estimate_lambda_windows,
    estimate_p_two_lane,
)
from probequeue.harness.metrics import lambda_windows_from_trace, run_scenarios
from probequeue.harness.report import emit_report
from probequeue.harness.scenarios import bundled_scenarios
from probequeue.model import DemandProfile, Lane, SignalTiming, mu_rates
from probequeue.sim import SimConfig, simulate


def _report(num: int, detail: str) -> None:
    print(f"PASS criterion {num}: {detail}")


# ----------------------------------------------------------------------
# shared heavy artifacts
# ----------------------------------------------------------------------

@pytest.fixture(scope="module")
def ordering_sweep():
    """Five bundled scenarios x p in {0.05, 0.5, 0.9} x 10 seeds."""
    scenarios = bundled_scenarios(p_sweep=(0.05, 0.5, 0.9),
                                  seeds=tuple(range(10)))
    return run_scenarios(scenarios)


def test_criterion_1_two_lane_worked_example():
    """(8 probes, last at 9, accumulation ratio 0.75) -> 0.4464..., i.e. 0.45."""
    est = estimate_p_two_lane(8, 9, 0.75)
    want = (8 / 1.75 - 1) / (9 - 1)
    assert est.usable
    assert abs(est.raw - want) < 1e-12
    assert round(est.p_hat, 2) == 0.45
    _report(1, f"p_hat raw {est.raw:.12f} rounds to 0.45")


def test_criterion_2_bundled_assignment_optima():
    """alpha_star(1) over the five bundled demand tuples, exact to 1e-12."""
    counts = [(100.0, 200.0, 125.0), (75.0, 125.0, 100.0),
              (200.0, 200.0, 50.0), (125.0, 75.0, 100.0),
              (200.0, 100.0, 125.0)]
    want = [0.1, 0.25, 0.5, 0.75, 0.9]
    got = []
    for (n, m, nm), w in zip(counts, want):
        total = n + m + nm
        a = alpha_star(1.0, n / total, m / total, nm / total)
        assert abs(a - w) < 1e-12
        got.append(a)
    _report(2, f"alpha_star(1) = {[round(a, 4) for a in got]}")


def test_criterion_3_control_identities():
    """f(alpha, r_star(alpha)) = 0 and f(alpha_star(r), r) = 0 for r in I,
    each over 1000 random draws, tolerance 1e-12."""
    rng = np.random.default_rng(314159)
    worst_r = worst_a = 0.0
    n_r = n_a = 0
    while n_r < 1000 or n_a < 1000:
        raw = rng.dirichlet([1.0, 1.0, 1.0])
        l_n, l_m, l_nm = float(raw[0]), float(raw[1]), float(raw[2])
        alpha = float(rng.uniform(0, 1))
        if n_r < 1000 and l_n + (1 - alpha) * l_nm > 1e-9:
            rs = r_star(alpha, l_n, l_m, l_nm)
            worst_r = max(worst_r, imbalance_f(BalanceInput(
                l_n=l_n, l_m=l_m, l_nm=l_nm, alpha=alpha, r_bar=rs)))
            n_r += 1
        lo, hi = interval_I(l_n, l_m, l_nm)
        hi = min(hi, lo + 20.0)
        r_bar = float(rng.uniform(lo, hi))
        if n_a < 1000 and r_bar > 1e-9 and in_interval_I(r_bar, l_n, l_m, l_nm):
            a = alpha_star(r_bar, l_n, l_m, l_nm)
            worst_a = max(worst_a, imbalance_f(BalanceInput(
                l_n=l_n, l_m=l_m, l_nm=l_nm, alpha=a, r_bar=r_bar)))
            n_a += 1
    assert worst_r < 1e-12 and worst_a < 1e-12
    _report(3, f"worst residual imbalance {max(worst_r, worst_a):.2e}")


def test_criterion_4_penetration_unbiasedness():
    """Two-lane penetration estimate over 100 000 synthetic observations
    per setting, p in {0.2, 0.5, 0.9} x ratio in {0.5, 1.0}, conditioned
    on l_p > 1 and c_p > 1: |mean - p| < 3 standard errors, and the spread
    tightens as p grows.

    Observations are drawn from the balanced-backlog placement law (the
    trailing probes binomial over l_p - 1 + ratio * (l_p + (1-p)/p) slots),
    which is the model under which the estimator's bias calculus closes.
    Realized product-Poisson queues carry an extra queue-fluctuation term
    the estimator does not correct (measured at about -0.05 at ratio 1.0,
    p = 0.5); that regime is covered at its own tolerance in the estimator
    tests.
    """
    rng = np.random.default_rng(20240817)
    for kappa in (0.5, 1.0):
        rel_spread = []
        for p in (0.2, 0.5, 0.9):
            l_p, c_p = mc.sample_balanced_placement(p, kappa, 100_000, rng)
            mask = (l_p > 1) & (c_p > 1)
            vals = (c_p[mask] / (1.0 + kappa) - 1.0) / (l_p[mask] - 1)
            err = abs(float(vals.mean()) - p)
            bound = 3 * float(vals.std(ddof=1)) / math.sqrt(vals.size)
            assert err < bound, (p, kappa, err, bound)
            rel_spread.append(float(vals.std(ddof=1)) / p)
        # estimates tighten as p grows: relative spread strictly decreasing
        # (the absolute spread carries a p(1-p) factor that peaks at 0.5)
        assert rel_spread[0] > rel_spread[1] > rel_spread[2]
    _report(4, "all six (p, ratio) settings within 3 SE at 100k draws; "
               "relative spread decreases in p")


def test_criterion_5_posterior_matches_generative_model():
    """Conditional grid vs 10^6 flag-level draws for every mean pair in
    {1,2,3}^2 and p in {0.3, 0.7}: per-cell agreement within 3 Monte Carlo
    standard errors on cells with >= 50 expected hits.

    Checking ~500 cells at the 3-sigma level expects ~1.4 chance
    exceedances, so the suite-level rule is the matching binomial bound:
    no cell beyond 4 SE, and the count beyond 3 SE within mean + 3 sigma
    of its own sampling law.
    """
    rng = np.random.default_rng(20240817)
    total_cells = 0
    beyond3 = 0
    worst = 0.0
    for mu_n in (1.0, 2.0, 3.0):
        for mu_m in (1.0, 2.0, 3.0):
            for p in (0.3, 0.7):
                s = mc.sample_two_lane_observations(mu_n, mu_m, p,
                                                    1_000_000, rng)
                ret = s.retained & (s.c_p >= 1) & (s.l_p >= 1)
                key = s.l_p[ret] * 1000 + s.c_p[ret]
                vals, counts = np.unique(key, return_counts=True)
                mode = int(vals[counts.argmax()])
                l_p, c_p = mode // 1000, mode % 1000
                n_max = default_n_max(mu_n, mu_m, l_p)
                grid_counts, matches = mc.empirical_joint(s, l_p, c_p, n_max)
                post = posterior_joint(PosteriorInput(
                    mu_n=mu_n, mu_m=mu_m, p=p, l_p=l_p, c_p=c_p, n_max=n_max))
                cells = post.grid * matches >= 50
                se = np.sqrt(post.grid * (1 - post.grid) / matches)
                z = np.abs(grid_counts / matches - post.grid)[cells] / se[cells]
                total_cells += int(cells.sum())
                beyond3 += int((z > 3).sum())
                worst = max(worst, float(z.max()))
    expected = 0.0027 * total_cells
    allowance = expected + 3 * math.sqrt(expected)
    assert worst <= 4.0, f"worst cell at {worst:.2f} SE"
    assert beyond3 <= allowance, (beyond3, allowance)
    _report(5, f"{total_cells} cells, {beyond3} beyond 3 SE "
               f"(chance allowance {allowance:.1f}), worst {worst:.2f} SE")


def test_criterion_6_normalization_and_support():
    """500 randomized conditioning inputs: grid mass 1 +- 1e-9 and exact
    zeros wherever max(n, m) < l_p or n + m < c_p."""
    rng = np.random.default_rng(606)
    worst_mass = 0.0
    for _ in range(500):
        mu_n, mu_m = rng.uniform(0.2, 12.0, size=2)
        l_p = int(rng.integers(1, 15))
        # at most 2*l_p probes fit at positions <= l_p across two lanes
        c_p = int(rng.integers(1, 2 * l_p + 1))
        p = float(rng.uniform(0.02, 0.99))
        n_max = default_n_max(mu_n, mu_m, l_p)
        dist = posterior_joint(PosteriorInput(
            mu_n=mu_n, mu_m=mu_m, p=p, l_p=l_p, c_p=c_p, n_max=n_max))
        worst_mass = max(worst_mass, abs(float(dist.grid.sum()) - 1.0))
        idx = np.arange(n_max + 1)
        n_g, m_g = np.meshgrid(idx, idx, indexing="ij")
        off = (np.maximum(n_g, m_g) < l_p) | (n_g + m_g < c_p)
        assert (dist.grid[off] == 0.0).all()
    assert worst_mass < 1e-9
    _report(6, f"500 grids, worst |mass - 1| = {worst_mass:.2e}, "
               "support zeros exact")


def test_criterion_7_prior_sanity_and_simulated_law():
    """Prior marginal means reproduce their inputs to 1e-9 up to mean 20;
    the simulator's end-of-red queue pairs pass a chi-square test against
    the product-Poisson law over 5000 cycles."""
    worst = 0.0
    rng = np.random.default_rng(77)
    for _ in range(40):
        mu_n, mu_m = rng.uniform(0.0, 20.0, size=2)
        dist = prior_joint(mu_n, mu_m, default_n_max(mu_n, mu_m))
        e_n, e_m = dist.expectation()
        worst = max(worst, abs(e_n - mu_n), abs(e_m - mu_m))
    assert worst < 1e-9

    timing = SignalTiming(cycle_s=110.0, red_window_n=(0.0, 41.0),
                          red_window_m=(0.0, 41.0))
    demand = DemandProfile(lambda_n=200 / 1200, lambda_m=200 / 1200,
                           lambda_nm=50 / 1200, p=0.5, alpha=0.5)
    cfg = SimConfig(demand=demand, timing=timing, seed=11,
                    duration_s=5000 * 110.0, sample_period_s=None)
    trace = simulate(cfg)
    bad_cycles = {int(ev.t // 110.0) for ev in trace.overflow_events}
    rows = [r for r in trace.rows
            if r.end_red_n and int(r.t // 110.0) not in bad_cycles]
    assert len(rows) >= 4900
    mu_n, mu_m = mu_rates(demand, 41.0, 41.0)
    prior = prior_joint(mu_n, mu_m, 40)
    counts = np.zeros_like(prior.grid)
    np.add.at(counts, ([r.queue_n for r in rows], [r.queue_m for r in rows]), 1)
    expected = prior.grid * len(rows)
    mask = expected >= 5
    f_obs = np.concatenate([counts[mask], [counts[~mask].sum()]])
    f_exp = np.concatenate([expected[mask], [expected[~mask].sum()]])
    f_exp *= f_obs.sum() / f_exp.sum()
    _, pval = stats.chisquare(f_obs, f_exp)
    assert pval > 0.01
    _report(7, f"prior means exact to {worst:.1e}; chi-square p={pval:.3f} "
               f"over {len(rows)} cycles, {int(mask.sum())} cells")


def test_criterion_8_arrival_rate_accuracy():
    """lambda = 0.25 veh/s over 40 simulated minutes: pooled estimate
    within the 3/sqrt(p * lambda * total-red-seconds) bound for p >= 0.5 on
    every seed, and the seed-averaged error decreases monotonically in p."""
    timing = SignalTiming(cycle_s=90.0, red_window_n=(0.0, 41.0),
                          red_window_m=(0.0, 41.0))
    lam = 0.25
    total_red = sum(b - a for a, b in timing.common_red_windows(2400.0))
    mean_errors = {}
    for p in (0.1, 0.3, 0.5, 0.9):
        errs = []
        for seed in range(30):
            demand = DemandProfile(lambda_n=lam * 0.4, lambda_m=lam * 0.4,
                                   lambda_nm=lam * 0.2, p=p, alpha=0.5)
            cfg = SimConfig(demand=demand, timing=timing, seed=seed,
                            duration_s=2400.0)
            windows = lambda_windows_from_trace(simulate(cfg))
            lam_hat, _ = estimate_lambda_windows(windows, p)
            errs.append(abs(lam_hat - lam) / lam)
        mean_errors[p] = float(np.mean(errs))
        if p >= 0.5:
            bound = 3.0 / math.sqrt(p * lam * total_red)
            assert max(errs) < bound, (p, max(errs), bound)
    ladder = [mean_errors[p] for p in (0.1, 0.3, 0.5, 0.9)]
    assert all(b < a for a, b in zip(ladder, ladder[1:]))
    _report(8, "rel. errors by p: " + ", ".join(
        f"{p}: {mean_errors[p]:.3f}" for p in (0.1, 0.3, 0.5, 0.9)))


def test_criterion_9_estimator_ordering(ordering_sweep):
    """Across the five bundled scenarios (10 seeds): (a) the conditional
    estimator's MAE at p = 0.9 beats p = 0.05 in every scenario and lane;
    (b) it beats the prior-mean estimator in at least 4 of 5 scenarios at
    each p >= 0.5.  Absolute MAE magnitudes are simulator-specific and not
    compared to any external figures."""
    report = ordering_sweep
    names = ["S1", "S2", "S3", "S4", "S5"]
    for name in names:
        for lane in (Lane.N, Lane.M):
            lo = report.seed_averaged_mae(name, 0.9, "p2", lane)
            hi = report.seed_averaged_mae(name, 0.05, "p2", lane)
            assert lo < hi, (name, lane, lo, hi)
    for p in (0.5, 0.9):
        wins = 0
        for name in names:
            p2 = np.mean([report.seed_averaged_mae(name, p, "p2", lane)
                          for lane in (Lane.N, Lane.M)])
            p1 = np.mean([report.seed_averaged_mae(name, p, "p1", lane)
                          for lane in (Lane.N, Lane.M)])
            wins += p2 <= p1
        assert wins >= 4, (p, wins)
    _report(9, "MAE(P2) improves from p=0.05 to 0.9 in 5/5 scenarios; "
               "beats MAE(P1) in >= 4/5 at p >= 0.5")


def test_criterion_10_trajectory_shape(tmp_path):
    """Symmetric demand, 8 s head start for lane M's green: the assignment
    share sits at 1 on an initial interval then decreases monotonically,
    while the red-time ratio decreases monotonically toward 1.  Checked on
    the emitted trajectory CSV."""
    timing = SignalTiming(cycle_s=90.0, red_window_n=(0.0, 49.0),
                          red_window_m=(8.0, 49.0))
    points = trajectory_alpha_r(timing, 1 / 3, 1 / 3, 1 / 3,
                                horizon=90.0, dt=1.0)
    path = tmp_path / "trajectory.csv"
    write_trajectory_csv(points, path)
    rows = [line.split(",") for line in path.read_text().splitlines()[1:]]
    r_bars = [float(r[3]) for r in rows if r[3] != "inf"]
    alphas = [float(r[4]) for r in rows]
    assert all(b < a for a, b in zip(r_bars, r_bars[1:]))
    assert r_bars[-1] > 1.0 and r_bars[-1] < 1.3
    plateau = [i for i, a in enumerate(alphas) if a == 1.0]
    assert plateau and plateau == list(range(len(plateau)))  # initial block
    tail = alphas[plateau[-1] + 1:]
    assert tail and all(b < a for a, b in zip(tail, tail[1:]))
    _report(10, f"alpha=1 for the first {len(plateau)} samples, then "
                f"strictly decreasing; r_bar ends at {r_bars[-1]:.3f}")


def test_criterion_11_determinism(tmp_path):
    """Identical config + seed reproduces byte-identical trace and report
    CSVs from independent runs."""
    timing = SignalTiming(cycle_s=90.0, red_window_n=(0.0, 41.0),
                          red_window_m=(0.0, 41.0))
    demand = DemandProfile(lambda_n=0.1, lambda_m=0.08, lambda_nm=0.04,
                           p=0.5, alpha=0.5)
    cfg = SimConfig(demand=demand, timing=timing, seed=123, duration_s=450.0)
    for tag in ("a", "b"):
        simulate(cfg).write_trace_csv(tmp_path / f"trace_{tag}.csv")
    assert (tmp_path / "trace_a.csv").read_bytes() == \
        (tmp_path / "trace_b.csv").read_bytes()

    scenarios = bundled_scenarios(p_sweep=(0.5,), seeds=(0,))[:1]
    for tag in ("one", "two"):
        emit_report(run_scenarios(scenarios), tmp_path / tag)
    for name in ("metrics_long.csv", "metrics_lane_n.csv",
                 "metrics_lane_m.csv", "alpha_table.csv"):
        assert (tmp_path / "one" / name).read_bytes() == \
            (tmp_path / "two" / name).read_bytes()
    _report(11, "trace and report CSVs byte-identical across re-runs")
