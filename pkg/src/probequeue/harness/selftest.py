"""Monte Carlo self-checks runnable from the CLI.

Each check prints one PASS/FAIL line; the command exits nonzero if any
check fails.  ``--full`` switches to acceptance-scale sample sizes.
"""

from __future__ import annotations

import numpy as np

from .. import mc
from ..bayes import PosteriorInput, default_n_max, posterior_joint
from ..control import alpha_star, imbalance_f, in_interval_I, r_star, BalanceInput
from ..estimators import estimate_p_one_lane, estimate_p_two_lane

_checks: list[tuple[str, bool, str]] = []


def _record(name: str, ok: bool, detail: str = "") -> None:
    _checks.append((name, ok, detail))
    print(f"{'PASS' if ok else 'FAIL'} {name}" + (f" ({detail})" if detail else ""))


def _spot_check(vals, c_p, l_p, estimator, rng) -> bool:
    """The vectorized values must match the scalar estimator exactly."""
    idx = rng.choice(vals.size, size=min(100, vals.size), replace=False)
    return all(estimator(int(c_p[i]), int(l_p[i])).raw == vals[i] for i in idx)


def _check_one_lane_unbiased(size: int, rng) -> None:
    for p in (0.2, 0.5, 0.9):
        s = mc.sample_one_lane_observations(mu=12.0, p=p, size=size, rng=rng)
        mask = s.l_p > 1
        c_p, l_p = s.c_p[mask], s.l_p[mask]
        vals = (c_p - 1) / (l_p - 1)
        ok = _spot_check(vals, c_p, l_p, estimate_p_one_lane, rng)
        err = abs(vals.mean() - p)
        bound = 3 * vals.std(ddof=1) / np.sqrt(vals.size)
        _record(f"one-lane penetration unbiased at p={p}", ok and err < bound,
                f"|bias|={err:.2e} < {bound:.2e}")


def _check_two_lane_unbiased(size: int, rng) -> None:
    for kappa in (0.5, 1.0):
        for p in (0.2, 0.5, 0.9):
            l_p, c_p = mc.sample_balanced_placement(p, kappa, size, rng)
            mask = (l_p > 1) & (c_p > 1)
            c_p, l_p = c_p[mask], l_p[mask]
            vals = (c_p / (1.0 + kappa) - 1.0) / (l_p - 1)
            ok = _spot_check(
                vals, c_p, l_p,
                lambda c, l: estimate_p_two_lane(c, l, kappa), rng)
            err = abs(vals.mean() - p)
            bound = 3 * vals.std(ddof=1) / np.sqrt(vals.size)
            _record(
                f"two-lane penetration unbiased at p={p}, kappa={kappa}",
                ok and err < bound, f"|bias|={err:.2e} < {bound:.2e}")


def _check_posterior_oracle(size: int, rng) -> None:
    mu_n, mu_m, p = 2.0, 2.0, 0.5
    sample = mc.sample_two_lane_observations(mu_n, mu_m, p, size, rng)
    n_max = default_n_max(mu_n, mu_m, 2)
    counts, total = mc.empirical_joint(sample, l_p=2, c_p=2, n_max=n_max)
    post = posterior_joint(PosteriorInput(mu_n=mu_n, mu_m=mu_m, p=p,
                                          l_p=2, c_p=2, n_max=n_max))
    expected = post.grid * total
    cells = expected >= 50
    emp = counts / total
    se = np.sqrt(post.grid * (1 - post.grid) / total)
    bad = int((np.abs(emp - post.grid)[cells] > 3 * se[cells]).sum())
    _record("posterior grid matches generative draws (mu=2,2 p=0.5)",
            bad == 0, f"{bad} of {int(cells.sum())} cells off by >3 SE")


def _check_control_identities(rng) -> None:
    worst_r, worst_a = 0.0, 0.0
    for _ in range(1000):
        raw = rng.dirichlet([1.0, 1.0, 1.0])
        l_n, l_m, l_nm = float(raw[0]), float(raw[1]), float(raw[2])
        alpha = float(rng.uniform(0, 1))
        rs = r_star(alpha, l_n, l_m, l_nm)
        worst_r = max(worst_r, imbalance_f(BalanceInput(
            l_n=l_n, l_m=l_m, l_nm=l_nm, alpha=alpha, r_bar=rs)))
        lo = max(1e-6, l_m / (l_n + l_nm))
        hi = min((l_m + l_nm) / max(l_n, 1e-9), lo + 20.0)
        r_bar = float(rng.uniform(lo, hi))
        if in_interval_I(r_bar, l_n, l_m, l_nm):
            a = alpha_star(r_bar, l_n, l_m, l_nm)
            worst_a = max(worst_a, imbalance_f(BalanceInput(
                l_n=l_n, l_m=l_m, l_nm=l_nm, alpha=a, r_bar=r_bar)))
    _record("imbalance vanishes at r_star(alpha)", worst_r < 1e-12,
            f"worst={worst_r:.2e}")
    _record("imbalance vanishes at alpha_star(r_bar) inside I", worst_a < 1e-12,
            f"worst={worst_a:.2e}")


def run(full: bool = False) -> int:
    _checks.clear()
    rng = np.random.default_rng(20240817)
    pen_size = 100_000 if full else 20_000
    post_size = 1_000_000 if full else 200_000
    _check_one_lane_unbiased(pen_size, rng)
    _check_two_lane_unbiased(pen_size, rng)
    _check_posterior_oracle(post_size, rng)
    _check_control_identities(rng)
    failed = [name for name, ok, _ in _checks if not ok]
    print(f"{len(_checks) - len(failed)}/{len(_checks)} checks passed")
    return 1 if failed else 0
