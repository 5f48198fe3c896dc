"""Joint queue-length distributions for the two lanes.

Three layers:

* the unconditional prior — a product of two Poisson laws whose means are
  the expected per-lane accumulations since red start;
* the posterior given the probe observation (last-probe position ``l_p``
  and pooled probe count ``c_p``), supported on
  ``{max(n, m) >= l_p and n + m >= c_p}``;
* point estimators derived from either (marginal expectations, the prior
  means themselves, and the l_p-anchored pair).

All probability evaluation happens in log space: the placement coefficient
C(l_p - 1 + min(l_p, n, m), c_p - 1) overflows 64-bit integers long before
queues become physically implausible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, logsumexp, xlogy

from .errors import InfeasibleObservationError, ParameterError, TruncationError
from .model import JointQueueDistribution

_TAIL_BOUND = 1e-12


def default_n_max(mu_n: float, mu_m: float, l_p: int = 0) -> int:
    """Grid bound leaving < 1e-12 prior tail: mean + 10 sigma + slack.

    The posterior support starts at l_p, so the bound also covers it.
    """
    mu = mu_n + mu_m
    return int(max(l_p, math.ceil(mu)) + math.ceil(10.0 * math.sqrt(mu)) + 10)


def _log_poisson_pmf(mu: float, count: np.ndarray) -> np.ndarray:
    """log Poisson(mu) pmf over an integer vector; exact at mu = 0."""
    if mu < 0:
        raise ParameterError("Poisson mean must be >= 0")
    if mu == 0.0:
        out = np.full(count.shape, -np.inf)
        out[count == 0] = 0.0
        return out
    return xlogy(count, mu) - mu - gammaln(count + 1.0)


def _log_choose(n: np.ndarray, k: float) -> np.ndarray:
    """log C(n, k) elementwise; -inf where k > n."""
    n = np.asarray(n, dtype=float)
    out = gammaln(n + 1.0) - gammaln(k + 1.0) - gammaln(n - k + 1.0)
    return np.where(n >= k, out, -np.inf)


def prior_joint(mu_n: float, mu_m: float, n_max: int) -> JointQueueDistribution:
    """Product-Poisson law of the two queue lengths on a truncated grid.

    Entries are the exact (untruncated) probabilities; construction fails
    if the mass left outside the grid exceeds 1e-12.
    """
    if mu_n < 0 or mu_m < 0:
        raise ParameterError("expected accumulations must be >= 0")
    idx = np.arange(n_max + 1)
    log_n = _log_poisson_pmf(mu_n, idx)
    log_m = _log_poisson_pmf(mu_m, idx)
    grid = np.exp(log_n[:, None] + log_m[None, :])
    tail = 1.0 - float(grid.sum())
    if tail > _TAIL_BOUND:
        raise TruncationError(
            f"n_max={n_max} leaves tail mass {tail:.3e} > {_TAIL_BOUND:.0e} "
            f"for mu=({mu_n}, {mu_m})"
        )
    return JointQueueDistribution(grid=grid, n_max=n_max, mu_n=mu_n, mu_m=mu_m)


def placement_probability(l_p: int, c_p: int, n: int, m: int) -> float:
    """P(last probe at position l_p | c_p probes among n + m queued vehicles).

    The c_p - 1 probes behind the last one occupy positions drawn from the
    l_p - 1 slots behind it in its own lane plus the min(l_p, n, m) slots at
    no greater distance in the other lane; the denominator counts all
    placements of c_p probes among n + m slots.
    """
    if l_p < 1 or c_p < 1:
        raise ParameterError("need l_p >= 1 and c_p >= 1")
    if c_p > n + m or l_p > max(n, m):
        return 0.0
    avail = l_p - 1 + min(l_p, n, m)
    if c_p - 1 > avail:
        return 0.0
    log_p = (_log_choose(np.array(avail), c_p - 1)
             - _log_choose(np.array(n + m), c_p))
    return float(np.exp(log_p))


@dataclass(frozen=True)
class PosteriorInput:
    """Conditioning data for the probe-informed joint law."""

    mu_n: float
    mu_m: float
    p: float
    l_p: int
    c_p: int
    n_max: int

    def __post_init__(self):
        if not 0.0 < self.p <= 1.0:
            raise ParameterError(f"p must lie in (0, 1], got {self.p}")
        if self.l_p < 1:
            raise ParameterError(f"l_p must be >= 1, got {self.l_p}")
        if self.c_p < 1:
            raise ParameterError(f"c_p must be >= 1, got {self.c_p}")
        if self.n_max < self.l_p:
            raise ParameterError("n_max must cover the last-probe position")
        if self.n_max < math.ceil(self.mu_n + self.mu_m):
            raise ParameterError("n_max must cover the prior mean")


def posterior_joint(inp: PosteriorInput) -> JointQueueDistribution:
    """Joint law of (N, M) given the probe observation (l_p, c_p).

    Cell weight on the support {max(n, m) >= l_p, n + m >= c_p}:

        C(l_p - 1 + min(l_p, n, m), c_p - 1) * p^c_p (1-p)^(n+m-c_p) * prior(n, m)

    normalized over the same support; zero elsewhere.  At p = 1 the
    no-unequipped-vehicles convention 0^0 = 1 concentrates the mass on
    {n + m = c_p, max(n, m) >= l_p}.
    """
    idx = np.arange(inp.n_max + 1)
    log_prior = (_log_poisson_pmf(inp.mu_n, idx)[:, None]
                 + _log_poisson_pmf(inp.mu_m, idx)[None, :])
    n_grid, m_grid = np.meshgrid(idx, idx, indexing="ij")

    support = (np.maximum(n_grid, m_grid) >= inp.l_p) & (n_grid + m_grid >= inp.c_p)
    avail = inp.l_p - 1 + np.minimum(inp.l_p, np.minimum(n_grid, m_grid))
    log_w = _log_choose(avail, inp.c_p - 1) + log_prior
    if inp.p == 1.0:
        log_w = np.where(n_grid + m_grid == inp.c_p, log_w, -np.inf)
    else:
        log_w = log_w + inp.c_p * math.log(inp.p) \
            + (n_grid + m_grid - inp.c_p) * math.log1p(-inp.p)
    log_w = np.where(support, log_w, -np.inf)

    total = logsumexp(log_w)
    if not np.isfinite(total):
        raise InfeasibleObservationError(
            f"observation (l_p={inp.l_p}, c_p={inp.c_p}) has zero probability "
            f"on the grid (n_max={inp.n_max}, p={inp.p})"
        )
    grid = np.exp(log_w - total)
    grid[~support] = 0.0
    return JointQueueDistribution(grid=grid, n_max=inp.n_max,
                                  mu_n=inp.mu_n, mu_m=inp.mu_m)


def posterior_no_probes(mu_n: float, mu_m: float, p: float, n_max: int
                        ) -> JointQueueDistribution:
    """Joint law given that no probe is queued (c_p = 0, l_p absent).

    Seeing zero probes is itself evidence of short queues: each of the n + m
    vehicles is unequipped with probability 1 - p, so the prior is reweighted
    by (1-p)^(n+m).  This is the degenerate companion of ``posterior_joint``
    used when an observation instant has no probe in either queue.
    """
    if not 0.0 < p <= 1.0:
        raise ParameterError(f"p must lie in (0, 1], got {p}")
    idx = np.arange(n_max + 1)
    log_prior = (_log_poisson_pmf(mu_n, idx)[:, None]
                 + _log_poisson_pmf(mu_m, idx)[None, :])
    n_grid, m_grid = np.meshgrid(idx, idx, indexing="ij")
    if p == 1.0:
        log_w = np.where(n_grid + m_grid == 0, log_prior, -np.inf)
    else:
        log_w = log_prior + (n_grid + m_grid) * math.log1p(-p)
    grid = np.exp(log_w - logsumexp(log_w))
    return JointQueueDistribution(grid=grid, n_max=n_max, mu_n=mu_n, mu_m=mu_m)


def expected_queue_lengths(dist: JointQueueDistribution) -> tuple[float, float]:
    """Marginal means (E N, E M) of a normalized joint distribution."""
    return dist.expectation()


def prior_point_estimate(mu_n: float, mu_m: float) -> tuple[float, float]:
    """Baseline estimator: the prior means themselves."""
    return (mu_n, mu_m)


def lp_point_estimate(l_p: int, kappa: float) -> tuple[float, float]:
    """Anchor the longer queue at the last-probe position.

    Returns (max_hat, min_hat) = (l_p, kappa * l_p); callers map max/min
    onto the physical lanes via whichever expected accumulation is larger.
    """
    if l_p < 1:
        raise ParameterError(f"l_p must be >= 1, got {l_p}")
    if not 0.0 <= kappa <= 1.0:
        raise ParameterError(f"kappa must lie in [0, 1], got {kappa}")
    return (float(l_p), kappa * l_p)
