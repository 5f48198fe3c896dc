"""Generative Monte Carlo samplers used to validate estimators and the
probe-conditioned joint law.

These samplers never evaluate the closed-form probabilities they are used
to check: they draw queue lengths, flag each queued vehicle as a probe
independently, and read the observation (last-probe position, probe count)
off the realized configuration.  That keeps them usable as independent
oracles in the test suite and in the ``selftest`` CLI command.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_BATCH = 250_000


@dataclass
class ObservationSample:
    """Vectorized draws; all arrays share one length."""

    n: np.ndarray        # lane N queue length
    m: np.ndarray        # lane M queue length
    l_p: np.ndarray      # last-probe position (0 when no probe queued)
    c_p: np.ndarray      # probes queued across both lanes
    retained: np.ndarray  # bool, see sample_two_lane_observations


def _lane_flags(lengths: np.ndarray, p: float, rng) -> np.ndarray:
    size = lengths.shape[0]
    width = int(lengths.max(initial=0))
    if width == 0:
        return np.zeros((size, 0), dtype=bool)
    flags = rng.random((size, width)) < p
    flags &= np.arange(width)[None, :] < lengths[:, None]
    return flags


def _top_position(flags: np.ndarray) -> np.ndarray:
    """1-based position of the farthest probe per row; 0 when none."""
    if flags.shape[1] == 0:
        return np.zeros(flags.shape[0], dtype=np.int64)
    return (flags * np.arange(1, flags.shape[1] + 1)[None, :]).max(axis=1)


def sample_one_lane_observations(mu: float, p: float, size: int, rng
                                 ) -> ObservationSample:
    """Single-lane queues: n ~ Poisson(mu), each vehicle a probe w.p. p."""
    ns, ls, cs = [], [], []
    remaining = size
    while remaining > 0:
        batch = min(remaining, _BATCH)
        n = rng.poisson(mu, batch)
        flags = _lane_flags(n, p, rng)
        ns.append(n)
        ls.append(_top_position(flags))
        cs.append(flags.sum(axis=1))
        remaining -= batch
    n = np.concatenate(ns)
    l_p = np.concatenate(ls)
    c_p = np.concatenate(cs)
    return ObservationSample(n=n, m=np.zeros_like(n), l_p=l_p, c_p=c_p,
                             retained=c_p > 0)


def sample_two_lane_observations(mu_n: float, mu_m: float, p: float,
                                 size: int, rng) -> ObservationSample:
    """Two-lane queues with the pooled observation (l_p, c_p).

    Queue lengths are independent Poisson draws; every queued vehicle is a
    probe independently with probability p.  ``l_p`` is the distance index
    of the farthest probe over both lanes.  A draw is ``retained`` when the
    canonical slot at that index — lane N's slot whenever lane N is long
    enough to have one, otherwise lane M's — actually holds a probe.  The
    retained sample realizes exactly the placement law the conditional grid
    assumes: the last probe in a designated slot, the remaining c_p - 1
    probes uniform over the l_p - 1 + min(l_p, n, m) slots at no greater
    distance.
    """
    fields = {k: [] for k in ("n", "m", "l_p", "c_p", "retained")}
    remaining = size
    while remaining > 0:
        batch = min(remaining, _BATCH)
        n = rng.poisson(mu_n, batch)
        m = rng.poisson(mu_m, batch)
        flags_n = _lane_flags(n, p, rng)
        flags_m = _lane_flags(m, p, rng)
        top_n = _top_position(flags_n)
        top_m = _top_position(flags_m)
        l_p = np.maximum(top_n, top_m)
        c_p = flags_n.sum(axis=1) + flags_m.sum(axis=1)
        retained = (c_p > 0) & ((top_n == l_p) | (l_p > n))
        fields["n"].append(n)
        fields["m"].append(m)
        fields["l_p"].append(l_p)
        fields["c_p"].append(c_p)
        fields["retained"].append(retained)
        remaining -= batch
    return ObservationSample(**{k: np.concatenate(v) for k, v in fields.items()})


def sample_balanced_placement(p: float, kappa: float, size: int, rng,
                              lp_low: int = 25, lp_high: int = 60
                              ) -> tuple[np.ndarray, np.ndarray]:
    """Observations from the balanced-backlog placement law.

    Given a last-probe position l_p, the shorter queue is taken at its
    balanced size kappa * (l_p + (1-p)/p) — the longer queue's estimate
    scaled by the accumulation ratio — so the c_p - 1 trailing probes are
    binomial over l_p - 1 + that many slots.  Fractional slot counts are
    realized by randomized rounding, keeping the expected count exact.
    Returns (l_p, c_p) arrays.
    """
    l_p = rng.integers(lp_low, lp_high + 1, size=size)
    target = kappa * (l_p + (1.0 - p) / p)
    base = np.floor(target).astype(np.int64)
    extra = rng.random(size) < (target - base)
    n_x = l_p - 1 + base + extra
    c_p = 1 + rng.binomial(n_x, p)
    return l_p, c_p


def empirical_joint(sample: ObservationSample, l_p: int, c_p: int,
                    n_max: int) -> tuple[np.ndarray, int]:
    """Histogram of (n, m) among retained draws matching (l_p, c_p).

    Returns (counts grid of shape (n_max+1, n_max+1), number of matches);
    draws with queue lengths beyond n_max are dropped from the grid.
    """
    mask = sample.retained & (sample.l_p == l_p) & (sample.c_p == c_p)
    n = sample.n[mask]
    m = sample.m[mask]
    total = int(mask.sum())
    keep = (n <= n_max) & (m <= n_max)
    counts = np.zeros((n_max + 1, n_max + 1), dtype=np.int64)
    np.add.at(counts, (n[keep], m[keep]), 1)
    return counts, total
