"""Primary-parameter estimators from probe observations.

Everything here is a pure function of the observation: last-probe queue
position, penetration ratio (one- and two-lane forms), arrival rate, and
turn ratios.  Penetration estimates are clamped into [0, 1] but keep the
raw value for diagnostics; observations too thin to use yield
``usable=False`` rather than raising.
"""

from __future__ import annotations

import math
from collections.abc import Iterable, Mapping
from dataclasses import dataclass

from .errors import ParameterError
from .model import LinkGeometry, Movement


@dataclass(frozen=True)
class PenetrationEstimate:
    p_hat: float      # clamped into [0, 1]; meaningful only when usable
    usable: bool
    raw: float        # unclamped formula value (nan when not usable)


@dataclass(frozen=True)
class TurnRatioEstimate:
    l_n_hat: float
    l_m_hat: float
    l_nm_hat: float
    sample_count: int

    @property
    def usable(self) -> bool:
        return self.sample_count > 0


def _round_half_away(x: float) -> int:
    """Round to nearest integer, ties away from zero (not banker's)."""
    return int(math.floor(x + 0.5)) if x >= 0 else -int(math.floor(-x + 0.5))


def last_probe_location(max_probe_rho: float, geometry: LinkGeometry) -> int:
    """Queue position, in vehicles, of the farthest stopped probe.

    Inverts the slot-distance relation: a probe at slot k sits at
    rho_0 + k*l_v + (k-1)*g_v, so k = round((rho - rho_0 + g_v)/(l_v + g_v)).
    Noisy positions just below the first slot round to 0; those are clamped
    to 1 because a stopped probe occupies at least the stop-line slot.
    """
    if max_probe_rho < geometry.rho_0:
        raise ParameterError(
            f"probe distance {max_probe_rho} is inside the stop-line offset {geometry.rho_0}"
        )
    k = _round_half_away((max_probe_rho - geometry.rho_0 + geometry.g_v)
                         / (geometry.l_v + geometry.g_v))
    return max(k, 1)


def estimate_p_one_lane(c_p: int, l_p: int | None) -> PenetrationEstimate:
    """Penetration ratio from a single-lane queue observation.

    p_hat = (c_p - 1)/(l_p - 1).  Needs l_p > 1 and at least one probe;
    otherwise the estimate is flagged unusable.
    """
    if l_p is None or l_p <= 1 or c_p < 1:
        return PenetrationEstimate(p_hat=math.nan, usable=False, raw=math.nan)
    raw = (c_p - 1) / (l_p - 1)
    return PenetrationEstimate(p_hat=min(max(raw, 0.0), 1.0), usable=True, raw=raw)


def estimate_p_two_lane(c_p: int, l_p: int | None, kappa: float) -> PenetrationEstimate:
    """Penetration ratio when probes from two lanes are counted together.

    The probe count is first rescaled by 1/(1 + kappa) — kappa being the
    min/max ratio of the two expected lane accumulations — to make it
    comparable with a single-lane count, then the one-lane formula applies:
    p_hat = (c_p/(1+kappa) - 1)/(l_p - 1).  Needs l_p > 1 and c_p > 1.
    At kappa = 0 this reduces exactly to the one-lane estimator.
    """
    if not 0.0 <= kappa <= 1.0:
        raise ParameterError(f"kappa must lie in [0, 1], got {kappa}")
    if l_p is None or l_p <= 1 or c_p <= 1:
        return PenetrationEstimate(p_hat=math.nan, usable=False, raw=math.nan)
    raw = (c_p / (1.0 + kappa) - 1.0) / (l_p - 1)
    return PenetrationEstimate(p_hat=min(max(raw, 0.0), 1.0), usable=True, raw=raw)


def estimate_lambda(x_p_t1: int, x_p_t0: int, p: float, t0: float, t1: float) -> float:
    """Total arrival rate from the growth of the on-link probe count.

    lambda_hat = (x_p(t1) - x_p(t0)) / (p * (t1 - t0)).  Valid only over an
    interval where every lane is red, so no vehicle leaves the link.
    """
    if p <= 0:
        raise ParameterError("p must be positive to rescale probe counts")
    if t1 <= t0:
        raise ParameterError(f"need t1 > t0, got [{t0}, {t1}]")
    return (x_p_t1 - x_p_t0) / (p * (t1 - t0))


def estimate_lambda_windows(
    windows: Iterable[tuple[int, int, float, float]], p: float
) -> tuple[float, list[float]]:
    """Arrival rate accumulated over several all-red windows.

    ``windows`` holds (x_p at start, x_p at end, t_start, t_end) tuples.
    Returns the pooled estimate sum(dx)/(p*sum(dt)) — lower variance than
    any single window — together with the per-window estimates.
    """
    if p <= 0:
        raise ParameterError("p must be positive to rescale probe counts")
    dx_total = 0.0
    dt_total = 0.0
    per_window = []
    for x0, x1, t0, t1 in windows:
        per_window.append(estimate_lambda(x1, x0, p, t0, t1))
        dx_total += x1 - x0
        dt_total += t1 - t0
    if dt_total <= 0:
        raise ParameterError("no usable red window supplied")
    return dx_total / (p * dt_total), per_window


def estimate_turn_ratios(
    probe_ids: Iterable[int], exit_movements: Mapping[int, Movement]
) -> TurnRatioEstimate:
    """Turn ratios from re-identifying probes downstream of the junction.

    Each probe seen on the entry link and later on an outgoing link is
    classified by its exit movement; ratios are the classified counts
    normalized by their total.  With zero classified probes the estimate is
    unusable (sample_count = 0, ratios nan).
    """
    counts = {Movement.RIGHT: 0, Movement.LEFT: 0, Movement.STRAIGHT: 0}
    for pid in probe_ids:
        mv = exit_movements.get(pid)
        if mv is not None:
            counts[mv] += 1
    total = sum(counts.values())
    if total == 0:
        return TurnRatioEstimate(math.nan, math.nan, math.nan, 0)
    return TurnRatioEstimate(
        l_n_hat=counts[Movement.RIGHT] / total,
        l_m_hat=counts[Movement.LEFT] / total,
        l_nm_hat=counts[Movement.STRAIGHT] / total,
        sample_count=total,
    )
