"""Queue-balancing control laws.

The imbalance functional compares the two expected lane accumulations for a
given straight-flow assignment share ``alpha`` and red-time ratio
``r_bar = r_N / r_M``.  Balancing can be achieved from either side: pick the
red ratio ``r_star(alpha)`` for a given assignment, or pick the assignment
``alpha_star(r_bar)`` for a given red ratio.  Perfect balance through
assignment alone is only possible while ``r_bar`` stays inside the
feasibility interval I.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DegenerateDemandError, NoCommonFlowError, ParameterError
from .model import Lane, SignalTiming

_RATIO_SUM_TOL = 1e-9


def _check_ratios(l_n: float, l_m: float, l_nm: float) -> None:
    if min(l_n, l_m, l_nm) < 0:
        raise ParameterError("turn ratios must be >= 0")
    if abs(l_n + l_m + l_nm - 1.0) > _RATIO_SUM_TOL:
        raise ParameterError(
            f"turn ratios must sum to 1, got {l_n + l_m + l_nm}"
        )


@dataclass(frozen=True)
class BalanceInput:
    """Turn ratios plus the two control variables."""

    l_n: float
    l_m: float
    l_nm: float
    alpha: float
    r_bar: float  # r_N / r_M; may be math.inf when lane M has no red yet

    def __post_init__(self):
        _check_ratios(self.l_n, self.l_m, self.l_nm)
        if not 0.0 <= self.alpha <= 1.0:
            raise ParameterError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.r_bar < 0:
            raise ParameterError(f"r_bar must be >= 0, got {self.r_bar}")


def imbalance_f(inp: BalanceInput) -> float:
    """Relative queue imbalance |E N - E M| / E N.

    Evaluates |r_bar*(l_n + (1-alpha)*l_nm) - (l_m + alpha*l_nm)| divided by
    the first term.  Zero means the two queues grow at identical expected
    rates.
    """
    rate_n = inp.l_n + (1.0 - inp.alpha) * inp.l_nm
    rate_m = inp.l_m + inp.alpha * inp.l_nm
    denom = inp.r_bar * rate_n
    if denom == 0.0 or math.isinf(inp.r_bar):
        raise DegenerateDemandError(
            "imbalance undefined: lane N accumulates nothing (or r_bar is infinite)"
        )
    return abs(denom - rate_m) / denom


def r_star(alpha: float, l_n: float, l_m: float, l_nm: float) -> float:
    """Red-time ratio that balances the queues for a given assignment share.

    r_star = (l_m + alpha*l_nm) / (l_n + (1-alpha)*l_nm); plugging it back
    into the imbalance gives zero.
    """
    _check_ratios(l_n, l_m, l_nm)
    if not 0.0 <= alpha <= 1.0:
        raise ParameterError(f"alpha must lie in [0, 1], got {alpha}")
    denom = l_n + (1.0 - alpha) * l_nm
    if denom == 0.0:
        raise DegenerateDemandError(
            "all demand is forced onto lane M; no red ratio can balance"
        )
    return (l_m + alpha * l_nm) / denom


def alpha_star(r_bar: float, l_n: float, l_m: float, l_nm: float) -> float:
    """Assignment share that best balances the queues at a given red ratio.

    The unconstrained minimizer (r_bar*l_n + r_bar*l_nm - l_m) /
    (l_nm*(r_bar + 1)) is clamped into [0, 1].  Inside the feasibility
    interval the clamp is inactive and the imbalance vanishes.  An infinite
    r_bar (lane M not yet red) is handled as the limit, which clamps to 1.
    """
    _check_ratios(l_n, l_m, l_nm)
    if l_nm == 0.0:
        raise NoCommonFlowError("no lane-flexible flow; assignment is meaningless")
    if r_bar < 0:
        raise ParameterError(f"r_bar must be >= 0, got {r_bar}")
    if math.isinf(r_bar):
        raw = (l_n + l_nm) / l_nm  # limit of the fraction as r_bar grows
    else:
        raw = (r_bar * l_n + r_bar * l_nm - l_m) / (l_nm * (r_bar + 1.0))
    return min(max(raw, 0.0), 1.0)


def interval_I(l_n: float, l_m: float, l_nm: float) -> tuple[float, float]:
    """Red-ratio interval over which assignment alone can balance the queues.

    [l_m/(l_n + l_nm), (l_m + l_nm)/l_n]; the right endpoint is +inf when
    nothing is forced onto lane N.  Widens as the lane-flexible share grows.
    """
    _check_ratios(l_n, l_m, l_nm)
    lo = l_m / (l_n + l_nm) if (l_n + l_nm) > 0 else math.inf
    hi = (l_m + l_nm) / l_n if l_n > 0 else math.inf
    return (lo, hi)


def in_interval_I(r_bar: float, l_n: float, l_m: float, l_nm: float) -> bool:
    lo, hi = interval_I(l_n, l_m, l_nm)
    return lo <= r_bar <= hi


@dataclass(frozen=True)
class TrajectoryPoint:
    t: float
    r_n: float
    r_m: float
    r_bar: float   # math.inf while lane M has no elapsed red
    alpha: float


def trajectory_alpha_r(
    timing: SignalTiming,
    l_n: float,
    l_m: float,
    l_nm: float,
    horizon: float,
    dt: float,
) -> list[TrajectoryPoint]:
    """Sampled (r_bar(t), alpha_star(r_bar(t))) series over [0, horizon].

    Instants where neither lane is red are skipped (no queues form, so the
    assignment question does not arise).  Instants where only lane N is red
    are emitted with the r_bar = +inf convention and alpha_star = 1; with
    only lane M red, r_bar = 0.
    """
    if horizon <= 0 or dt <= 0:
        raise ParameterError("horizon and dt must be positive")
    _check_ratios(l_n, l_m, l_nm)
    points = []
    steps = int(math.floor(horizon / dt + 1e-9))
    for i in range(steps + 1):
        t = i * dt
        r_n = timing.red_elapsed(t, Lane.N)
        r_m = timing.red_elapsed(t, Lane.M)
        if r_n == 0.0 and r_m == 0.0:
            continue
        r_bar = math.inf if r_m == 0.0 else r_n / r_m
        points.append(TrajectoryPoint(
            t=t, r_n=r_n, r_m=r_m, r_bar=r_bar,
            alpha=alpha_star(r_bar, l_n, l_m, l_nm),
        ))
    return points


def write_trajectory_csv(points: list[TrajectoryPoint], path) -> None:
    """Columns: t, r_N, r_M, r_bar, alpha_star (r_bar printed as inf when infinite)."""
    rows = ["t,r_N,r_M,r_bar,alpha_star"]
    for pt in points:
        rbar = "inf" if math.isinf(pt.r_bar) else f"{pt.r_bar:.12g}"
        rows.append(f"{pt.t:.12g},{pt.r_n:.12g},{pt.r_m:.12g},{rbar},{pt.alpha:.12g}")
    with open(path, "w") as fh:
        fh.write("\n".join(rows) + "\n")
