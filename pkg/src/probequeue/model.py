"""Domain types for a signalized two-lane link observed through probe vehicles.

All types are frozen dataclasses validated at construction, so they can be
shared freely across threads and processes.  The two lanes are called N
(serves right turns) and M (serves left turns); straight-through traffic can
queue on either lane.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import ConfigError, DegenerateDemandError, ParameterError


class Lane(Enum):
    N = "N"
    M = "M"


class Movement(Enum):
    RIGHT = "right"      # forced onto lane N
    LEFT = "left"        # forced onto lane M
    STRAIGHT = "straight"  # may take either lane


@dataclass(frozen=True)
class DemandProfile:
    """Arrival rates of the three movement flows plus probe and assignment shares.

    Rates are vehicles/second.  ``p`` is the probe penetration ratio and
    ``alpha`` the probability that a straight-through vehicle picks lane M.
    Turn ratios are derived properties, never stored, so they cannot drift
    out of normalization.
    """

    lambda_n: float   # right-turn flow, forced to lane N
    lambda_m: float   # left-turn flow, forced to lane M
    lambda_nm: float  # straight flow, lane-flexible
    p: float = 1.0
    alpha: float = 0.5

    def __post_init__(self):
        for name in ("lambda_n", "lambda_m", "lambda_nm"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.total <= 0:
            raise ConfigError("total arrival rate must be positive")
        if not 0.0 <= self.p <= 1.0:
            raise ConfigError(f"p must lie in [0, 1], got {self.p}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in [0, 1], got {self.alpha}")

    @property
    def total(self) -> float:
        return self.lambda_n + self.lambda_m + self.lambda_nm

    @property
    def l_n(self) -> float:
        return self.lambda_n / self.total

    @property
    def l_m(self) -> float:
        return self.lambda_m / self.total

    @property
    def l_nm(self) -> float:
        return self.lambda_nm / self.total

    @property
    def turn_ratios(self) -> tuple[float, float, float]:
        """(l_n, l_m, l_nm); sums to 1 by construction."""
        return (self.l_n, self.l_m, self.l_nm)


@dataclass(frozen=True)
class SignalTiming:
    """Fixed-cycle signal with one red window per lane.

    Windows are half-open ``[start, end)`` intervals inside ``[0, cycle_s)``.
    ``red_elapsed`` returns the time since the current red began (0 during
    green), which is the quantity all estimators consume.
    """

    cycle_s: float
    red_window_n: tuple[float, float]
    red_window_m: tuple[float, float]

    def __post_init__(self):
        if self.cycle_s <= 0:
            raise ConfigError("cycle_s must be positive")
        for lane, (a, b) in (("N", self.red_window_n), ("M", self.red_window_m)):
            if not (0.0 <= a < b <= self.cycle_s):
                raise ConfigError(
                    f"red window for lane {lane} must satisfy 0 <= start < end <= cycle, "
                    f"got [{a}, {b}) with cycle {self.cycle_s}"
                )

    def _window(self, lane: Lane) -> tuple[float, float]:
        return self.red_window_n if lane is Lane.N else self.red_window_m

    @property
    def red_duration_n(self) -> float:
        a, b = self.red_window_n
        return b - a

    @property
    def red_duration_m(self) -> float:
        a, b = self.red_window_m
        return b - a

    @property
    def total_red(self) -> float:
        """Longest per-lane red in one cycle; bounds red_elapsed for both lanes."""
        return max(self.red_duration_n, self.red_duration_m)

    def red_elapsed(self, t: float, lane: Lane) -> float:
        """Seconds since the start of the current red phase; 0 outside red."""
        a, b = self._window(lane)
        phase = t % self.cycle_s
        if a <= phase < b:
            return phase - a
        return 0.0

    def in_red(self, t: float, lane: Lane) -> bool:
        a, b = self._window(lane)
        phase = t % self.cycle_s
        return a <= phase < b

    def red_windows(self, lane: Lane, t_end: float) -> list[tuple[float, float]]:
        """Absolute-time red windows for one lane, clipped to [0, t_end]."""
        a, b = self._window(lane)
        out = []
        k = 0
        while k * self.cycle_s + a < t_end:
            start = k * self.cycle_s + a
            out.append((start, min(k * self.cycle_s + b, t_end)))
            k += 1
        return out

    def common_red_windows(self, t_end: float) -> list[tuple[float, float]]:
        """Intervals where both lanes are red simultaneously, clipped to [0, t_end]."""
        a = max(self.red_window_n[0], self.red_window_m[0])
        b = min(self.red_window_n[1], self.red_window_m[1])
        if a >= b:
            return []
        out = []
        k = 0
        while k * self.cycle_s + a < t_end:
            out.append((k * self.cycle_s + a, min(k * self.cycle_s + b, t_end)))
            k += 1
        return out


@dataclass(frozen=True)
class LinkGeometry:
    """Stop-line geometry and the thresholds that define queue membership.

    A vehicle occupying queue slot k (k = 1 at the stop line) sits at
    distance ``rho_0 + k*l_v + (k-1)*g_v`` from the detector datum.  Vehicles
    with speed below ``v_star`` and distance below ``rho_star`` count as
    queued.
    """

    l_v: float = 5.0          # average vehicle length (m)
    g_v: float = 2.5          # minimum inter-vehicle gap (m)
    rho_0: float = 10.0       # offset from datum to the stop line (m)
    link_length: float = 300.0
    v_star: float = 0.1       # speed threshold for "stopped" (m/s)
    rho_star: float | None = None  # distance threshold; defaults to link_length

    def __post_init__(self):
        if self.rho_star is None:
            object.__setattr__(self, "rho_star", self.link_length)
        if self.l_v <= 0 or self.g_v < 0:
            raise ConfigError("l_v must be > 0 and g_v >= 0")
        if not (0.0 <= self.rho_0 < self.rho_star <= self.link_length):
            raise ConfigError("need 0 <= rho_0 < rho_star <= link_length")
        if self.v_star <= 0:
            raise ConfigError("v_star must be positive")

    def slot_distance(self, k: int) -> float:
        """Distance of queue slot k (1-based) from the datum."""
        if k < 1:
            raise ConfigError(f"slot index must be >= 1, got {k}")
        return self.rho_0 + k * self.l_v + (k - 1) * self.g_v

    @property
    def max_slots(self) -> int:
        """Largest slot index strictly inside the rho_star threshold."""
        k = int(math.floor((self.rho_star - self.rho_0 + self.g_v)
                           / (self.l_v + self.g_v)))
        while k > 0 and self.slot_distance(k) >= self.rho_star:
            k -= 1
        return k


@dataclass(frozen=True)
class VehicleRecord:
    """Snapshot of one vehicle: position is distance-to-stop-line in meters."""

    id: int
    is_probe: bool
    lane: Lane
    movement: Movement
    rho: float
    v: float
    entry_time: float

    def __post_init__(self):
        if self.movement is Movement.RIGHT and self.lane is not Lane.N:
            raise ConfigError("right-turning vehicles are forced onto lane N")
        if self.movement is Movement.LEFT and self.lane is not Lane.M:
            raise ConfigError("left-turning vehicles are forced onto lane M")


@dataclass(frozen=True)
class LinkState:
    """All vehicles on the link at one instant, plus the elapsed reds."""

    time: float
    vehicles: tuple[VehicleRecord, ...]
    r_n: float
    r_m: float

    def queued(self, geometry: LinkGeometry) -> list[VehicleRecord]:
        """Vehicles meeting the queue rule: v < v_star and rho < rho_star."""
        return [v for v in self.vehicles
                if v.v < geometry.v_star and v.rho < geometry.rho_star]

    def queue_lengths(self, geometry: LinkGeometry) -> tuple[int, int]:
        """(lane N, lane M) queue lengths recomputed from the vehicle list."""
        q = self.queued(geometry)
        n = sum(1 for v in q if v.lane is Lane.N)
        return n, len(q) - n


@dataclass(frozen=True)
class ProbeObservation:
    """What the roadside unit can extract at one instant.

    ``l_p`` is the queue position (in vehicles) of the farthest stopped
    probe; absent (None) when no probe is queued.  ``c_p`` counts queued
    probes across both lanes; lane identity is deliberately not exposed.
    ``x_p`` counts probes anywhere on the link, moving or not.
    """

    t: float
    r_n: float
    r_m: float
    c_p: int
    l_p: int | None
    x_p: int

    def __post_init__(self):
        if self.c_p < 0 or self.x_p < 0:
            raise ConfigError("probe counts must be non-negative")
        if self.c_p > 0 and (self.l_p is None or self.l_p < 1):
            raise ConfigError("a queued probe implies l_p >= 1")
        if self.c_p == 0 and self.l_p is not None:
            raise ConfigError("l_p must be absent when no probe is queued")


@dataclass(frozen=True)
class JointQueueDistribution:
    """Probabilities over queue-length pairs (n, m) on a truncated grid.

    ``grid[n, m]`` is P(N=n, M=m); total mass must be 1 up to 1e-9 (the
    prior keeps its exact Poisson values, whose truncation tail is bounded
    at construction).  The array is marked read-only.
    """

    grid: np.ndarray = field(repr=False)  # (n_max+1, n_max+1)
    n_max: int = 0
    mu_n: float = 0.0
    mu_m: float = 0.0

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float)
        if g.shape != (self.n_max + 1, self.n_max + 1):
            raise ConfigError("grid shape must be (n_max+1, n_max+1)")
        if (g < 0).any():
            raise ConfigError("grid entries must be non-negative")
        total = float(g.sum())
        if not (1 - 1e-9 <= total <= 1 + 1e-9):
            raise ConfigError(f"grid mass {total} outside [1-1e-9, 1+1e-9]")
        g = g.copy()
        g.flags.writeable = False
        object.__setattr__(self, "grid", g)

    def expectation(self) -> tuple[float, float]:
        """Marginal means (E N, E M)."""
        idx = np.arange(self.n_max + 1, dtype=float)
        e_n = float(idx @ self.grid.sum(axis=1))
        e_m = float(idx @ self.grid.sum(axis=0))
        return e_n, e_m

    def to_dict(self) -> dict:
        return {
            "mu_n": self.mu_n,
            "mu_m": self.mu_m,
            "n_max": self.n_max,
            "grid": [[float(x) for x in row] for row in self.grid],
        }

    def write_csv(self, path) -> None:
        """Matrix layout: row index n, column index m."""
        header = ",".join(["n\\m"] + [str(m) for m in range(self.n_max + 1)])
        rows = [header]
        for n in range(self.n_max + 1):
            rows.append(",".join([str(n)] + [f"{x:.17g}" for x in self.grid[n]]))
        with open(path, "w") as fh:
            fh.write("\n".join(rows) + "\n")


def mu_rates(demand: DemandProfile, r_n: float, r_m: float) -> tuple[float, float]:
    """Expected per-lane queue accumulations after elapsed reds (r_n, r_m).

    Lane N collects the right-turn flow plus the (1-alpha) share of the
    straight flow; lane M the left-turn flow plus the alpha share.
    """
    if r_n < 0 or r_m < 0:
        raise ParameterError("elapsed red times must be >= 0")
    mu_n = r_n * (demand.lambda_n + (1.0 - demand.alpha) * demand.lambda_nm)
    mu_m = r_m * (demand.lambda_m + demand.alpha * demand.lambda_nm)
    return mu_n, mu_m


def kappa(demand: DemandProfile, r_n: float, r_m: float) -> float:
    """Asymmetry ratio min(mu)/max(mu) of the two expected accumulations.

    Scale-free in the total arrival rate: only turn ratios, alpha and the
    two elapsed reds matter.  Raises when both accumulations are zero.
    """
    mu_n, mu_m = mu_rates(demand, r_n, r_m)
    hi = max(mu_n, mu_m)
    if hi == 0.0:
        raise DegenerateDemandError(
            "both expected accumulations are zero; min/max ratio undefined"
        )
    return min(mu_n, mu_m) / hi
