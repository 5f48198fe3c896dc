"""Discrete-event ground-truth generator for one signalized two-lane link.

Poisson arrivals of three movement flows, lane assignment at entry,
slot-based queue formation during red, deterministic saturation discharge
during green, independent probe tagging.  Everything is driven by one seed,
so identical config + seed reproduces a bit-identical trace.

Two arrival modes:

* ``AT_QUEUE`` (default): vehicles materialize at the back of their queue at
  their exact Poisson arrival instant.  This matches the estimation model,
  where the expected queue growth during red is exactly rate x elapsed red,
  and makes the end-of-red queue pair exactly product-Poisson.
* ``AT_ENTRANCE``: vehicles enter at the upstream end and travel at free-flow
  speed until they reach the back-of-queue slot for their lane (then stop),
  adding a realistic approach delay the estimators do not model.

Kinematics are deliberately slot-based with instantaneous stops: the
estimators consume only queue counts and the last-probe distance, both of
which the slot model represents exactly, so car-following noise would only
blur the intended comparisons.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import control
from .errors import ConfigError, ParameterError
from .estimators import last_probe_location
from .model import (
    DemandProfile,
    Lane,
    LinkGeometry,
    LinkState,
    Movement,
    ProbeObservation,
    SignalTiming,
    VehicleRecord,
)


class AssignmentPolicy(Enum):
    BERNOULLI_ALPHA = "bernoulli_alpha"
    SHORTEST_QUEUE = "shortest_queue"
    # Straight vehicles drawn Bernoulli(alpha_star(r_bar(t))): the closed-loop
    # realization of the balancing law.
    ALPHA_STAR_FEEDBACK = "alpha_star_feedback"


class ArrivalMode(Enum):
    AT_QUEUE = "at_queue"
    AT_ENTRANCE = "at_entrance"


@dataclass(frozen=True)
class SimConfig:
    demand: DemandProfile
    timing: SignalTiming
    geometry: LinkGeometry = field(default_factory=LinkGeometry)
    seed: int = 0
    duration_s: float = 1200.0
    assignment_policy: AssignmentPolicy = AssignmentPolicy.BERNOULLI_ALPHA
    free_flow_speed: float = 13.9     # m/s, only used in AT_ENTRANCE mode
    saturation_headway: float = 2.0   # s per vehicle discharged during green
    arrival_mode: ArrivalMode = ArrivalMode.AT_QUEUE
    sample_period_s: float | None = 1.0  # None: emit only end-of-red rows
    dt: float = 0.1                   # step size, AT_ENTRANCE mode only
    keep_states: bool = False         # retain full LinkState snapshots

    def __post_init__(self):
        if self.duration_s <= 0:
            raise ConfigError("duration_s must be positive")
        if self.free_flow_speed <= 0:
            raise ConfigError("free_flow_speed must be positive")
        if self.saturation_headway <= 0:
            raise ConfigError("saturation_headway must be positive")
        if self.sample_period_s is not None and self.sample_period_s <= 0:
            raise ConfigError("sample_period_s must be positive or None")
        if self.dt <= 0:
            raise ConfigError("dt must be positive")
        if (self.assignment_policy is AssignmentPolicy.ALPHA_STAR_FEEDBACK
                and self.demand.lambda_nm == 0.0):
            raise ConfigError("feedback assignment needs a lane-flexible flow")


@dataclass(frozen=True)
class ArrivalRecord:
    t: float
    vehicle_id: int
    movement: Movement
    is_probe: bool
    lane: Lane | None = None  # filled once assigned


@dataclass(frozen=True)
class DepartureRecord:
    t: float
    vehicle_id: int
    movement: Movement
    is_probe: bool
    lane: Lane


@dataclass(frozen=True)
class OverflowEvent:
    t: float
    lane: Lane
    kind: str  # "queue_at_red_start" or "beyond_rho_star"


@dataclass(frozen=True)
class TraceRow:
    """One sampled instant; the CSV export keeps the first eight fields."""

    t: float
    r_n: float
    r_m: float
    queue_n: int
    queue_m: int
    c_p: int
    l_p: int | None
    x_p: int
    x: int = 0
    end_red_n: bool = False
    end_red_m: bool = False


@dataclass
class Trace:
    config: SimConfig
    rows: list[TraceRow] = field(default_factory=list)
    states: list[LinkState] = field(default_factory=list)
    arrivals: list[ArrivalRecord] = field(default_factory=list)
    departures: list[DepartureRecord] = field(default_factory=list)
    overflow_events: list[OverflowEvent] = field(default_factory=list)

    @property
    def saturated(self) -> bool:
        return bool(self.overflow_events)

    def end_of_red_rows(self, lane: Lane | None = None) -> list[TraceRow]:
        if lane is Lane.N:
            return [r for r in self.rows if r.end_red_n]
        if lane is Lane.M:
            return [r for r in self.rows if r.end_red_m]
        return [r for r in self.rows if r.end_red_n or r.end_red_m]

    def write_trace_csv(self, path) -> None:
        """Documented column order: t,r_N,r_M,N,M,c_p,l_p,x_p (l_p blank if absent)."""
        lines = ["t,r_N,r_M,N,M,c_p,l_p,x_p"]
        for r in self.rows:
            lp = "" if r.l_p is None else str(r.l_p)
            lines.append(
                f"{r.t:.6f},{r.r_n:.6f},{r.r_m:.6f},{r.queue_n},{r.queue_m},"
                f"{r.c_p},{lp},{r.x_p}"
            )
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")

    def write_arrivals_csv(self, path) -> None:
        """Documented column order: t,movement,lane,is_probe."""
        lines = ["t,movement,lane,is_probe"]
        for a in self.arrivals:
            lane = "" if a.lane is None else a.lane.value
            lines.append(f"{a.t:.6f},{a.movement.value},{lane},{int(a.is_probe)}")
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")


def generate_arrivals(demand: DemandProfile, duration: float, seed: int
                      ) -> list[ArrivalRecord]:
    """Three independent Poisson arrival streams with independent probe tags.

    Streams are generated from separate child RNGs of the seed, merged by
    time; probe flags are drawn per vehicle in merged order so tagging is
    independent of movement.
    """
    if duration <= 0:
        raise ParameterError("duration must be positive")
    ss = np.random.SeedSequence(seed)
    rng_n, rng_m, rng_nm, rng_probe = (np.random.default_rng(s)
                                       for s in ss.spawn(4))

    def stream(rate: float, rng) -> list[float]:
        if rate <= 0:
            return []
        out = []
        t = rng.exponential(1.0 / rate)
        while t < duration:
            out.append(t)
            t += rng.exponential(1.0 / rate)
        return out

    merged = (
        [(t, Movement.RIGHT) for t in stream(demand.lambda_n, rng_n)]
        + [(t, Movement.LEFT) for t in stream(demand.lambda_m, rng_m)]
        + [(t, Movement.STRAIGHT) for t in stream(demand.lambda_nm, rng_nm)]
    )
    merged.sort(key=lambda item: item[0])
    return [
        ArrivalRecord(t=t, vehicle_id=i, movement=mv,
                      is_probe=bool(rng_probe.random() < demand.p))
        for i, (t, mv) in enumerate(merged)
    ]


def assign_lane(
    movement: Movement,
    queue_lengths: tuple[int, int],
    policy: AssignmentPolicy,
    alpha: float,
    rng: np.random.Generator,
) -> Lane:
    """Lane choice at entry.  Turning movements are forced; straight traffic
    follows the policy: Bernoulli(alpha) toward lane M, or the shorter queue
    with Bernoulli(alpha) tie-breaking."""
    if movement is Movement.RIGHT:
        return Lane.N
    if movement is Movement.LEFT:
        return Lane.M
    if policy is AssignmentPolicy.SHORTEST_QUEUE:
        q_n, q_m = queue_lengths
        if q_n < q_m:
            return Lane.N
        if q_m < q_n:
            return Lane.M
    # BERNOULLI_ALPHA, feedback (with alpha already resolved), or a tie
    return Lane.M if rng.random() < alpha else Lane.N


@dataclass
class _Veh:
    id: int
    movement: Movement
    is_probe: bool
    entry_time: float
    lane: Lane | None = None
    queued: bool = False
    slot: int = 0          # 1-based once queued


class LinkSimulation:
    """Single-link engine; ``run()`` returns the complete Trace.

    AT_QUEUE mode is event-driven and exact; AT_ENTRANCE mode steps at
    ``config.dt`` and requires sampling marks to fall on the step grid.
    """

    def __init__(self, config: SimConfig):
        self.config = config
        self.trace = Trace(config=config)
        self._rng_assign = np.random.default_rng(
            np.random.SeedSequence(config.seed).spawn(5)[4])
        self._queues: dict[Lane, list[_Veh]] = {Lane.N: [], Lane.M: []}
        self._transit: list[_Veh] = []  # AT_ENTRANCE only, entry order
        self._arrivals = generate_arrivals(config.demand, config.duration_s,
                                           config.seed)
        self._marks = self._build_marks()
        self._red_starts = self._build_red_starts()
        # per-lane discharge chain: time of next departure, or None
        self._next_tick: dict[Lane, float | None] = {Lane.N: None, Lane.M: None}
        self._green_end: dict[Lane, float] = {Lane.N: 0.0, Lane.M: 0.0}
        self._ia = 0  # arrival cursor
        self._im = 0  # mark cursor
        self._ir = 0  # red-start cursor
        self._now = 0.0
        self._done = False

    # ------------------------------------------------------------------
    # schedule construction
    # ------------------------------------------------------------------

    def _build_marks(self) -> list[tuple[float, bool, bool, bool]]:
        """(t, is_sample, end_red_n, end_red_m), merged and time-sorted."""
        cfg = self.config
        marks: dict[float, list[bool]] = {}

        def add(t: float, sample: bool, en: bool, em: bool):
            cur = marks.setdefault(round(t, 9), [False, False, False])
            cur[0] |= sample
            cur[1] |= en
            cur[2] |= em

        if cfg.sample_period_s is not None:
            k = 0
            while k * cfg.sample_period_s <= cfg.duration_s + 1e-9:
                add(k * cfg.sample_period_s, True, False, False)
                k += 1
        for lane, flag in ((Lane.N, "n"), (Lane.M, "m")):
            for _, end in cfg.timing.red_windows(lane, cfg.duration_s):
                # a window clipped by the horizon is not a completed red
                phase_end = cfg.timing.red_window_n[1] if lane is Lane.N \
                    else cfg.timing.red_window_m[1]
                if not math.isclose((end % cfg.timing.cycle_s) or cfg.timing.cycle_s,
                                    phase_end, abs_tol=1e-9):
                    continue
                add(end, False, flag == "n", flag == "m")
        if cfg.arrival_mode is ArrivalMode.AT_ENTRANCE:
            for t in marks:
                steps = t / cfg.dt
                if abs(steps - round(steps)) > 1e-6:
                    raise ConfigError(
                        f"AT_ENTRANCE mode needs sampling marks on the dt grid; "
                        f"mark at t={t} with dt={cfg.dt}"
                    )
        return [(t, s, en, em) for t, (s, en, em) in sorted(marks.items())]

    def _build_red_starts(self) -> list[tuple[float, Lane]]:
        cfg = self.config
        out = []
        for lane in (Lane.N, Lane.M):
            for start, _ in cfg.timing.red_windows(lane, cfg.duration_s):
                out.append((start, lane))
        out.sort(key=lambda item: (item[0], item[1].value))
        return out

    # ------------------------------------------------------------------
    # shared state helpers
    # ------------------------------------------------------------------

    def _queue_len(self, lane: Lane) -> int:
        return len(self._queues[lane])

    def _effective_alpha(self, t: float) -> float:
        cfg = self.config
        if cfg.assignment_policy is not AssignmentPolicy.ALPHA_STAR_FEEDBACK:
            return cfg.demand.alpha
        r_n = cfg.timing.red_elapsed(t, Lane.N)
        r_m = cfg.timing.red_elapsed(t, Lane.M)
        if r_n == 0.0 and r_m == 0.0:
            return cfg.demand.alpha  # both green: no queues to balance
        r_bar = math.inf if r_m == 0.0 else r_n / r_m
        l_n, l_m, l_nm = cfg.demand.turn_ratios
        return control.alpha_star(r_bar, l_n, l_m, l_nm)

    def _choose_lane(self, veh: _Veh, t: float) -> Lane:
        cfg = self.config
        policy = cfg.assignment_policy
        if policy is AssignmentPolicy.ALPHA_STAR_FEEDBACK:
            alpha = self._effective_alpha(t)
            policy = AssignmentPolicy.BERNOULLI_ALPHA
        else:
            alpha = cfg.demand.alpha
        return assign_lane(veh.movement,
                           (self._queue_len(Lane.N), self._queue_len(Lane.M)),
                           policy, alpha, self._rng_assign)

    def _join_queue(self, veh: _Veh, lane: Lane, t: float) -> None:
        geo = self.config.geometry
        slot = self._queue_len(lane) + 1
        if geo.slot_distance(slot) >= geo.rho_star:
            self.trace.overflow_events.append(
                OverflowEvent(t=t, lane=lane, kind="beyond_rho_star"))
        veh.lane = lane
        veh.queued = True
        veh.slot = slot
        self._queues[lane].append(veh)

    def _depart(self, veh: _Veh, t: float) -> None:
        self.trace.departures.append(DepartureRecord(
            t=t, vehicle_id=veh.id, movement=veh.movement,
            is_probe=veh.is_probe, lane=veh.lane))

    def _pop_head(self, lane: Lane, t: float) -> None:
        q = self._queues[lane]
        veh = q.pop(0)
        self._depart(veh, t)
        for v in q:
            v.slot -= 1

    # ------------------------------------------------------------------
    # event handlers
    # ------------------------------------------------------------------

    def _handle_red_start(self, t: float, lane: Lane) -> None:
        if self._queue_len(lane) > 0:
            self.trace.overflow_events.append(
                OverflowEvent(t=t, lane=lane, kind="queue_at_red_start"))
        self._next_tick[lane] = None  # discharge stops at red

    def _start_discharge_chain(self, lane: Lane, green_start: float) -> None:
        """Begin deterministic discharge at green start if a queue exists."""
        cfg = self.config
        self._green_end[lane] = self._green_end_after(lane, green_start)
        if self._queue_len(lane) > 0:
            first = green_start + cfg.saturation_headway
            self._next_tick[lane] = first if first < self._green_end[lane] else None
        else:
            self._next_tick[lane] = None

    def _green_end_after(self, lane: Lane, t: float) -> float:
        """End of the green interval containing t (next red start, or horizon)."""
        cfg = self.config
        a = (cfg.timing.red_window_n if lane is Lane.N
             else cfg.timing.red_window_m)[0]
        cycle = cfg.timing.cycle_s
        k = math.floor(t / cycle)
        start = k * cycle + a
        if start <= t + 1e-12:
            start += cycle
        return min(start, cfg.duration_s)

    def _handle_tick(self, lane: Lane, t: float) -> None:
        cfg = self.config
        if self._queue_len(lane) > 0:
            self._pop_head(lane, t)
        if self._queue_len(lane) > 0:
            nxt = t + cfg.saturation_headway
            self._next_tick[lane] = nxt if nxt < self._green_end[lane] else None
        else:
            self._next_tick[lane] = None

    def _handle_arrival_at_queue(self, arr: ArrivalRecord, t: float) -> None:
        cfg = self.config
        veh = _Veh(id=arr.vehicle_id, movement=arr.movement,
                   is_probe=arr.is_probe, entry_time=t)
        lane = self._choose_lane(veh, t)
        self.trace.arrivals.append(ArrivalRecord(
            t=t, vehicle_id=veh.id, movement=veh.movement,
            is_probe=veh.is_probe, lane=lane))
        if cfg.timing.in_red(t, lane) or self._queue_len(lane) > 0:
            self._join_queue(veh, lane, t)
        else:
            # green, empty queue: crosses without stopping
            veh.lane = lane
            self._depart(veh, t)

    def _handle_arrival_at_entrance(self, arr: ArrivalRecord, t: float) -> None:
        veh = _Veh(id=arr.vehicle_id, movement=arr.movement,
                   is_probe=arr.is_probe, entry_time=t)
        lane = self._choose_lane(veh, t)
        veh.lane = lane
        self.trace.arrivals.append(ArrivalRecord(
            t=t, vehicle_id=veh.id, movement=veh.movement,
            is_probe=veh.is_probe, lane=lane))
        self._transit.append(veh)

    def _transit_rho(self, veh: _Veh, t: float) -> float:
        return self.config.geometry.link_length \
            - self.config.free_flow_speed * (t - veh.entry_time)

    def _advance_transit(self, t: float) -> None:
        """Entrance mode: movers join their lane's back slot or cross the line."""
        cfg = self.config
        still_moving: list[_Veh] = []
        for veh in self._transit:
            rho = self._transit_rho(veh, t)
            lane = veh.lane
            if cfg.timing.in_red(t, lane) or self._queue_len(lane) > 0:
                target = cfg.geometry.slot_distance(self._queue_len(lane) + 1)
                if rho <= target:
                    self._join_queue(veh, lane, t)
                else:
                    still_moving.append(veh)
            else:
                if rho <= 0.0:
                    self._depart(veh, t)
                else:
                    still_moving.append(veh)
        self._transit = still_moving

    # ------------------------------------------------------------------
    # snapshots
    # ------------------------------------------------------------------

    def current_state(self, t: float | None = None) -> LinkState:
        cfg = self.config
        t = self._now if t is None else t
        records = []
        for lane in (Lane.N, Lane.M):
            for veh in self._queues[lane]:
                records.append(VehicleRecord(
                    id=veh.id, is_probe=veh.is_probe, lane=lane,
                    movement=veh.movement,
                    rho=cfg.geometry.slot_distance(veh.slot), v=0.0,
                    entry_time=veh.entry_time))
        for veh in self._transit:
            records.append(VehicleRecord(
                id=veh.id, is_probe=veh.is_probe, lane=veh.lane,
                movement=veh.movement, rho=self._transit_rho(veh, t),
                v=cfg.free_flow_speed, entry_time=veh.entry_time))
        return LinkState(
            time=t, vehicles=tuple(records),
            r_n=cfg.timing.red_elapsed(t, Lane.N),
            r_m=cfg.timing.red_elapsed(t, Lane.M))

    def _emit_row(self, t: float, is_sample: bool, end_n: bool, end_m: bool) -> None:
        cfg = self.config
        state = self.current_state(t)
        obs = observe(state, cfg.geometry)
        q_n, q_m = state.queue_lengths(cfg.geometry)
        r_n = cfg.timing.red_duration_n if end_n else state.r_n
        r_m = cfg.timing.red_duration_m if end_m else state.r_m
        self.trace.rows.append(TraceRow(
            t=t, r_n=r_n, r_m=r_m, queue_n=q_n, queue_m=q_m,
            c_p=obs.c_p, l_p=obs.l_p, x_p=obs.x_p,
            x=len(state.vehicles), end_red_n=end_n, end_red_m=end_m))
        if cfg.keep_states:
            self.trace.states.append(state)

    # ------------------------------------------------------------------
    # main loops
    # ------------------------------------------------------------------

    def run(self) -> Trace:
        if self._done:
            return self.trace
        if self.config.arrival_mode is ArrivalMode.AT_QUEUE:
            self._run_event_driven()
        else:
            self._run_stepped()
        self._done = True
        return self.trace

    def _run_event_driven(self) -> None:
        cfg = self.config
        # lanes green at t=0 have their (empty) chain initialized
        for lane in (Lane.N, Lane.M):
            if not cfg.timing.in_red(0.0, lane):
                self._start_discharge_chain(lane, 0.0)
        while True:
            t, prio, kind, payload = self._next_event()
            if t is None or t > cfg.duration_s + 1e-9:
                break
            self._now = t
            if kind == "tick":
                self._handle_tick(payload, t)
            elif kind == "red_start":
                self._handle_red_start(t, payload)
                self._ir += 1
            elif kind == "arrival":
                self._handle_arrival_at_queue(payload, t)
                self._ia += 1
            else:  # mark
                is_sample, end_n, end_m = payload
                if end_n:
                    self._start_discharge_chain(Lane.N, t)
                if end_m:
                    self._start_discharge_chain(Lane.M, t)
                self._emit_row(t, is_sample, end_n, end_m)
                self._im += 1
        self._now = cfg.duration_s

    def _next_event(self):
        """Smallest (time, priority) among the four event sources.

        Priorities at equal time: discharge < red start < arrival < mark,
        so an overflow check sees the pre-arrival queue and a snapshot sees
        every arrival up to and including its own instant.
        """
        best = (None, None, None, None)
        for lane in (Lane.N, Lane.M):
            tick = self._next_tick[lane]
            if tick is not None:
                best = _min_event(best, (tick, 0, "tick", lane))
        if self._ir < len(self._red_starts):
            t, lane = self._red_starts[self._ir]
            best = _min_event(best, (t, 1, "red_start", lane))
        if self._ia < len(self._arrivals):
            arr = self._arrivals[self._ia]
            best = _min_event(best, (arr.t, 2, "arrival", arr))
        if self._im < len(self._marks):
            t, s, en, em = self._marks[self._im]
            best = _min_event(best, (t, 3, "mark", (s, en, em)))
        return best

    def _run_stepped(self) -> None:
        cfg = self.config
        for lane in (Lane.N, Lane.M):
            if not cfg.timing.in_red(0.0, lane):
                self._start_discharge_chain(lane, 0.0)
        # marks are validated to sit on the dt grid
        n_steps = int(round(cfg.duration_s / cfg.dt))
        if self._im < len(self._marks) and self._marks[0][0] == 0.0:
            t0, s, en, em = self._marks[0]
            self._emit_row(0.0, s, en, em)
            self._im += 1
        for step in range(1, n_steps + 1):
            t_next = step * cfg.dt
            self._process_interval_events(t_next)
            self._now = t_next
            self._advance_transit(t_next)
            while (self._im < len(self._marks)
                   and self._marks[self._im][0] <= t_next + 1e-9):
                t, s, en, em = self._marks[self._im]
                if en:
                    self._start_discharge_chain(Lane.N, t)
                if em:
                    self._start_discharge_chain(Lane.M, t)
                self._emit_row(t, s, en, em)
                self._im += 1

    def _process_interval_events(self, t_next: float) -> None:
        """Entrance mode: red starts, arrivals and ticks due by t_next, in order."""
        while True:
            t, prio, kind, payload = (None, None, None, None)
            for lane in (Lane.N, Lane.M):
                tick = self._next_tick[lane]
                if tick is not None and tick <= t_next + 1e-12:
                    (t, prio, kind, payload) = _min_event(
                        (t, prio, kind, payload), (tick, 0, "tick", lane))
            if self._ir < len(self._red_starts):
                rt, lane = self._red_starts[self._ir]
                if rt <= t_next + 1e-12:
                    (t, prio, kind, payload) = _min_event(
                        (t, prio, kind, payload), (rt, 1, "red_start", lane))
            if self._ia < len(self._arrivals):
                arr = self._arrivals[self._ia]
                if arr.t <= t_next + 1e-12:
                    (t, prio, kind, payload) = _min_event(
                        (t, prio, kind, payload), (arr.t, 2, "arrival", arr))
            if t is None:
                return
            if kind == "tick":
                self._handle_tick(payload, t)
            elif kind == "red_start":
                self._handle_red_start(t, payload)
                self._ir += 1
            else:
                self._handle_arrival_at_entrance(payload, t)
                self._ia += 1


def _min_event(a, b):
    if a[0] is None:
        return b
    if b[0] is None:
        return a
    return a if (a[0], a[1]) <= (b[0], b[1]) else b


def observe(state: LinkState, geometry: LinkGeometry) -> ProbeObservation:
    """Extract what the roadside unit sees from a full link snapshot.

    Queue membership follows the threshold rule (v < v_star, rho < rho_star);
    the last-probe position is recovered from the farthest queued probe's
    distance, and x_p counts probes anywhere on the link.  Probe lane
    identity is never exposed.
    """
    queued = state.queued(geometry)
    probes_q = [v for v in queued if v.is_probe]
    c_p = len(probes_q)
    l_p = None
    if c_p > 0:
        l_p = last_probe_location(max(v.rho for v in probes_q), geometry)
    x_p = sum(1 for v in state.vehicles if v.is_probe)
    return ProbeObservation(t=state.time, r_n=state.r_n, r_m=state.r_m,
                            c_p=c_p, l_p=l_p, x_p=x_p)


def simulate(config: SimConfig) -> Trace:
    """Convenience wrapper: build the engine and run to the horizon."""
    return LinkSimulation(config).run()
