"""Scenario configuration: YAML parsing, defaults, and the bundled suite.

A scenario file is a mapping with explicit keys for every model symbol;
anything omitted falls back to the defaults documented in the README.
The five bundled scenarios span assignment optima alpha_star(1) from 0.1
to 0.9 (balanced to strongly asymmetric demand), each quoted as vehicle
counts over a 1200 s horizon.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import yaml

from ..control import alpha_star
from ..errors import ConfigError
from ..model import DemandProfile, LinkGeometry, SignalTiming
from ..sim import ArrivalMode, AssignmentPolicy, SimConfig

DEFAULT_P_SWEEP = [0.05, 0.1, 0.15, 0.2, 0.5, 0.7, 0.9]
DEFAULT_SEEDS = list(range(10))


@dataclass(frozen=True)
class Scenario:
    name: str
    demand: DemandProfile
    timing: SignalTiming
    geometry: LinkGeometry = field(default_factory=LinkGeometry)
    duration_s: float = 1200.0
    p_sweep: tuple[float, ...] = tuple(DEFAULT_P_SWEEP)
    seeds: tuple[int, ...] = tuple(DEFAULT_SEEDS)
    assignment_policy: AssignmentPolicy = AssignmentPolicy.BERNOULLI_ALPHA
    arrival_mode: ArrivalMode = ArrivalMode.AT_QUEUE
    free_flow_speed: float = 13.9
    saturation_headway: float = 2.0
    sample_period_s: float = 1.0
    # which kappa the estimators consume: the configured turn ratios
    # ("known") or ratios re-estimated from probe re-identification
    # ("estimated")
    kappa_source: str = "known"

    def __post_init__(self):
        if not self.p_sweep or not self.seeds:
            raise ConfigError("p_sweep and seeds must be non-empty")
        if self.duration_s <= 0:
            raise ConfigError("duration_s must be positive")
        if self.kappa_source not in ("known", "estimated"):
            raise ConfigError("kappa_source must be 'known' or 'estimated'")

    def sim_config(self, p: float, seed: int) -> SimConfig:
        demand = DemandProfile(
            lambda_n=self.demand.lambda_n, lambda_m=self.demand.lambda_m,
            lambda_nm=self.demand.lambda_nm, p=p, alpha=self.demand.alpha)
        return SimConfig(
            demand=demand, timing=self.timing, geometry=self.geometry,
            seed=seed, duration_s=self.duration_s,
            assignment_policy=self.assignment_policy,
            free_flow_speed=self.free_flow_speed,
            saturation_headway=self.saturation_headway,
            arrival_mode=self.arrival_mode,
            sample_period_s=self.sample_period_s)


# (name, straight count, left count, right count) per 1200 s; the derived
# alpha_star(1) values are 0.1, 0.25, 0.5, 0.75, 0.9.
_BUNDLED_COUNTS = [
    ("S1", 125.0, 200.0, 100.0),
    ("S2", 100.0, 125.0, 75.0),
    ("S3", 50.0, 200.0, 200.0),
    ("S4", 100.0, 75.0, 125.0),
    ("S5", 125.0, 100.0, 200.0),
]
_BUNDLED_HORIZON = 1200.0


def bundled_scenarios(
    p_sweep: tuple[float, ...] | None = None,
    seeds: tuple[int, ...] | None = None,
    cycle_s: float = 90.0,
    red_s: float = 41.0,
) -> list[Scenario]:
    """The five demand mixes, equal red for both lanes, alpha = alpha_star(1)."""
    timing = SignalTiming(cycle_s=cycle_s, red_window_n=(0.0, red_s),
                          red_window_m=(0.0, red_s))
    out = []
    for name, c_nm, c_m, c_n in _BUNDLED_COUNTS:
        lam_n = c_n / _BUNDLED_HORIZON
        lam_m = c_m / _BUNDLED_HORIZON
        lam_nm = c_nm / _BUNDLED_HORIZON
        total = lam_n + lam_m + lam_nm
        alpha = alpha_star(1.0, lam_n / total, lam_m / total, lam_nm / total)
        demand = DemandProfile(lambda_n=lam_n, lambda_m=lam_m,
                               lambda_nm=lam_nm, p=0.5, alpha=alpha)
        out.append(Scenario(
            name=name, demand=demand, timing=timing,
            duration_s=_BUNDLED_HORIZON,
            p_sweep=tuple(p_sweep) if p_sweep else tuple(DEFAULT_P_SWEEP),
            seeds=tuple(seeds) if seeds else tuple(DEFAULT_SEEDS)))
    return out


def _require(mapping: dict, key: str, context: str):
    if key not in mapping:
        raise ConfigError(f"missing key '{key}' in {context}")
    return mapping[key]


def scenario_from_dict(raw: dict) -> Scenario:
    if not isinstance(raw, dict):
        raise ConfigError("scenario document must be a mapping")
    name = raw.get("name", "scenario")
    d = _require(raw, "demand", "scenario")
    demand = DemandProfile(
        lambda_n=float(_require(d, "lambda_n", "demand")),
        lambda_m=float(_require(d, "lambda_m", "demand")),
        lambda_nm=float(_require(d, "lambda_nm", "demand")),
        p=float(d.get("p", 1.0)),
        alpha=float(d.get("alpha", 0.5)))
    t = _require(raw, "timing", "scenario")
    timing = SignalTiming(
        cycle_s=float(_require(t, "cycle_s", "timing")),
        red_window_n=tuple(float(x) for x in _require(t, "red_window_n", "timing")),
        red_window_m=tuple(float(x) for x in _require(t, "red_window_m", "timing")))
    g = raw.get("geometry", {})
    geometry = LinkGeometry(
        l_v=float(g.get("l_v", 5.0)),
        g_v=float(g.get("g_v", 2.5)),
        rho_0=float(g.get("rho_0", 10.0)),
        link_length=float(g.get("link_length", 300.0)),
        v_star=float(g.get("v_star", 0.1)),
        rho_star=(None if g.get("rho_star") is None else float(g["rho_star"])))
    s = raw.get("sim", {})
    try:
        policy = AssignmentPolicy(s.get("assignment_policy", "bernoulli_alpha"))
        mode = ArrivalMode(s.get("arrival_mode", "at_queue"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    sweep = raw.get("sweep", {})
    return Scenario(
        name=str(name), demand=demand, timing=timing, geometry=geometry,
        duration_s=float(s.get("duration_s", 1200.0)),
        assignment_policy=policy, arrival_mode=mode,
        free_flow_speed=float(s.get("free_flow_speed", 13.9)),
        saturation_headway=float(s.get("saturation_headway", 2.0)),
        sample_period_s=float(s.get("sample_period_s", 1.0)),
        kappa_source=str(s.get("kappa_source", "known")),
        p_sweep=tuple(float(x) for x in sweep.get("p", DEFAULT_P_SWEEP)),
        seeds=tuple(int(x) for x in sweep.get("seeds", DEFAULT_SEEDS)))


def load_scenarios(path) -> list[Scenario]:
    """Load one scenario or a list of scenarios from a YAML file."""
    with open(path) as fh:
        raw = yaml.safe_load(fh)
    if raw is None:
        raise ConfigError(f"empty scenario file: {path}")
    docs = raw if isinstance(raw, list) else [raw]
    return [scenario_from_dict(doc) for doc in docs]


def example_yaml() -> str:
    """A fully keyed scenario document, used by `probequeue sweep --write-example`."""
    return """\
# One scenario per document; a top-level list holds several.
name: example
demand:
  lambda_n: 0.16667     # right-turn arrivals (veh/s), forced to lane N
  lambda_m: 0.16667     # left-turn arrivals (veh/s), forced to lane M
  lambda_nm: 0.04167    # straight arrivals (veh/s), lane-flexible
  p: 0.5                # probe penetration ratio
  alpha: 0.5            # share of straight flow assigned to lane M
timing:
  cycle_s: 90.0
  red_window_n: [0.0, 41.0]   # [start, end) within the cycle
  red_window_m: [0.0, 41.0]
geometry:
  l_v: 5.0              # average vehicle length (m)
  g_v: 2.5              # inter-vehicle gap (m)
  rho_0: 10.0           # stop-line offset (m)
  link_length: 300.0
  v_star: 0.1           # below this speed a vehicle counts as queued (m/s)
  rho_star: null        # queue distance threshold; null = link_length
sim:
  duration_s: 1200.0
  assignment_policy: bernoulli_alpha   # or shortest_queue / alpha_star_feedback
  arrival_mode: at_queue               # or at_entrance
  free_flow_speed: 13.9
  saturation_headway: 2.0
  sample_period_s: 1.0
  kappa_source: known                  # or estimated
sweep:
  p: [0.05, 0.1, 0.15, 0.2, 0.5, 0.7, 0.9]
  seeds: [0, 1, 2, 3, 4, 5, 6, 7, 8, 9]
"""
