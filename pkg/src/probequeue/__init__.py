"""Probe-vehicle queue estimation and balancing control for a signalized
two-lane link: domain model, discrete-event simulator, penetration/arrival
estimators, probe-conditioned joint queue laws, and the control laws that
balance the two queues."""

from .model import (
    DemandProfile,
    JointQueueDistribution,
    Lane,
    LinkGeometry,
    LinkState,
    Movement,
    ProbeObservation,
    SignalTiming,
    VehicleRecord,
    kappa,
    mu_rates,
)
from .estimators import (
    PenetrationEstimate,
    TurnRatioEstimate,
    estimate_lambda,
    estimate_lambda_windows,
    estimate_p_one_lane,
    estimate_p_two_lane,
    estimate_turn_ratios,
    last_probe_location,
)
from .bayes import (
    PosteriorInput,
    default_n_max,
    expected_queue_lengths,
    lp_point_estimate,
    placement_probability,
    posterior_joint,
    posterior_no_probes,
    prior_joint,
    prior_point_estimate,
)
from .control import (
    BalanceInput,
    alpha_star,
    imbalance_f,
    in_interval_I,
    interval_I,
    r_star,
    trajectory_alpha_r,
)
from .sim import (
    ArrivalMode,
    AssignmentPolicy,
    LinkSimulation,
    SimConfig,
    Trace,
    assign_lane,
    generate_arrivals,
    observe,
    simulate,
)

__version__ = "0.1.0"
