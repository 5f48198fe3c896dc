import numpy as np
import pytest

from probequeue.model import DemandProfile, LinkGeometry, SignalTiming


@pytest.fixture
def geometry():
    return LinkGeometry()


@pytest.fixture
def common_red_timing():
    """Both lanes red over [0, 41) of a 90 s cycle."""
    return SignalTiming(cycle_s=90.0, red_window_n=(0.0, 41.0),
                        red_window_m=(0.0, 41.0))


@pytest.fixture
def asymmetric_demand():
    """Right-heavy mix: rates 1/6, 1/12, 1/24 veh/s; everything straight
    goes to lane M (the balancing optimum clamps to 1)."""
    return DemandProfile(lambda_n=1 / 6, lambda_m=1 / 12, lambda_nm=1 / 24,
                         p=0.55, alpha=1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(42)
