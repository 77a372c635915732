import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sagin_mec.channel import RfParams
from sagin_mec.metrics import (
    ComputeParams, InfeasibleLinkError, LinkRates, OffloadFractions, ResourceAlloc, TailTarget,
    TargetMismatchError, ZeroAllocationError, task_metrics,
)
from sagin_mec.taskgraph import MB_BITS, Task

RF = RfParams()
CP = ComputeParams()
TASK = Task(0, 0.8 * MB_BITS, 3e9)
RATES = LinkRates(rate_user_uav=2e7, rate_uav_sat=1e7, rate_isl=5e8, rate_sat_cloud=2e9,
                  dist_uav_sat_m=1e6, dist_isl_m=9e5, dist_sat_cloud_m=1.2e6)


def test_local_only_hand_case():
    m = task_metrics(TASK, OffloadFractions(1, 1, 1), ResourceAlloc(), RATES, CP, TailTarget.NONE, RF)
    assert m.total_latency == pytest.approx(30.0, rel=1e-12)
    assert m.total_energy == pytest.approx(3.0, rel=1e-12)


def test_worked_four_tier_case():
    # independently computed branch times [15, 3.192, 1.1373, 0.6418] and energy sum
    m = task_metrics(TASK, OffloadFractions(0.5, 0.5, 0.5), ResourceAlloc(0.25e9, 0.5e9, 1.5e9),
                     RATES, CP, TailTarget.CLOUD, RF)
    assert m.total_latency == pytest.approx(15.0, rel=1e-9)
    assert m.total_energy == pytest.approx(100.14918, rel=1e-9)
    assert m.t_tx_user_uav + m.t_uav == pytest.approx(3.192, rel=1e-9)
    assert m.t_tx_user_uav + m.t_tx_uav_sat + m.t_sat == pytest.approx(1.1373356409519815, rel=1e-9)
    assert m.t_tx_isl == 0.0 and m.e_isl == 0.0


def test_isl_tail_uses_isl_rate():
    m = task_metrics(TASK, OffloadFractions(0, 0, 0), ResourceAlloc(0, 0, 1e9), RATES, CP,
                     TailTarget.ISL_SATELLITE, RF)
    payload = 1.2 * TASK.data_size_bits / RATES.rate_isl
    assert m.t_tx_isl == pytest.approx(9e5 / RF.light_speed_mps + payload, rel=1e-12)
    assert m.e_tx_isl == pytest.approx(RF.tx_power_sat_W * payload, rel=1e-12)
    assert m.t_cloud == 0.0


def test_errors():
    with pytest.raises(InfeasibleLinkError):
        task_metrics(TASK, OffloadFractions(0.5, 1, 1), ResourceAlloc(1e8), LinkRates(0.0, 1e7), CP,
                     TailTarget.NONE, RF)
    with pytest.raises(ZeroAllocationError):
        task_metrics(TASK, OffloadFractions(0.5, 1, 1), ResourceAlloc(0.0), RATES, CP, TailTarget.NONE, RF)
    with pytest.raises(TargetMismatchError):
        task_metrics(TASK, OffloadFractions(0, 0, 0), ResourceAlloc(1, 1, 1), RATES, CP, TailTarget.NONE, RF)
    with pytest.raises(TargetMismatchError):
        task_metrics(TASK, OffloadFractions(1, 1, 1), ResourceAlloc(0, 0, 1e9), RATES, CP, TailTarget.CLOUD, RF)
    with pytest.raises(ValueError):
        OffloadFractions(1.2, 0, 0)
    with pytest.raises(ValueError):
        ResourceAlloc(-1.0)


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
def test_cycle_shares_conserve(m, n, l):
    shares = OffloadFractions(m, n, l).shares()
    assert all(s >= 0 for s in shares)
    assert abs(sum(shares) - 1.0) <= 1e-12


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1), st.sampled_from([TailTarget.CLOUD, TailTarget.ISL_SATELLITE]))
def test_metrics_nonnegative_and_latency_is_max(m, n, l, target):
    fr = OffloadFractions(m, n, l)
    f_tail = 1e9 if fr.shares()[3] > 0 else 0.0
    met = task_metrics(TASK, fr, ResourceAlloc(1e8, 5e8, f_tail), RATES, CP, target, RF)
    parts = [v for v in met.to_row().values()]
    assert all(np.isfinite(parts)) and min(parts) >= 0.0
    assert met.total_latency >= met.t_local
    assert met.total_latency >= met.t_tx_user_uav + met.t_uav
    energies = [v for k, v in met.to_row().items() if k.startswith("e_")]
    assert met.total_energy == pytest.approx(sum(energies), rel=1e-12, abs=1e-300)
