import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tapsim.workload import ArrivalKind, ArrivalProcess, DemandKind, DemandSpec, Job, Stream, make_demand


def test_cr_first_arrival_at_20_per_second():
    assert ArrivalProcess("CR", 20.0).next_arrival(0.0) == pytest.approx(0.05, abs=1e-15)


def test_cr_unit_rate_from_t3():
    assert ArrivalProcess(ArrivalKind.CR, 1.0).next_arrival(3.0) == 4.0


def test_exp_mean_interarrival():
    proc = ArrivalProcess("EXP", 8.0, seed=42)
    gaps = [proc.next_arrival(0.0) for _ in range(10**6)]
    assert np.mean(gaps) == pytest.approx(0.125, rel=0.005)


@pytest.mark.parametrize("rate", [0.0, -1.0, math.inf, math.nan])
def test_rejects_bad_rate(rate):
    with pytest.raises(ValueError):
        ArrivalProcess("EXP", rate)


def test_rejects_negative_now():
    with pytest.raises(ValueError):
        ArrivalProcess("CR", 1.0).next_arrival(-1.0)


@given(rate=st.floats(0.1, 100.0), k=st.integers(1, 500))
def test_cr_arrival_k_is_exactly_k_over_rate(rate, k):
    times = list(ArrivalProcess("CR", rate).times(k / rate))
    assert len(times) == k
    assert times[-1] == k / rate


def test_same_seed_same_stream():
    a = list(ArrivalProcess("EXP", 5.0, seed=7).times(100.0))
    b = list(ArrivalProcess("EXP", 5.0, seed=7).times(100.0))
    c = list(ArrivalProcess("EXP", 5.0, seed=8).times(100.0))
    assert a == b
    assert a != c


def test_poisson_counts_in_window():
    lam, horizon, runs = 4.0, 10.0, 400
    counts = np.array([len(list(ArrivalProcess("EXP", lam, seed=s).times(horizon))) for s in range(runs)])
    # mean of `runs` Poisson(lam*T) counts lies within 3 standard errors
    assert abs(counts.mean() - lam * horizon) <= 3 * math.sqrt(lam * horizon / runs)


def test_deterministic_demand():
    assert make_demand(DemandSpec("deterministic", 0.0641), None) == 0.0641
    assert make_demand(DemandSpec(DemandKind.DETERMINISTIC, 1.0), None) == 1.0


def test_exponential_demand_mean():
    s = Stream(3)
    dist = DemandSpec("exponential", 0.0641)
    draws = [make_demand(dist, s) for _ in range(10**6)]
    assert np.mean(draws) == pytest.approx(0.0641, rel=0.005)


@pytest.mark.parametrize("mean", [0.0, -0.5])
def test_demand_rejects_non_positive(mean):
    with pytest.raises(ValueError):
        DemandSpec("deterministic", mean)


def test_job_metrics_and_monotonicity():
    j = Job(0, 1.0, 0.5, host_assigned=0, t_dispatched=1.0, t_arrive_host=1.1,
            t_start_host=1.1, t_finish_host=1.6, t_ack_controller=1.7)
    assert j.is_complete()
    assert j.timestamps_monotone()
    assert j.execution_time == pytest.approx(0.5)
    assert j.response_time_controller == pytest.approx(0.7)
    j.t_ack_controller = 1.5
    assert not j.timestamps_monotone()


@settings(max_examples=50)
@given(seed=st.integers(0, 2**32 - 1))
def test_stream_integers_in_range(seed):
    s = Stream(seed)
    assert all(0 <= s.integers(3) < 3 for _ in range(100))
