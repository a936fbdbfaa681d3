import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from scenarios import HETERO_SPEEDS, scenario
from tapsim.engine import Simulation
from tapsim.metrics import (
    MetricsReport,
    Summary,
    aggregate,
    fmt,
    header,
    read_csv,
    report_row,
    rows_to_csv,
    to_csv,
)
from tapsim.policies import PolicyKind
from tapsim.workload import Job


def finished(i, host, start, et, delay=0.0):
    j = Job(i, start - delay, et, host_assigned=host)
    j.t_dispatched = start - delay
    j.t_arrive_host = j.t_start_host = start
    j.t_finish_host = start + et
    j.t_ack_controller = start + et + delay
    return j


def test_single_job_means():
    r = aggregate([finished(0, 0, 1.0, 0.0641)], warmup_fraction=0.0)
    assert r.jobs == 1
    for s in (r.et, r.rt_host, r.rt_ctrl):
        assert s.mean == pytest.approx(0.0641, abs=1e-15)


def test_two_job_mean():
    r = aggregate([finished(0, 0, 0.0, 1.0), finished(1, 1, 0.0, 3.0)], warmup_fraction=0.0)
    assert r.et.mean == 2.0
    assert r.fractions == (0.5, 0.5)


def test_empty_records_give_zero_job_report():
    r = aggregate([], n_hosts=3)
    assert r.jobs == 0 and r.fractions == (0.0, 0.0, 0.0)
    assert math.isnan(r.et.mean)


def test_warmup_drops_leading_completions():
    jobs = [finished(i, i % 2, float(i), float(i + 1)) for i in range(10)]
    r = aggregate(jobs, warmup_fraction=0.2)
    assert r.jobs == 8
    assert r.et.mean == pytest.approx(np.mean(np.arange(3, 11)))


def test_incomplete_and_broken_records():
    j = Job(0, 0.0, 1.0)
    assert aggregate([j], n_hosts=1).jobs == 0
    bad = finished(1, 0, 1.0, 0.5)
    bad.t_ack_controller = 0.2
    with pytest.raises(ValueError):
        aggregate([bad])


def test_empty_csv_is_header_only():
    assert to_csv([]) == ",".join(header(0)) + "\n"
    assert header(3)[-4:] == ["frac_host_1", "frac_host_2", "frac_host_3", "overflow"]
    assert header(2)[:10] == ["scenario", "policy", "goal", "arrival_kind", "lambda", "jobs",
                              "mean_et", "mean_rt_host", "mean_rt_ctrl", "p95_rt_ctrl"]


def test_fmt_six_significant_digits():
    assert fmt(0.0641) == "0.0641"
    assert fmt(1 / 3) == "0.333333"
    assert fmt(123456789.0) == "123457000"
    assert fmt(2.5e-7) == "0.00000025"
    assert fmt(0.0) == "0"
    assert fmt(7) == "7"
    assert fmt(math.nan) == "nan"


finite = st.floats(1e-6, 1e6)


@given(vals=st.lists(st.tuples(finite, finite, finite, finite, st.integers(0, 10**6)), max_size=8))
def test_csv_reserialisation_is_byte_identical(vals):
    reports = [
        MetricsReport(f"s{i % 2}", "SENSIBLE", "ET", "EXP", lam, jobs,
                      et=Summary(a), rt_host=Summary(a), rt_ctrl=Summary(b, b, c, c), fractions=(0.25, 0.75))
        for i, (lam, a, b, c, jobs) in enumerate(vals)
    ]
    text = to_csv(reports)
    columns, rows = read_csv(text)
    assert rows_to_csv(rows, columns) == text
    assert len(rows) == len(reports)


def test_rows_sorted_by_scenario_policy_lambda():
    rs = [MetricsReport(s, p, "ET", "EXP", lam, 0, fractions=(1.0,))
          for s, p, lam in [("b", "SENSIBLE", 1.0), ("a", "SENSIBLE", 20.0), ("a", "SENSIBLE", 4.0), ("a", "RNN_RL", 8.0)]]
    _, rows = read_csv(to_csv(rs))
    assert [(r["scenario"], r["policy"], r["lambda"]) for r in rows] == [
        ("a", "RNN_RL", 8.0), ("a", "SENSIBLE", 4.0), ("a", "SENSIBLE", 20.0), ("b", "SENSIBLE", 1.0)]


def test_fractions_recomputed_from_raw_records():
    cfg = scenario(PolicyKind.SENSIBLE, speeds=HETERO_SPEEDS, rate=12.0)
    sim = Simulation(cfg, keep_jobs=True)
    rep = sim.run()
    done = sorted((j for j in sim.jobs if j.is_complete()), key=lambda j: (j.t_ack_controller, j.id))
    again = aggregate(done, cfg.warmup_fraction, 3)
    assert again.fractions == rep.fractions
    assert again.et == rep.et
    assert sum(rep.fractions) == pytest.approx(1.0, abs=1e-9)
    assert rep.et.mean <= rep.rt_host.mean <= rep.rt_ctrl.mean


def test_json_mirror_round_trip():
    rep = Simulation(scenario(rate=5.0)).run()
    assert MetricsReport.from_dict(rep.to_dict()) == rep
    assert report_row(rep)["jobs"] == rep.jobs
