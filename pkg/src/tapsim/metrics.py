"""Per-run aggregates and their CSV/JSON serialisation."""

from __future__ import annotations

import csv
import dataclasses
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from tapsim.workload import Job

BASE_COLUMNS = (
    "scenario", "policy", "goal", "arrival_kind", "lambda", "jobs",
    "mean_et", "mean_rt_host", "mean_rt_ctrl", "p95_rt_ctrl",
)
_TEXT_COLUMNS = {"scenario", "policy", "goal", "arrival_kind"}
_INT_COLUMNS = {"jobs", "overflow"}


@dataclass(frozen=True)
class Summary:
    mean: float = math.nan
    p50: float = math.nan
    p95: float = math.nan
    p99: float = math.nan

    @classmethod
    def of(cls, values: np.ndarray) -> Summary:
        if len(values) == 0:
            return cls()
        p50, p95, p99 = np.percentile(values, [50, 95, 99])
        return cls(float(values.mean()), float(p50), float(p95), float(p99))


@dataclass(frozen=True)
class MetricsReport:
    scenario: str
    policy: str
    goal: str
    arrival_kind: str
    lam: float
    jobs: int
    et: Summary = field(default_factory=Summary)
    rt_host: Summary = field(default_factory=Summary)
    rt_ctrl: Summary = field(default_factory=Summary)
    fractions: tuple[float, ...] = ()
    overflow: bool = False
    # bookkeeping beyond the CSV columns
    arrivals: int = 0
    completed: int = 0
    in_flight: int = 0
    dropped: int = 0
    sp_epochs: int = 0
    samples_delivered: int = 0
    seed: int = 0

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> MetricsReport:
        d = dict(d)
        for key in ("et", "rt_host", "rt_ctrl"):
            d[key] = Summary(**d[key])
        d["fractions"] = tuple(d["fractions"])
        return cls(**d)


def aggregate_columns(
    et: np.ndarray,
    rt_host: np.ndarray,
    rt_ctrl: np.ndarray,
    hosts: np.ndarray,
    n_hosts: int,
    warmup_fraction: float = 0.1,
    **meta,
) -> MetricsReport:
    """Aggregate completed-job columns given in completion order."""
    skip = int(math.floor(warmup_fraction * len(et)))
    et, rt_host, rt_ctrl, hosts = et[skip:], rt_host[skip:], rt_ctrl[skip:], hosts[skip:]
    jobs = len(et)
    if jobs:
        counts = np.bincount(hosts, minlength=n_hosts)
        fractions = tuple(float(c) / jobs for c in counts)
    else:
        fractions = (0.0,) * n_hosts
    return MetricsReport(
        jobs=jobs,
        et=Summary.of(et),
        rt_host=Summary.of(rt_host),
        rt_ctrl=Summary.of(rt_ctrl),
        fractions=fractions,
        **meta,
    )


def aggregate(
    records: Iterable[Job],
    warmup_fraction: float = 0.1,
    n_hosts: int | None = None,
    *,
    scenario: str = "",
    policy: str = "",
    goal: str = "",
    arrival_kind: str = "",
    lam: float = math.nan,
    **meta,
) -> MetricsReport:
    """Report over completed jobs, in the order given, minus the warmup share."""
    done = [j for j in records if j.is_complete()]
    for j in done:
        if not j.timestamps_monotone():
            raise ValueError(f"job {j.id} has non-monotone timestamps")
    hosts = np.array([j.host_assigned for j in done], dtype=np.int64)
    if n_hosts is None:
        n_hosts = int(hosts.max()) + 1 if len(hosts) else 0
    return aggregate_columns(
        np.array([j.execution_time for j in done], float),
        np.array([j.response_time_host for j in done], float),
        np.array([j.response_time_controller for j in done], float),
        hosts,
        n_hosts,
        warmup_fraction,
        scenario=scenario, policy=policy, goal=goal, arrival_kind=arrival_kind, lam=lam,
        completed=len(done), **meta,
    )


def fmt(x: float) -> str:
    """Six significant digits, positional notation, trailing zeros trimmed."""
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    x = float(x)
    if math.isnan(x) or math.isinf(x):
        return str(x)
    if x == 0:
        return "0"
    return np.format_float_positional(x, precision=6, unique=False, fractional=False, trim="-")


def header(n_hosts: int) -> list[str]:
    return [*BASE_COLUMNS, *(f"frac_host_{i + 1}" for i in range(n_hosts)), "overflow"]


def report_row(r: MetricsReport) -> dict:
    row = {
        "scenario": r.scenario, "policy": r.policy, "goal": r.goal, "arrival_kind": r.arrival_kind,
        "lambda": r.lam, "jobs": r.jobs, "mean_et": r.et.mean, "mean_rt_host": r.rt_host.mean,
        "mean_rt_ctrl": r.rt_ctrl.mean, "p95_rt_ctrl": r.rt_ctrl.p95, "overflow": int(r.overflow),
    }
    for i, f in enumerate(r.fractions):
        row[f"frac_host_{i + 1}"] = f
    return row


def rows_to_csv(rows: Sequence[dict], columns: Sequence[str]) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([row.get(c) if c in _TEXT_COLUMNS else fmt(row.get(c)) for c in columns])
    return out.getvalue()


def to_csv(reports: Sequence[MetricsReport]) -> str:
    n = max((len(r.fractions) for r in reports), default=0)
    ordered = sorted(reports, key=lambda r: (r.scenario, r.policy, r.lam))
    return rows_to_csv([report_row(r) for r in ordered], header(n))


def read_csv(text: str) -> tuple[list[str], list[dict]]:
    """Parse CSV written by :func:`to_csv` back into typed rows."""
    reader = csv.reader(io.StringIO(text))
    columns = next(reader)
    rows = []
    for values in reader:
        row: dict = {}
        for c, v in zip(columns, values):
            if c in _TEXT_COLUMNS:
                row[c] = v
            elif v == "":
                row[c] = None
            elif c in _INT_COLUMNS:
                row[c] = int(v)
            else:
                row[c] = float(v)
        rows.append(row)
    return columns, rows
