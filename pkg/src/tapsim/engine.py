"""Discrete-event simulation of the controller/host feedback loop.

Jobs reach the controller, the policy picks a host, and a dispatch message
carries the job there after the network delay.  Finished jobs leave a
measurement record in the host's mailbox and send an acknowledgement back.
Probes leave the controller every ``sp_period``, empty the mailboxes they
visit and return the records as execution-time samples.  Response-time
samples travel on the job acknowledgements.
"""

from __future__ import annotations

import enum
import heapq
import logging
import math
from array import array
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from itertools import accumulate
from typing import Callable, Iterable, Sequence

import numpy as np

from tapsim.config import ScenarioConfig
from tapsim.hostmodel import HostOverflow, HostState, MarkovHost, SharedHost
from tapsim.metrics import MetricsReport, aggregate_columns
from tapsim.policies import GoalKind, GoalSample, Policy, PolicyKind, draw, make_policy
from tapsim.workload import ArrivalProcess, Job, Stream, make_demand

log = logging.getLogger(__name__)


class EventKind(enum.IntEnum):
    """Value doubles as the tie-break priority for simultaneous events."""

    COMPLETION = 0
    JOB_ACK = 1
    PROBE_ACK = 2
    DISPATCH = 3
    ARRIVAL = 4
    PROBE_LAUNCH = 5
    PROBE_AT_HOST = 6


class EventQueue:
    """Min-heap ordered by (time, kind, key, insertion sequence).

    ``key`` identifies the entity (job or host), so simultaneous events for
    different entities pop in the same order whatever order they were pushed.
    """

    def __init__(self) -> None:
        self._heap: list = []
        self._seq = 0

    def push(self, time: float, kind: EventKind, key: int, payload=None) -> None:
        heapq.heappush(self._heap, (time, kind, key, self._seq, payload))
        self._seq += 1

    def pop(self):
        return heapq.heappop(self._heap)

    def peek_time(self) -> float:
        return self._heap[0][0] if self._heap else math.inf

    def __len__(self) -> int:
        return len(self._heap)


@dataclass(frozen=True)
class MailboxRecord:
    job_id: int
    host: int
    execution_time: float
    t_finish: float


def rep_seed(base_seed: int, rep: int) -> int:
    """Seed for repetition ``rep``; shared by every policy and rate (common random numbers)."""
    if rep == 0:
        return base_seed
    return int(np.random.SeedSequence([base_seed, rep]).generate_state(1, np.uint32)[0])


class Simulation:
    """One scenario run.  Call :meth:`run` once.

    ``keep_jobs`` retains every Job object (finished or not) for inspection;
    ``on_sample`` is called with each goal sample handed to the policy.
    """

    def __init__(
        self,
        config: ScenarioConfig,
        keep_jobs: bool = False,
        on_sample: Callable[[GoalSample], None] | None = None,
        policy: Policy | None = None,
    ) -> None:
        self.config = config
        self.keep_jobs = keep_jobs
        self.on_sample = on_sample
        n = len(config.hosts)
        ss = np.random.SeedSequence(config.seed)
        s_arrival, s_demand, s_policy, s_service, s_network = ss.spawn(5)
        self.arrivals = ArrivalProcess(config.arrival_kind, config.rate, seed=s_arrival)
        self.demand_stream = Stream(s_demand)
        self.policy_stream = Stream(s_policy)
        service = Stream(s_service)
        self.net_stream = Stream(s_network)

        cap = config.occupancy_cap
        if config.host_mode.value == "shared":
            self.hosts: list[HostState] = [SharedHost(h, work_unit=config.work_unit, cap=cap) for h in config.hosts]
        else:
            self.hosts = [MarkovHost(h, service, cap=cap) for h in config.hosts]
        p = config.policy
        self.policy = policy or make_policy(
            p.kind, config.hosts, config.rate, alpha=p.alpha, exploration=p.exploration,
            renormalize=p.renormalize, probabilities=p.probabilities,
        )
        if self.policy.n != n:
            raise ValueError("policy and scenario disagree on the number of hosts")

        self.queue = EventQueue()
        self.mailboxes: list[deque[MailboxRecord]] = [deque() for _ in range(n)]
        self._scheduled = [math.inf] * n
        self._version = [0] * n
        self._in_flight: dict[int, Job] = {}
        self.jobs: list[Job] = []
        self._et = array("d")
        self._rt_host = array("d")
        self._rt_ctrl = array("d")
        self._done_host = array("q")
        self.arrived = 0
        self.dropped = 0
        self.overflow = False
        self.sp_epochs = 0
        self.probes_sent = 0
        self.samples_delivered = 0
        self.now = 0.0
        self._ran = False
        self._zero_delay = config.net_delay.kind == "constant" and config.net_delay.mean == 0.0

    # -- plumbing ---------------------------------------------------------

    def _delay(self) -> float:
        d = self.config.net_delay
        if d.kind == "constant":
            return d.mean
        return self.net_stream.exponential(d.mean)

    def _reschedule(self, h: int) -> None:
        t = self.hosts[h].next_completion_time()
        if t != self._scheduled[h]:
            self._version[h] += 1
            self._scheduled[h] = t
            if t < math.inf:
                self.queue.push(t, EventKind.COMPLETION, h, self._version[h])

    def _deliver(self, sample: GoalSample) -> None:
        if sample.goal_kind is not self.config.goal:
            return
        self.samples_delivered += 1
        self.policy.observe(sample)
        if self.on_sample is not None:
            self.on_sample(sample)

    # -- handlers ---------------------------------------------------------

    def _on_arrival(self, t: float, job_id: int) -> None:
        job = Job(job_id, t, make_demand(self.config.demand, self.demand_stream))
        self.arrived += 1
        if self.keep_jobs:
            self.jobs.append(job)
        job.host_assigned = self.policy.decide(t, self.policy_stream)
        job.t_dispatched = t
        self._in_flight[job_id] = job
        if self._zero_delay:
            self._on_dispatch(t, job)
        else:
            self.queue.push(t + self._delay(), EventKind.DISPATCH, job_id, job)

    def _on_dispatch(self, t: float, job: Job) -> None:
        h = job.host_assigned
        try:
            self.hosts[h].admit_job(job, t)
        except HostOverflow:
            self.overflow = True
            self.dropped += 1
            del self._in_flight[job.id]
            return
        self._reschedule(h)

    def _on_completion(self, t: float, h: int, version: int) -> None:
        if version != self._version[h]:
            return
        self._scheduled[h] = math.inf
        host = self.hosts[h]
        done = host.completions(t)
        if not done and isinstance(host, SharedHost):
            done = host.force_next(t)
        for job in done:
            et = job.execution_time
            if self.config.instant_feedback:
                self._deliver(GoalSample(h, GoalKind.ET, et, t, t))
            else:
                self.mailboxes[h].append(MailboxRecord(job.id, h, et, t))
            if self._zero_delay:
                self._on_job_ack(t, job)
            else:
                self.queue.push(t + self._delay(), EventKind.JOB_ACK, job.id, job)
        self._reschedule(h)

    def _on_job_ack(self, t: float, job: Job) -> None:
        job.t_ack_controller = t
        del self._in_flight[job.id]
        self._et.append(job.execution_time)
        self._rt_host.append(job.response_time_host)
        rt = job.response_time_controller
        self._rt_ctrl.append(rt)
        self._done_host.append(job.host_assigned)
        self._deliver(GoalSample(job.host_assigned, GoalKind.RT, rt, job.t_finish_host, t))

    def _probe_targets(self) -> Iterable[int]:
        n = len(self.hosts)
        if not self.config.sp_focus:
            return range(n)
        cum = list(accumulate(self.policy.probabilities()))
        return [draw(cum, self.policy_stream.random()) for _ in range(n)]

    def _on_probe_launch(self, t: float, epoch: int) -> None:
        self.sp_epochs += 1
        for h in self._probe_targets():
            self.probes_sent += 1
            self.queue.push(t + self._delay(), EventKind.PROBE_AT_HOST, h, None)

    def _on_probe_at_host(self, t: float, h: int) -> None:
        box = self.mailboxes[h]
        records = list(box)
        box.clear()
        self.queue.push(t + self._delay(), EventKind.PROBE_ACK, h, records)

    def _on_probe_ack(self, t: float, records: list[MailboxRecord]) -> None:
        for rec in records:
            self._deliver(GoalSample(rec.host, GoalKind.ET, rec.execution_time, rec.t_finish, t))

    # -- driver -----------------------------------------------------------

    def run(self) -> MetricsReport:
        if self._ran:
            raise RuntimeError("a Simulation runs once")
        self._ran = True
        cfg = self.config
        q = self.queue
        n_epochs = int(math.floor(cfg.duration / cfg.sp_period + 1e-9))
        if n_epochs:
            q.push(cfg.sp_period, EventKind.PROBE_LAUNCH, 1, None)
        times = iter(self.arrivals.times(cfg.duration))
        next_id = 0
        t0 = next(times, None)
        if t0 is not None:
            q.push(t0, EventKind.ARRIVAL, 0, None)

        while q and q.peek_time() <= cfg.duration:
            t, kind, key, _, payload = q.pop()
            self.now = t
            if kind is EventKind.COMPLETION:
                self._on_completion(t, key, payload)
            elif kind is EventKind.JOB_ACK:
                self._on_job_ack(t, payload)
            elif kind is EventKind.DISPATCH:
                self._on_dispatch(t, payload)
            elif kind is EventKind.ARRIVAL:
                self._on_arrival(t, key)
                next_id += 1
                t_next = next(times, None)
                if t_next is not None:
                    q.push(t_next, EventKind.ARRIVAL, next_id, None)
            elif kind is EventKind.PROBE_ACK:
                self._on_probe_ack(t, payload)
            elif kind is EventKind.PROBE_LAUNCH:
                self._on_probe_launch(t, key)
                if key < n_epochs:
                    q.push((key + 1) * cfg.sp_period, EventKind.PROBE_LAUNCH, key + 1, None)
            else:
                self._on_probe_at_host(t, key)
        return self.report()

    def report(self) -> MetricsReport:
        cfg = self.config
        return aggregate_columns(
            np.frombuffer(self._et, dtype=float) if len(self._et) else np.empty(0),
            np.frombuffer(self._rt_host, dtype=float) if len(self._rt_host) else np.empty(0),
            np.frombuffer(self._rt_ctrl, dtype=float) if len(self._rt_ctrl) else np.empty(0),
            np.frombuffer(self._done_host, dtype=np.int64) if len(self._done_host) else np.empty(0, np.int64),
            len(cfg.hosts),
            cfg.warmup_fraction,
            scenario=cfg.name,
            policy=cfg.policy.kind.value,
            goal=cfg.goal.value,
            arrival_kind=cfg.arrival_kind.value,
            lam=cfg.rate,
            overflow=self.overflow,
            arrivals=self.arrived,
            completed=len(self._et),
            in_flight=len(self._in_flight),
            dropped=self.dropped,
            sp_epochs=self.sp_epochs,
            samples_delivered=self.samples_delivered,
            seed=cfg.seed,
        )

    def in_flight_jobs(self) -> list[Job]:
        return list(self._in_flight.values())


def run(config: ScenarioConfig) -> MetricsReport:
    return Simulation(config).run()


@dataclass(frozen=True)
class CellError:
    """A sweep cell that failed; the rest of the sweep carries on."""

    scenario: str
    policy: str
    lam: float
    rep: int
    message: str


@dataclass(frozen=True)
class Cell:
    """One (rate, policy, repetition) point; the config is built when the cell runs."""

    base: ScenarioConfig
    policy: PolicyKind
    lam: float
    rep: int
    seed: int

    @property
    def config(self) -> ScenarioConfig:
        return self.base.with_policy(self.policy).replace(rate=self.lam, seed=self.seed)


def sweep_cells(
    base: ScenarioConfig,
    lambdas: Sequence[float],
    policies: Sequence[PolicyKind | str],
    reps: int = 1,
) -> list[Cell]:
    if not lambdas or not policies or reps < 1:
        raise ValueError("sweep needs at least one rate, one policy and one repetition")
    cells = []
    for rep in range(reps):
        seed = rep_seed(base.seed, rep)
        for kind in policies:
            for lam in lambdas:
                cells.append(Cell(base, PolicyKind(kind), float(lam), rep, seed))
    return cells


def run_cell(cell: Cell) -> MetricsReport | CellError:
    try:
        return run(cell.config)
    except Exception as exc:  # one broken cell must not sink the sweep
        return CellError(cell.base.name, cell.policy.value, cell.lam, cell.rep, f"{type(exc).__name__}: {exc}")


def sweep(
    base: ScenarioConfig,
    lambdas: Sequence[float],
    policies: Sequence[PolicyKind | str],
    reps: int = 1,
    jobs: int = 1,
    progress: Callable[[Cell, MetricsReport | CellError], None] | None = None,
) -> list[MetricsReport | CellError]:
    """Run every (rate, policy, repetition) cell; results follow cell order."""
    cells = sweep_cells(base, lambdas, policies, reps)
    if jobs <= 1:
        results = []
        for cell in cells:
            results.append(run_cell(cell))
            if progress:
                progress(cell, results[-1])
        return results
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        results = []
        for cell, res in zip(cells, pool.map(run_cell, cells)):
            results.append(res)
            if progress:
                progress(cell, res)
        return results
