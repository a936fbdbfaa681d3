"""Host service behaviour under concurrency.

Two pieces live here: the analytical birth-death model of a host (the
state-dependent departure rate is mu1 with one job on board and a flat
``mu0 = c * mu1`` above that), and the runtime host states the simulator
drives.  ``SharedHost`` shares the processor among all resident jobs with the
measured per-job slowdown; ``MarkovHost`` is the memoryless twin of the
analytical model and exists so the closed forms can be checked by simulation.
"""

from __future__ import annotations

import enum
import heapq
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from tapsim.workload import Job, Stream

# Measured gamma(l)/gamma(1) for l = 1..10 on the reference host.
MEASURED_RATIOS = (1.0, 0.67, 0.48, 0.34, 0.29, 0.23, 0.20, 0.17, 0.15, 0.13)
AGGREGATE_FACTOR = 1.386
REFERENCE_SOLO_TIME = 0.0641
DEFAULT_OCCUPANCY_CAP = 10_000


class HostMode(str, enum.Enum):
    SHARED = "shared"
    MARKOV = "markov"


class UnstableHostError(ValueError):
    """Arrival rate at or above the host's saturated departure rate."""


class HostOverflow(RuntimeError):
    """Admission attempted with the host already at its occupancy cap."""


@dataclass(frozen=True)
class InterferenceCurve:
    """Per-job completion-rate ratios ``gamma(l)/gamma(1)``.

    ``ratios[0]`` is the l = 1 entry.  Beyond the table the ratio follows
    ``aggregate_factor / l`` (total throughput stays flat), or holds the last
    tabulated value when ``extrapolate`` is off.
    """

    ratios: tuple[float, ...] = MEASURED_RATIOS
    aggregate_factor: float = AGGREGATE_FACTOR
    fit_tolerance: float = 0.35
    extrapolate: bool = True

    def __post_init__(self) -> None:
        r = tuple(float(x) for x in self.ratios)
        object.__setattr__(self, "ratios", r)
        if not r or r[0] != 1.0:
            raise ValueError("ratios must start with 1.0 for l = 1")
        if any(b > a for a, b in zip(r, r[1:])):
            raise ValueError("ratios must be non-increasing in l")
        if any(x <= 0 for x in r):
            raise ValueError("ratios must be positive")
        if not self.aggregate_factor > 0:
            raise ValueError("aggregate_factor must be positive")
        for l, x in enumerate(r[1:], start=2):
            if abs(l * x - self.aggregate_factor) > self.fit_tolerance:
                raise ValueError(
                    f"l*ratio at l={l} is {l * x:.3f}, outside "
                    f"{self.aggregate_factor}±{self.fit_tolerance}"
                )

    def ratio(self, l: int) -> float:
        if l < 1:
            raise ValueError("occupancy must be >= 1")
        if l <= len(self.ratios):
            return self.ratios[l - 1]
        return self.aggregate_factor / l if self.extrapolate else self.ratios[-1]


def default_interference() -> InterferenceCurve:
    return InterferenceCurve()


def flat_interference(aggregate_factor: float = 1.0) -> InterferenceCurve:
    """No slowdown at all: every job runs at its solo speed."""
    return InterferenceCurve(
        ratios=(1.0,), aggregate_factor=aggregate_factor, fit_tolerance=math.inf, extrapolate=False
    )


@dataclass(frozen=True)
class HostProfile:
    """Static service parameters of one host.

    ``mu1`` is the solo completion rate of the reference job on the
    unloaded host; ``speed_factor`` scales it (background load or faster
    silicon).  ``cores`` is informational only.
    """

    mu1: float = 1.0 / REFERENCE_SOLO_TIME
    speed_factor: float = 1.0
    cores: int = 1
    interference: InterferenceCurve = field(default_factory=default_interference)
    name: str = ""

    def __post_init__(self) -> None:
        if not self.mu1 > 0:
            raise ValueError("mu1 must be positive")
        if not self.speed_factor > 0:
            raise ValueError("speed_factor must be positive")
        if self.cores < 1:
            raise ValueError("cores must be >= 1")

    @property
    def effective_mu1(self) -> float:
        return self.mu1 * self.speed_factor

    @property
    def effective_mu0(self) -> float:
        return self.interference.aggregate_factor * self.effective_mu1

    def birth_death(self, lambda_i: float) -> BirthDeathParams:
        return BirthDeathParams(lambda_i, self.effective_mu1, self.effective_mu0)


@dataclass(frozen=True)
class BirthDeathParams:
    lambda_i: float
    mu1: float
    mu0: float

    def __post_init__(self) -> None:
        if self.lambda_i < 0 or not self.mu1 > 0 or not self.mu0 > 0:
            raise ValueError(f"invalid birth-death parameters {self}")

    @property
    def stable(self) -> bool:
        return self.lambda_i < self.mu0


def _check_stable(p: BirthDeathParams) -> None:
    if not p.stable:
        raise UnstableHostError(
            f"lambda_i={p.lambda_i:g} >= mu0={p.mu0:g}; no steady state"
        )


def steady_state_p0(p: BirthDeathParams) -> float:
    """Probability that the host is empty in steady state."""
    _check_stable(p)
    lam, mu1, mu0 = p.lambda_i, p.mu1, p.mu0
    return (1.0 - lam / mu0) / (1.0 + lam * (mu0 - mu1) / (mu0 * mu1))


def steady_state_distribution(p: BirthDeathParams, l_max: int) -> np.ndarray:
    """``p(0..l_max)`` from the closed form (not renormalised)."""
    p0 = steady_state_p0(p)
    out = np.empty(l_max + 1)
    out[0] = p0
    if l_max >= 1:
        p1 = p0 * p.lambda_i / p.mu1
        out[1:] = p1 * (p.lambda_i / p.mu0) ** np.arange(l_max)
    return out


def mean_response_time(p: BirthDeathParams) -> float:
    """Mean sojourn time at the host, via Little's law on the closed form."""
    p0 = steady_state_p0(p)
    return p0 / (p.mu1 * (1.0 - p.lambda_i / p.mu0) ** 2)


class HostState:
    """Runtime occupancy of one host.

    Subclasses implement the service discipline.  All times are absolute
    simulation seconds; ``advance`` moves the host clock forward.
    """

    def __init__(self, profile: HostProfile, cap: int = DEFAULT_OCCUPANCY_CAP) -> None:
        self.profile = profile
        self.cap = cap
        self.clock = 0.0
        self.admitted = 0
        self.completed = 0

    @property
    def occupancy(self) -> int:
        raise NotImplementedError

    def admit_job(self, job: Job, t_now: float) -> None:
        if self.occupancy >= self.cap:
            raise HostOverflow(f"occupancy cap {self.cap} reached")
        self.advance_to(t_now)
        job.t_arrive_host = t_now
        job.t_start_host = t_now
        self._admit(job)
        self.admitted += 1

    def advance(self, dt: float) -> None:
        if dt < 0:
            raise ValueError(f"cannot advance a host by negative dt={dt}")
        self.advance_to(self.clock + dt)

    def advance_to(self, t: float) -> None:
        if t < self.clock:
            raise ValueError(f"cannot move host clock back from {self.clock} to {t}")
        self._progress(t - self.clock)
        self.clock = t

    def completions(self, t_now: float) -> list[Job]:
        """Advance to ``t_now`` and remove every job finished by then."""
        self.advance_to(t_now)
        done = self._pop_finished()
        for job in done:
            job.t_finish_host = t_now
        self.completed += len(done)
        return done

    def next_completion_time(self) -> float:
        """Absolute time of the next departure, ``inf`` when idle."""
        raise NotImplementedError

    def _admit(self, job: Job) -> None:
        raise NotImplementedError

    def _progress(self, dt: float) -> None:
        raise NotImplementedError

    def _pop_finished(self) -> list[Job]:
        raise NotImplementedError


class SharedHost(HostState):
    """Processor sharing with the measured interference slowdown.

    Every resident job progresses at ``speed * mu1 * work_unit * ratio(l)``
    demand-seconds per second, where ``work_unit`` is the demand that takes
    exactly ``1/mu1`` seconds when run alone at unit speed.  Work is tracked
    through a shared virtual clock so each event is O(log l).
    """

    def __init__(
        self,
        profile: HostProfile,
        work_unit: float = REFERENCE_SOLO_TIME,
        cap: int = DEFAULT_OCCUPANCY_CAP,
    ) -> None:
        super().__init__(profile, cap)
        self.base_rate = profile.effective_mu1 * work_unit
        self.virtual = 0.0
        self._heap: list[tuple[float, int, Job]] = []
        self._start_virtual: dict[int, float] = {}

    @property
    def occupancy(self) -> int:
        return len(self._heap)

    def per_job_rate(self) -> float:
        l = len(self._heap)
        return self.base_rate * self.profile.interference.ratio(l) if l else 0.0

    def processed_work(self, job: Job) -> float:
        return self.virtual - self._start_virtual[job.id]

    def _admit(self, job: Job) -> None:
        self._start_virtual[job.id] = self.virtual
        heapq.heappush(self._heap, (self.virtual + job.demand, job.id, job))

    def _progress(self, dt: float) -> None:
        if self._heap:
            self.virtual += self.per_job_rate() * dt

    def _pop_finished(self) -> list[Job]:
        done = []
        tol = 1e-12 * max(1.0, abs(self.virtual))
        while self._heap and self._heap[0][0] - self.virtual <= tol:
            finish_v, _, job = heapq.heappop(self._heap)
            # snap to the exact finish so rounding never leaves work > demand
            self.virtual = max(self.virtual, finish_v)
            del self._start_virtual[job.id]
            done.append(job)
        return done

    def force_next(self, t_now: float) -> list[Job]:
        """Finish the head job when rounding left it a hair short at its due time."""
        if not self._heap:
            return []
        self.virtual = max(self.virtual, self._heap[0][0])
        return self.completions(t_now)

    def next_completion_time(self) -> float:
        if not self._heap:
            return math.inf
        remaining = max(self._heap[0][0] - self.virtual, 0.0)
        return self.clock + remaining / self.per_job_rate()


class MarkovHost(HostState):
    """Memoryless host matching the birth-death model exactly.

    The time to the next departure is exponential with rate ``mu1`` when one
    job is resident and ``mu0`` when two or more are; the departing job is
    picked uniformly.  The pending departure is redrawn only when the rate
    changes, which is exact by memorylessness.
    """

    def __init__(self, profile: HostProfile, stream: Stream, cap: int = DEFAULT_OCCUPANCY_CAP) -> None:
        super().__init__(profile, cap)
        self.stream = stream
        self.mu1 = profile.effective_mu1
        self.mu0 = profile.effective_mu0
        self._jobs: list[Job] = []
        self._t_next = math.inf

    @property
    def occupancy(self) -> int:
        return len(self._jobs)

    def _rate(self, l: int) -> float:
        return 0.0 if l == 0 else (self.mu1 if l == 1 else self.mu0)

    def _redraw(self) -> None:
        rate = self._rate(len(self._jobs))
        self._t_next = self.clock + self.stream.standard_exponential() / rate if rate else math.inf

    def _admit(self, job: Job) -> None:
        before = self._rate(len(self._jobs))
        self._jobs.append(job)
        if self._rate(len(self._jobs)) != before:
            self._redraw()

    def _progress(self, dt: float) -> None:
        pass

    def _pop_finished(self) -> list[Job]:
        if not self._jobs or self.clock < self._t_next:
            return []
        jobs = self._jobs
        k = self.stream.integers(len(jobs))
        jobs[k], jobs[-1] = jobs[-1], jobs[k]
        job = jobs.pop()
        self._redraw()
        return [job]

    def next_completion_time(self) -> float:
        return self._t_next


def make_host(
    profile: HostProfile,
    mode: HostMode,
    stream: Stream | None = None,
    work_unit: float = REFERENCE_SOLO_TIME,
    cap: int = DEFAULT_OCCUPANCY_CAP,
) -> HostState:
    if HostMode(mode) is HostMode.SHARED:
        return SharedHost(profile, work_unit=work_unit, cap=cap)
    if stream is None:
        raise ValueError("markov hosts need a random stream")
    return MarkovHost(profile, stream, cap=cap)


@dataclass
class MarkovRun:
    departures: int
    mean_response_time: float
    # occupancy seen by arriving jobs (before they join), thinned
    occupancy_samples: np.ndarray


def simulate_markov_host(
    p: BirthDeathParams,
    departures: int,
    seed: int = 0,
    sample_every: int = 0,
) -> MarkovRun:
    """Standalone Poisson-fed run of the birth-death host.

    A tight loop without the event engine, for checking the closed forms
    over millions of departures.  ``sample_every=k`` records the occupancy
    found by every k-th arrival.
    """
    _check_stable(p)
    stream = Stream(seed)
    exp = stream.standard_exponential
    lam, mu1, mu0 = p.lambda_i, p.mu1, p.mu0
    resident: list[float] = []
    samples: list[int] = []
    t = 0.0
    t_arr = exp() / lam
    t_dep = math.inf
    total = 0.0
    done = 0
    n_arr = 0
    while done < departures:
        if t_arr < t_dep:
            t = t_arr
            l = len(resident)
            if sample_every and n_arr % sample_every == 0:
                samples.append(l)
            n_arr += 1
            resident.append(t)
            if l == 0:
                t_dep = t + exp() / mu1
            elif l == 1:
                t_dep = t + exp() / mu0
            t_arr = t + exp() / lam
        else:
            t = t_dep
            k = stream.integers(len(resident))
            resident[k], resident[-1] = resident[-1], resident[k]
            total += t - resident.pop()
            done += 1
            l = len(resident)
            t_dep = t + exp() / (mu1 if l == 1 else mu0) if l else math.inf
    return MarkovRun(done, total / done, np.asarray(samples, dtype=np.int64))
