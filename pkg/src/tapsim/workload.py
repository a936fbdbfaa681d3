"""Job records, arrival processes and service demands."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

# Draw block size for buffered scalar streams.
_BLOCK = 4096


class ArrivalKind(str, enum.Enum):
    CR = "CR"
    EXP = "EXP"


class DemandKind(str, enum.Enum):
    DETERMINISTIC = "deterministic"
    EXPONENTIAL = "exponential"


def make_rng(seed) -> np.random.Generator:
    """PCG64 generator from an int seed or a SeedSequence."""
    return np.random.Generator(np.random.PCG64(seed))


class Stream:
    """Buffered scalar draws from one generator.

    numpy scalar draws cost about a microsecond each; drawing blocks keeps
    the event loop fast while staying reproducible for a given seed.
    """

    __slots__ = ("_rng", "_exp", "_exp_i", "_uni", "_uni_i")

    def __init__(self, seed) -> None:
        self._rng = make_rng(seed)
        self._exp: list[float] = []
        self._exp_i = 0
        self._uni: list[float] = []
        self._uni_i = 0

    def standard_exponential(self) -> float:
        if self._exp_i >= len(self._exp):
            self._exp = self._rng.standard_exponential(_BLOCK).tolist()
            self._exp_i = 0
        x = self._exp[self._exp_i]
        self._exp_i += 1
        return x

    def exponential(self, mean: float) -> float:
        return mean * self.standard_exponential()

    def random(self) -> float:
        if self._uni_i >= len(self._uni):
            self._uni = self._rng.random(_BLOCK).tolist()
            self._uni_i = 0
        u = self._uni[self._uni_i]
        self._uni_i += 1
        return u

    def integers(self, n: int) -> int:
        """Uniform integer in [0, n)."""
        return min(int(self.random() * n), n - 1)


@dataclass
class Job:
    """One unit of work and its lifecycle timestamps (seconds).

    Timestamps stay NaN until the corresponding event happens.
    """

    id: int
    t_arrive_controller: float
    demand: float
    host_assigned: int = -1
    t_dispatched: float = math.nan
    t_arrive_host: float = math.nan
    t_start_host: float = math.nan
    t_finish_host: float = math.nan
    t_ack_controller: float = math.nan

    @property
    def execution_time(self) -> float:
        return self.t_finish_host - self.t_start_host

    @property
    def response_time_host(self) -> float:
        return self.t_finish_host - self.t_arrive_host

    @property
    def response_time_controller(self) -> float:
        return self.t_ack_controller - self.t_arrive_controller

    def is_complete(self) -> bool:
        return not math.isnan(self.t_ack_controller)

    def timestamps_monotone(self) -> bool:
        ts = (
            self.t_arrive_controller,
            self.t_dispatched,
            self.t_arrive_host,
            self.t_start_host,
            self.t_finish_host,
            self.t_ack_controller,
        )
        return all(a <= b for a, b in zip(ts, ts[1:]))


@dataclass
class ArrivalProcess:
    """Constant-rate (CR) or Poisson (EXP) job arrivals.

    ``next_arrival`` advances from an arbitrary instant; ``times`` yields the
    whole stream, placing CR arrival k exactly at k/rate instead of
    accumulating rounding error.
    """

    kind: ArrivalKind
    rate: float
    seed: int | np.random.SeedSequence = 0
    _stream: Stream = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.kind = ArrivalKind(self.kind)
        if not self.rate > 0 or not math.isfinite(self.rate):
            raise ValueError(f"arrival rate must be positive, got {self.rate}")
        self._stream = Stream(self.seed)

    def next_arrival(self, t_now: float) -> float:
        if t_now < 0:
            raise ValueError("t_now must be non-negative")
        if self.kind is ArrivalKind.CR:
            return t_now + 1.0 / self.rate
        return t_now + self._stream.standard_exponential() / self.rate

    def times(self, until: float = math.inf) -> Iterator[float]:
        """Arrival instants in (0, until]."""
        if self.kind is ArrivalKind.CR:
            k = 1
            while (t := k / self.rate) <= until:
                yield t
                k += 1
        else:
            t = self.next_arrival(0.0)
            while t <= until:
                yield t
                t = self.next_arrival(t)


@dataclass(frozen=True)
class DemandSpec:
    kind: DemandKind = DemandKind.DETERMINISTIC
    mean: float = 0.0641

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", DemandKind(self.kind))
        if not self.mean > 0 or not math.isfinite(self.mean):
            raise ValueError(f"demand mean must be positive, got {self.mean}")


def make_demand(dist: DemandSpec, rng) -> float:
    """Solo-work demand in seconds; ``rng`` needs ``standard_exponential()``."""
    if dist.kind is DemandKind.DETERMINISTIC:
        return dist.mean
    return dist.mean * rng.standard_exponential()
