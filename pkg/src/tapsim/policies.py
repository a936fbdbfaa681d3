"""Dispatch policies.

Every policy answers ``decide(t_now, rng)`` with a host index in ``0..N-1``
and learns (or not) from ``observe(sample)``.  ``rng`` is anything with a
``random()`` method returning a uniform float in [0, 1).
"""

from __future__ import annotations

import bisect
import enum
import logging
import math
from dataclasses import dataclass
from itertools import accumulate
from typing import Sequence

import numpy as np

from tapsim import rnn
from tapsim.allocation import InfeasibleAllocation, optimize_allocation
from tapsim.hostmodel import HostProfile

log = logging.getLogger(__name__)

G_FLOOR = 1e-6


class PolicyKind(str, enum.Enum):
    RNN_RL = "RNN_RL"
    RNN_SENSIBLE = "RNN_SENSIBLE"
    SENSIBLE = "SENSIBLE"
    MODEL_BASED = "MODEL_BASED"
    ROUND_ROBIN = "ROUND_ROBIN"
    EQUAL_PROB = "EQUAL_PROB"


ALL_POLICIES = tuple(PolicyKind)


class GoalKind(str, enum.Enum):
    ET = "ET"  # execution time at the host
    RT = "RT"  # response time seen by the controller


@dataclass(frozen=True)
class GoalSample:
    host: int
    goal_kind: GoalKind
    value: float
    t_measured: float = 0.0
    t_delivered: float = 0.0

    def __post_init__(self) -> None:
        if not self.value >= 0:
            raise ValueError(f"goal value must be non-negative, got {self.value}")
        if self.t_delivered < self.t_measured:
            raise ValueError("sample delivered before it was measured")


def _check_vector(p: Sequence[float]) -> tuple[float, ...]:
    p = tuple(float(x) for x in p)
    if any(x < 0 for x in p) or abs(sum(p) - 1.0) > 1e-9:
        raise ValueError(f"probabilities must be non-negative and sum to 1, got {p}")
    return p


def draw(cumulative: list[float], u: float) -> int:
    i = bisect.bisect_right(cumulative, u * cumulative[-1])
    return min(i, len(cumulative) - 1)


class Policy:
    kind: PolicyKind

    def __init__(self, n: int) -> None:
        if n < 1:
            raise ValueError("need at least one host")
        self.n = n

    def decide(self, t_now: float, rng) -> int:
        raise NotImplementedError

    def observe(self, sample: GoalSample) -> None:
        self._check_host(sample.host)

    def probabilities(self) -> tuple[float, ...]:
        """Current marginal probability of choosing each host."""
        raise NotImplementedError

    def _check_host(self, host: int) -> None:
        if not 0 <= host < self.n:
            raise ValueError(f"sample for unknown host {host} (N={self.n})")


class RoundRobin(Policy):
    kind = PolicyKind.ROUND_ROBIN

    def __init__(self, n: int) -> None:
        super().__init__(n)
        self.cursor = 0

    def decide(self, t_now, rng):
        host = self.cursor
        self.cursor = (self.cursor + 1) % self.n
        return host

    def probabilities(self):
        return (1.0 / self.n,) * self.n


class FixedProbability(Policy):
    """Static random split; the model-based policy is one of these."""

    kind = PolicyKind.EQUAL_PROB

    def __init__(self, p: Sequence[float], kind: PolicyKind = PolicyKind.EQUAL_PROB) -> None:
        super().__init__(len(p))
        self.kind = kind
        self.p = _check_vector(p)
        self._cum = list(accumulate(self.p))

    @classmethod
    def uniform(cls, n: int) -> FixedProbability:
        return cls([1.0 / n] * n)

    def decide(self, t_now, rng):
        return draw(self._cum, rng.random())

    def probabilities(self):
        return self.p


class Sensible(Policy):
    """Randomised dispatch with probability proportional to 1/G_i.

    ``alpha`` is the weight of the newest measurement in the moving average.
    Hosts never measured borrow the first value seen from any host.
    """

    kind = PolicyKind.SENSIBLE

    def __init__(self, n: int, alpha: float = 0.1) -> None:
        super().__init__(n)
        if not 0.0 <= alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
        self.alpha = alpha
        self.g: list[float | None] = [None] * n
        self._bootstrap: float | None = None
        self._cum = list(accumulate([1.0 / n] * n))

    def estimates(self) -> list[float | None]:
        return list(self.g)

    def observe(self, sample):
        self._check_host(sample.host)
        v = sample.value
        if self._bootstrap is None:
            self._bootstrap = v
        old = self.g[sample.host]
        self.g[sample.host] = v if old is None else (1.0 - self.alpha) * old + self.alpha * v
        self._refresh()

    def _refresh(self) -> None:
        inv = []
        for g in self.g:
            g = self._bootstrap if g is None else g
            inv.append(1.0 / max(g, G_FLOOR))
        self._cum = list(accumulate(inv))

    def decide(self, t_now, rng):
        return draw(self._cum, rng.random())

    def probabilities(self):
        total = self._cum[-1]
        prev = [0.0] + self._cum[:-1]
        return tuple((c - a) / total for a, c in zip(prev, self._cum))


class RnnRl(Policy):
    """Greedy on the RNN's most excited neuron, exploring a fixed share of the time."""

    kind = PolicyKind.RNN_RL

    def __init__(self, n: int, alpha: float = 0.9, exploration: float = 0.1, renormalize: bool = False) -> None:
        super().__init__(n)
        if not 0.0 <= exploration <= 1.0:
            raise ValueError("exploration must lie in [0, 1]")
        self.exploration = exploration
        self.state = rnn.init(n, alpha=alpha, renormalize=renormalize)
        self.trace = None  # optional callable(state) after each update

    def observe(self, sample):
        self._check_host(sample.host)
        rnn.reinforce(self.state, sample.host, sample.value)
        if self.trace is not None:
            self.trace(self.state)

    def decide(self, t_now, rng):
        if rng.random() < self.exploration:
            return min(int(rng.random() * self.n), self.n - 1)
        return self.state.best()

    def probabilities(self):
        e = self.exploration
        p = [e / self.n] * self.n
        p[self.state.best()] += 1.0 - e
        return tuple(p)


class RnnSensible(RnnRl):
    """Draws host i with probability q_i / sum(q)."""

    kind = PolicyKind.RNN_SENSIBLE

    def __init__(self, n: int, alpha: float = 0.9, renormalize: bool = False) -> None:
        super().__init__(n, alpha=alpha, exploration=0.0, renormalize=renormalize)

    def decide(self, t_now, rng):
        return draw(list(accumulate(self.state.q.tolist())), rng.random())

    def probabilities(self):
        q = self.state.q
        return tuple((q / q.sum()).tolist())


def model_based(profiles: Sequence[HostProfile], lam: float) -> FixedProbability:
    """Static split from the analytical optimum for total rate ``lam``.

    Past total saturation there is no stable optimum; the split then falls
    back to capacity-proportional so overloaded scenarios still run.
    """
    try:
        p = optimize_allocation(profiles, lam).p
    except InfeasibleAllocation as exc:
        log.warning("model-based allocation infeasible (%s); using capacity-proportional split", exc)
        mu0 = np.array([h.effective_mu0 for h in profiles])
        p = tuple((mu0 / mu0.sum()).tolist())
    return FixedProbability(p, kind=PolicyKind.MODEL_BASED)


def make_policy(
    kind: PolicyKind | str,
    profiles: Sequence[HostProfile],
    lam: float | None = None,
    *,
    alpha: float | None = None,
    exploration: float = 0.1,
    renormalize: bool = False,
    probabilities: Sequence[float] | None = None,
) -> Policy:
    kind = PolicyKind(kind)
    n = len(profiles)
    if kind is PolicyKind.ROUND_ROBIN:
        return RoundRobin(n)
    if kind is PolicyKind.EQUAL_PROB:
        if probabilities is not None:
            return FixedProbability(probabilities)
        return FixedProbability.uniform(n)
    if kind is PolicyKind.SENSIBLE:
        return Sensible(n, alpha=0.1 if alpha is None else alpha)
    if kind is PolicyKind.MODEL_BASED:
        if probabilities is not None:
            return FixedProbability(probabilities, kind=PolicyKind.MODEL_BASED)
        if lam is None or math.isnan(lam):
            raise ValueError("model-based allocation needs the total arrival rate")
        return model_based(profiles, lam)
    if kind is PolicyKind.RNN_RL:
        return RnnRl(n, alpha=0.9 if alpha is None else alpha, exploration=exploration, renormalize=renormalize)
    return RnnSensible(n, alpha=0.9 if alpha is None else alpha, renormalize=renormalize)
