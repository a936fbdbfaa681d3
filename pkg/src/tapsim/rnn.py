"""Random neural network with reinforcement-learning weight updates.

One neuron per host.  The equilibrium excitation probability ``q[i]`` of a
neuron ranks host ``i``; goal measurements push weights toward hosts that do
better than a smoothed threshold.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

TOLERANCE = 1e-10
MAX_SWEEPS = 10_000


@dataclass
class RnnState:
    """Weights, external inputs and equilibrium of an N-neuron network.

    ``w_plus[j, i]`` is the excitatory weight from neuron j to neuron i, and
    likewise ``w_minus``.  ``threshold`` stays None until the first goal
    sample arrives.
    """

    w_plus: np.ndarray
    w_minus: np.ndarray
    Lambda: np.ndarray
    lambda_in: np.ndarray
    q: np.ndarray
    alpha: float = 0.9
    renormalize: bool = False
    threshold: float | None = None
    updates: int = 0
    last_residual: float = 0.0
    converged: bool = True

    @property
    def n(self) -> int:
        return len(self.q)

    def firing_rates(self) -> np.ndarray:
        return self.w_plus.sum(axis=1) + self.w_minus.sum(axis=1)

    def best(self) -> int:
        # argmax returns the first maximum, so ties go to the lowest index
        return int(np.argmax(self.q))

    def to_dict(self) -> dict:
        return {
            "updates": self.updates,
            "threshold": self.threshold,
            "q": self.q.tolist(),
            "w_plus": self.w_plus.tolist(),
            "w_minus": self.w_minus.tolist(),
        }


def init(n: int, alpha: float = 0.9, renormalize: bool = False) -> RnnState:
    """Symmetric start: every q is 0.5 and every firing rate is 1."""
    if n < 2:
        raise ValueError(f"an RNN needs at least two neurons, got {n}")
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    w = np.full((n, n), 1.0 / (2 * (n - 1)))
    np.fill_diagonal(w, 0.0)
    return RnnState(
        w_plus=w.copy(),
        w_minus=w.copy(),
        Lambda=np.full(n, 0.25),
        lambda_in=np.zeros(n),
        q=np.full(n, 0.5),
        alpha=alpha,
        renormalize=renormalize,
    )


def firing_rate(state: RnnState, i: int) -> float:
    return float(state.w_plus[i].sum() + state.w_minus[i].sum())


def solve_equilibrium(state: RnnState, tol: float = TOLERANCE, max_sweeps: int = MAX_SWEEPS) -> np.ndarray:
    """Fixed-point iteration of the excitation equations from the current q.

    Saturated neurons are clamped at 1.  On non-convergence the last iterate
    is kept and the residual logged; the caller carries on.
    """
    r = state.firing_rates()
    wp, wm = state.w_plus, state.w_minus
    base_num, base_den = state.Lambda, r + state.lambda_in
    q = state.q
    delta = math.inf
    for _ in range(max_sweeps):
        num = base_num + q @ wp
        den = base_den + q @ wm
        with np.errstate(divide="ignore", invalid="ignore"):
            new = np.where(den > 0, num / den, np.where(num > 0, 1.0, 0.0))
        np.minimum(new, 1.0, out=new)
        delta = float(np.max(np.abs(new - q)))
        q = new
        if delta < tol:
            break
    state.q = q
    state.last_residual = delta
    state.converged = delta < tol
    if not state.converged:
        log.warning("RNN equilibrium did not converge: residual %.3g after %d sweeps", delta, max_sweeps)
    return q


def equilibrium_residual(state: RnnState) -> np.ndarray:
    """Per-neuron residual of the excitation equations at the current q.

    Clamped neurons (q == 1 with the ratio above 1) report zero.
    """
    r = state.firing_rates()
    num = state.Lambda + state.q @ state.w_plus
    den = r + state.lambda_in + state.q @ state.w_minus
    ratio = num / den
    res = np.abs(state.q - ratio)
    res[(state.q >= 1.0) & (ratio >= 1.0)] = 0.0
    return res


def reinforce(state: RnnState, i_decided: int, goal: float) -> RnnState:
    """Apply one goal measurement for host ``i_decided`` (smaller is better)."""
    n = state.n
    if not 0 <= i_decided < n:
        raise IndexError(f"neuron {i_decided} out of range for N={n}")
    if not goal >= 0 or not math.isfinite(goal):
        raise ValueError(f"goal value must be finite and non-negative, got {goal}")

    if state.threshold is None:
        state.threshold = goal
    else:
        state.threshold = state.alpha * state.threshold + (1.0 - state.alpha) * goal

    r_old = state.firing_rates()
    spread = goal / (n - 2) if n > 2 else goal
    # "others" marks the columns k != i_decided; diagonal entries are re-zeroed below
    others = np.ones(n, dtype=bool)
    others[i_decided] = False
    if goal < state.threshold:
        state.w_plus[:, i_decided] += goal
        state.w_minus[:, others] += spread
    else:
        state.w_plus[:, others] += spread
        state.w_minus[:, i_decided] += goal
    np.fill_diagonal(state.w_plus, 0.0)
    np.fill_diagonal(state.w_minus, 0.0)

    if state.renormalize:
        r_new = state.firing_rates()
        scale = np.divide(r_old, r_new, out=np.ones(n), where=r_new > 0)
        state.w_plus *= scale[:, None]
        state.w_minus *= scale[:, None]

    state.updates += 1
    solve_equilibrium(state)
    return state
