"""Model-based split of the arrival stream across hosts.

Minimises the predicted overall mean response time
``sum_i p_i * W_i(p_i * lam)`` over the probability simplex, where ``W_i`` is
the birth-death host response time.  A coarse exhaustive grid locates the
basin and Nelder-Mead polishes it.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from tapsim.hostmodel import BirthDeathParams, HostProfile

MAX_GRID_POINTS = 250_000


class InfeasibleAllocation(ValueError):
    """No split keeps every host below its saturation rate."""


@dataclass(frozen=True)
class Allocation:
    p: tuple[float, ...]
    w: float


def _rates(bases: Sequence[BirthDeathParams | HostProfile]) -> tuple[np.ndarray, np.ndarray]:
    mu1, mu0 = [], []
    for b in bases:
        if isinstance(b, HostProfile):
            mu1.append(b.effective_mu1)
            mu0.append(b.effective_mu0)
        else:
            mu1.append(b.mu1)
            mu0.append(b.mu0)
    return np.asarray(mu1, float), np.asarray(mu0, float)


def overall_response_time(p, lam: float, mu1: np.ndarray, mu0: np.ndarray) -> np.ndarray:
    """Predicted mean response time for one split or a stack of splits.

    ``p`` has shape (..., N).  Unstable splits evaluate to ``inf``.
    """
    p = np.asarray(p, float)
    li = p * lam
    rho0 = li / mu0
    with np.errstate(divide="ignore", invalid="ignore"):
        p0 = (1.0 - rho0) / (1.0 + li * (mu0 - mu1) / (mu0 * mu1))
        w_host = p0 / (mu1 * (1.0 - rho0) ** 2)
        terms = np.where(p > 0, p * w_host, 0.0)
    total = terms.sum(axis=-1)
    bad = np.any((rho0 >= 1.0) & (p > 0), axis=-1) | np.any(p < 0, axis=-1)
    return np.where(bad, np.inf, total)


def simplex_grid(n: int, k: int) -> np.ndarray:
    """Every point of the N-simplex with coordinates in multiples of 1/k."""
    if n == 1:
        return np.ones((1, 1))
    rows = []
    for bars in itertools.combinations(range(k + n - 1), n - 1):
        edges = (-1,) + bars + (k + n - 1,)
        rows.append([edges[i + 1] - edges[i] - 1 for i in range(n)])
    return np.asarray(rows, float) / k


def _grid_divisions(n: int, step: float) -> int:
    k = max(1, round(1.0 / step))
    while k > 1 and math.comb(k + n - 1, n - 1) > MAX_GRID_POINTS:
        k //= 2
    return k


def optimize_allocation(
    bases: Sequence[BirthDeathParams | HostProfile],
    lam: float,
    grid_step: float = 0.01,
    xatol: float = 1e-5,
) -> Allocation:
    """Routing probabilities minimising the predicted mean response time."""
    mu1, mu0 = _rates(bases)
    n = len(mu1)
    if n == 0:
        raise ValueError("need at least one host")
    if not lam > 0:
        raise ValueError("total arrival rate must be positive")
    if lam >= mu0.sum():
        raise InfeasibleAllocation(
            f"lambda={lam:g} >= total saturated capacity {mu0.sum():g}"
        )
    if n == 1:
        return Allocation((1.0,), float(overall_response_time([1.0], lam, mu1, mu0)))

    grid = simplex_grid(n, _grid_divisions(n, grid_step))
    w_grid = overall_response_time(grid, lam, mu1, mu0)
    seeds = [mu0 / mu0.sum()]
    if np.isfinite(w_grid).any():
        seeds.insert(0, grid[int(np.argmin(w_grid))])

    def objective(x: np.ndarray) -> float:
        p = np.append(x, 1.0 - x.sum())
        return float(overall_response_time(p, lam, mu1, mu0))

    best_p, best_w = seeds[-1], objective(seeds[-1][:-1])
    for start in seeds:
        w0 = objective(start[:-1])
        if w0 < best_w:
            best_p, best_w = start, w0
        x0 = start[:-1]
        init = np.vstack([x0] + [x0 + grid_step * 0.5 * e for e in np.eye(n - 1)])
        res = minimize(
            objective,
            x0,
            method="Nelder-Mead",
            options={"initial_simplex": init, "xatol": xatol, "fatol": 1e-13, "maxiter": 20_000},
        )
        if np.isfinite(res.fun) and res.fun < best_w:
            best_p, best_w = np.append(res.x, 1.0 - res.x.sum()), float(res.fun)

    p = np.clip(best_p, 0.0, None)
    p = p / p.sum()
    return Allocation(tuple(float(x) for x in p), float(overall_response_time(p, lam, mu1, mu0)))


def allocation_surface(
    bases: Sequence[BirthDeathParams | HostProfile],
    lam: float,
    step: float = 0.01,
) -> list[tuple[tuple[float, ...], float]]:
    """Predicted response time at every grid split, as (per-host rates, W)."""
    mu1, mu0 = _rates(bases)
    grid = simplex_grid(len(mu1), _grid_divisions(len(mu1), step))
    w = overall_response_time(grid, lam, mu1, mu0)
    return [(tuple(float(x) for x in row * lam), float(v)) for row, v in zip(grid, w)]
