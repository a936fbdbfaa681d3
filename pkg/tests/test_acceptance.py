"""Acceptance criteria, one test each.

Every test prints a single ``PASS``/``FAIL`` line (also repeated in the
terminal summary) before asserting.
"""

import json
import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from oracles import birth_death_series, brute_force_allocation
from scenarios import HETERO_SPEEDS, hosts
from tapsim.allocation import allocation_surface, optimize_allocation
from tapsim.cli import main
from tapsim.config import DelaySpec, PolicyConfig, ScenarioConfig, load_preset
from tapsim.engine import Simulation, sweep
from tapsim.hostmodel import BirthDeathParams, HostMode, HostProfile, mean_response_time, steady_state_p0
from tapsim.metrics import to_csv
from tapsim.policies import GoalKind, GoalSample, PolicyKind, RnnRl, Sensible
from tapsim.workload import ArrivalKind, DemandKind, DemandSpec, Stream

TREND_LAMBDAS = (8.0, 12.0, 16.0, 20.0)
REPS = 5


def verdict(cid: str, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} criterion {cid}: {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


def test_c1_markov_host_matches_closed_form():
    mu1 = 15.6
    prof = HostProfile(mu1=mu1)
    cfg = ScenarioConfig(
        hosts=(prof,), arrival_kind=ArrivalKind.EXP, rate=5.0, host_mode=HostMode.MARKOV,
        policy=PolicyConfig(PolicyKind.ROUND_ROBIN), net_delay=DelaySpec("constant", 0.0),
        sp_period=1e9, duration=205_000.0, warmup_fraction=0.0, seed=11,
    )
    t0 = time.perf_counter()
    rep = Simulation(cfg).run()
    elapsed = time.perf_counter() - t0
    w = mean_response_time(BirthDeathParams(5.0, mu1, 1.386 * mu1))
    err = abs(rep.rt_host.mean - w) / w
    ok = rep.completed >= 10**6 and err <= 0.03 and elapsed < 30
    verdict("1", ok, f"{rep.completed} departures, simulated W={rep.rt_host.mean:.5f} vs {w:.5f} "
                     f"(rel err {err:.2%}), {elapsed:.1f}s")


def test_c2_closed_form_vs_truncated_series():
    rng = np.random.default_rng(2024)
    points = []
    for _ in range(100):
        mu1 = rng.uniform(0.5, 50.0)
        mu0 = mu1 * rng.uniform(0.5, 2.0)
        lam = mu0 * rng.uniform(0.01, 0.9)
        points.append((lam, mu1, mu0))
    t0 = time.perf_counter()
    worst = 0.0
    for lam, mu1, mu0 in points:
        p = BirthDeathParams(lam, mu1, mu0)
        series = birth_death_series(lam, mu1, mu0, 400)
        w_series = float(np.dot(np.arange(401), series) / lam)
        worst = max(worst, abs(steady_state_p0(p) - series[0]), abs(mean_response_time(p) - w_series))
    elapsed = time.perf_counter() - t0
    verdict("2", worst <= 1e-9 and elapsed < 1.0, f"max abs deviation {worst:.2e} over 100 points, {elapsed:.3f}s")


def test_c3_optimizer_vs_brute_force():
    profiles = hosts(HETERO_SPEEDS)
    mu1 = [h.effective_mu1 for h in profiles]
    mu0 = [h.effective_mu0 for h in profiles]
    t0 = time.perf_counter()
    alloc = optimize_allocation(profiles, 20.0)
    surface = allocation_surface(profiles, 20.0, 0.01)
    elapsed = time.perf_counter() - t0
    w_ref, p_ref = brute_force_allocation(mu1, mu0, 20.0, 0.001)
    finite = [(r, w) for r, w in surface if math.isfinite(w)]
    best = min(w for _, w in finite)
    argmins = [r for r, w in finite if w == best]
    interior = len(argmins) == 1 and all(x > 0 for x in argmins[0])
    diff = abs(alloc.w - w_ref)
    ok = diff <= 1e-4 and interior and elapsed < 60
    verdict("3", ok, f"W={alloc.w:.8f} at p={tuple(round(x, 4) for x in alloc.p)}, brute force {w_ref:.8f} "
                     f"at {p_ref}, |diff|={diff:.1e}, unique interior surface minimum={interior}, {elapsed:.2f}s")


def test_c4_sensible_fractions():
    pol = Sensible(3)
    for h, g in enumerate((1.0, 2.0, 4.0)):
        pol.observe(GoalSample(h, GoalKind.ET, g))
    rng = Stream(4)
    n = 10**5
    counts = np.bincount([pol.decide(0.0, rng) for _ in range(n)], minlength=3)
    frac = counts / n
    target = np.array([4, 2, 1]) / 7
    dev = float(np.max(np.abs(frac - target)))
    verdict("4", dev <= 0.02, f"fractions {np.round(frac, 4).tolist()} vs {np.round(target, 4).tolist()}, "
                              f"max dev {dev:.4f}")


def test_c5_rnn_advice():
    pol = RnnRl(3)
    rng = Stream(5)
    decisions = []
    for k in range(10_000):
        h = pol.decide(float(k), rng)
        decisions.append(h)
        pol.observe(GoalSample(h, GoalKind.ET, 0.5 if h == 2 else 1.0))
    post = decisions[len(decisions) // 10:]
    share = post.count(2) / len(post)
    verdict("5", share >= 0.85, f"{share:.1%} of post-warmup decisions to host 3")


def _trend_cells(preset, policies):
    base = load_preset(preset)
    res = sweep(base, TREND_LAMBDAS, policies, reps=REPS)
    table = {}
    for r in res:
        assert not hasattr(r, "message"), r
        table.setdefault((r.lam, r.policy), []).append(r.et.mean)
    return table


def test_c6_heterogeneous_trend():
    t0 = time.perf_counter()
    kinds = [PolicyKind.RNN_RL, PolicyKind.SENSIBLE, PolicyKind.ROUND_ROBIN, PolicyKind.EQUAL_PROB]
    table = _trend_cells("heterogeneous", kinds)
    elapsed = time.perf_counter() - t0
    cells_ok = []
    for lam in TREND_LAMBDAS:
        col = {k: table[(lam, k.value)] for k in kinds}
        for adaptive in ("RNN_RL", "SENSIBLE"):
            for static in ("ROUND_ROBIN", "EQUAL_PROB"):
                wins = sum(a < s for a, s in zip(col[PolicyKind(adaptive)], col[PolicyKind(static)]))
                cells_ok.append((lam, adaptive, static, wins))
        print("  lambda=%g " % lam + " ".join(f"{k.value}={np.mean(v):.4f}" for k, v in col.items()))
    failed = [c for c in cells_ok if c[3] <= REPS // 2]
    ok = not failed and elapsed < 600
    verdict("6", ok, f"{len(cells_ok) - len(failed)}/{len(cells_ok)} comparisons won by majority "
                     f"of {REPS} reps, {elapsed:.0f}s" + (f"; lost: {failed}" if failed else ""))


def test_c7_homogeneous_trend():
    table = _trend_cells("homogeneous", [PolicyKind.ROUND_ROBIN, PolicyKind.SENSIBLE])
    results = []
    for lam in TREND_LAMBDAS[1:]:
        rr, se = table[(lam, "ROUND_ROBIN")], table[(lam, "SENSIBLE")]
        wins = sum(a <= b for a, b in zip(rr, se))
        results.append((lam, wins, float(np.mean(rr)), float(np.mean(se))))
    ok = all(w > REPS // 2 for _, w, _, _ in results)
    verdict("7", ok, "; ".join(f"lambda={lam:g}: RR {a:.4f} vs SENSIBLE {b:.4f} ({w}/{REPS} reps)"
                              for lam, w, a, b in results))


def test_c8_byte_identical_csv(tmp_path):
    cfg = load_preset("heterogeneous").replace(duration=60.0, seed=99)
    first, second = to_csv([Simulation(cfg).run()]), to_csv([Simulation(cfg).run()])
    outs = []
    for d in ("a", "b"):
        assert main(["run", "--preset", "heterogeneous", "--seed", "7", "-o", str(tmp_path / d), "--json"]) == 0
        outs.append(((tmp_path / d / "results.csv").read_bytes(), (tmp_path / d / "results.json").read_bytes()))
    ok = first == second and outs[0] == outs[1]
    verdict("8", ok, "library and CLI reruns byte-identical" if ok else "reruns differ")


def _random_scenario(rng: np.random.Generator, i: int) -> ScenarioConfig:
    n = int(rng.integers(1, 5))
    policy = PolicyKind(rng.choice([k.value for k in PolicyKind]))
    if n == 1 and policy in (PolicyKind.RNN_RL, PolicyKind.RNN_SENSIBLE):
        n = 2
    profiles = tuple(HostProfile(speed_factor=float(rng.uniform(0.25, 2.0))) for _ in range(n))
    delay = DelaySpec(str(rng.choice(["constant", "exponential"])), float(rng.choice([0.0, 0.001, 0.01])))
    return ScenarioConfig(
        hosts=profiles,
        arrival_kind=ArrivalKind(rng.choice(["CR", "EXP"])),
        rate=float(rng.uniform(0.5, 40.0)),
        policy=PolicyConfig(policy, renormalize=bool(rng.integers(2))),
        goal=GoalKind(rng.choice(["ET", "RT"])),
        host_mode=HostMode(rng.choice(["shared", "markov"])),
        demand=DemandSpec(DemandKind(rng.choice(["deterministic", "exponential"]))),
        net_delay=delay,
        sp_period=float(rng.choice([0.05, 0.1, 0.5])),
        sp_focus=bool(rng.integers(2)),
        duration=float(rng.uniform(0.5, 3.0)),
        seed=i,
    )


def _check_run(cfg: ScenarioConfig) -> list[str]:
    problems = []
    sim = Simulation(cfg, keep_jobs=True)
    rnn_state = getattr(sim.policy, "state", None)
    if rnn_state is not None:
        r0 = rnn_state.firing_rates().copy()

        def check_rnn(s):
            if not (np.all(s.q >= 0) and np.all(s.q <= 1)):
                problems.append("q outside [0, 1]")
            if s.renormalize and not np.allclose(s.firing_rates(), r0, rtol=1e-9):
                problems.append("firing rates not preserved")

        sim.policy.trace = check_rnn
    rep = sim.run()
    if rep.arrivals != rep.completed + rep.in_flight + rep.dropped:
        problems.append("job conservation")
    d_min = cfg.net_delay.minimum()
    for j in sim.jobs:
        if j.is_complete():
            if not j.timestamps_monotone():
                problems.append(f"job {j.id} timestamps")
            if j.response_time_controller < j.execution_time + 2 * d_min - 1e-9:
                problems.append(f"job {j.id} RT < ET + 2d")
    if rep.jobs > 0:
        if abs(sum(rep.fractions) - 1.0) > 1e-9:
            problems.append("fractions")
        if not rep.et.mean <= rep.rt_host.mean + 1e-12 <= rep.rt_ctrl.mean + 2e-12:
            problems.append("ET <= RT_host <= RT_ctrl")
    return problems


def test_c9_invariants_over_random_scenarios():
    rng = np.random.default_rng(9)
    failures = {}
    t0 = time.perf_counter()
    for i in range(1000):
        cfg = _random_scenario(rng, i)
        problems = _check_run(cfg)
        if problems:
            failures[i] = sorted(set(problems))[:3]
    elapsed = time.perf_counter() - t0
    verdict("9", not failures, f"{1000 - len(failures)}/1000 randomized scenarios clean, {elapsed:.1f}s"
                               + (f"; first failures {dict(list(failures.items())[:3])}" if failures else ""))
