"""Acceptance checks, one test per criterion. Each prints PASS/FAIL lines that
are also collected in the end-of-run summary. Several run minutes of sampling."""
import math
import statistics
import time

import mpmath
import numpy as np
import pytest

from latticelock.circuits import gen_repetition, gen_surface_memory
from latticelock.decoders import build_graph, estimate_ler, expected_latency, latency_speedup, make_decoder, unit_faults
from latticelock.decoders.ler import MissLatency
from latticelock.experiments import ExperimentConfig, run_point, run_sweep
from latticelock.noise import NoiseModel, annotate, idling_channel
from latticelock.policies import Policy, plan_k_sync, solve_extra_rounds, solve_hybrid
from latticelock.syncengine import build_tables, engine_compute, measure_planning_time
from latticelock.timing import PROFILES, InvalidRequestError, PatchTimingState


def median_ns(fn, reps=2000):
    samples = []
    for _ in range(reps):
        t0 = time.perf_counter_ns()
        fn()
        samples.append(time.perf_counter_ns() - t0)
    return statistics.median(samples)


def test_criterion_01_hybrid_solver_exact(criterion):
    h = solve_hybrid(1000, 1325, 1000, epsilon=400, z_max=5)
    m = solve_extra_rounds(1000, 1325, 1000)
    h2 = solve_hybrid(1000, 1325, 800, epsilon=200)
    t = max(median_ns(lambda: solve_hybrid(1000, 1325, 1000, 400, 5)),
            median_ns(lambda: solve_extra_rounds(1000, 1325, 1000)))
    ok = (h.z, h.residual_idle, m.m, h2.z, h2.residual_idle) == (4, 300, 52, 3, 175) and t < 1e6
    detail = (f"z={h.z} residual={h.residual_idle} m={m.m}; tau=800/eps=200: z={h2.z} "
              f"residual={h2.residual_idle}; median {t / 1e3:.1f} us")
    assert criterion(1, ok, detail)


def brute_extra_rounds(tp, tp2, tau, bound=200):
    for m in range(bound + 1):
        for n in range(bound + 1):
            if n * tp2 == m * tp + tau:
                return m, n
    return None


def test_criterion_02_extra_rounds_oracle(criterion):
    cycles = range(900, 1401, 25)
    checked = mismatches = 0
    for tp in cycles:
        for tp2 in cycles:
            if tp == tp2:
                continue
            for tau in range(0, 1301, 100):
                sol = solve_extra_rounds(tp, tp2, tau)
                got = None if sol is None else (sol.m, sol.n)
                none_iff = (sol is None) == (tau % math.gcd(tp, tp2) != 0)
                if got != brute_extra_rounds(tp, tp2, tau) or not none_iff:
                    mismatches += 1
                checked += 1
    assert criterion(2, mismatches == 0, f"{checked} cases, {mismatches} mismatches")


def test_criterion_03_idling_channel(criterion):
    mpmath.mp.dps = 50
    prof = PROFILES["google"]
    ch = idling_channel(500, prof.T1, prof.T2)
    g, t1, t2 = mpmath.mpf(500), mpmath.mpf(prof.T1), mpmath.mpf(prof.T2)
    px = (1 - mpmath.exp(-g / t1)) / 4
    pz = (1 - mpmath.exp(-g / t2)) / 2 - px
    err = max(abs((mpmath.mpf(ch.p_x) - px) / px), abs((mpmath.mpf(ch.p_z) - pz) / pz))
    limits = idling_channel(0, prof.T1, prof.T2).probs == (0.0, 0.0, 0.0) and (
        idling_channel(math.inf, prof.T1, prof.T2).probs == (0.25, 0.25, 0.25))
    concave = all(
        n * idling_channel(tau / n, prof.T1, prof.T2).p_x >= idling_channel(tau, prof.T1, prof.T2).p_x
        and idling_channel(tau / n, prof.T1, prof.T2).p_x < idling_channel(tau, prof.T1, prof.T2).p_x
        for n in (2, 4, 8) for tau in range(100, 2001, 100)
    )
    ok = ch.p_x == ch.p_y and err <= 1e-12 and limits and concave
    detail = (f"p_x=p_y={ch.p_x:.6e} p_z={ch.p_z:.6e} rel.err={float(err):.1e}; "
              f"limits {'ok' if limits else 'bad'}; concavity {'ok' if concave else 'bad'}")
    assert criterion(3, ok, detail)


def _fault_batch(faults, sets, n_det):
    ptr, det, obs = [0], [], []
    for s in sets:
        syn = np.zeros(n_det, dtype=bool)
        o = 0
        for i in s:
            syn[faults.dets(i)] ^= True
            o ^= int(faults.obs[i])
        det.extend(np.flatnonzero(syn))
        ptr.append(len(det))
        obs.append(o)
    return np.array(ptr), np.array(det, dtype=np.int64), np.array(obs, dtype=np.uint64)


def test_criterion_04_distance(criterion):
    results = []
    rng = np.random.default_rng(2024)
    for d, sets_of in ((3, None), (5, 10**5)):
        c = annotate(gen_surface_memory(d, d), NoiseModel(1e-3, "google"))
        f = unit_faults(c)
        g = build_graph(c, f)
        w = np.ones(g.n_edges)
        if sets_of is None:
            sets = [(i,) for i in range(len(f))]
        else:
            sizes = rng.integers(1, 3, size=sets_of)
            sets = [tuple(rng.choice(len(f), size=int(k), replace=False)) for k in sizes]
        ptr, det, obs = _fault_batch(f, sets, g.n_detectors)
        for kind in ("bruteforce", "uf"):
            wrong = int(np.count_nonzero(make_decoder(g, kind, w).decode_csr(ptr, det) != obs))
            results.append((d, kind, len(sets), wrong))
    ok = all(r[3] == 0 for r in results)
    detail = "; ".join(f"d={d} {k}: {n} sets, {w} wrong" for d, k, n, w in results)
    assert criterion(4, ok, detail)


@pytest.fixture(scope="module")
def headline_runs():
    """The long surgery runs shared by criteria 5 and 6."""
    runs = {}
    for d, shots in ((3, 10**7), (5, 10**6)):
        cfg = ExperimentConfig(d=d, p=1e-3, profile="google", tau_ns=[1000], shots=shots, seed=d)
        for pol in ("Passive", "Active"):
            runs[(d, pol)] = run_point(cfg, pol, 1000)
    cfg = ExperimentConfig(d=3, p=1e-3, profile="google", tau_ns=[1000], shots=10**7, seed=13,
                           cycle_p_ns=1000, cycle_p2_ns=1325)
    for pol in ("Passive", "Active", "Hybrid"):
        runs[("table", pol)] = run_point(cfg, pol, 1000)
    return runs


def _fmt(e):
    return f"{e.ler:.3e} [{e.ci_low:.3e}, {e.ci_high:.3e}]"


def test_criterion_05_directional_ler(criterion, headline_runs):
    oks = []
    for d in (3, 5):
        p, a = headline_runs[(d, "Passive")]["XPXP2"], headline_runs[(d, "Active")]["XPXP2"]
        ok = a.ler < p.ler and a.ci_high < p.ci_low
        oks.append(criterion(5, ok, f"d={d} shots={p.shots}: Active {_fmt(a)} < Passive {_fmt(p)}"))
    p, a, h = (headline_runs[("table", pol)]["XPXP2"] for pol in ("Passive", "Active", "Hybrid"))
    ok_ha = h.ler <= a.ler and h.ci_high < a.ci_low
    ok_ap = a.ler < p.ler and a.ci_high < p.ci_low
    oks.append(criterion(5, ok_ha, f"T=1000/1325 d=3: Hybrid {_fmt(h)} <= Active {_fmt(a)}"))
    oks.append(criterion(5, ok_ap, f"T=1000/1325 d=3: Active {_fmt(a)} < Passive {_fmt(p)}"))
    assert all(oks)


def test_criterion_06_hamming_spike(criterion, headline_runs):
    oks = []
    for d in (3, 5):
        hp = headline_runs[(d, "Passive")].hamming.merge_weight
        ha = headline_runs[(d, "Active")].hamming.merge_weight
        oks.append(criterion(6, hp / ha >= 1.3, f"d={d}: merge-round weight {hp:.4f} / {ha:.4f} = {hp / ha:.3f}"))
    assert all(oks)


def test_criterion_07_idling_degradation(criterion):
    ests = []
    for idle in (0, 8000, 16000, 32000):
        c = annotate(gen_repetition(3, 3, idle, profile="ibm"), NoiseModel(1e-3, "ibm"))
        ests.append(estimate_ler(c, "uf", 10**6, seed=7)["Z_L"])
    ok = all(a.ler < b.ler and a.ci_high < b.ci_low for a, b in zip(ests, ests[1:]))
    detail = ", ".join(f"{i}us {_fmt(e)}" for i, e in zip((0, 8, 16, 32), ests))
    assert criterion(7, ok, detail)


def test_criterion_08_rounds_monotone(criterion):
    ests = []
    for r in (4, 8, 16):
        c = annotate(gen_surface_memory(3, r), NoiseModel(1e-3, "google"))
        ests.append(estimate_ler(c, "uf", 10**6, seed=8)["Z_L"])
    ok = all(b.ler >= a.ler or b.ci_high >= a.ci_low for a, b in zip(ests, ests[1:]))
    detail = ", ".join(f"{r} rounds {_fmt(e)}" for r, e in zip((4, 8, 16), ests))
    assert criterion(8, ok, detail)


def test_criterion_09_latency_closed_form(criterion):
    checks = []
    for hp, ha, miss in ((0.5, 0.9, MissLatency()), (0.3, 0.95, MissLatency("lognormal", 1000.0, 0.5)),
                         (0.5, 0.9, MissLatency("constant", 1000.0))):
        s = latency_speedup(hp, ha, 20, miss, 10**6, seed=9)
        ref = expected_latency(hp, 20, miss.mean) / expected_latency(ha, 20, miss.mean)
        checks.append((hp, ha, s, ref, abs(s / ref - 1)))
    eq = latency_speedup(0.7, 0.7, 20, MissLatency(), 10**6, seed=9)
    ok = all(c[4] <= 5e-3 for c in checks) and abs(eq - 1) <= 5e-3
    detail = "; ".join(f"h={hp}/{ha}: {s:.4f} vs {ref:.4f}" for hp, ha, s, ref, _ in checks)
    assert criterion(9, ok, f"{detail}; equal rates {eq:.4f}")


def test_criterion_10_engine(criterion):
    rng = np.random.default_rng(10)
    policies = list(Policy)
    agree = errors = 0
    n = 10**4
    for _ in range(n):
        k = int(rng.integers(2, 9))
        ids = rng.choice(32, size=k, replace=False)
        cycles = rng.integers(900, 1401, size=k)
        states = [PatchTimingState(int(i), int(c), int(rng.integers(-10**5, 10**5))) for i, c in zip(ids, cycles)]
        t_now = int(rng.integers(0, 10**7))
        policy = policies[int(rng.integers(len(policies)))]
        params = {"n_rounds": int(rng.integers(1, 9)), "epsilon": int(rng.integers(100, 600)),
                  "z_max": int(rng.integers(0, 8))}
        counters, meta = build_tables(states, t_now=t_now, free_running=bool(rng.integers(2)))
        try:
            expect = plan_k_sync(states, t_now, policy, **params)
        except InvalidRequestError as e:
            expect = type(e)
        try:
            got = dict(engine_compute(counters, meta, set(int(i) for i in ids), policy, **params))
        except InvalidRequestError as e:
            got = type(e)
        agree += got == expect
        errors += isinstance(expect, type)
    t2 = measure_planning_time(2, 2000, seed=1)
    t50 = measure_planning_time(50, 2000, seed=1)
    ok = agree == n and t50.median_ns <= 3 * t2.median_ns and t50.median_ns <= 3300
    detail = (f"{agree}/{n} configs agree ({errors} error cases); median k=2 {t2.median_ns:.0f} ns, "
              f"k=50 {t50.median_ns:.0f} ns (ratio {t50.median_ns / t2.median_ns:.2f})")
    assert criterion(10, ok, detail)


def test_criterion_11_determinism(criterion, monkeypatch):
    monkeypatch.delenv("LATTICELOCK_THREADS", raising=False)
    cfg = ExperimentConfig(d=3, tau_ns=[500, 1000], policies=["Passive", "Active", "ActiveIntra"],
                           shots=200_000, seed=11)
    outs = {(th, wk): run_sweep(cfg, threads=th, workers=wk).to_csv() for th, wk in ((1, 1), (4, 1), (2, 3))}
    ok = len(set(outs.values())) == 1
    detail = f"{len(outs)} runs (threads, workers) = {sorted(outs)}, {len(set(outs.values()))} distinct CSV"
    assert criterion(11, ok, detail)
