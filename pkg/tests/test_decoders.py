import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from statsmodels.stats.proportion import proportion_confint

from latticelock.circuits import SurgeryExperiment, gen_lattice_surgery, gen_repetition, gen_surface_memory
from latticelock.circuits.ir import DEPOL1, DEPOL2, FLIP, PAULI, TICK
from latticelock.decoders import (
    ExactMatcher,
    InfeasibleSyndromeError,
    MatchingDecoder,
    MatchingGraph,
    MissLatency,
    UnionFindDecoder,
    build_graph,
    build_lut,
    decode_bruteforce,
    decode_uf,
    estimate_ler,
    expected_latency,
    latency_speedup,
    make_decoder,
    merge_probability,
    unit_faults,
    wilson_interval,
)
from latticelock.decoders.lut import syndrome_key
from latticelock.noise import NoiseModel, annotate
from latticelock.policies import plan_passive
from latticelock.sim import parities, run_tableau, sample


def graph_of(circuit, p=1e-3, profile="google"):
    return build_graph(annotate(circuit, NoiseModel(p, profile)))


def unit_fault_list(c):
    """(op index, faults, probability) for every unit fault, derived directly
    from the noise ops."""
    out = []
    for i, op in enumerate(c.ops):
        if op.kind == FLIP:
            p = "X" if op.basis == "Z" else "Z"
            out += [(i, [(q, p)], op.probs[0]) for q in op.targets]
        elif op.kind == DEPOL1:
            out += [(i, [(q, p)], op.probs[0] / 3) for q in op.targets for p in "XYZ"]
        elif op.kind == PAULI:
            out += [(i, [(q, p)], pr) for q in op.targets for p, pr in zip("XYZ", op.probs) if pr > 0]
        elif op.kind == DEPOL2:
            for a, b in zip(op.targets[::2], op.targets[1::2]):
                for pa, pb in itertools.product("IXYZ", repeat=2):
                    if pa == pb == "I":
                        continue
                    f = [(q, p) for q, p in ((a, pa), (b, pb)) if p != "I"]
                    out.append((i, f, op.probs[0] / 15))
    return out


def test_graph_matches_tableau_enumeration():
    c = annotate(gen_surface_memory(3, 2), NoiseModel(1e-3, "google"))
    g = build_graph(c)
    basis = [d.basis for d in c.detectors]
    expect = {}
    for i, faults, p in unit_fault_list(c):
        dets, obs = parities(run_tableau(c, np.random.default_rng(0), {i: faults}), c)
        fired = np.flatnonzero(dets)
        for b in "XZ":
            ds = [int(d) for d in fired if basis[d] == b]
            if not ds:
                continue
            assert len(ds) <= 2
            key = tuple(ds) if len(ds) == 2 else (ds[0], g.boundary)
            expect[key] = merge_probability(expect.get(key, 0.0), p)
    assert set(expect) == set(g.edge_index)
    for key, p in expect.items():
        assert g.p[g.edge_index[key]] == pytest.approx(p, rel=1e-9)
    assert g.conflicts == 0 and not g.undetectable
    assert (g.weight > 0).all()


def test_noiseless_graph_is_empty():
    g = build_graph(annotate(gen_surface_memory(3, 2), NoiseModel(0.0, idling=False)))
    assert g.n_edges == 0


def test_repetition_measurement_flip_edges():
    c = annotate(gen_repetition(3, 1), NoiseModel(0.1, idling=False))
    c = c.replace(ops=[op for op in c.ops if op.kind != DEPOL2])
    g = build_graph(c)
    # ancilla readout flips are timelike: round-0 detector to its final check
    for a in range(2):
        first = next(j for j, d in enumerate(c.detectors) if d.round == 0 and d.meas == (a,))
        second = next(j for j, d in enumerate(c.detectors) if d.round == 1 and a in d.meas)
        assert (first, second) in g.edge_index
    # flips on the end data qubits, at reset or at readout, reach the boundary
    assert sorted(k[0] for k in g.edge_index if k[1] == g.boundary) == [0, 1, 2, 3]
    assert g.conflicts == 0


def test_memory_data_error_edge():
    c = annotate(gen_surface_memory(3, 3), NoiseModel(1e-3))
    g = build_graph(c)
    q = c.coords.index((3, 3))
    i = next(k for k, op in enumerate(c.ops) if op.kind == TICK and op.label == "P:round:1")
    dets, obs = parities(run_tableau(c, np.random.default_rng(0), {i: [(q, "X")]}), c)
    a, b = np.flatnonzero(dets)
    e = g.edge_of(int(a), int(b))
    assert g.obs_mask[e] == 0


def test_merge_probability():
    assert merge_probability(0.1, 0.2) == pytest.approx(0.1 * 0.8 + 0.2 * 0.9)
    assert merge_probability(0.0, 0.3) == 0.3


def tiny_graph():
    # 0 - 1 - boundary, plus isolated pair 2 - 3
    keys = [(0, 1), (1, 4), (2, 3)]
    return MatchingGraph(
        4, np.array([0, 1, 2]), np.array([1, 4, 3]), np.array([0.1, 0.2, 0.1]),
        np.array([0, 1, 0], dtype=np.uint64), ["Z"] * 4, ["L"], ["Z"], {k: j for j, k in enumerate(keys)},
    )


def test_bruteforce_basics():
    g = tiny_graph()
    assert decode_bruteforce(g, []) == 0
    assert decode_bruteforce(g, [0]) == 1
    assert decode_bruteforce(g, [2, 3]) == 0
    with pytest.raises(InfeasibleSyndromeError):
        decode_bruteforce(g, [2])
    assert decode_uf(g, np.zeros(4, dtype=bool)) == 0


@pytest.mark.parametrize("make", [lambda: gen_surface_memory(3, 3), lambda: gen_lattice_surgery(SurgeryExperiment(3))])
def test_decoders_invert_every_edge(make):
    # uniform weights: under likelihood weights a rare edge's own syndrome may
    # legitimately be matched by a cheaper path of likelier edges
    g = graph_of(make())
    w = np.ones(g.n_edges)
    em, uf = ExactMatcher(g, w), UnionFindDecoder(g, w)
    for e in range(g.n_edges):
        syn = g.syndrome_of([e])
        assert decode_bruteforce(g, syn, em) == g.obs_mask[e]
        assert decode_uf(g, syn, uf) == g.obs_mask[e]


def fault_set_batch(faults, sets, n_det):
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


@pytest.mark.parametrize(
    "make",
    [
        lambda: gen_surface_memory(3, 3),
        lambda: gen_surface_memory(3, 3, basis="X"),
        lambda: gen_lattice_surgery(SurgeryExperiment(3, plan=plan_passive(1000))),
    ],
)
def test_uf_agrees_with_exact_on_single_faults(make):
    c = annotate(make(), NoiseModel(1e-3, "google"))
    f = unit_faults(c)
    g = build_graph(c, f)
    w = np.ones(g.n_edges)
    ptr, det, obs = fault_set_batch(f, [(i,) for i in range(len(f))], g.n_detectors)
    exact = make_decoder(g, "bruteforce", w).decode_csr(ptr, det)
    uf = make_decoder(g, "uf", w).decode_csr(ptr, det)
    assert np.array_equal(exact, obs)
    assert np.array_equal(uf, exact)


def test_uf_close_to_exact_ler():
    c = annotate(gen_surface_memory(3, 3), NoiseModel(1e-3, "google"))
    uf = estimate_ler(c, "uf", 200_000, seed=4)
    bf = estimate_ler(c, "bruteforce", 200_000, seed=4)
    assert uf.any_failure.failures <= 1.2 * bf.any_failure.failures


def test_lut_capacity_and_consistency():
    g = graph_of(gen_surface_memory(3, 1))
    table = build_lut(g, 3000)
    assert table.size_bytes <= 3000
    for fs in itertools.chain(((e,) for e in range(g.n_edges)), itertools.combinations(range(g.n_edges), 2)):
        key = syndrome_key(np.flatnonzero(g.syndrome_of(fs)), g.n_detectors)
        assert key in table.entries
    em = ExactMatcher(g)
    for key, v in table.entries.items():
        bits = np.unpackbits(np.frombuffer(key, dtype=np.uint8), bitorder="little")[: g.n_detectors]
        assert v == em.decode(np.flatnonzero(bits))


def test_lut_capacity_bound_and_empty():
    g = graph_of(gen_surface_memory(3, 3))
    table = build_lut(g, 1000)
    assert 0 < table.size_bytes <= 1000
    empty = build_lut(g, 0)
    assert len(empty) == 0
    assert empty.lookup([0]) is None and empty.lookup([]) is None
    assert empty.hit_rate == 0.0 and empty.misses == 2


def test_lut_decoder_matches_uf_fallback():
    c = annotate(gen_surface_memory(3, 3), NoiseModel(2e-3))
    rep_lut = estimate_ler(c, "lut", 20_000, seed=1, lut_capacity=3000)
    assert 0 < rep_lut.lut_hit_rate <= 1
    assert rep_lut.lut_hits + rep_lut.lut_misses == 20_000


def test_wilson_matches_statsmodels():
    for k, n in [(0, 10), (1, 100), (37, 1000), (999, 1000), (5, 10**7)]:
        lo, hi = wilson_interval(k, n)
        slo, shi = proportion_confint(k, n, alpha=0.05, method="wilson")
        assert lo == pytest.approx(slo, abs=1e-12) and hi == pytest.approx(shi, abs=1e-12)
    with pytest.raises(ValueError):
        wilson_interval(0, 0)


@pytest.mark.parametrize("p, n", [(0.01, 2000), (0.2, 100), (0.5, 50)])
def test_wilson_coverage(p, n):
    rng = np.random.default_rng(0)
    reps = 4000
    ks = rng.binomial(n, p, reps)
    cover = np.mean([lo <= p <= hi for lo, hi in (wilson_interval(int(k), n) for k in ks)])
    assert 0.93 <= cover <= 0.975


@settings(max_examples=200)
@given(st.integers(1, 10**8), st.data())
def test_wilson_contains_estimate(n, data):
    k = data.draw(st.integers(0, n))
    lo, hi = wilson_interval(k, n)
    assert 0 <= lo <= k / n <= hi <= 1


def test_noiseless_ler_is_zero():
    c = annotate(gen_lattice_surgery(SurgeryExperiment(3)), NoiseModel(0.0, idling=False))
    rep = estimate_ler(c, "uf", 5000, seed=0)
    assert all(e.failures == 0 for e in rep.estimates.values())
    assert set(rep.estimates) == {"X_P", "X_P2", "XPXP2"}


def test_ler_monotone_in_p():
    ests = [
        estimate_ler(annotate(gen_surface_memory(3, 3), NoiseModel(p, "google")), "uf", 200_000, seed=6).any_failure
        for p in (5e-4, 1e-3, 2e-3)
    ]
    for a, b in zip(ests, ests[1:]):
        assert a.ler <= b.ler or a.overlaps(b)
    assert ests[0].ci_high < ests[-1].ci_low


def test_latency_closed_form():
    const = MissLatency("constant", 1000.0)
    assert latency_speedup(0.5, 0.9, 20, const, 10**5) == pytest.approx(510 / 118, rel=1e-9)
    assert expected_latency(0.5, 20, 1000) == 510
    assert latency_speedup(0.7, 0.7, 20, MissLatency(), 10**5) == 1.0
    mc = latency_speedup(0.5, 0.9, 20, MissLatency("lognormal", 1000.0, 0.5), 10**6, seed=3)
    assert mc == pytest.approx(expected_latency(0.5, 20, 1000) / expected_latency(0.9, 20, 1000), rel=5e-3)
    with pytest.raises(ValueError):
        latency_speedup(1.5, 0.5)
    with pytest.raises(ValueError):
        latency_speedup(0.5, 0.5, t_hit=0)


def test_empirical_miss_latency(tmp_path):
    path = tmp_path / "miss.csv"
    path.write_text("latency_ns\n800\n1200\n1000\n")
    m = MissLatency.from_csv(path)
    assert m.mean == 1000 and m.kind == "empirical"
    assert set(m.sample(np.random.default_rng(0), 50)) <= {800.0, 1000.0, 1200.0}
    with pytest.raises(ValueError):
        MissLatency("uniform")


def test_estimator_shape():
    c = annotate(gen_surface_memory(3, 3), NoiseModel(2e-3))
    batch = sample(c, 5000, seed=0)
    X, y = batch.unpack_detectors(), batch.unpack_observables()
    est = MatchingDecoder(weighting="uniform")
    with pytest.raises(NotFittedError):
        est.predict(X)
    est.fit(c)
    pred = est.predict(X)
    assert pred.shape == y.shape and pred.dtype == bool
    assert 0.9 < est.score(X, y) <= 1.0
    assert est.n_features_in_ == c.n_detectors and est.observable_names_ == c.observable_names
    ref = estimate_ler(c, "uf", 5000, seed=0, weighting="uniform")
    assert round((1 - est.score(X, y)) * 5000) == ref.any_failure.failures
    twin = clone(est)
    assert twin.get_params() == {"decoder": "uf", "weighting": "uniform", "lut_capacity": None}
    with pytest.raises(ValueError):
        est.predict(X[:, :-1])
