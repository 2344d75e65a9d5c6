import itertools
from collections import Counter

import numpy as np
import pytest

from latticelock.circuits import SurgeryExperiment, gen_lattice_surgery, gen_repetition, gen_surface_memory
from latticelock.circuits.ir import (
    CNOT,
    DEPOL1,
    DEPOL2,
    FLIP,
    H,
    MEASURE,
    PAULI,
    RESET,
    TICK,
    CircuitIR,
    Detector,
    Observable,
    Op,
)
from latticelock.noise import NoiseModel, annotate
from latticelock.policies import plan_active, plan_passive
from latticelock.sim import (
    ShotBatch,
    UnannotatedCircuitError,
    compile_circuit,
    hamming_stats,
    iter_blocks,
    pack,
    parities,
    run_events,
    run_tableau,
    sample,
    unpack,
)

KIND = {"X": 1, "Z": 2, "Y": 3}


def events_for(prog, locations):
    """One fault per lane: ``locations`` is a list of (slot, qubit, pauli)."""
    order = sorted(range(len(locations)), key=lambda i: locations[i][0])
    slots = np.array([locations[i][0] for i in order], dtype=np.int64)
    ptr = np.searchsorted(slots, np.arange(len(prog.noise) + 1), side="left")
    q = [locations[i][1] for i in order]
    kind = [KIND[locations[i][2]] for i in order]
    return ptr, q, order, kind


def frame_signatures(circuit, locations):
    prog = compile_circuit(circuit)
    dets, obs = run_events(prog, events_for(prog, locations), len(locations))
    return unpack(dets, len(locations)).T, unpack(obs, len(locations)).T


def noise_op_indices(circuit):
    return [i for i, op in enumerate(circuit.ops) if op.is_noise]


def tableau_signature(circuit, op_index, faults):
    dets, obs = parities(run_tableau(circuit, np.random.default_rng(1), {op_index: faults}), circuit)
    return dets.astype(bool), obs.astype(bool)


@pytest.mark.parametrize(
    "make",
    [
        lambda: gen_surface_memory(3, 2),
        lambda: gen_surface_memory(3, 2, basis="X"),
        lambda: gen_repetition(3, 2, 500),
        lambda: gen_lattice_surgery(SurgeryExperiment(3, rounds_before=1, rounds_after=1, plan=plan_active(300, 1))),
    ],
)
def test_frame_matches_tableau_on_single_faults(make):
    c = annotate(make(), NoiseModel(1e-3, "google"))
    idx = noise_op_indices(c)
    rng = np.random.default_rng(0)
    locs, where = [], []
    for slot, i in enumerate(idx):
        for q in c.ops[i].targets:
            for p in "XYZ":
                locs.append((slot, q, p))
                where.append(i)
    pick = rng.choice(len(locs), size=min(len(locs), 300), replace=False)
    locs = [locs[k] for k in pick]
    where = [where[k] for k in pick]
    fd, fo = frame_signatures(c, locs)
    for lane, ((_, q, p), i) in enumerate(zip(locs, where)):
        td, to = tableau_signature(c, i, [(q, p)])
        assert np.array_equal(fd[lane], td), (c.ops[i], q, p)
        assert np.array_equal(fo[lane], to)


def _frame_readout(gate, fault, basis):
    """Frame bits after ``fault`` on qubits 0/1 followed by ``gate``, read by
    measuring both qubits in ``basis``."""
    ops = [Op(RESET, (0, 1), 0, 10), Op(PAULI, (0, 1), 10, 0, probs=(0.0, 0.0, 0.0))]
    if gate == H:
        ops.append(Op(H, (0,), 10, 10))
    else:
        ops.append(Op(CNOT, (0, 1), 10, 10))
    ops.append(Op(MEASURE, (0, 1), 20, 10, basis=basis))
    dets = [Detector((0,), 0, basis), Detector((1,), 0, basis)]
    c = CircuitIR(2, ops, dets, [], annotated=True)
    locs = [(0, q, p) for q, p in fault]
    prog = compile_circuit(c)
    ptr, qs, _, kind = events_for(prog, locs)
    d, _ = run_events(prog, (ptr, qs, [0] * len(qs), kind), 1)
    return tuple(int(b) for b in unpack(d, 1)[:, 0])


def symplectic(gate, x, z):
    """Reference conjugation rules on (x0, x1), (z0, z1)."""
    x, z = list(x), list(z)
    if gate == H:
        x[0], z[0] = z[0], x[0]
    else:
        x[1] ^= x[0]
        z[0] ^= z[1]
    return tuple(x), tuple(z)


@pytest.mark.parametrize("gate", [H, CNOT])
@pytest.mark.parametrize("gen", [(0, "X"), (0, "Z"), (1, "X"), (1, "Z")])
def test_frame_propagation_identities(gate, gen):
    q, p = gen
    x = tuple(int(p == "X" and i == q) for i in range(2))
    z = tuple(int(p == "Z" and i == q) for i in range(2))
    ex, ez = symplectic(gate, x, z)
    assert _frame_readout(gate, [gen], "Z") == ex
    assert _frame_readout(gate, [gen], "X") == ez


def test_cnot_named_identities():
    assert _frame_readout(CNOT, [(0, "X")], "Z") == (1, 1)
    assert _frame_readout(CNOT, [(1, "Z")], "X") == (1, 1)
    assert _frame_readout(CNOT, [(0, "Y")], "Z") == (1, 1)
    assert _frame_readout(CNOT, [(0, "Y")], "X") == (1, 0)


def tomography_circuit(noise: Op, n: int) -> CircuitIR:
    """Bell pairs (i, n+i); apply ``noise`` to qubits 0..n-1, then undo the
    pairing so the Z/X parts of the fault land on separate measurements."""
    s, a = tuple(range(n)), tuple(range(n, 2 * n))
    pairs = tuple(q for i in range(n) for q in (s[i], a[i]))
    ops = [
        Op(RESET, s + a, 0, 10),
        Op(H, s, 10, 10),
        Op(CNOT, pairs, 20, 10),
        noise,
        Op(CNOT, pairs, 30, 10),
        Op(H, s, 40, 10),
        Op(MEASURE, s + a, 50, 10),
    ]
    dets = [Detector((m,), 0, "Z") for m in range(2 * n)]
    return CircuitIR(2 * n, ops, dets, [Observable("Z0", (n,), "Z")], annotated=True)


def outcome_distribution(batch):
    bits = batch.unpack_detectors()
    keys = bits @ (1 << np.arange(bits.shape[1]))
    return Counter(keys.tolist())


def exact_tomography(n, pauli_probs):
    """pauli_probs: {pauli string: probability}; returns {detector key: prob}."""
    out = Counter()
    for s, pr in pauli_probs.items():
        key = 0
        for i, ch in enumerate(s):
            if ch in "ZY":
                key |= 1 << i
            if ch in "XY":
                key |= 1 << (n + i)
        out[key] += pr
    return out


def tv(dist, counts, shots):
    keys = set(dist) | set(counts)
    return 0.5 * sum(abs(dist.get(k, 0.0) - counts.get(k, 0) / shots) for k in keys)


def _paulis(n):
    return ["".join(t) for t in itertools.product("IXYZ", repeat=n)]


@pytest.mark.parametrize(
    "noise, n, exact",
    [
        (Op(PAULI, (0,), 30, probs=(0.1, 0.05, 0.15)), 1, {"I": 0.7, "X": 0.1, "Y": 0.05, "Z": 0.15}),
        (Op(DEPOL1, (0,), 30, probs=(0.3,)), 1, {"I": 0.7, "X": 0.1, "Y": 0.1, "Z": 0.1}),
        (Op(FLIP, (0,), 30, probs=(0.2,)), 1, {"I": 0.8, "X": 0.2}),
        (Op(FLIP, (0,), 30, basis="X", probs=(0.2,)), 1, {"I": 0.8, "Z": 0.2}),
        (Op(DEPOL2, (0, 1), 30, probs=(0.3,)), 2, {s: (0.7 if s == "II" else 0.02) for s in _paulis(2)}),
    ],
)
def test_channel_distributions_match_enumeration(noise, n, exact):
    c = tomography_circuit(noise, n)
    shots = 10**6
    batch = sample(c, shots, seed=3, threads=1)
    assert tv(exact_tomography(n, exact), outcome_distribution(batch), shots) <= 0.01


def flip_only_repetition(p=0.1):
    c = annotate(gen_repetition(3, 1), NoiseModel(p, idling=False))
    return c.replace(ops=[op for op in c.ops if op.kind != DEPOL2])


def enumerate_distribution(c):
    """Exact detector distribution by brute force over every fault subset,
    each subset executed on the tableau simulator."""
    locs = [(i, q, op.probs[0]) for i, op in enumerate(c.ops) if op.kind == FLIP for q in op.targets]
    dist = Counter()
    for mask in itertools.product((0, 1), repeat=len(locs)):
        inject, pr = {}, 1.0
        for bit, (i, q, p) in zip(mask, locs):
            pr *= p if bit else 1 - p
            if bit:
                inject.setdefault(i, []).append((q, "X"))
        dets, _ = parities(run_tableau(c, np.random.default_rng(0), inject), c)
        dist[int(dets @ (1 << np.arange(len(dets))))] += pr
    return locs, dist


def test_small_instance_matches_exhaustive_enumeration():
    c = flip_only_repetition()
    locs, dist = enumerate_distribution(c)
    assert len(locs) <= 12
    shots = 10**6
    batch = sample(c, shots, seed=11)
    counts = outcome_distribution(batch)
    assert tv(dist, counts, shots) <= 0.01
    # marginals at 1e5 shots within 3 sigma
    small = sample(c, 10**5, seed=5)
    rates = small.detector_counts() / small.n_shots
    n_det = c.n_detectors
    for j in range(n_det):
        m = sum(pr for k, pr in dist.items() if k >> j & 1)
        sigma = np.sqrt(m * (1 - m) / small.n_shots)
        assert abs(rates[j] - m) <= 3 * sigma


def test_forced_middle_x_fires_both_neighbours():
    c = annotate(gen_repetition(3, 2), NoiseModel(0.0, idling=False))
    i = next(k for k, op in enumerate(c.ops) if op.kind == TICK and op.label == "P:round:1")
    q = c.coords.index((2, 0))
    ops = list(c.ops)
    ops.insert(i, Op(PAULI, (q,), c.ops[i].start, probs=(1.0, 0.0, 0.0)))
    forced = c.replace(ops=ops)
    batch = sample(forced, 1000, seed=0)
    counts = batch.detector_counts()
    assert sorted(counts.tolist())[-3:] == [0, 1000, 1000]
    fired = [c.detectors[j] for j in np.flatnonzero(counts)]
    assert {d.round for d in fired} == {1}


@pytest.mark.parametrize(
    "make",
    [
        lambda: gen_surface_memory(3, 3),
        lambda: gen_repetition(3, 2, 1000),
        lambda: gen_lattice_surgery(SurgeryExperiment(3, plan=plan_passive(1000))),
    ],
)
def test_zero_noise_is_deterministic(make):
    c = annotate(make(), NoiseModel(0.0, idling=False))
    batch = sample(c, 5000, seed=9)
    assert not batch.detector_bits.any() and not batch.observable_bits.any()
    prof = hamming_stats(batch, c)
    assert all(w == 0 for w in prof.per_round_mean_weight)


def test_thread_count_does_not_change_samples(monkeypatch):
    monkeypatch.delenv("LATTICELOCK_THREADS", raising=False)
    c = annotate(gen_surface_memory(3, 3), NoiseModel(5e-3))
    n = 3 * 65536 + 77
    one = sample(c, n, seed=42, threads=1)
    four = sample(c, n, seed=42, threads=4)
    assert one.to_bytes() == four.to_bytes()
    monkeypatch.setenv("LATTICELOCK_THREADS", "3")
    assert sample(c, n, seed=42, threads=1).to_bytes() == one.to_bytes()
    assert sample(c, n, seed=43).to_bytes() != one.to_bytes()


def test_block_iteration_preserves_order():
    c = annotate(gen_repetition(3, 2), NoiseModel(0.05))
    blocks = list(iter_blocks(c, 1000, 7, threads=2, block_shots=256))
    assert [b[0] for b in blocks] == [256, 256, 256, 232]
    again = list(iter_blocks(c, 1000, 7, threads=1, block_shots=256))
    assert all(np.array_equal(a[1], b[1]) for a, b in zip(blocks, again))
    with pytest.raises(ValueError):
        list(iter_blocks(c, 10, 0, block_shots=100))


def test_pack_round_trip_and_shapes():
    rng = np.random.default_rng(0)
    bits = rng.random((5, 200)) < 0.3
    assert np.array_equal(unpack(pack(bits), 200), bits)
    c = annotate(gen_surface_memory(3, 2), NoiseModel(1e-2))
    batch = sample(c, 130, seed=1)
    assert batch.unpack_detectors().shape == (130, c.n_detectors)
    assert batch.unpack_observables().shape == (130, c.n_observables)
    assert len(batch.to_bytes()) == 8 * (c.n_detectors + c.n_observables) * 3
    csv = batch.detector_csv(c).splitlines()
    assert csv[0] == "detector,round,basis,fires,rate" and len(csv) == c.n_detectors + 1


def test_unannotated_rejected():
    with pytest.raises(UnannotatedCircuitError):
        sample(gen_surface_memory(3, 2), 10)
    with pytest.raises(ValueError):
        sample(annotate(gen_surface_memory(3, 2), NoiseModel()), 0)


def test_hamming_uniform_synthetic():
    c = gen_lattice_surgery(SurgeryExperiment(3))
    q, shots = 0.1, 20000
    bits = np.random.default_rng(0).random((c.n_detectors, shots)) < q
    batch = ShotBatch(shots, pack(bits), pack(np.zeros((c.n_observables, shots), bool)), 0)
    prof = hamming_stats(batch, c)
    per_round = Counter(d.round for d in c.detectors)
    assert len(prof.per_round_mean_weight) == c.n_rounds
    for r, w in enumerate(prof.per_round_mean_weight):
        mean = q * per_round[r]
        assert abs(w - mean) <= 5 * np.sqrt(per_round[r] * q * (1 - q) / shots)
    assert prof.round_of_surgery == c.meta["merge_round"]
    with pytest.raises(ValueError):
        hamming_stats(ShotBatch(shots, pack(bits[:-1]), batch.observable_bits, 0), c)


def test_passive_raises_merge_round_weight():
    def merge_weight(plan):
        c = annotate(gen_lattice_surgery(SurgeryExperiment(3, plan=plan)), NoiseModel(1e-3, "google"))
        return hamming_stats(sample(c, 200_000, seed=2), c).merge_weight

    assert merge_weight(plan_passive(1000)) > merge_weight(plan_active(1000, 4))
