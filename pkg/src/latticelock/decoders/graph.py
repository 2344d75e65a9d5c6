"""Decoding graph built from an annotated circuit's fault mechanisms.

Every noise channel is split into unit faults (one Pauli on one target or
target pair). All unit faults are pushed through the circuit at once, one
per lane of the bit-packed frame kernel, which yields each fault's detector
and observable signature. Signatures are split by detector basis and
parallel mechanisms between the same detectors are merged.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..circuits.ir import DEPOL1, DEPOL2, FLIP, PAULI, CircuitError, CircuitIR
from ..sim.frame import PX, PY, PZ, compile_circuit, run_events

# single-qubit Pauli codes paired with the label used in fault descriptions
_PAULIS = ((PX, "X"), (PY, "Y"), (PZ, "Z"))


class UnsupportedCircuitError(CircuitError):
    pass


@dataclass
class UnitFaults:
    """All unit faults of a circuit with their signatures.

    ``det_ptr``/``det_idx`` hold each fault's fired detectors in CSR form;
    ``obs`` is a bitmask of flipped observables.
    """

    p: np.ndarray
    slot: np.ndarray
    det_ptr: np.ndarray
    det_idx: np.ndarray
    obs: np.ndarray
    label: list

    def __len__(self) -> int:
        return len(self.p)

    def dets(self, i: int) -> np.ndarray:
        return self.det_idx[self.det_ptr[i] : self.det_ptr[i + 1]]


def _unit_fault_events(prog):
    """One lane per unit fault: returns events, probabilities and labels."""
    ptr, qs, lanes, kinds, probs, slots, labels = [0], [], [], [], [], [], []
    lane = 0
    for s, (kind, tg, pr, basis) in enumerate(prog.noise):
        if kind == DEPOL2:
            for a, b in tg.reshape(-1, 2):
                for code in range(1, 16):
                    ka, kb = code & 3, code >> 2
                    for q, k in ((a, ka), (b, kb)):
                        if k:
                            qs.append(q)
                            lanes.append(lane)
                            kinds.append(k)
                    probs.append(pr[0] / 15)
                    slots.append(s)
                    labels.append((s, int(a), int(b), code))
                    lane += 1
        else:
            for q in tg:
                if kind == DEPOL1:
                    opts = [(k, pr[0] / 3) for k, _ in _PAULIS]
                elif kind == FLIP:
                    opts = [(PX if basis == "Z" else PZ, pr[0])]
                elif kind == PAULI:
                    opts = [(PX, pr[0]), (PY, pr[1]), (PZ, pr[2])]
                else:
                    raise CircuitError(f"unknown noise kind {kind}")
                for k, p in opts:
                    if p <= 0:
                        continue
                    qs.append(q)
                    lanes.append(lane)
                    kinds.append(k)
                    probs.append(p)
                    slots.append(s)
                    labels.append((s, int(q), -1, k))
                    lane += 1
        ptr.append(len(qs))
    events = (np.array(ptr), np.array(qs, dtype=np.int64), np.array(lanes, dtype=np.int64),
              np.array(kinds, dtype=np.int64))
    return events, np.array(probs), np.array(slots, dtype=np.int64), labels, lane


def _lane_bits(words: np.ndarray, n_lanes: int):
    """(row, lane) pairs of set bits, sorted by lane then row."""
    bits = np.unpackbits(words.astype("<u8").view(np.uint8), axis=1, bitorder="little")[:, :n_lanes]
    rows, lanes = np.nonzero(bits)
    order = np.lexsort((rows, lanes))
    return rows[order], lanes[order]


def unit_faults(circuit: CircuitIR) -> UnitFaults:
    if not circuit.annotated:
        raise CircuitError("unit faults need a noise-annotated circuit")
    prog = compile_circuit(circuit)
    events, probs, slots, labels, n = _unit_fault_events(prog)
    dets, obs = run_events(prog, events, n)
    rows, lanes = _lane_bits(dets, n)
    det_ptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(det_ptr, lanes + 1, 1)
    det_ptr = np.cumsum(det_ptr)
    obs_mask = np.zeros(n, dtype=np.uint64)
    orows, olanes = _lane_bits(obs, n)
    for r, l in zip(orows, olanes):
        obs_mask[l] |= np.uint64(1) << np.uint64(r)
    return UnitFaults(probs, slots, det_ptr, rows.astype(np.int64), obs_mask, labels)


def merge_probability(p1: float, p2: float) -> float:
    """Probability that exactly one of two independent mechanisms fires."""
    return p1 * (1 - p2) + p2 * (1 - p1)


@dataclass
class MatchingGraph:
    """Detectors ``0..n_detectors-1`` plus one boundary node ``n_detectors``."""

    n_detectors: int
    u: np.ndarray
    v: np.ndarray
    p: np.ndarray
    obs_mask: np.ndarray
    det_basis: list
    observable_names: list
    observable_basis: list
    edge_index: dict = field(default_factory=dict)
    # mechanisms that flip an observable without firing any detector
    undetectable: list = field(default_factory=list)
    # parallel mechanisms whose observable masks disagreed
    conflicts: int = 0
    # (basis part, edge ids) per unit fault, filled by build_graph
    fault_edges: list = field(default_factory=list)

    @property
    def boundary(self) -> int:
        return self.n_detectors

    @property
    def n_nodes(self) -> int:
        return self.n_detectors + 1

    @property
    def n_edges(self) -> int:
        return len(self.u)

    @property
    def n_observables(self) -> int:
        return len(self.observable_names)

    @property
    def weight(self) -> np.ndarray:
        p = np.clip(self.p, 1e-300, 0.5 - 1e-12)
        return np.log((1 - p) / p)

    def edge_of(self, a: int, b: int | None = None) -> int:
        key = (a, self.boundary if b is None else b)
        return self.edge_index[tuple(sorted(key))]

    def syndrome_of(self, edges) -> np.ndarray:
        syn = np.zeros(self.n_detectors, dtype=bool)
        for e in edges:
            for n in (self.u[e], self.v[e]):
                if n != self.boundary:
                    syn[n] ^= True
        return syn

    def obs_of(self, edges) -> int:
        m = 0
        for e in edges:
            m ^= int(self.obs_mask[e])
        return m

    def adjacency(self):
        """CSR incidence: for node ``n``, ``adj_edge[adj_ptr[n]:adj_ptr[n+1]]``."""
        nodes = np.concatenate([self.u, self.v])
        edges = np.concatenate([np.arange(self.n_edges)] * 2)
        order = np.argsort(nodes, kind="stable")
        ptr = np.zeros(self.n_nodes + 1, dtype=np.int64)
        np.add.at(ptr, nodes + 1, 1)
        return np.cumsum(ptr), edges[order].astype(np.int64)


def build_graph(circuit: CircuitIR, faults: UnitFaults | None = None) -> MatchingGraph:
    """Detector graph of ``circuit``; raises if a fault fires more than two
    detectors of one basis and cannot be split into existing edges."""
    if circuit.n_observables > 64:
        raise UnsupportedCircuitError("at most 64 observables")
    faults = unit_faults(circuit) if faults is None else faults
    det_basis = [d.basis for d in circuit.detectors]
    obs_basis = [o.basis for o in circuit.observables]
    basis_obs = {b: sum(1 << i for i, ob in enumerate(obs_basis) if ob == b) for b in ("X", "Z")}
    n = circuit.n_detectors
    B = n

    edges = {}  # (a, b) -> [p, obs, best_p]
    conflicts = 0
    undetectable = []
    hyper = []
    parts_per_fault = []

    def add(key, p, obs):
        nonlocal conflicts
        if key not in edges:
            edges[key] = [p, obs, p]
            return
        e = edges[key]
        if e[1] != obs:
            conflicts += 1
            if p > e[2]:
                e[1], e[2] = obs, p
        e[0] = merge_probability(e[0], p)

    for i in range(len(faults)):
        dets = faults.dets(i)
        obs = int(faults.obs[i])
        parts = []
        for b in ("X", "Z"):
            ds = [int(d) for d in dets if det_basis[d] == b]
            ob = obs & basis_obs[b]
            if not ds:
                if ob:
                    undetectable.append((i, ob))
                continue
            parts.append((b, tuple(ds), ob))
        for b, ds, ob in parts:
            if len(ds) > 2:
                hyper.append((i, ds, ob))
                continue
            key = (ds[0], B) if len(ds) == 1 else ds
            add(key, float(faults.p[i]), ob)
        parts_per_fault.append(parts)

    # split larger signatures into two already-known edges when possible
    for i, ds, ob in hyper:
        split = _split_hyperedge(ds, ob, edges, B)
        if split is None:
            raise UnsupportedCircuitError(
                f"fault {faults.label[i]} fires {len(ds)} detectors of one basis"
            )
        for key in split:
            add(key, float(faults.p[i]), edges[key][1])

    keys = sorted(edges)
    g = MatchingGraph(
        n,
        np.array([k[0] for k in keys], dtype=np.int64),
        np.array([k[1] for k in keys], dtype=np.int64),
        np.array([edges[k][0] for k in keys]),
        np.array([edges[k][1] for k in keys], dtype=np.uint64),
        det_basis,
        [o.name for o in circuit.observables],
        obs_basis,
        {k: j for j, k in enumerate(keys)},
        undetectable,
        conflicts,
    )
    return g


def _split_hyperedge(ds, ob, edges, B):
    """Pair up detectors of ``ds`` (possibly via the boundary) into existing
    edges whose observable masks combine to ``ob``."""
    ds = list(ds)

    def rec(rest, acc_obs):
        if not rest:
            return [] if acc_obs == ob else None
        a = rest[0]
        for j in range(1, len(rest)):
            key = (a, rest[j])
            if key in edges:
                sub = rec(rest[1:j] + rest[j + 1 :], acc_obs ^ edges[key][1])
                if sub is not None:
                    return [key] + sub
        key = (a, B)
        if key in edges:
            sub = rec(rest[1:], acc_obs ^ edges[key][1])
            if sub is not None:
                return [key] + sub
        return None

    return rec(ds, 0)


def signature_obs(faults: UnitFaults, idx) -> tuple[np.ndarray, int]:
    """Combined syndrome (as sorted detector array) and observable flip of a
    set of unit faults."""
    acc = {}
    obs = 0
    for i in idx:
        for d in faults.dets(i):
            acc[int(d)] = acc.get(int(d), 0) ^ 1
        obs ^= int(faults.obs[i])
    return np.array(sorted(d for d, v in acc.items() if v), dtype=np.int64), obs
