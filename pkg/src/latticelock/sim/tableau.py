"""Stabilizer tableau simulator (Aaronson-Gottesman).

Slow but exact; it tracks the full state, so random measurement outcomes are
actually random. Used as an independent check of detector determinism and
of the fault signatures produced by the Pauli-frame sampler.
"""
from __future__ import annotations

import numpy as np

from ..circuits.ir import CNOT, H, MEASURE, RESET, TICK, CircuitIR


class Tableau:
    def __init__(self, n: int, rng=None):
        self.n = n
        self.x = np.zeros((2 * n + 1, n), dtype=bool)
        self.z = np.zeros((2 * n + 1, n), dtype=bool)
        self.r = np.zeros(2 * n + 1, dtype=bool)
        idx = np.arange(n)
        self.x[idx, idx] = True  # destabilizers X_i
        self.z[idx + n, idx] = True  # stabilizers Z_i
        self.rng = rng if rng is not None else np.random.default_rng()

    def h(self, a):
        x, z = self.x, self.z
        self.r ^= x[:, a] & z[:, a]
        x[:, a], z[:, a] = z[:, a].copy(), x[:, a].copy()

    def cnot(self, a, b):
        x, z = self.x, self.z
        self.r ^= x[:, a] & z[:, b] & ~(x[:, b] ^ z[:, a])
        x[:, b] ^= x[:, a]
        z[:, a] ^= z[:, b]

    def pauli(self, a, kind: str):
        if kind in ("X", "Y"):
            self.r ^= self.z[:, a]
        if kind in ("Z", "Y"):
            self.r ^= self.x[:, a]

    def _rowsum(self, rows, i):
        """rows <- rows * row i, vectorized over ``rows``."""
        x1, z1 = self.x[i].astype(np.int8), self.z[i].astype(np.int8)
        x2, z2 = self.x[rows].astype(np.int8), self.z[rows].astype(np.int8)
        g = np.where(
            (x1 == 1) & (z1 == 1),
            z2 - x2,
            np.where((x1 == 1) & (z1 == 0), z2 * (2 * x2 - 1), np.where((x1 == 0) & (z1 == 1), x2 * (1 - 2 * z2), 0)),
        )
        total = 2 * self.r[rows].astype(np.int64) + 2 * int(self.r[i]) + g.sum(axis=1)
        self.r[rows] = (total % 4) == 2
        self.x[rows] ^= self.x[i]
        self.z[rows] ^= self.z[i]

    def measure(self, a) -> int:
        n = self.n
        hits = np.nonzero(self.x[n : 2 * n, a])[0]
        if len(hits):
            p = hits[0] + n
            rows = np.nonzero(self.x[: 2 * n, a])[0]
            rows = rows[rows != p]
            if len(rows):
                self._rowsum(rows, p)
            self.x[p - n], self.z[p - n], self.r[p - n] = self.x[p], self.z[p], self.r[p]
            self.x[p] = False
            self.z[p] = False
            self.z[p, a] = True
            self.r[p] = bool(self.rng.integers(2))
            return int(self.r[p])
        s = 2 * n
        self.x[s] = False
        self.z[s] = False
        self.r[s] = False
        for i in np.nonzero(self.x[:n, a])[0]:
            self._rowsum(np.array([s]), i + n)
        return int(self.r[s])

    def reset(self, a):
        if self.measure(a):
            self.pauli(a, "X")


def run_tableau(circuit: CircuitIR, rng=None, inject=None) -> np.ndarray:
    """Execute the gate ops of ``circuit`` once and return the measurement record.

    Noise ops are ignored. ``inject`` maps an op index to a list of
    ``(qubit, pauli)`` applied right before that op.
    """
    t = Tableau(circuit.n_qubits, rng)
    inject = inject or {}
    rec = []
    for i, op in enumerate(circuit.ops):
        for q, kind in inject.get(i, ()):
            t.pauli(q, kind)
        if op.kind == H:
            for q in op.targets:
                t.h(q)
        elif op.kind == CNOT:
            tg = op.targets
            for j in range(0, len(tg), 2):
                t.cnot(tg[j], tg[j + 1])
        elif op.kind == RESET:
            for q in op.targets:
                t.reset(q)
                if op.basis == "X":
                    t.h(q)
        elif op.kind == MEASURE:
            for q in op.targets:
                if op.basis == "X":
                    t.h(q)
                rec.append(t.measure(q))
                if op.reset:
                    if rec[-1]:
                        t.pauli(q, "X")
                elif op.basis == "X":
                    t.h(q)
        elif op.kind == TICK:
            continue
    return np.array(rec, dtype=np.uint8)


def parities(record: np.ndarray, circuit: CircuitIR) -> tuple[np.ndarray, np.ndarray]:
    dets = np.array([record[list(d.meas)].sum() % 2 for d in circuit.detectors], dtype=np.uint8)
    obs = np.array([record[list(o.meas)].sum() % 2 for o in circuit.observables], dtype=np.uint8)
    return dets, obs
