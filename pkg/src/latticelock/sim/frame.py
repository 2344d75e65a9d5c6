"""Bit-packed Pauli-frame sampler.

Each qubit's X and Z frame components are stored as rows of uint64 words,
64 shots per word (shot ``s`` is bit ``s % 64`` of word ``s // 64``). Noise
is sampled sparsely per block of shots: for every channel the firing
(target, shot) positions are drawn directly, so cost scales with the number
of faults rather than with shots times channels.

Every block draws from its own Philox stream keyed by ``(seed, block)``,
which makes results independent of how blocks are spread over threads.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numba as nb
import numpy as np

from ..circuits.ir import (
    CNOT,
    DEPOL1,
    DEPOL2,
    FLIP,
    H,
    MEASURE,
    PAULI,
    RESET,
    CircuitError,
    CircuitIR,
)

BLOCK_SHOTS = 1 << 16

OP_H, OP_CNOT, OP_MEASURE, OP_RESET, OP_NOISE = 0, 1, 2, 3, 4
# frame bit encoding of a single-qubit Pauli: bit0 = X part, bit1 = Z part
PX, PZ, PY = 1, 2, 3


class UnannotatedCircuitError(CircuitError):
    pass


@dataclass
class Program:
    """Flat arrays describing the circuit for the sampling kernel."""

    code: np.ndarray
    t_lo: np.ndarray
    t_hi: np.ndarray
    flags: np.ndarray  # MEASURE: bit0 = X basis, bit1 = reset
    noise_slot: np.ndarray
    targets: np.ndarray
    noise: list  # (kind, targets, probs, basis) per noise slot
    n_qubits: int
    n_meas: int
    det_ptr: np.ndarray
    det_idx: np.ndarray
    obs_ptr: np.ndarray
    obs_idx: np.ndarray


def _csr(sets):
    ptr = np.zeros(len(sets) + 1, dtype=np.int64)
    ptr[1:] = np.cumsum([len(s) for s in sets])
    idx = np.fromiter((m for s in sets for m in s), dtype=np.int64, count=int(ptr[-1]))
    return ptr, idx


def compile_circuit(circuit: CircuitIR) -> Program:
    code, lo, hi, flags, slot, tg, noise = [], [], [], [], [], [], []
    for op in circuit.ops:
        kind = op.kind
        if kind in (H, CNOT, MEASURE, RESET):
            c = {H: OP_H, CNOT: OP_CNOT, MEASURE: OP_MEASURE, RESET: OP_RESET}[kind]
            f = (op.basis == "X") | (op.reset << 1)
            s = -1
        elif op.is_noise:
            c, f, s = OP_NOISE, 0, len(noise)
            noise.append((kind, np.asarray(op.targets, dtype=np.int64), op.probs, op.basis))
        else:
            continue
        code.append(c)
        lo.append(len(tg))
        tg.extend(op.targets)
        hi.append(len(tg))
        flags.append(f)
        slot.append(s)
    det_ptr, det_idx = _csr([d.meas for d in circuit.detectors])
    obs_ptr, obs_idx = _csr([o.meas for o in circuit.observables])
    return Program(
        np.array(code, dtype=np.int64), np.array(lo, dtype=np.int64), np.array(hi, dtype=np.int64),
        np.array(flags, dtype=np.int64), np.array(slot, dtype=np.int64), np.array(tg, dtype=np.int64),
        noise, circuit.n_qubits, circuit.n_measurements, det_ptr, det_idx, obs_ptr, obs_idx,
    )


@nb.njit(nogil=True, cache=True)
def _run_frames(code, t_lo, t_hi, flags, slot, targets, ev_ptr, ev_q, ev_w, ev_bit, ev_kind,
                n_qubits, n_meas, W, det_ptr, det_idx, obs_ptr, obs_idx):
    x = np.zeros((n_qubits, W), dtype=np.uint64)
    z = np.zeros((n_qubits, W), dtype=np.uint64)
    rec = np.zeros((n_meas, W), dtype=np.uint64)
    m = 0
    for i in range(code.shape[0]):
        c = code[i]
        if c == 0:
            for j in range(t_lo[i], t_hi[i]):
                q = targets[j]
                for w in range(W):
                    tmp = x[q, w]
                    x[q, w] = z[q, w]
                    z[q, w] = tmp
        elif c == 1:
            for j in range(t_lo[i], t_hi[i], 2):
                a = targets[j]
                b = targets[j + 1]
                for w in range(W):
                    x[b, w] ^= x[a, w]
                    z[a, w] ^= z[b, w]
        elif c == 2:
            xb = flags[i] & 1
            rs = flags[i] & 2
            for j in range(t_lo[i], t_hi[i]):
                q = targets[j]
                for w in range(W):
                    rec[m, w] = z[q, w] if xb else x[q, w]
                    if rs:
                        x[q, w] = 0
                        z[q, w] = 0
                m += 1
        elif c == 3:
            for j in range(t_lo[i], t_hi[i]):
                q = targets[j]
                for w in range(W):
                    x[q, w] = 0
                    z[q, w] = 0
        else:
            s = slot[i]
            for e in range(ev_ptr[s], ev_ptr[s + 1]):
                q = ev_q[e]
                w = ev_w[e]
                bit = np.uint64(1) << np.uint64(ev_bit[e])
                k = ev_kind[e]
                if k & 1:
                    x[q, w] ^= bit
                if k & 2:
                    z[q, w] ^= bit
    dets = np.zeros((det_ptr.shape[0] - 1, W), dtype=np.uint64)
    for d in range(det_ptr.shape[0] - 1):
        for j in range(det_ptr[d], det_ptr[d + 1]):
            r = det_idx[j]
            for w in range(W):
                dets[d, w] ^= rec[r, w]
    obs = np.zeros((obs_ptr.shape[0] - 1, W), dtype=np.uint64)
    for o in range(obs_ptr.shape[0] - 1):
        for j in range(obs_ptr[o], obs_ptr[o + 1]):
            r = obs_idx[j]
            for w in range(W):
                obs[o, w] ^= rec[r, w]
    return dets, obs


def run_events(prog: Program, events, n_lanes: int):
    """Run the kernel with explicit fault events.

    ``events`` is ``(ev_ptr, qubit, lane, kind)`` with one CSR segment per
    noise slot. Returns packed detector and observable words.
    """
    ev_ptr, ev_q, lane, kind = events
    W = max(1, (n_lanes + 63) // 64)
    lane = np.asarray(lane, dtype=np.int64)
    return _run_frames(
        prog.code, prog.t_lo, prog.t_hi, prog.flags, prog.noise_slot, prog.targets,
        np.asarray(ev_ptr, dtype=np.int64), np.asarray(ev_q, dtype=np.int64), lane >> 6, lane & 63,
        np.asarray(kind, dtype=np.int64), prog.n_qubits, prog.n_meas, W,
        prog.det_ptr, prog.det_idx, prog.obs_ptr, prog.obs_idx,
    )


def _positions(rng, n_trials: int, p: float) -> np.ndarray:
    """Indices of successes among ``n_trials`` independent Bernoulli(p) trials."""
    if p <= 0 or n_trials == 0:
        return np.empty(0, dtype=np.int64)
    if p >= 1:
        return np.arange(n_trials, dtype=np.int64)
    k = int(rng.binomial(n_trials, p))
    if k == 0:
        return np.empty(0, dtype=np.int64)
    return rng.choice(n_trials, size=k, replace=False).astype(np.int64)


def sample_events(prog: Program, n_shots: int, rng):
    """Draw all fault events of one block."""
    ptr = [0]
    qs, lanes, kinds = [], [], []
    for kind, tg, probs, basis in prog.noise:
        if kind == DEPOL2:
            pairs = tg.reshape(-1, 2)
            pos = _positions(rng, len(pairs) * n_shots, probs[0])
            pair, shot = pos // n_shots, pos % n_shots
            # 4-ary digits of 1..15 give the Pauli on each qubit of the pair
            code = rng.integers(1, 16, size=len(pos))
            a, b = code & 3, code >> 2
            for part, col in ((a, 0), (b, 1)):
                keep = part != 0
                qs.append(pairs[pair[keep], col])
                lanes.append(shot[keep])
                kinds.append(part[keep])
        else:
            p = probs[0] if kind != PAULI else sum(probs)
            pos = _positions(rng, len(tg) * n_shots, p)
            qs.append(tg[pos // n_shots])
            lanes.append(pos % n_shots)
            if kind == DEPOL1:
                kinds.append(rng.integers(1, 4, size=len(pos)))
            elif kind == FLIP:
                kinds.append(np.full(len(pos), PX if basis == "Z" else PZ, dtype=np.int64))
            else:
                px, py, pz = probs
                u = rng.random(len(pos)) * p
                kinds.append(np.where(u < px, PX, np.where(u < px + py, PY, PZ)))
        ptr.append(ptr[-1] + sum(len(q) for q in qs[len(qs) - (2 if kind == DEPOL2 else 1):]))
    if qs:
        cat = lambda xs: np.concatenate(xs).astype(np.int64)
        return np.array(ptr, dtype=np.int64), cat(qs), cat(lanes), cat(kinds)
    e = np.empty(0, dtype=np.int64)
    return np.array(ptr, dtype=np.int64), e, e, e


def block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(block,))))


def _tail_mask(words: np.ndarray, n_shots: int):
    rem = n_shots % 64
    if rem:
        words[:, -1] &= np.uint64((1 << rem) - 1)


def sample_block(prog: Program, n_shots: int, seed: int, block: int):
    rng = block_rng(seed, block)
    dets, obs = run_events(prog, sample_events(prog, n_shots, rng), n_shots)
    _tail_mask(dets, n_shots)
    _tail_mask(obs, n_shots)
    return dets, obs


def resolve_threads(threads: int | None = None) -> int:
    env = os.environ.get("LATTICELOCK_THREADS")
    if env:
        return max(1, int(env))
    return max(1, threads or os.cpu_count() or 1)


def iter_blocks(circuit_or_prog, n_shots: int, seed: int, threads: int | None = None,
                block_shots: int = BLOCK_SHOTS):
    """Yield ``(n, det_words, obs_words)`` per block, in block order."""
    if block_shots % 64:
        raise ValueError("block_shots must be a multiple of 64")
    prog = circuit_or_prog
    if isinstance(prog, CircuitIR):
        if not prog.annotated:
            raise UnannotatedCircuitError("sample() needs a noise-annotated circuit")
        prog = compile_circuit(prog)
    sizes = [min(block_shots, n_shots - s) for s in range(0, n_shots, block_shots)]
    threads = resolve_threads(threads)
    if threads == 1 or len(sizes) == 1:
        for b, n in enumerate(sizes):
            yield (n, *sample_block(prog, n, seed, b))
        return
    with ThreadPoolExecutor(threads) as pool:
        # bounded lookahead keeps memory flat while preserving block order
        pending = []
        for b, n in enumerate(sizes):
            pending.append((n, pool.submit(sample_block, prog, n, seed, b)))
            if len(pending) > 2 * threads:
                n0, f = pending.pop(0)
                yield (n0, *f.result())
        for n0, f in pending:
            yield (n0, *f.result())


@dataclass
class ShotBatch:
    """Detector-major bit-packed samples: row ``i`` holds detector ``i`` for
    all shots, 64 shots per little-endian uint64 word."""

    n_shots: int
    detector_bits: np.ndarray
    observable_bits: np.ndarray
    seed: int

    @property
    def n_detectors(self) -> int:
        return self.detector_bits.shape[0]

    def unpack_detectors(self) -> np.ndarray:
        """(shots, detectors) boolean matrix."""
        return unpack(self.detector_bits, self.n_shots).T

    def unpack_observables(self) -> np.ndarray:
        return unpack(self.observable_bits, self.n_shots).T

    def detector_counts(self) -> np.ndarray:
        return popcount_rows(self.detector_bits)

    def to_bytes(self) -> bytes:
        """Raw dump: detector words then observable words, little-endian uint64."""
        return (
            self.detector_bits.astype("<u8").tobytes() + self.observable_bits.astype("<u8").tobytes()
        )

    def save_raw(self, path) -> None:
        with open(path, "wb") as f:
            f.write(self.to_bytes())

    def detector_csv(self, circuit: CircuitIR | None = None) -> str:
        counts = self.detector_counts()
        lines = ["detector,round,basis,fires,rate"]
        for i, k in enumerate(counts):
            r, b = ("", "")
            if circuit is not None:
                r, b = circuit.detectors[i].round, circuit.detectors[i].basis
            lines.append(f"{i},{r},{b},{int(k)},{k / max(1, self.n_shots)!r}")
        return "\n".join(lines) + "\n"


def unpack(words: np.ndarray, n_shots: int) -> np.ndarray:
    bits = np.unpackbits(words.astype("<u8").view(np.uint8), axis=1, bitorder="little")
    return bits[:, :n_shots].astype(bool)


def pack(bits: np.ndarray) -> np.ndarray:
    """Inverse of :func:`unpack` for a (rows, shots) boolean matrix."""
    rows, n = bits.shape
    W = (n + 63) // 64
    padded = np.zeros((rows, W * 64), dtype=np.uint8)
    padded[:, :n] = bits
    return np.packbits(padded, axis=1, bitorder="little").view("<u8").astype(np.uint64)


_POP8 = np.array([bin(i).count("1") for i in range(256)], dtype=np.int64)


def popcount_rows(words: np.ndarray) -> np.ndarray:
    return _POP8[words.astype("<u8").view(np.uint8)].sum(axis=1)


def sample(circuit: CircuitIR, n_shots: int, seed: int = 0, threads: int | None = None) -> ShotBatch:
    if n_shots < 1:
        raise ValueError("n_shots must be >= 1")
    dets, obs = [], []
    for _, d, o in iter_blocks(circuit, n_shots, seed, threads):
        dets.append(d)
        obs.append(o)
    return ShotBatch(n_shots, np.concatenate(dets, axis=1), np.concatenate(obs, axis=1), seed)
