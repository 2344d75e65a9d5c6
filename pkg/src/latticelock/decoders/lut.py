"""Exact-match syndrome lookup table with a union-find fallback."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exact import ExactMatcher
from .graph import MatchingGraph
from .unionfind import UnionFindDecoder


def syndrome_key(defects, n_detectors: int) -> bytes:
    bits = np.zeros(n_detectors, dtype=bool)
    bits[np.asarray(defects, dtype=np.int64)] = True
    return np.packbits(bits, bitorder="little").tobytes()


@dataclass
class LutTable:
    entries: dict
    capacity_bytes: int
    entry_bytes: int
    n_detectors: int
    hits: int = 0
    misses: int = 0
    max_weight: int = field(default=0)

    @property
    def size_bytes(self) -> int:
        return len(self.entries) * self.entry_bytes

    def __len__(self) -> int:
        return len(self.entries)

    def lookup(self, defects):
        """Observable mask for a stored syndrome, else None."""
        v = self.entries.get(syndrome_key(defects, self.n_detectors))
        if v is None:
            self.misses += 1
        else:
            self.hits += 1
        return v

    @property
    def hit_rate(self) -> float:
        n = self.hits + self.misses
        return self.hits / n if n else 0.0

    def reset_counters(self) -> None:
        self.hits = self.misses = 0


def _fault_sets(graph: MatchingGraph, max_weight: int):
    """Edge sets by increasing size, most likely first within a size."""
    yield ()
    order = np.lexsort((np.arange(graph.n_edges), -graph.p))
    for e in order:
        yield (int(e),)
    if max_weight < 2:
        return
    logp = np.log(np.maximum(graph.p, 1e-300))
    i, j = np.triu_indices(graph.n_edges, 1)
    pair_order = np.lexsort((j, i, -(logp[i] + logp[j])))
    for k in pair_order:
        yield (int(i[k]), int(j[k]))


def build_lut(graph: MatchingGraph, capacity_bytes: int, max_weight: int = 2,
              matcher: ExactMatcher | None = None) -> LutTable:
    """Fill a table with exact corrections of the most likely small fault sets
    until ``capacity_bytes`` is used up."""
    n_obs_bytes = max(1, (graph.n_observables + 7) // 8)
    entry_bytes = (graph.n_detectors + 7) // 8 + n_obs_bytes
    cap = max(0, capacity_bytes) // entry_bytes
    table = LutTable({}, capacity_bytes, entry_bytes, graph.n_detectors)
    if cap == 0:
        return table
    matcher = matcher or ExactMatcher(graph)
    for fs in _fault_sets(graph, max_weight):
        defects = np.nonzero(graph.syndrome_of(fs))[0]
        key = syndrome_key(defects, graph.n_detectors)
        if key in table.entries:
            continue
        table.entries[key] = matcher.decode(defects)
        table.max_weight = len(fs)
        if len(table.entries) >= cap:
            break
    return table


class HierarchicalDecoder:
    """Table lookup first, union-find on a miss."""

    def __init__(self, graph: MatchingGraph, table: LutTable, fallback: UnionFindDecoder | None = None):
        self.graph = graph
        self.table = table
        self.fallback = fallback or UnionFindDecoder(graph)

    def decode_csr(self, shot_ptr, shot_det) -> np.ndarray:
        n = len(shot_ptr) - 1
        out = np.zeros(n, dtype=np.uint64)
        miss = []
        for s in range(n):
            v = self.table.lookup(shot_det[shot_ptr[s] : shot_ptr[s + 1]])
            if v is None:
                miss.append(s)
            else:
                out[s] = v
        if miss:
            miss = np.array(miss, dtype=np.int64)
            lens = shot_ptr[miss + 1] - shot_ptr[miss]
            sub_ptr = np.concatenate([[0], np.cumsum(lens)])
            sub_det = np.concatenate([shot_det[shot_ptr[s] : shot_ptr[s + 1]] for s in miss])
            out[miss] = self.fallback.decode_csr(sub_ptr, sub_det)
        return out
