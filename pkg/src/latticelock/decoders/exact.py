"""Exact minimum-weight correction for small syndromes.

Shortest paths between defects (and to the boundary) come from Dijkstra on
the decoding graph; the optimal pairing is found by dynamic programming over
subsets of defects, so the cost is exponential in the syndrome weight only.
"""
from __future__ import annotations

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from .graph import MatchingGraph

MAX_DEFECTS = 20


class InfeasibleSyndromeError(ValueError):
    pass


class ExactMatcher:
    def __init__(self, graph: MatchingGraph, weights: np.ndarray | None = None):
        self.graph = graph
        w = graph.weight if weights is None else np.asarray(weights, dtype=float)
        w = np.maximum(w, 1e-9)
        n = graph.n_nodes
        self.csr = csr_matrix(
            (np.concatenate([w, w]), (np.concatenate([graph.u, graph.v]), np.concatenate([graph.v, graph.u]))),
            shape=(n, n),
        )
        self._sp = {}

    def _paths(self, s: int):
        if s not in self._sp:
            dist, pred = dijkstra(self.csr, indices=s, return_predecessors=True)
            self._sp[s] = (dist, pred)
        return self._sp[s]

    def distance(self, a: int, b: int) -> float:
        return float(self._paths(a)[0][b])

    def path_edges(self, a: int, b: int) -> list[int]:
        _, pred = self._paths(a)
        edges = []
        cur = b
        while cur != a:
            prv = pred[cur]
            if prv < 0:
                raise InfeasibleSyndromeError(f"no path between {a} and {b}")
            edges.append(self.graph.edge_of(int(prv), int(cur)))
            cur = prv
        return edges

    def match(self, defects) -> list[int]:
        """Edge ids of a minimum-weight correction for ``defects``."""
        defects = sorted(int(d) for d in defects)
        k = len(defects)
        if k == 0:
            return []
        if k > MAX_DEFECTS:
            raise ValueError(f"exact decoding limited to {MAX_DEFECTS} defects")
        B = self.graph.boundary
        dB = [self.distance(d, B) for d in defects]
        dd = [[self.distance(a, b) for b in defects] for a in defects]
        full = (1 << k) - 1
        cost = np.full(1 << k, np.inf)
        choice = np.full(1 << k, -2, dtype=np.int64)
        cost[0] = 0.0
        for mask in range(1, full + 1):
            i = (mask & -mask).bit_length() - 1
            rest = mask ^ (1 << i)
            best, arg = cost[rest] + dB[i], -1
            r = rest
            while r:
                j = (r & -r).bit_length() - 1
                r ^= 1 << j
                c = cost[rest ^ (1 << j)] + dd[i][j]
                if c < best:
                    best, arg = c, j
            cost[mask], choice[mask] = best, arg
        if not np.isfinite(cost[full]):
            raise InfeasibleSyndromeError("syndrome cannot be matched")
        edges = []
        mask = full
        while mask:
            i = (mask & -mask).bit_length() - 1
            j = int(choice[mask])
            if j < 0:
                edges += self.path_edges(defects[i], B)
                mask ^= 1 << i
            else:
                edges += self.path_edges(defects[i], defects[j])
                mask ^= (1 << i) | (1 << j)
        # paths may overlap; the correction is their symmetric difference
        keep = {}
        for e in edges:
            keep[e] = keep.get(e, 0) ^ 1
        return sorted(e for e, v in keep.items() if v)

    def decode(self, defects) -> int:
        return self.graph.obs_of(self.match(defects))


def decode_bruteforce(graph: MatchingGraph, syndrome, matcher: ExactMatcher | None = None) -> int:
    """Observable flips of an exact minimum-weight correction.

    ``syndrome`` is a boolean vector over detectors or a list of fired
    detector indices.
    """
    m = matcher or ExactMatcher(graph)
    return m.decode(_defects(syndrome, graph.n_detectors))


def _defects(syndrome, n):
    s = np.asarray(syndrome)
    if s.dtype == bool and s.shape == (n,):
        return np.nonzero(s)[0]
    return s.astype(np.int64).ravel()
