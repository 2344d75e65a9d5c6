"""Weighted union-find decoder compiled with numba.

Clusters grow from odd clusters in half-edge steps over integer edge
lengths; an edge fuses once its accumulated growth reaches its length.
Growth stops when every cluster is even or touches the boundary, then each
cluster's spanning forest is peeled from the leaves (rooted at the boundary
when the cluster contains it).
"""
from __future__ import annotations

import numba as nb
import numpy as np

from .graph import MatchingGraph


def edge_lengths(graph: MatchingGraph, weights=None) -> np.ndarray:
    w = graph.weight if weights is None else np.asarray(weights, dtype=float)
    return np.maximum(1, np.rint(2 * w)).astype(np.int64)


@nb.njit(cache=True, nogil=True)
def _find(parent, v):
    r = v
    while parent[r] != r:
        r = parent[r]
    while parent[v] != r:
        nxt = parent[v]
        parent[v] = r
        v = nxt
    return r



@nb.njit(cache=True, nogil=True)
def _touch(v, B, in_tree, parent, rank, odd, has_b, head, nxt, tail, touched, n_touched):
    if in_tree[v]:
        return n_touched
    in_tree[v] = True
    parent[v] = v
    rank[v] = 0
    odd[v] = False
    has_b[v] = v == B
    head[v] = v
    nxt[v] = -1
    tail[v] = v
    touched[n_touched] = v
    return n_touched + 1


@nb.njit(cache=True, nogil=True)
def _decode_one(defects, B, adj_ptr, adj_edge, eu, ev, elen, eobs,
                in_tree, parent, rank, odd, has_b, head, nxt, tail, syn, touched,
                support, fused, etouched, stamp, order, pedge, fuse_buf):
    n_touched = 0
    n_et = 0
    for d in defects:
        n_touched = _touch(d, B, in_tree, parent, rank, odd, has_b, head, nxt, tail, touched, n_touched)
        odd[d] = True
        syn[d] = True
    n_touched = _touch(B, B, in_tree, parent, rank, odd, has_b, head, nxt, tail, touched, n_touched)

    step = 0
    while True:
        step += 1
        n_fuse = 0
        grew = False
        any_odd = False
        for d in defects:
            r = _find(parent, d)
            if not odd[r] or has_b[r] or stamp[r] == step:
                continue
            stamp[r] = step
            any_odd = True
            v = head[r]
            while v != -1:
                for k in range(adj_ptr[v], adj_ptr[v + 1]):
                    e = adj_edge[k]
                    if fused[e]:
                        continue
                    if support[e] == 0:
                        etouched[n_et] = e
                        n_et += 1
                    support[e] += 1
                    grew = True
                    if support[e] >= elen[e]:
                        fused[e] = True
                        fuse_buf[n_fuse] = e
                        n_fuse += 1
                v = nxt[v]
        if not any_odd or not grew:
            break
        for f in range(n_fuse):
            e = fuse_buf[f]
            a = eu[e]
            b = ev[e]
            n_touched = _touch(a, B, in_tree, parent, rank, odd, has_b, head, nxt, tail, touched, n_touched)
            n_touched = _touch(b, B, in_tree, parent, rank, odd, has_b, head, nxt, tail, touched, n_touched)
            ra = _find(parent, a)
            rb = _find(parent, b)
            if ra == rb:
                continue
            if rank[ra] < rank[rb]:
                ra, rb = rb, ra
            parent[rb] = ra
            if rank[ra] == rank[rb]:
                rank[ra] += 1
            odd[ra] = odd[ra] ^ odd[rb]
            has_b[ra] = has_b[ra] or has_b[rb]
            nxt[tail[ra]] = head[rb]
            tail[ra] = tail[rb]

    # peel: BFS over fused edges, boundary first so it becomes a root
    mark = -1 - step
    n_order = 0
    obs = np.uint64(0)
    for start_i in range(n_touched + 1):
        s = B if start_i == 0 else touched[start_i - 1]
        if stamp[s] == mark:
            continue
        stamp[s] = mark
        pedge[s] = -1
        first = n_order
        order[n_order] = s
        n_order += 1
        qi = first
        while qi < n_order:
            v = order[qi]
            qi += 1
            for k in range(adj_ptr[v], adj_ptr[v + 1]):
                e = adj_edge[k]
                if not fused[e]:
                    continue
                w = ev[e] if eu[e] == v else eu[e]
                if stamp[w] == mark:
                    continue
                stamp[w] = mark
                pedge[w] = e
                order[n_order] = w
                n_order += 1
        for qi in range(n_order - 1, first, -1):
            v = order[qi]
            if syn[v]:
                e = pedge[v]
                obs ^= eobs[e]
                syn[v] = False
                w = ev[e] if eu[e] == v else eu[e]
                syn[w] = not syn[w]

    for i in range(n_touched):
        v = touched[i]
        in_tree[v] = False
        syn[v] = False
        stamp[v] = 0
    for i in range(n_et):
        e = etouched[i]
        support[e] = 0
        fused[e] = False
    return obs


@nb.njit(cache=True, nogil=True)
def _decode_batch(shot_ptr, shot_det, B, n_nodes, adj_ptr, adj_edge, eu, ev, elen, eobs):
    n_shots = shot_ptr.shape[0] - 1
    E = eu.shape[0]
    out = np.zeros(n_shots, dtype=np.uint64)
    in_tree = np.zeros(n_nodes, dtype=np.bool_)
    parent = np.zeros(n_nodes, dtype=np.int64)
    rank = np.zeros(n_nodes, dtype=np.int64)
    odd = np.zeros(n_nodes, dtype=np.bool_)
    has_b = np.zeros(n_nodes, dtype=np.bool_)
    head = np.zeros(n_nodes, dtype=np.int64)
    nxt = np.zeros(n_nodes, dtype=np.int64)
    tail = np.zeros(n_nodes, dtype=np.int64)
    syn = np.zeros(n_nodes, dtype=np.bool_)
    touched = np.zeros(n_nodes, dtype=np.int64)
    stamp = np.zeros(n_nodes, dtype=np.int64)
    order = np.zeros(n_nodes, dtype=np.int64)
    pedge = np.zeros(n_nodes, dtype=np.int64)
    support = np.zeros(E, dtype=np.int64)
    fused = np.zeros(E, dtype=np.bool_)
    etouched = np.zeros(E, dtype=np.int64)
    fuse_buf = np.zeros(E, dtype=np.int64)
    for s in range(n_shots):
        lo, hi = shot_ptr[s], shot_ptr[s + 1]
        if lo == hi:
            continue
        out[s] = _decode_one(shot_det[lo:hi], B, adj_ptr, adj_edge, eu, ev, elen, eobs,
                             in_tree, parent, rank, odd, has_b, head, nxt, tail, syn, touched,
                             support, fused, etouched, stamp, order, pedge, fuse_buf)
    return out


@nb.njit(cache=True, nogil=True)
def shots_from_words(det_words, n_shots):
    """Shot-major CSR of fired detectors from detector-major packed words."""
    n_det, W = det_words.shape
    counts = np.zeros(n_shots + 1, dtype=np.int64)
    for d in range(n_det):
        for w in range(W):
            x = det_words[d, w]
            while x:
                low = x & (~x + np.uint64(1))
                b = 0
                t = low
                while t > np.uint64(1):
                    t >>= np.uint64(1)
                    b += 1
                counts[w * 64 + b + 1] += 1
                x ^= low
    ptr = np.cumsum(counts)
    fill = ptr[:-1].copy()
    dets = np.zeros(ptr[-1], dtype=np.int64)
    for d in range(n_det):
        for w in range(W):
            x = det_words[d, w]
            while x:
                low = x & (~x + np.uint64(1))
                b = 0
                t = low
                while t > np.uint64(1):
                    t >>= np.uint64(1)
                    b += 1
                s = w * 64 + b
                dets[fill[s]] = d
                fill[s] += 1
                x ^= low
    return ptr, dets


@nb.njit(cache=True, nogil=True)
def obs_masks_from_words(obs_words, n_shots):
    out = np.zeros(n_shots, dtype=np.uint64)
    for o in range(obs_words.shape[0]):
        bit = np.uint64(1) << np.uint64(o)
        for s in range(n_shots):
            if (obs_words[o, s >> 6] >> np.uint64(s & 63)) & np.uint64(1):
                out[s] |= bit
    return out


class UnionFindDecoder:
    def __init__(self, graph: MatchingGraph, weights=None):
        self.graph = graph
        self.adj_ptr, self.adj_edge = graph.adjacency()
        self.elen = edge_lengths(graph, weights)
        self.eu = graph.u.astype(np.int64)
        self.ev = graph.v.astype(np.int64)
        self.eobs = graph.obs_mask.astype(np.uint64)

    def decode_csr(self, shot_ptr, shot_det) -> np.ndarray:
        return _decode_batch(
            np.asarray(shot_ptr, dtype=np.int64), np.asarray(shot_det, dtype=np.int64),
            self.graph.boundary, self.graph.n_nodes, self.adj_ptr, self.adj_edge,
            self.eu, self.ev, self.elen, self.eobs,
        )

    def decode_words(self, det_words, n_shots) -> np.ndarray:
        ptr, dets = shots_from_words(det_words, n_shots)
        return self.decode_csr(ptr, dets)

    def decode(self, defects) -> int:
        d = np.asarray(sorted(int(x) for x in defects), dtype=np.int64)
        return int(self.decode_csr(np.array([0, len(d)]), d)[0])


def decode_uf(graph: MatchingGraph, syndrome, decoder: UnionFindDecoder | None = None) -> int:
    dec = decoder or UnionFindDecoder(graph)
    s = np.asarray(syndrome)
    if s.dtype == bool and s.shape == (graph.n_detectors,):
        s = np.nonzero(s)[0]
    return dec.decode(s)
