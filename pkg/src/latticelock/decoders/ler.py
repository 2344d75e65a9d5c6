"""Logical error rate estimation, confidence intervals and decoding latency."""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from statistics import NormalDist

import numpy as np

from ..circuits.ir import CircuitIR
from ..sim.frame import compile_circuit, iter_blocks, popcount_rows
from ..sim.stats import HammingProfile, profile_from_counts
from .exact import ExactMatcher
from .graph import MatchingGraph, build_graph
from .lut import HierarchicalDecoder, build_lut
from .unionfind import UnionFindDecoder, obs_masks_from_words, shots_from_words

Z95 = NormalDist().inv_cdf(0.975)


class DecoderKind(str, enum.Enum):
    UF = "uf"
    BRUTEFORCE = "bruteforce"
    LUT = "lut"


def wilson_interval(failures: int, shots: int, z: float = Z95) -> tuple[float, float]:
    if shots <= 0:
        raise ValueError("shots must be > 0")
    phat = failures / shots
    denom = 1 + z * z / shots
    center = (phat + z * z / (2 * shots)) / denom
    half = z * math.sqrt(phat * (1 - phat) / shots + z * z / (4 * shots * shots)) / denom
    # clamp so the interval always contains the point estimate
    return max(0.0, min(phat, center - half)), min(1.0, max(phat, center + half))


@dataclass(frozen=True)
class LerEstimate:
    failures: int
    shots: int
    ler: float
    ci_low: float
    ci_high: float

    @classmethod
    def from_counts(cls, failures: int, shots: int) -> "LerEstimate":
        lo, hi = wilson_interval(failures, shots)
        return cls(int(failures), int(shots), failures / shots, lo, hi)

    def overlaps(self, other: "LerEstimate") -> bool:
        return not (self.ci_high < other.ci_low or other.ci_high < self.ci_low)


@dataclass
class LerReport:
    estimates: dict
    hamming: HammingProfile
    lut_hits: int = 0
    lut_misses: int = 0
    any_failure: LerEstimate | None = None
    meta: dict = field(default_factory=dict)

    @property
    def lut_hit_rate(self) -> float:
        n = self.lut_hits + self.lut_misses
        return self.lut_hits / n if n else 0.0

    def __getitem__(self, name: str) -> LerEstimate:
        return self.estimates[name]


def make_decoder(graph: MatchingGraph, kind="uf", weights=None, lut_capacity: int | None = None):
    """Batch decoder exposing ``decode_csr(shot_ptr, shot_det)``."""
    kind = DecoderKind(kind)
    if kind is DecoderKind.UF:
        return UnionFindDecoder(graph, weights)
    if kind is DecoderKind.BRUTEFORCE:
        return _ExactBatch(ExactMatcher(graph, weights))
    table = build_lut(graph, lut_capacity or 0, matcher=ExactMatcher(graph, weights))
    return HierarchicalDecoder(graph, table, UnionFindDecoder(graph, weights))


class _ExactBatch:
    def __init__(self, matcher: ExactMatcher):
        self.matcher = matcher
        self.cache = {}

    def decode_csr(self, shot_ptr, shot_det) -> np.ndarray:
        out = np.zeros(len(shot_ptr) - 1, dtype=np.uint64)
        for s in range(len(out)):
            key = tuple(shot_det[shot_ptr[s] : shot_ptr[s + 1]])
            if key not in self.cache:
                self.cache[key] = self.matcher.decode(key)
            out[s] = self.cache[key]
        return out


def resolve_weights(graph: MatchingGraph, weighting: str = "llr"):
    if weighting == "llr":
        return None
    if weighting == "uniform":
        return np.ones(graph.n_edges)
    raise ValueError(f"unknown weighting {weighting!r}")


def count_failures(pred: np.ndarray, obs_words: np.ndarray, n_shots: int, n_obs: int):
    """Per-observable mismatch counts and the number of shots with any mismatch."""
    diff = pred ^ obs_masks_from_words(obs_words, n_shots)
    per = [int(np.count_nonzero((diff >> np.uint64(o)) & np.uint64(1))) for o in range(n_obs)]
    return per, int(np.count_nonzero(diff))


def estimate_ler(
    circuit: CircuitIR,
    decoder="uf",
    n_shots: int = 10_000,
    seed: int = 0,
    threads: int | None = None,
    graph: MatchingGraph | None = None,
    lut_capacity: int | None = None,
    weighting: str = "llr",
) -> LerReport:
    """Sample, decode and count per-observable failures.

    Blocks are streamed, so memory stays bounded for any shot count.
    """
    if n_shots < 1:
        raise ValueError("n_shots must be >= 1")
    graph = graph or build_graph(circuit)
    dec = make_decoder(graph, decoder, resolve_weights(graph, weighting), lut_capacity)
    prog = compile_circuit(circuit)
    n_obs = circuit.n_observables
    fails = np.zeros(n_obs, dtype=np.int64)
    any_fail = 0
    det_counts = np.zeros(circuit.n_detectors, dtype=np.int64)
    for n, det_words, obs_words in iter_blocks(prog, n_shots, seed, threads):
        det_counts += popcount_rows(det_words)
        ptr, dets = shots_from_words(det_words, n)
        pred = dec.decode_csr(ptr, dets)
        per, anyf = count_failures(pred, obs_words, n, n_obs)
        fails += per
        any_fail += anyf
    est = {o.name: LerEstimate.from_counts(int(fails[i]), n_shots) for i, o in enumerate(circuit.observables)}
    rep = LerReport(
        est,
        profile_from_counts(det_counts, n_shots, circuit),
        any_failure=LerEstimate.from_counts(any_fail, n_shots),
        meta={"decoder": DecoderKind(decoder).value, "seed": seed, "weighting": weighting},
    )
    if isinstance(dec, HierarchicalDecoder):
        rep.lut_hits, rep.lut_misses = dec.table.hits, dec.table.misses
    return rep


@dataclass(frozen=True)
class MissLatency:
    """Latency distribution of the slow decoder invoked on a table miss."""

    kind: str = "lognormal"
    mean_ns: float = 1000.0
    sigma: float = 0.5
    samples: tuple = ()

    def __post_init__(self):
        if self.kind not in ("constant", "lognormal", "empirical"):
            raise ValueError(f"unknown miss distribution {self.kind!r}")
        if self.kind == "empirical" and not self.samples:
            raise ValueError("empirical distribution needs samples")

    @classmethod
    def from_csv(cls, path) -> "MissLatency":
        with open(path, newline="") as f:
            vals = [float(row[0]) for row in csv.reader(f) if row and _is_number(row[0])]
        return cls("empirical", float(np.mean(vals)), 0.0, tuple(vals))

    @property
    def mean(self) -> float:
        if self.kind == "empirical":
            return float(np.mean(self.samples))
        return self.mean_ns

    def sample(self, rng, n: int) -> np.ndarray:
        if self.kind == "constant":
            return np.full(n, self.mean_ns)
        if self.kind == "lognormal":
            mu = np.log(self.mean_ns) - self.sigma**2 / 2
            return rng.lognormal(mu, self.sigma, n)
        return rng.choice(np.asarray(self.samples, dtype=float), n)


def _is_number(s: str) -> bool:
    try:
        float(s)
        return True
    except ValueError:
        return False


def expected_latency(hit_rate: float, t_hit: float, miss_mean: float) -> float:
    return hit_rate * t_hit + (1 - hit_rate) * miss_mean


def latency_speedup(
    hit_rate_passive: float,
    hit_rate_active: float,
    t_hit: float = 20.0,
    miss_dist: MissLatency | None = None,
    n_trials: int = 1_000_000,
    seed: int = 0,
) -> float:
    """Monte Carlo ratio of mean decoding latency, Passive over Active.

    Both policies share the same uniform and miss-latency draws (common
    random numbers), so equal hit rates give exactly 1. The uniforms are
    stratified, one per interval ``[i/n, (i+1)/n)``, which pins the realised
    hit fraction to within ``1/n`` of the configured rate.
    """
    for h in (hit_rate_passive, hit_rate_active):
        if not 0.0 <= h <= 1.0:
            raise ValueError("hit rates must lie in [0, 1]")
    if t_hit <= 0:
        raise ValueError("t_hit must be > 0")
    miss_dist = miss_dist or MissLatency()
    rng = np.random.default_rng(seed)
    u = (rng.permutation(n_trials) + rng.random(n_trials)) / n_trials
    miss = miss_dist.sample(rng, n_trials)
    lat_p = np.where(u < hit_rate_passive, t_hit, miss).mean()
    lat_a = np.where(u < hit_rate_active, t_hit, miss).mean()
    return float(lat_p / lat_a)
