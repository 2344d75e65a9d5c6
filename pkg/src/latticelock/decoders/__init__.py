from .estimators import MatchingDecoder
from .exact import ExactMatcher, InfeasibleSyndromeError, decode_bruteforce
from .graph import (
    MatchingGraph,
    UnitFaults,
    UnsupportedCircuitError,
    build_graph,
    merge_probability,
    signature_obs,
    unit_faults,
)
from .ler import (
    DecoderKind,
    LerEstimate,
    LerReport,
    MissLatency,
    estimate_ler,
    expected_latency,
    latency_speedup,
    make_decoder,
    wilson_interval,
)
from .lut import HierarchicalDecoder, LutTable, build_lut
from .unionfind import UnionFindDecoder, decode_uf

__all__ = [
    "DecoderKind", "ExactMatcher", "HierarchicalDecoder", "InfeasibleSyndromeError",
    "LerEstimate", "LerReport", "LutTable", "MatchingDecoder", "MatchingGraph", "MissLatency", "UnionFindDecoder",
    "UnitFaults", "UnsupportedCircuitError", "build_graph", "build_lut", "decode_bruteforce",
    "decode_uf", "estimate_ler", "expected_latency", "latency_speedup", "make_decoder",
    "merge_probability", "signature_obs", "unit_faults", "wilson_interval",
]
