from .frame import (
    BLOCK_SHOTS,
    Program,
    ShotBatch,
    UnannotatedCircuitError,
    compile_circuit,
    iter_blocks,
    pack,
    run_events,
    sample,
    unpack,
)
from .stats import HammingProfile, hamming_stats, profile_from_counts
from .tableau import Tableau, parities, run_tableau

__all__ = [
    "BLOCK_SHOTS", "HammingProfile", "Program", "ShotBatch", "Tableau",
    "UnannotatedCircuitError", "compile_circuit", "hamming_stats", "iter_blocks", "pack",
    "parities", "profile_from_counts", "run_events", "run_tableau", "sample", "unpack",
]
