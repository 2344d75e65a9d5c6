from .generators import (
    RoundTiming,
    SurgeryExperiment,
    apply_plan_timing,
    gen_lattice_surgery,
    gen_repetition,
    gen_surface_memory,
    joint_observable_name,
)
from .ir import CircuitError, CircuitIR, Detector, InvalidPlanError, Observable, Op, dumps, loads
from .layout import PatchGeometry, Stabilizer, merged_patch, rotated_patch

__all__ = [
    "CircuitError", "CircuitIR", "Detector", "InvalidPlanError", "Observable", "Op",
    "PatchGeometry", "RoundTiming", "Stabilizer", "SurgeryExperiment", "apply_plan_timing",
    "dumps", "gen_lattice_surgery", "gen_repetition", "gen_surface_memory",
    "joint_observable_name", "loads", "merged_patch", "rotated_patch",
]
