"""Circuit-level depolarizing noise plus T1/T2 idling channels."""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass

from .circuits.ir import (
    CNOT,
    DEPOL1,
    DEPOL2,
    FLIP,
    H,
    IDLE,
    MEASURE,
    PAULI,
    RESET,
    TICK,
    CircuitError,
    CircuitIR,
    Op,
)
from .timing import InvalidProfileError, LatencyProfile, get_profile


class AlreadyAnnotatedError(CircuitError):
    pass


@dataclass(frozen=True)
class IdlingChannel:
    p_x: float
    p_y: float
    p_z: float
    gap: int

    @property
    def probs(self) -> tuple[float, float, float]:
        return (self.p_x, self.p_y, self.p_z)

    @property
    def total(self) -> float:
        return self.p_x + self.p_y + self.p_z


def idling_channel(gap: float, T1: float, T2: float) -> IdlingChannel:
    """Pauli-twirled amplitude and phase damping over an idle of ``gap`` ns."""
    if gap < 0:
        raise CircuitError("gap must be >= 0")
    if T1 <= 0 or T2 <= 0:
        raise InvalidProfileError("T1 and T2 must be > 0")
    if T2 > 2 * T1:
        raise InvalidProfileError("T2 must not exceed 2*T1")
    # expm1 keeps short gaps accurate
    px = -math.expm1(-gap / T1) / 4
    # p_z = (1 - 2 e^{-g/T2} + e^{-g/T1}) / 4, regrouped as a sum of
    # non-negative terms so that T2 near 2*T1 does not cancel
    half = math.exp(-gap / (2 * T1))
    dephase = gap * (2 * T1 - T2) / (2 * T1 * T2) if T2 < 2 * T1 else 0.0
    pz = (math.expm1(-gap / (2 * T1)) ** 2 - 2 * half * math.expm1(-dephase)) / 4
    return IdlingChannel(px, px, pz, gap)


@dataclass(frozen=True)
class NoiseModel:
    p: float = 1e-3
    profile: LatencyProfile | str = "google"
    reset_errors: bool = True
    idling: bool = True

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("p must be a probability")
        object.__setattr__(self, "profile", get_profile(self.profile))

    def idle(self, gap: int) -> IdlingChannel:
        return idling_channel(gap, self.profile.T1, self.profile.T2)


def find_gaps(circuit: CircuitIR) -> list[tuple[int, int, int]]:
    """Per-qubit silent gaps between consecutive gate ops.

    Returns ``(op_index, qubit, gap)`` where ``op_index`` is the op that ends
    the gap. Explicit IDLE ops count as occupied time.
    """
    last = {}
    out = []
    for i, op in enumerate(circuit.ops):
        if op.kind == TICK or op.is_noise:
            continue
        for q in op.targets:
            if q in last and op.start > last[q]:
                out.append((i, q, op.start - last[q]))
            last[q] = op.end
    return out


def _pauli_ops(targets_by_gap: dict, model: NoiseModel):
    out = []
    for gap in sorted(targets_by_gap):
        ch = model.idle(gap)
        if ch.total > 0:
            out.append(Op(PAULI, tuple(targets_by_gap[gap]), probs=ch.probs, label=f"gap={gap}"))
    return out


def annotate(circuit: CircuitIR, model: NoiseModel) -> CircuitIR:
    """Return a copy of ``circuit`` with noise ops woven in."""
    if circuit.annotated:
        raise AlreadyAnnotatedError("circuit is already noise-annotated")
    p = model.p
    gaps = defaultdict(lambda: defaultdict(list))
    if model.idling:
        for i, q, g in find_gaps(circuit):
            gaps[i][g].append(q)
    out = []
    for i, op in enumerate(circuit.ops):
        if i in gaps:
            out += _pauli_ops(gaps[i], model)
        if op.kind == MEASURE and p > 0:
            out.append(Op(FLIP, op.targets, basis=op.basis, probs=(p,)))
        out.append(op)
        if op.kind == H and p > 0:
            out.append(Op(DEPOL1, op.targets, probs=(p,)))
        elif op.kind == CNOT and p > 0:
            out.append(Op(DEPOL2, op.targets, probs=(p,)))
        elif (op.kind == RESET or op.kind == MEASURE and op.reset) and p > 0 and model.reset_errors:
            basis = op.basis if op.kind == RESET else "Z"
            out.append(Op(FLIP, op.targets, basis=basis, probs=(p,)))
        elif op.kind == IDLE and model.idling and op.duration > 0:
            out += _pauli_ops({op.duration: list(op.targets)}, model)
    meta = dict(circuit.meta)
    meta["noise"] = {"p": p, "profile": model.profile.name, "reset_errors": model.reset_errors}
    return circuit.replace(ops=out, annotated=True, meta=meta)
