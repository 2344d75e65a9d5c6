"""Timed circuit generators: repetition memory, surface memory, two-patch surgery.

Every generator first lays out a plan-free schedule with labelled TICK
markers at round starts and gate-layer gaps, then materializes a SyncPlan's
idles at those markers with :func:`apply_plan_timing`. Qubits that do not
act in a gate layer receive an explicit IDLE op for that layer, so the noise
model sees one idling window per layer.
"""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, replace

from ..policies import EMPTY_PLAN, Policy, SyncPlan
from ..timing import LatencyProfile, get_profile
from .ir import (
    CNOT,
    H,
    IDLE,
    MEASURE,
    RESET,
    TICK,
    CircuitError,
    CircuitIR,
    Detector,
    InvalidPlanError,
    Observable,
    Op,
)
from .layout import PatchGeometry, merged_patch, rotated_patch

MERGE_MARKER = "merge"


@dataclass(frozen=True)
class RoundTiming:
    """Durations of the layers of one syndrome round."""

    t_1q: int
    t_2q: int
    t_mr: int  # measurement plus reset window
    n_1q_layers: int = 2
    n_2q_layers: int = 4

    @property
    def cycle(self) -> int:
        return self.n_1q_layers * self.t_1q + self.n_2q_layers * self.t_2q + self.t_mr

    @classmethod
    def from_profile(
        cls, profile: LatencyProfile, cycle: int | None = None, n_1q_layers=2, n_2q_layers=4
    ) -> "RoundTiming":
        """Round timing of ``profile``; an explicit ``cycle`` stretches or
        shrinks the measurement window to hit that duration."""
        gates = n_1q_layers * profile.t_1q + n_2q_layers * profile.t_2q
        t_mr = profile.t_meas + profile.t_reset if cycle is None else cycle - gates
        if t_mr <= 0:
            raise CircuitError(f"cycle {cycle} ns is shorter than the gate layers ({gates} ns)")
        return cls(profile.t_1q, profile.t_2q, t_mr, n_1q_layers, n_2q_layers)


class _Builder:
    """Collects timed ops keyed by symbolic measurement names.

    Ops are kept in (start, insertion) order; measurement indices are
    assigned once at the end so detectors can be written against keys.
    """

    def __init__(self):
        self.index = {}
        self.coords = []
        self.items = []
        self.groups = defaultdict(list)

    def qubit(self, key, group=None) -> int:
        if key not in self.index:
            self.index[key] = len(self.coords)
            self.coords.append(key)
        q = self.index[key]
        if group is not None and q not in self.groups[group]:
            self.groups[group].append(q)
        return q

    def op(self, kind, targets, start, duration=0, basis="Z", reset=False, label="", keys=None):
        targets = tuple(targets)
        if not targets and kind != TICK:
            return
        op = Op(kind, targets, start, duration, basis, reset, label=label)
        self.items.append((start, len(self.items), op, keys))

    def tick(self, t, label):
        self.op(TICK, (), t, 0, label=label)

    def layer(self, kind, targets, active, everyone, t, dur, **kw):
        """Gate layer plus fill idles on every other qubit of ``everyone``."""
        self.op(kind, targets, t, dur, **kw)
        busy = set(active)
        self.op(IDLE, [q for q in everyone if q not in busy], t, dur, label="fill")

    def finish(self, detectors, observables, meta) -> CircuitIR:
        self.items.sort(key=lambda it: (it[0], it[1]))
        ops, mindex = [], {}
        for _, _, op, keys in self.items:
            ops.append(op)
            if op.kind == MEASURE:
                for k in keys:
                    if k in mindex:
                        raise CircuitError(f"duplicate measurement key {k}")
                    mindex[k] = len(mindex)
        dets = [
            Detector(tuple(sorted(mindex[k] for k in keys)), r, b, c)
            for keys, r, b, c in detectors
        ]
        obs = [Observable(n, tuple(sorted(mindex[k] for k in keys)), b) for n, keys, b in observables]
        c = CircuitIR(
            len(self.coords),
            ops,
            dets,
            obs,
            coords=list(self.coords),
            groups={g: tuple(v) for g, v in self.groups.items()},
            meta=meta,
        )
        c.validate()
        return c


def _surface_round(b, geom: PatchGeometry, group, t0, rt: RoundTiming, k, r_global):
    """Emit one syndrome round of ``geom`` starting at ``t0``; returns end time."""
    stabs = geom.stabilizers
    data = [b.qubit(c, group) for c in geom.data_qubits]
    meas = [b.qubit(s.coord, group) for s in stabs]
    everyone = data + meas
    xs = [m for m, s in zip(meas, stabs) if s.basis == "X"]
    t = t0
    b.tick(t, f"{group}:round:{k}")
    b.layer(H, xs, xs, everyone, t, rt.t_1q)
    t += rt.t_1q
    b.tick(t, f"{group}:gap:{k}:0")
    for layer in range(4):
        pairs, active = [], []
        for m, s in zip(meas, stabs):
            dc = s.schedule[layer]
            if dc is None:
                continue
            dq = b.index[dc]
            pairs += (m, dq) if s.basis == "X" else (dq, m)
            active += (m, dq)
        b.layer(CNOT, pairs, active, everyone, t, rt.t_2q)
        t += rt.t_2q
        b.tick(t, f"{group}:gap:{k}:{layer + 1}")
    b.layer(H, xs, xs, everyone, t, rt.t_1q)
    t += rt.t_1q
    keys = [(s.coord, r_global) for s in stabs]
    b.layer(MEASURE, meas, meas, everyone, t, rt.t_mr, reset=True, keys=keys)
    return t + rt.t_mr


def _stab_detectors(stabs, r_first, r_last, init_basis, prev_round=None):
    """Detectors comparing consecutive measurements of each stabilizer.

    In the first round only stabilizers of ``init_basis`` are deterministic
    (or those with a measurement in ``prev_round``).
    """
    out = []
    for s in stabs:
        for r in range(r_first, r_last + 1):
            if r > r_first or prev_round is not None and s.coord in prev_round:
                out.append(([(s.coord, r), (s.coord, r - 1)], r, s.basis, s.coord))
            elif r == r_first and init_basis is not None and s.basis == init_basis:
                out.append(([(s.coord, r)], r, s.basis, s.coord))
    return out


def _final_detectors(stabs, basis, r_last, r_final):
    return [
        ([("data", q) for q in s.support] + [(s.coord, r_last)], r_final, s.basis, s.coord)
        for s in stabs
        if s.basis == basis
    ]


def _resolve_plan(plan) -> SyncPlan:
    return EMPTY_PLAN if plan is None else plan


def gen_surface_memory(
    d: int,
    rounds: int,
    plan: SyncPlan | None = None,
    profile="google",
    basis: str = "Z",
    cycle_ns: int | None = None,
) -> CircuitIR:
    """Rotated surface-code memory of ``rounds`` syndrome rounds (plus any
    extra rounds requested by ``plan``)."""
    if rounds < 1:
        raise CircuitError("rounds must be >= 1")
    profile = get_profile(profile)
    plan = _resolve_plan(plan)
    rt = RoundTiming.from_profile(profile, cycle_ns)
    geom = rotated_patch(d)
    R = rounds + plan.extra_rounds
    b = _Builder()
    data = [b.qubit(c, "P") for c in geom.data_qubits]
    meas = [b.qubit(s.coord, "P") for s in geom.stabilizers]
    b.op(RESET, data, 0, profile.t_reset, basis=basis)
    b.op(RESET, meas, 0, profile.t_reset)
    t = profile.t_reset
    for k in range(R):
        t = _surface_round(b, geom, "P", t, rt, k, k)
    b.tick(t, "P:premerge")
    b.op(MEASURE, data, t, profile.t_meas, basis=basis, keys=[("data", c) for c in geom.data_qubits])
    stabs = geom.stabilizers
    dets = _stab_detectors(stabs, 0, R - 1, basis) + _final_detectors(stabs, basis, R - 1, R)
    obs = [(f"{basis}_L", [("data", c) for c in geom.logical(basis)], basis)]
    meta = dict(
        kind="memory", d=d, basis=basis, p_rounds=R, gaps_per_round=5,
        passive_marker=f"P:round:{R - 1}", merge_round=None, cycle_p=rt.cycle,
    )
    return apply_plan_timing(b.finish(dets, obs, meta), plan)


def gen_repetition(
    d: int,
    rounds: int,
    idle_before_final: int = 0,
    profile="ibm",
    plan: SyncPlan | None = None,
) -> CircuitIR:
    """Bit-flip repetition code memory; ``idle_before_final`` pauses every
    qubit right before the final syndrome round."""
    if d < 3 or d % 2 == 0:
        raise CircuitError("distance must be odd and >= 3")
    if rounds < 1:
        raise CircuitError("rounds must be >= 1")
    profile = get_profile(profile)
    if plan is None:
        plan = SyncPlan(Policy.PASSIVE, final_idle=idle_before_final, total_slack_absorbed=idle_before_final)
    rt = RoundTiming.from_profile(profile, None, n_1q_layers=0, n_2q_layers=2)
    b = _Builder()
    data = [b.qubit((2 * i, 0), "P") for i in range(d)]
    anc = [b.qubit((2 * i + 1, 0), "P") for i in range(d - 1)]
    everyone = data + anc
    b.op(RESET, everyone, 0, profile.t_reset)
    t = profile.t_reset
    for k in range(rounds):
        b.tick(t, f"P:round:{k}")
        for shift in (0, 1):
            pairs = [q for i in range(d - 1) for q in (data[i + shift], anc[i])]
            b.layer(CNOT, pairs, pairs, everyone, t, rt.t_2q)
            t += rt.t_2q
            b.tick(t, f"P:gap:{k}:{shift}")
        b.layer(MEASURE, anc, anc, everyone, t, rt.t_mr, reset=True, keys=[(i, k) for i in range(d - 1)])
        t += rt.t_mr
    b.tick(t, "P:premerge")
    b.op(MEASURE, data, t, profile.t_meas, keys=[("data", i) for i in range(d)])
    dets = []
    for i in range(d - 1):
        dets.append(([(i, 0)], 0, "Z", (2 * i + 1, 0)))
        for k in range(1, rounds):
            dets.append(([(i, k), (i, k - 1)], k, "Z", (2 * i + 1, 0)))
        dets.append(([("data", i), ("data", i + 1), (i, rounds - 1)], rounds, "Z", (2 * i + 1, 0)))
    obs = [("Z_L", [("data", 0)], "Z")]
    meta = dict(
        kind="repetition", d=d, basis="Z", p_rounds=rounds, gaps_per_round=2,
        passive_marker=f"P:round:{rounds - 1}", merge_round=None, cycle_p=rt.cycle,
    )
    return apply_plan_timing(b.finish(dets, obs, meta), plan)


@dataclass(frozen=True)
class SurgeryExperiment:
    """Two patches P, P' run independently, then merge through a seam column.

    ``basis="Z"`` measures the joint X parity (patches prepared in |+>),
    ``basis="X"`` the joint Z parity. The plan is applied to P.
    """

    distance: int
    basis: str = "Z"
    rounds_before: int | None = None
    rounds_after: int | None = None
    profile: LatencyProfile | str = "google"
    plan: SyncPlan = EMPTY_PLAN
    cycle_p: int | None = None
    cycle_p2: int | None = None

    def __post_init__(self):
        if self.basis not in ("Z", "X"):
            raise CircuitError("basis must be 'Z' or 'X'")
        for name in ("rounds_before", "rounds_after"):
            v = getattr(self, name)
            if v is not None and v < 1:
                raise CircuitError(f"{name} must be >= 1")

    @property
    def n_before(self) -> int:
        return self.rounds_before or self.distance + 1

    @property
    def n_after(self) -> int:
        return self.rounds_after or self.distance + 1


def joint_observable_name(basis: str) -> str:
    return "XPXP2" if basis == "Z" else "ZPZP2"


def gen_lattice_surgery(exp: SurgeryExperiment) -> CircuitIR:
    d = exp.distance
    profile = get_profile(exp.profile)
    plan = exp.plan
    sb = "X" if exp.basis == "Z" else "Z"  # type of the new seam stabilizers
    other = "Z" if sb == "X" else "X"
    flip = exp.basis == "X"
    gp, gp2, gm = rotated_patch(d, 0, flip), rotated_patch(d, d + 1, flip), merged_patch(d, flip)
    rt_p = RoundTiming.from_profile(profile, exp.cycle_p)
    rt_2 = RoundTiming.from_profile(profile, exp.cycle_p2)
    R_P = exp.n_before + plan.extra_rounds
    R_2 = exp.n_before + plan.lagging_extra_rounds
    if len(plan.per_round_idles) > R_P:
        raise InvalidPlanError("plan spreads idles over more rounds than P runs before the merge")
    M = max(R_P, R_2)
    D_P, D_2 = R_P * rt_p.cycle, R_2 * rt_2.cycle
    s_P, s_2 = max(0, D_2 - D_P), max(0, D_P - D_2)
    t_merge = max(D_P, D_2) + profile.t_reset

    b = _Builder()
    for geom, group, s0, R, rt in ((gp, "P", s_P, R_P, rt_p), (gp2, "P2", s_2, R_2, rt_2)):
        data = [b.qubit(c, group) for c in geom.data_qubits]
        meas = [b.qubit(s.coord, group) for s in geom.stabilizers]
        b.op(RESET, data, s0, profile.t_reset, basis=sb)
        b.op(RESET, meas, s0, profile.t_reset)
        t = s0 + profile.t_reset
        for k in range(R):
            t = _surface_round(b, geom, group, t, rt, k, M - R + k)
        assert t == t_merge
        if group == "P":
            b.tick(t, "P:premerge")

    old = {s.coord for g in (gp, gp2) for s in g.stabilizers}
    seam_data = [c for c in gm.data_qubits if c[0] == 2 * d + 1]
    new_stabs = [s for s in gm.stabilizers if s.coord not in old]
    if any(s.basis != sb for s in new_stabs):
        raise CircuitError("merge introduced an unexpected stabilizer type")
    b.op(RESET, [b.qubit(c, "seam") for c in seam_data], t_merge - profile.t_reset, profile.t_reset, basis=other)
    b.op(RESET, [b.qubit(s.coord, "seam") for s in new_stabs], t_merge - profile.t_reset, profile.t_reset)
    b.tick(t_merge, MERGE_MARKER)
    t = t_merge
    for k in range(exp.n_after):
        t = _surface_round(b, gm, "M", t, rt_2, k, M + k)
    r_last = M + exp.n_after - 1
    b.op(
        MEASURE, [b.index[c] for c in gm.data_qubits], t, profile.t_meas, basis=sb,
        keys=[("data", c) for c in gm.data_qubits],
    )

    dets = []
    for geom, R in ((gp, R_P), (gp2, R_2)):
        dets += _stab_detectors(geom.stabilizers, M - R, M - 1, sb)
    dets += _stab_detectors(gm.stabilizers, M, r_last, None, prev_round=old)
    dets += _final_detectors(gm.stabilizers, sb, r_last, r_last + 1)
    obs = [
        (f"{sb}_P", [("data", c) for c in gm.column(0)], sb),
        (f"{sb}_P2", [("data", c) for c in gm.column(2 * d)], sb),
        (joint_observable_name(exp.basis), [(s.coord, M) for s in new_stabs], sb),
    ]
    meta = dict(
        kind="surgery", d=d, basis=exp.basis, p_rounds=R_P, p2_rounds=R_2, gaps_per_round=5,
        passive_marker="P:premerge", merge_marker=MERGE_MARKER, merge_round=M,
        cycle_p=rt_p.cycle, cycle_p2=rt_2.cycle, policy=plan.policy.value,
    )
    return apply_plan_timing(b.finish(dets, obs, meta), plan)


def _plan_inserts(c: CircuitIR, plan: SyncPlan) -> dict[str, int]:
    R = c.meta["p_rounds"]
    ins = defaultdict(int)
    if plan.final_idle:
        ins[c.meta["passive_marker"]] += plan.final_idle
    n = len(plan.per_round_idles)
    if n > R:
        raise InvalidPlanError(f"plan needs {n} rounds, circuit has {R}")
    for i, v in enumerate(plan.per_round_idles):
        ins[f"P:round:{R - n + i}"] += v
    if plan.intra_round_idles:
        gaps = c.meta["gaps_per_round"]
        if len(plan.intra_round_idles) != gaps:
            raise InvalidPlanError(f"plan has {len(plan.intra_round_idles)} layer gaps, round has {gaps}")
        for j, v in enumerate(plan.intra_round_idles):
            ins[f"P:gap:{R - 1}:{j}"] += v
    return {k: v for k, v in ins.items() if v > 0}


def apply_plan_timing(circuit: CircuitIR, plan: SyncPlan | None) -> CircuitIR:
    """Materialize a plan's idles as IDLE ops on patch P and shift time.

    P's ops are delayed by the idle inserted so far. Before the merge marker
    the other patch starts later by the full idle total, so both patches
    reach the merge together; everything after the merge shifts by the total.
    """
    if circuit.annotated:
        raise CircuitError("apply plan timing before noise annotation")
    plan = _resolve_plan(plan)
    inserts = _plan_inserts(circuit, plan)
    labels = {op.label for op in circuit.ops if op.kind == TICK}
    missing = set(inserts) - labels
    if missing:
        raise InvalidPlanError(f"circuit has no insertion point {sorted(missing)}")
    total = sum(inserts.values())
    if total == 0:
        return circuit.replace(ops=list(circuit.ops))
    pset = set(circuit.groups["P"])
    pq = tuple(circuit.groups["P"])
    merge = circuit.meta.get("merge_marker")
    phase1 = merge is not None
    cum, out = 0, []
    for op in circuit.ops:
        if op.kind == TICK and op.label == merge:
            phase1 = False
        on_p = op.label.startswith("P:") if op.kind == TICK else bool(pset.intersection(op.targets))
        shift = cum if (on_p or merge is None) and (phase1 or merge is None) else total
        new = replace(op, start=op.start + shift)
        out.append(new)
        if op.kind == TICK and op.label in inserts:
            out.append(Op(IDLE, pq, new.start, inserts[op.label], label="plan"))
            cum += inserts[op.label]
    meta = dict(circuit.meta)
    meta["plan_idle_ns"] = meta.get("plan_idle_ns", 0) + total
    c = circuit.replace(ops=out, meta=meta)
    c.validate()
    return c
