"""Timed stabilizer-circuit representation and its text format."""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field, replace

# gate kinds
RESET = "RESET"
H = "H"
CNOT = "CNOT"
MEASURE = "MEASURE"
IDLE = "IDLE"
TICK = "TICK"
# noise kinds added by annotation
DEPOL1 = "DEPOL1"
DEPOL2 = "DEPOL2"
FLIP = "FLIP"
PAULI = "PAULI"

GATE_KINDS = (RESET, H, CNOT, MEASURE, IDLE, TICK)
NOISE_KINDS = (DEPOL1, DEPOL2, FLIP, PAULI)


class CircuitError(ValueError):
    pass


class InvalidPlanError(CircuitError):
    pass


@dataclass(frozen=True)
class Op:
    kind: str
    targets: tuple[int, ...] = ()
    start: int = 0
    duration: int = 0
    basis: str = "Z"
    # MEASURE only: reset the qubit to the basis eigenstate afterwards
    reset: bool = False
    probs: tuple[float, ...] = ()
    label: str = ""

    @property
    def end(self) -> int:
        return self.start + self.duration

    @property
    def is_noise(self) -> bool:
        return self.kind in NOISE_KINDS

    def qubits(self) -> tuple[int, ...]:
        return self.targets


@dataclass(frozen=True)
class Detector:
    meas: tuple[int, ...]
    round: int
    basis: str
    coord: tuple = ()


@dataclass(frozen=True)
class Observable:
    name: str
    meas: tuple[int, ...]
    basis: str


@dataclass
class CircuitIR:
    n_qubits: int
    ops: list[Op]
    detectors: list[Detector]
    observables: list[Observable]
    coords: list[tuple] = field(default_factory=list)
    groups: dict[str, tuple[int, ...]] = field(default_factory=dict)
    annotated: bool = False
    meta: dict = field(default_factory=dict)

    @property
    def n_measurements(self) -> int:
        return sum(len(op.targets) for op in self.ops if op.kind == MEASURE)

    @property
    def n_detectors(self) -> int:
        return len(self.detectors)

    @property
    def n_observables(self) -> int:
        return len(self.observables)

    @property
    def observable_names(self) -> list[str]:
        return [o.name for o in self.observables]

    @property
    def duration(self) -> int:
        ends = [op.end for op in self.ops if op.kind != TICK and not op.is_noise]
        return max(ends) if ends else 0

    @property
    def n_rounds(self) -> int:
        return max((d.round for d in self.detectors), default=-1) + 1

    def replace(self, **kw) -> "CircuitIR":
        kw.setdefault("meta", dict(self.meta))
        return replace(self, **kw)

    def gate_ops(self):
        return [op for op in self.ops if op.kind not in NOISE_KINDS and op.kind != TICK]

    def validate(self) -> None:
        """Check qubit ranges, per-qubit time ordering and record references."""
        last_end = defaultdict(lambda: None)
        for op in self.ops:
            if op.kind in (TICK,) or op.is_noise:
                continue
            if any(not 0 <= q < self.n_qubits for q in op.targets):
                raise CircuitError(f"{op.kind} targets out of range")
            if op.kind == CNOT and len(op.targets) % 2:
                raise CircuitError("CNOT needs target pairs")
            if len(set(op.targets)) != len(op.targets):
                raise CircuitError(f"{op.kind} at t={op.start} repeats a qubit")
            for q in op.targets:
                prev = last_end[q]
                if prev is not None and op.start < prev:
                    raise CircuitError(f"qubit {q} overlaps at t={op.start}")
                last_end[q] = op.end
        n = self.n_measurements
        for det in self.detectors:
            if any(not 0 <= m < n for m in det.meas):
                raise CircuitError("detector references a missing measurement")
        for obs in self.observables:
            if any(not 0 <= m < n for m in obs.meas):
                raise CircuitError(f"observable {obs.name} references a missing measurement")

    def to_text(self) -> str:
        return dumps(self)


def _fmt_p(p: float) -> str:
    return repr(float(p))


def dumps(c: CircuitIR) -> str:
    """Line-oriented text form, one op per line."""
    lines = [f"QUBITS {c.n_qubits}"]
    for op in c.ops:
        tg = " ".join(str(q) for q in op.targets)
        if op.kind == DEPOL1 or op.kind == DEPOL2 or op.kind == FLIP:
            head = f"{op.kind} p={_fmt_p(op.probs[0])}"
            if op.kind == FLIP and op.basis != "Z":
                head += f" basis={op.basis}"
        elif op.kind == PAULI:
            px, py, pz = op.probs
            head = f"PAULI px={_fmt_p(px)} py={_fmt_p(py)} pz={_fmt_p(pz)}"
        else:
            head = f"{op.kind} t={op.start} dur={op.duration}"
            if op.kind in (RESET, MEASURE) and op.basis != "Z":
                head += f" basis={op.basis}"
            if op.reset:
                head += " reset=1"
        if op.label:
            head += f" label={op.label}"
        lines.append(f"{head} {tg}".rstrip())
    for d in c.detectors:
        ms = " ".join(f"m{m}" for m in d.meas)
        head = f"DETECTOR round={d.round} basis={d.basis}"
        if d.coord:
            head += " coord=" + ",".join(str(x) for x in d.coord)
        lines.append(f"{head} {ms}".rstrip())
    for o in c.observables:
        ms = " ".join(f"m{m}" for m in o.meas)
        lines.append(f"OBSERVABLE {o.name} basis={o.basis} {ms}".rstrip())
    return "\n".join(lines) + "\n"


def loads(text: str) -> CircuitIR:
    """Inverse of :func:`dumps` (qubit coordinates, groups and metadata are not stored)."""
    n_qubits = 0
    ops, dets, obs = [], [], []
    annotated = False
    for raw in text.splitlines():
        parts = raw.split()
        if not parts:
            continue
        head, rest = parts[0], parts[1:]
        kv = dict(p.split("=", 1) for p in rest if "=" in p)
        plain = [p for p in rest if "=" not in p]
        if head == "QUBITS":
            n_qubits = int(plain[0])
        elif head == "DETECTOR":
            coord = tuple(int(x) for x in kv["coord"].split(",")) if "coord" in kv else ()
            dets.append(
                Detector(tuple(int(m[1:]) for m in plain), int(kv["round"]), kv["basis"], coord)
            )
        elif head == "OBSERVABLE":
            obs.append(Observable(plain[0], tuple(int(m[1:]) for m in plain[1:]), kv["basis"]))
        elif head in NOISE_KINDS:
            annotated = True
            if head == PAULI:
                probs = (float(kv["px"]), float(kv["py"]), float(kv["pz"]))
            else:
                probs = (float(kv["p"]),)
            ops.append(
                Op(head, tuple(int(q) for q in plain), basis=kv.get("basis", "Z"), probs=probs,
                   label=kv.get("label", ""))
            )
        elif head in GATE_KINDS:
            ops.append(
                Op(
                    head,
                    tuple(int(q) for q in plain),
                    int(kv["t"]),
                    int(kv["dur"]),
                    kv.get("basis", "Z"),
                    kv.get("reset") == "1",
                    label=kv.get("label", ""),
                )
            )
        else:
            raise CircuitError(f"unknown line: {raw!r}")
    return CircuitIR(n_qubits, ops, dets, obs, annotated=annotated)
