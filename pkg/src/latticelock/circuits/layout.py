"""Rotated surface-code and repetition-code geometry.

Coordinates are doubled: data qubit (i, j) sits at (2i+1, 2j+1) and the
measure qubit at plaquette corner (x, y) sits at (2x, 2y). ``x`` grows to
the right (columns), ``y`` downwards (rows).
"""
from __future__ import annotations

from dataclasses import dataclass

from .ir import CircuitError

# CNOT partner offsets per layer, keyed by checkerboard class of the measure
# qubit. The last two partners of a class lie across the logical that its
# hook errors could otherwise shorten (parity class: horizontal pair, plain
# class: vertical pair). Tied to geometry rather than stabilizer type so that
# swapping the type assignment keeps this property.
ORDER_PARITY = ((1, 1), (-1, 1), (1, -1), (-1, -1))
ORDER_PLAIN = ((1, 1), (1, -1), (-1, 1), (-1, -1))


@dataclass(frozen=True)
class Stabilizer:
    basis: str  # "X" or "Z"
    coord: tuple[int, int]
    # data coordinate touched in each of the four CNOT layers, or None
    schedule: tuple

    @property
    def support(self) -> tuple:
        return tuple(c for c in self.schedule if c is not None)


@dataclass(frozen=True)
class PatchGeometry:
    """A rotated patch of ``width`` x ``height`` data qubits.

    ``flip`` exchanges the X/Z labels of all stabilizers.
    """

    width: int
    height: int
    x0: int = 0
    flip: bool = False

    def __post_init__(self):
        if self.width < 2 or self.height < 2:
            raise CircuitError("patch needs at least 2x2 data qubits")

    @property
    def distance(self) -> int:
        return min(self.width, self.height)

    @property
    def data_qubits(self) -> list[tuple[int, int]]:
        return [
            (2 * (self.x0 + i) + 1, 2 * j + 1)
            for j in range(self.height)
            for i in range(self.width)
        ]

    @property
    def stabilizers(self) -> list[Stabilizer]:
        data = set(self.data_qubits)
        out = []
        for y in range(self.height + 1):
            for x in range(self.x0, self.x0 + self.width + 1):
                parity = x % 2 != y % 2
                if x in (self.x0, self.x0 + self.width) and parity:
                    continue
                if y in (0, self.height) and not parity:
                    continue
                basis = "X" if parity != self.flip else "Z"
                order = ORDER_PARITY if parity else ORDER_PLAIN
                c = (2 * x, 2 * y)
                sched = []
                for dx, dy in order:
                    q = (c[0] + dx, c[1] + dy)
                    sched.append(q if q in data else None)
                if sum(q is not None for q in sched) < 2:
                    continue
                out.append(Stabilizer(basis, c, tuple(sched)))
        return out

    @property
    def measure_qubits(self) -> list[tuple[int, int]]:
        return [s.coord for s in self.stabilizers]

    def column(self, i: int) -> list[tuple[int, int]]:
        """Data coordinates of local column ``i`` (top to bottom)."""
        return [(2 * (self.x0 + i) + 1, 2 * j + 1) for j in range(self.height)]

    def row(self, j: int) -> list[tuple[int, int]]:
        return [(2 * (self.x0 + i) + 1, 2 * j + 1) for i in range(self.width)]

    def logical(self, basis: str) -> list[tuple[int, int]]:
        """Support of a representative logical operator of type ``basis``.

        X-type stabilizers close the top/bottom boundaries, so the unflipped
        X logical runs down a column and the Z logical along a row.
        """
        vertical = (basis == "X") != self.flip
        return self.column(0) if vertical else self.row(0)


def rotated_patch(d: int, x0: int = 0, flip: bool = False) -> PatchGeometry:
    if d < 3 or d % 2 == 0:
        raise CircuitError("distance must be odd and >= 3")
    return PatchGeometry(d, d, x0, flip)


def merged_patch(d: int, flip: bool = False) -> PatchGeometry:
    """The d x (2d+1) patch formed by P, one seam column and P'."""
    return PatchGeometry(2 * d + 1, d, 0, flip)
