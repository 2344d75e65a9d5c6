"""Per-round syndrome statistics."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..circuits.ir import CircuitIR


@dataclass(frozen=True)
class HammingProfile:
    """Mean number of fired detectors per round.

    The last entry covers the detectors closed by the final data readout.
    """

    per_round_mean_weight: tuple[float, ...]
    round_of_surgery: int | None

    @property
    def merge_weight(self) -> float:
        if self.round_of_surgery is None:
            raise ValueError("circuit has no merge round")
        return self.per_round_mean_weight[self.round_of_surgery]

    def to_dict(self) -> dict:
        return {
            "per_round_mean_weight": list(self.per_round_mean_weight),
            "round_of_surgery": self.round_of_surgery,
        }


def detector_rounds(circuit: CircuitIR) -> np.ndarray:
    return np.array([d.round for d in circuit.detectors], dtype=np.int64)


def profile_from_counts(counts: np.ndarray, n_shots: int, circuit: CircuitIR) -> HammingProfile:
    """Build a profile from per-detector fire counts accumulated over ``n_shots``."""
    rounds = detector_rounds(circuit)
    n_rounds = int(rounds.max()) + 1 if len(rounds) else 0
    sums = np.bincount(rounds, weights=np.asarray(counts, dtype=np.float64), minlength=n_rounds)
    means = sums / n_shots if n_shots else np.zeros(n_rounds)
    return HammingProfile(tuple(float(v) for v in means), circuit.meta.get("merge_round"))


def hamming_stats(batch, circuit: CircuitIR) -> HammingProfile:
    if batch.n_detectors != circuit.n_detectors:
        raise ValueError("batch does not match circuit")
    return profile_from_counts(batch.detector_counts(), batch.n_shots, circuit)
