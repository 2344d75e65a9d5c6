"""Case studies that produce synchronization slack.

Heterogeneous codes drift apart a fixed amount every round; magic-state
cultivation finishes after a random number of attempts, so its consumer sees
a random phase offset.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .timing import InvalidRequestError, cycle_time_from_profile, get_profile, slack_after_rounds

SURFACE_CNOT_LAYERS = 4
QLDPC_CNOT_LAYERS = 7


def run_case_qldpc(t_surface: int, t_qldpc: int, max_rounds: int) -> list[tuple[int, int]]:
    """``(round, slack_ns)`` rows for r = 0..max_rounds."""
    if not t_qldpc > t_surface > 0:
        raise InvalidRequestError("need t_qldpc > t_surface > 0")
    if max_rounds < 0:
        raise InvalidRequestError("max_rounds must be >= 0")
    return [(r, slack_after_rounds(r, t_surface, t_qldpc)) for r in range(max_rounds + 1)]


def qldpc_cycle_times(profile) -> tuple[int, int]:
    """Surface-code and qLDPC cycle times on one platform."""
    prof = get_profile(profile)
    return (
        cycle_time_from_profile(prof, SURFACE_CNOT_LAYERS),
        cycle_time_from_profile(prof, QLDPC_CNOT_LAYERS),
    )


def qldpc_period(t_surface: int, t_qldpc: int) -> int:
    """Rounds after which the qLDPC slack sequence repeats."""
    return t_surface // math.gcd(t_qldpc - t_surface, t_surface)


@dataclass(frozen=True)
class CultivationScenario:
    """Retries of a cultivation attempt until success, read by a consumer patch.

    Attempts succeed independently with probability ``success_prob_per_attempt``;
    this geometric model stands in for externally measured retry statistics.
    """

    attempt_duration_ns: int = 2000
    success_prob_per_attempt: float = 0.5
    consumer_cycle_ns: int = 1100
    n_samples: int = 100_000
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.success_prob_per_attempt <= 1.0:
            raise InvalidRequestError("success probability must be in (0, 1]")
        if self.attempt_duration_ns <= 0 or self.consumer_cycle_ns <= 0:
            raise InvalidRequestError("durations must be > 0")
        if self.n_samples < 1:
            raise InvalidRequestError("n_samples must be >= 1")

    @property
    def period(self) -> int:
        """Attempt counts k and k + period give the same slack."""
        return self.consumer_cycle_ns // math.gcd(self.attempt_duration_ns, self.consumer_cycle_ns)


@dataclass(frozen=True)
class SlackDistribution:
    values: np.ndarray  # distinct slack values, ascending
    probs: np.ndarray

    @property
    def mean(self) -> float:
        return float(self.values @ self.probs)

    @property
    def median(self) -> float:
        """Smallest value whose cumulative probability reaches one half."""
        cdf = np.cumsum(self.probs)
        return float(self.values[np.searchsorted(cdf, 0.5 - 1e-12)])


def exact_cultivation_slack(scn: CultivationScenario) -> SlackDistribution:
    """Slack distribution summed in closed form over the geometric law.

    Attempt count k has P(k) = q (1 - q)^(k - 1). Slack depends on k only
    through k mod L (L = ``scn.period``), so each residue class j in 1..L has
    total mass q (1 - q)^(j - 1) / (1 - (1 - q)^L).
    """
    q = scn.success_prob_per_attempt
    L = scn.period
    j = np.arange(1, L + 1)
    if q == 1.0:
        mass = (j == 1).astype(np.float64)
    else:
        mass = q * np.exp((j - 1) * math.log1p(-q)) / -math.expm1(L * math.log1p(-q))
    slack = (j * scn.attempt_duration_ns) % scn.consumer_cycle_ns
    values, inv = np.unique(slack, return_inverse=True)
    return SlackDistribution(values.astype(np.int64), np.bincount(inv, weights=mass))


@dataclass
class CultivationResult:
    mean: float
    median: float
    histogram: list[tuple[int, int]]  # (slack_ns, count)
    exact_mean: float
    exact_median: float
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "mean": self.mean,
            "median": self.median,
            "exact_mean": self.exact_mean,
            "exact_median": self.exact_median,
            "histogram": [list(h) for h in self.histogram],
            "meta": self.meta,
        }


def sample_cultivation_slack(scn: CultivationScenario) -> np.ndarray:
    rng = np.random.default_rng(scn.seed)
    attempts = rng.geometric(scn.success_prob_per_attempt, scn.n_samples).astype(np.int64)
    return (attempts * scn.attempt_duration_ns) % scn.consumer_cycle_ns


def run_case_cultivation(scn: CultivationScenario) -> CultivationResult:
    slack = sample_cultivation_slack(scn)
    values, counts = np.unique(slack, return_counts=True)
    exact = exact_cultivation_slack(scn)
    return CultivationResult(
        mean=float(slack.mean()),
        median=float(np.median(slack)),
        histogram=[(int(v), int(c)) for v, c in zip(values, counts)],
        exact_mean=exact.mean,
        exact_median=exact.median,
        meta={
            "retry_model": "geometric (parameterized; not measured cultivation data)",
            "attempt_duration_ns": scn.attempt_duration_ns,
            "success_prob_per_attempt": scn.success_prob_per_attempt,
            "consumer_cycle_ns": scn.consumer_cycle_ns,
            "n_samples": scn.n_samples,
            "seed": scn.seed,
        },
    )
