"""Synchronization policies: turn a slack into an idle / extra-round plan."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

from .timing import InvalidRequestError, PatchTimingState, compute_slack

DEFAULT_EPSILON = 400
DEFAULT_Z_MAX = 5
DEFAULT_M_MAX = 200
# H | C1 | C2 | C3 | C4 | H: five gaps between the six gate layers of a cycle
INTRA_ROUND_GAPS = 5


class Policy(str, enum.Enum):
    PASSIVE = "Passive"
    ACTIVE = "Active"
    ACTIVE_INTRA = "ActiveIntra"
    EXTRA_ROUNDS = "ExtraRounds"
    HYBRID = "Hybrid"

    @classmethod
    def parse(cls, value) -> "Policy":
        if isinstance(value, Policy):
            return value
        try:
            return cls(value)
        except ValueError:
            pass
        key = str(value).replace("-", "").replace("_", "").lower()
        for p in cls:
            if p.value.lower() == key:
                return p
        raise InvalidRequestError(f"unknown policy {value!r}")


class DegenerateInputError(InvalidRequestError):
    pass


class PolicyInfeasibleError(InvalidRequestError):
    pass


@dataclass(frozen=True)
class SyncPlan:
    """Idles and extra rounds the leading patch runs before surgery.

    ``per_round_idles`` are inserted before each of the last
    ``len(per_round_idles)`` rounds, ``intra_round_idles`` inside the final
    round, ``final_idle`` right before the merge. ``lagging_extra_rounds``
    are the rounds the lagging patch runs meanwhile (round-based policies).
    """

    policy: Policy
    per_round_idles: tuple[int, ...] = ()
    intra_round_idles: tuple[int, ...] = ()
    extra_rounds: int = 0
    final_idle: int = 0
    total_slack_absorbed: int = 0
    lagging_extra_rounds: int = 0

    @property
    def idle_total(self) -> int:
        return sum(self.per_round_idles) + sum(self.intra_round_idles) + self.final_idle

    @property
    def is_empty(self) -> bool:
        return self.idle_total == 0 and self.extra_rounds == 0 and self.lagging_extra_rounds == 0

    def to_dict(self) -> dict:
        return {
            "policy": self.policy.value,
            "per_round_idles": list(self.per_round_idles),
            "intra_round_idles": list(self.intra_round_idles),
            "extra_rounds": self.extra_rounds,
            "lagging_extra_rounds": self.lagging_extra_rounds,
            "final_idle": self.final_idle,
            "total_slack_absorbed": self.total_slack_absorbed,
        }


EMPTY_PLAN = SyncPlan(Policy.PASSIVE)


@dataclass(frozen=True)
class ExtraRoundsSolution:
    m: int
    n: int


@dataclass(frozen=True)
class HybridSolution:
    z: int
    residual_idle: int
    epsilon: int
    n: int = 0


def split_even(total: int, parts: int) -> tuple[int, ...]:
    """Split ``total`` into ``parts`` integers differing by at most one,
    larger pieces first."""
    if parts < 1:
        raise InvalidRequestError("need at least one part")
    if total < 0:
        raise InvalidRequestError("slack must be >= 0")
    q, r = divmod(total, parts)
    return (q + 1,) * r + (q,) * (parts - r)


def plan_passive(slack: int) -> SyncPlan:
    if slack < 0:
        raise InvalidRequestError("slack must be >= 0")
    return SyncPlan(Policy.PASSIVE, final_idle=slack, total_slack_absorbed=slack)


def plan_active(slack: int, n_rounds: int) -> SyncPlan:
    return SyncPlan(
        Policy.ACTIVE,
        per_round_idles=split_even(slack, n_rounds),
        total_slack_absorbed=slack,
    )


def plan_active_intra(slack: int, n_layer_gaps: int = INTRA_ROUND_GAPS) -> SyncPlan:
    return SyncPlan(
        Policy.ACTIVE_INTRA,
        intra_round_idles=split_even(slack, n_layer_gaps),
        total_slack_absorbed=slack,
    )


def solve_extra_rounds(
    T_P: int, T_P2: int, slack: int, m_max: int = DEFAULT_M_MAX
) -> ExtraRoundsSolution | None:
    """Smallest m in [0, m_max] with n*T_P2 == m*T_P + slack for integer n."""
    if T_P == T_P2:
        return None
    for m in range(m_max + 1):
        n, rem = divmod(m * T_P + slack, T_P2)
        if rem == 0:
            return ExtraRoundsSolution(m, n)
    return None


def hybrid_residual(T_P: int, T_P2: int, slack: int, z: int) -> int:
    span = z * T_P + slack
    return -(-span // T_P2) * T_P2 - span


def solve_hybrid(
    T_P: int,
    T_P2: int,
    slack: int,
    epsilon: int = DEFAULT_EPSILON,
    z_max: int = DEFAULT_Z_MAX,
) -> HybridSolution | None:
    """Extra rounds ``z <= z_max`` whose leftover idle is below ``epsilon``.

    Among qualifying ``z`` the smallest residual wins, then the smallest z.
    """
    if T_P == T_P2:
        raise DegenerateInputError("hybrid needs distinct cycle times; use Active or Passive")
    if epsilon <= 0 or z_max < 0:
        raise InvalidRequestError("need epsilon > 0 and z_max >= 0")
    best = None
    for z in range(z_max + 1):
        res = hybrid_residual(T_P, T_P2, slack, z)
        if res < epsilon and (best is None or res < best[1]):
            best = (z, res)
    if best is None:
        return None
    z, res = best
    return HybridSolution(z, res, epsilon, n=(z * T_P + slack + res) // T_P2)


def plan_extra_rounds(T_P: int, T_P2: int, slack: int, m_max: int = DEFAULT_M_MAX) -> SyncPlan:
    sol = solve_extra_rounds(T_P, T_P2, slack, m_max)
    if sol is None:
        raise PolicyInfeasibleError(
            f"no integral extra-rounds solution for T_P={T_P}, T_P2={T_P2}, slack={slack}"
        )
    return SyncPlan(
        Policy.EXTRA_ROUNDS,
        extra_rounds=sol.m,
        lagging_extra_rounds=sol.n,
        total_slack_absorbed=slack,
    )


def plan_hybrid(
    T_P: int,
    T_P2: int,
    slack: int,
    epsilon: int = DEFAULT_EPSILON,
    z_max: int = DEFAULT_Z_MAX,
    n_rounds: int = 1,
) -> SyncPlan:
    """Hybrid plan; the residual idle is spread Active-style over the
    ``n_rounds + z`` rounds preceding the merge."""
    sol = solve_hybrid(T_P, T_P2, slack, epsilon, z_max)
    if sol is None:
        raise PolicyInfeasibleError(
            f"no hybrid solution below epsilon={epsilon} within z_max={z_max}"
        )
    return SyncPlan(
        Policy.HYBRID,
        per_round_idles=split_even(sol.residual_idle, n_rounds + sol.z),
        extra_rounds=sol.z,
        lagging_extra_rounds=sol.n,
        total_slack_absorbed=slack,
    )


def make_plan(
    policy,
    slack: int,
    *,
    n_rounds: int | None = None,
    n_layer_gaps: int = INTRA_ROUND_GAPS,
    T_P: int | None = None,
    T_P2: int | None = None,
    epsilon: int = DEFAULT_EPSILON,
    z_max: int = DEFAULT_Z_MAX,
    m_max: int = DEFAULT_M_MAX,
) -> SyncPlan:
    """Build a two-patch plan for any policy from its keyword parameters."""
    policy = Policy.parse(policy)
    if policy is Policy.PASSIVE:
        return plan_passive(slack)
    if policy is Policy.ACTIVE:
        if n_rounds is None:
            raise InvalidRequestError("Active needs n_rounds")
        return plan_active(slack, n_rounds)
    if policy is Policy.ACTIVE_INTRA:
        return plan_active_intra(slack, n_layer_gaps)
    if T_P is None or T_P2 is None:
        raise InvalidRequestError(f"{policy.value} needs both cycle times")
    if policy is Policy.EXTRA_ROUNDS:
        if T_P == T_P2:
            raise DegenerateInputError("extra rounds cannot sync equal cycle times")
        return plan_extra_rounds(T_P, T_P2, slack, m_max)
    return plan_hybrid(T_P, T_P2, slack, epsilon, z_max, n_rounds or 1)


def plan_k_sync(
    states: Sequence[PatchTimingState],
    t_now: int,
    policy,
    **params,
) -> dict[int, SyncPlan]:
    """Pairwise plans of every patch against the most lagging one.

    Idle-based policies absorb the residual slack and run the whole cycles
    of the reduction as ordinary extra rounds; round-based policies solve
    against the raw slack. The lagging patch gets an empty plan. Patches are
    planned in id order, so an error always names the lowest failing id.
    """
    policy = Policy.parse(policy)
    sa = compute_slack(states, t_now)
    cycles = {s.patch_id: s.cycle_time for s in states}
    plans = {}
    for s in sorted(states, key=lambda s: s.patch_id):
        pid = s.patch_id
        if pid == sa.lagging_patch:
            plans[pid] = SyncPlan(policy)
            continue
        if policy in (Policy.EXTRA_ROUNDS, Policy.HYBRID):
            plans[pid] = make_plan(
                policy,
                sa.raw_slack[pid],
                T_P=cycles[pid],
                T_P2=cycles[sa.lagging_patch],
                **params,
            )
        else:
            plan = make_plan(policy, sa.per_patch_slack[pid], **params)
            plans[pid] = SyncPlan(
                plan.policy,
                plan.per_round_idles,
                plan.intra_round_idles,
                sa.full_extra_rounds[pid],
                plan.final_idle,
                sa.raw_slack[pid],
            )
    return plans


def estimate_program_ler(per_op_ler: float, n_ops: int) -> tuple[float, float]:
    """Program failure probability after ``n_ops`` operations: exact and the
    linear (union-bound) approximation."""
    if not 0.0 <= per_op_ler <= 1.0:
        raise InvalidRequestError("per_op_ler must be a probability")
    if per_op_ler == 1.0:
        exact = 1.0 if n_ops > 0 else 0.0
    else:
        exact = -math.expm1(n_ops * math.log1p(-per_op_ler))
    return exact, min(1.0, n_ops * per_op_ler)


def select_policy(
    T_P: int,
    T_P2: int,
    slack: int,
    epsilon: int = DEFAULT_EPSILON,
    z_max: int = DEFAULT_Z_MAX,
) -> Policy:
    if T_P == T_P2:
        return Policy.ACTIVE
    if solve_hybrid(T_P, T_P2, slack, epsilon, z_max) is not None:
        return Policy.HYBRID
    return Policy.ACTIVE
