"""Cycle-level model of the synchronization control path.

A patch counter table holds one counter per logical patch, advanced by the
global clock and reset at the patch's cycle boundary. A metadata table holds
each patch's cycle duration. From these two the engine reconstructs every
patch's phase and plans the synchronization, without consulting the
scheduler's notion of absolute time.

Tables are array-backed and indexed directly by patch id, so the planning
kernel touches only the requested rows.
"""
from __future__ import annotations

import functools
import gc
import itertools
import math
import time
from collections.abc import Mapping
from dataclasses import dataclass

import numba as nb
import numpy as np

from .policies import (
    DEFAULT_EPSILON,
    DEFAULT_M_MAX,
    DEFAULT_Z_MAX,
    INTRA_ROUND_GAPS,
    DegenerateInputError,
    Policy,
    PolicyInfeasibleError,
    SyncPlan,
    split_even,
)
from .timing import InvalidRequestError, PatchTimingState

NS_PER_S = 1_000_000_000


class InvalidPatchError(InvalidRequestError):
    pass


class CounterWidthError(InvalidRequestError):
    pass


def min_counter_width(cycle_ns: int, clock_hz: int = NS_PER_S) -> int:
    """Fewest counter bits that can hold every tick of one cycle."""
    ticks = cycle_ns * clock_hz // NS_PER_S
    return max(1, math.ceil(math.log2(ticks))) if ticks > 1 else 1


class PatchCounterTable:
    """Per-patch tick counters.

    In the default mode a counter resets to 0 at its patch's cycle boundary.
    With ``free_running`` it wraps at the largest multiple of the cycle that
    fits in ``width`` bits, and the phase is read out modulo the cycle.
    """

    def __init__(self, capacity: int = 64, width: int = 12, clock_hz: int = NS_PER_S,
                 free_running: bool = False):
        if capacity < 1 or width < 1:
            raise InvalidRequestError("capacity and width must be >= 1")
        if clock_hz <= 0 or NS_PER_S % clock_hz:
            raise InvalidRequestError("clock_hz must divide 1 GHz so a tick is a whole ns")
        self.width = width
        self.clock_hz = int(clock_hz)
        self.ns_per_tick = NS_PER_S // self.clock_hz
        self.free_running = free_running
        # rows: counter, period (ticks per cycle), wrap point, valid bit
        self.state = np.zeros((4, capacity), dtype=np.int64)
        self.state[1:3] = 1

    @property
    def counter(self) -> np.ndarray:
        return self.state[0]

    @property
    def period(self) -> np.ndarray:
        return self.state[1]

    @property
    def wrap(self) -> np.ndarray:
        return self.state[2]

    @property
    def valid(self) -> np.ndarray:
        return self.state[3].astype(bool)

    @property
    def capacity(self) -> int:
        return len(self.counter)

    def _slot(self, patch_id: int) -> int:
        if not 0 <= patch_id < self.capacity:
            raise InvalidPatchError(f"patch id {patch_id} outside table of {self.capacity}")
        return patch_id

    def register(self, patch_id: int, cycle_ns: int, phase_ns: int = 0) -> None:
        """Start tracking a patch that is ``phase_ns`` into its current cycle."""
        i = self._slot(patch_id)
        if cycle_ns <= 0 or cycle_ns % self.ns_per_tick:
            raise InvalidRequestError(f"cycle {cycle_ns} ns is not a whole number of ticks")
        period = cycle_ns // self.ns_per_tick
        if (1 << self.width) < period:
            raise CounterWidthError(
                f"{self.width}-bit counter cannot span a {cycle_ns} ns cycle "
                f"(needs {min_counter_width(cycle_ns, self.clock_hz)} bits)"
            )
        self.period[i] = period
        self.wrap[i] = ((1 << self.width) // period) * period if self.free_running else period
        self.counter[i] = (phase_ns // self.ns_per_tick) % period
        self.state[3, i] = 1

    def invalidate(self, patch_id: int) -> None:
        self.state[3, self._slot(patch_id)] = 0

    def tick(self, n_ticks: int = 1) -> "PatchCounterTable":
        if n_ticks < 0:
            raise InvalidRequestError("n_ticks must be >= 0")
        v = self.valid
        self.counter[v] = (self.counter[v] + n_ticks) % self.wrap[v]
        return self

    def read(self, patch_id: int) -> int:
        i = self._slot(patch_id)
        if not self.state[3, i]:
            raise InvalidPatchError(f"patch {patch_id} has no valid counter")
        return int(self.counter[i])

    def phase_ns(self, patch_id: int) -> int:
        return self.read(patch_id) % int(self.period[patch_id]) * self.ns_per_tick


def tick(table: PatchCounterTable, n_ticks: int) -> PatchCounterTable:
    return table.tick(n_ticks)


class PatchMetadataTable:
    """Cycle duration of every patch, indexed by patch id."""

    def __init__(self, capacity: int = 64):
        self.cycle_ns = np.zeros(capacity, dtype=np.int64)

    def set(self, patch_id: int, cycle_ns: int) -> None:
        if not 0 <= patch_id < len(self.cycle_ns):
            raise InvalidPatchError(f"patch id {patch_id} outside table")
        if cycle_ns <= 0:
            raise InvalidRequestError("cycle_ns must be > 0")
        self.cycle_ns[patch_id] = cycle_ns

    def __getitem__(self, patch_id: int) -> int:
        return int(self.cycle_ns[patch_id])


def build_tables(states, capacity: int | None = None, width: int = 12,
                 clock_hz: int = NS_PER_S, t_now: int = 0, free_running: bool = False):
    """Counter and metadata tables encoding ``PatchTimingState`` values at ``t_now``."""
    cap = capacity or (max(s.patch_id for s in states) + 1)
    counters = PatchCounterTable(cap, width, clock_hz, free_running)
    meta = PatchMetadataTable(cap)
    for s in states:
        meta.set(s.patch_id, s.cycle_time)
        counters.register(s.patch_id, s.cycle_time, (t_now - s.cycle_origin) % s.cycle_time)
    return counters, meta


# kernel status codes
_OK, _INVALID, _DEGENERATE, _INFEASIBLE, _DUPLICATE = 0, 1, 2, 3, 4
_PASSIVE, _ACTIVE, _INTRA, _EXTRA, _HYBRID = 0, 1, 2, 3, 4
_POLICY_CODE = {
    Policy.PASSIVE: _PASSIVE,
    Policy.ACTIVE: _ACTIVE,
    Policy.ACTIVE_INTRA: _INTRA,
    Policy.EXTRA_ROUNDS: _EXTRA,
    Policy.HYBRID: _HYBRID,
}


@nb.njit(cache=True, nogil=True)
def _plan_kernel(req, state, cycle, params, out):
    """Fill zeroed plan rows ``out`` (k x 6: idle, idle_parts, extra, final,
    total, lag_extra).

    Returns ``status | offending index << 8 | lagging index << 32`` as one
    integer, since boxing a tuple costs more than the plan itself. Divisions are
    avoided on the per-patch path: a resetting counter is already the phase,
    and whole cycles of slack are few enough to peel off by subtraction.
    """
    policy, n_rounds, n_gaps, eps, z_max, m_max, ns_per_tick = (
        params[0], params[1], params[2], params[3], params[4], params[5], params[6])
    k = req.shape[0]
    cap = state.shape[1]
    rem = np.empty(k, dtype=np.int64)
    seen = np.zeros(cap, dtype=np.bool_)
    lag = -1
    lag_rem = -1
    for i in range(k):
        pid = req[i]
        if pid < 0 or pid >= cap or state[3, pid] == 0 or cycle[pid] <= 0:
            return _INVALID | i << 8
        if seen[pid]:
            return _DUPLICATE | i << 8
        seen[pid] = True
        c = state[0, pid]
        if state[2, pid] != state[1, pid]:
            c = c % state[1, pid]
        r = cycle[pid] - c * ns_per_tick
        rem[i] = r
        if r > lag_rem or (r == lag_rem and pid < req[lag]):
            lag, lag_rem = i, r
    t_lag = cycle[req[lag]]
    for i in range(k):
        if i == lag:
            continue
        t = cycle[req[i]]
        raw = lag_rem - rem[i]
        out[i, 4] = raw
        if policy <= _INTRA:
            slack = raw
            full = 0
            if slack >= 8 * t:
                full = slack // t
                slack -= full * t
            while slack >= t:
                slack -= t
                full += 1
            out[i, 2] = full
            if policy == _PASSIVE:
                out[i, 3] = slack
            else:
                out[i, 0] = slack
                out[i, 1] = n_rounds if policy == _ACTIVE else n_gaps
        elif t == t_lag:
            return _DEGENERATE | i << 8 | lag << 32
        elif policy == _EXTRA:
            found = False
            for m in range(m_max + 1):
                span = m * t + raw
                if span % t_lag == 0:
                    out[i, 2] = m
                    out[i, 5] = span // t_lag
                    found = True
                    break
            if not found:
                return _INFEASIBLE | i << 8 | lag << 32
        else:
            best_z = -1
            best_res = 0
            for z in range(z_max + 1):
                span = z * t + raw
                res = -(-span // t_lag) * t_lag - span
                if res < eps and (best_z < 0 or res < best_res):
                    best_z, best_res = z, res
            if best_z < 0:
                return _INFEASIBLE | i << 8 | lag << 32
            out[i, 0] = best_res
            out[i, 1] = n_rounds + best_z
            out[i, 2] = best_z
            out[i, 5] = (best_z * t + raw + best_res) // t_lag
    return _OK | lag << 32


@functools.lru_cache(maxsize=1024)
def _params(policy: Policy, n_rounds, n_layer_gaps, epsilon, z_max, m_max, ns_per_tick):
    if policy is Policy.ACTIVE and n_rounds is None:
        raise InvalidRequestError("Active needs n_rounds")
    if (policy is Policy.ACTIVE_INTRA and n_layer_gaps < 1) or (
        policy is Policy.ACTIVE and n_rounds < 1
    ):
        raise InvalidRequestError("need at least one part")
    if policy is Policy.HYBRID and (epsilon <= 0 or z_max < 0):
        raise InvalidRequestError("need epsilon > 0 and z_max >= 0")
    p = np.array([_POLICY_CODE[policy], n_rounds or 1, n_layer_gaps, epsilon, z_max, m_max,
                  ns_per_tick], dtype=np.int64)
    p.flags.writeable = False
    return p


class SyncSchedule(Mapping):
    """Read-only map patch_id -> SyncPlan backed by the kernel's output rows.

    Plans are materialized on access, so computing a schedule costs nothing
    per patch beyond the kernel itself.
    """

    __slots__ = ("policy", "request", "rows", "lagging", "_index")

    def __init__(self, policy: Policy, request: np.ndarray, rows: np.ndarray, lagging: int):
        self.policy = policy
        self.request = request
        self.rows = rows
        self.lagging = lagging
        self._index = None

    def __len__(self) -> int:
        return len(self.request)

    def __iter__(self):
        return (int(p) for p in self.request)

    def __getitem__(self, patch_id) -> SyncPlan:
        if self._index is None:
            self._index = {int(p): i for i, p in enumerate(self.request)}
        i = self._index[int(patch_id)]
        idle, parts, extra, final, total, lag_extra = (int(x) for x in self.rows[i])
        if i == self.lagging:
            return SyncPlan(self.policy)
        idles = split_even(idle, parts) if parts else ()
        if self.policy is Policy.ACTIVE_INTRA:
            return SyncPlan(self.policy, (), idles, extra, 0, total)
        return SyncPlan(self.policy, idles, (), extra, final, total, lag_extra)

    @property
    def lagging_patch(self) -> int:
        return int(self.request[self.lagging])


def engine_compute(
    counters: PatchCounterTable,
    metadata: PatchMetadataTable,
    request,
    policy=Policy.ACTIVE,
    *,
    n_rounds: int | None = None,
    n_layer_gaps: int = INTRA_ROUND_GAPS,
    epsilon: int = DEFAULT_EPSILON,
    z_max: int = DEFAULT_Z_MAX,
    m_max: int = DEFAULT_M_MAX,
) -> SyncSchedule:
    """Plan a synchronization of the requested patches from table state.

    Equivalent to ``plans.plan_k_sync`` on the patches' true timing state.
    """
    policy = policy if isinstance(policy, Policy) else Policy.parse(policy)
    req = request if isinstance(request, np.ndarray) else np.array(sorted(request), dtype=np.int64)
    if len(req) < 2:
        raise InvalidRequestError("slack needs at least two patches")
    params = _params(policy, n_rounds, n_layer_gaps, epsilon, z_max, m_max, counters.ns_per_tick)
    out = np.zeros((len(req), 6), dtype=np.int64)
    code = _plan_kernel(req, counters.state, metadata.cycle_ns, params, out)
    status, bad, lag = code & 0xFF, (code >> 8) & 0xFFFFFF, code >> 32
    if status != _OK:
        pid = int(req[bad])
        if status == _INVALID:
            raise InvalidPatchError(f"patch {pid} is not valid in the counter table")
        if status == _DUPLICATE:
            raise InvalidRequestError("duplicate patch ids")
        if status == _DEGENERATE:
            raise DegenerateInputError(f"patch {pid} shares the lagging patch's cycle time")
        raise PolicyInfeasibleError(f"no {policy.value} solution for patch {pid}")
    return SyncSchedule(policy, req, out, lag)


def states_from_tables(counters: PatchCounterTable, metadata: PatchMetadataTable, request,
                       t_now: int = 0) -> list[PatchTimingState]:
    """Timing states implied by the tables, with cycle origins relative to ``t_now``."""
    return [
        PatchTimingState(int(p), metadata[int(p)], t_now - counters.phase_ns(int(p)))
        for p in sorted(request)
    ]


@dataclass(frozen=True)
class PlanningTime:
    k: int
    median_ns: float
    mean_ns: float
    p99_ns: float

    def to_row(self) -> dict:
        return {"k": self.k, "median_ns": self.median_ns, "mean_ns": self.mean_ns,
                "p99_ns": self.p99_ns}


def random_tables(k: int, rng, cycle_range=(900, 1400), width: int = 12):
    """Tables for ``k`` patches with random cycles and phases."""
    cycles = rng.integers(cycle_range[0], cycle_range[1] + 1, size=k)
    phases = rng.integers(0, cycles)
    counters = PatchCounterTable(k, width)
    meta = PatchMetadataTable(k)
    for pid in range(k):
        meta.set(pid, int(cycles[pid]))
        counters.register(pid, int(cycles[pid]), int(phases[pid]))
    return counters, meta


def measure_planning_time(
    k_patches: int,
    repetitions: int = 2000,
    policy=Policy.ACTIVE,
    seed: int = 0,
    n_configs: int = 16,
    batch: int = 16,
    **params,
) -> PlanningTime:
    """Wall time of one ``engine_compute`` call over random patch states.

    Each sample is the mean over ``batch`` back-to-back calls (one per
    configuration, cycling), timed with garbage collection paused, which
    keeps timer granularity and scheduler noise out of the statistics.
    """
    if not 2 <= k_patches <= 50:
        raise InvalidRequestError("k_patches must be in [2, 50]")
    if repetitions < 1 or batch < 1:
        raise InvalidRequestError("repetitions and batch must be >= 1")
    params.setdefault("n_rounds", 4)
    policy = Policy.parse(policy)
    rng = np.random.default_rng(seed)
    configs = [random_tables(k_patches, rng) for _ in range(n_configs)]
    plan_args = [(c, m) for _, (c, m) in zip(range(batch), itertools.cycle(configs))]
    req = np.arange(k_patches, dtype=np.int64)
    for c, m in configs:
        engine_compute(c, m, req, policy, **params)
    samples = np.empty(repetitions, dtype=np.float64)
    clock = time.perf_counter_ns
    gc_was_enabled = gc.isenabled()
    gc.disable()
    try:
        for r in range(repetitions):
            t0 = clock()
            for c, m in plan_args:
                engine_compute(c, m, req, policy, **params)
            samples[r] = (clock() - t0) / batch
    finally:
        if gc_was_enabled:
            gc.enable()
    return PlanningTime(
        k_patches,
        float(np.median(samples)),
        float(samples.mean()),
        float(np.percentile(samples, 99)),
    )
