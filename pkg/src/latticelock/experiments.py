"""Experiment configs, LER sweeps over policies and slacks, and latency runs."""
from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .circuits import SurgeryExperiment, gen_lattice_surgery, joint_observable_name
from .circuits.ir import CircuitIR
from .decoders.ler import Z95, LerReport, MissLatency, estimate_ler, latency_speedup
from .noise import NoiseModel, annotate
from .policies import (
    DEFAULT_EPSILON,
    DEFAULT_M_MAX,
    DEFAULT_Z_MAX,
    Policy,
    SyncPlan,
    make_plan,
)
from .timing import InvalidProfileError, InvalidRequestError, LatencyProfile, get_profile

CSV_HEADER = (
    "d", "basis", "policy", "tau_ns", "profile", "observable",
    "shots", "failures", "ler", "ci_low", "ci_high", "seed",
)
LATENCY_HEADER = ("d", "hit_passive", "hit_active", "speedup")
# table budgets per distance, after the sizes used for the hierarchical decoder
LUT_CAPACITY = {3: 3 * 1024, 5: 3 * 1024**2, 7: 30 * 1024**2}


class ConfigError(ValueError):
    pass


def _parse_json(text: str, source: str) -> dict:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{source}: line {e.lineno} column {e.colno}: {e.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: top level must be a JSON object")
    return data


def _check(cond: bool, name: str, msg: str) -> None:
    if not cond:
        raise ConfigError(f"field '{name}': {msg}")


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _from_fields(cls, data: dict):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"field '{unknown[0]}': unknown field")
    try:
        return cls(**data)
    except TypeError as e:
        raise ConfigError(str(e)) from None


def _profile_field(value):
    try:
        return get_profile(value)
    except (InvalidProfileError, TypeError) as e:
        raise ConfigError(f"field 'profile': {e}") from None


@dataclass
class ExperimentConfig:
    """One sweep: every (tau, policy) pair on a two-patch surgery experiment."""

    profile: str | dict = "google"
    d: int = 3
    basis: str = "Z"
    p: float = 1e-3
    tau_ns: list = field(default_factory=lambda: [1000])
    policies: list = field(default_factory=lambda: ["Passive", "Active"])
    rounds_before: int | None = None
    rounds_after: int | None = None
    extra_R: int = 0
    epsilon_ns: int = DEFAULT_EPSILON
    z_max: int = DEFAULT_Z_MAX
    m_max: int = DEFAULT_M_MAX
    cycle_p_ns: int | None = None
    cycle_p2_ns: int | None = None
    observables: list | None = None
    decoder: str = "uf"
    shots: int = 10_000
    seed: int = 0
    output: str | None = None

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        _profile_field(self.profile)
        _check(_is_int(self.d) and self.d >= 3 and self.d % 2 == 1, "d", "must be an odd integer >= 3")
        _check(self.basis in ("Z", "X"), "basis", "must be 'Z' or 'X'")
        _check(isinstance(self.p, (int, float)) and 0 <= self.p <= 1, "p", "must be in [0, 1]")
        _check(isinstance(self.tau_ns, list) and len(self.tau_ns) > 0, "tau_ns", "must be a non-empty list")
        _check(all(_is_int(t) and t >= 0 for t in self.tau_ns), "tau_ns", "entries must be integers >= 0")
        _check(isinstance(self.policies, list) and len(self.policies) > 0, "policies", "must be a non-empty list")
        for pol in self.policies:
            try:
                Policy.parse(pol)
            except InvalidRequestError as e:
                raise ConfigError(f"field 'policies': {e}") from None
        for name in ("rounds_before", "rounds_after", "cycle_p_ns", "cycle_p2_ns"):
            v = getattr(self, name)
            _check(v is None or (_is_int(v) and v >= 1), name, "must be an integer >= 1")
        _check(_is_int(self.extra_R) and self.extra_R >= 0, "extra_R", "must be an integer >= 0")
        _check(_is_int(self.epsilon_ns) and self.epsilon_ns > 0, "epsilon_ns", "must be an integer > 0")
        _check(_is_int(self.z_max) and self.z_max >= 0, "z_max", "must be an integer >= 0")
        _check(_is_int(self.m_max) and self.m_max >= 0, "m_max", "must be an integer >= 0")
        _check(_is_int(self.shots) and self.shots >= 1, "shots", "must be an integer >= 1")
        _check(_is_int(self.seed) and self.seed >= 0, "seed", "must be an integer >= 0")
        _check(self.decoder in ("uf", "bruteforce", "lut"), "decoder", "must be uf, bruteforce or lut")
        if self.observables is not None:
            _check(isinstance(self.observables, list) and len(self.observables) > 0,
                   "observables", "must be a non-empty list")

    @property
    def latency_profile(self) -> LatencyProfile:
        return _profile_field(self.profile)

    @property
    def profile_name(self) -> str:
        return self.latency_profile.name

    @property
    def n_before(self) -> int:
        return self.rounds_before or self.d + 1

    @property
    def report_observables(self) -> list:
        return self.observables or [joint_observable_name(self.basis)]

    def cycle_times(self) -> tuple[int, int]:
        base = self.latency_profile.cycle_time
        return self.cycle_p_ns or base, self.cycle_p2_ns or self.cycle_p_ns or base

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        return _from_fields(cls, dict(data))

    @classmethod
    def from_json(cls, text: str, source: str = "<config>") -> "ExperimentConfig":
        return cls.from_dict(_parse_json(text, source))

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_json(Path(path).read_text(encoding="utf-8"), str(path))


def plan_for(cfg: ExperimentConfig, policy, tau: int) -> tuple[SyncPlan, int]:
    """Plan for one sweep point and the rounds P runs before the merge.

    Active spreads the slack over ``d + 1 + extra_R`` rounds, so both
    patches run ``extra_R`` more rounds before merging; round-based
    policies add their extra rounds on top of the usual count.
    """
    policy = Policy.parse(policy)
    t_p, t_p2 = cfg.cycle_times()
    rb = cfg.n_before + (cfg.extra_R if policy is Policy.ACTIVE else 0)
    plan = make_plan(
        policy, tau, n_rounds=rb, T_P=t_p, T_P2=t_p2,
        epsilon=cfg.epsilon_ns, z_max=cfg.z_max, m_max=cfg.m_max,
    )
    return plan, rb


def build_circuit(cfg: ExperimentConfig, policy, tau: int) -> CircuitIR:
    plan, rb = plan_for(cfg, policy, tau)
    t_p, t_p2 = cfg.cycle_times()
    exp = SurgeryExperiment(
        cfg.d, cfg.basis, rb, cfg.rounds_after, cfg.latency_profile, plan,
        cycle_p=t_p, cycle_p2=t_p2,
    )
    return annotate(gen_lattice_surgery(exp), NoiseModel(cfg.p, cfg.latency_profile))


def run_point(cfg: ExperimentConfig, policy, tau: int, threads: int | None = None,
              lut_capacity: int | None = None) -> LerReport:
    circuit = build_circuit(cfg, policy, tau)
    return estimate_ler(circuit, cfg.decoder, cfg.shots, cfg.seed, threads,
                        lut_capacity=lut_capacity or LUT_CAPACITY.get(cfg.d))


def _fmt(x: float) -> str:
    return repr(float(x))


def ratio_interval(f_num: int, f_den: int, shots: int, z: float = Z95):
    """Ratio of two rates over equal shot counts with a log-scale CI."""
    if f_num == 0 or f_den == 0:
        return math.nan, math.nan, math.nan
    r = f_num / f_den
    se = math.sqrt(1 / f_num - 1 / shots + 1 / f_den - 1 / shots)
    return r, r * math.exp(-z * se), r * math.exp(z * se)


@dataclass
class SweepResult:
    rows: list
    errors: list

    @property
    def ok(self) -> bool:
        return not self.errors

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in self.rows:
            w.writerow([r[k] for k in CSV_HEADER])
        return buf.getvalue()


def _ler_row(cfg, policy, tau, name, est) -> dict:
    return {
        "d": cfg.d, "basis": cfg.basis, "policy": policy, "tau_ns": tau,
        "profile": cfg.profile_name, "observable": name, "shots": est.shots,
        "failures": est.failures, "ler": _fmt(est.ler), "ci_low": _fmt(est.ci_low),
        "ci_high": _fmt(est.ci_high), "seed": cfg.seed,
    }


def run_sweep(cfg: ExperimentConfig, threads: int | None = None, workers: int = 1,
              out=None, err=None) -> SweepResult:
    """LER rows for every (tau, policy) point plus Passive/policy ratios.

    Rows follow config order whatever the worker count. A point that cannot
    be planned or simulated becomes an error record and the sweep goes on.
    """
    err = err if err is not None else sys.stderr
    points = [(tau, Policy.parse(p).value) for tau in cfg.tau_ns for p in cfg.policies]

    def work(pt):
        tau, pol = pt
        try:
            return run_point(cfg, pol, tau, threads), None
        except (InvalidRequestError, ValueError) as e:
            return None, {"policy": pol, "tau_ns": tau, "error": type(e).__name__, "message": str(e)}

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(work, points))
    else:
        results = [work(pt) for pt in points]

    rows, errors = [], []
    by_point = dict(zip(points, results))
    for tau in cfg.tau_ns:
        for pol in dict.fromkeys(Policy.parse(p).value for p in cfg.policies):
            rep, e = by_point[(tau, pol)]
            if e is not None:
                errors.append(e)
                print(f"error: {pol} tau={tau}: {e['error']}: {e['message']}", file=err)
                continue
            for name in cfg.report_observables:
                rows.append(_ler_row(cfg, pol, tau, name, rep[name]))
        base = by_point.get((tau, Policy.PASSIVE.value))
        if base is None or base[0] is None:
            continue
        for pol in dict.fromkeys(Policy.parse(p).value for p in cfg.policies):
            rep = by_point[(tau, pol)][0]
            if pol == Policy.PASSIVE.value or rep is None:
                continue
            for name in cfg.report_observables:
                fp, fa = base[0][name].failures, rep[name].failures
                r, lo, hi = ratio_interval(fp, fa, cfg.shots)
                rows.append({
                    "d": cfg.d, "basis": cfg.basis, "policy": f"Passive/{pol}", "tau_ns": tau,
                    "profile": cfg.profile_name, "observable": name, "shots": cfg.shots,
                    "failures": "", "ler": _fmt(r), "ci_low": _fmt(lo), "ci_high": _fmt(hi),
                    "seed": cfg.seed,
                })
    result = SweepResult(rows, errors)
    target = out or cfg.output
    if target:
        write_sweep(result, target)
    return result


def write_sweep(result: SweepResult, path) -> None:
    path = Path(path)
    path.write_text(result.to_csv(), encoding="utf-8")
    side = path.with_name(path.name + ".errors.json")
    if result.errors:
        side.write_text(json.dumps(result.errors, indent=2) + "\n", encoding="utf-8")
    elif side.exists():
        side.unlink()


@dataclass
class LatencyConfig:
    """Decoding-latency comparison; hit rates are given or measured with a LUT."""

    d: list = field(default_factory=lambda: [3])
    hit_passive: float | None = None
    hit_active: float | None = None
    t_hit_ns: float = 20.0
    miss: dict = field(default_factory=lambda: {"kind": "lognormal", "mean_ns": 1000.0, "sigma": 0.5})
    n_trials: int = 1_000_000
    seed: int = 0
    profile: str | dict = "google"
    tau_ns: int = 1000
    p: float = 1e-3
    shots: int = 10_000
    lut_capacity: int | None = None

    def __post_init__(self):
        if _is_int(self.d):
            self.d = [self.d]
        _check(all(_is_int(x) and x >= 3 and x % 2 for x in self.d), "d", "odd integers >= 3")
        for name in ("hit_passive", "hit_active"):
            v = getattr(self, name)
            _check(v is None or 0 <= v <= 1, name, "must be in [0, 1]")
        _check((self.hit_passive is None) == (self.hit_active is None), "hit_active",
               "give both hit rates or neither")
        _check(self.t_hit_ns > 0, "t_hit_ns", "must be > 0")
        _check(_is_int(self.n_trials) and self.n_trials >= 1, "n_trials", "must be >= 1")
        _check(_is_int(self.shots) and self.shots >= 1, "shots", "must be >= 1")
        _profile_field(self.profile)
        self.miss_distribution()

    def miss_distribution(self) -> MissLatency:
        m = dict(self.miss)
        try:
            if "csv" in m:
                return MissLatency.from_csv(m["csv"])
            return MissLatency(**m)
        except (TypeError, ValueError, OSError) as e:
            raise ConfigError(f"field 'miss': {e}") from None

    @classmethod
    def from_dict(cls, data: dict) -> "LatencyConfig":
        return _from_fields(cls, dict(data))

    @classmethod
    def load(cls, path) -> "LatencyConfig":
        return cls.from_dict(_parse_json(Path(path).read_text(encoding="utf-8"), str(path)))


def measured_hit_rates(cfg: LatencyConfig, d: int, threads: int | None = None) -> tuple[float, float]:
    """LUT hit rates of Passive and Active surgery runs at slack ``tau_ns``."""
    exp = ExperimentConfig(profile=cfg.profile, d=d, p=cfg.p, tau_ns=[cfg.tau_ns],
                           decoder="lut", shots=cfg.shots, seed=cfg.seed)
    cap = cfg.lut_capacity or LUT_CAPACITY.get(d)
    rates = [run_point(exp, pol, cfg.tau_ns, threads, cap).lut_hit_rate for pol in ("Passive", "Active")]
    return rates[0], rates[1]


def run_latency(cfg: LatencyConfig, threads: int | None = None) -> list[dict]:
    rows = []
    miss = cfg.miss_distribution()
    for d in cfg.d:
        if cfg.hit_passive is not None:
            hp, ha = cfg.hit_passive, cfg.hit_active
        else:
            hp, ha = measured_hit_rates(cfg, d, threads)
        s = latency_speedup(hp, ha, cfg.t_hit_ns, miss, cfg.n_trials, cfg.seed)
        rows.append({"d": d, "hit_passive": _fmt(hp), "hit_active": _fmt(ha), "speedup": _fmt(s)})
    return rows


def rows_to_csv(rows: list[dict], header) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(header), lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()
