"""Command-line entry point: ``latticelock <subcommand>``."""
from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .cases import CultivationScenario, qldpc_cycle_times, run_case_cultivation, run_case_qldpc
from .decoders.ler import estimate_ler
from .experiments import (
    LATENCY_HEADER,
    ConfigError,
    ExperimentConfig,
    LatencyConfig,
    build_circuit,
    plan_for,
    rows_to_csv,
    run_latency,
    run_sweep,
    write_sweep,
)
from .policies import Policy, make_plan, solve_extra_rounds, solve_hybrid
from .sim import sample
from .syncengine import measure_planning_time
from .timing import InvalidProfileError, InvalidRequestError


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        click.echo(text, nl=False)


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _load_experiment(config, seed, shots) -> ExperimentConfig:
    data = {}
    if config:
        data = json.loads(ExperimentConfig.load(config).to_json())
    if seed is not None:
        data["seed"] = seed
    if shots is not None:
        data["shots"] = shots
    return ExperimentConfig.from_dict(data)


seed_opt = click.option("--seed", type=int, default=None, help="RNG seed (overrides config).")
shots_opt = click.option("--shots", type=int, default=None, help="Shots per point (overrides config).")
threads_opt = click.option(
    "--threads", type=int, default=None,
    help="Sampler threads; LATTICELOCK_THREADS takes precedence.",
)
out_opt = click.option("--out", type=click.Path(dir_okay=False), default=None, help="Output file.")
config_opt = click.option("--config", type=click.Path(exists=True, dir_okay=False), default=None)


@click.group()
@click.version_option(package_name="artifact")
def main():
    """Synchronization policies for desynchronized logical qubits."""


@main.group()
def policy():
    """Synchronization planning."""


@policy.command("solve")
@click.option("--policy", "policy_name", default="Hybrid", show_default=True)
@click.option("--slack", type=int, required=True, help="Slack tau in ns.")
@click.option("--tp", type=int, default=None, help="Cycle time of the leading patch P (ns).")
@click.option("--tp2", type=int, default=None, help="Cycle time of the lagging patch P' (ns).")
@click.option("--n-rounds", type=int, default=None, help="Rounds to spread idles over.")
@click.option("--epsilon", type=int, default=400, show_default=True)
@click.option("--z-max", type=int, default=5, show_default=True)
@click.option("--m-max", type=int, default=200, show_default=True)
@out_opt
def policy_solve(policy_name, slack, tp, tp2, n_rounds, epsilon, z_max, m_max, out):
    """Print the plan for one slack as JSON."""
    try:
        pol = Policy.parse(policy_name)
        plan = make_plan(pol, slack, n_rounds=n_rounds, T_P=tp, T_P2=tp2,
                         epsilon=epsilon, z_max=z_max, m_max=m_max)
    except InvalidRequestError as e:
        raise click.ClickException(str(e)) from None
    res = {"plan": plan.to_dict(), "idle_total": plan.idle_total}
    if pol is Policy.HYBRID:
        sol = solve_hybrid(tp, tp2, slack, epsilon, z_max)
        res["solution"] = {"z": sol.z, "residual_idle": sol.residual_idle, "n": sol.n}
    elif pol is Policy.EXTRA_ROUNDS:
        sol = solve_extra_rounds(tp, tp2, slack, m_max)
        res["solution"] = {"m": sol.m, "n": sol.n}
    _emit(_json(res), out)


@main.command()
@config_opt
@click.option("--policy", "policy_name", default=None, help="Policy (default: first in config).")
@click.option("--tau", type=int, default=None, help="Slack in ns (default: first in config).")
@click.option("--raw", type=click.Path(dir_okay=False), default=None,
              help="Also dump the raw detector/observable bits here.")
@click.option("--circuit-out", type=click.Path(dir_okay=False), default=None,
              help="Also write the annotated circuit text here.")
@seed_opt
@shots_opt
@threads_opt
@out_opt
def simulate(config, policy_name, tau, raw, circuit_out, seed, shots, threads, out):
    """Sample and decode one surgery point; print LERs and Hamming weights."""
    try:
        cfg = _load_experiment(config, seed, shots)
        pol = Policy.parse(policy_name or cfg.policies[0])
        tau = cfg.tau_ns[0] if tau is None else tau
        plan, _ = plan_for(cfg, pol, tau)
        circuit = build_circuit(cfg, pol, tau)
    except (ConfigError, InvalidRequestError, InvalidProfileError) as e:
        raise click.ClickException(str(e)) from None
    if circuit_out:
        Path(circuit_out).write_text(circuit.to_text(), encoding="utf-8")
    if raw:
        sample(circuit, cfg.shots, cfg.seed, threads).save_raw(raw)
    rep = estimate_ler(circuit, cfg.decoder, cfg.shots, cfg.seed, threads)
    res = {
        "d": cfg.d, "basis": cfg.basis, "policy": pol.value, "tau_ns": tau,
        "profile": cfg.profile_name, "shots": cfg.shots, "seed": cfg.seed,
        "plan": plan.to_dict(),
        "ler": {k: vars(v) for k, v in rep.estimates.items()},
        "hamming": rep.hamming.to_dict(),
    }
    _emit(_json(res), out)


@main.command()
@config_opt
@seed_opt
@shots_opt
@threads_opt
@click.option("--workers", type=int, default=1, show_default=True, help="Sweep points run concurrently.")
@out_opt
def sweep(config, seed, shots, threads, workers, out):
    """LER sweep over the config's policies and slacks, as CSV."""
    try:
        cfg = _load_experiment(config, seed, shots)
    except (ConfigError, InvalidRequestError) as e:
        raise click.ClickException(str(e)) from None
    target = out or cfg.output
    res = run_sweep(cfg, threads, workers, out=None, err=sys.stderr)
    if target:
        write_sweep(res, target)
    else:
        click.echo(res.to_csv(), nl=False)
    if res.errors:
        sys.exit(1)


@main.group()
def case():
    """Case studies that produce synchronization slack."""


@case.command("qldpc")
@click.option("--profile", default="google", show_default=True)
@click.option("--t-surface", type=int, default=None, help="Surface-code cycle (ns); default from profile.")
@click.option("--t-qldpc", type=int, default=None, help="qLDPC cycle (ns); default from profile.")
@click.option("--max-rounds", type=int, default=50, show_default=True)
@out_opt
def case_qldpc(profile, t_surface, t_qldpc, max_rounds, out):
    """Slack between a surface-code and a qLDPC patch after r rounds."""
    try:
        ts, tq = qldpc_cycle_times(profile)
        rows = run_case_qldpc(t_surface or ts, t_qldpc or tq, max_rounds)
    except (InvalidRequestError, InvalidProfileError) as e:
        raise click.ClickException(str(e)) from None
    _emit(rows_to_csv([{"round": r, "slack_ns": s} for r, s in rows], ("round", "slack_ns")), out)


@case.command("cultivation")
@config_opt
@click.option("--attempt-ns", type=int, default=None)
@click.option("--q", "success_prob", type=float, default=None, help="Success probability per attempt.")
@click.option("--consumer-ns", type=int, default=None)
@click.option("--samples", type=int, default=None)
@seed_opt
@out_opt
def case_cultivation(config, attempt_ns, success_prob, consumer_ns, samples, seed, out):
    """Slack distribution seen by the consumer of a cultivated magic state."""
    data = json.loads(Path(config).read_text(encoding="utf-8")) if config else {}
    for key, val in (("attempt_duration_ns", attempt_ns), ("success_prob_per_attempt", success_prob),
                     ("consumer_cycle_ns", consumer_ns), ("n_samples", samples), ("seed", seed)):
        if val is not None:
            data[key] = val
    try:
        scn = CultivationScenario(**data)
    except (TypeError, InvalidRequestError) as e:
        raise click.ClickException(str(e)) from None
    _emit(_json(run_case_cultivation(scn).to_dict()), out)


@main.command()
@config_opt
@click.option("--d", "distances", type=int, multiple=True, help="Code distance (repeatable).")
@click.option("--hit-passive", type=float, default=None)
@click.option("--hit-active", type=float, default=None)
@click.option("--trials", type=int, default=None, help="Monte Carlo latency draws.")
@seed_opt
@shots_opt
@threads_opt
@out_opt
def latency(config, distances, hit_passive, hit_active, trials, seed, shots, threads, out):
    """Decoding speedup of Active over Passive from LUT hit rates."""
    data = json.loads(Path(config).read_text(encoding="utf-8")) if config else {}
    for key, val in (("hit_passive", hit_passive), ("hit_active", hit_active), ("n_trials", trials),
                     ("seed", seed), ("shots", shots)):
        if val is not None:
            data[key] = val
    if distances:
        data["d"] = list(distances)
    try:
        cfg = LatencyConfig.from_dict(data)
    except (ConfigError, InvalidRequestError) as e:
        raise click.ClickException(str(e)) from None
    _emit(rows_to_csv(run_latency(cfg, threads), LATENCY_HEADER), out)


@main.command()
@click.option("--k", "ks", type=int, multiple=True, help="Patch counts (default 2, 5, 10, 20, 50).")
@click.option("--repetitions", type=int, default=2000, show_default=True)
@click.option("--policy", "policy_name", default="Active", show_default=True)
@seed_opt
@out_opt
def uarch(ks, repetitions, policy_name, seed, out):
    """Planning time of the synchronization engine versus patch count."""
    rows = []
    try:
        for k in ks or (2, 5, 10, 20, 50):
            rows.append(measure_planning_time(k, repetitions, policy_name, seed or 0).to_row())
    except InvalidRequestError as e:
        raise click.ClickException(str(e)) from None
    _emit(rows_to_csv(rows, ("k", "median_ns", "mean_ns", "p99_ns")), out)


if __name__ == "__main__":
    main()
