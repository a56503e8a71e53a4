"""Command line entry point: ``coagsim <command> [options]``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import io
from .checks import run_all
from .config import ConfigError, ExperimentConfig, parse_config
from .diagnostics import ObserverContext, new_record, observe
from .experiments import run_experiment
from .macroprocess import init_rods, simulate_rods
from .microsim import ScalingParams, build_initial, make_rng, simulate_micro
from .potential import potential_report

CONSTANT_KEYS = ("a", "u_a", "b", "b1", "b2", "b3", "b4", "c_check", "c_minus")
THRESHOLD_KEYS = ("b2p", "b3p", "b4p", "delta_bar", "delta1", "c_star")


def cmd_potential_info(args) -> int:
    constants, thresholds, report = potential_report(args.a, args.margin, args.kappa, args.theta)
    for k in CONSTANT_KEYS:
        print(f"{k} = {io.fmt(float(getattr(constants, k)))}")
    for k in THRESHOLD_KEYS:
        print(f"{k} = {io.fmt(float(getattr(thresholds, k)))}")
    for clause in report.clauses:
        print(f"assumption_{clause.name} = {'pass' if clause.passed else 'fail'}")
    return 0 if report.all_passed else 1


def _micro_params(cfg: ExperimentConfig) -> ScalingParams:
    return ScalingParams(epsilon=cfg.epsilon[0], alpha=cfg.alpha, rho_list=cfg.rho, mu=cfg.mu,
                         nu=cfg.nu, nu_tilde=cfg.nu_tilde, dt_safety=cfg.dt_safety,
                         dt_override=cfg.dt_override)


def cmd_simulate_micro(args) -> int:
    cfg = parse_config(args.config)
    out = Path(args.out or cfg.output_dir)
    constants, thresholds, _ = potential_report(cfg.a, cfg.margin, cfg.kappa, cfg.theta)
    params = _micro_params(cfg)
    if len(cfg.rho) == 1:
        kind = "single"
    elif len(cfg.rho) == 2 and cfg.separation is None:
        kind = "two-chain"
    else:
        kind = "n-chain"
    rng = make_rng(cfg.master_seed)
    state = build_initial(kind, params, constants, "uniform", rng, separations=cfg.separation)
    record = new_record(ObserverContext.for_counts(params.n_particles_list, constants,
                                                   params.epsilon, cfg.nu, cfg.nu_tilde))
    traj = simulate_micro(state, cfg.t_macro_end, cfg.sample_every, params, constants,
                          lambda x, t: observe(x, thresholds, record, t) and False,
                          snapshots=args.snapshots)
    io.write_trajectory(out / "trajectory.csv", traj)
    if args.snapshots:
        io.write_snapshots(out / "snapshots.txt", traj)
    io.write_stopping(out / "stopping.csv", [(0, cfg.master_seed, record)])
    io.write_summary(out / "summary.txt", [("kind", kind), ("n_particles", params.n_particles_list),
                                           ("samples", len(traj)),
                                           ("final_segments", int(traj.n_segments[-1]))])
    print(f"wrote {len(traj)} samples to {out}")
    return 0


def cmd_simulate_macro(args) -> int:
    cfg = parse_config(args.config)
    out = Path(args.out or cfg.output_dir)
    if cfg.rod_dt is None:
        raise ConfigError(f"{args.config}: simulate-macro needs 'rod_dt'")
    seps = cfg.separation or ()
    if len(seps) != len(cfg.rho) - 1:
        raise ConfigError(f"{args.config}: need one separation per neighbouring pair of rods")
    rho = np.asarray(cfg.rho)
    edges = np.concatenate(([0.0], np.cumsum(cfg.a * rho[:-1] + np.asarray(seps))))
    centers = edges + 0.5 * cfg.a * rho
    system = init_rods(cfg.rho, centers, cfg.a)
    traj = simulate_rods(system, cfg.t_macro_end, cfg.rod_dt, make_rng(cfg.master_seed),
                         sample_every=cfg.sample_every)
    io.write_rod_trajectory(out / "rods.csv", traj)
    io.write_events(out / "events.csv", traj.events)
    io.write_summary(out / "summary.txt", [("events", len(traj.events)),
                                           ("final_groups", int(traj.n_groups[-1])),
                                           ("total_mass", traj.final.total_mass)])
    print(f"{len(traj.events)} coagulation event(s); wrote {out}")
    return 0


def cmd_verify(args) -> int:
    ok = True
    for result in run_all(args.seed):
        ok &= result.passed
        print(f"{result.name} = {'pass' if result.passed else 'fail'}")
        for k, v in result.detail.items():
            print(f"  {k} = {io.fmt(v)}")
    return 0 if ok else 1


def cmd_experiment(args) -> int:
    cfg = parse_config(args.config)
    report = run_experiment(cfg, args.out)
    for k, v in report.items():
        print(f"{k} = {io.fmt(v)}")
    return 1 if report.status == "fail" else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="coagsim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("potential-info", help="constants, thresholds and assumption report")
    p.add_argument("--a", type=float, default=4.0)
    p.add_argument("--margin", type=float, default=0.1)
    p.add_argument("--kappa", type=float, default=0.75)
    p.add_argument("--theta", type=float, default=1.0)
    p.set_defaults(func=cmd_potential_info)

    p = sub.add_parser("simulate-micro", help="one seeded particle run")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.add_argument("--snapshots", action="store_true", help="also write every position sample")
    p.set_defaults(func=cmd_simulate_micro)

    p = sub.add_parser("simulate-macro", help="one seeded coalescing-rod run")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate_macro)

    p = sub.add_parser("verify", help="fast deterministic self-checks")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", help="accepted for symmetry; unused")
    p.add_argument("--out", help="accepted for symmetry; unused")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("experiment", help="run an acceptance experiment E1-E5")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
