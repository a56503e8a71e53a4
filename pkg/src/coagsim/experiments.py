"""The five acceptance experiments and their orchestration.

Every experiment is a pure function of its configuration: replica ``r`` uses
a Philox generator seeded with ``master_seed + r``, results are aggregated in
replica order, and all files are written from the calling process.

E1  tube persistence of a single chain across an epsilon ladder
E2  law of the macroscopic centre-of-mass increment of a single chain
E3  coagulation of two chains started at the saddle distance
E4  decay and maximum principle of the noiseless gap flow
E5  diffusivity of the merged centre after a coagulation seen in the segments
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import io, stats
from .config import ExperimentConfig
from .diagnostics import ObserverContext, new_record, observe, segment_view
from .microsim import (ParticleState, ScalingParams, build_initial,
                       integrate_gradient_flow, make_rng, simulate_micro, stable_dt)
from .potential import build_example_potential, derive_constants, derive_thresholds

MIN_REPLICAS = 20
E3_FLOOR = 0.5
E5_SE_WIDTH = 3.0
ENERGY_SLACK = 1e-9      # per integration step
DECAY_SLACK = 1e-12      # relative

STRICT_REGIME_NOTE = ("literal tube-theorem constants (nu > 2, alpha > 2nu + 3) are infeasible at "
                      "desk scale; this run checks the mechanism at the configured exponents")
TOLERANCE_NOTE = "tolerances are engineering choices at fixed epsilon, not asymptotic statements"


@dataclass
class StatReport:
    experiment: str
    status: str                       # pass, fail or inconclusive
    metrics: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)
    replicas: int = 0
    seeds: tuple = (0, 0)

    @property
    def passed(self) -> bool:
        return self.status == "pass"

    def items(self):
        yield "status", self.status
        yield "replicas", self.replicas
        yield "seed_first", self.seeds[0]
        yield "seed_last", self.seeds[1]
        for k, v in self.metrics.items():
            yield k, v
        for i, n in enumerate(self.notes):
            yield f"note_{i}", n


@lru_cache(maxsize=8)
def _potential(a: float, margin: float, kappa: float, theta: float):
    constants = derive_constants(build_example_potential(a))
    return constants, derive_thresholds(constants, margin, kappa, theta)


def _setup(cfg: ExperimentConfig):
    return _potential(cfg.a, cfg.margin, cfg.kappa, cfg.theta)


def _params(cfg: ExperimentConfig, eps: float) -> ScalingParams:
    return ScalingParams(epsilon=eps, alpha=cfg.alpha, rho_list=cfg.rho, mu=cfg.mu, nu=cfg.nu,
                         nu_tilde=cfg.nu_tilde, dt_safety=cfg.dt_safety,
                         dt_override=cfg.dt_override)


def _map(fn, jobs, workers: int):
    if workers <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


def _decide(ok: bool, enough: bool) -> str:
    if not enough:
        return "inconclusive"
    return "pass" if ok else "fail"


# ---------------------------------------------------------------- replicas

def _stopping_replica(job):
    """One micro run with the stopping-time observer; stops at ``stop_on``."""
    cfg, eps, seed, kind, stop_on = job
    constants, thresholds = _setup(cfg)
    params = _params(cfg, eps)
    rng = make_rng(seed)
    state = build_initial(kind, params, constants, "uniform", rng)
    ctx = ObserverContext.for_counts(params.n_particles_list if kind != "single"
                                     else params.n_particles_list[:1],
                                     constants, eps, cfg.nu, cfg.nu_tilde)
    record = new_record(ctx)

    def watcher(x, t):
        observe(x, thresholds, record, t)
        return record.hit(stop_on)

    horizon = _horizon(cfg, eps)
    simulate_micro(state, horizon, min(cfg.sample_every, horizon), params, constants, watcher)
    return seed, record


def _horizon(cfg: ExperimentConfig, eps: float) -> float:
    if cfg.experiment == "E3":
        return eps ** (1.0 - cfg.delta)
    return cfg.t_macro_end


def _com_replica(job):
    cfg, seed = job
    constants, _ = _setup(cfg)
    params = _params(cfg, cfg.epsilon[0])
    state = build_initial("single", params, constants, "exact", make_rng(seed))
    traj = simulate_micro(state, cfg.t_macro_end, cfg.t_macro_end, params, constants)
    eps, n = params.epsilon, params.n_total
    return seed, float(traj.com[-1] - traj.com[0]), eps * traj.noise_sum / n


def _decay_replica(job):
    cfg, seed = job
    constants, thresholds = _setup(cfg)
    params = _params(cfg, cfg.epsilon[0])
    eps, n = params.epsilon, params.n_total
    rng = make_rng(seed)
    gaps = rng.uniform(thresholds.b3p, thresholds.b2p, n - 1)
    gaps = np.where(gaps > thresholds.b3p, gaps, thresholds.b2p)
    start = ParticleState(np.concatenate(([0.0], np.cumsum(gaps))), 0.0, rng)
    t_end = cfg.t_macro_end * eps ** -3
    every = cfg.sample_every * eps ** -3
    dt = stable_dt(params, constants)
    traj = integrate_gradient_flow(start, t_end, params, constants, sample_every_micro=every, dt=dt)
    g = traj.gaps
    outside = int(np.count_nonzero(~thresholds.in_d_second(g)))
    dev = ((g - constants.a) ** 2).sum(axis=1)
    bound = np.exp(-thresholds.c_star * params.beta * traj.t_micro / n ** 2) * dev[0]
    decay_violations = int(np.count_nonzero(dev > bound * (1.0 + DECAY_SLACK) + 1e-300))
    steps = np.ceil(np.diff(traj.t_micro) / dt - 1e-12)
    rises = np.diff(traj.energy) - ENERGY_SLACK * steps
    energy_violations = int(np.count_nonzero(rises > 0.0))
    exponent = float(thresholds.c_star * params.beta * traj.t_micro[-1] / n ** 2)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = float(np.max(np.where(bound > 0, dev / bound, 0.0)))
    return seed, outside, decay_violations, energy_violations, ratio, exponent


def _merge_replica(job):
    cfg, seed = job
    constants, _ = _setup(cfg)
    params = _params(cfg, cfg.epsilon[0])
    state = build_initial("n-chain", params, constants, "uniform", make_rng(seed),
                          separations=cfg.separation)
    n_chains = len(cfg.rho)
    merged_at = []

    def watcher(x, t):
        if not merged_at and len(segment_view(x, constants.b)) < n_chains:
            merged_at.append(t)
        return bool(merged_at) and t >= merged_at[0] + cfg.window * (1.0 - 1e-9)

    traj = simulate_micro(state, cfg.t_macro_end, cfg.sample_every, params, constants, watcher)
    if not merged_at or traj.t_macro[-1] < merged_at[0] + cfg.window * (1.0 - 1e-9):
        return seed, None, None
    k = int(np.searchsorted(traj.t_macro, merged_at[0]))
    return seed, merged_at[0], float(traj.com[-1] - traj.com[k])


# ------------------------------------------------------------- experiments

def _ladder(cfg: ExperimentConfig, out: Path, kind: str, stop_on: str):
    per_eps = []
    for eps in cfg.epsilon:
        jobs = [(cfg, eps, seed, kind, stop_on) for seed in cfg.seeds]
        results = _map(_stopping_replica, jobs, cfg.workers)
        io.write_stopping(out / f"stopping_eps{eps:g}.csv",
                          ((r, seed, rec) for r, (seed, rec) in enumerate(results)))
        per_eps.append(results)
    return per_eps


def run_e1(cfg: ExperimentConfig, out: Path) -> StatReport:
    per_eps = _ladder(cfg, out, "single", "sigma")
    horizon = cfg.t_macro_end
    metrics = {}
    fractions = []
    for eps, results in zip(cfg.epsilon, per_eps):
        survived = sum(1 for _, rec in results if not rec.hit("sigma"))
        frac, se = stats.proportion(survived, len(results))
        fractions.append(frac)
        metrics[f"survival_fraction_eps{eps:g}"] = frac
        metrics[f"survival_se_eps{eps:g}"] = se
    order = np.argsort(cfg.epsilon)[::-1]          # decreasing epsilon
    trend = stats.is_nondecreasing([fractions[i] for i in order])
    metrics["horizon"] = horizon
    metrics["tube_exit_any"] = any(f < 1.0 for f in fractions)
    metrics["trend_nondecreasing"] = trend
    enough = cfg.replicas >= MIN_REPLICAS and len(cfg.epsilon) >= 2
    return StatReport("E1", _decide(trend, enough), metrics, [STRICT_REGIME_NOTE, TOLERANCE_NOTE])


def run_e3(cfg: ExperimentConfig, out: Path) -> StatReport:
    per_eps = _ladder(cfg, out, "two-chain", "tau")
    metrics = {}
    fractions = []
    for eps, results in zip(cfg.epsilon, per_eps):
        horizon = eps ** (1.0 - cfg.delta)
        reached = sum(1 for _, rec in results if rec.hit("tau") and rec.times["tau"] <= horizon)
        frac, se = stats.proportion(reached, len(results))
        fractions.append(frac)
        metrics[f"coagulation_fraction_eps{eps:g}"] = frac
        metrics[f"coagulation_se_eps{eps:g}"] = se
        metrics[f"horizon_eps{eps:g}"] = horizon
        hits = [rec.times["tau"] for _, rec in results if rec.hit("tau")]
        metrics[f"median_tau_eps{eps:g}"] = float(np.median(hits)) if hits else -1.0
    order = np.argsort(cfg.epsilon)[::-1]
    trend = stats.is_nondecreasing([fractions[i] for i in order])
    smallest = fractions[int(np.argmin(cfg.epsilon))]
    metrics["trend_nondecreasing"] = trend
    metrics["floor"] = E3_FLOOR
    metrics["floor_met"] = smallest >= E3_FLOOR
    enough = cfg.replicas >= MIN_REPLICAS and len(cfg.epsilon) >= 2
    return StatReport("E3", _decide(trend and smallest >= E3_FLOOR, enough), metrics,
                      [f"floor {E3_FLOOR} is an engineering tolerance", TOLERANCE_NOTE])


def run_e2(cfg: ExperimentConfig, out: Path) -> StatReport:
    results = _map(_com_replica, [(cfg, s) for s in cfg.seeds], cfg.workers)
    io.write_rows(out / "increments.csv", ("run_id", "seed", "increment", "noise_increment"),
                  ((r, *row) for r, row in enumerate(results)))
    eps = cfg.epsilon[0]
    n = _params(cfg, eps).n_total
    target = cfg.t_macro_end / (eps * n)
    inc = np.array([r[1] for r in results])
    gap = float(np.max(np.abs(inc - np.array([r[2] for r in results]))))
    metrics = {"target_variance": target, "martingale_max_gap": gap}
    notes = [STRICT_REGIME_NOTE, TOLERANCE_NOTE]
    if cfg.dt_override is not None:
        notes.append("step set by dt_override; stable below half the harmonic-chain limit eps^alpha/c")
    if inc.size < 2:
        metrics["increment"] = float(inc[0])
        return StatReport("E2", "inconclusive", metrics, notes)
    ci = stats.variance_ci(inc)
    band = stats.variance_band(target, inc.size)
    ks = stats.ks_statistic(inc, lambda x: stats.normal_cdf(x, 0.0, math.sqrt(target)))
    crit = 1.63 / math.sqrt(inc.size)
    metrics.update(sample_variance=ci.estimate, variance_ratio=ci.estimate / target,
                   ratio_ci_low=ci.lower / target, ratio_ci_high=ci.upper / target,
                   band_low=band.lower, band_high=band.upper, ks_distance=ks, ks_threshold=crit)
    ok = band.contains(ci.estimate) and ks <= crit
    return StatReport("E2", _decide(ok, inc.size >= MIN_REPLICAS), metrics, notes)


def run_e4(cfg: ExperimentConfig, out: Path) -> StatReport:
    results = _map(_decay_replica, [(cfg, s) for s in cfg.seeds], cfg.workers)
    io.write_rows(out / "decay.csv", ("run_id", "seed", "outside_d2", "decay_violations",
                                      "energy_violations", "max_decay_ratio", "decay_exponent"),
                  ((r, *row) for r, row in enumerate(results)))
    outside = sum(r[1] for r in results)
    decay = sum(r[2] for r in results)
    energy = sum(r[3] for r in results)
    metrics = {"outside_d2": outside, "decay_violations": decay, "energy_violations": energy,
               "max_decay_ratio": max(r[4] for r in results),
               "decay_exponent": results[0][5]}
    return StatReport("E4", "pass" if outside == decay == energy == 0 else "fail", metrics)


def run_e5(cfg: ExperimentConfig, out: Path) -> StatReport:
    results = _map(_merge_replica, [(cfg, s) for s in cfg.seeds], cfg.workers)
    io.write_rows(out / "merges.csv", ("run_id", "seed", "merge_time", "increment"),
                  ((r, seed, -1.0 if t is None else t, math.nan if d is None else d)
                   for r, (seed, t, d) in enumerate(results)))
    inc = np.array([d for _, t, d in results if t is not None])
    expected = 1.0 / math.fsum(cfg.rho)
    metrics = {"merged_runs": int(inc.size), "expected_rate": expected, "window": cfg.window}
    notes = [TOLERANCE_NOTE]
    if inc.size < 2:
        return StatReport("E5", "inconclusive", metrics, notes)
    rate = float(np.mean(inc ** 2)) / cfg.window
    se = rate * math.sqrt(2.0 / inc.size)
    metrics.update(rate=rate, rate_se=se, z_score=(rate - expected) / se)
    ok = abs(rate - expected) <= E5_SE_WIDTH * se
    return StatReport("E5", _decide(ok, inc.size >= MIN_REPLICAS), metrics, notes)


RUNNERS = {"E1": run_e1, "E2": run_e2, "E3": run_e3, "E4": run_e4, "E5": run_e5}


def run_experiment(cfg: ExperimentConfig, out: str | Path | None = None) -> StatReport:
    out = Path(cfg.output_dir if out is None else out)
    _setup(cfg)                      # configuration errors surface before any simulation
    for eps in cfg.epsilon:
        _params(cfg, eps)
    out.mkdir(parents=True, exist_ok=True)
    report = RUNNERS[cfg.experiment](cfg, out)
    report.replicas = cfg.replicas
    report.seeds = (cfg.master_seed, cfg.master_seed + cfg.replicas - 1)
    flags = {}
    for eps in cfg.epsilon:
        for k, v in _params(cfg, eps).constraint_flags.items():
            flags[f"flag_{k.replace(' ', '')}"] = v
    io.write_summary(out / "summary.txt", [*((k, v) for k, v in _config_items(cfg)),
                                           *flags.items(), *report.items()])
    return report


def _config_items(cfg: ExperimentConfig):
    for line in cfg.to_text().splitlines():
        k, v = line.split(" = ", 1)
        if k != "output_dir":
            yield k, v
