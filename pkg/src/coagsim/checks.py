"""Fast self-checks behind ``coagsim verify``: potential construction, gradient
oracle, norm inequalities, geometry identities and the two-rod macro law.

Each check returns a :class:`CheckResult` whose ``detail`` holds the measured
quantities next to the tolerance they were held to.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import stats
from .diagnostics import (center_of_mass, centers_difference, chain_norms,
                          saddle_configuration)
from .macroprocess import exact_two_rod_meeting, init_rods, meeting_time_cdf, simulate_rods
from .microsim import grad_hamiltonian, hamiltonian, make_rng
from .potential import (build_example_potential, derive_constants, evaluate,
                        verify_assumptions)

GRAD_REL_TOL = 1e-6
FORCE_SUM_TOL = 1e-12
FD_STEP = 1e-6
CURVATURE_FD_STEP = 1e-5
GEOMETRY_TOL = 1e-10
MACRO_KS_TOL = 0.05
MACRO_DT_FACTOR = 1e-4
MACRO_CENSOR_FACTOR = 100.0


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: dict = field(default_factory=dict)


def random_sorted_state(rng: np.random.Generator, n: int, a: float = 4.0) -> np.ndarray:
    """Sorted positions with gaps on [0.5, a + 3], so every potential region is visited."""
    gaps = rng.uniform(0.5, a + 3.0, n - 1)
    return np.concatenate(([0.0], np.cumsum(gaps))) + rng.uniform(-10.0, 10.0)


def check_potential(a: float = 4.0) -> CheckResult:
    start = time.perf_counter()
    spec = build_example_potential(a)
    constants = derive_constants(spec)
    report = verify_assumptions(constants)
    h = CURVATURE_FD_STEP
    fd = (evaluate(spec, a + h) - 2.0 * evaluate(spec, a) + evaluate(spec, a - h)) / (h * h)
    elapsed = time.perf_counter() - start
    detail = {"assumptions_all_pass": report.all_passed, "b": constants.b, "u_a": constants.u_a,
              "c_check": constants.c_check, "c_check_fd": fd, "seconds": elapsed}
    ok = (report.all_passed and abs(constants.b - (a + 2.0)) <= 1e-8 and constants.u_a == -4.0
          and abs(constants.c_check - fd) <= 1e-6)
    return CheckResult("potential", ok, detail)


def gradient_errors(spec, rng, n_states: int, n_max: int = 32) -> float:
    """Worst ``|grad - central FD|_inf / max(|FD|_inf, 1)`` over random states."""
    worst = 0.0
    for _ in range(n_states):
        x = random_sorted_state(rng, int(rng.integers(2, n_max + 1)), spec.a)
        g = grad_hamiltonian(x, spec)
        fd = np.empty_like(x)
        for i in range(x.size):
            # keep the perturbed state sorted-order independent: H is a symmetric pair sum
            xp, xm = x.copy(), x.copy()
            xp[i] += FD_STEP
            xm[i] -= FD_STEP
            fd[i] = (_unsorted_energy(xp, spec) - _unsorted_energy(xm, spec)) / (2.0 * FD_STEP)
        worst = max(worst, float(np.max(np.abs(g - fd))) / max(float(np.max(np.abs(fd))), 1.0))
    return worst


def _unsorted_energy(x, spec) -> float:
    return hamiltonian(np.sort(x), spec)


def force_sum_errors(spec, rng, n_states: int, n_max: int = 32) -> float:
    """Worst ``|sum of forces| / (N * scale)`` with scale the largest force (at least 1)."""
    worst = 0.0
    for _ in range(n_states):
        x = random_sorted_state(rng, int(rng.integers(2, n_max + 1)), spec.a)
        g = grad_hamiltonian(x, spec)
        scale = max(float(np.max(np.abs(g))), 1.0)
        worst = max(worst, abs(float(g.sum())) / (x.size * scale))
    return worst


def check_gradient(seed: int = 0, n_fd: int = 1000, n_sum: int = 10_000) -> CheckResult:
    start = time.perf_counter()
    spec = build_example_potential(4.0)
    rng = make_rng(seed)
    fd_err = gradient_errors(spec, rng, n_fd)
    sum_err = force_sum_errors(spec, rng, n_sum)
    detail = {"max_relative_fd_error": fd_err, "max_force_sum": sum_err,
              "seconds": time.perf_counter() - start}
    return CheckResult("gradient", fd_err <= GRAD_REL_TOL and sum_err <= FORCE_SUM_TOL, detail)


def norm_violations(seed: int = 0, n_vectors: int = 10_000) -> tuple[int, int]:
    """Counts of violations of the lower and upper norm inequality on centred random h."""
    rng = make_rng(seed)
    low = high = 0
    for _ in range(n_vectors):
        n = int(rng.integers(2, 65))
        h = rng.standard_normal(n) * rng.uniform(1e-3, 1e3)
        h -= h.mean()
        g2, _, l2 = chain_norms(np.diff(h))
        low += not 0.5 * l2 <= g2
        high += not g2 <= n * l2
    return low, high


def check_norms(seed: int = 0) -> CheckResult:
    start = time.perf_counter()
    low, high = norm_violations(seed)
    return CheckResult("norms", low == high == 0,
                       {"lower_violations": low, "upper_violations": high,
                        "seconds": time.perf_counter() - start})


def geometry_errors(seed: int = 0, n_saddles: int = 100, n_states: int = 1000):
    """(worst centre-difference error against the closed forms, worst route disagreement)."""
    rng = make_rng(seed)
    worst_closed = 0.0
    for _ in range(n_saddles):
        n1, n2 = (int(v) for v in rng.integers(2, 40, 2))
        a = float(rng.uniform(4.0, 10.0))
        b = a + 2.0
        n = n1 + n2
        touching = saddle_configuration(n1, n2, a, a)
        saddle = saddle_configuration(n1, n2, a, b)
        d_touch = center_of_mass(touching[n1:]) - center_of_mass(touching[:n1])
        d_saddle = center_of_mass(saddle[n1:]) - center_of_mass(saddle[:n1])
        worst_closed = max(worst_closed, abs(d_touch - 0.5 * a * n),
                           abs(d_saddle - (0.5 * a * n + b - a)))
    worst_route = 0.0
    for _ in range(n_states):
        n1, n2 = (int(v) for v in rng.integers(1, 40, 2))
        a = 4.0
        gaps = a + rng.uniform(-0.5, 0.5, n1 + n2 - 1)
        gaps[n1 - 1] = rng.uniform(a, a + 4.0)
        x = np.concatenate(([0.0], np.cumsum(gaps))) + rng.uniform(-100.0, 100.0)
        cd = centers_difference(x, n1, a)
        worst_route = max(worst_route, abs(cd.direct - cd.gap_sum))
    return worst_closed, worst_route


def check_geometry(seed: int = 0) -> CheckResult:
    closed, route = geometry_errors(seed)
    return CheckResult("geometry", closed <= GEOMETRY_TOL and route <= GEOMETRY_TOL,
                       {"max_closed_form_error": closed, "max_route_disagreement": route})


@dataclass(frozen=True)
class MeetingComparison:
    grid: np.ndarray
    exact: np.ndarray
    censor: float
    ks_two_sample: float
    ks_grid_vs_law: float
    mass_errors: int
    merge_mismatches: int


def compare_meeting_times(gap: float = 1.0, rho1: float = 1.0, rho2: float = 1.0,
                          samples: int = 2000, seed: int = 0,
                          dt_factor: float = MACRO_DT_FACTOR) -> MeetingComparison:
    """Grid-simulated two-rod meeting times against the exact sampler.

    Both samples are censored at ``MACRO_CENSOR_FACTOR * gap**2 / v`` (set to
    infinity beyond it) because the law has a heavy tail.
    """
    v = 1.0 / rho1 + 1.0 / rho2
    dt = dt_factor * gap * gap / v
    censor = MACRO_CENSOR_FACTOR * gap * gap / v
    a = 4.0
    centers = (0.0, a * 0.5 * (rho1 + rho2) + gap)
    rng = make_rng(seed)
    grid = np.empty(samples)
    mass_errors = merge_mismatches = 0
    total = rho1 + rho2
    for k in range(samples):
        system = init_rods((rho1, rho2), centers, a)
        traj = simulate_rods(system, censor, dt, rng, max_events=1)
        grid[k] = traj.events[0].t_macro if traj.events else math.inf
        mass_errors += traj.final.total_mass != total
        if traj.events:
            merge_mismatches += traj.eta_tilde[-1, 0] != traj.eta_tilde[-1, 1]
    exact = exact_two_rod_meeting(gap, rho1, rho2, make_rng(seed + 1), samples)
    exact = np.where(exact <= censor, exact, math.inf)
    ks2 = stats.ks_two_sample(grid, exact)
    ks1 = stats.ks_statistic(grid, lambda t: meeting_time_cdf(t, gap, rho1, rho2), censor)
    return MeetingComparison(grid, exact, censor, ks2, ks1, int(mass_errors), int(merge_mismatches))


def check_macro_law(seed: int = 0, samples: int = 2000) -> CheckResult:
    start = time.perf_counter()
    cmp = compare_meeting_times(samples=samples, seed=seed)
    ok = cmp.ks_two_sample <= MACRO_KS_TOL and cmp.mass_errors == 0 and cmp.merge_mismatches == 0
    return CheckResult("macro_law", ok, {
        "ks_two_sample": cmp.ks_two_sample, "ks_against_law": cmp.ks_grid_vs_law,
        "censor_time": cmp.censor, "mass_errors": cmp.mass_errors,
        "merge_mismatches": cmp.merge_mismatches, "seconds": time.perf_counter() - start})


ALL_CHECKS = (check_potential, check_gradient, check_norms, check_geometry, check_macro_law)


def run_all(seed: int = 0) -> list[CheckResult]:
    out = []
    for fn in ALL_CHECKS:
        out.append(fn() if fn is check_potential else fn(seed=seed))
    return out
