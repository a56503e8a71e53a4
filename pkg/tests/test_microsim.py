import math

import numpy as np
import pytest

from coagsim import _kernels
from coagsim.diagnostics import is_chain
from coagsim.microsim import (ParticleState, ScalingParams, build_initial, em_step, gap_flow_step,
                              grad_hamiltonian, hamiltonian, integrate_gradient_flow, make_rng,
                              max_dt, simulate_micro, copy_rng, stability_limit, stable_dt, with_params)
from coagsim.potential import build_example_potential, derive_constants, evaluate


@pytest.fixture(scope="module")
def constants():
    return derive_constants(build_example_potential(4.0))


@pytest.fixture(scope="module")
def spec(constants):
    return constants.spec


def sorted_state(rng, n, a=4.0):
    gaps = rng.uniform(0.5, a + 3.0, n - 1)
    return np.concatenate(([0.0], np.cumsum(gaps))) + rng.uniform(-10.0, 10.0)


def brute_energy(x, spec):
    total = 0.0
    for i in range(x.size):
        for j in range(i + 1, x.size):
            total += float(evaluate(spec, x[j] - x[i]))
    return total


def brute_gradient(x, spec):
    d = x[:, None] - x[None, :]
    du = evaluate(spec, d, 1)
    np.fill_diagonal(du, 0.0)
    return du.sum(axis=1)


# -------------------------------------------------------------- parameters

def test_particle_counts_round_half_up():
    assert ScalingParams(0.1, 4.5, (1.0,)).n_particles_list == (10,)
    assert ScalingParams(0.2, 4.5, (0.5, 0.5)).n_particles_list == (3, 3)
    assert ScalingParams(0.14, 4.5, (1.0,)).n_particles_list == (7,)


@pytest.mark.parametrize("kwargs", [dict(epsilon=1.0), dict(epsilon=0.0), dict(alpha=0.0),
                                    dict(rho_list=()), dict(rho_list=(0.1,)),
                                    dict(dt_safety=0.0), dict(dt_override=-1.0)])
def test_scaling_params_validation(kwargs):
    args = dict(epsilon=0.1, alpha=4.5, rho_list=(1.0,)) | kwargs
    with pytest.raises(ValueError):
        ScalingParams(**args)


def test_constraint_flags():
    flags = ScalingParams(0.1, 4.5, (1.0,), nu_tilde=1.0).constraint_flags
    assert flags["alpha > 2nu_tilde+3"] is False
    assert flags["alpha > 4"] is True
    assert ScalingParams(0.1, 8.5, (1.0,), nu=2.5).constraint_flags["alpha > 2nu+3"] is True


def test_stable_dt_examples(constants):
    p = ScalingParams(0.1, 4.5, (1.0,), dt_safety=0.1)
    assert stable_dt(p, constants) == pytest.approx(0.1 * 0.1 ** 4.5 / 40.0, rel=1e-14)
    assert stable_dt(p, constants) == pytest.approx(7.9e-8, rel=1e-2)
    full = with_params(p, dt_safety=1.0)
    assert stable_dt(full, constants) == pytest.approx(10.0 * stable_dt(p, constants), rel=1e-14)


def test_max_dt_with_override(constants):
    p = ScalingParams(0.1, 4.5, (1.0,), dt_override=1e-6)
    assert max_dt(p, constants) == 0.5 * stability_limit(p, constants)
    assert stable_dt(p, constants) < max_dt(p, constants)


# ------------------------------------------------------------- energy/force

def test_windowed_energy_equals_brute_force(spec):
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(1000):
        x = sorted_state(rng, int(rng.integers(2, 65)))
        worst = max(worst, abs(hamiltonian(x, spec) - brute_energy(x, spec)))
    assert worst == 0.0


def test_windowed_gradient_matches_brute_force(spec):
    rng = np.random.default_rng(3)
    for _ in range(300):
        x = sorted_state(rng, int(rng.integers(2, 65)))
        assert np.allclose(grad_hamiltonian(x, spec), brute_gradient(x, spec), rtol=0, atol=1e-12)


def test_gradient_examples(spec):
    assert np.array_equal(grad_hamiltonian(np.array([0.0, 4.0]), spec), [0.0, 0.0])
    rng = np.random.default_rng(4)
    x = sorted_state(rng, 8)
    g = grad_hamiltonian(x, spec)
    h = 1e-6
    fd = np.array([(hamiltonian(np.sort(x + h * e), spec) - hamiltonian(np.sort(x - h * e), spec))
                   / (2 * h) for e in np.eye(8)])
    assert np.max(np.abs(g - fd)) / max(np.max(np.abs(fd)), 1.0) <= 1e-6


def test_force_sum_vanishes(spec):
    rng = np.random.default_rng(5)
    for _ in range(2000):
        x = sorted_state(rng, int(rng.integers(2, 33)))
        g = grad_hamiltonian(x, spec)
        assert abs(g.sum()) <= 1e-12 * x.size * max(np.max(np.abs(g)), 1.0)


def test_energy_of_equal_spacing(spec):
    x = 4.0 * np.arange(7)
    assert hamiltonian(x, spec) == -4.0 * 6


# ------------------------------------------------------------------ stepping

def test_noiseless_fixed_point(constants):
    p = ScalingParams(0.25, 4.0, (1.0,))
    state = ParticleState(4.0 * np.arange(4), 0.0, make_rng(0))
    out = em_step(state, stable_dt(p, constants), p, constants, noise=False)
    assert np.array_equal(out.positions, state.positions)
    assert out.t_micro == stable_dt(p, constants)


def test_zero_step_is_identity(constants):
    p = ScalingParams(0.25, 4.0, (1.0,))
    rng = make_rng(1)
    x = 4.0 * np.arange(4) + rng.uniform(-0.1, 0.1, 4)
    twin = copy_rng(rng)
    out = em_step(ParticleState(x, 3.0, rng), 0.0, p, constants)
    assert np.array_equal(out.positions, x) and out.t_micro == 3.0
    assert rng.standard_normal() == twin.standard_normal()


def test_step_rejected_above_bound(constants):
    p = ScalingParams(0.25, 4.0, (1.0,))
    state = ParticleState(4.0 * np.arange(4), 0.0, make_rng(0))
    with pytest.raises(ValueError):
        em_step(state, 1.01 * stable_dt(p, constants), p, constants)
    with pytest.raises(ValueError):
        em_step(state, -1.0, p, constants)


def test_em_step_formula_with_given_increments(constants, spec):
    p = ScalingParams(0.25, 4.0, (1.0,))
    dt = stable_dt(p, constants)
    x = 4.0 * np.arange(4) + np.array([0.0, 0.05, -0.03, 0.02])
    w = np.array([0.01, -0.02, 0.03, 0.0])
    out = em_step(ParticleState(x, 0.0, make_rng(0)), dt, p, constants, increments=w)
    expect = np.sort(x - 0.5 * p.beta * dt * grad_hamiltonian(x, spec) + w)
    assert np.allclose(out.positions, expect, rtol=0, atol=1e-14)


def test_positions_stay_sorted(constants):
    p = ScalingParams(0.5, 1.0, (2.0,))
    rng = make_rng(9)
    state = ParticleState(np.array([0.0, 0.1, 0.2, 0.3]), 0.0, rng)
    for _ in range(50):
        state = em_step(state, stable_dt(p, constants), p, constants)
        assert np.all(np.diff(state.positions) >= 0.0)


def mean_square_gaps(seeds=200, n_coarse=16):
    """Mean-square end-point error at dt and dt/2 against a dt/8 reference on shared noise."""
    constants = derive_constants(build_example_potential(4.0))
    # alpha = 2 keeps the noise small enough that gaps stay where U is convex;
    # in the bridge region the step is locally unstable and the ratio collapses
    p = ScalingParams(0.5, 2.0, (2.0,))
    spec = constants.spec
    dt = stable_dt(p, constants)
    fine = 8 * n_coarse
    errs = np.zeros(2)
    for seed in range(seeds):
        rng = make_rng(seed)
        x0 = 4.0 * np.arange(4) + rng.uniform(-0.3, 0.3, 4)
        w = math.sqrt(dt / 8) * rng.standard_normal((fine, 4))
        ends = []
        for block in (8, 4, 1):
            inc = w.reshape(-1, block, 4).sum(axis=1)
            x = x0.copy()
            _kernels.em_steps(x, inc.shape[0], dt * block / 8, p.beta, spec.a, spec.cutoff,
                              spec.coef, rng, _kernels.NOISE_GIVEN, inc, np.empty(4))
            ends.append(x)
        errs += [np.sum((ends[0] - ends[2]) ** 2), np.sum((ends[1] - ends[2]) ** 2)]
    return errs / seeds


def test_halving_dt_error_ratio():
    # additive noise: Euler-Maruyama converges with strong order 1, so the
    # mean-square error drops by about 4 when the step halves
    coarse, half = mean_square_gaps()
    assert 3.0 <= coarse / half <= 6.0


# ---------------------------------------------------------------- simulate

def test_zero_horizon_gives_initial_sample_only(constants):
    p = ScalingParams(0.25, 4.0, (1.0,))
    state = ParticleState(4.0 * np.arange(4), 0.0, make_rng(0))
    traj = simulate_micro(state, 0.0, 1e-3, p, constants, snapshots=True)
    assert len(traj) == 1
    assert np.array_equal(traj.snapshots[0], state.positions)


def test_noiseless_simulation_matches_gradient_flow(constants):
    p = ScalingParams(0.25, 4.0, (4.0,))
    rng = make_rng(3)
    state = build_initial("single", p, constants, "uniform", rng)
    dt = stable_dt(p, constants)
    t_macro = 200 * dt * p.epsilon ** 3
    sim = simulate_micro(state, t_macro, t_macro / 4, p, constants, noise=False, snapshots=True)
    flow = integrate_gradient_flow(state, t_macro / p.epsilon ** 3, p, constants,
                                   sample_every_micro=t_macro / 4 / p.epsilon ** 3)
    assert np.allclose(sim.t_micro, flow.t_micro, rtol=1e-12, atol=0)
    assert np.max(np.abs(sim.snapshots - flow.snapshots)) <= 1e-8


def test_simulation_is_deterministic(constants):
    p = ScalingParams(0.25, 4.0, (1.0,))
    runs = []
    for _ in range(2):
        rng = make_rng(42)
        state = build_initial("single", p, constants, "uniform", rng)
        runs.append(simulate_micro(state, 1e-4, 2e-5, p, constants, snapshots=True))
    assert np.array_equal(runs[0].snapshots, runs[1].snapshots)
    assert np.array_equal(runs[0].energy, runs[1].energy)


def test_center_of_mass_martingale(constants):
    p = ScalingParams(0.25, 4.0, (2.0,))
    rng = make_rng(7)
    state = build_initial("single", p, constants, "uniform", rng)
    traj = simulate_micro(state, 2e-4, 2e-4, p, constants)
    n = p.n_total
    drift_part = (traj.com[-1] - traj.com[0]) / p.epsilon - traj.noise_sum / n
    assert abs(drift_part) <= 1e-10


def test_observer_stops_run(constants):
    p = ScalingParams(0.25, 4.0, (1.0,))
    state = ParticleState(4.0 * np.arange(4), 0.0, make_rng(0))
    seen = []

    def observer(x, t):
        seen.append(t)
        return len(seen) == 3

    traj = simulate_micro(state, 1e-3, 1e-4, p, constants, observer)
    assert len(traj) == 3 and traj.stopped_early
    assert seen[0] == 0.0


def test_trajectory_columns(constants):
    p = ScalingParams(0.25, 4.0, (1.0,))
    state = ParticleState(4.0 * np.arange(4), 0.0, make_rng(0))
    traj = simulate_micro(state, 1e-4, 5e-5, p, constants)
    assert np.allclose(traj.t_macro, [0.0, 5e-5, 1e-4], rtol=1e-12)
    assert traj.com[0] == pytest.approx(0.25 * 6.0)
    assert traj.energy[0] == -12.0
    assert traj.grad_norm_inf[0] == 0.0
    assert np.all(traj.n_segments == 1)
    with pytest.raises(ValueError):
        traj.gaps


# -------------------------------------------------------------- gap flow

def test_gradient_flow_of_equal_spacing_is_constant(constants):
    p = ScalingParams(0.25, 4.0, (1.0,))
    state = ParticleState(4.0 * np.arange(4), 0.0, make_rng(0))
    flow = integrate_gradient_flow(state, 10 * stable_dt(p, constants), p, constants)
    assert np.all(flow.snapshots == state.positions)


def test_gap_flow_fixed_point(constants):
    p = ScalingParams(0.25, 4.0, (1.0,))
    g = np.full(3, 4.0)
    assert np.array_equal(gap_flow_step(g, stable_dt(p, constants), p, constants), g)
    with pytest.raises(ValueError):
        gap_flow_step(np.array([4.0, 0.0]), stable_dt(p, constants), p, constants)


def test_gap_flow_matches_position_step(constants):
    p = ScalingParams(0.25, 4.0, (1.0,))
    dt = stable_dt(p, constants)
    x = np.array([0.0, 4.2, 7.9, 12.1])
    step = em_step(ParticleState(x, 0.0, make_rng(0)), dt, p, constants, noise=False)
    g = gap_flow_step(np.diff(x), dt, p, constants)
    assert np.allclose(g, np.diff(step.positions), rtol=0, atol=1e-12)


def test_gap_flow_maximum_principle(constants):
    from coagsim.potential import derive_thresholds
    t = derive_thresholds(constants, 0.1, 0.75, 1.0)
    p = ScalingParams(0.25, 4.0, (4.0,))
    dt = stable_dt(p, constants)
    rng = np.random.default_rng(11)
    for _ in range(20):
        g = rng.uniform(t.b3p, t.b2p, 15)
        for _ in range(100):
            nxt = gap_flow_step(g, dt, p, constants)
            assert nxt.max() <= max(g.max(), 4.0) + 1e-12
            assert nxt.min() >= min(g.min(), 4.0) - 1e-12
            g = nxt


# ----------------------------------------------------------- initial states

def test_initial_examples(constants):
    p = ScalingParams(0.2, 4.5, (1.0,))
    s = build_initial("single", p, constants, "exact", make_rng(0))
    assert np.array_equal(s.positions, [0.0, 4.0, 8.0, 12.0, 16.0])
    p2 = ScalingParams(1 / 3, 4.5, (1.0, 1.0))
    s2 = build_initial("two-chain", p2, constants, "exact", make_rng(0))
    assert np.allclose(s2.positions, [0.0, 4.0, 8.0, 8.0 + constants.b, 12.0 + constants.b,
                                      16.0 + constants.b], rtol=0, atol=1e-12)
    assert s2.positions[3] - s2.positions[2] >= constants.b


def test_uniform_two_chain_start(constants):
    p = ScalingParams(0.1, 4.5, (0.5, 0.5), mu=0.6)
    s = build_initial("two-chain", p, constants, "uniform", make_rng(5))
    x = s.positions
    c = p.epsilon ** p.mu
    assert is_chain(x[:5], c, constants) and is_chain(x[5:], c, constants)
    assert x[5] - x[4] >= constants.b
    assert x[5] - x[4] == pytest.approx(constants.b, abs=1e-12)
    assert x[0] == 0.0


def test_n_chain_start(constants):
    p = ScalingParams(0.1, 4.5, (0.5, 0.5, 0.3))
    s = build_initial("n-chain", p, constants, "exact", make_rng(0), separations=(0.61, 1.0))
    gaps = np.diff(s.positions)
    assert np.sum(gaps >= constants.b) == 2
    with pytest.raises(ValueError):
        build_initial("n-chain", p, constants, "exact", make_rng(0), separations=(0.1, 1.0))


def test_initial_rejects_wide_fluctuation(constants):
    p = ScalingParams(0.5, 4.5, (2.0,), mu=-2.0)
    with pytest.raises(ValueError):
        build_initial("single", p, constants, "uniform", make_rng(0))
