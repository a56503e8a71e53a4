"""Microscopic dynamics: Euler-Maruyama for the overdamped particle SDE and
explicit Euler for its noiseless gradient flow.

Particles move by ``dx_i = -1/2 eps**-alpha dH/dx_i dt + dw_i`` in microscopic
time.  Macroscopic time is ``eps**3`` times microscopic time; the conversion
is pure clock bookkeeping.  Positions are re-sorted after every step because
nothing in the dynamics forbids two particles from swapping.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import _kernels
from .diagnostics import join_chains
from .potential import PotentialConstants, PotentialSpec

_STEP_SLACK = 1e-12
_UNUSED_RNG = np.random.Generator(np.random.Philox(0))


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based generator used for every stochastic run."""
    return np.random.Generator(np.random.Philox(int(seed)))


@dataclass(frozen=True)
class ScalingParams:
    epsilon: float
    alpha: float
    rho_list: tuple[float, ...]
    mu: float = 1.0
    nu: float = 1.0
    nu_tilde: float = 1.0
    dt_safety: float = 1.0
    dt_override: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "rho_list", tuple(float(r) for r in self.rho_list))
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if not self.alpha > 0.0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not self.rho_list or min(self.rho_list) <= 0.0:
            raise ValueError("rho_list needs at least one positive mass")
        if not 0.0 < self.dt_safety <= 1.0:
            raise ValueError(f"dt_safety must lie in (0, 1], got {self.dt_safety}")
        if self.dt_override is not None and not self.dt_override > 0.0:
            raise ValueError(f"dt_override must be positive, got {self.dt_override}")
        small = [n for n in self.n_particles_list if n < 2]
        if small:
            raise ValueError(f"every chain needs at least 2 particles, got {self.n_particles_list}")

    @property
    def n_particles_list(self) -> tuple[int, ...]:
        # half-up rounding, so 0.5 / 0.2 gives 3
        return tuple(int(math.floor(r / self.epsilon + 0.5)) for r in self.rho_list)

    @property
    def n_total(self) -> int:
        return sum(self.n_particles_list)

    @property
    def beta(self) -> float:
        return self.epsilon ** (-self.alpha)

    @property
    def constraint_flags(self) -> dict[str, bool]:
        """Regime conditions of the limit theorems; recorded, never enforced."""
        return {
            "alpha > 4": self.alpha > 4.0,
            "mu > 1/2": self.mu > 0.5,
            "nu > 2": self.nu > 2.0,
            "alpha > 2nu+3": self.alpha > 2.0 * self.nu + 3.0,
            "alpha > 2nu_tilde+3": self.alpha > 2.0 * self.nu_tilde + 3.0,
        }


@dataclass
class ParticleState:
    positions: np.ndarray
    t_micro: float
    rng: np.random.Generator

    def __post_init__(self):
        self.positions = np.ascontiguousarray(self.positions, dtype=np.float64)

    def copy(self) -> "ParticleState":
        """Independent copy, including the generator state."""
        return ParticleState(self.positions.copy(), self.t_micro, copy_rng(self.rng))


@dataclass
class Trajectory:
    """Reduced observables per sample; ``snapshots`` holds positions when requested."""

    t_macro: np.ndarray
    t_micro: np.ndarray
    com: np.ndarray
    energy: np.ndarray
    grad_norm_inf: np.ndarray
    n_segments: np.ndarray
    snapshots: np.ndarray | None = None
    noise_sum: float = 0.0
    stopped_early: bool = False
    final: ParticleState | None = field(default=None, repr=False)

    def __len__(self):
        return self.t_macro.size

    @property
    def gaps(self) -> np.ndarray:
        if self.snapshots is None:
            raise ValueError("trajectory was recorded without snapshots")
        return np.diff(self.snapshots, axis=1)


def _positions(state) -> np.ndarray:
    return np.ascontiguousarray(getattr(state, "positions", state), dtype=np.float64)


def hamiltonian(state, spec: PotentialSpec) -> float:
    return float(_kernels.energy(_positions(state), spec.a, spec.cutoff, spec.coef))


def grad_hamiltonian(state, spec: PotentialSpec) -> np.ndarray:
    x = _positions(state)
    return _kernels.gradient(x, spec.a, spec.cutoff, spec.coef, np.empty_like(x))


def stable_dt(params: ScalingParams, constants: PotentialConstants) -> float:
    """``s_f eps**alpha / (2 c N)`` with c the curvature at the well bottom."""
    return params.dt_safety * params.epsilon ** params.alpha / (
        2.0 * constants.c_check * params.n_total)


def stability_limit(params: ScalingParams, constants: PotentialConstants) -> float:
    """Explicit-Euler limit of the harmonic chain, ``eps**alpha / c``.

    The chain Hessian has spectral radius below ``4 c``, and the drift carries
    the factor ``beta / 2``.
    """
    return params.epsilon ** params.alpha / constants.c_check


def max_dt(params: ScalingParams, constants: PotentialConstants) -> float:
    """Largest accepted step: ``stable_dt``, or half the stability limit when
    an override is configured."""
    if params.dt_override is not None:
        return 0.5 * stability_limit(params, constants)
    return stable_dt(params, constants)


def default_dt(params: ScalingParams, constants: PotentialConstants) -> float:
    if params.dt_override is not None:
        return params.dt_override
    return stable_dt(params, constants)


def _check_dt(dt: float, params, constants) -> None:
    limit = max_dt(params, constants)
    if dt < 0.0:
        raise ValueError(f"negative step {dt}")
    if dt > limit * (1.0 + _STEP_SLACK):
        raise ValueError(f"step {dt:.6g} exceeds the stability bound {limit:.6g}")


def em_step(state: ParticleState, dt: float, params: ScalingParams,
            constants: PotentialConstants, *, noise: bool = True,
            increments: np.ndarray | None = None) -> ParticleState:
    """One Euler-Maruyama step; returns a new state sharing the advanced generator.

    ``increments`` (length N) replaces the generated Brownian increment.
    """
    _check_dt(dt, params, constants)
    x = state.positions.copy()
    if dt == 0.0:
        return ParticleState(x, state.t_micro, state.rng)
    mode, inc = _noise_mode(noise, increments, 1, x.size)
    spec = constants.spec
    _kernels.em_steps(x, 1, dt, params.beta, spec.a, spec.cutoff, spec.coef, state.rng,
                      mode, inc, np.empty_like(x))
    return ParticleState(x, state.t_micro + dt, state.rng)


def _noise_mode(noise, increments, n_steps, n):
    if increments is not None:
        inc = np.ascontiguousarray(increments, dtype=np.float64).reshape(n_steps, n)
        return _kernels.NOISE_GIVEN, inc
    return (_kernels.NOISE_RNG if noise else _kernels.NOISE_OFF), np.empty((0, n))


def _sample_grid(t_end: float, every: float) -> np.ndarray:
    if t_end < 0.0:
        raise ValueError(f"end time must be nonnegative, got {t_end}")
    if t_end == 0.0:
        return np.zeros(1)
    if not every > 0.0:
        raise ValueError(f"sample interval must be positive, got {every}")
    k = max(1, math.ceil(t_end / every - 1e-9))
    t = np.minimum(np.arange(k + 1) * every, t_end)
    t[-1] = t_end
    return t


def _run(x, rng, t_micro0, times_micro, dt, params, constants, mode, observer,
         snapshots, segment_gap):
    spec = constants.spec
    eps = params.epsilon
    beta = params.beta
    work = np.empty_like(x)
    empty = np.empty((0, x.size))
    rows = []
    snaps = [] if snapshots else None
    noise_sum = 0.0
    stopped = False

    def record(t_mi):
        e = _kernels.energy(x, spec.a, spec.cutoff, spec.coef)
        dev = float(np.max(np.abs(np.diff(x) - spec.a))) if x.size > 1 else 0.0
        nseg = int(np.count_nonzero(np.diff(x) >= segment_gap)) + 1
        rows.append((eps ** 3 * t_mi, t_mi, eps * x.mean(), e, dev, nseg))
        if snaps is not None:
            snaps.append(x.copy())

    record(t_micro0 + times_micro[0])
    if observer is not None and observer(x, eps ** 3 * (t_micro0 + times_micro[0])):
        stopped = True
    for k in range(1, times_micro.size):
        if stopped:
            break
        span = times_micro[k] - times_micro[k - 1]
        n = max(1, math.ceil(span / dt - _STEP_SLACK))
        noise_sum += _kernels.em_steps(x, n, span / n, beta, spec.a, spec.cutoff, spec.coef,
                                       rng, mode, empty, work)
        t_mi = t_micro0 + times_micro[k]
        record(t_mi)
        if observer is not None and observer(x, eps ** 3 * t_mi):
            stopped = True
    cols = np.array(rows, dtype=np.float64).reshape(-1, 6)
    traj = Trajectory(t_macro=cols[:, 0], t_micro=cols[:, 1], com=cols[:, 2], energy=cols[:, 3],
                      grad_norm_inf=cols[:, 4], n_segments=cols[:, 5].astype(np.int64),
                      snapshots=None if snaps is None else np.array(snaps),
                      noise_sum=noise_sum, stopped_early=stopped and len(rows) < times_micro.size)
    traj.final = ParticleState(x, float(cols[-1, 1]), rng)
    return traj


def simulate_micro(initial: ParticleState, t_macro_end: float, sample_every: float,
                   params: ScalingParams, constants: PotentialConstants,
                   observer: Callable[[np.ndarray, float], bool] | None = None, *,
                   dt: float | None = None, noise: bool = True,
                   snapshots: bool = False) -> Trajectory:
    """Integrate to macroscopic time ``t_macro_end``, sampling every ``sample_every``.

    The initial positions are copied; the generator of ``initial`` is advanced.
    ``observer(x, t_macro)`` runs at every sample (including t = 0) and stops
    the run by returning True.  Each sample interval is split into equal steps
    no longer than ``dt`` (default: ``dt_override`` or ``stable_dt``).
    """
    dt = default_dt(params, constants) if dt is None else dt
    _check_dt(dt, params, constants)
    if not dt > 0.0:
        raise ValueError("step must be positive")
    times = _sample_grid(t_macro_end, sample_every) * params.epsilon ** -3
    mode = _kernels.NOISE_RNG if noise else _kernels.NOISE_OFF
    return _run(initial.positions.copy(), initial.rng, initial.t_micro, times, dt, params,
                constants, mode, observer, snapshots, constants.b)


def integrate_gradient_flow(initial: ParticleState, t_end_micro: float, params: ScalingParams,
                            constants: PotentialConstants, *, sample_every_micro: float | None = None,
                            dt: float | None = None) -> Trajectory:
    """Noiseless flow from ``initial`` to microscopic time ``t_end_micro``, with snapshots."""
    dt = stable_dt(params, constants) if dt is None else dt
    _check_dt(dt, params, constants)
    if not dt > 0.0:
        raise ValueError("step must be positive")
    every = t_end_micro if sample_every_micro is None else sample_every_micro
    times = _sample_grid(t_end_micro, every)
    return _run(initial.positions.copy(), _UNUSED_RNG, initial.t_micro, times, dt, params,
                constants, _kernels.NOISE_OFF, None, True, constants.b)


def gap_flow_step(gaps, dt: float, params: ScalingParams, constants: PotentialConstants,
                  n_steps: int = 1) -> np.ndarray:
    """Explicit Euler for the gap ODE with boundary gaps pinned at ``a``."""
    g = np.ascontiguousarray(gaps, dtype=np.float64)
    if np.any(g <= 0.0):
        raise ValueError("gaps must be positive")
    _check_dt(dt, params, constants)
    spec = constants.spec
    return _kernels.gap_flow(g, int(n_steps), dt, params.beta, spec.a, spec.coef, np.empty_like(g))


def build_initial(kind: str, params: ScalingParams, constants: PotentialConstants,
                  gap_mode: str, rng: np.random.Generator,
                  separations=None) -> ParticleState:
    """Initial configuration with the leftmost particle at 0.

    single: one chain of ``N_1`` particles.  two-chain: chains of ``N_1`` and
    ``N_2`` particles ``b`` apart.  n-chain: one chain per mass, separated by
    the given macroscopic edge gaps (converted by ``1/eps``).  Intra-chain gaps
    are ``a`` (exact) or uniform on ``[a - eps**mu, a + eps**mu]``.
    """
    a, b = constants.a, constants.b
    width = params.epsilon ** params.mu
    if width > b - a:
        raise ValueError(f"eps**mu = {width} exceeds b - a = {b - a}")
    if gap_mode not in ("exact", "uniform"):
        raise ValueError(f"unknown gap mode {gap_mode!r}")
    counts = params.n_particles_list
    if kind == "single":
        counts = counts[:1]
        between = []
    elif kind == "two-chain":
        if len(counts) != 2:
            raise ValueError("two-chain start needs exactly two masses")
        between = [b]
    elif kind == "n-chain":
        if separations is None or len(separations) != len(counts) - 1:
            raise ValueError("n-chain start needs one separation per neighbouring pair")
        between = [s / params.epsilon for s in separations]
        if min(between, default=b) < b:
            raise ValueError("chain separations must be at least the interaction range")
    else:
        raise ValueError(f"unknown initial kind {kind!r}")
    chains = []
    for n in counts:
        g = np.full(n - 1, a) if gap_mode == "exact" else rng.uniform(a - width, a + width, n - 1)
        chains.append(np.concatenate(([0.0], np.cumsum(g))))
    return ParticleState(join_chains(chains, between), 0.0, rng)


def copy_rng(rng: np.random.Generator) -> np.random.Generator:
    out = np.random.Generator(np.random.Philox())
    out.bit_generator.state = rng.bit_generator.state
    return out


def with_params(params: ScalingParams, **changes) -> ScalingParams:
    return replace(params, **changes)
