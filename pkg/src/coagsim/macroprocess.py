"""Coalescing massive Brownian rods, the macroscopic limit of several chains.

Rod ``l`` has mass ``rho_l``, length ``a * rho_l`` and centre ``eta_l``.  The
shifted centre ``eta_l - a * (sum_{k<l} rho_k + rho_l / 2)`` turns contact of
neighbouring rods into equality of shifted centres, so between contacts every
rod is an independent Brownian motion of variance rate ``1 / mass`` in these
coordinates and a contact is a meeting.  Meeting rods merge: masses add and
the merged rod continues from the common value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels


@dataclass(frozen=True)
class RodGroup:
    members: tuple[int, ...]
    mass: float
    eta_tilde: float


@dataclass(frozen=True)
class CoagulationEvent:
    t_macro: float
    left_group: tuple[int, ...]
    right_group: tuple[int, ...]
    new_mass: float


@dataclass(frozen=True)
class RodSystem:
    groups: tuple[RodGroup, ...]
    rho: tuple[float, ...]
    a: float
    t_macro: float = 0.0

    @property
    def total_mass(self) -> float:
        return math.fsum(g.mass for g in self.groups)

    @property
    def eta_tilde(self) -> np.ndarray:
        return np.array([g.eta_tilde for g in self.groups])

    def member_values(self) -> np.ndarray:
        """Shifted centre of every original rod (merged rods repeat their group value)."""
        out = np.empty(len(self.rho))
        for g in self.groups:
            out[list(g.members)] = g.eta_tilde
        return out

    def centers(self) -> np.ndarray:
        """Physical centres of the active groups."""
        offsets = np.concatenate(([0.0], np.cumsum(self.rho)))
        return np.array([g.eta_tilde + self.a * (offsets[g.members[0]] + 0.5 * g.mass)
                         for g in self.groups])


@dataclass
class RodTrajectory:
    t_macro: np.ndarray
    eta_tilde: np.ndarray          # samples x original rods
    n_groups: np.ndarray
    events: list[CoagulationEvent] = field(default_factory=list)
    final: RodSystem | None = None


def shifted_centers(rho_list, centers, a: float) -> np.ndarray:
    rho = np.asarray(rho_list, dtype=np.float64)
    offsets = np.concatenate(([0.0], np.cumsum(rho)[:-1])) + 0.5 * rho
    return np.asarray(centers, dtype=np.float64) - a * offsets


def init_rods(rho_list, initial_centers, a: float) -> RodSystem:
    rho = tuple(float(r) for r in rho_list)
    if len(rho) != len(initial_centers):
        raise ValueError("one centre per rod required")
    if not rho or min(rho) <= 0.0:
        raise ValueError("rod masses must be positive")
    shifted = shifted_centers(rho, initial_centers, a)
    if np.any(np.diff(shifted) <= 0.0):
        raise ValueError("rods overlap or touch: shifted centres must increase strictly")
    groups = tuple(RodGroup((i,), r, float(e)) for i, (r, e) in enumerate(zip(rho, shifted)))
    return RodSystem(groups, rho, float(a))


def _merge_members(groups: list[RodGroup], left: int, value: float, rho):
    lg, rg = groups[left], groups[left + 1]
    members = lg.members + rg.members
    merged = RodGroup(members, math.fsum(rho[m] for m in members), value)
    groups[left:left + 2] = [merged]
    return lg.members, rg.members, merged.mass


def _advance(system: RodSystem, t_end: float, dt: float, rng, max_events: int):
    n = len(system.groups)
    eta = system.eta_tilde.copy()
    mass = np.array([g.mass for g in system.groups])
    # at most n - 1 merges can happen, so the budget never overruns the buffers
    cap = max(n - 1, 1)
    ev_t, ev_l, ev_v = np.empty(cap), np.empty(cap, np.int64), np.empty(cap)
    n_new, t_new, n_ev = _kernels.rod_steps(eta, mass, n, system.t_macro, t_end, dt, rng,
                                            max(int(max_events), 1), ev_t, ev_l, ev_v)
    groups = list(system.groups)
    events = []
    for k in range(n_ev):
        left_m, right_m, new_mass = _merge_members(groups, int(ev_l[k]), float(ev_v[k]), system.rho)
        events.append(CoagulationEvent(float(ev_t[k]), left_m, right_m, new_mass))
    groups = [RodGroup(g.members, g.mass, float(eta[i])) for i, g in enumerate(groups)]
    assert len(groups) == n_new
    return RodSystem(tuple(groups), system.rho, system.a, float(t_new)), events


def grid_step(system: RodSystem, dt: float, rng: np.random.Generator):
    """One grid step of length ``dt``; returns the new system and its events."""
    if not dt > 0.0:
        raise ValueError(f"step must be positive, got {dt}")
    return _advance(system, system.t_macro + dt, dt, rng, len(system.groups))


def simulate_rods(system: RodSystem, t_end: float, dt: float, rng: np.random.Generator, *,
                  sample_every: float | None = None, max_events: int | None = None) -> RodTrajectory:
    """Run to ``t_end`` (or until ``max_events`` merges), sampling every ``sample_every``.

    Without ``sample_every`` only the initial and final states are kept.
    """
    if t_end < 0.0:
        raise ValueError(f"t_end must be nonnegative, got {t_end}")
    if not dt > 0.0:
        raise ValueError(f"step must be positive, got {dt}")
    limit = len(system.groups) if max_events is None else int(max_events)
    if limit < 1:
        raise ValueError(f"max_events must be at least 1, got {max_events}")
    times, values, counts = [system.t_macro], [system.member_values()], [len(system.groups)]
    events: list[CoagulationEvent] = []
    start = system.t_macro
    if t_end > 0.0:
        every = t_end if sample_every is None else sample_every
        k_max = max(1, math.ceil(t_end / every - 1e-9))
        for k in range(1, k_max + 1):
            target = start + min(k * every, t_end)
            system, new = _advance(system, target, dt, rng, limit - len(events))
            events.extend(new)
            times.append(system.t_macro)
            values.append(system.member_values())
            counts.append(len(system.groups))
            if len(events) >= limit:
                break
    return RodTrajectory(np.array(times), np.array(values), np.array(counts), events, system)


def exact_two_rod_meeting(gap: float, rho1: float, rho2: float,
                          rng: np.random.Generator, size: int | None = None):
    """First meeting time of two rods whose shifted centres start ``gap`` apart.

    The difference of shifted centres is a driftless Brownian motion of rate
    ``v = 1/rho1 + 1/rho2``; by reflection its hitting time of 0 is
    ``gap**2 / (v Z**2)`` for a standard normal ``Z``.
    """
    if not gap > 0.0:
        raise ValueError(f"gap must be positive, got {gap}")
    v = 1.0 / rho1 + 1.0 / rho2
    z = rng.standard_normal(size)
    return gap * gap / (v * z * z)


def meeting_time_cdf(t, gap: float, rho1: float, rho2: float):
    """``P(T <= t) = 2 (1 - Phi(gap / sqrt(v t)))`` = erfc(gap / sqrt(2 v t))."""
    v = 1.0 / rho1 + 1.0 / rho2
    t = np.asarray(t, dtype=np.float64)
    with np.errstate(divide="ignore"):
        arg = np.where(t > 0.0, gap / np.sqrt(2.0 * v * np.maximum(t, 1e-300)), np.inf)
    out = np.array([math.erfc(u) for u in np.ravel(arg)]).reshape(arg.shape)
    return out if out.ndim else float(out)
