"""Chain geometry and stopping-time detection for sorted configurations.

A configuration is a chain with fluctuation ``c`` when every consecutive gap
differs from the well distance ``a`` by at most ``c``.  The fluctuation vector
``h`` is what remains after removing the centred equal-spacing configuration
and the centre of mass; its gradient is ``gap - a``, which is how all three
norms are computed here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import _kernels
from .potential import PotentialConstants, PotentialSpec, ThresholdSet, evaluate

STOPPING_TIMES = ("tau1", "tau2", "tau3", "tau4", "tau5", "sigma", "tau")


@dataclass(frozen=True)
class ChainDecomposition:
    eta: float
    h: np.ndarray
    z0: np.ndarray
    grad_norm_2: float
    grad_norm_inf: float
    laplace_norm_2: float

    def reconstruct(self) -> np.ndarray:
        return self.z0 + self.h + self.eta


class Segment(NamedTuple):
    start: int
    count: int
    center: float


@dataclass(frozen=True)
class SegmentView:
    segments: tuple[Segment, ...]

    def __len__(self):
        return len(self.segments)

    @property
    def counts(self) -> tuple[int, ...]:
        return tuple(s.count for s in self.segments)


class CentersDifference(NamedTuple):
    direct: float      # mean of the right block minus mean of the left block
    gap_sum: float     # the same quantity rebuilt from the gaps alone
    centered: float    # the gap functional sum of weighted (g_i - a)
    inter_gap: float


def _as_positions(x) -> np.ndarray:
    pos = getattr(x, "positions", x)
    return np.ascontiguousarray(pos, dtype=np.float64)


def center_of_mass(x) -> float:
    x = _as_positions(x)
    if x.size == 0:
        raise ValueError("center of mass of an empty configuration")
    return float(x.mean())


def centered_minimum(n: int, a: float) -> np.ndarray:
    """Equal spacing ``a``, centred at 0: first entry -a(n-1)/2, last +a(n-1)/2."""
    return a * (np.arange(n, dtype=np.float64) - 0.5 * (n - 1))


def chain_norms(grad: np.ndarray) -> tuple[float, float, float]:
    """(||grad h||_2, ||grad h||_inf, ||Laplace h||_2) from the gradient vector.

    ``grad[i] = h[i+1] - h[i]``.  The Laplacian norm has interior terms
    ``grad[i] - grad[i-1]`` plus the two boundary terms ``grad[0]`` and
    ``grad[-1]``.
    """
    grad = np.asarray(grad, dtype=np.float64)
    if grad.size == 0:
        return 0.0, 0.0, 0.0
    lap = np.diff(grad)
    lap2 = float(np.dot(lap, lap)) + grad[0] ** 2 + grad[-1] ** 2
    return (math.sqrt(float(np.dot(grad, grad))), float(np.max(np.abs(grad))), math.sqrt(lap2))


def decompose(x, a: float) -> ChainDecomposition:
    x = _as_positions(x)
    n = x.size
    if n < 2:
        raise ValueError("decomposition needs at least two particles")
    eta = float(x.mean())
    z0 = centered_minimum(n, a)
    h = x - z0 - eta
    g2, ginf, l2 = chain_norms(np.diff(x) - a)
    return ChainDecomposition(eta=eta, h=h, z0=z0, grad_norm_2=g2, grad_norm_inf=ginf,
                              laplace_norm_2=l2)


def tube_distance(x, a: float) -> float:
    """||grad h||_inf, the smallest c with x in the tube of radius c."""
    x = _as_positions(x)
    if x.size < 2:
        return 0.0
    return float(np.max(np.abs(np.diff(x) - a)))


def is_chain(x, c: float, constants: PotentialConstants) -> bool:
    if not 0.0 <= c <= constants.b - constants.a:
        raise ValueError(f"tube radius {c} outside [0, b - a]")
    return tube_distance(x, constants.a) <= c


def join_chains(chains, separations) -> np.ndarray:
    """Concatenate chains (each given by its own positions) left to right.

    Each chain is shifted so that its first particle sits the given separation
    after the previous chain's last particle, nudged up by ulps when rounding
    would leave the realised gap below the requested one.
    """
    out = [np.asarray(chains[0], dtype=np.float64) - chains[0][0]]
    for chain, sep in zip(chains[1:], separations):
        chain = np.asarray(chain, dtype=np.float64)
        last = out[-1][-1]
        start = last + sep
        while start - last < sep:
            start = np.nextafter(start, np.inf)
        out.append(start + (chain - chain[0]))
    return np.concatenate(out)


def equal_chain(n: int, a: float) -> np.ndarray:
    return a * np.arange(n, dtype=np.float64)


def saddle_configuration(n1: int, n2: int, a: float, b: float) -> np.ndarray:
    """Two equal-spacing chains whose facing ends sit exactly ``b`` apart."""
    return join_chains([equal_chain(n1, a), equal_chain(n2, a)], [b])


def hamiltonian_of(x, spec: PotentialSpec) -> float:
    return float(_kernels.energy(_as_positions(x), spec.a, spec.cutoff, spec.coef))


def saddle_energy(n1: int, n2: int, constants: PotentialConstants) -> float:
    return hamiltonian_of(saddle_configuration(n1, n2, constants.a, constants.b), constants.spec)


def relative_energy(x, spec: PotentialSpec, saddle_ref: float) -> float:
    return hamiltonian_of(x, spec) - saddle_ref


def neighbor_energy_form(x, n1: int, spec: PotentialSpec) -> float:
    """Relative energy when only neighbours interact: sum over the intra-chain
    gaps of U(g) - U(a), plus U of the gap between the chains."""
    x = _as_positions(x)
    g = np.diff(x)
    u = evaluate(spec, g)
    u_a = evaluate(spec, spec.a)
    intra = np.delete(u, n1 - 1) - u_a
    return float(intra.sum() + u[n1 - 1])


def centers_difference(x, n1: int, a: float) -> CentersDifference:
    """Difference of block centres of mass, computed directly and from the gaps.

    The gap route writes each block mean relative to its facing end particle,
    ``gap_sum = F(g) + a*N/2 - a + inter_gap`` with
    ``F(g) = sum_{i<N1} i (g_i - a) / N1 + sum_{i>N1} (N - i)(g_i - a) / N2``
    (1-based gap index).
    """
    x = _as_positions(x)
    n = x.size
    if not 1 <= n1 < n:
        raise ValueError(f"split index {n1} outside [1, {n - 1}]")
    n2 = n - n1
    direct = float(x[n1:].mean() - x[:n1].mean())
    g = np.diff(x)
    inter = float(g[n1 - 1])
    left = np.arange(1, n1, dtype=np.float64)
    right = n - np.arange(n1 + 1, n, dtype=np.float64)
    f = float(np.dot(left, g[: n1 - 1] - a)) / n1 + float(np.dot(right, g[n1:] - a)) / n2
    return CentersDifference(direct=direct, gap_sum=f + 0.5 * a * n - a + inter,
                             centered=f, inter_gap=inter)


def segment_view(x, gap_threshold: float) -> SegmentView:
    """Maximal runs of particles whose consecutive gaps stay below the threshold."""
    x = _as_positions(x)
    if x.size == 0:
        return SegmentView(())
    cuts = np.flatnonzero(np.diff(x) >= gap_threshold) + 1
    bounds = np.concatenate(([0], cuts, [x.size]))
    segs = tuple(Segment(int(s), int(e - s), float(x[s:e].mean()))
                 for s, e in zip(bounds[:-1], bounds[1:]))
    return SegmentView(segs)


def multi_saddle_configuration(counts, a: float, b: float) -> np.ndarray:
    """Equal-spacing chains of the given sizes, neighbouring chains ``b`` apart."""
    return join_chains([equal_chain(int(c), a) for c in counts], [b] * (len(counts) - 1))


@dataclass(frozen=True)
class ObserverContext:
    """Run-level inputs of the stopping-time predicates.

    ``boundaries`` lists the 0-based gap indices that separate the initial
    chains (``N1 - 1`` for two chains, empty for one).  ``saddle_ref`` is the
    energy of the matching saddle configuration.
    """

    constants: PotentialConstants
    epsilon: float
    nu: float
    nu_tilde: float
    boundaries: tuple[int, ...] = ()
    saddle_ref: float = 0.0

    @classmethod
    def for_counts(cls, counts, constants: PotentialConstants, epsilon: float, nu: float,
                   nu_tilde: float) -> "ObserverContext":
        counts = [int(c) for c in counts]
        bounds = tuple(int(i) for i in np.cumsum(counts)[:-1] - 1)
        ref = hamiltonian_of(multi_saddle_configuration(counts, constants.a, constants.b),
                             constants.spec) if bounds else 0.0
        return cls(constants=constants, epsilon=epsilon, nu=nu, nu_tilde=nu_tilde,
                   boundaries=bounds, saddle_ref=ref)


@dataclass
class StoppingRecord:
    """First-hit macroscopic times of the stopping times, ``None`` while untriggered.

    ``trigger`` keeps what fired each one: an ``(index, value)`` pair for the
    gap-based times and ``tau5``, the tested scalar otherwise.
    """

    context: ObserverContext
    times: dict = field(default_factory=lambda: {k: None for k in STOPPING_TIMES})
    trigger: dict = field(default_factory=lambda: {k: None for k in STOPPING_TIMES})

    def hit(self, name: str) -> bool:
        return self.times[name] is not None

    def row(self) -> list[float]:
        return [-1.0 if self.times[k] is None else self.times[k] for k in STOPPING_TIMES]


def new_record(context: ObserverContext) -> StoppingRecord:
    return StoppingRecord(context)


def observe(state, thresholds: ThresholdSet, record: StoppingRecord, t_macro: float | None = None,
            reference=None) -> StoppingRecord:
    """Test every untriggered stopping time on one sample and record first hits.

    ``state`` is a ParticleState or a sorted position array; in the latter case
    ``t_macro`` must be given.  ``reference`` holds the paired noiseless
    positions and enables ``tau5``.  tau1 and tau2 use the chain boundaries of
    the context, so they extend to any number of chains; tau3 needs at least
    one boundary and tau4 exactly one.
    """
    ctx = record.context
    c = ctx.constants
    x = _as_positions(state)
    if t_macro is None:
        t_macro = ctx.epsilon ** 3 * state.t_micro
    t_macro = float(t_macro)
    g = np.diff(x)
    dev = np.abs(g - c.a)
    times, trig = record.times, record.trigger
    bounds = np.asarray(ctx.boundaries, dtype=np.int64)

    def mark(name, info):
        times[name] = t_macro
        trig[name] = info

    if bounds.size:
        if times["tau1"] is None:
            inter = g[bounds]
            k = int(np.argmin(inter))
            if inter[k] <= thresholds.b2p:
                mark("tau1", (int(bounds[k]), float(inter[k])))
        if times["tau3"] is None:
            h_rel = hamiltonian_of(x, c.spec) - ctx.saddle_ref
            if h_rel >= thresholds.delta1:
                mark("tau3", h_rel)
        if times["tau4"] is None and bounds.size == 1:
            n = x.size
            diff = float(x[bounds[0] + 1:].mean() - x[: bounds[0] + 1].mean())
            if diff <= 0.5 * c.a * n - n ** thresholds.kappa:
                mark("tau4", diff)
    if times["tau2"] is None and g.size:
        inside = (g > thresholds.b3p) & (g < thresholds.b4p)
        inside[bounds] = True
        bad = np.flatnonzero(~inside)
        if bad.size:
            mark("tau2", (int(bad[0]), float(g[bad[0]])))
    if times["tau5"] is None and reference is not None:
        d = np.abs(x - _as_positions(reference))
        k = int(np.argmax(d))
        if d[k] >= ctx.epsilon ** thresholds.theta:
            mark("tau5", (k, float(d[k])))
    worst = float(dev.max()) if dev.size else 0.0
    if times["sigma"] is None and worst > ctx.epsilon ** ctx.nu:
        mark("sigma", worst)
    if times["tau"] is None and worst <= ctx.epsilon ** ctx.nu_tilde:
        mark("tau", worst)
    return record
