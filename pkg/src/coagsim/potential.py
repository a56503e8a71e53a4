"""Pair potential of the particle system and the constants derived from it.

The only family constructed here is the smoothed double well
``U(x) = psi((|x| - a)**2 - 4)``, with ``a >= 4``.  ``psi`` is the identity on
``(-inf, -1]``, vanishes on ``[0, inf)`` and is bridged on ``(-1, 0)`` by the
degree-7 two-point Hermite polynomial matching value and three derivatives at
both ends.  The assumption checker does not rely on that form: it only
evaluates ``U`` and its derivatives on grids.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import _kernels

ROOT_TOL = 1e-10
SCAN_STEP = 1e-3
MIN_GRID_STEP = 1e-4


class BracketError(ValueError):
    """A root search found no sign change on its bracketing interval."""


@dataclass(frozen=True)
class PotentialSpec:
    a: float
    bridge_coefficients: tuple[float, ...]

    def __post_init__(self):
        if len(self.bridge_coefficients) != 8:
            raise ValueError("bridge needs 8 coefficients (degree 7)")

    @property
    def cutoff(self) -> float:
        """A distance beyond which U vanishes identically (the family has b = a + 2)."""
        return self.a + 2.0

    @property
    def coef(self) -> np.ndarray:
        return np.asarray(self.bridge_coefficients, dtype=np.float64)

    def psi(self, s):
        """The smoothing function itself (vectorised)."""
        s = np.asarray(s, dtype=np.float64)
        c = self.coef
        y = -s
        bridge = -np.polynomial.polynomial.polyval(y, c)
        return np.where(s <= -1.0, s, np.where(s < 0.0, bridge, 0.0))


@dataclass(frozen=True)
class PotentialConstants:
    spec: PotentialSpec = field(repr=False)
    a: float
    u_a: float
    b: float
    b1: float
    b2: float
    b3: float
    b4: float
    c_check: float
    c_minus: float


@dataclass(frozen=True)
class ThresholdSet:
    b2p: float
    b3p: float
    b4p: float
    delta_bar: float
    delta1: float
    c_star: float
    kappa: float
    theta: float
    margin: float

    def in_d_prime(self, g):
        return (g > self.b3p) & (g < self.b4p)

    def in_d_second(self, g):
        return (g > self.b3p) & (g <= self.b2p)


@dataclass(frozen=True)
class ClauseResult:
    name: str
    passed: bool
    witness: dict


@dataclass(frozen=True)
class AssumptionReport:
    clauses: tuple[ClauseResult, ...]

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.clauses)

    def __getitem__(self, name: str) -> ClauseResult:
        for c in self.clauses:
            if c.name == name:
                return c
        raise KeyError(name)


def hermite_bridge() -> tuple[float, ...]:
    """Coefficients of the degree-7 q with q = q' = q'' = q''' = 0 at 0 and
    q(1) = 1, q'(1) = 1, q''(1) = q'''(1) = 0."""
    rows = []
    rhs = []
    for order in range(4):
        row = [0.0] * 8
        row[order] = float(math.factorial(order))
        rows.append(row)
        rhs.append(0.0)
    for order, value in enumerate((1.0, 1.0, 0.0, 0.0)):
        row = [0.0] * 8
        for k in range(order, 8):
            row[k] = math.factorial(k) / math.factorial(k - order)
        rows.append(row)
        rhs.append(value)
    c = np.linalg.solve(np.array(rows), np.array(rhs))
    # the solution is integral; snap away solver round-off
    return tuple(float(round(v)) if abs(v - round(v)) < 1e-9 else float(v) for v in c)


def build_example_potential(a: float) -> PotentialSpec:
    if not a >= 4.0:
        raise ValueError(f"the example potential needs a >= 4, got a={a}")
    return PotentialSpec(a=float(a), bridge_coefficients=hermite_bridge())


def evaluate(spec: PotentialSpec, x, order: int = 0):
    """U, U' or U'' at ``x`` (scalar or array)."""
    if order not in (0, 1, 2):
        raise ValueError(f"order must be 0, 1 or 2, got {order}")
    arr = np.asarray(x, dtype=np.float64)
    flat = np.ascontiguousarray(arr.ravel())
    out = np.empty_like(flat)
    _kernels.eval_array(flat, spec.a, spec.coef, order, out)
    if arr.ndim == 0:
        return float(out[0])
    return out.reshape(arr.shape)


def bisect(f: Callable[[float], float], lo: float, hi: float, tol: float = ROOT_TOL) -> float:
    """Root of ``f`` on [lo, hi] by bisection; raises BracketError without a sign change."""
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if (flo > 0) == (fhi > 0):
        raise BracketError(f"no sign change on [{lo}, {hi}] (f={flo}, {fhi})")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm == 0.0:
            return mid
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _bisect_predicate(pred: Callable[[float], bool], inside: float, outside: float, tol: float) -> float:
    # pred(inside) is True, pred(outside) False; returns the boundary
    while abs(outside - inside) > tol:
        mid = 0.5 * (inside + outside)
        if pred(mid):
            inside = mid
        else:
            outside = mid
    return 0.5 * (inside + outside)


def _scan_first(pred, start: float, stop: float, step: float) -> float:
    """First grid point from ``start`` towards ``stop`` where ``pred`` fails."""
    n = int(math.ceil(abs(stop - start) / step))
    direction = 1.0 if stop > start else -1.0
    for k in range(1, n + 1):
        x = start + direction * k * step
        if not pred(x):
            return x
    raise BracketError(f"predicate never failed between {start} and {stop}")


def support_edge(spec: PotentialSpec, tol: float = ROOT_TOL, x_max: float | None = None) -> float:
    """b = inf{x > 0 : U = 0 on (x, inf)}: outward scan, then bisection on U != 0."""
    x_max = 3.0 * spec.a + 4.0 if x_max is None else x_max
    grid = np.arange(0.0, x_max + SCAN_STEP, SCAN_STEP)
    u = evaluate(spec, grid)
    nonzero = np.flatnonzero(u != 0.0)
    if nonzero.size == 0:
        raise BracketError("U vanishes identically on the scan range")
    last = nonzero[-1]
    if last == grid.size - 1:
        raise BracketError(f"U does not vanish before x={x_max}")
    return float(_bisect_predicate(lambda x: evaluate(spec, x) != 0.0, grid[last], grid[last + 1], tol))


def derive_constants(spec: PotentialSpec, tol: float = ROOT_TOL) -> PotentialConstants:
    if not 0.0 < tol <= 1e-6:
        raise ValueError(f"tol must lie in (0, 1e-6], got {tol}")
    a = spec.a
    u = lambda x: evaluate(spec, x, 0)
    d2u = lambda x: evaluate(spec, x, 2)
    u_a = u(a)
    b = support_edge(spec, tol)

    convex = lambda x: d2u(x) > 0.0
    hi = _scan_first(convex, a, b, SCAN_STEP)
    b2 = _bisect_predicate(convex, hi - SCAN_STEP, hi, tol)
    lo = _scan_first(convex, a, 0.0, SCAN_STEP)
    b1 = _bisect_predicate(convex, lo + SCAN_STEP, lo, tol)

    u_b2 = u(b2)
    b3 = bisect(lambda x: u_b2 + u(x) - u_a, b1, a, tol)
    u_b3 = u(b3)
    b4 = bisect(lambda x: u(x) - u_b3, a, b2, tol)

    c_minus = quadratic_floor(spec, b1, b2)
    return PotentialConstants(
        spec=spec, a=a, u_a=u_a, b=b, b1=b1, b2=b2, b3=b3, b4=b4,
        c_check=d2u(a), c_minus=c_minus,
    )


def quadratic_floor(spec: PotentialSpec, lo: float, hi: float, step: float = MIN_GRID_STEP) -> float:
    """min of (U(g) - U(a)) / (g - a)**2 over a grid of [lo, hi]."""
    a = spec.a
    g = np.arange(lo, hi + 0.5 * step, step)
    g = g[(g > lo) & (g < hi) & (np.abs(g - a) > SCAN_STEP)]
    ratio = (evaluate(spec, g) - evaluate(spec, a)) / (g - a) ** 2
    return float(ratio.min())


def derive_thresholds(constants: PotentialConstants, margin: float = 0.1,
                      kappa: float = 0.75, theta: float = 1.0) -> ThresholdSet:
    if not 0.0 < margin < 1.0:
        raise ValueError(f"margin must lie in (0, 1), got {margin}")
    if not 0.5 < kappa < 1.0:
        raise ValueError(f"kappa must lie in (1/2, 1), got {kappa}")
    if not theta > 0.0:
        raise ValueError(f"theta must be positive, got {theta}")
    c = constants
    spec = c.spec
    u = lambda x: evaluate(spec, x, 0)

    nominal = c.b3 - margin * (c.b3 - c.b1)
    b3p = nominal
    if 2.0 * b3p <= c.b:
        b3p = 0.5 * c.b + ROOT_TOL
    if not b3p > c.b1:
        raise ValueError(f"clipped b3' = {b3p} does not exceed b1 = {c.b1}")
    if not b3p < c.b3:
        raise ValueError(f"b3' = {b3p} is not below b3 = {c.b3}; margin too large")
    u_b3p = u(b3p)
    # Lowering b3' to its nominal place raises U by `gain`; b2' gives back the
    # fraction `margin` of it.  Without clipping delta_bar = (1 - margin) * gain,
    # and the clip eats into it, so a large margin leaves no energy gap.
    gain = u(nominal) - u(c.b3)
    if not gain > 0.0:
        raise ValueError(f"U(b3') - U(b3) = {gain} <= 0; margin {margin} leaves no energy gap")
    target = u(c.b2) - margin * gain
    if not target > u(c.b4):
        raise ValueError(f"margin {margin} too large: b2' would fall below b4")
    b2p = bisect(lambda x: u(x) - target, c.b4, c.b2)
    delta_bar = u(b2p) + u_b3p - c.u_a
    if not delta_bar > 0.0:
        raise ValueError(f"delta_bar = {delta_bar} <= 0; margin {margin} too large")
    b4p = bisect(lambda x: u(x) - u_b3p, c.b4, b2p)

    grid = np.arange(b3p, b2p + 0.5 * MIN_GRID_STEP, MIN_GRID_STEP)
    grid = np.append(grid[(grid > b3p) & (grid < b2p)], b2p)
    c_star = float(evaluate(spec, grid, 2).min())
    if not c_star > 0.0:
        raise ValueError(f"U'' is not positive on D'' (c_star = {c_star})")
    return ThresholdSet(b2p=b2p, b3p=b3p, b4p=b4p, delta_bar=delta_bar,
                        delta1=0.5 * delta_bar, c_star=c_star, kappa=kappa,
                        theta=theta, margin=margin)


def verify_assumptions(constants: PotentialConstants, grid_step: float = 1e-3) -> AssumptionReport:
    """Grid checks of the structural assumptions on U, one entry per clause.

    Failures are reported, never raised.  Clause II(iii) re-derives b3 from
    the given b1, b2 instead of trusting ``constants.b3``.
    """
    if not 0.0 < grid_step <= 1e-3:
        raise ValueError(f"grid_step must lie in (0, 1e-3], got {grid_step}")
    c = constants
    spec = c.spec
    a, b = c.a, c.b
    x = np.arange(0.0, b + 1.0 + 0.5 * grid_step, grid_step)
    u = evaluate(spec, x)
    du = evaluate(spec, x, 1)
    d2u = evaluate(spec, x, 2)
    clauses = []

    asym = float(np.max(np.abs(u - evaluate(spec, -x))))
    clauses.append(ClauseResult("I(i)", asym == 0.0, {"max_asymmetry": asym}))

    beyond = x >= b
    tail = float(max(np.max(np.abs(u[beyond]), initial=0.0),
                     np.max(np.abs(du[beyond]), initial=0.0),
                     np.max(np.abs(d2u[beyond]), initial=0.0)))
    ratio = _third_derivative_ratio(spec, x, grid_step)
    clauses.append(ClauseResult("I(ii)", tail == 0.0 and ratio > 3.0,
                                {"max_beyond_b": tail, "d2u_second_difference_ratio": ratio}))

    imin = int(np.argmin(u))
    unique = abs(x[imin] - a) <= grid_step and float(u.min()) >= c.u_a
    c_check = evaluate(spec, a, 2)
    clauses.append(ClauseResult("I(iii)", unique and c_check > 0.0,
                                {"grid_min": float(u.min()), "argmin": float(x[imin]),
                                 "u_a": c.u_a, "c_check": c_check}))

    clauses.append(ClauseResult("I(iv)", b < 2.0 * a, {"b": b, "2a": 2.0 * a}))

    u_b1, u_b2 = evaluate(spec, c.b1), evaluate(spec, c.b2)
    clauses.append(ClauseResult("II(i)", 2.0 * u_b2 > c.u_a and u_b1 + u_b2 > c.u_a,
                                {"2U(b2)": 2.0 * u_b2, "U(b1)+U(b2)": u_b1 + u_b2, "U(a)": c.u_a}))

    right = (x >= c.b2) & (x <= b + 1.0)
    min_du = float(np.min(du[right], initial=np.inf))
    clauses.append(ClauseResult("II(ii)", min_du >= 0.0, {"min_du_beyond_b2": min_du}))

    try:
        b3 = bisect(lambda y: u_b2 + evaluate(spec, y) - c.u_a, c.b1, a)
    except BracketError:
        clauses.append(ClauseResult("II(iii)", False, {"b3": None}))
    else:
        ok = c.b1 < b3 < a and 2.0 * b3 > b
        clauses.append(ClauseResult("II(iii)", ok, {"b3": b3, "2b3": 2.0 * b3, "b": b}))
    return AssumptionReport(tuple(clauses))


def _third_derivative_ratio(spec: PotentialSpec, x: np.ndarray, h: float) -> float:
    # Second differences of U'' shrink like h**2 when U''' is continuous and
    # only like h across a jump of U'''; the h -> h/2 ratio tells them apart.
    def worst(step):
        return float(np.max(np.abs(evaluate(spec, x + step, 2) - 2.0 * evaluate(spec, x, 2)
                                   + evaluate(spec, x - step, 2))))
    coarse, fine = worst(h), worst(0.5 * h)
    if fine == 0.0:
        return math.inf
    return coarse / fine


def potential_report(a: float, margin: float, kappa: float = 0.75, theta: float = 1.0):
    """Constants, thresholds and assumption report for the example potential."""
    spec = build_example_potential(a)
    constants = derive_constants(spec)
    thresholds = derive_thresholds(constants, margin, kappa, theta)
    return constants, thresholds, verify_assumptions(constants)
