"""Compiled inner loops shared by the potential, the integrators and the diagnostics.

Everything here works on plain floats and float64 arrays so that numba can
compile it once.  The pair potential is the smoothed double well

    U(x) = psi((|x| - a)**2 - 4)

where psi is the identity below -1, zero above 0 and a polynomial bridge
``psi(s) = -q(-s)`` in between; ``coef`` holds the coefficients of q in
increasing degree.
"""

import math

import numpy as np
from numba import njit

NOISE_OFF = 0
NOISE_RNG = 1
NOISE_GIVEN = 2

# the scalar helpers are force-inlined: numba leaves them as calls otherwise,
# which costs about 5x in the gradient loop


@njit(cache=True, inline="always")
def _poly(c, y):
    r = 0.0
    for k in range(c.shape[0] - 1, -1, -1):
        r = r * y + c[k]
    return r


@njit(cache=True, inline="always")
def _dpoly(c, y):
    r = 0.0
    for k in range(c.shape[0] - 1, 0, -1):
        r = r * y + k * c[k]
    return r


@njit(cache=True, inline="always")
def _d2poly(c, y):
    r = 0.0
    for k in range(c.shape[0] - 1, 1, -1):
        r = r * y + k * (k - 1) * c[k]
    return r


@njit(cache=True, inline="always")
def pair_u(x, a, coef):
    d = abs(x) - a
    s = d * d - 4.0
    if s <= -1.0:
        return s
    if s < 0.0:
        return -_poly(coef, -s)
    return 0.0


@njit(cache=True, inline="always")
def pair_du(x, a, coef):
    d = abs(x) - a
    s = d * d - 4.0
    if s <= -1.0:
        slope = 1.0
    elif s < 0.0:
        slope = _dpoly(coef, -s)
    else:
        return 0.0
    r = 2.0 * d * slope
    if x < 0.0:
        return -r
    return r


@njit(cache=True, inline="always")
def pair_d2u(x, a, coef):
    d = abs(x) - a
    s = d * d - 4.0
    if s <= -1.0:
        return 2.0
    if s < 0.0:
        return -4.0 * d * d * _d2poly(coef, -s) + 2.0 * _dpoly(coef, -s)
    return 0.0


@njit(cache=True)
def eval_array(x, a, coef, order, out):
    for i in range(x.shape[0]):
        if order == 0:
            out[i] = pair_u(x[i], a, coef)
        elif order == 1:
            out[i] = pair_du(x[i], a, coef)
        else:
            out[i] = pair_d2u(x[i], a, coef)
    return out


@njit(cache=True)
def energy(x, a, b, coef):
    """Windowed pair sum over a sorted configuration."""
    n = x.shape[0]
    h = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            d = x[j] - x[i]
            if d >= b:
                break
            h += pair_u(d, a, coef)
    return h


@njit(cache=True, inline="always")
def gradient(x, a, b, coef, out):
    n = x.shape[0]
    for i in range(n):
        out[i] = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            d = x[j] - x[i]
            if d >= b:
                break
            u = pair_du(d, a, coef)
            out[j] += u
            out[i] -= u
    return out


@njit(cache=True, inline="always")
def insertion_sort(x):
    # nearly sorted input after a small step; O(N) in the common case
    for i in range(1, x.shape[0]):
        v = x[i]
        j = i - 1
        while j >= 0 and x[j] > v:
            x[j + 1] = x[j]
            j -= 1
        x[j + 1] = v


@njit(cache=True)
def em_steps(x, n_steps, dt, beta, a, b, coef, rng, mode, increments, work):
    """Advance ``x`` in place by ``n_steps`` Euler-Maruyama steps.

    Drift is ``-beta/2 * grad H``.  ``mode`` selects the noise source:
    NOISE_OFF (gradient flow), NOISE_RNG (standard normals from ``rng``,
    scaled by sqrt(dt)) or NOISE_GIVEN (Brownian increments read from
    ``increments[k]``).  Returns the sum over steps and particles of the
    noise actually added.
    """
    n = x.shape[0]
    sq = math.sqrt(dt)
    c = 0.5 * beta * dt
    total = 0.0
    for k in range(n_steps):
        gradient(x, a, b, coef, work)
        if mode == NOISE_RNG:
            for i in range(n):
                w = sq * rng.standard_normal()
                x[i] += -c * work[i] + w
                total += w
        elif mode == NOISE_GIVEN:
            for i in range(n):
                w = increments[k, i]
                x[i] += -c * work[i] + w
                total += w
        else:
            for i in range(n):
                x[i] -= c * work[i]
        insertion_sort(x)
    return total


@njit(cache=True)
def gap_flow(g, n_steps, dt, beta, a, coef, out):
    """Explicit Euler for the nearest-neighbour gap ODE with g_0 = g_N = a."""
    m = g.shape[0]
    cur = g.copy()
    du = np.empty(m + 2)
    c = 0.5 * beta * dt
    for k in range(n_steps):
        du[0] = pair_du(a, a, coef)
        du[m + 1] = du[0]
        for i in range(m):
            du[i + 1] = pair_du(cur[i], a, coef)
        for i in range(m):
            cur[i] += c * (du[i + 2] + du[i] - 2.0 * du[i + 1])
    for i in range(m):
        out[i] = cur[i]
    return out


@njit(cache=True)
def rod_steps(eta, mass, n, t, t_end, dt, rng, max_events, ev_time, ev_left, ev_value):
    """Advance ``n`` coalescing rods from ``t`` to ``t_end`` on a grid of step <= dt.

    ``eta``/``mass`` hold the active rods in their first ``n`` entries and are
    compacted in place at every merge.  Within a step each path is linear
    between its endpoints; the earliest crossing of a neighbouring pair is
    found in closed form, all rods are rolled to it, the pair merges at the
    common value and the merged rod redraws its increment for the rest of the
    step.  Stops early after ``max_events`` merges.  Returns
    ``(n, t, n_events)``.
    """
    p0 = np.empty(n)
    end = np.empty(n)
    n_ev = 0
    span = t_end - t
    if span <= 0.0:
        return n, t, n_ev
    steps = int(math.ceil(span / dt - 1e-9))
    if steps < 1:
        steps = 1
    h = span / steps
    t0 = t
    for k in range(steps):
        for i in range(n):
            p0[i] = eta[i]
            end[i] = eta[i] + math.sqrt(h / mass[i]) * rng.standard_normal()
        s0 = 0.0
        while True:
            best = 2.0
            left = -1
            for i in range(n - 1):
                d1 = end[i + 1] - end[i]
                if d1 <= 0.0:
                    d0 = p0[i + 1] - p0[i]
                    if d0 <= 0.0:
                        s = s0
                    else:
                        s = s0 + (1.0 - s0) * d0 / (d0 - d1)
                    if s < best:
                        best = s
                        left = i
            if left < 0:
                break
            f = (best - s0) / (1.0 - s0)
            for i in range(n):
                p0[i] += (end[i] - p0[i]) * f
            common = 0.5 * (p0[left] + p0[left + 1])
            lo = min(p0[left], p0[left + 1])
            hi = max(p0[left], p0[left + 1])
            if common < lo:
                common = lo
            elif common > hi:
                common = hi
            mass[left] += mass[left + 1]
            for i in range(left + 1, n - 1):
                p0[i] = p0[i + 1]
                end[i] = end[i + 1]
                mass[i] = mass[i + 1]
            n -= 1
            p0[left] = common
            end[left] = common + math.sqrt((1.0 - best) * h / mass[left]) * rng.standard_normal()
            s0 = best
            tev = t0 + (k + best) * h
            ev_time[n_ev] = tev
            ev_left[n_ev] = left
            ev_value[n_ev] = common
            n_ev += 1
            if n_ev >= max_events:
                for i in range(n):
                    eta[i] = p0[i]
                return n, tev, n_ev
        for i in range(n):
            eta[i] = end[i]
    return n, t_end, n_ev
