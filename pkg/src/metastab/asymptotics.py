"""Limit profiles of the parabolic equation on the metastable time scales.

All predictions are convex combinations of the initial condition ``u0``
evaluated at minima of ``S``: each set ``M_p(k)`` contributes the average
of ``u0`` over its minima weighted by ``pi(m)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .chain import ring_generator, transition_probabilities
from .errors import LevelOutOfRange, NotPeriodic
from .hierarchy import Hierarchy, HierarchyLevel
from .landscape import Landscape

SADDLE_ATOL = 1e-12


@dataclass(frozen=True)
class HittingMeasure:
    """Law of the first level-``p`` set reached from ``x`` in the limit.

    Weight ``1 - w`` sits on ``left`` and ``w`` on ``right``; when
    ``left == right`` the measure is a point mass.
    """

    p: int
    x: float
    left: int
    right: int
    w: float

    def weights(self) -> dict[int, float]:
        if self.left == self.right:
            return {self.left: 1.0}
        return {self.left: 1.0 - self.w, self.right: self.w}


@dataclass(frozen=True)
class PredictionProfile:
    """Predicted values over ``xs``; ``values`` has shape ``(len(times), len(xs))``
    for the critical regime and ``(len(xs),)`` otherwise."""

    regime: str
    p: int
    xs: np.ndarray
    values: np.ndarray
    times: np.ndarray | None = None
    bound: float = 0.0  # chain truncation budget carried into the profile

    def rows(self):
        """``(regime, p, t, x, value)`` tuples; ``t`` is None outside the critical regime."""
        if self.times is None:
            return [(self.regime, self.p, None, float(x), float(v))
                    for x, v in zip(self.xs, self.values)]
        return [(self.regime, self.p, float(t), float(x), float(v))
                for t, row in zip(self.times, self.values) for x, v in zip(self.xs, row)]


def tabulated(xs: Sequence[float], values: Sequence[float], period: float | None = 1.0) -> Callable:
    """Piecewise-linear ``u0`` from a table, periodic with ``period`` unless None."""
    xs = np.asarray(xs, float)
    vs = np.asarray(values, float)
    if period is None:
        return lambda x: np.interp(x, xs, vs)
    return lambda x: np.interp(x, xs, vs, period=period)


def _set_bounds(level: HierarchyLevel, land: Landscape, k: int) -> tuple[float, float]:
    g = level.members(k)
    return land.min_location(g[0]), land.min_location(g[-1])


def locate_indices(level: HierarchyLevel, land: Landscape, x: float) -> tuple[int, int]:
    """``l = max{j : some m in M(j) has m <= x}``, ``r = min{k : some m in M(k) has m >= x}``."""
    u = level.u
    base = math.floor(x - land.min_location(level.members(0)[0])) * u
    ks = range(base - u - 1, base + 2 * u + 2)
    l = max(k for k in ks if _set_bounds(level, land, k)[0] <= x)
    r = min(k for k in ks if _set_bounds(level, land, k)[1] >= x)
    return l, r


def hitting_measure(level: HierarchyLevel, land: Landscape, x: float) -> HittingMeasure:
    """Limit law of the first set of level ``p`` visited from ``x``.

    Between ``M(l)`` and ``M(l+1)`` the mass splits according to the
    curvatures of the highest saddles: each saddle left of ``x`` adds
    ``1/sqrt(-S'')`` to the weight of the right set, and a saddle at ``x``
    adds half of that.  On level 1 this is the basin rule with the
    half-half convention at saddles.
    """
    l, r = locate_indices(level, land, x)
    if l == r:
        return HittingMeasure(level.q, x, l, r, 1.0)
    num = den = 0.0
    for j in level.saddles(l):
        c = 1.0 / math.sqrt(-land.saddle_point(j).curvature)
        loc = land.saddle_location(j)
        den += c
        if abs(loc - x) <= SADDLE_ATOL:
            num += 0.5 * c
        elif loc < x:
            num += c
    return HittingMeasure(level.q, x, l, r, num / den)


def set_average(level: HierarchyLevel, land: Landscape, k: int, u0: Callable) -> float:
    """``sum_{m in M(k)} pi(m) u0(m) / pi(M(k))``."""
    g = level.members(k)
    w = np.array([land.pi_min(i) for i in g])
    v = np.array([float(u0(land.min_location(i))) for i in g])
    return float(w @ v / w.sum())


def _xs(xs) -> np.ndarray:
    return np.atleast_1d(np.asarray(xs, dtype=float))


def predict_critical(h: Hierarchy, p: int, t, u0: Callable, xs, tol: float = 1e-10) -> PredictionProfile:
    """Profile on the time scale ``t * theta_p``:
    ``sum_k h_p(x, k) sum_j p_t(k, j) avg(u0, M_p(j))``."""
    level = h.level(p)
    land = h.land
    xs = _xs(xs)
    times = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(times <= 0):
        raise ValueError("t must be positive")
    rows: dict[int, np.ndarray] = {}
    bound = 0.0

    def evolved(k):
        nonlocal bound
        if k not in rows:
            win = transition_probabilities(level, k, times, tol=tol)
            avg = np.array([set_average(level, land, int(s), u0) for s in win.states])
            rows[k] = win.probs @ avg
            bound = max(bound, win.bound)
        return rows[k]

    out = np.zeros((len(times), len(xs)))
    for i, x in enumerate(xs):
        for k, w in hitting_measure(level, land, x).weights().items():
            if w:
                out[:, i] += w * evolved(k)
    return PredictionProfile("critical", p, xs, out, times, bound)


def predict_intermediate(h: Hierarchy, p: int, u0: Callable, xs) -> PredictionProfile:
    """Profile between ``theta_p`` and ``theta_{p+1}``:
    ``sum_k h_{p+1}(x, k) avg(u0, M_{p+1}(k))``."""
    if not 1 <= p < h.Q:
        raise LevelOutOfRange(f"intermediate regime needs 1 <= p < {h.Q}, got {p}")
    level = h.level(p + 1)
    land = h.land
    xs = _xs(xs)
    vals = np.array([sum(w * set_average(level, land, k, u0)
                         for k, w in hitting_measure(level, land, x).weights().items() if w)
                     for x in xs])
    return PredictionProfile("intermediate", p, xs, vals)


def predict_pre_metastable(land: Landscape, u0: Callable, xs,
                           saddle_convention: bool = True) -> PredictionProfile:
    """Profile before ``theta_1``: ``u0`` at the minimum of the basin of ``x``.

    At a saddle the value is the average of the two neighbouring minima
    when ``saddle_convention`` holds, and NaN otherwise (no limit is
    claimed there for shorter time scales).
    """
    xs = _xs(xs)
    vals = np.empty(len(xs))
    for i, x in enumerate(xs):
        k = land.basin(x)
        if abs(x - land.saddle_location(k)) <= SADDLE_ATOL:
            vals[i] = (0.5 * (float(u0(land.min_location(k - 1))) + float(u0(land.min_location(k))))
                       if saddle_convention else math.nan)
        else:
            vals[i] = float(u0(land.min_location(k)))
    return PredictionProfile("pre-metastable", 0, xs, vals)


def check_periodic(u0: Callable, ell: int, samples: int = 257, rtol: float = 1e-9) -> None:
    xs = np.linspace(0.0, float(ell), samples)
    a = np.array([float(u0(x)) for x in xs])
    b = np.array([float(u0(x + ell)) for x in xs])
    scale = max(1.0, float(np.max(np.abs(a))))
    if np.max(np.abs(a - b)) > rtol * scale:
        raise NotPeriodic(f"u0 is not {ell}-periodic on the sample grid")


def predict_equilibrium(h: Hierarchy, ell: int, u0: Callable) -> float:
    """Long-time limit for an ``ell``-periodic ``u0``: stationary average over
    the last-level ring of ``ell * u`` sets."""
    check_periodic(u0, ell)
    level = h.levels[-1]
    ring = ring_generator(level, ell, reversible=h.final_reversible)
    avg = np.array([set_average(level, h.land, k, u0) for k in range(ring.size)])
    return float(ring.stationary @ avg)


def u0_range(land: Landscape, u0: Callable, periods: int = 1) -> tuple[float, float]:
    """Min and max of ``u0`` over the minima in ``periods`` periods."""
    vals = [float(u0(land.min_location(g))) for g in range(periods * land.N)]
    return min(vals), max(vals)


def predict_fdd(h: Hierarchy, p: int, x: float, times: Sequence[float], ks: Sequence[int],
                tol: float = 1e-12) -> float:
    """Limit of ``P[X(t_j theta_p) in E(M_p(k_j)) for all j]``: the level-``p``
    chain started from the hitting measure of ``x``."""
    level = h.level(p)
    times = [float(t) for t in times]
    if len(times) != len(ks) or any(t <= s for s, t in zip([0.0] + times, times)):
        raise ValueError("times must be positive, increasing and match ks")
    total = 0.0
    for k0, w in hitting_measure(level, h.land, x).weights().items():
        prob = w
        prev_k, prev_t = k0, 0.0
        for t, k in zip(times, ks):
            win = transition_probabilities(level, prev_k, [t - prev_t], tol=tol)
            i = int(k) - int(win.states[0])
            prob *= float(win.probs[0, i]) if 0 <= i < len(win.states) else 0.0
            prev_k, prev_t = int(k), t
        total += prob
    return total
