"""First passage out of an interval at finite eps.

With scale density ``s' = exp(S/eps)`` and speed density
``m = exp(-S/eps) / (eps a)``, the exit probability through ``r`` is
``(s(x) - s(l)) / (s(r) - s(l))`` and the mean exit time is the Green
integral

    E_x tau = (1 - p) int_l^x m(z) (s(z) - s(l)) dz
              + p int_x^r m(z) (s(r) - s(z)) dz.

This is the same quantity as ``p zeta(r) - zeta(x)`` with ``zeta`` the
iterated integral started at ``l``, rewritten so that no two large terms
are subtracted.  Every integral is accumulated in log space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.special import logsumexp

from .errors import NoInteriorMax, QuadratureFailure, ValidationError
from .landscape import CoefficientSpec, Landscape

_NODES, _WEIGHTS = np.polynomial.legendre.leggauss(20)
LOG_RTOL = 1e-12
MAX_PANELS = 200_000


@dataclass(frozen=True)
class ExitProblem:
    spec: CoefficientSpec
    eps: float
    l: float
    r: float
    x: float

    def __post_init__(self):
        if not self.eps > 0:
            raise ValidationError("eps must be positive")
        if not self.l < self.x < self.r:
            raise ValidationError(f"need l < x < r, got {self.l}, {self.x}, {self.r}")


def _gl(logf, a, b):
    """Log of the 20-point Gauss-Legendre rule on each row of ``[a, b]``."""
    a = np.atleast_1d(a)
    b = np.atleast_1d(b)
    half = 0.5 * (b - a)
    t = half[:, None] * _NODES + (0.5 * (a + b))[:, None]
    v = logf(t)
    with np.errstate(divide="ignore"):
        return logsumexp(v, b=_WEIGHTS, axis=1) + np.log(half)


class LogPanels:
    """Adaptive panels for ``int exp(logf)`` over ``[a, b]`` split at ``breaks``.

    A panel is accepted when the 20-point rule on it agrees with the sum
    over its two halves to ``LOG_RTOL`` in log space; the finer value is
    kept.
    """

    def __init__(self, logf, a: float, b: float, breaks=(), tol: float = LOG_RTOL):
        self.logf = logf
        pts = sorted({a, b, *[c for c in breaks if a < c < b]})
        todo = list(zip(pts[:-1], pts[1:]))
        done = []
        while todo:
            if len(done) + len(todo) > MAX_PANELS:
                raise QuadratureFailure("log-space quadrature did not converge")
            lo = np.array([p[0] for p in todo])
            hi = np.array([p[1] for p in todo])
            mid = 0.5 * (lo + hi)
            whole = _gl(logf, lo, hi)
            left = _gl(logf, lo, mid)
            right = _gl(logf, mid, hi)
            fine = np.logaddexp(left, right)
            ok = (np.abs(fine - whole) <= tol) | (np.isneginf(fine) & np.isneginf(whole))
            tiny = (hi - lo) < 1e-14 * max(1.0, abs(b))
            if np.any(tiny & ~ok):
                raise QuadratureFailure("panel width underflow in log-space quadrature")
            todo = []
            for i in range(len(lo)):
                if ok[i]:
                    done.append((lo[i], mid[i], hi[i], left[i], right[i]))
                else:
                    todo += [(lo[i], mid[i]), (mid[i], hi[i])]
        done.sort()
        edges, logs = [], []
        for lo_, mid_, hi_, lv, rv in done:
            edges += [lo_, mid_]
            logs += [lv, rv]
        self.edges = np.array(edges + [b])
        self.logs = np.array(logs)
        # log of the integral over all panels before / after panel j
        with np.errstate(divide="ignore"):
            self.before = np.concatenate([[-np.inf], np.logaddexp.accumulate(self.logs)[:-1]])
            self.after = np.concatenate([np.logaddexp.accumulate(self.logs[::-1])[::-1][1:], [-np.inf]])

    @property
    def total(self) -> float:
        return float(logsumexp(self.logs))

    def _panel_of(self, z):
        return np.clip(np.searchsorted(self.edges, z, side="right") - 1, 0, len(self.logs) - 1)

    def log_from_start(self, z):
        """``log int_a^z exp(logf)`` for an array of ``z``."""
        z = np.asarray(z, float)
        j = self._panel_of(z.ravel())
        part = _gl(self.logf, self.edges[j], z.ravel())
        part = np.where(z.ravel() > self.edges[j], part, -np.inf)
        return np.logaddexp(self.before[j], part).reshape(z.shape)

    def log_to_end(self, z):
        """``log int_z^b exp(logf)``."""
        z = np.asarray(z, float)
        j = self._panel_of(z.ravel())
        part = _gl(self.logf, z.ravel(), self.edges[j + 1])
        part = np.where(self.edges[j + 1] > z.ravel(), part, -np.inf)
        return np.logaddexp(self.after[j], part).reshape(z.shape)


def _critical_points(spec: CoefficientSpec, l: float, r: float) -> list[float]:
    """Sign changes of ``b`` in ``(l, r)``, refined with brentq."""
    n = max(64, int(math.ceil((r - l) * spec.scan_size)))
    x = np.linspace(l, r, n + 1)
    v = spec.b(x)
    out = []
    for i in np.nonzero(v[:-1] * v[1:] < 0)[0]:
        out.append(brentq(spec.b, x[i], x[i + 1], xtol=1e-14))
    out += [float(t) for t in x[1:-1][v[1:-1] == 0]]
    return sorted(out)


def _breaks(prob: ExitProblem):
    return _critical_points(prob.spec, prob.l, prob.r) + [prob.x]


def _log_split(prob: ExitProblem, scale: LogPanels | None = None):
    """``(log A, log B)`` with ``A = s(x) - s(l)`` and ``B = s(r) - s(x)``."""
    spec, eps = prob.spec, prob.eps
    if scale is None:
        scale = LogPanels(lambda y: spec.S(y) / eps, prob.l, prob.r, _breaks(prob))
    A = float(scale.log_from_start(np.array([prob.x]))[0])
    B = float(scale.log_to_end(np.array([prob.x]))[0])
    return A, B


def exit_probability(prob: ExitProblem) -> float:
    """``P_x[tau(r) < tau(l)]``."""
    A, B = _log_split(prob)
    return float(np.exp(-np.logaddexp(0.0, B - A)))


def mean_exit_time(prob: ExitProblem) -> float:
    """``E_x[min(tau(l), tau(r))]``."""
    spec, eps, l, r, x = prob.spec, prob.eps, prob.l, prob.r, prob.x
    brk = _breaks(prob)
    scale = LogPanels(lambda y: spec.S(y) / eps, l, r, brk)
    A, B = _log_split(prob, scale)
    log_p = -np.logaddexp(0.0, B - A)
    log_q = -np.logaddexp(0.0, A - B)

    def speed(z):
        return -spec.S(z) / eps - np.log(eps * spec.a(z))

    left = LogPanels(lambda z: speed(z) + scale.log_from_start(z), l, x, brk)
    right = LogPanels(lambda z: speed(z) + scale.log_to_end(z), x, r, brk)
    return float(np.exp(np.logaddexp(log_q + left.total, log_p + right.total)))


def _K(spec: CoefficientSpec, l: float, r: float) -> tuple[float, float]:
    """``(K_up, K_down)``: largest rise and largest drop of ``S`` moving right."""
    pts = [l] + _critical_points(spec, l, r) + [r]
    s = spec.S(np.array(pts))
    up = down = 0.0
    lo = hi = s[0]
    for v in s[1:]:
        up = max(up, v - lo)
        down = max(down, hi - v)
        lo, hi = min(lo, v), max(hi, v)
    return float(up), float(down)


def mean_exit_bound(spec: CoefficientSpec, l: float, r: float, eps: float) -> float:
    """``c0 / eps * exp(K / eps)`` with ``c0 = sup 1/a`` and ``K`` the smaller
    of the largest rise and largest drop of ``S`` on ``[l, r]``.

    The bound is stated for intervals of length at most one; longer
    intervals pick up a factor ``(r - l)**2``.
    """
    if not l < r:
        raise ValidationError("need l < r")
    K = min(_K(spec, l, r))
    return spec.frak_c0 / eps * math.exp(K / eps)


def exit_probability_asymptotic(land: Landscape, l: float, r: float, x: float) -> float:
    """Small-eps limit of the exit probability through ``r``.

    The limit splits according to the highest interior maxima: each one
    left of ``x`` contributes ``(-S'')**-0.5`` to the numerator, one at ``x``
    contributes half of that.
    """
    if not l < x < r:
        raise ValidationError(f"need l < x < r, got {l}, {x}, {r}")
    inside = land.saddles_between(l, r)
    ends = max(land.S_at(l), land.S_at(r))
    if not inside:
        raise NoInteriorMax("no interior maximum of S in (l, r)")
    top = max(land.saddle_S(j) for j in inside)
    if not top > ends + land.tie_tol:
        raise NoInteriorMax("interior maximum does not exceed the endpoint values")
    num = den = 0.0
    for j in inside:
        if not land.is_tie(land.saddle_S(j), top):
            continue
        c = 1.0 / math.sqrt(-land.saddle_point(j).curvature)
        loc = land.saddle_location(j)
        den += c
        if abs(loc - x) <= 1e-12:
            num += 0.5 * c
        elif loc < x:
            num += c
    return num / den
