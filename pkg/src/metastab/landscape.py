"""Periodic coefficients, the potential S and its critical points.

The drift ``b`` and diffusion coefficient ``a`` are truncated
trigonometric series of period one.  Everything downstream derives from
the potential ``S(x) = -int_0^x b/a`` and from the zeros of ``b``:
zeros with ``b' < 0`` are local minima of ``S`` (stable equilibria),
zeros with ``b' > 0`` are local maxima (saddles).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy import integrate, optimize

from .errors import (
    DegenerateEquilibrium,
    InvalidSpec,
    NoEquilibria,
    NotOrdered,
    QuadratureFailure,
    RadiusTooLarge,
)

TWO_PI = 2.0 * math.pi

#: genericity threshold on |b'| at a zero of b
TAU_ND = 1e-8
#: relative tolerance used to decide equality of S values
TAU_TIE = 1e-9
#: band above TAU_TIE in which near-ties trigger a warning
TAU_NEAR_TIE = 1e-6
#: root refinement stops once the bracketing interval is this small
ROOT_XTOL = 1e-12


def _as_tuple(values) -> tuple[float, ...]:
    return tuple(float(v) for v in np.atleast_1d(np.asarray(values, dtype=float)))


@dataclass(frozen=True)
class CoefficientSpec:
    """Periodic coefficients as truncated Fourier series.

    ``a(x) = a_const + sum_n a_cos[n-1] cos(2 pi n x) + a_sin[n-1] sin(2 pi n x)``
    and likewise for ``b`` (whose constant term defaults to zero).

    Construction rejects an ``a`` that is not bounded away from zero on a
    dense grid.
    """

    a_const: float
    a_cos: tuple[float, ...] = ()
    a_sin: tuple[float, ...] = ()
    b_cos: tuple[float, ...] = ()
    b_sin: tuple[float, ...] = ()
    b_const: float = 0.0

    def __post_init__(self):
        for name in ("a_cos", "a_sin", "b_cos", "b_sin"):
            object.__setattr__(self, name, _as_tuple(getattr(self, name)))
        object.__setattr__(self, "a_const", float(self.a_const))
        object.__setattr__(self, "b_const", float(self.b_const))
        coeffs = np.concatenate([[self.a_const, self.b_const], self.a_cos,
                                 self.a_sin, self.b_cos, self.b_sin])
        if not np.all(np.isfinite(coeffs)):
            raise InvalidSpec("coefficients must be finite")
        if not self.c0 > 0.0:
            raise InvalidSpec(f"a(x) must be strictly positive; min over grid is {self.c0:.6g}")

    @property
    def harmonics(self) -> int:
        return max(len(self.a_cos), len(self.a_sin), len(self.b_cos), len(self.b_sin), 0)

    @cached_property
    def _tables(self):
        h = self.harmonics

        def pad(v):
            out = np.zeros(h)
            out[: len(v)] = v
            return out

        return (np.arange(1, h + 1, dtype=float), pad(self.a_cos), pad(self.a_sin),
                pad(self.b_cos), pad(self.b_sin))

    def _series(self, x, const, cos_c, sin_c, deriv=0):
        k, *_ = self._tables
        x = np.asarray(x, dtype=float)
        if k.size == 0:
            return np.full(x.shape, const if deriv == 0 else 0.0)
        ph = TWO_PI * x[..., None] * k
        c, s = np.cos(ph), np.sin(ph)
        w = TWO_PI * k
        if deriv == 0:
            return const + c @ cos_c + s @ sin_c
        if deriv == 1:
            return (-s * w) @ cos_c + (c * w) @ sin_c
        return (-c * w**2) @ cos_c + (-s * w**2) @ sin_c

    def a(self, x):
        _, ac, as_, _, _ = self._tables
        return self._series(x, self.a_const, ac, as_)

    def b(self, x):
        _, _, _, bc, bs = self._tables
        return self._series(x, self.b_const, bc, bs)

    def da(self, x):
        _, ac, as_, _, _ = self._tables
        return self._series(x, self.a_const, ac, as_, deriv=1)

    def db(self, x):
        _, _, _, bc, bs = self._tables
        return self._series(x, self.b_const, bc, bs, deriv=1)

    def d2b(self, x):
        _, _, _, bc, bs = self._tables
        return self._series(x, self.b_const, bc, bs, deriv=2)

    @property
    def scan_size(self) -> int:
        return 4096 * (1 + self.harmonics)

    @cached_property
    def c0(self) -> float:
        """Lower bound of ``a`` observed on the dense scan grid."""
        x = np.arange(self.scan_size) / self.scan_size
        return float(np.min(self.a(x)))

    @cached_property
    def frak_c0(self) -> float:
        """``sup 1/a``, refined around the grid minimum of ``a``."""
        n = self.scan_size
        x = np.arange(n) / n
        i = int(np.argmin(self.a(x)))
        res = optimize.minimize_scalar(lambda y: float(self.a(y)),
                                       bounds=((i - 1) / n, (i + 1) / n),
                                       method="bounded", options={"xatol": 1e-12})
        return 1.0 / min(float(res.fun), self.c0)

    @cached_property
    def sup_abs_db(self) -> float:
        n = self.scan_size
        x = np.arange(n) / n
        return float(np.max(np.abs(self.db(x))))

    @cached_property
    def potential_series(self) -> "PotentialSeries":
        return PotentialSeries.from_spec(self)

    def S(self, x):
        """Vectorised potential (spectral antiderivative of ``-b/a``)."""
        return self.potential_series(x)

    def dS(self, x):
        return -self.b(x) / self.a(x)

    def d2S(self, x):
        a, b = self.a(x), self.b(x)
        return -(self.db(x) * a - b * self.da(x)) / a**2


def eval_coeff(spec: CoefficientSpec, x):
    """Return ``(a, b, a', b')`` at ``x``."""
    return spec.a(x), spec.b(x), spec.da(x), spec.db(x)


@dataclass(frozen=True)
class PotentialSeries:
    """Closed-form antiderivative of the Fourier expansion of ``-b/a``.

    ``b/a`` is analytic and periodic, so its Fourier coefficients decay
    geometrically; the sample count is doubled until the tail is below
    double-precision noise.
    """

    mean: float
    cos_c: np.ndarray
    sin_c: np.ndarray

    @classmethod
    def from_spec(cls, spec: CoefficientSpec, max_points: int = 1 << 20):
        n = max(64, 16 * (spec.harmonics + 1))
        while True:
            x = np.arange(n) / n
            r = spec.b(x) / spec.a(x)
            f = np.fft.rfft(r) / n
            scale = max(np.max(np.abs(f)), 1e-300)
            tail = np.max(np.abs(f[n // 4:]))
            # FFT round-off leaves a floor of a few ulps, so ask for 1e-15
            if tail <= 1e-15 * scale or n >= max_points:
                break
            n *= 2
        if tail > 1e-13 * scale:
            raise QuadratureFailure("Fourier series of b/a did not converge")
        mean = f[0].real
        coef = 2.0 * f[1:n // 4]
        keep = np.nonzero(np.abs(coef) > 1e-17 * scale)[0]
        m = keep[-1] + 1 if keep.size else 0
        coef = coef[:m]
        # r(x) = mean + sum_k alpha_k cos(2 pi k x) + beta_k sin(2 pi k x)
        alpha, beta = coef.real, -coef.imag
        return cls(float(mean), alpha, beta)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = -self.mean * x
        m = self.cos_c.size
        if m == 0:
            return out
        k = np.arange(1, m + 1, dtype=float)
        w = TWO_PI * k
        flat = x.reshape(-1)
        res = np.empty(flat.shape)
        # chunked to bound memory
        step = max(1, 2_000_000 // m)
        for i in range(0, flat.size, step):
            ph = flat[i:i + step, None] * w
            res[i:i + step] = (np.sin(ph) @ (self.cos_c / w)
                               + (1.0 - np.cos(ph)) @ (self.sin_c / w))
        return out - res.reshape(x.shape)

    @property
    def tilt(self) -> float:
        return -self.mean


def potential(spec: CoefficientSpec, x: float, tol: float = 1e-12) -> float:
    """``S(x) = -int_0^x b(z)/a(z) dz`` by adaptive Gauss-Kronrod quadrature."""
    x = float(x)
    if x == 0.0:
        return 0.0
    # split at integers so each panel covers at most one period
    knots = np.unique(np.concatenate([[0.0, x], np.arange(math.ceil(min(0, x)),
                                                          math.floor(max(0, x)) + 1)]))
    total = 0.0
    f = lambda z: float(spec.b(z) / spec.a(z))  # noqa: E731
    for lo, hi in zip(knots[:-1], knots[1:]):
        with warnings.catch_warnings():
            warnings.simplefilter("error", integrate.IntegrationWarning)
            try:
                val, err = integrate.quad(f, lo, hi, epsabs=tol, epsrel=0.0, limit=500)
            except integrate.IntegrationWarning as exc:
                raise QuadratureFailure(str(exc)) from exc
        if err > 10 * tol:
            raise QuadratureFailure(f"potential quadrature error {err:.3g} exceeds {tol:.3g}")
        total += val
    return -total if x > 0 else total


@dataclass(frozen=True)
class CriticalPoint:
    location: float
    S: float
    curvature: float  # S''
    b_prime: float
    a: float


@dataclass(frozen=True)
class Landscape:
    """Critical points over one period, ordered so that
    ``sigma_0 < m_0 < sigma_1 < ... < m_{N-1} < sigma_0 + 1``.

    Locations are in user coordinates.  ``shift`` is the left end of the
    fundamental window ``[shift, shift + 1)`` holding the listed points;
    it is zero unless the first critical point in ``[0, 1)`` is a
    minimum or sits at the origin.

    Points outside the window are reached through global indices:
    ``m_{k + jN} = m_k + j`` and ``S(m_{k + jN}) = S(m_k) + j * tilt``.
    """

    spec: CoefficientSpec
    minima: tuple[CriticalPoint, ...]
    saddles: tuple[CriticalPoint, ...]
    tilt: float
    shift: float = 0.0
    _min_loc: np.ndarray = field(init=False, repr=False, compare=False)
    _sad_loc: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_min_loc", np.array([m.location for m in self.minima]))
        object.__setattr__(self, "_sad_loc", np.array([s.location for s in self.saddles]))

    @property
    def N(self) -> int:
        return len(self.minima)

    @cached_property
    def s_scale(self) -> float:
        vals = [p.S for p in self.minima + self.saddles]
        return max(max(vals) - min(vals), abs(self.tilt), 1e-300)

    @property
    def tie_tol(self) -> float:
        return TAU_TIE * self.s_scale

    def is_tie(self, u: float, v: float, what: str = "") -> bool:
        d = abs(u - v)
        if d <= self.tie_tol:
            return True
        if d <= TAU_NEAR_TIE * self.s_scale:
            warnings.warn(f"near-tie in S values ({d:.3e}) {what}; "
                          "asymptotic classification may be unstable", RuntimeWarning,
                          stacklevel=3)
        return False

    @property
    def zero_tilt(self) -> bool:
        return abs(self.tilt) <= self.tie_tol

    # --- global indexing -------------------------------------------------
    def min_location(self, g: int) -> float:
        q, k = divmod(int(g), self.N)
        return self._min_loc[k] + q

    def min_S(self, g: int) -> float:
        q, k = divmod(int(g), self.N)
        return self.minima[k].S + q * self.tilt

    def min_point(self, g: int) -> CriticalPoint:
        return self.minima[int(g) % self.N]

    def saddle_location(self, j: int) -> float:
        q, k = divmod(int(j), self.N)
        return self._sad_loc[k] + q

    def saddle_S(self, j: int) -> float:
        q, k = divmod(int(j), self.N)
        return self.saddles[k].S + q * self.tilt

    def saddle_point(self, j: int) -> CriticalPoint:
        return self.saddles[int(j) % self.N]

    def pi_min(self, g: int) -> float:
        """Gaussian weight ``sqrt(2 pi / (-b'(m) a(m)))`` of a minimum."""
        p = self.min_point(g)
        return math.sqrt(TWO_PI / (-p.b_prime * p.a))

    def saddle_weight(self, j: int) -> float:
        """``sqrt(2 pi / (-S''(sigma)))``."""
        return math.sqrt(TWO_PI / (-self.saddle_point(j).curvature))

    def saddles_between(self, lo: float, hi: float) -> list[int]:
        """Global indices of saddles strictly inside ``(lo, hi)``."""
        if not hi > lo:
            return []
        base = self._sad_loc[0]
        j0 = (math.floor(lo - base) - 1) * self.N
        j1 = (math.floor(hi - base) + 2) * self.N
        return [j for j in range(j0, j1) if lo < self.saddle_location(j) < hi]

    def minima_between(self, lo: float, hi: float, closed: bool = True) -> list[int]:
        base = self._min_loc[0]
        g0 = (math.floor(lo - base) - 1) * self.N
        g1 = (math.floor(hi - base) + 2) * self.N
        if closed:
            return [g for g in range(g0, g1) if lo <= self.min_location(g) <= hi]
        return [g for g in range(g0, g1) if lo < self.min_location(g) < hi]

    def basin(self, x: float) -> int:
        """Global index ``k`` with ``sigma_k <= x < sigma_{k+1}``."""
        base = self._sad_loc[0]
        q = math.floor(x - base)
        y = x - q
        k = int(np.searchsorted(self._sad_loc, y, side="right")) - 1
        return k + q * self.N

    def S(self, x):
        """Potential with exact cached values at critical points."""
        return self.spec.S(x)

    def S_at(self, x: float) -> float:
        x = float(x)
        for getter, locs in ((self.min_S, self._min_loc), (self.saddle_S, self._sad_loc)):
            q = math.floor(x - self.shift)
            hit = np.nonzero(np.abs(locs + q - x) < 1e-12)[0]
            if hit.size:
                return getter(int(hit[0]) + q * self.N)
        return float(self.spec.S(x))

    def critical_rows(self):
        """``(kind, location, S, S'')`` rows in window order."""
        rows = []
        for s, m in zip(self.saddles, self.minima):
            rows.append(("saddle", s.location, s.S, s.curvature))
            rows.append(("min", m.location, m.S, m.curvature))
        return rows


def _bisect_roots(f, lo: np.ndarray, hi: np.ndarray, xtol: float) -> np.ndarray:
    flo = f(lo)
    while np.max(hi - lo, initial=0.0) >= xtol:
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        left = np.sign(fm) == np.sign(flo)
        lo = np.where(left, mid, lo)
        flo = np.where(left, fm, flo)
        hi = np.where(left, hi, mid)
        if np.all(hi - lo <= np.spacing(np.abs(lo)) * 4):
            break
    return 0.5 * (lo + hi)


def find_equilibria(spec: CoefficientSpec) -> Landscape:
    """Locate and classify all zeros of ``b`` in one period."""
    n = spec.scan_size
    x = np.arange(n + 1) / n
    bx = spec.b(x)
    scale = max(np.max(np.abs(bx)), 1e-300)

    exact = np.nonzero(bx[:-1] == 0.0)[0]
    change = np.nonzero(bx[:-1] * bx[1:] < 0.0)[0]
    roots = [x[exact]]
    if change.size:
        lo, hi = x[change].copy(), x[change + 1].copy()
        r = _bisect_roots(spec.b, lo, hi, ROOT_XTOL)
        # one guarded Newton step takes the bracket midpoint to full precision
        d = spec.db(r)
        polished = r - np.where(d != 0, spec.b(r) / np.where(d != 0, d, 1.0), 0.0)
        ok = np.abs(polished - r) <= ROOT_XTOL
        roots.append(np.where(ok, polished, r))
    roots = np.sort(np.concatenate(roots))

    # tangential zeros: local minima of |b| that do not change sign
    absb = np.abs(bx[:-1])
    ext = np.concatenate([absb[-1:], absb, absb[:1]])
    locmin = np.nonzero((ext[1:-1] <= ext[:-2]) & (ext[1:-1] <= ext[2:]))[0]
    for i in locmin:
        if absb[i] > 1e-3 * scale:
            continue
        res = optimize.minimize_scalar(lambda y: abs(float(spec.b(y))),
                                       bounds=(x[i] - 1.0 / n, x[i] + 1.0 / n),
                                       method="bounded", options={"xatol": 1e-13})
        y = float(res.x) % 1.0
        if abs(float(spec.b(y))) <= 1e-10 * scale and abs(float(spec.db(y))) <= TAU_ND:
            raise DegenerateEquilibrium(f"b has a degenerate zero near x={y:.12g}")

    if roots.size == 0:
        raise NoEquilibria("b has no zero in [0, 1)")
    roots = roots % 1.0
    roots = np.unique(np.sort(roots))
    if roots.size > 1 and 1.0 + roots[0] - roots[-1] < 1e-11:
        roots = roots[:-1]

    slopes = spec.db(roots)
    bad = np.nonzero(np.abs(slopes) <= TAU_ND)[0]
    if bad.size:
        raise DegenerateEquilibrium(
            f"|b'| <= {TAU_ND:g} at x={roots[bad[0]]:.12g} (b'={slopes[bad[0]]:.3g})")
    kinds = slopes > 0  # True -> saddle (local max of S)
    if roots.size % 2 or np.any(kinds == np.roll(kinds, 1)):
        raise DegenerateEquilibrium("zeros of b do not alternate between stable and unstable")

    # window [shift, shift + 1) must open with a saddle strictly inside it
    first_saddle = int(np.argmax(kinds))
    shift = 0.0
    if first_saddle != 0 or roots[0] == 0.0:
        prev = roots[first_saddle - 1] - (1.0 if first_saddle == 0 else 0.0)
        shift = 0.5 * (prev + roots[first_saddle])
    locs = np.sort(np.mod(roots - shift, 1.0) + shift)
    if not spec.db(locs[0]) > 0:
        raise DegenerateEquilibrium("could not normalise critical-point ordering")

    tilt = float(potential(spec, 1.0))
    pts = []
    for y in locs:
        a = float(spec.a(y))
        bp = float(spec.db(y))
        pts.append(CriticalPoint(float(y), potential(spec, y), -bp / a, bp, a))
    return Landscape(spec, tuple(pts[1::2]), tuple(pts[0::2]), tilt, shift)


def barrier(land: Landscape, A: Sequence[float], B: Sequence[float]) -> float:
    """Highest value of ``S`` on the gap between two well-ordered point sets."""
    A = np.atleast_1d(np.asarray(A, dtype=float))
    B = np.atleast_1d(np.asarray(B, dtype=float))
    if A.size == 0 or B.size == 0:
        raise NotOrdered("empty set")
    if A.max() < B.min():
        lo, hi = float(A.max()), float(B.min())
    elif B.max() < A.min():
        lo, hi = float(B.max()), float(A.min())
    else:
        raise NotOrdered("sets interleave")
    vals = [land.S_at(lo), land.S_at(hi)]
    vals += [land.saddle_S(j) for j in land.saddles_between(lo, hi)]
    return max(vals)


def barrier_minima(land: Landscape, g_left: int, g_right: int) -> float:
    """Barrier between minima ``m_{g_left} < m_{g_right}`` from cached saddle values."""
    if g_right <= g_left:
        raise NotOrdered("expected g_left < g_right")
    return max(land.saddle_S(j) for j in range(g_left + 1, g_right + 1))


@dataclass(frozen=True)
class WellPartition:
    """Wells ``E(m) = N(m, r0) & B(m, r0)`` for the minima of one period."""

    land: Landscape
    r0: float
    intervals: tuple[tuple[float, float], ...]

    def well(self, g: int) -> tuple[float, float]:
        q, k = divmod(int(g), self.land.N)
        lo, hi = self.intervals[k]
        return lo + q, hi + q

    def locate(self, x) -> np.ndarray:
        """Global minimum index of the well containing each ``x`` (or a huge
        negative sentinel when ``x`` lies in no well)."""
        x = np.asarray(x, dtype=float)
        out = np.full(x.shape, np.iinfo(np.int64).min, dtype=np.int64)
        q = np.floor(x - self.land.shift).astype(np.int64)
        for dq in (-1, 0, 1):
            for k, (lo, hi) in enumerate(self.intervals):
                qq = q + dq
                inside = (x > lo + qq) & (x < hi + qq)
                out = np.where(inside, k + qq * self.land.N, out)
        return out

    def contains(self, x, minima: Sequence[int]) -> np.ndarray:
        loc = self.locate(x)
        return np.isin(loc, np.asarray(list(minima), dtype=np.int64))


def wells(land: Landscape, hier, r0: float) -> WellPartition:
    """Build the wells around every minimum for an energy radius ``r0``."""
    h1 = hier.levels[0].H if hasattr(hier, "levels") else float(hier)
    if not 0.0 < r0 < h1:
        raise RadiusTooLarge(f"need 0 < r0 < h_1 = {h1:.6g}, got {r0:.6g}")
    out = []
    for k, m in enumerate(land.minima):
        target = m.S + r0
        f = lambda y: float(land.spec.S(y)) - target  # noqa: E731
        left = land.saddle_location(k)
        right = land.saddle_location(k + 1)
        xl = optimize.brentq(f, left, m.location, xtol=1e-14)
        xr = optimize.brentq(f, m.location, right, xtol=1e-14)
        out.append((max(xl, m.location - r0), min(xr, m.location + r0)))
    return WellPartition(land, float(r0), tuple(out))
