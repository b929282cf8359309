"""Recursive construction of the metastable hierarchy.

Level ``q`` groups the minima of ``S`` into sets ``M_q(k)``, ``k`` in Z,
with a nearest-neighbour Markov chain on them.  Only one period of sets
(``k = 0 .. u_q - 1``) is stored; ``M_q(k + u_q) = M_q(k) + 1``.

Minima are referred to by global index ``g`` (``m_g = m_{g mod N} + g // N``),
so a set is a sorted tuple of integers.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .chain import ClassStructure, closed_classes
from .errors import LevelOutOfRange, PostulateViolation
from .landscape import Landscape, barrier_minima


@dataclass(frozen=True)
class HierarchyLevel:
    q: int
    N: int
    tilt: float
    sets: tuple[tuple[int, ...], ...]
    j_anchor: int
    depth: np.ndarray
    h_plus: np.ndarray
    h_minus: np.ndarray
    H: float
    pi: np.ndarray
    sigma: np.ndarray  # sigma_q(k, k+1)
    saddle_sets: tuple[tuple[int, ...], ...]  # W_{k,k+1}, global saddle indices
    rate_right: np.ndarray
    rate_left: np.ndarray
    transient: tuple[int, ...]  # minima (mod N) in T_q
    structure: ClassStructure = field(default=None, compare=False)

    @property
    def u(self) -> int:
        return len(self.sets)

    @property
    def n(self) -> int:
        return self.structure.n

    def members(self, k: int) -> tuple[int, ...]:
        q, r = divmod(int(k), self.u)
        return tuple(g + q * self.N for g in self.sets[r])

    def set_depth(self, k: int) -> float:
        q, r = divmod(int(k), self.u)
        return float(self.depth[r] + q * self.tilt)

    def weight(self, k: int) -> float:
        return float(self.pi[int(k) % self.u])

    def sigma_between(self, k: int) -> float:
        """``sigma_q(k, k+1)``."""
        return float(self.sigma[int(k) % self.u])

    def rate(self, k: int, step: int) -> float:
        if step == 1:
            return float(self.rate_right[int(k) % self.u])
        if step == -1:
            return float(self.rate_left[int(k) % self.u])
        return 0.0

    def saddles(self, k: int) -> tuple[int, ...]:
        """Global indices of saddles in ``W_{k,k+1}``."""
        q, r = divmod(int(k), self.u)
        return tuple(j + q * self.N for j in self.saddle_sets[r])

    def set_index_of(self, g: int) -> int | None:
        """Set index ``k`` with ``m_g`` in ``M_q(k)``, or None if transient."""
        q, r = divmod(int(g), self.N)
        for k, s in enumerate(self.sets):
            for h in s:
                qq, rr = divmod(h, self.N)
                if rr == r:
                    return k + (q - qq) * self.u
        return None


@dataclass(frozen=True)
class Hierarchy:
    land: Landscape
    levels: tuple[HierarchyLevel, ...]

    @property
    def Q(self) -> int:
        return len(self.levels)

    def level(self, p: int) -> HierarchyLevel:
        if not 1 <= p <= self.Q:
            raise LevelOutOfRange(f"level {p} outside 1..{self.Q}")
        return self.levels[p - 1]

    @property
    def final_reversible(self) -> bool:
        """Zero tilt: the last chain is reversible (both rates positive everywhere)."""
        return self.land.zero_tilt


# --- level construction --------------------------------------------------

def _set_barrier(land: Landscape, left: tuple[int, ...], right: tuple[int, ...]) -> float:
    return barrier_minima(land, max(left), min(right))


def _level_from_sets(land: Landscape, q: int, sets, j_anchor: int, transient) -> HierarchyLevel:
    N = land.N
    u = len(sets)

    def members(k):
        qq, r = divmod(k, u)
        return tuple(g + qq * N for g in sets[r])

    depth = np.empty(u)
    for k in range(u):
        vals = [land.min_S(g) for g in sets[k]]
        for v in vals[1:]:
            if not land.is_tie(v, vals[0], f"(depth of set {k}, level {q})"):
                raise PostulateViolation("P4", f"level {q}: minima of set {k} differ in depth")
        depth[k] = vals[0]

    lam_right = np.array([_set_barrier(land, members(k), members(k + 1)) for k in range(u)])
    lam_left = np.array([_set_barrier(land, members(k - 1), members(k)) for k in range(u)])
    h_plus = lam_right - depth
    h_minus = lam_left - depth
    H = float(min(h_plus.min(), h_minus.min()))

    saddle_sets = []
    for k in range(u):
        lo, hi = max(members(k)), min(members(k + 1))
        w = tuple(j for j in range(lo + 1, hi + 1)
                  if land.is_tie(land.saddle_S(j), lam_right[k], "(saddle set)"))
        saddle_sets.append(w)
    sigma = np.array([sum(land.saddle_weight(j) for j in w) for w in saddle_sets])
    pi = np.array([sum(land.pi_min(g) for g in s) for s in sets])

    right = np.array([land.is_tie(h_plus[k], H, "(right escape height)") for k in range(u)])
    left = np.array([land.is_tie(h_minus[k], H, "(left escape height)") for k in range(u)])
    rate_right = np.where(right, 1.0 / (pi * sigma), 0.0)
    rate_left = np.where(left, 1.0 / (pi * np.roll(sigma, 1)), 0.0)

    level = HierarchyLevel(q=q, N=N, tilt=land.tilt, sets=tuple(tuple(s) for s in sets),
                           j_anchor=j_anchor, depth=depth, h_plus=h_plus, h_minus=h_minus,
                           H=H, pi=pi, sigma=sigma, saddle_sets=tuple(saddle_sets),
                           rate_right=rate_right, rate_left=rate_left,
                           transient=tuple(sorted(transient)))
    object.__setattr__(level, "structure", closed_classes(level))
    return level


def build_level1(land: Landscape) -> HierarchyLevel:
    """Singleton sets, one per minimum, with Eyring-Kramers rates."""
    return _level_from_sets(land, 1, [(k,) for k in range(land.N)], 0, ())


def next_level(level: HierarchyLevel, land: Landscape) -> HierarchyLevel | None:
    """Merge the closed classes of ``level`` into the sets of the next level.

    Returns None when the chain has no closed class up to translation
    (``n = 0``), which ends the recursion.
    """
    st = level.structure
    if st.n == 0:
        return None
    N = land.N
    groups = [tuple(sorted(itertools.chain.from_iterable(level.members(k) for k in cls)))
              for cls in st.classes]
    j_anchor = min(g % N for grp in groups for g in grp)
    candidates = []
    for grp in groups:
        base = (grp[0] // N)
        for t in range(-base - 2, -base + 3):
            candidates.append(tuple(g + t * N for g in grp))
    candidates.sort(key=lambda s: s[0])
    start = next(i for i, s in enumerate(candidates) if j_anchor in s)
    new_sets = candidates[start:start + len(groups)]
    if len(new_sets) != len(groups):
        raise PostulateViolation("P2", "could not enumerate next-level sets")

    transient = set(level.transient)
    for k in st.transients:
        transient.update(g % N for g in level.members(k))
    return _level_from_sets(land, level.q + 1, new_sets, j_anchor, transient)


def build_hierarchy(land: Landscape) -> Hierarchy:
    levels = [build_level1(land)]
    while True:
        nxt = next_level(levels[-1], land)
        if nxt is None:
            break
        if nxt.u >= levels[-1].u:
            raise PostulateViolation("P10", "number of classes did not decrease")
        levels.append(nxt)
    return Hierarchy(land, tuple(levels))


def time_scale(h: Hierarchy, p: int, eps: float) -> float:
    """``theta_p = exp(h_p / eps)``; may overflow to inf, see ``log_time_scale``."""
    with np.errstate(over="ignore"):
        return float(np.exp(log_time_scale(h, p, eps)))


def log_time_scale(h: Hierarchy, p: int, eps: float) -> float:
    if not eps > 0:
        raise ValueError("eps must be positive")
    return h.level(p).H / eps


# --- postulate verification ----------------------------------------------

@dataclass
class PostulateReport:
    entries: list = field(default_factory=list)  # (level, id, passed, detail)

    def add(self, level, pid, ok, detail=""):
        self.entries.append((level, pid, bool(ok), detail))

    @property
    def passed(self) -> bool:
        return all(ok for _, _, ok, _ in self.entries)

    def failures(self):
        return [e for e in self.entries if not e[2]]

    def status(self, pid: str, level: int | None = None) -> bool:
        sel = [ok for lv, p, ok, _ in self.entries if p == pid and (level is None or lv == level)]
        return all(sel)

    def as_dict(self):
        return {"passed": self.passed,
                "checks": [{"level": lv, "postulate": p, "passed": ok, "detail": d}
                           for lv, p, ok, d in self.entries]}


def _check(report: PostulateReport, level: int, pid: str, fn: Callable[[], tuple[bool, str]]):
    try:
        ok, detail = fn()
    except Exception as exc:  # a crash inside a check is itself a failure
        ok, detail = False, f"{type(exc).__name__}: {exc}"
    report.add(level, pid, ok, detail)


def _rates_from_scratch(land: Landscape, lv: HierarchyLevel, k: int):
    """Rates of set ``k`` recomputed from the landscape (used for P7/P9)."""
    dk = lv.set_depth(k)
    up = _set_barrier(land, lv.members(k), lv.members(k + 1)) - dk
    down = _set_barrier(land, lv.members(k - 1), lv.members(k)) - dk
    pi = sum(land.pi_min(g) for g in lv.members(k))

    def sig(a, b):
        lam = _set_barrier(land, a, b)
        return sum(land.saddle_weight(j) for j in range(max(a) + 1, min(b) + 1)
                   if land.is_tie(land.saddle_S(j), lam))

    r = 1.0 / (pi * sig(lv.members(k), lv.members(k + 1))) if land.is_tie(up, lv.H) else 0.0
    l = 1.0 / (pi * sig(lv.members(k - 1), lv.members(k))) if land.is_tie(down, lv.H) else 0.0
    return r, l, up, down


def verify_postulates(h: Hierarchy) -> PostulateReport:
    """Check P1-P10 on every level, plus the cross-level monotonicity and
    last-layer claims.  Never raises; failures are recorded in the report."""
    land = h.land
    N = land.N
    tol = land.tie_tol
    rep = PostulateReport()
    prev_H, prev_u = None, N

    for lv in h.levels:
        q, u = lv.q, lv.u

        def p1(lv=lv):
            bad = [k for k in range(u) if not lv.sets[k]]
            trans = set(lv.transient)
            clash = [g for s in lv.sets for g in s if g % N in trans]
            return not bad and not clash, f"empty={bad} transient_overlap={clash}"

        def p2(lv=lv):
            locs = [(land.min_location(min(lv.members(k))), land.min_location(max(lv.members(k))))
                    for k in range(u + 1)]
            ordered = all(locs[k][1] < locs[k + 1][0] for k in range(u))
            residues = [g % N for s in lv.sets for g in s]
            j = min(residues)
            return ordered and j == lv.j_anchor and j in lv.members(0), \
                f"ordered={ordered} j={j} stored={lv.j_anchor}"

        def p3(lv=lv):
            residues = [g % N for s in lv.sets for g in s]
            distinct = len(residues) == len(set(residues))
            wrap = max(lv.members(u - 1)) < min(lv.members(u))
            same = lv.members(u) == tuple(g + N for g in lv.members(0))
            return distinct and wrap and same, f"distinct={distinct} wrap={wrap}"

        def p4(lv=lv):
            off = 0.0
            for k in range(u):
                for g in lv.sets[k]:
                    off = max(off, abs(land.min_S(g) - lv.depth[k]))
            return off <= tol, f"max depth deviation {off:.3e}"

        def p5(lv=lv, prev_H=prev_H):
            if q == 1:
                return True, "empty at level 1"
            worst = -math.inf
            for k in range(u):
                s = lv.sets[k]
                for a, b in itertools.combinations(s, 2):
                    worst = max(worst, barrier_minima(land, a, b) - lv.depth[k] - prev_H)
            return worst <= tol, f"max excess over h_(q-1): {worst:.3e}"

        def p6(lv=lv):
            worst = math.inf
            for k in range(u):
                d = lv.set_depth(k)
                up = _set_barrier(land, lv.members(k), lv.members(k + 1)) - d
                down = _set_barrier(land, lv.members(k - 1), lv.members(k)) - d
                worst = min(worst, up - lv.H, down - lv.H)
            return worst >= -tol, f"min margin {worst:.3e}"

        def p7(lv=lv):
            bad = []
            for k in range(u):
                _, _, up, down = _rates_from_scratch(land, lv, k)
                if (lv.rate_right[k] > 0) != (abs(up - lv.H) <= tol):
                    bad.append((k, +1))
                if (lv.rate_left[k] > 0) != (abs(down - lv.H) <= tol):
                    bad.append((k, -1))
            return not bad, f"mismatched (set, direction): {bad}"

        def p8(lv=lv):
            bad = []
            for k in range(u):
                for a in (1, -1):
                    if lv.rate(k, a) > 0:
                        dk, dn = lv.set_depth(k), lv.set_depth(k + a)
                        if dk < dn - tol:
                            bad.append((k, a, "uphill"))
                        elif lv.rate(k + a, -a) == 0 and not dk > dn + tol:
                            bad.append((k, a, "not strict"))
            return not bad, f"violations: {bad}"

        def p9(lv=lv):
            worst = 0.0
            for k in range(u):
                r, l, _, _ = _rates_from_scratch(land, lv, k + u)
                for stored, fresh in ((lv.rate_right[k], r), (lv.rate_left[k], l)):
                    worst = max(worst, abs(stored - fresh) / max(abs(stored), 1e-300)
                                if stored or fresh else 0.0)
            return worst <= 1e-9, f"max relative mismatch {worst:.3e}"

        def p10(lv=lv, prev_u=prev_u):
            return lv.n < u and u <= prev_u, f"n_q={lv.n} u_q={u} n_(q-1)={prev_u}"

        for pid, fn in (("P1", p1), ("P2", p2), ("P3", p3), ("P4", p4), ("P5", p5),
                        ("P6", p6), ("P7", p7), ("P8", p8), ("P9", p9), ("P10", p10)):
            _check(rep, q, pid, fn)

        def weights(lv=lv):
            worst = max(abs(lv.pi[k] - sum(land.pi_min(g) for g in lv.sets[k])) for k in range(u))
            return worst <= 1e-12 * max(lv.pi), f"max deviation {worst:.3e}"

        def partition(lv=lv):
            rec = [g % N for s in lv.sets for g in s]
            cover = sorted(rec + list(lv.transient))
            return cover == list(range(N)), f"recurrent={sorted(rec)} transient={lv.transient}"

        _check(rep, q, "pi-additivity", weights)
        _check(rep, q, "partition", partition)
        if prev_H is not None:
            rep.add(q, "h-increasing", lv.H > prev_H + tol, f"h_(q-1)={prev_H:.12g} h_q={lv.H:.12g}")
        if q > 1:
            rep.add(q, "u-decreasing", u < prev_u, f"u_(q-1)={prev_u} u_q={u}")
        prev_H, prev_u = lv.H, u

    last = h.levels[-1]
    rep.add(last.q, "termination", last.n == 0, f"n_Q={last.n}")
    rep.add(last.q, "depth<=N", h.Q <= N, f"Q={h.Q} N={N}")

    def claims():
        u = last.u
        right = [bool(last.rate_right[k] > 0) for k in range(u)]
        left = [bool(last.rate_left[k] > 0) for k in range(u)]
        if h.final_reversible:
            return all(right) and all(left), f"zero tilt: right={right} left={left}"
        if land.tilt < 0:
            return (not all(left)) and all(right), f"S(1)<S(0): right={right} left={left}"
        return (not all(right)) and all(left), f"S(1)>S(0): right={right} left={left}"

    _check(rep, last.q, "last-layer", claims)
    return rep
