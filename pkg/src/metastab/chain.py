"""Finite numerics for the reduced nearest-neighbour chains.

A level is duck-typed here: anything with ``u`` and ``rate(k, step)``
(``step`` in {+1, -1}, ``u``-periodic in ``k``) works.  States are
integers; state ``k`` is the set ``M_q(k)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import networkx as nx
import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.stats import poisson

from .errors import SingularSystem, WindowOverflow

MAX_HALF_WIDTH = 20_000


@dataclass(frozen=True)
class ClassStructure:
    """Closed irreducible classes, one representative per period.

    Each class is a tuple of consecutive states whose smallest element
    lies in ``[0, u)``; ``transients`` lists the remaining states of
    ``[0, u)``.
    """

    classes: tuple[tuple[int, ...], ...]
    transients: tuple[int, ...]

    @property
    def n(self) -> int:
        return len(self.classes)


def closed_classes(level) -> ClassStructure:
    """Closed irreducible classes of a periodic nearest-neighbour chain.

    Strongly connected components are computed on states ``[-u, 2u)`` with
    every edge leaving that range sent to a sink node; components with no
    outgoing edge are closed.  A closed class holds at most ``u`` states
    (otherwise periodicity makes the whole line one class), so every
    representative lies inside the range.
    """
    u = level.u
    g = nx.DiGraph()
    sink = "out"
    g.add_node(sink)
    for k in range(-u, 2 * u):
        g.add_node(k)
        for step in (1, -1):
            if level.rate(k, step) > 0:
                t = k + step
                g.add_edge(k, t if -u <= t < 2 * u else sink)
    cond = nx.condensation(g)
    classes = []
    for c in cond.nodes:
        comp = cond.nodes[c]["members"]
        if sink in comp or cond.out_degree(c) > 0:
            continue
        states = sorted(comp)
        if 0 <= states[0] < u:
            classes.append(tuple(states))
    classes.sort()
    recurrent = {s % u for cls in classes for s in cls}
    transients = tuple(k for k in range(u) if k not in recurrent)
    return ClassStructure(tuple(classes), transients)


def _class_interval(struct: ClassStructure, u: int, k: int):
    for cls in struct.classes:
        t = (k - cls[0]) // u
        if cls[0] + t * u <= k <= cls[-1] + t * u:
            return cls[0] + t * u, cls[-1] + t * u
    return None


# --- rings ---------------------------------------------------------------

def _ring_matrix(level, size: int) -> np.ndarray:
    G = np.zeros((size, size))
    for i in range(size):
        for step in (1, -1):
            j = (i + step) % size
            if j != i:
                G[i, j] += level.rate(i, step)
    G[np.diag_indices(size)] = -G.sum(axis=1)
    return G


@dataclass(frozen=True)
class ReducedChainRing:
    q: int
    ell: int
    u: int
    generator: np.ndarray
    stationary: np.ndarray

    @property
    def size(self) -> int:
        return self.ell * self.u

    def balance_residual(self) -> float:
        """``max |pi G|``, zero for a stationary law."""
        return float(np.max(np.abs(self.stationary @ self.generator)))

    def detailed_balance_residual(self) -> float:
        """``max_i |pi(i) R(i,i+1) - pi(i+1) R(i+1,i)|`` around the ring."""
        n = self.size
        if n == 1:
            return 0.0
        pi, G = self.stationary, self.generator
        if n == 2:
            return float(abs(pi[0] * G[0, 1] - pi[1] * G[1, 0]))
        i = np.arange(n)
        j = (i + 1) % n
        return float(np.max(np.abs(pi[i] * G[i, j] - pi[j] * G[j, i])))


def reversible_weights(level, ell: int) -> np.ndarray:
    """Stationary law of the zero-tilt ring: ``pi(M(j)) / (ell * sum_i pi(M(i)))``."""
    w = np.tile(np.asarray([level.weight(k) for k in range(level.u)], float), ell)
    return w / w.sum()


def ring_generator(level, ell: int = 1, reversible: bool = False) -> ReducedChainRing:
    """Chain of ``level`` on ``ell * u`` states with indices taken modulo.

    With ``reversible`` (zero tilt on the final level) the stationary law is
    the explicit weight formula; otherwise it is the normalised null vector
    of the transposed generator.
    """
    if ell < 1:
        raise ValueError("ell must be >= 1")
    size = ell * level.u
    G = _ring_matrix(level, size)
    if reversible:
        pi = reversible_weights(level, ell)
    else:
        ns = scipy.linalg.null_space(G.T, rcond=1e-12)
        if ns.shape[1] != 1:
            raise SingularSystem(f"stationary null space has dimension {ns.shape[1]}")
        v = ns[:, 0]
        v = v / v.sum()
        if np.any(v < -1e-12):
            raise SingularSystem("stationary vector has mixed signs")
        pi = np.clip(v, 0.0, None)
        pi /= pi.sum()
    return ReducedChainRing(getattr(level, "q", 0), ell, level.u, G, pi)


# --- transition probabilities ---------------------------------------------

@dataclass(frozen=True)
class TransitionWindow:
    """Rows ``p_t(center, .)`` for several ``t`` over the listed states.

    On a ring ``states`` are ring labels ``0 .. ell*u - 1``; otherwise they
    are the integer states ``center - W .. center + W``.
    """

    q: int
    center: int
    half_width: int
    states: np.ndarray
    times: np.ndarray
    probs: np.ndarray
    bound: float
    ring: bool

    def row(self, i: int) -> dict[int, float]:
        return {int(s): float(p) for s, p in zip(self.states, self.probs[i]) if p != 0.0}


def _poisson_terms(rate_t: float, tol: float) -> int:
    """Smallest ``n`` with ``P(Poisson(rate_t) > n) < tol``."""
    if rate_t == 0:
        return 0
    n = int(rate_t + 10.0 * np.sqrt(rate_t) + 10)
    while poisson.sf(n, rate_t) >= tol:
        n *= 2
    lo, hi = 0, n
    while lo < hi:
        mid = (lo + hi) // 2
        if poisson.sf(mid, rate_t) < tol:
            hi = mid
        else:
            lo = mid + 1
    return lo


def _uniformize(Q: sp.csr_matrix, v0: np.ndarray, times: np.ndarray, lam: float, tol: float):
    """``v0 exp(Q t)`` for each t by uniformization; returns rows and series tail."""
    out = np.zeros((len(times), len(v0)))
    if lam == 0 or len(times) == 0:
        out[:] = v0
        return out, 0.0
    P = (sp.identity(Q.shape[0], format="csr") + Q / lam).T.tocsr()
    nmax = [_poisson_terms(lam * t, tol) for t in times]
    v = v0.copy()
    tails = [float(poisson.sf(n, lam * t)) if t > 0 else 0.0 for n, t in zip(nmax, times)]
    for n in range(max(nmax) + 1):
        for i, t in enumerate(times):
            if n <= nmax[i]:
                out[i] += poisson.pmf(n, lam * t) * v if t > 0 else (v if n == 0 else 0.0)
        v = P @ v
    return out, max(tails)


def transition_probabilities(level, start: int, times: Sequence[float], tol: float = 1e-12,
                             ell: int | None = None,
                             max_half_width: int = MAX_HALF_WIDTH) -> TransitionWindow:
    """``p_t(start, .)`` by uniformization.

    With ``ell`` the chain runs on the ring of ``ell * u`` states (exact up
    to the series tail).  Otherwise it runs on ``start - W .. start + W``
    with mass leaving the window discarded; ``W`` is the smallest
    half-width for which leaving before ``max(times)`` has probability
    below ``tol / 2`` (Poisson bound on the number of jumps).
    """
    times = np.asarray(times, dtype=float)
    if np.any(times < 0) or not np.all(np.isfinite(times)):
        raise ValueError("times must be finite and >= 0")
    u = level.u
    lam = max(level.rate(k, 1) + level.rate(k, -1) for k in range(u))
    q = getattr(level, "q", 0)
    if ell is not None:
        size = ell * u
        Q = sp.csr_matrix(_ring_matrix(level, size))
        v0 = np.zeros(size)
        v0[start % size] = 1.0
        probs, tail = _uniformize(Q, v0, times, lam, tol / 2)
        return TransitionWindow(q, start % size, size, np.arange(size), times, probs, tail, True)

    tmax = float(times.max()) if len(times) else 0.0
    W = 0 if lam == 0 else _poisson_terms(lam * tmax, tol / 2)
    if W > max_half_width:
        raise WindowOverflow(f"half-width {W} exceeds cap {max_half_width}")
    escape = float(poisson.sf(W, lam * tmax)) if lam > 0 and tmax > 0 else 0.0
    states = np.arange(start - W, start + W + 1)
    size = len(states)
    rows, cols, vals = [], [], []
    for i, k in enumerate(states):
        out = 0.0
        for step in (1, -1):
            r = level.rate(int(k), step)
            out += r
            if r > 0 and 0 <= i + step < size:
                rows.append(i)
                cols.append(i + step)
                vals.append(r)
        rows.append(i)
        cols.append(i)
        vals.append(-out)
    Q = sp.csr_matrix((vals, (rows, cols)), shape=(size, size))
    v0 = np.zeros(size)
    v0[W] = 1.0
    probs, tail = _uniformize(Q, v0, times, lam, tol / 2)
    return TransitionWindow(q, start, W, states, times, probs, escape + tail, False)


# --- reduced resolvent -----------------------------------------------------

@dataclass(frozen=True)
class ResolventSolution:
    states: np.ndarray
    values: np.ndarray
    residual: float
    ring: bool = False

    def __call__(self, k: int) -> float:
        if self.ring:
            return float(self.values[int(k) % len(self.values)])
        return float(self.values[int(k) - int(self.states[0])])


def _state_function(g) -> Callable[[int], float]:
    if callable(g):
        return lambda k: float(g(int(k)))
    arr = np.asarray(g, dtype=float)
    return lambda k: float(arr[int(k) % len(arr)])


def solve_reduced_resolvent(level, lam: float, g, states: Sequence[int] | None = None,
                            ell: int | None = None,
                            structure: ClassStructure | None = None) -> ResolventSolution:
    """Solve ``(lam - L) f = g`` for the chain of ``level``.

    ``g`` is a callable on integer states or a sequence read periodically.
    With ``ell`` (or when the level has no closed class) the equation is
    posed on the ring of ``ell * u`` states, so ``g`` must have period
    ``ell * u``.  Otherwise the requested ``states`` are enlarged to the
    closed classes that enclose them; the chain cannot leave that range,
    so the restricted system is exact.
    """
    if not lam > 0:
        raise ValueError("lam must be positive")
    gf = _state_function(g)
    struct = structure if structure is not None else closed_classes(level)
    u = level.u
    ring = ell is not None or struct.n == 0
    if ring:
        size = (ell or 1) * u
        A = lam * np.eye(size) - _ring_matrix(level, size)
        idx = np.arange(size)
    else:
        req = list(range(u)) if states is None else [int(s) for s in states]
        lo, hi = min(req), max(req)
        while _class_interval(struct, u, lo) is None:
            lo -= 1
        while _class_interval(struct, u, hi) is None:
            hi += 1
        lo = _class_interval(struct, u, lo)[0]
        hi = _class_interval(struct, u, hi)[1]
        idx = np.arange(lo, hi + 1)
        size = len(idx)
        A = lam * np.eye(size)
        for i, k in enumerate(idx):
            for step in (1, -1):
                r = level.rate(int(k), step)
                if r > 0:
                    if not 0 <= i + step < size:
                        raise SingularSystem("chain leaves the enclosing classes")
                    A[i, i + step] -= r
                    A[i, i] += r
    rhs = np.array([gf(k) for k in idx])
    try:
        f = scipy.linalg.solve(A, rhs)
    except scipy.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc
    residual = float(np.max(np.abs(A @ f - rhs))) if size else 0.0
    return ResolventSolution(idx, f, residual, ring)
