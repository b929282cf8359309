"""Independent oracles: Euler-Maruyama Monte Carlo and finite differences.

Nothing here uses barrier or hierarchy logic except where an observable is
defined through it (wells and set indices in ``fd_resolvent`` and
``empirical_fdd``).

Paths follow ``dX = b dt + sqrt(2 eps a) dW``.  Path ``i`` draws from its
own Philox stream keyed by ``(seed, i)`` (antithetic pairs share one), so
results do not depend on how paths are blocked.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import HorizonTooLong, SingularSystem, UnstableStep, ValidationError
from ._kernels import advance, advance_until_exit, coefficient_arrays
from .landscape import CoefficientSpec, wells

MAX_STEPS = 10_000_000


@dataclass(frozen=True)
class SimConfig:
    eps: float
    dt: float
    T: float
    n_paths: int
    seed: int = 0
    antithetic: bool = False
    allow_unstable: bool = False

    def __post_init__(self):
        if not self.eps >= 0 or not self.dt > 0 or not self.T >= 0:
            raise ValidationError("need eps >= 0, dt > 0, T >= 0")
        if self.n_paths < 1:
            raise ValidationError("n_paths must be positive")
        if self.seed < 0:
            raise ValidationError("seed must be non-negative")
        if self.antithetic and self.n_paths % 2:
            raise ValidationError("antithetic sampling needs an even path count")

    @property
    def n_steps(self) -> int:
        return int(math.ceil(self.T / self.dt - 1e-9))

    def max_stable_dt(self, spec: CoefficientSpec) -> float:
        """``min(eps, 0.01) / (4 sup|b'|)``, with 0.01 in place of ``eps`` when ``eps = 0``."""
        e = min(self.eps, 0.01) if self.eps > 0 else 0.01
        return e / (4.0 * max(spec.sup_abs_db, 1e-300))

    def check(self, spec: CoefficientSpec) -> None:
        if self.dt > self.max_stable_dt(spec) and not self.allow_unstable:
            raise UnstableStep(f"dt={self.dt:.3g} exceeds {self.max_stable_dt(spec):.3g}")
        if self.n_steps > MAX_STEPS:
            raise HorizonTooLong(f"{self.n_steps} steps exceed {MAX_STEPS}; use the FD solver")

    def metadata(self, spec: CoefficientSpec) -> dict:
        d = asdict(self)
        d["n_steps"] = self.n_steps
        d["max_stable_dt"] = self.max_stable_dt(spec)
        return d


def stable_config(spec: CoefficientSpec, eps: float, T: float, n_paths: int, seed: int = 0,
                  antithetic: bool = False) -> SimConfig:
    """Config with the largest admissible step that divides ``T`` evenly."""
    dmax = SimConfig(eps, 1.0, 1.0, 1).max_stable_dt(spec)
    steps = max(1, int(math.ceil(T / dmax))) if T > 0 else 1
    return SimConfig(eps, T / steps if T > 0 else dmax, T, n_paths, seed, antithetic)


# --- random streams ------------------------------------------------------

CHUNK = 1 << 16


def _stream(cfg: SimConfig, i: int):
    """Generator and sign for path ``i``; antithetic pairs share a stream."""
    key = i // 2 if cfg.antithetic else i
    sign = -1.0 if cfg.antithetic and i % 2 else 1.0
    return np.random.Generator(np.random.Philox(key=[cfg.seed, key])), sign


@dataclass(frozen=True)
class PathEnsemble:
    times: np.ndarray
    X: np.ndarray  # shape (n_paths, len(times))
    metadata: dict = field(default_factory=dict)


def sample_paths(spec: CoefficientSpec, cfg: SimConfig, x0: float,
                 times: Sequence[float] | None = None) -> PathEnsemble:
    """Euler-Maruyama paths recorded at ``times`` (snapped to the step grid;
    default ``[T]``)."""
    cfg.check(spec)
    n = cfg.n_steps
    times = np.asarray([cfg.T] if times is None else times, dtype=float)
    if np.any(times < 0) or np.any(times > cfg.T + 1e-12):
        raise ValidationError("record times must lie in [0, T]")
    rec_steps = np.rint(times / cfg.dt).astype(np.int64).clip(0, n)
    order = np.argsort(rec_steps, kind="stable")
    rs = rec_steps[order]
    coeffs = coefficient_arrays(spec)
    X = np.empty((cfg.n_paths, len(times)))
    buf = np.empty(len(times))
    for i in range(cfg.n_paths):
        gen, sign = _stream(cfg, i)
        x = float(x0)
        buf[rs == 0] = x
        done = 0
        while done < n:
            m = min(CHUNK, n - done)
            Z = gen.standard_normal(m) * sign if cfg.eps > 0 else np.zeros(m)
            lo = np.searchsorted(rs, done + 1, side="left")
            hi = np.searchsorted(rs, done + m, side="right")
            out = np.empty(hi - lo)
            x = advance(x, Z, cfg.dt, cfg.eps, rs[lo:hi] - done - 1, out, *coeffs)
            buf[lo:hi] = out
            done += m
        X[i, order] = buf
    meta = cfg.metadata(spec) | {"x0": float(x0), "record_steps": rec_steps.tolist()}
    return PathEnsemble(rec_steps * cfg.dt, X, meta)


def _mean_se(values: np.ndarray, antithetic: bool) -> tuple[float, float]:
    """Mean and standard error, exact for constant samples."""
    v = np.asarray(values, dtype=float)
    if antithetic:
        v = 0.5 * (v[0::2] + v[1::2])
    c = float(v[0])
    d = v - c
    est = c + math.fsum(d) / len(d)
    if len(d) < 2 or not np.any(d):
        return est, 0.0
    return est, float(np.std(d, ddof=1) / math.sqrt(len(d)))


def _eval(u0: Callable, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, float)
    v = np.asarray(u0(x), dtype=float)
    if v.shape != x.shape:
        v = np.array([float(u0(t)) for t in x.ravel()]).reshape(x.shape)
    return v


def mc_parabolic(spec: CoefficientSpec, cfg: SimConfig, u0: Callable, t: float,
                 x: float) -> tuple[float, float]:
    """Feynman-Kac estimate of ``u(t, x) = E_x u0(X_t)`` with its standard error."""
    if not 0 <= t <= cfg.T + 1e-12:
        raise ValidationError("need 0 <= t <= T")
    if t == 0:
        return float(_eval(u0, np.array([x]))[0]), 0.0
    ens = sample_paths(spec, cfg, x, [t])
    return _mean_se(_eval(u0, ens.X[:, 0]), cfg.antithetic)


@dataclass(frozen=True)
class ExitSample:
    p_right: float
    p_right_se: float
    mean_tau: float
    mean_tau_se: float
    unexited: int


def sample_exit(spec: CoefficientSpec, cfg: SimConfig, l: float, r: float,
                x0: float) -> ExitSample:
    """Monte Carlo exit side and exit time from ``(l, r)``.

    Between grid times a path is treated as a Brownian bridge; it is
    declared to have crossed a boundary ``c`` with probability
    ``exp(-2 (c - X_n)(c - X_{n+1}) / (2 eps a dt))``, which removes the
    first-order bias of checking the boundary only at grid times.
    Paths still inside at ``T`` are counted in ``unexited`` and excluded.
    """
    cfg.check(spec)
    if not l < x0 < r:
        raise ValidationError("need l < x0 < r")
    n = cfg.n_steps
    coeffs = coefficient_arrays(spec)
    side = np.zeros(cfg.n_paths)
    tau = np.full(cfg.n_paths, np.nan)
    for i in range(cfg.n_paths):
        gen, sign = _stream(cfg, i)
        x = float(x0)
        done = 0
        size = 1024
        while done < n:
            # a fixed doubling schedule keeps the draws reproducible
            m = min(size, n - done)
            size = min(2 * size, CHUNK)
            Z = gen.standard_normal(m) * sign
            U = gen.random(m)
            x, used, hit = advance_until_exit(x, Z, U, cfg.dt, cfg.eps, l, r, *coeffs)
            done += used
            if hit:
                side[i] = hit
                tau[i] = done * cfg.dt
                break
    ok = side != 0
    if not ok.any():
        return ExitSample(math.nan, math.nan, math.nan, math.nan, int(cfg.n_paths))
    p, p_se = _mean_se((side[ok] > 0).astype(float), False)
    t, t_se = _mean_se(tau[ok], False)
    return ExitSample(p, p_se, t, t_se, int((~ok).sum()))


# --- finite differences ---------------------------------------------------

@dataclass(frozen=True)
class FdGrid:
    """Uniform grid.  Periodic grids cover ``[lo, hi)`` with ``M`` nodes;
    truncated grids cover ``[lo, hi]`` with ``M`` nodes and no-flux ends."""

    lo: float
    hi: float
    M: int
    periodic: bool = True
    periods: int = 1
    steps: int = 1000

    def __post_init__(self):
        if not self.hi > self.lo:
            raise ValidationError("empty grid")
        if self.M < 256 * self.periods:
            raise ValidationError(f"need at least {256 * self.periods} nodes")
        if self.steps < 200:
            raise ValidationError("need at least 200 time steps")

    @classmethod
    def periodic_grid(cls, ell: int = 1, nodes_per_period: int = 2048, shift: float = 0.0,
                      steps: int = 1000) -> "FdGrid":
        return cls(shift, shift + ell, ell * nodes_per_period, True, ell, steps)

    @classmethod
    def truncated(cls, L: float, nodes_per_period: int = 2048, steps: int = 1000) -> "FdGrid":
        periods = int(math.ceil(2 * L))
        return cls(-L, L, periods * nodes_per_period + 1, False, periods, steps)

    @property
    def h(self) -> float:
        return (self.hi - self.lo) / (self.M if self.periodic else self.M - 1)

    @property
    def x(self) -> np.ndarray:
        return self.lo + self.h * np.arange(self.M)

    def coarsened(self) -> "FdGrid":
        M = self.M // 2 if self.periodic else (self.M - 1) // 2 + 1
        return FdGrid(self.lo, self.hi, max(M, 256 * self.periods), self.periodic,
                      self.periods, self.steps)

    def metadata(self) -> dict:
        return asdict(self)


def generator_matrix(spec: CoefficientSpec, grid: FdGrid, eps: float) -> sp.csr_matrix:
    """Conservative discretisation of ``eps a e^{S/eps} (e^{-S/eps} f')'``.

    Off-diagonal entries are positive and rows sum to zero, so the matrix
    generates a Markov chain and the schemes built on it keep the maximum
    principle.
    """
    if not eps > 0:
        raise ValidationError("eps must be positive")
    x = grid.x
    h = grid.h
    S = spec.S(x)
    xh = x + 0.5 * h
    Sh = spec.S(xh)  # S at i + 1/2
    pref = eps * spec.a(x) / h**2
    M = grid.M
    # weight of the flux through i+1/2, seen from node i and node i+1
    w_right = pref * np.exp((S - Sh) / eps)
    S_next = spec.S(x + h)
    w_left_next = eps * spec.a(x + h) / h**2 * np.exp((S_next - Sh) / eps)
    i = np.arange(M)
    if grid.periodic:
        j = (i + 1) % M
        up, down = w_right, w_left_next  # node i -> i+1 and node i+1 -> i
    else:
        i, j = i[:-1], i[1:]
        up, down = w_right[:-1], w_left_next[:-1]
    rows = np.concatenate([i, j])
    cols = np.concatenate([j, i])
    vals = np.concatenate([up, down])
    A = sp.csr_matrix((vals, (rows, cols)), shape=(M, M))
    A = A - sp.diags(np.asarray(A.sum(axis=1)).ravel())
    return A.tocsr()


@dataclass(frozen=True)
class FdSolution:
    x: np.ndarray
    times: np.ndarray
    U: np.ndarray  # shape (len(times), M)
    error: np.ndarray | None  # Richardson estimate of the spatial error per time
    periodic: bool
    period: float
    metadata: dict = field(default_factory=dict)

    def at(self, i: int, xq) -> np.ndarray:
        """Snapshot ``i`` interpolated (linearly) at ``xq``."""
        xq = np.asarray(xq, float)
        if self.periodic:
            return np.interp((xq - self.x[0]) % self.period + self.x[0], self.x, self.U[i],
                             period=self.period)
        return np.interp(xq, self.x, self.U[i])


def _factor(mat):
    try:
        return spla.splu(mat.tocsc())
    except RuntimeError as exc:
        raise SingularSystem(str(exc)) from exc


def _march(A, u, times, steps):
    """Crank-Nicolson with four backward-Euler half steps at the start."""
    I = sp.identity(A.shape[0], format="csc")
    tmax = float(times[-1]) if len(times) else 0.0
    dt_target = tmax / steps if tmax > 0 else 1.0
    out = []
    t = 0.0
    first = True
    cache = {}
    for target in times:
        seg = target - t
        if seg > 0:
            k = max(2 if first else 1, int(math.ceil(seg / dt_target - 1e-9)))
            dt = seg / k
            if first:
                be = cache.setdefault(("be", dt), _factor(I - 0.5 * dt * A))
                for _ in range(4):
                    u = be.solve(u)
                k -= 2
                first = False
            if k > 0:
                key = ("cn", dt)
                if key not in cache:
                    cache[key] = (_factor(I - 0.5 * dt * A), (I + 0.5 * dt * A).tocsr())
                lu, rhs = cache[key]
                for _ in range(k):
                    u = lu.solve(rhs @ u)
            elif k < 0:
                raise ValidationError("first output time too short for the startup steps")
            t = target
        out.append(u.copy())
    return out


def _solve_parabolic(spec, grid, u0, eps, times):
    A = generator_matrix(spec, grid, eps)
    u = _eval(u0, grid.x)
    return np.array(_march(A, u, times, grid.steps))


def fd_parabolic(spec: CoefficientSpec, grid: FdGrid, u0: Callable, eps: float,
                 t_outputs: Sequence[float], richardson: bool = True) -> FdSolution:
    """Solve ``u_t = b u' + eps a u''`` from ``u0`` and return snapshots.

    With ``richardson`` the solve is repeated on a grid with half the
    nodes and ``|u_h - u_2h| / 3`` at shared nodes estimates the spatial
    error of the fine solution.
    """
    times = np.asarray(t_outputs, dtype=float)
    order = np.argsort(times, kind="stable")
    if np.any(times < 0):
        raise ValidationError("output times must be >= 0")
    fine = _solve_parabolic(spec, grid, u0, eps, times[order])
    err = None
    if richardson:
        cg = grid.coarsened()
        coarse = _solve_parabolic(spec, cg, u0, eps, times[order])
        ratio = (grid.M // cg.M) if grid.periodic else (grid.M - 1) // (cg.M - 1)
        err = np.max(np.abs(fine[:, ::ratio] - coarse), axis=1) / 3.0
    U = np.empty_like(fine)
    U[order] = fine
    if err is not None:
        e = np.empty_like(err)
        e[order] = err
        err = e
    meta = {"grid": grid.metadata(), "eps": eps, "scheme": "crank-nicolson+rannacher"}
    return FdSolution(grid.x, times, U, err, grid.periodic, grid.hi - grid.lo, meta)


@dataclass(frozen=True)
class ResolventField:
    x: np.ndarray
    phi: np.ndarray
    G: np.ndarray
    lam: float
    sup_bound_ok: bool

    def at(self, xq) -> np.ndarray:
        period = self.x[-1] - self.x[0] + (self.x[1] - self.x[0])
        return np.interp(np.asarray(xq, float), self.x, self.phi, period=period)


def well_indicator_field(land, hier, p: int, r0: float, g, x: np.ndarray) -> np.ndarray:
    """``G(x) = sum_k g(k) 1{x in E(M_p(k))}``; ``g`` is a callable on set
    indices or a sequence read periodically."""
    level = hier.level(p)
    wp = wells(land, hier, r0)
    owner = wp.locate(x)
    G = np.zeros(len(x))
    gf = g if callable(g) else (lambda k, arr=np.asarray(g, float): arr[k % len(arr)])
    sentinel = np.iinfo(np.int64).min
    for gm in np.unique(owner[owner != sentinel]):
        k = level.set_index_of(int(gm))
        if k is not None:
            G[owner == gm] = float(gf(k))
    return G


def fd_resolvent(spec: CoefficientSpec, grid: FdGrid, eps: float, theta: float, lam: float,
                 g, hier, p: int, r0: float) -> ResolventField:
    """Solve ``(lam - theta L_eps) phi = G`` with ``G`` built from well indicators.

    ``sup_bound_ok`` records ``max|phi| <= max|G| / lam`` up to a relative
    round-off allowance of 1e-12.
    """
    if not lam > 0:
        raise ValidationError("lam must be positive")
    A = generator_matrix(spec, grid, eps)
    G = well_indicator_field(hier.land, hier, p, r0, g, grid.x)
    mat = lam * sp.identity(grid.M, format="csc") - theta * A
    phi = _factor(mat).solve(G)
    bound = np.max(np.abs(G)) / lam
    ok = bool(np.max(np.abs(phi)) <= bound * (1 + 1e-12) + 1e-300)
    return ResolventField(grid.x, phi, G, lam, ok)


def empirical_fdd(spec: CoefficientSpec, hier, p: int, eps: float, cfg: SimConfig, x: float,
                  times: Sequence[float], ks: Sequence[int], r0: float) -> tuple[float, float]:
    """Estimate ``P[X(t_j theta_p) in E(M_p(k_j)) for all j]`` with its standard error.

    ``cfg.eps`` must equal ``eps`` and ``cfg.T`` must reach the last time.
    """
    if not math.isclose(cfg.eps, eps, rel_tol=0, abs_tol=0):
        raise ValidationError("cfg.eps differs from eps")
    if len(times) != len(ks):
        raise ValidationError("times and ks differ in length")
    level = hier.level(p)
    theta = math.exp(level.H / eps)
    real_t = np.asarray(times, float) * theta
    ens = sample_paths(spec, cfg, x, real_t)
    wp = wells(hier.land, hier, r0)
    ind = np.ones(cfg.n_paths, bool)
    for j, k in enumerate(ks):
        ind &= wp.contains(ens.X[:, j], level.members(int(k)))
    return _mean_se(ind.astype(float), cfg.antithetic)
