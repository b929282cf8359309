"""Acceptance criteria 1-10.

Each test prints one ``ACCEPTANCE n: PASS|FAIL`` line with the measured
numbers and runtime, then asserts the criterion at its stated tolerance.
Criteria 5, 6, 7 and 10 compare small-noise limits with finite-noise
solutions at eps = 0.06-0.08 and do not meet their thresholds there; the
``test_trend_*`` tests record that the gap closes as eps decreases.
"""

import math
import time

import numpy as np
import pytest

from metastab import asymptotics, simulate
from metastab.chain import ring_generator, solve_reduced_resolvent, transition_probabilities
from metastab.cli import load_spec, parse_u0
from metastab.hierarchy import build_hierarchy, time_scale, verify_postulates
from metastab.landscape import CoefficientSpec, find_equilibria
from metastab.passage import (
    ExitProblem,
    exit_probability,
    exit_probability_asymptotic,
    mean_exit_bound,
    mean_exit_time,
)

from conftest import L1_spec, random_suite, spec_file
from test_chain import Level

TOL_CRITICAL = 0.15
TOL_EQUILIBRIUM = 0.1
FD_NODES = 4096
FD_STEPS = 2000
L2_U0 = "cos:0.75"


def report(capsys, n, ok, detail, elapsed, limit=None):
    within = limit is None or elapsed < limit
    status = "PASS" if ok and within else "FAIL"
    budget = f" (limit {limit:g} s)" if limit is not None else ""
    with capsys.disabled():
        print(f"\nACCEPTANCE {n}: {status} {detail} [{elapsed:.1f} s{budget}]")
    assert ok, detail
    assert within, f"runtime {elapsed:.1f} s exceeds {limit} s"


def fd_grid():
    return simulate.FdGrid.periodic_grid(1, FD_NODES, steps=FD_STEPS)


def L2_setup():
    spec = load_spec(spec_file("L2"))
    h = build_hierarchy(find_equilibria(spec))
    xs = np.array([h.land.min_location(g) for g in range(h.land.N)])
    return spec, h, xs


# --- 1 ---------------------------------------------------------------------------

def test_criterion_1_L1_fixture(capsys):
    t0 = time.perf_counter()
    h = build_hierarchy(find_equilibria(L1_spec()))
    lv = h.level(1)
    got = {"h1": lv.H, "pi": lv.pi[0], "sigma": lv.sigma[0],
           "R+": lv.rate_right[0], "R-": lv.rate_left[0]}
    want = {"h1": 1 / math.pi, "pi": 1.0, "sigma": 1.0, "R+": 1.0, "R-": 1.0}
    err = max(abs(got[k] - want[k]) for k in want)
    ok = err <= 1e-6 and h.Q == 1
    report(capsys, 1, ok, f"max error {err:.2e}, Q={h.Q}", time.perf_counter() - t0, 1.0)


# --- 2 ---------------------------------------------------------------------------

def test_criterion_2_postulate_suite(capsys):
    t0 = time.perf_counter()
    lands = random_suite(2024, 70) + random_suite(2025, 30, zero_tilt=True)
    bad = []
    for i, land in enumerate(lands):
        h = build_hierarchy(land)
        Hs = [lv.H for lv in h.levels]
        us = [lv.u for lv in h.levels]
        fine = (verify_postulates(h).passed
                and all(a < b for a, b in zip(Hs, Hs[1:]))
                and all(a > b for a, b in zip(us, us[1:]))
                and h.Q <= land.N)
        if not fine:
            bad.append(i)
    report(capsys, 2, not bad, f"{len(lands) - len(bad)}/{len(lands)} landscapes pass",
           time.perf_counter() - t0, 60.0)


# --- 3 ---------------------------------------------------------------------------

def test_criterion_3_passage(capsys):
    t0 = time.perf_counter()
    # Brownian exactness
    brown = 0.0
    for a in (1.0, 2.5):
        for x in (0.1, 0.37, 0.8):
            p = ExitProblem(CoefficientSpec(a), 0.05, 0.0, 1.0, x)
            brown = max(brown, abs(exit_probability(p) - x),
                        abs(mean_exit_time(p) - x * (1 - x) / (2 * 0.05 * a)))
    # mean exit bound over 50 intervals of length at most one
    rng = np.random.default_rng(3)
    specs = [L1_spec(), load_spec(spec_file("L2")), load_spec(spec_file("tied"))]
    violations = 0
    for i in range(50):
        spec = specs[i % 3]
        l = rng.uniform(-1, 1)
        r = l + rng.uniform(0.05, 1.0)
        x = rng.uniform(l, r)
        eps = float(rng.choice([0.2, 0.1, 0.05, 0.03]))
        if mean_exit_time(ExitProblem(spec, eps, l, r, x)) > mean_exit_bound(spec, l, r, eps) * (1 + 1e-12):
            violations += 1
    # trend toward the small-noise split; the two maxima in (0.25, 1.25) are 0.55 apart
    spec, h, _ = L2_setup()
    limit = exit_probability_asymptotic(h.land, 0.25, 1.25, 0.6)
    errs = [abs(exit_probability(ExitProblem(spec, e, 0.25, 1.25, 0.6)) - limit)
            for e in (0.1, 0.05, 0.02, 0.01)]
    monotone = all(a > b for a, b in zip(errs, errs[1:]))
    ok = brown <= 1e-8 and violations == 0 and monotone and errs[-1] < 0.05
    detail = (f"brownian error {brown:.1e}, bound violations {violations}/50, "
              f"trend {[round(e, 4) for e in errs]}")
    report(capsys, 3, ok, detail, time.perf_counter() - t0, 30.0)


# --- 4 ---------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_4_monte_carlo_oracle(capsys):
    t0 = time.perf_counter()
    spec = load_spec(spec_file("L2"))
    eps, l, r, x = 0.05, 0.05, 0.45, 0.3
    cfg = simulate.stable_config(spec, eps, 200.0, 20000, seed=4)
    mc = simulate.sample_exit(spec, cfg, l, r, x)
    prob = ExitProblem(spec, eps, l, r, x)
    p, T = exit_probability(prob), mean_exit_time(prob)
    zp = abs(mc.p_right - p) / mc.p_right_se
    zt = abs(mc.mean_tau - T) / mc.mean_tau_se
    ok = zp < 3 and zt < 3 and mc.unexited == 0
    detail = (f"P: mc {mc.p_right:.4f} vs {p:.4f} ({zp:.2f} SE); "
              f"E tau: mc {mc.mean_tau:.4f} vs {T:.4f} ({zt:.2f} SE)")
    report(capsys, 4, ok, detail, time.perf_counter() - t0, 180.0)


# --- 5 ---------------------------------------------------------------------------

def critical_error(spec, h, xs, eps, ts=(0.5, 1.0, 2.0)):
    u0 = parse_u0(L2_U0)
    pred = asymptotics.predict_critical(h, 1, list(ts), u0, xs).values
    theta = time_scale(h, 1, eps)
    sol = simulate.fd_parabolic(spec, fd_grid(), u0, eps, [t * theta for t in ts])
    fd = np.array([sol.at(i, xs) for i in range(len(ts))])
    return float(np.max(np.abs(fd - pred))), float(np.max(sol.error))


@pytest.mark.slow
def test_criterion_5_critical_profile(capsys):
    t0 = time.perf_counter()
    spec, h, xs = L2_setup()
    e08, fd08 = critical_error(spec, h, xs, 0.08)
    e06, fd06 = critical_error(spec, h, xs, 0.06)
    ok = e08 <= TOL_CRITICAL and e06 < e08
    detail = (f"sup error {e08:.4f} at eps=0.08 (tol {TOL_CRITICAL}), {e06:.4f} at eps=0.06; "
              f"FD error estimate {max(fd08, fd06):.1e}")
    report(capsys, 5, ok, detail, time.perf_counter() - t0, 300.0)


@pytest.mark.slow
def test_trend_5_critical_gap_closes():
    spec, h, xs = L2_setup()
    errs = [critical_error(spec, h, xs, e)[0] for e in (0.08, 0.06, 0.04, 0.03)]
    assert all(a > b for a, b in zip(errs, errs[1:]))
    assert errs[-1] < 0.1


# --- 6 ---------------------------------------------------------------------------

def intermediate_error(spec, h, xs, eps):
    u0 = parse_u0(L2_U0)
    pred = asymptotics.predict_intermediate(h, 1, u0, xs).values
    rho = math.sqrt(time_scale(h, 1, eps) * time_scale(h, 2, eps))
    sol = simulate.fd_parabolic(spec, fd_grid(), u0, eps, [rho])
    return float(np.max(np.abs(sol.at(0, xs) - pred))), rho


def test_criterion_6_intermediate_profile(capsys):
    t0 = time.perf_counter()
    spec, h, xs = L2_setup()
    err, rho = intermediate_error(spec, h, xs, 0.06)
    ok = err <= TOL_CRITICAL
    report(capsys, 6, ok, f"error {err:.4f} at rho={rho:.2f}, eps=0.06 (tol {TOL_CRITICAL})",
           time.perf_counter() - t0)


def test_trend_6_intermediate_gap_closes():
    spec, h, xs = L2_setup()
    errs = [intermediate_error(spec, h, xs, e)[0] for e in (0.06, 0.04, 0.03, 0.02)]
    assert all(a > b for a, b in zip(errs, errs[1:]))
    assert errs[-1] < 0.05


# --- 7 ---------------------------------------------------------------------------

def resolvent_error(spec, h, eps, g, lam=1.0):
    lv = h.level(1)
    r0 = lv.H / 2
    res = simulate.fd_resolvent(spec, fd_grid(), eps, time_scale(h, 1, eps), lam, g, h, 1, r0)
    f = solve_reduced_resolvent(lv, lam, g, states=range(lv.u))
    mins = [h.land.min_location(lv.members(k)[0]) for k in range(lv.u)]
    err = max(abs(float(res.at(m)) - f(k)) for k, m in enumerate(mins))
    return err, res.sup_bound_ok


def test_criterion_7_resolvent(capsys):
    t0 = time.perf_counter()
    spec, h, _ = L2_setup()
    results = {g: resolvent_error(spec, h, 0.06, g) for g in [(0.0, 1.0), (1.0, 0.0), (0.3, -0.7)]}
    err = max(e for e, _ in results.values())
    bound = all(b for _, b in results.values())
    ok = err <= TOL_CRITICAL and bound
    detail = ", ".join(f"g={g}: {e:.4f}" for g, (e, _) in results.items())
    report(capsys, 7, ok, f"{detail} (tol {TOL_CRITICAL}); sup bound {'holds' if bound else 'violated'}",
           time.perf_counter() - t0)


def test_trend_7_resolvent_gap_closes():
    spec, h, _ = L2_setup()
    errs = [resolvent_error(spec, h, e, (0.0, 1.0))[0] for e in (0.06, 0.04, 0.03)]
    assert all(a > b for a, b in zip(errs, errs[1:]))


# --- 8 ---------------------------------------------------------------------------

def test_criterion_8_equilibrium(capsys):
    t0 = time.perf_counter()
    spec = load_spec(spec_file("sym2"))
    h = build_hierarchy(find_equilibria(spec))
    u0 = parse_u0("cos:0.25")
    eps = 0.06
    pred = asymptotics.predict_equilibrium(h, 1, u0)
    t = 50 * time_scale(h, h.Q, eps)
    xs = np.array([h.land.min_location(g) for g in range(h.land.N)])
    sol = simulate.fd_parabolic(spec, fd_grid(), u0, eps, [t])
    err = float(np.max(np.abs(sol.at(0, xs) - pred)))
    ring = ring_generator(h.levels[-1], 1, reversible=True)
    db = ring.detailed_balance_residual()
    ok = err <= TOL_EQUILIBRIUM and db <= 1e-12
    report(capsys, 8, ok, f"error {err:.2e} (tol {TOL_EQUILIBRIUM}), detailed balance residual {db:.1e}",
           time.perf_counter() - t0)


# --- 9 ---------------------------------------------------------------------------

def test_criterion_9_chain_numerics(capsys):
    t0 = time.perf_counter()
    _, h, _ = L2_setup()
    levels = list(h.levels) + [build_hierarchy(find_equilibria(L1_spec())).level(1)]
    row = semi = resid = 0.0
    for lv in levels:
        win = transition_probabilities(lv, 0, [0.3, 1.0, 4.0])
        row = max(row, float(np.max(np.abs(win.probs.sum(axis=1) - 1))))
        s, t = 0.4, 0.9
        direct = transition_probabilities(lv, 0, [s + t]).row(0)
        comp: dict = {}
        for k, p in transition_probabilities(lv, 0, [s]).row(0).items():
            for j, q in transition_probabilities(lv, k, [t]).row(0).items():
                comp[j] = comp.get(j, 0.0) + p * q
        semi = max(semi, max(abs(comp.get(j, 0.0) - p) for j, p in direct.items()))
        g = np.random.default_rng(0).normal(size=lv.u)
        resid = max(resid, solve_reduced_resolvent(lv, 1.0, g).residual)
    two = 0.0
    for r01, r10 in [(1.0, 1.0), (1.8, 0.3)]:
        ts = np.array([0.1, 1.0, 5.0])
        win = transition_probabilities(Level((r01, 0.0), (0.0, r10)), 0, ts)
        i0 = int(np.nonzero(win.states == 0)[0][0])
        exact = (r10 + r01 * np.exp(-(r01 + r10) * ts)) / (r01 + r10)
        two = max(two, float(np.max(np.abs(win.probs[:, i0] - exact))))
    ok = row <= 1e-10 and semi <= 1e-8 and resid < 1e-10 and two <= 1e-10
    detail = (f"row sums {row:.1e}, semigroup {semi:.1e}, resolvent residual {resid:.1e}, "
              f"two-state {two:.1e}")
    report(capsys, 9, ok, detail, time.perf_counter() - t0)


# --- 10 --------------------------------------------------------------------------

FDD_EVENTS = [((1.0,), (0,)), ((1.0,), (1,)), ((1.0,), (-1,)), ((0.5, 2.0), (0, 1))]


def fdd_gaps(spec, h, eps, n_paths, events):
    theta = time_scale(h, 1, eps)
    r0 = h.level(1).H / 2
    out = []
    for ts, ks in events:
        cfg = simulate.stable_config(spec, eps, max(ts) * theta, n_paths, seed=7)
        est, se = simulate.empirical_fdd(spec, h, 1, eps, cfg, 0.25, ts, ks, r0)
        pred = asymptotics.predict_fdd(h, 1, 0.25, ts, ks)
        out.append((ts, ks, est, se, pred))
    return out


@pytest.mark.slow
def test_criterion_10_empirical_fdd(capsys):
    t0 = time.perf_counter()
    spec, h, _ = L2_setup()
    rows = fdd_gaps(spec, h, 0.08, 20000, FDD_EVENTS)
    ok = all(abs(est - pred) <= 3 * se + 0.05 for _, _, est, se, pred in rows)
    detail = "; ".join(f"t={ts} k={ks}: {est:.4f}+-{se:.4f} vs {pred:.4f}"
                       for ts, ks, est, se, pred in rows)
    report(capsys, 10, ok, detail, time.perf_counter() - t0, 300.0)


@pytest.mark.slow
def test_trend_10_fdd_gap_closes():
    spec, h, _ = L2_setup()
    event = [((1.0,), (1,))]
    gaps = [abs(est - pred) for eps in (0.08, 0.06)
            for _, _, est, _, pred in fdd_gaps(spec, h, eps, 5000, event)]
    assert gaps[1] < gaps[0]
