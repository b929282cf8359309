import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from metastab.asymptotics import (
    check_periodic,
    hitting_measure,
    locate_indices,
    predict_critical,
    predict_equilibrium,
    predict_fdd,
    predict_intermediate,
    predict_pre_metastable,
    set_average,
    tabulated,
    u0_range,
)
from metastab.errors import LevelOutOfRange, NotPeriodic
from metastab.passage import ExitProblem, exit_probability, exit_probability_asymptotic
from metastab.simulate import sample_exit, stable_config

# oracle (tools/oracle.py): 1/sqrt|S''| weights of the two tied saddles
TIED_W = 0.43834873153012609
TIED_SHALLOW = 0.22812324557335991
TIED_DEEP = 0.76630666598958908


def cos_u0(phase):
    return lambda x: np.cos(2 * np.pi * (np.asarray(x) - phase))


# --- index location and hitting measure --------------------------------------

def test_locate_indices_level1(L2h):
    lv, land = L2h.level(1), L2h.land
    assert locate_indices(lv, land, 0.5) == (0, 1)
    assert locate_indices(lv, land, 0.25) == (0, 0)
    assert locate_indices(lv, land, 1.1) == (1, 2)
    assert locate_indices(lv, land, -0.1) == (-1, 0)


@pytest.mark.parametrize("x", [0.1, 0.3, 0.5, 0.75, 0.9])
@pytest.mark.parametrize("shift", [-2, 1, 3])
def test_locate_indices_translate(L2h, x, shift):
    for lv in L2h.levels:
        l, r = locate_indices(lv, L2h.land, x)
        assert locate_indices(lv, L2h.land, x + shift) == (l + shift * lv.u, r + shift * lv.u)


def test_hitting_measure_point_mass_on_member(L2h):
    hm = hitting_measure(L2h.level(2), L2h.land, 0.75)
    assert hm.weights() == {0: 1.0}


def test_hitting_measure_level1_basins(L2h):
    lv, land = L2h.level(1), L2h.land
    sad = land.saddle_location(1)
    assert hitting_measure(lv, land, sad - 0.01).weights() == {0: 1.0, 1: 0.0}
    assert hitting_measure(lv, land, sad + 0.01).weights() == {0: 0.0, 1: 1.0}
    assert hitting_measure(lv, land, sad).w == 0.5


def test_hitting_measure_level2_symmetric_saddles(L2h):
    # both saddles around the shallow well tie, with equal curvature
    lv, land = L2h.level(2), L2h.land
    assert hitting_measure(lv, land, 0.3).weights() == pytest.approx({-1: 0.5, 0: 0.5})
    assert hitting_measure(lv, land, 0.5).w == pytest.approx(1.0)
    assert hitting_measure(lv, land, 0.0).w == pytest.approx(0.0)
    assert hitting_measure(lv, land, land.saddle_location(0)).w == pytest.approx(0.25)


def test_hitting_measure_tied_asymmetric_saddles(tiedh):
    hm = hitting_measure(tiedh.level(2), tiedh.land, TIED_SHALLOW)
    assert hm.w == pytest.approx(TIED_W, abs=1e-9)
    assert hm.right - hm.left == 1


@settings(max_examples=40, deadline=None)
@given(st.floats(0.02, 0.98))
def test_hitting_measure_agrees_with_exit_limit(tiedh, frac):
    land = tiedh.land
    lv = tiedh.level(2)
    lo = land.min_location(lv.members(-1)[0])
    hi = land.min_location(lv.members(0)[0])
    x = lo + frac * (hi - lo)
    assert hitting_measure(lv, land, x).w == pytest.approx(
        exit_probability_asymptotic(land, lo, hi, x), abs=1e-12)


# --- profiles ----------------------------------------------------------------

@pytest.mark.parametrize("c", [-1.5, 0.0, 3.25])
def test_constant_u0_gives_constant(L2h, c):
    u0 = lambda x: c + 0 * np.asarray(x)  # noqa: E731
    xs = np.linspace(0, 1, 9)
    assert np.allclose(predict_critical(L2h, 1, [0.3, 2.0], u0, xs).values, c, atol=1e-10)
    assert np.allclose(predict_critical(L2h, 2, [0.3, 2.0], u0, xs).values, c, atol=1e-10)
    assert np.allclose(predict_intermediate(L2h, 1, u0, xs).values, c)
    assert np.allclose(predict_pre_metastable(L2h.land, u0, xs).values, c)
    assert predict_equilibrium(L2h, 1, u0) == pytest.approx(c)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.0, 1.0), st.floats(0.01, 20.0), st.floats(-1.0, 2.0), st.sampled_from([1, 2]))
def test_predictions_stay_in_u0_range(L2h, phase, t, x, p):
    u0 = cos_u0(phase)
    lo, hi = u0_range(L2h.land, u0, periods=2)
    v = predict_critical(L2h, p, [t], u0, [x]).values[0, 0]
    assert lo - 1e-10 <= v <= hi + 1e-10


def test_pre_metastable_at_minimum_and_saddle(L2h):
    land = L2h.land
    u0 = cos_u0(0.75)
    s = land.saddle_location(1)
    prof = predict_pre_metastable(land, u0, [0.25, 0.3, s])
    assert prof.values[:2] == pytest.approx([float(u0(0.25))] * 2)
    assert prof.values[2] == pytest.approx(0.5 * (float(u0(0.25)) + float(u0(0.75))))
    strict = predict_pre_metastable(land, u0, [s], saddle_convention=False)
    assert math.isnan(strict.values[0])


def test_intermediate_profile_L2(L2h):
    u0 = cos_u0(0.75)
    prof = predict_intermediate(L2h, 1, u0, [0.25, 0.75, 0.5])
    # everything ends in the deep well, where u0 = 1
    assert prof.values == pytest.approx([1.0, 1.0, 1.0])
    with pytest.raises(LevelOutOfRange):
        predict_intermediate(L2h, 2, u0, [0.5])


def test_critical_approaches_intermediate_for_large_t(L2h):
    u0 = cos_u0(0.6)
    xs = np.linspace(-0.3, 1.3, 11)
    late = predict_critical(L2h, 1, [60.0], u0, xs).values[0]
    assert late == pytest.approx(predict_intermediate(L2h, 1, u0, xs).values, abs=1e-10)


def test_critical_small_t_is_hitting_average(L2h):
    u0 = cos_u0(0.1)
    lv, land = L2h.level(2), L2h.land
    xs = np.array([0.1, 0.3, 0.6])
    early = predict_critical(L2h, 2, [1e-9], u0, xs).values[0]
    direct = [sum(w * set_average(lv, land, k, u0)
                  for k, w in hitting_measure(lv, land, x).weights().items()) for x in xs]
    assert early == pytest.approx(direct, abs=1e-8)


def test_tabulated_u0_periodic():
    u0 = tabulated([0.0, 0.5], [1.0, -1.0])
    assert u0(0.25) == pytest.approx(0.0)
    assert u0(1.25) == pytest.approx(0.0)
    assert u0(0.75) == pytest.approx(0.0)


# --- equilibrium -------------------------------------------------------------

def test_not_periodic_rejected(L1h):
    with pytest.raises(NotPeriodic):
        predict_equilibrium(L1h, 1, lambda x: x)
    with pytest.raises(NotPeriodic):
        check_periodic(lambda x: np.cos(np.pi * x), 1)
    check_periodic(lambda x: np.cos(np.pi * x), 2)


def test_equilibrium_single_minimum(L1h):
    u0 = cos_u0(0.3)
    m0 = L1h.land.min_location(0)
    assert predict_equilibrium(L1h, 1, u0) == pytest.approx(float(u0(m0)))


def test_equilibrium_two_periods_averages(L1h):
    u0 = lambda x: np.cos(np.pi * np.asarray(x))  # noqa: E731
    m0 = L1h.land.min_location(0)
    expected = 0.5 * (float(u0(m0)) + float(u0(m0 + 1)))
    assert predict_equilibrium(L1h, 2, u0) == pytest.approx(expected, abs=1e-12)


def test_equilibrium_reversible_weights(sym2h):
    land = sym2h.land
    u0 = cos_u0(0.25)
    pis = np.array([land.pi_min(g) for g in range(2)])
    vals = np.array([float(u0(land.min_location(g))) for g in range(2)])
    assert predict_equilibrium(sym2h, 1, u0) == pytest.approx(pis @ vals / pis.sum(), abs=1e-12)


def test_equilibrium_tilted_ends_in_deep_well(L2h):
    u0 = cos_u0(0.6)
    assert predict_equilibrium(L2h, 1, u0) == pytest.approx(float(u0(0.75)))


# --- finite-dimensional distributions ----------------------------------------

def test_fdd_single_time_sums_to_one(L2h):
    total = sum(predict_fdd(L2h, 1, 0.25, [1.0], [k]) for k in range(-40, 41))
    assert total == pytest.approx(1.0, abs=1e-10)


def test_fdd_tiny_time_is_hitting_measure(L2h):
    hm = hitting_measure(L2h.level(1), L2h.land, 0.25)
    assert predict_fdd(L2h, 1, 0.25, [1e-9], [0]) == pytest.approx(hm.weights()[0], abs=1e-8)


def test_fdd_markov_product(L2h):
    # two-time law equals the sum over the intermediate state
    split = sum(predict_fdd(L2h, 1, 0.25, [0.5, 2.0], [k, 1]) for k in range(-30, 31))
    assert split == pytest.approx(predict_fdd(L2h, 1, 0.25, [2.0], [1]), abs=1e-10)
    with pytest.raises(ValueError):
        predict_fdd(L2h, 1, 0.25, [2.0, 0.5], [0, 1])


# --- Monte Carlo cross-check of the tied split ---------------------------------

@pytest.mark.slow
def test_tied_split_against_monte_carlo(tiedh):
    land = tiedh.land
    spec = land.spec
    eps = 0.05
    l, r = TIED_DEEP - 1, TIED_DEEP
    cfg = stable_config(spec, eps, T=400.0, n_paths=4000, seed=11)
    mc = sample_exit(spec, cfg, l, r, TIED_SHALLOW)
    exact = exit_probability(ExitProblem(spec, eps, l, r, TIED_SHALLOW))
    assert mc.unexited == 0
    assert abs(mc.p_right - exact) < 3 * mc.p_right_se
    assert abs(mc.p_right - TIED_W) < 3 * mc.p_right_se + 0.02
