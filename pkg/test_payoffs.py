# test_payoffs.py
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from src.market_model import Action, ActionProfile, MarketParams, NO_OPERATE, PriceGrid
from src.payoffs import (
    at_least,
    discrete_argmax,
    l_bar,
    manufacturer_utility,
    price_utility_block,
    q_bar_m,
    q_bar_s,
    supplier_utility_raw,
    utilities_close,
    w1,
    w2,
    w2_relaxed_argmax,
    w2_star_grid,
    w3,
    w4,
    w4_star_grid,
    w4_star_relaxed,
)

REFERENCE = MarketParams(d_bar=8.0, alpha=0.5, eps=0.8, c_m=2.0, o_m=2.0, c_s=0.01, o_s=0.01)
GRID = PriceGrid.for_params(REFERENCE, 4.0)

actions = st.one_of(st.just(NO_OPERATE), st.integers(0, GRID.max_index).map(Action))


@pytest.mark.parametrize("fn, args, expected", [
    (w1, (1.0, 5.0, 6.0), 17.8),
    (w2, (1.0, 6.0), 13.0),
    (w2, (1.0, 8.0), 18.0),
    (w3, (1.0, 8.0), 34.0),
    (w3, (1.0, 12.0), 59.2),
    (w4, (1.0, 6.0), 39.4),
])
def test_utility_pieces(fn, args, expected):
    assert float(fn(REFERENCE, *args)) == pytest.approx(expected, rel=1e-9)


@pytest.mark.parametrize("fn, args", [
    (w1, (1.0, 3.0, 7.0)),
    (w2, (1.0, 3.0)),
    (w3, (1.0, 3.0)),
    (w4, (1.0, 3.0)),
])
def test_zero_margin_leaves_operating_cost(fn, args):
    assert float(fn(REFERENCE, *args)) == pytest.approx(-2.0)


def test_clamped_demand_leaves_operating_cost():
    assert float(w1(REFERENCE, 1.0, 1000.0, 0.0)) == -2.0


def test_utility_pieces_accept_arrays():
    prices = GRID.prices()
    values = w3(REFERENCE, 1.0, prices)
    assert values.shape == prices.shape
    assert values[3] == pytest.approx(59.2)


def test_monopoly_coincides_with_dearer_side_without_loyalty_spill():
    params = REFERENCE.with_updates(eps=0.0)
    for p in (3.0, 6.0, 9.5):
        assert float(w4(params, 1.0, p)) == pytest.approx(float(w2(params, 1.0, p)))


@pytest.mark.parametrize("profile, who, expected", [
    (ActionProfile(Action(2), Action(3), 1.0), 'i', 58.0),
    (ActionProfile(Action(2), Action(3), 1.0), 'j', 16.0),
    (ActionProfile(NO_OPERATE, NO_OPERATE, 1.0), 'i', 0.0),
    (ActionProfile(NO_OPERATE, NO_OPERATE, 1.0), 'j', 0.0),
    (ActionProfile(Action(3), Action(3), 1.0), 'j', 59.2),
    (ActionProfile(Action(2), NO_OPERATE, 1.0), 'i', 66.0),
])
def test_manufacturer_utility_cases(profile, who, expected):
    assert manufacturer_utility(REFERENCE, profile, 4.0, who) == pytest.approx(expected, rel=1e-9)


def test_lone_manufacturer_earns_monopoly_utility():
    grid = PriceGrid.for_params(REFERENCE, 2.0)
    profile = ActionProfile(Action(3), NO_OPERATE, 1.0)
    assert manufacturer_utility(REFERENCE, profile, grid.delta, 'i') == pytest.approx(39.4)


def test_without_input_supply_operating_costs_remain():
    profile = ActionProfile(Action(3), Action(3), None)
    assert manufacturer_utility(REFERENCE, profile, 4.0, 'i') == -2.0
    assert manufacturer_utility(REFERENCE, profile.mirrored(), 4.0, 'j') == -2.0


def test_unknown_manufacturer_label_is_rejected():
    with pytest.raises(ValueError):
        manufacturer_utility(REFERENCE, ActionProfile(Action(1), Action(1), 1.0), 4.0, 'k')


@given(a=actions, b=actions, q=st.floats(0.0, 150.0))
def test_game_is_symmetric(a, b, q):
    forward = manufacturer_utility(REFERENCE, ActionProfile(a, b, q), GRID.delta, 'i')
    backward = manufacturer_utility(REFERENCE, ActionProfile(b, a, q), GRID.delta, 'j')
    assert forward == backward


@pytest.mark.parametrize("profile, expected", [
    (ActionProfile(Action(3), Action(3), 1.0), 13.454),
    (ActionProfile(NO_OPERATE, NO_OPERATE, 1.0), -0.01),
    (ActionProfile(Action(3), Action(3), None), 0.0),
])
def test_supplier_utility(profile, expected):
    assert supplier_utility_raw(REFERENCE, profile, 4.0) == pytest.approx(expected, rel=1e-9)


def test_utility_block_matches_pointwise_dispatch():
    own = np.arange(GRID.size)
    block = price_utility_block(REFERENCE, 1.0, GRID, own, own)
    for a in (0, 2, 3, 10):
        for b in (0, 3, 4, 20):
            expected = manufacturer_utility(REFERENCE, ActionProfile(Action(a), Action(b), 1.0), GRID.delta)
            assert block[a, b] == pytest.approx(expected, rel=1e-12, abs=1e-12)


def test_discrete_argmax_prefers_floor_on_better_value():
    # relaxed maximiser 9.5; W2(8) = 18 beats W2(12) = 16
    assert w2_relaxed_argmax(REFERENCE, 1.0) == pytest.approx(9.5)
    top = l_bar(REFERENCE, 1.0, GRID)
    assert (top.index, top.price, top.value) == (2, 8.0, pytest.approx(18.0))
    assert w2_star_grid(REFERENCE, 1.0, GRID) == pytest.approx(18.0)


def test_discrete_argmax_on_grid_point_and_negative_maximiser():
    f = lambda p: -(p - 12.0) ** 2
    assert discrete_argmax(f, GRID, 12.0).index == 3
    assert discrete_argmax(f, GRID, -5.0).index == 0


def test_discrete_argmax_scan_agrees_with_neighbour_rule():
    f = lambda p: w4(REFERENCE, 1.0, p)
    scanned = discrete_argmax(f, GRID)
    # relaxed maximiser 73.5; W4(72) edges out W4(76)
    assert scanned.index == discrete_argmax(f, GRID, 73.5).index == 18
    assert scanned.value == pytest.approx(w4_star_grid(REFERENCE, 1.0, GRID))


def test_fine_grid_l_bar_approaches_relaxed_maximiser():
    grid = PriceGrid.for_params(REFERENCE, 0.01)
    assert abs(l_bar(REFERENCE, 1.0, grid).price - 9.5) <= 0.01


def test_supplier_price_thresholds():
    assert q_bar_m(REFERENCE) == pytest.approx(133.0557, abs=1e-4)
    assert q_bar_s(REFERENCE) == pytest.approx(69.0557, abs=1e-4)
    assert q_bar_s(REFERENCE) < q_bar_m(REFERENCE)


def test_thresholds_without_costs():
    params = MarketParams(d_bar=8.0, alpha=0.5, eps=0.0)
    assert q_bar_m(params) == pytest.approx(16.0)
    assert q_bar_s(params) == pytest.approx(16.0)


def test_relaxed_monopoly_optimum_changes_sign_at_threshold():
    threshold = q_bar_m(REFERENCE)
    assert w4_star_relaxed(REFERENCE, threshold) == pytest.approx(0.0, abs=1e-9)
    assert w4_star_relaxed(REFERENCE, 1.0) > 0
    # margin sqrt(0.8) - 0.1 left one unit past the threshold
    assert w4_star_relaxed(REFERENCE, threshold + 1.0) == pytest.approx(-0.42221, abs=1e-4)
    # nothing sells above cost at q=200, only the operating cost remains
    assert w4_star_relaxed(REFERENCE, 200.0) == -2.0


@pytest.mark.parametrize("q", [1.0, 60.0, 134.0, 140.0, 200.0])
def test_relaxed_monopoly_optimum_matches_a_dense_scan(q):
    prices = np.linspace(0.0, 400.0, 400_001)
    scanned = float(np.max(w4(REFERENCE, q, prices)))
    assert w4_star_relaxed(REFERENCE, q) == pytest.approx(scanned, abs=1e-6)
    assert (w4_star_relaxed(REFERENCE, q) >= 0) == (q <= q_bar_m(REFERENCE))


@given(p=st.floats(3.0, 200.0))
def test_monopoly_dominates_matching_which_dominates_dearer(p):
    assert at_least(float(w4(REFERENCE, 1.0, p)), float(w3(REFERENCE, 1.0, p)))
    assert at_least(float(w3(REFERENCE, 1.0, p)), float(w2(REFERENCE, 1.0, p)))


@pytest.mark.parametrize("fn", [
    lambda p: w2(REFERENCE, 1.0, p),
    lambda p: w3(REFERENCE, 1.0, p),
    lambda p: w4(REFERENCE, 1.0, p),
    lambda p: w1(REFERENCE, 1.0, p, 20.0),
])
def test_discrete_concavity_where_demand_is_positive(fn):
    grid = PriceGrid(delta=0.5, max_index=30)
    values = np.asarray(fn(grid.prices()), dtype=float)
    second = values[2:] - 2.0 * values[1:-1] + values[:-2]
    assert np.all(second <= 1e-9)


def test_tolerant_comparisons():
    assert utilities_close(1.0, 1.0 + 1e-12)
    assert not utilities_close(1.0, 1.0 + 1e-6)
    assert at_least(1.0 - 1e-12, 1.0)
    assert not at_least(0.0, 1e-6)
    assert math.isclose(float(w3(REFERENCE, 1.0, 12.0)), 59.2, rel_tol=1e-9)
