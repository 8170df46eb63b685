# src/payoffs.py
"""Manufacturer and supplier utilities on the discrete price grid.

The four utility pieces are written so they accept numpy arrays as well as
scalars; the brute-force solver evaluates whole blocks of profiles at once.
"""
import math
import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from config import config
from .market_model import MarketParams, PriceGrid, ActionProfile, demand

logger = logging.getLogger(__name__)

UtilityValue = float


def effective_cost(params: MarketParams, q: float) -> float:
    """Per-unit cost of a manufacturer buying input at supplier price q"""
    return params.c_m + q


def tolerance(a: float, b: float) -> float:
    return max(config.ABS_TOL, config.REL_TOL * max(abs(a), abs(b)))


def utilities_close(a: float, b: float) -> bool:
    return abs(a - b) <= tolerance(a, b)


def at_least(a: float, b: float) -> bool:
    """a >= b, treating values within tolerance as ties"""
    return a >= b - tolerance(a, b)


def w1(params: MarketParams, q: float, p_i, p_j):
    """Utility of the strictly cheaper manufacturer"""
    share = params.d_bar - params.alpha * p_i * (1.0 - params.eps) + params.eps * params.alpha * p_j
    return np.maximum(share, 0.0) * (p_i - effective_cost(params, q)) - params.o_m


def w2(params: MarketParams, q: float, p_j):
    """Utility of the strictly dearer manufacturer (keeps only its loyal base)"""
    share = params.d_bar - params.alpha * p_j
    return np.maximum(share, 0.0) * (p_j - effective_cost(params, q)) - params.o_m


def w3(params: MarketParams, q: float, p):
    """Utility of each manufacturer when both quote p"""
    share = params.d_bar - params.alpha * p * (1.0 - params.eps)
    return np.maximum(share, 0.0) * (p - effective_cost(params, q)) - params.o_m


def w4(params: MarketParams, q: float, p):
    """Utility of a lone operating manufacturer"""
    share = params.d_bar * (1.0 + params.eps) - params.alpha * p * (1.0 - params.eps)
    return np.maximum(share, 0.0) * (p - effective_cost(params, q)) - params.o_m


# Maximisers of the unclamped quadratics

def w1_relaxed_argmax(params: MarketParams, q: float, p_j: float) -> float:
    reach = (params.d_bar + params.eps * params.alpha * p_j) / (params.alpha * (1.0 - params.eps))
    return 0.5 * (reach + effective_cost(params, q))


def w2_relaxed_argmax(params: MarketParams, q: float) -> float:
    return 0.5 * (params.d_bar / params.alpha + effective_cost(params, q))


def w3_relaxed_argmax(params: MarketParams, q: float) -> float:
    return 0.5 * (params.d_bar / (params.alpha * (1.0 - params.eps)) + effective_cost(params, q))


def w4_relaxed_argmax(params: MarketParams, q: float) -> float:
    return 0.5 * (params.max_relevant_price + effective_cost(params, q))


def manufacturer_utility(params: MarketParams, profile: ActionProfile, delta: float,
                         who: str = 'i') -> UtilityValue:
    """Utility of manufacturer ``who`` ('i' or 'j') under the given profile"""
    if who == 'j':
        return manufacturer_utility(params, profile.mirrored(), delta, 'i')
    if who != 'i':
        raise ValueError(f"who must be 'i' or 'j', got {who!r}")

    own, other = profile.a_i, profile.a_j

    if not own.operates:
        return 0.0
    if profile.q is None:
        # no input supply: the margin term vanishes, the operating cost stays
        return -params.o_m

    q = profile.q
    price = own.price(delta)
    if not other.operates:
        return float(w4(params, q, price))
    if own.index < other.index:
        return float(w1(params, q, price, other.price(delta)))
    if own.index > other.index:
        return float(w2(params, q, price))
    return float(w3(params, q, price))


def supplier_utility_raw(params: MarketParams, profile: ActionProfile, delta: float) -> UtilityValue:
    """Supplier utility from the demand both operating manufacturers pass upstream"""
    if profile.q is None:
        return 0.0

    p_i = profile.a_i.price(delta)
    p_j = profile.a_j.price(delta)
    total_demand = 0.0
    if p_i is not None:
        total_demand += demand(params, p_i, p_j)
    if p_j is not None:
        total_demand += demand(params, p_j, p_i)

    return total_demand * (profile.q - params.c_s) - params.o_s


def price_utility_block(params: MarketParams, q: float, grid: PriceGrid,
                        own: np.ndarray, opponent: np.ndarray) -> np.ndarray:
    """Utilities U[own, opponent] for every pair of operating grid indices"""
    own_col = own[:, None]
    opp_row = opponent[None, :]
    own_prices = own.astype(float) * grid.delta

    cheaper = w1(params, q, own_col * grid.delta, opp_row * grid.delta)
    dearer = w2(params, q, own_prices)[:, None]
    equal = w3(params, q, own_prices)[:, None]

    return np.where(own_col < opp_row, cheaper, np.where(own_col > opp_row, dearer, equal))


@dataclass(frozen=True)
class GridOptimum:
    index: int
    price: float
    value: float


def discrete_argmax(f: Callable[[float], float], grid: PriceGrid,
                    relaxed_argmax: Optional[float] = None) -> GridOptimum:
    """Grid maximiser of a unimodal f, preferring the lower neighbour on ties.

    Without ``relaxed_argmax`` the whole grid is scanned and the first best
    index kept, which gives the same answer for unimodal f.
    """
    if relaxed_argmax is None:
        values = np.asarray(f(grid.prices()), dtype=float)
        best = float(values.max())
        index = int(np.flatnonzero(values >= best - tolerance(best, best))[0])
        return GridOptimum(index, grid.price(index), float(values[index]))

    if relaxed_argmax <= 0:
        index = 0
    else:
        low = grid.clamp_index(int(math.floor(relaxed_argmax / grid.delta)))
        high = grid.clamp_index(int(math.ceil(relaxed_argmax / grid.delta)))
        f_low = float(f(grid.price(low)))
        f_high = float(f(grid.price(high)))
        index = low if at_least(f_low, f_high) else high

    return GridOptimum(index, grid.price(index), float(f(grid.price(index))))


def l_bar(params: MarketParams, q: float, grid: PriceGrid) -> GridOptimum:
    """Grid maximiser of W2 and its value W_{2,delta}*"""
    return discrete_argmax(lambda p: w2(params, q, p), grid, w2_relaxed_argmax(params, q))


def w2_star_grid(params: MarketParams, q: float, grid: PriceGrid) -> float:
    return l_bar(params, q, grid).value


def w4_star_grid(params: MarketParams, q: float, grid: PriceGrid) -> float:
    return discrete_argmax(lambda p: w4(params, q, p), grid, w4_relaxed_argmax(params, q)).value


def monopoly_price(params: MarketParams, q: float, grid: PriceGrid) -> GridOptimum:
    return discrete_argmax(lambda p: w4(params, q, p), grid, w4_relaxed_argmax(params, q))


def q_bar_m(params: MarketParams) -> float:
    """Supplier price beyond which even a lone manufacturer cannot break even"""
    slope = params.alpha * (1.0 - params.eps)
    return (params.d_bar * (1.0 + params.eps) - slope * params.c_m - 2.0 * math.sqrt(slope * params.o_m)) / slope


def q_bar_s(params: MarketParams) -> float:
    """Supplier price beyond which no common price gives both manufacturers W3 >= 0"""
    slope = params.alpha * (1.0 - params.eps)
    return (params.d_bar - slope * params.c_m - 2.0 * math.sqrt(slope * params.o_m)) / slope


def w4_star_relaxed(params: MarketParams, q: float) -> float:
    """max over p >= 0 of W4 in the continuous relaxation; negative exactly when q > q_bar_m"""
    slope = params.alpha * (1.0 - params.eps)
    margin = params.d_bar * (1.0 + params.eps) - slope * effective_cost(params, q)
    if margin <= 0:
        # no price sells above cost, so the best is to sell nothing
        return -params.o_m
    return margin ** 2 / (4.0 * slope) - params.o_m
