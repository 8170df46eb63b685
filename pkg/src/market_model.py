# src/market_model.py
"""Market parameters, the discrete price grid and the customer demand split.

Prices on the grid are integer indices times the denomination ``delta``;
index arithmetic is exact and prices are only materialised as floats when a
utility has to be evaluated. ``None`` stands for the not-operating action
wherever a raw price is expected.
"""
import math
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple, Union

import numpy as np

from .errors import (
    A1Violated,
    EpsOutOfRange,
    GridTooCoarse,
    InvalidParams,
    NegativeCost,
    NonPositiveParameter,
    OmegaZero,
)

logger = logging.getLogger(__name__)

Price = Optional[float]


@dataclass(frozen=True)
class MarketParams:
    d_bar: float
    alpha: float
    eps: float
    omega: float = 0.0
    h: float = 1.0
    c_m: float = 0.0
    o_m: float = 0.0
    c_s: float = 0.0
    o_s: float = 0.0

    @property
    def gamma(self) -> float:
        """(1 - alpha*omega) / (2*omega); only defined for omega > 0"""
        if self.omega <= 0:
            raise OmegaZero("gamma needs omega > 0; use the price-only split", "OmegaZero")
        return (1.0 - self.alpha * self.omega) / (2.0 * self.omega)

    @property
    def max_relevant_price(self) -> float:
        """Price beyond which even a monopolist attracts no demand"""
        return self.d_bar * (1.0 + self.eps) / (self.alpha * (1.0 - self.eps))

    def with_updates(self, **changes) -> "MarketParams":
        values = {**self.__dict__, **changes}
        return MarketParams(**values)


def validate_params(params: MarketParams) -> MarketParams:
    """Return params unchanged if every market constraint holds"""
    for name in ('d_bar', 'alpha', 'eps', 'omega', 'h', 'c_m', 'o_m', 'c_s', 'o_s'):
        if not math.isfinite(getattr(params, name)):
            raise InvalidParams(f"{name} must be finite, got {getattr(params, name)}", "NonFinite")

    if params.d_bar <= 0:
        raise NonPositiveParameter(f"d_bar must be > 0, got {params.d_bar}")
    if params.alpha <= 0:
        raise NonPositiveParameter(f"alpha must be > 0, got {params.alpha}")
    if not 0.0 <= params.eps < 1.0:
        raise EpsOutOfRange(f"eps must lie in [0, 1), got {params.eps}")
    if params.omega < 0:
        raise InvalidParams(f"omega must be >= 0, got {params.omega}", "OmegaNegative")

    for name in ('c_m', 'o_m', 'c_s', 'o_s'):
        if getattr(params, name) < 0:
            raise NegativeCost(f"{name} must be >= 0, got {getattr(params, name)}")

    survival_bound = params.alpha * (params.c_s + params.c_m) - 2.0 * math.sqrt(params.alpha * params.o_m)
    if not params.d_bar > survival_bound:
        raise A1Violated(
            f"market potential too small: d_bar={params.d_bar} <= "
            f"alpha*(c_s+c_m) - 2*sqrt(alpha*o_m) = {survival_bound:.9g}"
        )

    return params


@dataclass(frozen=True)
class PriceGrid:
    delta: float
    max_index: int

    def __post_init__(self):
        if not (self.delta > 0 and math.isfinite(self.delta)):
            raise InvalidParams(f"delta must be a positive finite number, got {self.delta}", "DeltaNonPositive")
        if self.max_index < 0:
            raise InvalidParams(f"max_index must be >= 0, got {self.max_index}", "MaxIndexNegative")

    @classmethod
    def for_params(cls, params: MarketParams, delta: float) -> "PriceGrid":
        """Smallest grid whose truncation never clips a relevant price"""
        if not delta > 0:
            raise InvalidParams(f"delta must be > 0, got {delta}", "DeltaNonPositive")
        max_index = int(math.ceil(params.max_relevant_price / delta - 1e-12)) + 1
        return cls(delta=delta, max_index=max_index)

    @property
    def size(self) -> int:
        return self.max_index + 1

    def price(self, index: int) -> float:
        return index * self.delta

    def prices(self) -> np.ndarray:
        return np.arange(self.size, dtype=float) * self.delta

    def floor_index(self, x: float) -> int:
        return int(math.floor(x / self.delta + 1e-12))

    def ceil_index(self, x: float) -> int:
        return int(math.ceil(x / self.delta - 1e-12))

    def clamp_index(self, index: int) -> int:
        return min(max(index, 0), self.max_index)

    def covers(self, params: MarketParams) -> bool:
        return self.max_index * self.delta >= params.max_relevant_price + self.delta - 1e-9 * self.delta

    def require_coverage(self, params: MarketParams) -> None:
        if not self.covers(params):
            raise GridTooCoarse(
                f"grid tops out at {self.max_index * self.delta:.9g} but needs "
                f"{params.max_relevant_price + self.delta:.9g} (delta={self.delta})"
            )


@dataclass(frozen=True)
class Action:
    """A manufacturer action: a grid index, or ``index=None`` for not operating"""
    index: Optional[int] = None

    @property
    def operates(self) -> bool:
        return self.index is not None

    def price(self, delta: float) -> Price:
        return None if self.index is None else self.index * delta

    def sort_key(self) -> Tuple[int, int]:
        # not operating sorts after every price
        return (1, 0) if self.index is None else (0, self.index)

    def label(self, delta: float) -> str:
        return "n_o" if self.index is None else f"{self.index * delta:.9g}"


NO_OPERATE = Action(None)


@dataclass(frozen=True)
class ActionProfile:
    a_i: Action
    a_j: Action
    q: Optional[float]

    def __post_init__(self):
        if self.q is not None and self.q < 0:
            raise InvalidParams(f"supplier price must be >= 0, got {self.q}", "NegativeSupplierPrice")

    def mirrored(self) -> "ActionProfile":
        return ActionProfile(self.a_j, self.a_i, self.q)


class BoundaryCase(str, Enum):
    ALL_TO_I = "AllToI"
    ALL_TO_J = "AllToJ"
    INTERIOR = "Interior"
    DEGENERATE = "Degenerate"


@dataclass(frozen=True)
class MeanFieldSplit:
    mu_i: float
    mu_j: float
    boundary_case: BoundaryCase

    def __post_init__(self):
        if not 0.0 <= self.mu_i <= 1.0 or abs(self.mu_i + self.mu_j - 1.0) > 1e-12:
            raise ValueError(f"invalid split ({self.mu_i}, {self.mu_j})")

    @classmethod
    def of(cls, mu_i: float, boundary_case: BoundaryCase) -> "MeanFieldSplit":
        mu_i = min(max(mu_i, 0.0), 1.0)
        return cls(mu_i=mu_i, mu_j=1.0 - mu_i, boundary_case=boundary_case)


def _nldp_mass(params: MarketParams, p_i: float, p_j: float) -> float:
    return params.eps * params.alpha * (p_i + p_j)


def mean_field_split_general(params: MarketParams, p_i: float, p_j: float) -> MeanFieldSplit:
    """Equilibrium split of the strategic customers when they also weigh QoS"""
    if params.omega <= 0:
        raise OmegaZero("general split needs omega > 0; use mean_field_split_price_only", "OmegaZero")
    if p_i is None or p_j is None:
        raise ValueError("general split is only defined for two operating manufacturers")

    if p_i + p_j == 0:
        return MeanFieldSplit.of(0.5, BoundaryCase.DEGENERATE)

    alpha_omega = params.alpha * params.omega
    spread = (p_i - p_j) * (1.0 - alpha_omega)
    pull = (p_i + p_j) * alpha_omega * params.eps

    if spread > pull:
        return MeanFieldSplit.of(0.0, BoundaryCase.ALL_TO_J)
    if spread < -pull:
        return MeanFieldSplit.of(1.0, BoundaryCase.ALL_TO_I)
    if pull == 0:
        # eps == 0: no strategic mass to split
        return MeanFieldSplit.of(0.5, BoundaryCase.DEGENERATE)

    return MeanFieldSplit.of(0.5 - spread / (2.0 * pull), BoundaryCase.INTERIOR)


def mean_field_split_price_only(p_i: Union[Action, Price], p_j: Union[Action, Price]) -> MeanFieldSplit:
    """Split when customers only look at prices: the cheaper side takes all.

    Accepts two grid actions (compared by index) or two raw prices.
    """
    if isinstance(p_i, Action) and isinstance(p_j, Action):
        p_i, p_j = p_i.index, p_j.index
    elif isinstance(p_i, Action) or isinstance(p_j, Action):
        raise TypeError("pass two grid actions or two prices, not a mix")
    if p_i is None or p_j is None:
        raise ValueError("price-only split needs two quoted prices")
    if p_i < p_j:
        return MeanFieldSplit.of(1.0, BoundaryCase.ALL_TO_I)
    if p_i > p_j:
        return MeanFieldSplit.of(0.0, BoundaryCase.ALL_TO_J)
    return MeanFieldSplit.of(0.5, BoundaryCase.INTERIOR)


def demand(params: MarketParams, p_i: float, p_j: Price) -> float:
    """Demand of manufacturer i in the price-only (omega = 0) market"""
    if p_i is None:
        raise ValueError("demand is only defined for an operating manufacturer")
    if p_j is None:
        return max(params.d_bar * (1.0 + params.eps) - params.alpha * (1.0 - params.eps) * p_i, 0.0)

    split = mean_field_split_price_only(p_i, p_j)
    return max(params.d_bar - params.alpha * p_i + params.eps * params.alpha * split.mu_i * (p_i + p_j), 0.0)


def demand_general(params: MarketParams, p_i: float, p_j: Price) -> float:
    """Demand of manufacturer i with the QoS-aware display, evaluated as written"""
    if p_i is None:
        raise ValueError("demand is only defined for an operating manufacturer")
    if p_j is None:
        return max(params.d_bar * (1.0 + params.eps) - params.alpha * p_i, 0.0)

    gamma = params.gamma
    base = params.d_bar - params.alpha * p_i
    nldp = _nldp_mass(params, p_i, p_j)
    shift = (p_i - p_j) * gamma

    if shift > 2.0 * nldp:
        return max(base, 0.0)
    if shift < -2.0 * nldp:
        return max(base + nldp, 0.0)
    return max(base + nldp - shift, 0.0)


def demand_from_split(params: MarketParams, p_i: float, p_j: Price) -> float:
    """Demand of manufacturer i using its equilibrium share of strategic customers"""
    if p_j is None:
        return demand(params, p_i, None)
    split = mean_field_split_general(params, p_i, p_j)
    return max(params.d_bar - params.alpha * p_i + split.mu_i * _nldp_mass(params, p_i, p_j), 0.0)


def customer_utility(params: MarketParams, price_a: float, mu_a: float, p_i: float, p_j: float) -> float:
    """Utility of a strategic customer buying at price_a when a mu_a share joins that manufacturer"""
    customer_base = mu_a * _nldp_mass(params, p_i, p_j) + params.d_bar - params.alpha * price_a
    return -price_a + params.omega * (params.h - customer_base)


def is_mean_field_equilibrium(params: MarketParams, p_i: float, p_j: float,
                              split: MeanFieldSplit, tol: float = 1e-9) -> bool:
    """Every manufacturer chosen with positive mass must be a best choice"""
    u_i = customer_utility(params, p_i, split.mu_i, p_i, p_j)
    u_j = customer_utility(params, p_j, split.mu_j, p_i, p_j)
    best = max(u_i, u_j)
    slack = tol * max(1.0, abs(best))

    if split.mu_i > 0 and u_i < best - slack:
        return False
    if split.mu_j > 0 and u_j < best - slack:
        return False
    return True
