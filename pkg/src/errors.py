# src/errors.py
from typing import Optional


class SupplyChainGameError(Exception):
    """Base class for every error raised by the solver"""

    constraint: str = "unspecified"

    def __init__(self, message: str, constraint: Optional[str] = None):
        super().__init__(message)
        if constraint is not None:
            self.constraint = constraint


class InvalidParams(SupplyChainGameError, ValueError):
    constraint = "invalid_params"


class A1Violated(InvalidParams):
    constraint = "A1Violated"


class EpsOutOfRange(InvalidParams):
    constraint = "EpsOutOfRange"


class NonPositiveParameter(InvalidParams):
    constraint = "NonPositiveParameter"


class NegativeCost(InvalidParams):
    constraint = "NegativeCost"


class OmegaZero(SupplyChainGameError, ValueError):
    """General-omega formulas were asked for with omega == 0"""
    constraint = "OmegaZero"


class GridTooCoarse(SupplyChainGameError, ValueError):
    """The price grid is truncated below the highest price that still matters"""
    constraint = "GridTooCoarse"


class HypothesisViolated(SupplyChainGameError):
    constraint = "HypothesisViolated"


class NoFeasibleQ(SupplyChainGameError):
    constraint = "NoFeasibleQ"


class ConfigError(SupplyChainGameError, ValueError):
    constraint = "ConfigError"
