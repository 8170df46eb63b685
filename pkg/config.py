# config.py
import os
from dataclasses import dataclass, field

from dotenv import load_dotenv

load_dotenv()

ENV_PREFIX = "SCGAME_"


def _env_float(name: str, default: float) -> float:
    value = os.getenv(ENV_PREFIX + name)
    return float(value) if value not in (None, "") else default


def _env_int(name: str, default: int) -> int:
    value = os.getenv(ENV_PREFIX + name)
    return int(value) if value not in (None, "") else default


@dataclass
class Config:
    # Market constants
    D_BAR: float = field(default_factory=lambda: _env_float("D_BAR", 8.0))
    ALPHA: float = field(default_factory=lambda: _env_float("ALPHA", 0.5))
    EPS: float = field(default_factory=lambda: _env_float("EPS", 0.8))
    OMEGA: float = field(default_factory=lambda: _env_float("OMEGA", 0.0))
    H: float = field(default_factory=lambda: _env_float("H", 1.0))
    C_M: float = field(default_factory=lambda: _env_float("C_M", 2.0))
    O_M: float = field(default_factory=lambda: _env_float("O_M", 2.0))
    C_S: float = field(default_factory=lambda: _env_float("C_S", 0.01))
    O_S: float = field(default_factory=lambda: _env_float("O_S", 0.01))

    # Price grid
    DELTA: float = field(default_factory=lambda: _env_float("DELTA", 4.0))

    # Utility comparisons
    REL_TOL: float = 1e-9
    ABS_TOL: float = 1e-12

    # Brute force works on blocks of at most this many utility entries
    BLOCK_ENTRIES: int = 4_000_000

    # Halvings tried when searching for a step with no operating equilibrium
    MIN_DELTA_HALVINGS: int = 8

    # Reports
    SIGNIFICANT_DIGITS: int = 9
    SCHEMA_VERSION: int = 1
    # share of rising steps a per-q count trend may show and still pass
    TREND_MAX_EXCEPTION_RATE: float = 0.01

    # Performance
    MAX_WORKERS: int = field(default_factory=lambda: _env_int("MAX_WORKERS", 1))

    LOG_LEVEL: str = field(default_factory=lambda: os.getenv(ENV_PREFIX + "LOG_LEVEL", "INFO"))


config = Config()
