# src/stackelberg.py
"""Focal equilibrium selection and the supplier's price sweep."""
import math
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from .errors import NoFeasibleQ
from .market_model import MarketParams, PriceGrid
from .equilibria import (
    EquilibriumSet,
    RegimeLabel,
    SymmetricNeInterval,
    brute_force_nash,
    classify_regime,
    symmetric_ne_interval,
)
from .payoffs import at_least, discrete_argmax, q_bar_m, q_bar_s, w2_star_grid, w3, w3_relaxed_argmax

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FocalNe:
    l_star: Optional[int] = None
    price: Optional[float] = None
    w3_value: Optional[float] = None

    @property
    def exists(self) -> bool:
        return self.l_star is not None


NO_FOCAL = FocalNe()


def _interval_or_none(params: MarketParams, q: float, grid: PriceGrid) -> Optional[SymmetricNeInterval]:
    if classify_regime(params, q, grid) == RegimeLabel.COMPLETE_CHOKING or q > q_bar_s(params):
        return None
    return symmetric_ne_interval(params, q, grid)


def focal_ne(params: MarketParams, q: float, grid: PriceGrid,
             oracle: Optional[EquilibriumSet] = None) -> FocalNe:
    """Symmetric NE with the highest common utility; lower price wins ties"""
    interval = _interval_or_none(params, q, grid)
    if interval is None:
        return NO_FOCAL

    if oracle is None:
        oracle = brute_force_nash(params, q, grid)
    confirmed = [l for l in oracle.symmetric if interval.contains(l * grid.delta)]
    if not confirmed:
        return NO_FOCAL

    best_l, best_value = None, -math.inf
    for l in confirmed:
        value = float(w3(params, q, l * grid.delta))
        if best_l is None or not at_least(best_value, value):
            best_l, best_value = l, value

    return FocalNe(l_star=best_l, price=best_l * grid.delta, w3_value=best_value)


def focal_ne_capped(params: MarketParams, q: float, grid: PriceGrid) -> FocalNe:
    """Alternative focal rule: the W3 grid maximiser capped by the interval's top point"""
    interval = _interval_or_none(params, q, grid)
    if interval is None or not interval.nonempty:
        return NO_FOCAL

    peak = discrete_argmax(lambda p: w3(params, q, p), grid, w3_relaxed_argmax(params, q)).index
    k = min(peak, interval.indices[-1])
    if k < interval.indices[0]:
        return NO_FOCAL
    return FocalNe(l_star=k, price=k * grid.delta, w3_value=float(w3(params, q, k * grid.delta)))


def supplier_utility_at_focal(params: MarketParams, q: float, focal: FocalNe) -> Optional[float]:
    """Supplier utility when both manufacturers sit at the focal price"""
    if not focal.exists:
        return None
    share = max(params.d_bar - params.alpha * (1.0 - params.eps) * focal.price, 0.0)
    return 2.0 * share * (q - params.c_s) - params.o_s


@dataclass(frozen=True)
class SupplierSweepRow:
    q: float
    regime: RegimeLabel
    focal: FocalNe
    u_s: Optional[float]
    u_m: Optional[float]
    w2_star: float
    operating_ne_count: int
    capped_price: Optional[float] = None

    @property
    def feasible(self) -> bool:
        return self.focal.exists


@dataclass
class SupplierSweep:
    delta: float
    rows: List[SupplierSweepRow] = field(default_factory=list)
    partial_choking_q: Optional[float] = None

    def optimum(self) -> Tuple[float, float]:
        return optimal_supplier_price(self.rows)


def supplier_price_values(q_step: float, q_max: float, include_zero: bool = False) -> List[float]:
    """Arithmetic supplier-price grid, built from integer multiples of q_step"""
    if not q_step > 0:
        raise ValueError(f"q_step must be > 0, got {q_step}")
    if q_max < q_step and not include_zero:
        raise ValueError(f"q_max={q_max} must be >= q_step={q_step}")
    count = int(math.floor(q_max / q_step + 1e-9))
    start = 0 if include_zero else 1
    return [k * q_step for k in range(start, count + 1)]


def default_q_grid(params: MarketParams, delta: float) -> Tuple[float, float]:
    return delta / 10.0, q_bar_m(params) + delta


def _sweep_row(task: Tuple[MarketParams, float, PriceGrid]) -> SupplierSweepRow:
    params, q, grid = task
    oracle = brute_force_nash(params, q, grid)
    focal = focal_ne(params, q, grid, oracle)
    capped = focal_ne_capped(params, q, grid)
    return SupplierSweepRow(
        q=q,
        regime=oracle.regime,
        focal=focal,
        u_s=supplier_utility_at_focal(params, q, focal),
        u_m=focal.w3_value,
        w2_star=w2_star_grid(params, q, grid),
        operating_ne_count=oracle.operating_count,
        capped_price=capped.price,
    )


def partial_choking_threshold(params: MarketParams, grid: PriceGrid, q_values: Sequence[float]) -> Optional[float]:
    """Smallest swept supplier price at which the dearer manufacturer cannot break even"""
    for q in sorted(q_values):
        if not at_least(w2_star_grid(params, q, grid), 0.0):
            return q
    return None


def supplier_sweep(params: MarketParams, grid: PriceGrid, q_step: Optional[float] = None,
                   q_max: Optional[float] = None, workers: int = 1) -> SupplierSweep:
    """Regime, focal NE and supplier utility for every supplier price on the sweep grid"""
    default_step, default_max = default_q_grid(params, grid.delta)
    q_values = supplier_price_values(q_step or default_step, default_max if q_max is None else q_max)
    tasks = [(params, q, grid) for q in q_values]

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            rows = list(executor.map(_sweep_row, tasks, chunksize=16))
    else:
        rows = [_sweep_row(task) for task in tasks]

    rows.sort(key=lambda row: row.q)
    sweep = SupplierSweep(delta=grid.delta, rows=rows,
                          partial_choking_q=partial_choking_threshold(params, grid, q_values))

    feasible = sum(row.feasible for row in rows)
    logger.info(f"supplier sweep delta={grid.delta:.9g}: {len(rows)} prices, {feasible} with a focal NE, "
                f"partial choking from q={sweep.partial_choking_q}")
    return sweep


def optimal_supplier_price(rows: Sequence[SupplierSweepRow]) -> Tuple[float, float]:
    """Best supplier price among rows with a focal NE; smaller q wins ties"""
    best: Optional[Tuple[float, float]] = None
    for row in sorted(rows, key=lambda r: r.q):
        if not row.feasible:
            continue
        if best is None or not at_least(best[1], row.u_s):
            best = (row.q, row.u_s)

    if best is None:
        raise NoFeasibleQ("no supplier price in the sweep leads to a focal NE")
    return best


def sweep_summary(sweep: SupplierSweep) -> Dict:
    summary = {
        'delta': sweep.delta,
        'partial_choking_q': sweep.partial_choking_q,
        'q_star': None,
        'u_s_star': None,
        'argmax_at_or_above_threshold': None,
    }
    try:
        q_star, u_star = sweep.optimum()
    except NoFeasibleQ:
        return summary

    summary['q_star'] = q_star
    summary['u_s_star'] = u_star
    if sweep.partial_choking_q is not None:
        summary['argmax_at_or_above_threshold'] = q_star >= sweep.partial_choking_q
    return summary
