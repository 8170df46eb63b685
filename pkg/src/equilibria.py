# src/equilibria.py
"""Pure Nash equilibria of the manufacturer game at a fixed supplier price.

The exhaustive solver is the ground truth. The closed-form interval and the
asymmetric-candidate test are predictions that are compared against it.
"""
import math
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, FrozenSet, List, Optional, Tuple

import numpy as np

from config import config
from .errors import HypothesisViolated
from .market_model import (
    MarketParams,
    PriceGrid,
    Action,
    NO_OPERATE,
    validate_params,
)
from .payoffs import (
    at_least,
    effective_cost,
    l_bar,
    monopoly_price,
    price_utility_block,
    q_bar_m,
    q_bar_s,
    tolerance,
    utilities_close,
    w1,
    w2_star_grid,
    w3,
    w4,
    w4_star_grid,
)

logger = logging.getLogger(__name__)

# (own index, opponent index) with None for not operating
IndexProfile = Tuple[Optional[int], Optional[int]]


class RegimeLabel(str, Enum):
    COMPLETE_CHOKING = "CompleteChoking"
    PARTIAL_CHOKING = "PartialChoking"
    DUOPOLY = "Duopoly"


class Source(str, Enum):
    CLOSED_FORM = "ClosedForm"
    BRUTE_FORCE = "BruteForce"


def classify_regime(params: MarketParams, q: float, grid: PriceGrid) -> RegimeLabel:
    """Supplier-price regime from the best monopoly and best dearer-side utilities"""
    if not at_least(w4_star_grid(params, q, grid), 0.0):
        return RegimeLabel.COMPLETE_CHOKING
    if at_least(w2_star_grid(params, q, grid), 0.0):
        return RegimeLabel.DUOPOLY
    return RegimeLabel.PARTIAL_CHOKING


@dataclass
class EquilibriumSet:
    regime: RegimeLabel
    delta: float
    symmetric: List[int] = field(default_factory=list)
    asymmetric: List[Tuple[int, int]] = field(default_factory=list)
    one_sided: List[IndexProfile] = field(default_factory=list)
    shutdown_ne: bool = False
    source: Source = Source.BRUTE_FORCE

    @property
    def symmetric_prices(self) -> List[float]:
        return [l * self.delta for l in self.symmetric]

    @property
    def operating_count(self) -> int:
        return len(self.symmetric) + len(self.asymmetric)

    @property
    def total_count(self) -> int:
        return self.operating_count + len(self.one_sided) + int(self.shutdown_ne)

    def to_dict(self) -> Dict:
        def price(index: Optional[int]):
            return None if index is None else index * self.delta

        return {
            'source': self.source.value,
            'regime': self.regime.value,
            'delta': self.delta,
            'symmetric': self.symmetric_prices,
            'asymmetric': [[price(a), price(b)] for a, b in self.asymmetric],
            'one_sided': [[price(a), price(b)] for a, b in self.one_sided],
            'shutdown_ne': self.shutdown_ne,
            'operating_count': self.operating_count,
        }


@dataclass(frozen=True)
class BestResponse:
    opponent: Action
    actions: Tuple[Action, ...]
    value: float
    candidates: Tuple[Action, ...]
    within_candidates: bool


def _candidate_set(params: MarketParams, q: float, grid: PriceGrid, opponent: Action,
                   regime: RegimeLabel) -> Tuple[Action, ...]:
    if regime == RegimeLabel.COMPLETE_CHOKING:
        return (NO_OPERATE,)
    if not opponent.operates:
        return (Action(monopoly_price(params, q, grid).index), NO_OPERATE)

    l = opponent.index
    candidates = [Action(l)]
    if l >= 1:
        candidates.insert(0, Action(l - 1))
    if regime == RegimeLabel.DUOPOLY:
        candidates.append(Action(l_bar(params, q, grid).index))
    candidates.append(NO_OPERATE)
    return tuple(dict.fromkeys(candidates))


def _tie_mask(values: np.ndarray, best: np.ndarray) -> np.ndarray:
    slack = np.maximum(config.ABS_TOL, config.REL_TOL * np.maximum(np.abs(values), np.abs(best)))
    return values >= best - slack


def best_response(params: MarketParams, q: float, grid: PriceGrid, opponent: Action) -> BestResponse:
    """All utility-maximising actions against ``opponent``, ties included"""
    own = np.arange(grid.size)
    if opponent.operates:
        utilities = price_utility_block(params, q, grid, own, np.array([opponent.index]))[:, 0]
    else:
        utilities = np.asarray(w4(params, q, grid.prices()), dtype=float)

    best = max(float(utilities.max()), 0.0)
    members = [Action(int(l)) for l in np.flatnonzero(_tie_mask(utilities, np.float64(best)))]
    if at_least(0.0, best):
        members.append(NO_OPERATE)

    regime = classify_regime(params, q, grid)
    candidates = _candidate_set(params, q, grid, opponent, regime)
    within = set(members) <= set(candidates)
    if not within:
        logger.warning(
            f"best response to {opponent.label(grid.delta)} at q={q:.9g}, delta={grid.delta:.9g} "
            f"leaves the candidate set: {[a.label(grid.delta) for a in members]}"
        )

    return BestResponse(
        opponent=opponent,
        actions=tuple(sorted(members, key=Action.sort_key)),
        value=best,
        candidates=candidates,
        within_candidates=within,
    )


def _best_response_table(params: MarketParams, q: float, grid: PriceGrid) -> List[FrozenSet[int]]:
    """Best-response sets for every opponent action; index grid.size means not operating"""
    n = grid.size
    idle = n
    own = np.arange(n)
    table: List[FrozenSet[int]] = []

    chunk = max(1, config.BLOCK_ENTRIES // n)
    for start in range(0, n, chunk):
        opponent = np.arange(start, min(n, start + chunk))
        block = price_utility_block(params, q, grid, own, opponent)
        best = np.maximum(block.max(axis=0), 0.0)
        ties = _tie_mask(block, best[None, :])
        idle_ties = _tie_mask(np.zeros_like(best), best)

        members: List[List[int]] = [[] for _ in range(len(opponent))]
        cols, rows = np.nonzero(ties.T)
        for col, row in zip(cols.tolist(), rows.tolist()):
            members[col].append(row)
        for col in range(len(opponent)):
            if idle_ties[col]:
                members[col].append(idle)
            table.append(frozenset(members[col]))

    monopoly = np.asarray(w4(params, q, grid.prices()), dtype=float)
    best = max(float(monopoly.max()), 0.0)
    idle_members = set(np.flatnonzero(_tie_mask(monopoly, np.float64(best))).tolist())
    if at_least(0.0, best):
        idle_members.add(idle)
    table.append(frozenset(idle_members))
    return table


def brute_force_nash(params: MarketParams, q: float, grid: PriceGrid) -> EquilibriumSet:
    """Every pure NE found by checking mutual best responses over the whole grid"""
    validate_params(params)
    grid.require_coverage(params)

    n = grid.size
    idle = n
    table = _best_response_table(params, q, grid)
    result = EquilibriumSet(regime=classify_regime(params, q, grid), delta=grid.delta,
                            source=Source.BRUTE_FORCE)

    for b in range(n + 1):
        for a in table[b]:
            if b not in table[a]:
                continue
            if a == idle and b == idle:
                result.shutdown_ne = True
            elif a == idle or b == idle:
                result.one_sided.append((None if a == idle else a, None if b == idle else b))
            elif a == b:
                result.symmetric.append(a)
            else:
                result.asymmetric.append((a, b))

    result.symmetric.sort()
    result.asymmetric.sort()
    result.one_sided.sort(key=lambda pair: tuple(Action(x).sort_key() for x in pair))

    logger.debug(
        f"brute force q={q:.9g} delta={grid.delta:.9g} L={grid.max_index}: "
        f"{len(result.symmetric)} symmetric, {len(result.asymmetric)} asymmetric, "
        f"shutdown={result.shutdown_ne}"
    )
    return result


@dataclass(frozen=True)
class SymmetricNeInterval:
    s: float
    e: float
    lambda_s: float
    rho_s: float
    lambda_e: float
    rho_e: float
    lambda_s_under: float
    s_tight: float
    e_tight: float
    s_quadratic: Optional[float]
    e_quadratic: Optional[float]
    e_tilde: float
    v_root: float
    regime: RegimeLabel
    delta: float
    indices: Tuple[int, ...]

    @property
    def nonempty(self) -> bool:
        return len(self.indices) > 0

    @property
    def prices(self) -> List[float]:
        return [l * self.delta for l in self.indices]

    def near_boundary(self, price: float) -> bool:
        return (abs(price - self.s) <= tolerance(price, self.s)
                or abs(price - self.e) <= tolerance(price, self.e))

    def contains(self, price: float) -> bool:
        return self.s - tolerance(price, self.s) <= price <= self.e + tolerance(price, self.e)


def _upper_root(a: float, b: float, c: float) -> float:
    """Largest root of -a x^2 + b x + c = 0 with a >= 0 and c >= 0"""
    if a == 0:
        return math.inf if b >= 0 else c / -b
    return (b + math.sqrt(b * b + 4.0 * a * c)) / (2.0 * a)


def v_root(params: MarketParams, q: float, delta: float) -> float:
    """Price above which undercutting by one step beats matching"""
    lambda_e, rho_e = _undercut_coefficients(params, q, delta)
    return _upper_root(params.alpha * params.eps, lambda_e, rho_e)


def _undercut_coefficients(params: MarketParams, q: float, delta: float) -> Tuple[float, float]:
    cost = effective_cost(params, q)
    lambda_e = params.alpha * cost * params.eps + params.alpha * delta * (3.0 * params.eps - 2.0)
    rho_e = delta * params.alpha * (1.0 - params.eps) * (cost + delta) + params.d_bar * delta
    return lambda_e, rho_e


def symmetric_ne_interval(params: MarketParams, q: float, grid: PriceGrid) -> SymmetricNeInterval:
    """Price interval whose positive grid points are symmetric operating NEs"""
    regime = classify_regime(params, q, grid)
    if regime == RegimeLabel.COMPLETE_CHOKING:
        raise HypothesisViolated(f"q={q:.9g} is in the complete choking regime")
    if q > q_bar_s(params):
        raise HypothesisViolated(f"q={q:.9g} exceeds q_bar_s={q_bar_s(params):.9g}")

    cost = effective_cost(params, q)
    slope = params.alpha * (1.0 - params.eps)
    w2_star = w2_star_grid(params, q, grid)

    lambda_s = params.d_bar + slope * cost
    rho_s = -params.d_bar * cost - max(w2_star, 0.0) - params.o_m
    lambda_s_under = params.d_bar - slope * cost
    lambda_e, rho_e = _undercut_coefficients(params, q, grid.delta)

    tight_root = math.sqrt(max(lambda_s_under ** 2 - 4.0 * slope * params.o_m, 0.0))
    s_tight = (lambda_s - tight_root) / (2.0 * slope)
    e_tight = (lambda_s + tight_root) / (2.0 * slope)

    discriminant = lambda_s ** 2 + 4.0 * slope * rho_s
    if discriminant >= 0:
        s_quadratic = (lambda_s - math.sqrt(discriminant)) / (2.0 * slope)
        e_quadratic = (lambda_s + math.sqrt(discriminant)) / (2.0 * slope)
    else:
        s_quadratic = e_quadratic = None

    root = _upper_root(params.alpha * params.eps, lambda_e, rho_e)
    e_tilde = min(root, e_tight)

    duopoly = regime == RegimeLabel.DUOPOLY
    if duopoly and s_quadratic is None:
        # W3 never reaches the dearer side's best utility
        s, e = math.inf, -math.inf
    elif duopoly:
        s = max(s_tight, s_quadratic)
        e = min(e_quadratic, e_tilde)
    else:
        s = s_tight
        e = e_tilde

    indices: Tuple[int, ...] = ()
    if s <= e:
        low = max(1, grid.ceil_index(s))
        high = min(grid.floor_index(e), grid.max_index)
        indices = tuple(range(low, high + 1))

    return SymmetricNeInterval(
        s=s, e=e,
        lambda_s=lambda_s, rho_s=rho_s,
        lambda_e=lambda_e, rho_e=rho_e,
        lambda_s_under=lambda_s_under,
        s_tight=s_tight, e_tight=e_tight,
        s_quadratic=s_quadratic, e_quadratic=e_quadratic,
        e_tilde=e_tilde, v_root=root,
        regime=regime, delta=grid.delta,
        indices=indices,
    )


@dataclass(frozen=True)
class VOfL:
    l: int
    direct: float
    quadratic: float
    clamp_free: bool

    @property
    def agree(self) -> bool:
        return abs(self.direct - self.quadratic) <= max(
            config.ABS_TOL, config.REL_TOL * max(abs(self.direct), abs(self.quadratic), 1.0))


def v_of_l(params: MarketParams, q: float, grid: PriceGrid, l: int) -> VOfL:
    """Gain from matching at l*delta instead of undercutting by one step"""
    if l < 1:
        raise ValueError(f"l must be a positive integer, got {l}")

    price = l * grid.delta
    lower = (l - 1) * grid.delta
    direct = float(w3(params, q, price) - w1(params, q, lower, price))

    lambda_e, rho_e = _undercut_coefficients(params, q, grid.delta)
    quadratic = -price ** 2 * params.alpha * params.eps + price * lambda_e + rho_e

    matched_share = params.d_bar - params.alpha * price * (1.0 - params.eps)
    undercut_share = params.d_bar - params.alpha * lower * (1.0 - params.eps) + params.eps * params.alpha * price
    result = VOfL(l=l, direct=direct, quadratic=quadratic,
                  clamp_free=matched_share >= 0 and undercut_share >= 0)
    if result.clamp_free and not result.agree:
        logger.warning(f"v({l}) paths disagree: direct={direct:.12g} quadratic={quadratic:.12g}")
    return result


def asymmetric_ne(params: MarketParams, q: float, grid: PriceGrid) -> List[Tuple[int, int]]:
    """The (l_bar, l_bar - 1) candidate and its mirror, when they form an NE"""
    if classify_regime(params, q, grid) != RegimeLabel.DUOPOLY:
        return []

    top = l_bar(params, q, grid)
    lb = top.index
    if lb < 1:
        return []

    high = lb * grid.delta
    low = (lb - 1) * grid.delta
    root = v_root(params, q, grid.delta)
    undercut_holds = high >= root - tolerance(high, root)

    stay_low = float(w3(params, q, low))
    deeper = float(w1(params, q, (lb - 2) * grid.delta, low)) if lb >= 2 else -math.inf
    stay_high_holds = at_least(top.value, min(deeper, stay_low))

    if not (undercut_holds and stay_high_holds):
        return []

    # the displayed conditions are necessary only; confirm with exact best responses
    high_br = best_response(params, q, grid, Action(lb - 1))
    low_br = best_response(params, q, grid, Action(lb))
    if Action(lb) in high_br.actions and Action(lb - 1) in low_br.actions:
        return [(lb - 1, lb), (lb, lb - 1)]

    logger.info(f"asymmetric candidate ({high:.9g}, {low:.9g}) passes the conditions but not the "
                f"best-response check at q={q:.9g}")
    return []


def closed_form_nash(params: MarketParams, q: float, grid: PriceGrid) -> Tuple[EquilibriumSet, Optional[SymmetricNeInterval]]:
    """Equilibria predicted by the regime rules, the symmetric interval and the asymmetric candidate"""
    regime = classify_regime(params, q, grid)
    result = EquilibriumSet(regime=regime, delta=grid.delta, source=Source.CLOSED_FORM)

    if regime == RegimeLabel.COMPLETE_CHOKING:
        result.shutdown_ne = True
        return result, None

    interval = None
    if q <= q_bar_s(params):
        interval = symmetric_ne_interval(params, q, grid)
        result.symmetric = list(interval.indices)

    result.asymmetric = sorted(asymmetric_ne(params, q, grid))
    result.shutdown_ne = utilities_close(w4_star_grid(params, q, grid), 0.0)
    return result, interval


@dataclass
class EquilibriumDiff:
    symmetric_oracle_only: List[float] = field(default_factory=list)
    symmetric_closed_only: List[float] = field(default_factory=list)
    boundary_ties: List[float] = field(default_factory=list)
    asymmetric_oracle_only: List[Tuple[float, float]] = field(default_factory=list)
    asymmetric_closed_only: List[Tuple[float, float]] = field(default_factory=list)
    shutdown_mismatch: bool = False
    # not characterised in closed form; reported, never a disagreement
    one_sided: List[Tuple[Optional[float], Optional[float]]] = field(default_factory=list)

    @property
    def agree(self) -> bool:
        return not (self.symmetric_oracle_only or self.symmetric_closed_only
                    or self.asymmetric_oracle_only or self.asymmetric_closed_only
                    or self.shutdown_mismatch)

    def to_dict(self) -> Dict:
        return {
            'agree': self.agree,
            'symmetric_oracle_only': self.symmetric_oracle_only,
            'symmetric_closed_only': self.symmetric_closed_only,
            'boundary_ties': self.boundary_ties,
            'asymmetric_oracle_only': [list(p) for p in self.asymmetric_oracle_only],
            'asymmetric_closed_only': [list(p) for p in self.asymmetric_closed_only],
            'shutdown_mismatch': self.shutdown_mismatch,
            'one_sided': [list(p) for p in self.one_sided],
        }


def diff_equilibria(oracle: EquilibriumSet, closed: EquilibriumSet,
                    interval: Optional[SymmetricNeInterval]) -> EquilibriumDiff:
    """Disagreements between oracle and closed form; interval-boundary ties are excused"""
    delta = oracle.delta
    diff = EquilibriumDiff()

    for l in sorted(set(oracle.symmetric) ^ set(closed.symmetric)):
        price = l * delta
        if interval is not None and interval.near_boundary(price):
            diff.boundary_ties.append(price)
        elif l in oracle.symmetric:
            diff.symmetric_oracle_only.append(price)
        else:
            diff.symmetric_closed_only.append(price)

    oracle_asym, closed_asym = set(oracle.asymmetric), set(closed.asymmetric)
    diff.asymmetric_oracle_only = [(a * delta, b * delta) for a, b in sorted(oracle_asym - closed_asym)]
    diff.asymmetric_closed_only = [(a * delta, b * delta) for a, b in sorted(closed_asym - oracle_asym)]
    diff.shutdown_mismatch = oracle.shutdown_ne != closed.shutdown_ne
    diff.one_sided = [
        (None if a is None else a * delta, None if b is None else b * delta) for a, b in oracle.one_sided
    ]

    if not diff.agree:
        logger.warning(f"oracle and closed form disagree: {diff.to_dict()}")
    return diff


def is_mirror_of_l_bar(params: MarketParams, q: float, grid: PriceGrid, profile: Tuple[int, int]) -> bool:
    lb = l_bar(params, q, grid).index
    return profile in {(lb, lb - 1), (lb - 1, lb)}


@dataclass(frozen=True)
class DeltaTracePoint:
    delta: float
    max_index: int
    operating_count: int
    symmetric_count: int
    asymmetric_count: int


@dataclass(frozen=True)
class MinDeltaReport:
    q: float
    trace: Tuple[DeltaTracePoint, ...]
    threshold_delta: Optional[float]


def min_delta_no_ne(params: MarketParams, q: float, delta_hi: float, halvings: int,
                    delta_floor: Optional[float] = None) -> MinDeltaReport:
    """Halve delta until the game has no operating NE and record the NE counts.

    With ``delta_floor`` the halving stops above the floor and the floor
    itself is tested last.
    """
    if not delta_hi > 0:
        raise ValueError(f"delta_hi must be > 0, got {delta_hi}")

    deltas = [delta_hi / 2 ** k for k in range(halvings + 1)]
    if delta_floor is not None:
        deltas = [d for d in deltas if d > delta_floor] + [delta_floor]

    trace = []
    for delta in deltas:
        grid = PriceGrid.for_params(params, delta)
        found = brute_force_nash(params, q, grid)
        trace.append(DeltaTracePoint(
            delta=delta,
            max_index=grid.max_index,
            operating_count=found.operating_count,
            symmetric_count=len(found.symmetric),
            asymmetric_count=len(found.asymmetric),
        ))
        logger.info(f"q={q:.9g} delta={delta:.9g}: {found.operating_count} operating NE")

    threshold = next((point.delta for point in trace if point.operating_count == 0), None)
    return MinDeltaReport(q=q, trace=tuple(trace), threshold_delta=threshold)


@dataclass
class AgreementReport:
    draws: int = 0
    points: int = 0
    symmetric_disagreements: List[Dict] = field(default_factory=list)
    asymmetric_shape_violations: List[Dict] = field(default_factory=list)
    choking_violations: List[Dict] = field(default_factory=list)
    boundary_ties: int = 0

    @property
    def agree(self) -> bool:
        return not (self.symmetric_disagreements or self.asymmetric_shape_violations
                    or self.choking_violations)


def random_params(rng: np.random.Generator, eps_range: Tuple[float, float] = (0.0, 0.95)) -> MarketParams:
    """Random market satisfying the survival assumption"""
    while True:
        params = MarketParams(
            d_bar=float(rng.uniform(2.0, 20.0)),
            alpha=float(rng.uniform(0.1, 2.0)),
            eps=float(rng.uniform(*eps_range)),
            c_m=float(rng.uniform(0.0, 4.0)),
            o_m=float(rng.uniform(0.0, 4.0)),
            c_s=float(rng.uniform(0.0, 0.5)),
            o_s=float(rng.uniform(0.0, 0.5)),
        )
        try:
            validate_params(params)
        except ValueError:
            continue
        if q_bar_s(params) > 0:
            return params


def sample_oracle_agreement(seed: int, draws: int, points: int, max_index: int = 500,
                            eps_range: Tuple[float, float] = (0.0, 0.95)) -> AgreementReport:
    """Compare closed forms with the oracle on random markets and (q, delta) points"""
    rng = np.random.default_rng(seed)
    report = AgreementReport()

    for _ in range(draws):
        params = random_params(rng, eps_range)
        report.draws += 1
        finest = params.max_relevant_price / (max_index - 2)
        coarsest = params.max_relevant_price / 5.0
        for _ in range(points):
            delta = float(math.exp(rng.uniform(math.log(finest), math.log(coarsest))))
            q = float(rng.uniform(0.0, 1.1 * q_bar_m(params)))
            grid = PriceGrid.for_params(params, delta)
            report.points += 1

            oracle = brute_force_nash(params, q, grid)
            closed, interval = closed_form_nash(params, q, grid)
            diff = diff_equilibria(oracle, closed, interval)
            case = {'params': params.__dict__, 'q': q, 'delta': delta}

            report.boundary_ties += len(diff.boundary_ties)
            if diff.symmetric_oracle_only or diff.symmetric_closed_only:
                report.symmetric_disagreements.append({**case, 'diff': diff.to_dict()})
            for profile in oracle.asymmetric:
                if oracle.regime != RegimeLabel.DUOPOLY or not is_mirror_of_l_bar(params, q, grid, profile):
                    report.asymmetric_shape_violations.append({**case, 'profile': list(profile)})
            if oracle.regime == RegimeLabel.COMPLETE_CHOKING and (
                    oracle.operating_count or oracle.one_sided or not oracle.shutdown_ne):
                report.choking_violations.append(case)

    logger.info(
        f"oracle agreement: {report.points} points over {report.draws} markets, "
        f"{len(report.symmetric_disagreements)} symmetric disagreements, "
        f"{report.boundary_ties} boundary ties"
    )
    return report
