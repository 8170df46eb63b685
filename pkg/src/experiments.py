# src/experiments.py
"""Experiment configuration and the command implementations behind main.py."""
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Literal, Optional, Sequence, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from config import config
from .errors import ConfigError
from .market_model import MarketParams, PriceGrid, validate_params
from .equilibria import (
    brute_force_nash,
    closed_form_nash,
    diff_equilibria,
    min_delta_no_ne,
    sample_oracle_agreement,
)
from .payoffs import q_bar_m, q_bar_s, utilities_close
from .stackelberg import (
    focal_ne,
    supplier_price_values,
    supplier_utility_at_focal,
    supplier_sweep,
    sweep_summary,
)

logger = logging.getLogger(__name__)

PARAM_KEYS = ('d_bar', 'alpha', 'eps', 'omega', 'h', 'c_m', 'o_m', 'c_s', 'o_s')
OUTPUT_KEYS = {'out': 'path', 'format': 'format'}

# (alpha, eps, delta) -> published NE count the computed table is compared with
REFERENCE_COUNTS: Dict[Tuple[float, float, float], int] = {
    (2.0, 0.9, 4.0): 49,
    (2.0, 0.9, 0.4): 32,
    (2.0, 0.54, 4.0): 6,
    (2.0, 0.54, 0.4): 12,
    (0.2, 0.9, 4.0): 557,
    (0.2, 0.9, 0.4): 262,
    (0.2, 0.54, 4.0): 142,
    (0.2, 0.54, 0.4): 31,
}

Q_PROTOCOL = "q in 0..q_bar_m step delta; distinct NE profiles summed over q"


def _split_list(value: Any, separator: str = ',') -> Any:
    if isinstance(value, str):
        return [item.strip() for item in value.split(separator) if item.strip()]
    return value


class ParamsModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    d_bar: float = Field(default_factory=lambda: config.D_BAR)
    alpha: float = Field(default_factory=lambda: config.ALPHA)
    eps: float = Field(default_factory=lambda: config.EPS)
    omega: float = Field(default_factory=lambda: config.OMEGA)
    h: float = Field(default_factory=lambda: config.H)
    c_m: float = Field(default_factory=lambda: config.C_M)
    o_m: float = Field(default_factory=lambda: config.O_M)
    c_s: float = Field(default_factory=lambda: config.C_S)
    o_s: float = Field(default_factory=lambda: config.O_S)

    def market_params(self) -> MarketParams:
        return validate_params(MarketParams(**self.model_dump()))


class OutputModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    path: Optional[str] = None
    format: Literal["csv", "json"] = "csv"


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    params: ParamsModel = Field(default_factory=ParamsModel)
    delta: float = Field(default_factory=lambda: config.DELTA, gt=0)
    deltas: Optional[List[float]] = None
    q: Optional[float] = Field(default=None, ge=0)
    qs: Optional[List[float]] = None
    q_step: Optional[float] = Field(default=None, gt=0)
    q_max: Optional[float] = Field(default=None, ge=0)
    halvings: int = Field(default_factory=lambda: config.MIN_DELTA_HALVINGS, ge=0)
    delta_floor: Optional[float] = Field(default=None, gt=0)
    table_rows: Optional[List[Tuple[float, float, float]]] = None
    count_scope: Literal["operating", "symmetric", "all"] = "operating"
    seed: Optional[int] = None
    draws: int = Field(default=200, ge=1)
    points: int = Field(default=50, ge=1)
    max_index: int = Field(default=500, ge=10)
    workers: int = Field(default_factory=lambda: config.MAX_WORKERS, ge=1)
    output: OutputModel = Field(default_factory=OutputModel)

    @field_validator('deltas', 'qs', mode='before')
    @classmethod
    def _comma_list(cls, value):
        return _split_list(value)

    @field_validator('table_rows', mode='before')
    @classmethod
    def _table_rows(cls, value):
        if isinstance(value, str):
            return [tuple(part.split(':')) for part in _split_list(value, ';')]
        return value

    def delta_series(self) -> List[float]:
        return list(self.deltas) if self.deltas else [self.delta]


def parse_flat_config(text: str) -> Dict[str, str]:
    """Parse ``key = value`` lines; '#' starts a comment"""
    values: Dict[str, str] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue
        if '=' not in line:
            raise ConfigError(f"line {number}: expected key=value, got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split('=', 1))
        if not key:
            raise ConfigError(f"line {number}: empty key")
        values[key] = value
    return values


def build_experiment_config(flat: Dict[str, Any]) -> ExperimentConfig:
    """Turn flat settings into a validated ExperimentConfig"""
    flat = dict(flat)
    params = {key: flat.pop(key) for key in PARAM_KEYS if key in flat}
    output = {OUTPUT_KEYS[key]: flat.pop(key) for key in list(OUTPUT_KEYS) if key in flat}

    try:
        experiment = ExperimentConfig(params=ParamsModel(**params), output=OutputModel(**output), **flat)
        experiment.params.market_params()
    except ValidationError as e:
        raise ConfigError(f"invalid configuration: {e}") from e
    return experiment


def load_experiment_config(path: Optional[str] = None, overrides: Sequence[str] = (),
                           flags: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
    """Defaults < config file < --set overrides < explicit flags"""
    flat: Dict[str, Any] = {}
    if path:
        try:
            with open(path, 'r', encoding='utf-8') as f:
                flat.update(parse_flat_config(f.read()))
        except OSError as e:
            raise ConfigError(f"cannot read config file {path}: {e}") from e

    for item in overrides:
        if '=' not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = (part.strip() for part in item.split('=', 1))
        flat[key] = value

    for key, value in (flags or {}).items():
        if value is not None:
            flat[key] = value

    return build_experiment_config(flat)


@dataclass
class CommandResult:
    schema: str
    rows: List[Dict[str, Any]]
    summary: Dict[str, Any] = field(default_factory=dict)
    agree: bool = True


def _map_tasks(fn: Callable, tasks: List, workers: int) -> List:
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            return list(executor.map(fn, tasks, chunksize=8))
    return [fn(task) for task in tasks]


def _join(prices: Sequence[float]) -> str:
    return ";".join(f"{p:.9g}" for p in prices)


def cmd_ne_enumerate(experiment: ExperimentConfig) -> CommandResult:
    """Oracle and closed-form NE sets at one (q, delta) with their differences"""
    if experiment.q is None:
        raise ConfigError("ne-enumerate needs a supplier price (--q or q=...)")

    params = experiment.params.market_params()
    grid = PriceGrid.for_params(params, experiment.delta)
    oracle = brute_force_nash(params, experiment.q, grid)
    closed, interval = closed_form_nash(params, experiment.q, grid)
    diff = diff_equilibria(oracle, closed, interval)

    rows = []
    for found in (oracle, closed):
        record = found.to_dict()
        rows.append({
            'source': record['source'],
            'q': experiment.q,
            'delta': grid.delta,
            'regime': record['regime'],
            'symmetric': _join(record['symmetric']),
            'asymmetric': ";".join(f"({a:.9g},{b:.9g})" for a, b in record['asymmetric']),
            'shutdown_ne': record['shutdown_ne'],
            'operating_count': record['operating_count'],
        })

    summary = {
        'q_bar_m': q_bar_m(params),
        'q_bar_s': q_bar_s(params),
        'oracle': oracle.to_dict(),
        'closed_form': closed.to_dict(),
        'interval': None if interval is None else {
            's': interval.s, 'e': interval.e,
            'lambda_s': interval.lambda_s, 'rho_s': interval.rho_s,
            'lambda_e': interval.lambda_e, 'rho_e': interval.rho_e,
            'lambda_s_under': interval.lambda_s_under,
            's_quadratic': interval.s_quadratic, 'e_tilde': interval.e_tilde,
        },
        'diff': diff.to_dict(),
    }
    return CommandResult(schema="ne-enumerate", rows=rows, summary=summary, agree=diff.agree)


def _count_for_q(task: Tuple[MarketParams, float, PriceGrid, str]) -> int:
    params, q, grid, scope = task
    found = brute_force_nash(params, q, grid)
    if scope == "symmetric":
        return len(found.symmetric)
    if scope == "all":
        return found.total_count
    return found.operating_count


def count_nash_over_q(params: MarketParams, delta: float, scope: str = "operating", workers: int = 1) -> int:
    """NE profiles summed over the supplier prices 0, delta, 2 delta, ... up to q_bar_m"""
    grid = PriceGrid.for_params(params, delta)
    q_values = supplier_price_values(delta, q_bar_m(params), include_zero=True)
    counts = _map_tasks(_count_for_q, [(params, q, grid, scope) for q in q_values], workers)
    return int(sum(counts))


def cmd_ne_count_table(experiment: ExperimentConfig) -> CommandResult:
    """NE counts for each (alpha, eps, delta) row under the declared q protocol"""
    base = experiment.params.market_params()
    table_rows = experiment.table_rows or list(REFERENCE_COUNTS)

    rows = []
    for alpha, eps, delta in table_rows:
        params = validate_params(base.with_updates(alpha=alpha, eps=eps))
        count = count_nash_over_q(params, delta, experiment.count_scope, experiment.workers)
        rows.append({
            'alpha': alpha,
            'eps': eps,
            'delta': delta,
            'q_protocol': Q_PROTOCOL,
            'count_scope': experiment.count_scope,
            'ne_count': count,
            'reference_count': REFERENCE_COUNTS.get((alpha, eps, delta)),
        })
        logger.info(f"alpha={alpha} eps={eps} delta={delta}: {count} NEs")

    ordering = table_ordering_report(rows)
    return CommandResult(schema="ne-count-table", rows=rows, summary=ordering, agree=ordering['holds'])


def table_ordering_report(rows: List[Dict[str, Any]]) -> Dict[str, Any]:
    """Low-alpha rows should out-count high-alpha rows, high-eps rows low-eps rows"""
    counts = {(r['alpha'], r['eps'], r['delta']): r['ne_count'] for r in rows}
    violations = []
    for (alpha, eps, delta), count in counts.items():
        for (alpha2, eps2, delta2), count2 in counts.items():
            if delta2 != delta:
                continue
            if eps2 == eps and alpha2 < alpha and not count2 > count:
                violations.append({'lower_alpha': [alpha2, eps, delta], 'higher_alpha': [alpha, eps, delta]})
            if alpha2 == alpha and eps2 > eps and not count2 > count:
                violations.append({'higher_eps': [alpha, eps2, delta], 'lower_eps': [alpha, eps, delta]})
    return {'holds': not violations, 'violations': violations, 'q_protocol': Q_PROTOCOL}


def _ne_vs_q_row(task: Tuple[MarketParams, float, PriceGrid]) -> Dict[str, Any]:
    params, q, grid = task
    found = brute_force_nash(params, q, grid)
    return {
        'delta': grid.delta,
        'q': q,
        'regime': found.regime.value,
        'symmetric_prices': _join(found.symmetric_prices),
        'count': len(found.symmetric),
    }


def trend_report(rows: List[Dict[str, Any]], count_key: str = 'count') -> Dict[str, Any]:
    """Places where a per-q count rises instead of staying flat or falling"""
    exceptions = []
    for previous, current in zip(rows, rows[1:]):
        if current[count_key] > previous[count_key]:
            exceptions.append({'q': current['q'], 'from': previous[count_key], 'to': current[count_key]})
    transitions = max(len(rows) - 1, 1)
    rate = len(exceptions) / transitions
    return {
        'exceptions': exceptions,
        'exception_rate': rate,
        'max_exception_rate': config.TREND_MAX_EXCEPTION_RATE,
        'within_gate': rate <= config.TREND_MAX_EXCEPTION_RATE,
    }


def cmd_ne_vs_q(experiment: ExperimentConfig) -> CommandResult:
    """Symmetric operating NE prices for each supplier price, one series per delta"""
    params = experiment.params.market_params()
    rows: List[Dict[str, Any]] = []
    summary: Dict[str, Any] = {'series': []}

    for delta in experiment.delta_series():
        grid = PriceGrid.for_params(params, delta)
        q_step = experiment.q_step or q_bar_m(params) / 100.0
        q_max = experiment.q_max if experiment.q_max is not None else q_bar_m(params) + delta
        q_values = supplier_price_values(q_step, q_max, include_zero=True)
        series = _map_tasks(_ne_vs_q_row, [(params, q, grid) for q in q_values], experiment.workers)

        past_q_bar_s = [row for row in series if row['q'] > q_bar_s(params) and row['count'] > 0]
        summary['series'].append({
            'delta': delta,
            'trend': trend_report(series),
            'nonzero_past_q_bar_s': [row['q'] for row in past_q_bar_s],
            'all_zero': all(row['count'] == 0 for row in series),
        })
        rows.extend(series)

    agree = all(not s['nonzero_past_q_bar_s'] for s in summary['series'])
    return CommandResult(schema="ne-vs-q", rows=rows, summary=summary, agree=agree)


def cmd_supplier_sweep(experiment: ExperimentConfig) -> CommandResult:
    """Supplier utility at the focal NE across supplier prices, one series per delta"""
    params = experiment.params.market_params()
    rows: List[Dict[str, Any]] = []
    summary: Dict[str, Any] = {'series': []}

    for delta in experiment.delta_series():
        grid = PriceGrid.for_params(params, delta)
        sweep = supplier_sweep(params, grid, experiment.q_step, experiment.q_max, experiment.workers)
        for row in sweep.rows:
            rows.append({
                'delta': delta,
                'q': row.q,
                'regime': row.regime.value,
                'feasible': row.feasible,
                'focal_price': row.focal.price,
                'u_m': row.u_m,
                'u_s': row.u_s,
                'w2_star': row.w2_star,
                'operating_ne_count': row.operating_ne_count,
                'capped_focal_price': row.capped_price,
                'partial_choking_q': sweep.partial_choking_q,
            })
        summary['series'].append(sweep_summary(sweep))

    return CommandResult(schema="supplier-sweep", rows=rows, summary=summary)


def cmd_min_delta(experiment: ExperimentConfig) -> CommandResult:
    """Operating-NE counts while halving delta, for each requested supplier price"""
    params = experiment.params.market_params()
    qs = experiment.qs or ([experiment.q] if experiment.q is not None else [1.0, 5.0, 10.0])

    rows: List[Dict[str, Any]] = []
    thresholds = {}
    for q in qs:
        report = min_delta_no_ne(params, q, experiment.delta, experiment.halvings, experiment.delta_floor)
        thresholds[f"{q:.9g}"] = report.threshold_delta
        for point in report.trace:
            rows.append({
                'q': q,
                'delta': point.delta,
                'max_index': point.max_index,
                'operating_count': point.operating_count,
                'symmetric_count': point.symmetric_count,
                'asymmetric_count': point.asymmetric_count,
            })

    terminal_zero = all(
        [r for r in rows if r['q'] == q][-1]['operating_count'] == 0 for q in qs
    )
    return CommandResult(schema="min-delta", rows=rows,
                         summary={'threshold_delta': thresholds, 'terminal_zero': terminal_zero})


REFERENCE_MARKET = MarketParams(d_bar=8.0, alpha=0.5, eps=0.8, c_m=2.0, o_m=2.0, c_s=0.01, o_s=0.01)


def reference_instance_checks() -> List[Dict[str, Any]]:
    """Hand-derived values of the reference market at q=1, delta=4"""
    params, q = REFERENCE_MARKET, 1.0
    grid = PriceGrid.for_params(params, 4.0)
    oracle = brute_force_nash(params, q, grid)
    closed, interval = closed_form_nash(params, q, grid)
    focal = focal_ne(params, q, grid, oracle)
    u_s = supplier_utility_at_focal(params, q, focal)

    expected = [
        ('symmetric_ne', oracle.symmetric_prices == [8.0, 12.0] and closed.symmetric == oracle.symmetric,
         f"oracle={oracle.symmetric_prices} closed_form={closed.symmetric_prices}"),
        ('no_asymmetric_ne', not oracle.asymmetric and not closed.asymmetric, f"oracle={oracle.asymmetric}"),
        ('oracle_agrees', diff_equilibria(oracle, closed, interval).agree, ""),
        ('focal_ne', focal.price == 12.0 and utilities_close(focal.w3_value, 59.2),
         f"price={focal.price} w3={focal.w3_value}"),
        ('supplier_utility', u_s is not None and utilities_close(u_s, 13.454), f"u_s={u_s}"),
        ('q_bar_m', abs(q_bar_m(params) - 133.0557) <= 1e-4, f"{q_bar_m(params):.9g}"),
        ('q_bar_s', abs(q_bar_s(params) - 69.0557) <= 1e-4, f"{q_bar_s(params):.9g}"),
    ]
    return [{'check': f"reference_{name}", 'ok': bool(ok), 'detail': detail} for name, ok, detail in expected]


def cmd_validate(experiment: ExperimentConfig) -> CommandResult:
    """Parameter checks, reference-market values, an optional oracle comparison at q and an optional random sweep"""
    params = experiment.params.market_params()
    rows: List[Dict[str, Any]] = [{'check': 'params', 'ok': True,
                                   'detail': f"q_bar_m={q_bar_m(params):.9g} q_bar_s={q_bar_s(params):.9g}"}]
    rows.extend(reference_instance_checks())
    agree = all(row['ok'] for row in rows)

    if experiment.q is not None:
        result = cmd_ne_enumerate(experiment)
        rows.append({'check': 'oracle_vs_closed_form', 'ok': result.agree,
                     'detail': f"q={experiment.q:.9g} delta={experiment.delta:.9g}"})
        agree &= result.agree

    if experiment.seed is not None:
        report = sample_oracle_agreement(experiment.seed, experiment.draws, experiment.points,
                                         experiment.max_index)
        rows.append({'check': 'random_oracle_agreement', 'ok': report.agree,
                     'detail': f"{report.points} points, {len(report.symmetric_disagreements)} symmetric, "
                               f"{len(report.asymmetric_shape_violations)} asymmetric, "
                               f"{len(report.choking_violations)} choking disagreements, "
                               f"{report.boundary_ties} boundary ties"})
        agree &= report.agree

    return CommandResult(schema="validate", rows=rows, agree=agree)


COMMANDS: Dict[str, Callable[[ExperimentConfig], CommandResult]] = {
    'ne-enumerate': cmd_ne_enumerate,
    'ne-count-table': cmd_ne_count_table,
    'ne-vs-q': cmd_ne_vs_q,
    'supplier-sweep': cmd_supplier_sweep,
    'min-delta': cmd_min_delta,
    'validate': cmd_validate,
}
