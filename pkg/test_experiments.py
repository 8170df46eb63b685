# test_experiments.py
import json

import pytest

import main
from src.errors import ConfigError, EpsOutOfRange
from src.experiments import (
    ExperimentConfig,
    REFERENCE_COUNTS,
    build_experiment_config,
    cmd_min_delta,
    cmd_ne_enumerate,
    cmd_ne_vs_q,
    cmd_supplier_sweep,
    cmd_validate,
    count_nash_over_q,
    load_experiment_config,
    parse_flat_config,
    reference_instance_checks,
    table_ordering_report,
    trend_report,
)
from src.equilibria import brute_force_nash
from src.market_model import MarketParams, PriceGrid
from src.payoffs import q_bar_m
from src.reporting import render_csv, render_json
from src.stackelberg import supplier_price_values


def reference_config(**overrides) -> ExperimentConfig:
    flat = {'d_bar': 8, 'alpha': 0.5, 'eps': 0.8, 'omega': 0, 'c_m': 2, 'o_m': 2, 'c_s': 0.01, 'o_s': 0.01,
            'delta': 4}
    flat.update(overrides)
    return build_experiment_config(flat)


def test_parse_flat_config_skips_comments_and_blanks():
    text = "# market\nalpha = 0.5\n\neps=0.8  # loyalty spill\n"
    assert parse_flat_config(text) == {'alpha': '0.5', 'eps': '0.8'}


def test_parse_flat_config_rejects_lines_without_equals():
    with pytest.raises(ConfigError):
        parse_flat_config("alpha 0.5")


def test_unknown_keys_are_rejected():
    with pytest.raises(ConfigError):
        build_experiment_config({'alpah': '0.5'})


def test_invalid_market_is_reported_as_invalid_params():
    with pytest.raises(EpsOutOfRange):
        build_experiment_config({'eps': '1.0'})


def test_list_settings_are_split():
    experiment = build_experiment_config({'deltas': '0.8, 5', 'qs': '1,5,10', 'table_rows': '2:0.9:4; 0.2:0.54:0.4'})
    assert experiment.delta_series() == [0.8, 5.0]
    assert experiment.qs == [1.0, 5.0, 10.0]
    assert experiment.table_rows == [(2.0, 0.9, 4.0), (0.2, 0.54, 0.4)]


def test_settings_precedence(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("q = 2\ndelta = 2\nseed = 1\n")
    experiment = load_experiment_config(str(path), ["q=3", "delta=1"], {'q': 4.0, 'seed': None})
    assert experiment.q == 4.0
    assert experiment.delta == 1.0
    assert experiment.seed == 1


def test_missing_config_file_is_a_config_error(tmp_path):
    with pytest.raises(ConfigError):
        load_experiment_config(str(tmp_path / "missing.cfg"))


def test_ne_enumerate_reference_instance():
    result = cmd_ne_enumerate(reference_config(q=1))
    assert result.agree
    assert [row['source'] for row in result.rows] == ['BruteForce', 'ClosedForm']
    assert all(row['symmetric'] == "8;12" for row in result.rows)
    assert all(row['asymmetric'] == "" for row in result.rows)


def test_ne_enumerate_complete_choking_is_shutdown_only():
    result = cmd_ne_enumerate(reference_config(q=200))
    assert result.agree
    assert all(row['shutdown_ne'] and row['operating_count'] == 0 for row in result.rows)


def test_ne_enumerate_needs_a_supplier_price():
    with pytest.raises(ConfigError):
        cmd_ne_enumerate(reference_config())


def test_count_over_q_sums_oracle_counts():
    params = MarketParams(d_bar=8.0, alpha=2.0, eps=0.54, c_m=2.0, o_m=2.0, c_s=0.01, o_s=0.01)
    grid = PriceGrid.for_params(params, 4.0)
    expected = sum(brute_force_nash(params, q, grid).operating_count
                   for q in supplier_price_values(4.0, q_bar_m(params), include_zero=True))
    assert count_nash_over_q(params, 4.0) == expected


def test_reference_counts_cover_all_rows():
    assert sorted(REFERENCE_COUNTS.values()) == [6, 12, 31, 32, 49, 142, 262, 557]


def test_table_ordering_report_flags_inverted_rows():
    rows = [
        {'alpha': 0.2, 'eps': 0.9, 'delta': 4.0, 'ne_count': 10},
        {'alpha': 2.0, 'eps': 0.9, 'delta': 4.0, 'ne_count': 3},
        {'alpha': 2.0, 'eps': 0.54, 'delta': 4.0, 'ne_count': 5},
    ]
    report = table_ordering_report(rows)
    assert not report['holds']
    assert report['violations'] == [{'higher_eps': [2.0, 0.9, 4.0], 'lower_eps': [2.0, 0.54, 4.0]}]


def test_trend_report_lists_rising_counts():
    rows = [{'q': q, 'count': c} for q, c in [(0.0, 3), (1.0, 2), (2.0, 3), (3.0, 0)]]
    report = trend_report(rows)
    assert report['exceptions'] == [{'q': 2.0, 'from': 2, 'to': 3}]
    assert report['exception_rate'] == pytest.approx(1 / 3)
    assert report['within_gate'] is False
    assert trend_report([{'q': 0.0, 'count': 2}, {'q': 1.0, 'count': 1}])['within_gate'] is True


def test_ne_vs_q_records_trend_gate_at_reference_market():
    # more grid points fall inside the shifting interval as q grows, e.g. {11.2} at q=7.98
    # then {12, 12.8} at q=9.31, so the count trend misses the 1% gate without any tie
    result = cmd_ne_vs_q(reference_config(deltas="0.8,5"))
    assert result.agree
    for series in result.summary['series']:
        trend = series['trend']
        assert trend['within_gate'] == (trend['exception_rate'] <= 0.01)
        assert not trend['within_gate']

    fine = {round(row['q'], 2): row for row in result.rows if row['delta'] == 0.8}
    assert fine[7.98]['symmetric_prices'] == "11.2"
    assert fine[9.31]['symmetric_prices'] == "12;12.8"


def test_ne_vs_q_is_empty_past_symmetric_threshold():
    result = cmd_ne_vs_q(reference_config(q_step=10, q_max=140))
    assert result.agree
    assert {row['delta'] for row in result.rows} == {4.0}
    assert result.rows[0]['q'] == 0.0
    assert result.summary['series'][0]['nonzero_past_q_bar_s'] == []


def test_ne_vs_q_runs_one_series_per_delta():
    result = cmd_ne_vs_q(reference_config(deltas="4,2", q_step=20, q_max=60))
    assert [s['delta'] for s in result.summary['series']] == [4.0, 2.0]


def test_supplier_sweep_reference_row():
    result = cmd_supplier_sweep(reference_config(q_step=1, q_max=2))
    first = result.rows[0]
    assert first['q'] == 1.0
    assert first['u_s'] == pytest.approx(13.454, rel=1e-9)
    assert first['focal_price'] == 12.0
    assert result.summary['series'][0]['q_star'] is not None


def test_min_delta_trace_rows():
    result = cmd_min_delta(reference_config(qs="1,200", halvings=1))
    assert [(row['q'], row['delta']) for row in result.rows] == [(1.0, 4.0), (1.0, 2.0), (200.0, 4.0), (200.0, 2.0)]
    assert result.summary['threshold_delta']['200'] == 4.0


def test_reference_instance_checks_all_pass():
    checks = reference_instance_checks()
    assert checks and all(check['ok'] for check in checks), checks


def test_validate_without_optional_checks():
    result = cmd_validate(reference_config())
    assert result.agree
    assert result.rows[0]['check'] == 'params'


def test_csv_output_is_versioned_and_lf_terminated():
    result = cmd_ne_enumerate(reference_config(q=1))
    text = render_csv(result.rows, result.schema)
    lines = text.split("\n")
    assert lines[0] == "# schema=ne-enumerate/v1"
    assert lines[1].startswith("source,q,delta,regime")
    assert "\r" not in text


def test_json_output_round_trips_through_config_schema():
    experiment = reference_config(q=1, format="json")
    result = cmd_ne_enumerate(experiment)
    document = json.loads(render_json(result.rows, result.schema, experiment.model_dump(mode='json'), result.summary))
    assert document['schema'] == "ne-enumerate/v1"
    assert ExperimentConfig.model_validate(document['config']).model_dump() == experiment.model_dump()
    assert document['summary']['diff']['agree'] is True


def test_json_output_is_deterministic():
    experiment = reference_config(q=1)
    first = cmd_ne_enumerate(experiment)
    second = cmd_ne_enumerate(experiment)
    assert render_json(first.rows, first.schema, None, first.summary) == \
        render_json(second.rows, second.schema, None, second.summary)


def test_cli_reference_instance_exits_cleanly(capsys):
    assert main.run(["ne-enumerate", "--q", "1", "--delta", "4"]) == main.EXIT_OK
    assert capsys.readouterr().out.startswith("# schema=ne-enumerate/v1")


def test_cli_writes_report_file(tmp_path):
    out = tmp_path / "reports" / "ne.json"
    assert main.run(["ne-enumerate", "--q", "1", "--format", "json", "--out", str(out)]) == main.EXIT_OK
    assert json.loads(out.read_text())['config']['q'] == 1.0


@pytest.mark.parametrize("argv", [
    ["ne-enumerate", "--set", "bogus=1"],
    ["ne-enumerate", "--set", "eps=1.5", "--q", "1"],
    ["ne-enumerate", "--set", "no_equals_sign"],
    ["ne-enumerate"],
])
def test_cli_config_errors_exit_with_two(argv):
    assert main.run(argv) == main.EXIT_CONFIG


def test_cli_validate(capsys):
    assert main.run(["validate"]) == main.EXIT_OK
    assert "reference_focal_ne" in capsys.readouterr().out
