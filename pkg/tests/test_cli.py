import json

import pytest

from click.testing import CliRunner

from hyperforce.entrypoints.hyperforce import cli
from hyperforce.scenarios import bundled_scenarios


@pytest.fixture
def runner():
    return CliRunner()


def test_list_shows_bundled_scenarios(runner):
    result = runner.invoke(cli, ['list'])
    assert result.exit_code == 0
    assert 'harmonic_n1_euclid' in result.output
    assert 'wca_n2_torus' in result.output


def test_describe(runner):
    result = runner.invoke(cli, ['describe', 'g_vanish'])
    assert result.exit_code == 0
    assert result.output.startswith('g_vanish')
    assert 'Tolerances:' in result.output


def test_describe_unknown_check(runner):
    assert runner.invoke(cli, ['describe', 'bogus']).exit_code == 1


def test_unparseable_scenario(runner, tmp_path):
    path = tmp_path / 'broken.yml'
    path.write_text('schema_version: 1\nsystem: [1, 2\n')
    result = runner.invoke(cli, ['run', str(path), '--out', str(tmp_path / 'out')])
    assert result.exit_code == 2


def test_missing_scenario(runner, tmp_path):
    assert runner.invoke(cli, ['run', 'no_such_scenario', '--out', str(tmp_path)]).exit_code == 2


def test_invalid_scenario(runner, tmp_path, scenario_text):
    path = tmp_path / 'invalid.yml'
    path.write_text(scenario_text('checks: [bogus]\n'))
    result = runner.invoke(cli, ['run', str(path), '--out', str(tmp_path / 'out')])
    assert result.exit_code == 3


def test_option_ranges(runner, scenario_text, tmp_path):
    path = tmp_path / 'tiny.yml'
    path.write_text(scenario_text('checks: [g_vanish]\n'))
    assert runner.invoke(cli, ['run', str(path), '--workers', '0']).exit_code == 2
    assert runner.invoke(cli, ['run', str(path), '--tol-scale', '0']).exit_code == 2


def test_run_writes_reports(runner, tmp_path, scenario_text):
    path = tmp_path / 'tiny.yml'
    path.write_text(scenario_text('checks: [g_vanish, g_terms]\n'))
    out = tmp_path / 'out'
    result = runner.invoke(cli, ['run', str(path), '--out', str(out), '--workers', '1', '--quad-order', '12'])
    assert result.exit_code == 0, result.output
    document = json.loads((out / 'report.json').read_text())
    assert document['scenario_id'] == 'tiny'
    assert document['passed'] is True
    assert document['metadata']['scenario']['quadrature']['momentum_order'] == 12
    assert (out / 'profiles.csv').read_text().startswith('check,label,witness,r')
    assert 'tiny:' in result.output


def test_bundled_harmonic_scenario_passes(runner, tmp_path):
    out = tmp_path / 'out'
    result = runner.invoke(cli, ['run', 'harmonic_n1_euclid', '--out', str(out), '--workers', '2'])
    assert result.exit_code == 0, result.output
    document = json.loads((out / 'report.json').read_text())
    assert document['passed'] is True
    assert not [record for record in document['records'] if record['verdict'] == 'fail']


def test_same_seed_gives_identical_reports(runner, tmp_path):
    arguments = ['run', 'harmonic_n1_euclid', '--seed', '7', '--mc-samples', '2000']
    first = runner.invoke(cli, arguments + ['--out', str(tmp_path / 'first'), '--workers', '1'])
    second = runner.invoke(cli, arguments + ['--out', str(tmp_path / 'second'), '--workers', '3'])
    assert first.exit_code == 0, first.output
    assert second.exit_code == 0, second.output
    assert (tmp_path / 'first' / 'report.json').read_bytes() == (tmp_path / 'second' / 'report.json').read_bytes()


@pytest.mark.slow
@pytest.mark.parametrize('name', [name for name, _ in bundled_scenarios()])
def test_every_bundled_scenario_passes(runner, tmp_path, name):
    result = runner.invoke(cli, ['run', name, '--out', str(tmp_path / name)])
    assert result.exit_code == 0, result.output
