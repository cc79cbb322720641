import pytest

from hyperforce.exceptions import ScenarioParseError
from hyperforce.exceptions import ScenarioValidationError
from hyperforce.scenarios import bundled_scenarios
from hyperforce.scenarios import load_scenario
from hyperforce.scenarios import parse_scenario
from hyperforce.scenarios import scenario_path

FIRST_BODY_LINE = 19


def test_minimal_scenario(scenario_text):
    scenario = parse_scenario(scenario_text('checks: [g_vanish]\n'))
    assert scenario.identifier == 'tiny'
    assert scenario.spec.particles == 1
    assert scenario.levels == [0]
    assert scenario.diffeo is None
    assert [observable.as_dict() for observable in scenario.observables] == [{'kind': 'constant', 'value': 1.0}]
    assert scenario.scheme.momentum_order == 8
    assert scenario.site_count == 2


def test_invalid_yaml_reports_its_position():
    with pytest.raises(ScenarioParseError) as error:
        parse_scenario('schema_version: 1\nsystem: [1, 2\n')
    assert error.value.line is not None


def test_unknown_keys_are_located(scenario_text):
    with pytest.raises(ScenarioParseError) as error:
        parse_scenario(scenario_text('checks: [g_vanish]\ncolour: red\n'))
    assert error.value.line == FIRST_BODY_LINE + 1
    assert 'colour' in str(error.value)


def test_nested_unknown_keys_are_located(scenario_text):
    with pytest.raises(ScenarioParseError) as error:
        parse_scenario(scenario_text('checks: [g_vanish]\nmontecarlo:\n  samples: 10\n  temperature: 2\n'))
    assert error.value.line == FIRST_BODY_LINE + 3


def test_required_keys(scenario_text):
    with pytest.raises(ScenarioParseError) as error:
        parse_scenario(scenario_text())
    assert 'checks' in str(error.value)


def test_schema_version_is_checked(scenario_text):
    text = scenario_text('checks: [g_vanish]\n').replace('schema_version: 1', 'schema_version: 2')
    with pytest.raises(ScenarioParseError) as error:
        parse_scenario(text)
    assert error.value.line == 1


def test_types_are_checked(scenario_text):
    with pytest.raises(ScenarioParseError):
        parse_scenario(scenario_text('checks: [g_vanish]\n').replace('sites: 2', 'sites: two'))
    with pytest.raises(ScenarioParseError):
        parse_scenario(scenario_text('checks: g_vanish\n'))


@pytest.mark.parametrize('body', [
    'checks: [bogus]\n',
    'checks: [g_vanish]\nlevels: [1]\n',
    'checks: [g_vanish]\nfield:\n  kind: bump\n  center: [0.0]\n  radius: 0.5\n  amplitude: [5.0]\n',
    'checks: [g_vanish]\nobservables:\n  - kind: kinetic\n    particle: 3\n',
])
def test_physics_is_validated(scenario_text, body):
    with pytest.raises(ScenarioValidationError):
        parse_scenario(scenario_text(body))


def test_torus_rejects_aperiodic_ingredients():
    text = '\n'.join([
        'schema_version: 1',
        'id: ring',
        'system: {dimension: 1, particles: 2, boundary: {kind: torus, basis: [[4.0]]}}',
        'observables: [{kind: coordinate, of: r, particle: 0, axis: 0}]',
        'checks: [g_vanish]',
    ])
    with pytest.raises(ScenarioValidationError):
        parse_scenario(text)


def test_euclidean_needs_confinement():
    text = '\n'.join([
        'schema_version: 1',
        'id: free',
        'system: {dimension: 1, particles: 1}',
        'checks: [g_vanish]',
    ])
    with pytest.raises(ScenarioValidationError):
        parse_scenario(text)


def test_overrides(scenario_text):
    scenario = parse_scenario(scenario_text('checks: [g_vanish]\n'))
    overridden = scenario.with_overrides(seed=3, tol_scale=10.0, mc_samples=50, quad_order=20)
    assert overridden.sampler.seed == 3
    assert overridden.sampler.samples == 50
    assert overridden.scheme.momentum_order == 20
    assert overridden.scheme.position_order == scenario.scheme.position_order
    assert overridden.tolerances.tol_abs == pytest.approx(10.0 * scenario.tolerances.tol_abs)
    assert scenario.with_overrides().sampler == scenario.sampler


def test_bundled_scenarios_load():
    names = [name for name, _ in bundled_scenarios()]
    assert len(names) >= 6
    assert 'harmonic_n1_euclid' in names
    for name in names:
        scenario = load_scenario(name)
        assert scenario.identifier == name
        assert scenario.checks


def test_unknown_scenario_names():
    with pytest.raises(ScenarioParseError):
        scenario_path('no_such_scenario')
