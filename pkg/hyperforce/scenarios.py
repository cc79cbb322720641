"""
Scenario files.

A scenario is a YAML mapping with `schema_version: 1`. Unknown keys are rejected and every
number below `system`, `potentials`, `observables` and `field` is coerced with float().
Structural problems raise ScenarioParseError with the line and column of the offending node;
problems with the physics (inadmissible field, non-decaying Boltzmann factor, unknown check, ...)
raise ScenarioValidationError.
"""
import logging
import pathlib

import numpy as np
import yaml

from cached_property import cached_property

from hyperforce import settings
from hyperforce.diffeo import AdmissibleDiffeo
from hyperforce.distributions import FunctionDensity
from hyperforce.distributions import PairingEvaluator
from hyperforce.distributions import check_tempered
from hyperforce.exceptions import HyperforceException
from hyperforce.exceptions import ScenarioParseError
from hyperforce.exceptions import ScenarioValidationError
from hyperforce.fields import FieldDispatcher
from hyperforce.hamiltonian import HamiltonianModel
from hyperforce.hamiltonian import schwartz_diagnostic
from hyperforce.montecarlo import McSampler
from hyperforce.observables import ObservableDispatcher
from hyperforce.potentials import PotentialDispatcher
from hyperforce.quadrature import QuadratureScheme
from hyperforce.report import Tolerances
from hyperforce.system import Euclidean
from hyperforce.system import SystemSpec
from hyperforce.system import Torus

logger = logging.getLogger(__name__)

SCENARIO_SUFFIX = '.yml'

TOP_LEVEL_KEYS = {
    'schema_version', 'id', 'description', 'system', 'potentials', 'observables', 'field', 'levels',
    'checks', 'quadrature', 'montecarlo', 'tolerances', 'sites', 'witnesses',
}
REQUIRED_KEYS = {'schema_version', 'id', 'system', 'checks'}
SYSTEM_KEYS = {'dimension', 'particles', 'masses', 'beta', 'boundary'}
BOUNDARY_KEYS = {'kind', 'basis'}
POTENTIAL_KEYS = {'pair', 'external'}
MONTECARLO_KEYS = set(McSampler._fields)
QUADRATURE_KEYS = set(QuadratureScheme._fields)
TOLERANCE_KEYS = {'tol_abs', 'tol_rel'}
INTEGER_KEYS = {
    'momentum_order', 'position_order', 'max_depth', 'max_panels', 'seed', 'samples', 'burn_in', 'chains',
}


def _node_mark(root, path):
    """Start mark of the YAML node at `path` (keys and list positions), or of its deepest existing parent."""
    node, mark = root, getattr(root, 'start_mark', None)
    for step in path:
        if isinstance(node, yaml.MappingNode):
            for key_node, value_node in node.value:
                if key_node.value == step:
                    node, mark = value_node, key_node.start_mark
                    break
            else:
                return mark
        elif isinstance(node, yaml.SequenceNode) and isinstance(step, int) and step < len(node.value):
            node = node.value[step]
            mark = node.start_mark
        else:
            return mark
    return mark


class _Reader:
    """Walks the loaded document and reports structural errors at their source position."""

    def __init__(self, document, root):
        self.document = document
        self.root = root

    def fail(self, message, path=()):
        mark = _node_mark(self.root, path) if self.root is not None else None
        if mark is None:
            raise ScenarioParseError(message)
        raise ScenarioParseError(message, mark.line + 1, mark.column + 1)

    def mapping(self, value, path, allowed, required=()):
        if not isinstance(value, dict):
            self.fail('"{}" must be a mapping.'.format('.'.join(map(str, path)) or 'scenario'), path)
        unknown = sorted(set(value) - set(allowed), key=str)
        if unknown:
            self.fail('Unknown key "{}" in {}. Allowed keys: {}'.format(
                unknown[0], '.'.join(map(str, path)) or 'scenario', sorted(allowed),
            ), tuple(path) + (unknown[0],))
        missing = sorted(set(required) - set(value))
        if missing:
            self.fail('Missing key "{}" in {}.'.format(missing[0], '.'.join(map(str, path)) or 'scenario'), path)
        return value

    def integer(self, value, path, minimum=None):
        if isinstance(value, bool) or not isinstance(value, int):
            self.fail('"{}" must be an integer, got {!r}.'.format('.'.join(map(str, path)), value), path)
        if minimum is not None and value < minimum:
            self.fail('"{}" must be at least {}, got {}.'.format('.'.join(map(str, path)), minimum, value), path)
        return value

    def number(self, value, path):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.fail('"{}" must be a number, got {!r}.'.format('.'.join(map(str, path)), value), path)
        return float(value)

    def numbers(self, value, path):
        """Numeric leaves of nested mappings and lists coerced with float(); strings are kept."""
        if isinstance(value, dict):
            return {key: self.numbers(item, tuple(path) + (key,)) for key, item in value.items()}
        if isinstance(value, list):
            return [self.numbers(item, tuple(path) + (position,)) for position, item in enumerate(value)]
        if isinstance(value, bool) or value is None:
            self.fail('"{}" must be a number or a name, got {!r}.'.format('.'.join(map(str, path)), value), path)
        if isinstance(value, (int, float)):
            return float(value)
        return value

    def strings(self, value, path):
        if not isinstance(value, list) or not all(isinstance(item, str) for item in value):
            self.fail('"{}" must be a list of names.'.format('.'.join(map(str, path))), path)
        return value


class Scenario:
    def __init__(self, *, identifier, description, spec, model, observables, diffeo, levels, checks,
                 scheme=None, sampler=None, tolerances=None, site_count=settings.DEFAULT_SITE_COUNT,
                 witness_count=settings.DEFAULT_WITNESS_COUNT, source=None):
        self.identifier = identifier
        self.description = description
        self.spec = spec
        self.model = model
        self.observables = list(observables)
        self.diffeo = diffeo
        self.levels = list(levels)
        self.checks = list(checks)
        self.scheme = scheme or QuadratureScheme()
        self.sampler = sampler or McSampler()
        self.tolerances = tolerances or Tolerances()
        self.site_count = site_count
        self.witness_count = witness_count
        self.source = source

    @cached_property
    def evaluator(self):
        return PairingEvaluator(self.spec, self.model, self.scheme)

    def with_overrides(self, *, seed=None, tol_scale=None, mc_samples=None, quad_order=None):
        """A copy with command-line overrides applied; `quad_order` replaces the momentum order."""
        sampler = self.sampler
        if seed is not None:
            sampler = sampler._replace(seed=seed)
        if mc_samples is not None:
            sampler = sampler._replace(samples=mc_samples)
        scheme = self.scheme if quad_order is None else self.scheme._replace(momentum_order=quad_order)
        tolerances = self.tolerances if tol_scale is None else self.tolerances.scaled(tol_scale)
        return Scenario(
            identifier=self.identifier, description=self.description, spec=self.spec, model=self.model,
            observables=self.observables, diffeo=self.diffeo, levels=self.levels, checks=self.checks,
            scheme=scheme, sampler=sampler, tolerances=tolerances, site_count=self.site_count,
            witness_count=self.witness_count, source=self.source,
        )

    def as_dict(self):
        return {
            'id': self.identifier,
            'description': self.description,
            'system': self.spec.as_dict(),
            'pair': self.model.pair.entry._asdict(),
            'external': self.model.external.entry._asdict(),
            'observables': [observable.as_dict() for observable in self.observables],
            'field': None if self.diffeo is None else self.diffeo.field.as_dict(),
            'levels': self.levels,
            'checks': self.checks,
            'quadrature': self.scheme.as_dict(),
            'montecarlo': self.sampler.as_dict(),
            'tolerances': self.tolerances.as_dict(),
            'source': None if self.source is None else str(self.source),
        }

    def __repr__(self):
        return 'Scenario({})'.format(self.identifier)


def _boundary(reader, definition, dimension):
    definition = reader.mapping(definition, ('system', 'boundary'), BOUNDARY_KEYS, required=('kind',))
    kind = definition['kind']
    if kind == 'euclidean':
        if 'basis' in definition:
            reader.fail('A Euclidean boundary takes no basis.', ('system', 'boundary', 'basis'))
        return Euclidean()
    if kind == 'torus':
        if 'basis' not in definition:
            reader.fail('A torus boundary needs a basis.', ('system', 'boundary'))
        basis = reader.numbers(definition['basis'], ('system', 'boundary', 'basis'))
        return Torus(np.asarray(basis, dtype=float).reshape(dimension, dimension))
    reader.fail('Unknown boundary kind "{}". Available: euclidean, torus'.format(kind), ('system', 'boundary', 'kind'))


def _validate(scenario: Scenario, available_checks):
    spec, model = scenario.spec, scenario.model
    unknown = [name for name in scenario.checks if name not in available_checks]
    if unknown:
        raise ScenarioValidationError('Unknown check "{}". Available checks: {}'.format(
            unknown[0], sorted(available_checks),
        ))
    for n in scenario.levels:
        spec.check_level(n)
    if spec.periodic:
        if model.external.confinement() is not None:
            raise ScenarioValidationError(
                'External potential {!r} is not periodic and cannot be used on a torus.'.format(model.external),
            )
        for observable in scenario.observables:
            if not observable.periodic:
                raise ScenarioValidationError(
                    'Observable {} is not periodic and cannot be used on a torus.'.format(observable.as_dict()),
                )
        if scenario.diffeo is not None and not scenario.diffeo.is_zero and not scenario.diffeo.field.periodic:
            raise ScenarioValidationError(
                'Field {} is not periodic and cannot be used on a torus.'.format(scenario.diffeo.field.as_dict()),
            )
    else:
        if model.external.confinement() is None:
            raise ScenarioValidationError(
                'Euclidean scenarios need a confining (harmonic) external potential; got {!r}.'.format(model.external),
            )
        report = schwartz_diagnostic(model, spec)
        if not report.admissible:
            raise ScenarioValidationError(
                'schwartz_diagnostic rejected the model: {}'.format('; '.join(report.reasons)),
            )
    for observable in scenario.observables:
        if observable.tempered_bound() is None:
            continue
        tempered = check_tempered(FunctionDensity(observable, 0), spec)
        if not tempered.tempered:
            raise ScenarioValidationError('Observable {} exceeds its temperedness bound (ratio {:.3g}).'.format(
                observable.as_dict(), tempered.worst_ratio,
            ))


def parse_scenario(text, source=None, available_checks=None) -> Scenario:
    if available_checks is None:
        from hyperforce.checks import CheckDispatcher
        available_checks = CheckDispatcher.available()
    try:
        document = yaml.safe_load(text)
        root = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError as error:
        mark = getattr(error, 'problem_mark', None)
        if mark is None:
            raise ScenarioParseError('Invalid YAML: {}'.format(error))
        raise ScenarioParseError('Invalid YAML: {}'.format(getattr(error, 'problem', error)), mark.line + 1,
                                 mark.column + 1)
    reader = _Reader(document, root)
    document = reader.mapping(document, (), TOP_LEVEL_KEYS, REQUIRED_KEYS)
    version = reader.integer(document['schema_version'], ('schema_version',))
    if version != settings.DEFAULT_SCENARIO_SCHEMA_VERSION:
        reader.fail('Unsupported schema_version {}; expected {}.'.format(
            version, settings.DEFAULT_SCENARIO_SCHEMA_VERSION,
        ), ('schema_version',))
    identifier = document['id']
    if not isinstance(identifier, str):
        reader.fail('"id" must be a string.', ('id',))

    system = reader.mapping(document['system'], ('system',), SYSTEM_KEYS, required=('dimension', 'particles'))
    dimension = reader.integer(system['dimension'], ('system', 'dimension'), minimum=1)
    particles = reader.integer(system['particles'], ('system', 'particles'), minimum=1)
    masses = reader.numbers(system.get('masses', 1.0), ('system', 'masses'))
    beta = reader.number(system.get('beta', 1.0), ('system', 'beta'))
    potentials = reader.mapping(document.get('potentials', {}), ('potentials',), POTENTIAL_KEYS)
    pair_definition = reader.numbers(potentials.get('pair', {'kind': 'zero'}), ('potentials', 'pair'))
    external_definition = reader.numbers(potentials.get('external', {'kind': 'zero'}), ('potentials', 'external'))
    observable_definitions = reader.numbers(
        document.get('observables', [{'kind': 'constant', 'value': 1.0}]), ('observables',),
    )
    if not isinstance(observable_definitions, list):
        reader.fail('"observables" must be a list.', ('observables',))
    field_definition = document.get('field')
    if field_definition is not None:
        field_definition = reader.numbers(field_definition, ('field',))
    levels = document.get('levels', [0])
    if not isinstance(levels, list):
        reader.fail('"levels" must be a list of integers.', ('levels',))
    levels = [reader.integer(level, ('levels', position), minimum=0) for position, level in enumerate(levels)]
    checks = reader.strings(document['checks'], ('checks',))
    quadrature = reader.mapping(document.get('quadrature', {}), ('quadrature',), QUADRATURE_KEYS)
    montecarlo = reader.mapping(document.get('montecarlo', {}), ('montecarlo',), MONTECARLO_KEYS)
    tolerances = reader.mapping(document.get('tolerances', {}), ('tolerances',), TOLERANCE_KEYS)
    scheme_arguments = {
        key: reader.integer(value, ('quadrature', key), minimum=1) if key in INTEGER_KEYS else
        reader.number(value, ('quadrature', key)) for key, value in quadrature.items()
    }
    sampler_arguments = {
        key: reader.integer(value, ('montecarlo', key), minimum=0) if key in INTEGER_KEYS else
        reader.number(value, ('montecarlo', key)) for key, value in montecarlo.items()
    }
    tolerance_arguments = {key: reader.number(value, ('tolerances', key)) for key, value in tolerances.items()}
    site_count = reader.integer(document.get('sites', settings.DEFAULT_SITE_COUNT), ('sites',), minimum=1)
    witness_count = reader.integer(document.get('witnesses', settings.DEFAULT_WITNESS_COUNT), ('witnesses',),
                                   minimum=1)

    try:
        boundary = _boundary(reader, system.get('boundary', {'kind': 'euclidean'}), dimension)
        spec = SystemSpec(dimension, particles, masses, beta, boundary)
        dispatcher = PotentialDispatcher(boundary)
        model = HamiltonianModel(dispatcher.pair(pair_definition), dispatcher.external(external_definition))
        observable_dispatcher = ObservableDispatcher(spec)
        observables = [observable_dispatcher.dispatch(definition) for definition in observable_definitions]
        diffeo = None
        if field_definition is not None:
            diffeo = AdmissibleDiffeo(FieldDispatcher(boundary, dimension).dispatch(field_definition))
        scenario = Scenario(
            identifier=identifier,
            description=document.get('description', ''),
            spec=spec,
            model=model,
            observables=observables,
            diffeo=diffeo,
            levels=levels,
            checks=checks,
            scheme=QuadratureScheme(**scheme_arguments),
            sampler=McSampler(**sampler_arguments),
            tolerances=Tolerances(**tolerance_arguments),
            site_count=site_count,
            witness_count=witness_count,
            source=source,
        )
        _validate(scenario, available_checks)
    except ScenarioParseError:
        raise
    except (HyperforceException, ValueError, TypeError, KeyError, IndexError) as error:
        if isinstance(error, ScenarioValidationError):
            raise
        raise ScenarioValidationError('Scenario "{}" is invalid: {}'.format(identifier, error)) from error
    logger.debug('Loaded scenario {} from {}'.format(identifier, source or '<string>'))
    return scenario


def scenario_path(name_or_path):
    """A bundled scenario name or a path to a scenario file."""
    path = pathlib.Path(name_or_path)
    if path.is_file():
        return path
    bundled = settings.DEFAULT_SCENARIOS_DIR / '{}{}'.format(name_or_path, SCENARIO_SUFFIX)
    if bundled.is_file():
        return bundled
    raise ScenarioParseError('Scenario "{}" is neither a file nor a bundled scenario. Bundled: {}'.format(
        name_or_path, [name for name, _ in bundled_scenarios()],
    ))


def load_scenario(name_or_path) -> Scenario:
    path = scenario_path(name_or_path)
    with path.open() as stream:
        return parse_scenario(stream.read(), source=path)


def bundled_scenarios():
    """(name, description) of every bundled scenario, sorted by name."""
    scenarios = []
    for path in sorted(settings.DEFAULT_SCENARIOS_DIR.glob('*{}'.format(SCENARIO_SUFFIX))):
        with path.open() as stream:
            document = yaml.safe_load(stream) or {}
        scenarios.append((path.stem, str(document.get('description', '')).strip()))
    return scenarios
