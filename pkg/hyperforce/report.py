import csv
import json
import logging
import math
import pathlib

from typing import NamedTuple

import jinja2
import numpy as np

from termcolor import colored

from hyperforce import settings

logger = logging.getLogger(__name__)

PASS = 'pass'
FAIL = 'fail'
DEGENERATE = 'degenerate'
SKIP = 'skip'

VERDICT_COLORS = {PASS: 'green', DEGENERATE: 'cyan', SKIP: 'yellow', FAIL: 'red'}

templates_directory = pathlib.Path(__file__).parent / 'templates'
jinja_environment = jinja2.Environment(loader=jinja2.FileSystemLoader(str(templates_directory)))
jinja_environment.filters['colored_verdict'] = lambda verdict: colored(verdict, VERDICT_COLORS.get(verdict))


class Tolerances(NamedTuple):
    tol_abs: float = settings.DEFAULT_VERDICT_TOL_ABS
    tol_rel: float = settings.DEFAULT_VERDICT_TOL_REL
    error_multiplier: float = settings.DEFAULT_ERROR_MULTIPLIER

    def scaled(self, factor):
        return self._replace(tol_abs=self.tol_abs * factor, tol_rel=self.tol_rel * factor)

    def bar(self, error, scale):
        return max(self.tol_abs, self.tol_rel * scale, self.error_multiplier * error)

    def as_dict(self):
        return dict(self._asdict())


def norm(value):
    return float(np.linalg.norm(np.ravel(np.asarray(value, dtype=float))))


def verdict(value, error, scale, tolerances: Tolerances = Tolerances(), terms_max=None):
    """
    pass iff |value| <= max(tol_abs, tol_rel * scale, 3 * error); degenerate when every
    constituent term is below tol_abs.
    """
    if not all(math.isfinite(number) for number in np.ravel(np.asarray(value, dtype=float))) or not math.isfinite(
            error):
        return FAIL
    terms_max = scale if terms_max is None else terms_max
    if terms_max <= tolerances.tol_abs and norm(value) <= tolerances.tol_abs:
        return DEGENERATE
    return PASS if norm(value) <= tolerances.bar(error, scale) else FAIL


def _plain(value):
    if isinstance(value, dict):
        return {str(key): _plain(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(item) for item in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, (np.floating, float)):
        return float(value)
    if isinstance(value, (np.integer, int)) and not isinstance(value, bool):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


class CheckRecord(NamedTuple):
    check: str
    label: str
    witness: dict
    value: list
    error: float
    scale: float
    verdict: str
    flagged: bool = False
    details: dict = None

    @property
    def passed(self):
        return self.verdict in (PASS, DEGENERATE, SKIP)

    @property
    def magnitude(self):
        return norm(self.value) if self.value else 0.0

    def as_dict(self):
        return _plain({
            'check': self.check,
            'label': self.label,
            'witness': self.witness,
            'value': self.value,
            'error': self.error,
            'scale': self.scale,
            'verdict': self.verdict,
            'flagged': self.flagged,
            'details': self.details or {},
        })


def make_record(check, label, value, error, scale, *, witness=None, flagged=False, details=None,
                tolerances: Tolerances = Tolerances(), terms_max=None):
    value = np.atleast_1d(np.asarray(value, dtype=float))
    error = float(error)
    scale = float(scale)
    outcome = verdict(value, error, scale, tolerances, terms_max)
    if flagged:
        logger.debug('{} [{}] rests on a flagged integration'.format(check, label))
    return CheckRecord(check, label, _plain(witness), value.tolist(), error, scale, outcome, bool(flagged),
                       _plain(details or {}))


def skip_record(check, label, reason):
    return CheckRecord(check, label, None, [], 0.0, 0.0, SKIP, False, {'reason': reason})


def failure_record(check, label, reason):
    return CheckRecord(check, label, None, [], 0.0, 0.0, FAIL, False, {'reason': reason})


def witness_dict(witness=None, **extra):
    result = {}
    if witness is not None:
        result['positions'] = np.asarray(witness[0]).tolist()
        result['momenta'] = np.asarray(witness[1]).tolist()
    result.update({key: np.asarray(value).tolist() for key, value in extra.items()})
    return result


class SumRuleReport(NamedTuple):
    scenario_id: str
    records: list
    metadata: dict = None

    @property
    def passed(self):
        return all(record.passed for record in self.records)

    def counts(self):
        counts = {PASS: 0, FAIL: 0, DEGENERATE: 0, SKIP: 0}
        for record in self.records:
            counts[record.verdict] += 1
        return counts

    def as_dict(self):
        return {
            'scenario_id': self.scenario_id,
            'metadata': _plain(self.metadata or {}),
            'passed': self.passed,
            'counts': self.counts(),
            'records': [record.as_dict() for record in self.records],
        }


def write_json(report: SumRuleReport, path):
    path = pathlib.Path(path)
    with path.open('w') as stream:
        json.dump(report.as_dict(), stream, sort_keys=True, indent=2)
        stream.write('\n')
    logger.info('Report written to {}'.format(path))


def write_profiles(report: SumRuleReport, path):
    """One row per record that carries a evaluation site and term values."""
    path = pathlib.Path(path)
    rows = []
    term_names = []
    for record in report.records:
        terms = (record.details or {}).get('terms')
        if not terms:
            continue
        for name in terms:
            if name not in term_names:
                term_names.append(name)
        rows.append(record)
    with path.open('w', newline='') as stream:
        writer = csv.writer(stream)
        writer.writerow(['check', 'label', 'witness', 'r'] + term_names + ['sum', 'error', 'verdict'])
        for record in rows:
            witness = record.witness or {}
            terms = record.details['terms']
            writer.writerow(
                [record.check, record.label, json.dumps(witness.get('positions', [])),
                 json.dumps(witness.get('r', []))] +
                [json.dumps(terms.get(name, '')) for name in term_names] +
                [json.dumps(record.value), repr(record.error), record.verdict],
            )
    logger.info('Profiles written to {}'.format(path))


def render_summary(report: SumRuleReport):
    template = jinja_environment.get_template('summary.txt.template')
    return template.render(report=report, records=report.records, counts=report.counts())
