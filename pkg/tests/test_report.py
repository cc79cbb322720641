import csv
import json
import math

import pytest

from hyperforce.report import DEGENERATE
from hyperforce.report import FAIL
from hyperforce.report import PASS
from hyperforce.report import SKIP
from hyperforce.report import SumRuleReport
from hyperforce.report import Tolerances
from hyperforce.report import failure_record
from hyperforce.report import make_record
from hyperforce.report import render_summary
from hyperforce.report import skip_record
from hyperforce.report import verdict
from hyperforce.report import witness_dict
from hyperforce.report import write_json
from hyperforce.report import write_profiles

TOLERANCES = Tolerances(tol_abs=1e-8, tol_rel=1e-6)


@pytest.mark.parametrize('value, error, scale, expected', [
    (0.0, 0.0, 1.0, PASS),
    (5e-9, 0.0, 1.0, PASS),
    (5e-7, 0.0, 1.0, PASS),
    (5e-6, 0.0, 1.0, FAIL),
    (5e-6, 2e-6, 1.0, PASS),
    (5e-9, 0.0, 5e-9, DEGENERATE),
    (math.nan, 0.0, 1.0, FAIL),
    (0.0, math.inf, 1.0, FAIL),
])
def test_verdicts(value, error, scale, expected):
    assert verdict(value, error, scale, TOLERANCES) == expected


def test_vector_values_use_the_euclidean_norm():
    assert verdict([3e-8, 4e-8], 0.0, 1e-2, TOLERANCES) == FAIL
    assert verdict([3e-9, 4e-9], 0.0, 1e-2, TOLERANCES) == PASS


def test_tolerances_scale_without_touching_the_error_multiplier():
    scaled = TOLERANCES.scaled(10.0)
    assert scaled.tol_abs == pytest.approx(1e-7)
    assert scaled.tol_rel == pytest.approx(1e-5)
    assert scaled.error_multiplier == TOLERANCES.error_multiplier


def test_skips_and_failures_carry_reasons():
    skipped = skip_record('bbgky', 'n=1', 'needs N >= 2')
    failed = failure_record('g_vanish', 'i=0', 'integration domain')
    assert skipped.verdict == SKIP and skipped.passed
    assert failed.verdict == FAIL and not failed.passed
    assert failed.details == {'reason': 'integration domain'}


@pytest.fixture
def report():
    witness = witness_dict(([[0.5]], [[0.0]]), r=[0.2])
    return SumRuleReport('tiny', [
        make_record('g_vanish', 'i=0', [1e-12], 1e-13, 0.4, witness=witness,
                    details={'terms': {'G1': [0.0], 'G3': [0.4]}}, tolerances=TOLERANCES),
        make_record('t_derivative', 'n=0', 1e-3, 0.0, 1.0, flagged=True, tolerances=TOLERANCES),
        skip_record('bbgky', 'levels', 'single particle'),
    ], {'workers': 2})


def test_report_counts(report):
    assert report.counts() == {PASS: 1, FAIL: 1, DEGENERATE: 0, SKIP: 1}
    assert not report.passed


def test_json_report(report, tmp_path):
    path = tmp_path / 'report.json'
    write_json(report, path)
    document = json.loads(path.read_text())
    assert document['scenario_id'] == 'tiny'
    assert document['passed'] is False
    assert document['metadata'] == {'workers': 2}
    assert [record['verdict'] for record in document['records']] == [PASS, FAIL, SKIP]
    assert document['records'][1]['flagged'] is True
    assert document['records'][0]['witness']['r'] == [0.2]


def test_profiles_keep_records_with_terms(report, tmp_path):
    path = tmp_path / 'profiles.csv'
    write_profiles(report, path)
    with path.open() as stream:
        rows = list(csv.reader(stream))
    assert rows[0] == ['check', 'label', 'witness', 'r', 'G1', 'G3', 'sum', 'error', 'verdict']
    assert len(rows) == 2
    assert rows[1][0] == 'g_vanish'
    assert json.loads(rows[1][3]) == [0.2]


def test_summary_lists_every_record(report):
    summary = render_summary(report)
    assert summary.count('\n') >= 3
    assert 'tiny: 1 passed, 0 degenerate, 1 skipped, 1 failed' in summary
    assert '(single particle)' in summary
    assert '(flagged)' in summary
