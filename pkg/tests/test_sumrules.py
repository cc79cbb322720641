import math

import numpy as np
import pytest

from hyperforce.checks import force_balance_oracle
from hyperforce.distributions import PairingEvaluator
from hyperforce.exceptions import InadmissibleFieldError
from hyperforce.observables import Constant
from hyperforce.observables import Coordinate
from hyperforce.observables import Kinetic
from hyperforce.quadrature import IntegrationResult
from hyperforce.sumrules import G_BLOCKS
from hyperforce.sumrules import bbgky_density_residual
from hyperforce.sumrules import bbgky_residual
from hyperforce.sumrules import closed_form_terms
from hyperforce.sumrules import euclid_torus_consistency
from hyperforce.sumrules import force_balance_profile
from hyperforce.sumrules import g_i
from hyperforce.sumrules import g_term
from hyperforce.sumrules import g_term_records
from hyperforce.sumrules import g_terms
from hyperforce.sumrules import harmonic_pair_density_oracle
from hyperforce.sumrules import hyperforce_t_derivative
from hyperforce.sumrules import leibniz_witness
from hyperforce.sumrules import localized_hyperforce
from hyperforce.sumrules import pairing_invariance
from hyperforce.sumrules import site_positions
from hyperforce.sumrules import richardson_derivative
from hyperforce.sumrules import route_agreement
from hyperforce.sumrules import sigma_F_decomposition
from hyperforce.sumrules import witness_points
from hyperforce.system import PhasePoint

PINNED = [-1.5, -0.4, 0.0, 0.8]


@pytest.mark.parametrize('r', PINNED)
def test_trap_g_terms_have_closed_forms(trap_ev, r):
    terms = g_terms(trap_ev, 0, 0, [r])
    g3 = -r * math.exp(-0.5 * r ** 2) * math.sqrt(2.0 * math.pi)
    assert np.allclose(terms.g1, 0.0)
    assert np.allclose(terms.g2, 0.0)
    assert np.allclose(terms.g3, g3, rtol=1e-10, atol=1e-12)
    assert np.allclose(terms.g4, -g3, rtol=1e-10, atol=1e-12)
    assert np.allclose(terms.total, 0.0, atol=1e-10)
    assert np.allclose(closed_form_terms(trap_ev, 0, 0, [r])[3], g3)


def test_single_term_matches_the_bundle(trap_ev):
    assert np.allclose(g_term(trap_ev, 3, 0, 0, [0.8]), g_terms(trap_ev, 0, 0, [0.8]).g3)
    with pytest.raises(ValueError):
        g_term(trap_ev, 5, 0, 0, [0.8])


@pytest.mark.parametrize('f', [Constant(2.0), Coordinate('p', 0, 0), Kinetic(0) * Coordinate('r', 0, 0)])
def test_g_sum_vanishes_for_observables(trap_ev, loose, f):
    record = g_i(trap_ev, 0, 0, [0.7], f=f, tolerances=loose)
    assert record.passed, record


def test_term_records_follow_the_closed_form(trap_ev, loose):
    records = g_term_records(trap_ev, 0, 0, [0.7], tolerances=loose)
    assert [record.label for record in records] == ['i=0 n=0 G{}'.format(k) for k in range(1, 5)]
    assert all(record.passed for record in records)
    assert 'expected' in records[2].details


def test_terms_without_closed_form_are_recorded(trap_ev, loose):
    records = g_term_records(trap_ev, 0, 0, [0.7], f=Kinetic(0), tolerances=loose)
    assert records[2].details['reason'] == 'no closed form; terms recorded'


def test_ideal_gas_terms_vanish(ideal_ev):
    witness = PhasePoint(np.array([[1.0]]), np.array([[0.5]]))
    terms = g_terms(ideal_ev, 1, 1, [2.5], witness)
    for block in G_BLOCKS:
        assert np.allclose(getattr(terms, block.lower()), 0.0, atol=1e-12)


def test_wca_pair_on_a_ring(ring_spec, wca_model, scheme, loose):
    ev = PairingEvaluator(ring_spec, wca_model, scheme)
    record = g_i(ev, 1, 0, [2.0], tolerances=loose.scaled(10.0))
    assert record.passed, record


def test_localized_routes_agree(trap_ev, bump, loose):
    localized = localized_hyperforce(trap_ev, 0, 0, bump, Kinetic(0))
    assert abs(localized.route_a.value) < 1e-7
    assert abs(localized.route_b.value) < 1e-7
    assert localized.agreement.record('localized', 'agreement', tolerances=loose).passed


def test_t_derivative_vanishes(trap_ev, bump, loose):
    derivative = hyperforce_t_derivative(trap_ev, 0, bump)
    assert abs(derivative.value) < 1e-6
    assert derivative.scale == 0.0
    assert abs(derivative.value) <= 3.0 * derivative.error
    assert derivative.record('t_derivative', 'n=0', tolerances=loose).passed
    agreement = route_agreement(derivative, [localized_hyperforce(trap_ev, 0, 0, bump)])
    assert agreement.record('t_derivative', 'agreement', tolerances=loose).passed


def test_t_step_must_keep_the_field_admissible(trap_ev, bump):
    with pytest.raises(ValueError):
        hyperforce_t_derivative(trap_ev, 0, bump, t_step=0.0)
    with pytest.raises(InadmissibleFieldError):
        hyperforce_t_derivative(trap_ev, 0, bump, t_step=2.0 / bump.sup_jacobian_norm)


def test_leibniz_and_invariance(trap_ev, bump, loose):
    for name, residual in leibniz_witness(trap_ev, 0, bump, Kinetic(0)).items():
        assert residual.record('leibniz', name, tolerances=loose.scaled(10.0)).passed, name
    assert pairing_invariance(trap_ev, 0, bump, Kinetic(0)).record('invariance', 'n=0', tolerances=loose).passed


def test_hierarchy_arguments(pair_ev, trap_ev):
    point = ([[0.3]], [[0.2]])
    with pytest.raises(ValueError):
        bbgky_residual(pair_ev, 0, 0, point)
    with pytest.raises(IndexError):
        bbgky_residual(pair_ev, 1, 1, point)
    with pytest.raises(ValueError):
        bbgky_density_residual(trap_ev, [0.0])


@pytest.mark.slow
def test_hierarchy_holds_for_a_bound_pair(pair_ev, loose):
    result = bbgky_residual(pair_ev, 1, 0, ([[0.3]], [[0.2]]))
    assert result.residual.record('bbgky', 'n=1', tolerances=loose).passed
    assert result.momentum_check.record('bbgky', 'momentum', tolerances=loose).passed


@pytest.mark.slow
@pytest.mark.parametrize('r', [-0.6, 0.4])
def test_density_hierarchy_matches_the_closed_form(pair_ev, loose, r):
    residual = bbgky_density_residual(pair_ev, [r])
    expected = harmonic_pair_density_oracle(pair_ev.model, pair_ev.spec, [r])
    for name in ('thermal', 'external', 'interaction', 'density'):
        assert np.allclose(residual.details['terms'][name], expected[name], rtol=1e-4, atol=1e-8), name
    assert residual.record('bbgky', 'density', tolerances=loose).passed


@pytest.mark.parametrize('r', [-0.9, 0.5])
def test_trap_force_balance(trap_ev, loose, r):
    residual = force_balance_profile(trap_ev, [r])
    expected = force_balance_oracle(trap_ev.model, trap_ev.spec, [r])
    for name in ('thermal', 'interaction', 'external'):
        assert np.allclose(residual.details['terms'][name], expected[name], rtol=1e-4, atol=1e-8), name
    assert residual.record('force_balance', 'r', tolerances=loose).passed


@pytest.mark.slow
def test_pair_force_balance(pair_ev, loose):
    residual = force_balance_profile(pair_ev, [0.4])
    expected = force_balance_oracle(pair_ev.model, pair_ev.spec, [0.4])
    for name in ('thermal', 'interaction', 'external'):
        assert np.allclose(residual.details['terms'][name], expected[name], rtol=1e-4, atol=1e-8), name


def test_general_force_balance_components(trap_ev, loose):
    residual = force_balance_profile(trap_ev, [0.5], Kinetic(0))
    assert set(residual.details['terms']) == {'sigma', 'kinetic', 'pair_force', 'external_force'}
    assert residual.record('force_balance', 'r', tolerances=loose).passed


def test_sigma_f_regrouping(trap_ev):
    decomposition = sigma_F_decomposition(trap_ev, [0.5])
    assert np.allclose(decomposition.total, decomposition.g_sum, rtol=1e-12, atol=1e-12)
    assert np.allclose(decomposition.sigma, 0.0, atol=1e-12)
    assert np.allclose(decomposition.kinetic, -decomposition.force, rtol=1e-10)
    assert np.allclose(decomposition.force_pair, 0.0)


def test_euclidean_and_torus_terms_agree(trap_ev):
    residual = euclid_torus_consistency(trap_ev, 0, 0, [0.6])
    assert np.max(np.abs(residual.value)) < 1e-10


def test_richardson_derivative_of_a_sine():
    derivative = richardson_derivative(lambda s: IntegrationResult(math.sin(s), 1e-14), 1e-2)
    assert derivative.value == pytest.approx(1.0, abs=1e-8)
    assert derivative.error < 1e-4
    assert not derivative.flagged


def test_site_positions(trap_model, trap_spec, ring_spec, wca_model):
    assert np.allclose(site_positions(trap_model, trap_spec)[:, 0], [-2.0, -1.0, 0.0, 1.0, 2.0])
    assert np.allclose(site_positions(wca_model, ring_spec, 3)[:, 0], [0.4, 2.0, 3.6])


def test_witness_points(pair_model, pair_spec):
    assert len(witness_points(pair_model, pair_spec, 0)) == 1
    witnesses = witness_points(pair_model, pair_spec, 1, count=4)
    assert len(witnesses) == 4
    for witness in witnesses:
        assert witness.positions.shape == (1, 1)
        assert abs(witness.momenta[0, 0]) in (0.0, 1.0)
    with pytest.raises(ValueError):
        witness_points(pair_model, pair_spec, 2)
