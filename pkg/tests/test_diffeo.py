import numpy as np
import pytest

from hyperforce.diffeo import AdmissibleDiffeo
from hyperforce.diffeo import LiftedMap
from hyperforce.diffeo import compose_fields
from hyperforce.diffeo import gamma_equivariance_check
from hyperforce.diffeo import inverse_field
from hyperforce.diffeo import invert_diffeo
from hyperforce.diffeo import lift_apply
from hyperforce.diffeo import lift_jacobian_det
from hyperforce.diffeo import pullback_density
from hyperforce.diffeo import pullback_function
from hyperforce.diffeo import sampled_jacobian_norm
from hyperforce.exceptions import BoundaryError
from hyperforce.exceptions import InadmissibleFieldError
from hyperforce.exceptions import InversionError
from hyperforce.fields import BumpField
from hyperforce.fields import ZeroField
from hyperforce.observables import Coordinate
from hyperforce.observables import Kinetic
from hyperforce.system import PhasePoint


@pytest.fixture
def points(pair_spec):
    generator = np.random.default_rng(3)
    shape = (5, pair_spec.particles, pair_spec.dimension)
    return PhasePoint(generator.uniform(-1.0, 1.0, shape), generator.standard_normal(shape))


def test_steep_fields_are_rejected():
    with pytest.raises(InadmissibleFieldError):
        AdmissibleDiffeo(BumpField([0.0], 0.5, [5.0]))


def test_sampled_norm_of_gentle_bump(bump):
    assert 0.0 < bump.sup_jacobian_norm < 1.0
    assert sampled_jacobian_norm(ZeroField(1)) == 0.0


def test_lift_moves_only_free_particles(bump, pair_spec, points):
    lifted = lift_apply(LiftedMap(bump, 1, pair_spec), points)
    assert np.array_equal(lifted.positions[:, 0], points.positions[:, 0])
    assert np.array_equal(lifted.momenta[:, 0], points.momenta[:, 0])
    moving = points.positions[:, 1]
    assert np.allclose(lifted.positions[:, 1], moving + bump.value(moving))
    # in one dimension the momentum is divided by 1 + eps'
    assert np.allclose(lifted.momenta[:, 1], points.momenta[:, 1] / (1.0 + bump.jacobian(moving)[..., 0]))


def test_zero_field_lifts_to_identity(pair_spec, points):
    lifted = LiftedMap(AdmissibleDiffeo(ZeroField(1)), 0, pair_spec)
    assert lifted.is_identity
    assert lift_jacobian_det(lifted, points) == 1.0
    assert np.array_equal(lift_apply(lifted, points).positions, points.positions)


@pytest.mark.parametrize('level', [0, 1])
def test_lift_preserves_phase_volume(bump, pair_spec, points, level):
    lifted = LiftedMap(bump, level, pair_spec)
    assert np.allclose(lifted.block_determinant(points.positions), 1.0, atol=1e-12)
    for k in range(len(points.positions)):
        x = PhasePoint(points.positions[k], points.momenta[k])
        assert lift_jacobian_det(lifted, x) == pytest.approx(1.0, abs=1e-6)


def test_level_must_leave_a_free_particle(bump, pair_spec):
    with pytest.raises(ValueError):
        LiftedMap(bump, 2, pair_spec)


def test_inversion_recovers_the_preimage(bump):
    x = np.linspace(-2.0, 2.0, 41)[:, None]
    assert np.allclose(invert_diffeo(bump, bump.apply(x)), x, atol=1e-10)
    inverse = inverse_field(bump)
    assert np.allclose(inverse.apply(bump.apply(x)), x, atol=1e-10)


def test_inversion_reports_non_convergence(bump):
    with pytest.raises(InversionError):
        invert_diffeo(bump, np.array([[0.3]]), max_iterations=1)


def test_composed_lifts_agree_with_composed_field(bump, pair_spec, points):
    first, second = bump.scaled(0.4), bump.scaled(-0.3)
    composed = AdmissibleDiffeo(compose_fields(first, second))
    nested = LiftedMap(second, 0, pair_spec).compose(LiftedMap(first, 0, pair_spec))
    direct = LiftedMap(composed, 0, pair_spec)
    for expected, actual in zip(direct.apply(*points), nested.apply(*points)):
        assert np.allclose(expected, actual, atol=1e-12)


def test_lift_commutes_with_lattice_shifts(fourier, ring_spec):
    report = gamma_equivariance_check(LiftedMap(fourier, 0, ring_spec), samples=20)
    assert report.max_deviation < 1e-10
    assert report.samples == 20


def test_lattice_equivariance_needs_a_torus(bump, trap_spec):
    with pytest.raises(BoundaryError):
        gamma_equivariance_check(LiftedMap(bump, 0, trap_spec))


def test_pullbacks_evaluate_at_the_lifted_point(bump, pair_spec, points):
    lifted = LiftedMap(bump, 0, pair_spec)
    observable = Kinetic(1) * Coordinate('r', 0, 0)
    moved = lift_apply(lifted, points)
    expected = observable(moved.positions, moved.momenta)
    assert np.allclose(pullback_function(observable, lifted)(*points), expected)
    determinant = np.abs(lifted.block_determinant(points.positions))
    assert np.allclose(pullback_density(observable, lifted)(*points), expected * determinant)


def test_identity_pullback_is_the_function(pair_spec, points):
    lifted = LiftedMap(AdmissibleDiffeo(ZeroField(1)), 0, pair_spec)
    observable = Kinetic(0)
    assert np.allclose(pullback_density(observable, lifted)(*points), observable(*points))


def test_composition_is_associative(bump):
    e1, e2, e3 = bump.scaled(0.3), bump.scaled(-0.2), bump.scaled(0.25)
    left = compose_fields(AdmissibleDiffeo(compose_fields(e1, e2)), e3)
    right = compose_fields(e1, AdmissibleDiffeo(compose_fields(e2, e3)))
    r = np.linspace(-2.0, 2.0, 41)[:, None]
    assert np.allclose(left.value(r), right.value(r), atol=1e-13)
    assert np.allclose(left.jacobian(r), right.jacobian(r), atol=1e-12)
