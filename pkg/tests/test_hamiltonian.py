import numpy as np
import pytest

from hyperforce.exceptions import BoundaryError
from hyperforce.exceptions import SingularityError
from hyperforce.hamiltonian import HamiltonianModel
from hyperforce.hamiltonian import boltzmann_factor
from hyperforce.hamiltonian import grad_p
from hyperforce.hamiltonian import grad_r
from hyperforce.hamiltonian import hamiltonian_eval
from hyperforce.hamiltonian import schwartz_diagnostic
from hyperforce.hamiltonian import weighted_grad_r
from hyperforce.potentials import HarmonicExternal
from hyperforce.potentials import HarmonicPair
from hyperforce.potentials import SoftSpherePair
from hyperforce.potentials import WCAPair
from hyperforce.system import PhasePoint
from hyperforce.system import SystemSpec
from hyperforce.system import Torus


@pytest.fixture
def spec():
    return SystemSpec(2, 2, [1.0, 2.0], 0.5)


@pytest.fixture
def model():
    return HamiltonianModel(SoftSpherePair(epsilon=1.0, sigma=1.5, alpha=3.0), HarmonicExternal(k=0.7))


def test_hamiltonian_by_hand():
    spec = SystemSpec(1, 2, [1.0, 2.0], 1.0)
    model = HamiltonianModel(HarmonicPair(k=2.0), HarmonicExternal(k=1.0))
    x = PhasePoint(np.array([[1.0], [-1.0]]), np.array([[2.0], [2.0]]))
    # kinetic 2 + 1, pair 0.5 * 2 * 4, external 0.5 + 0.5
    assert hamiltonian_eval(model, spec, x) == pytest.approx(8.0)


def test_pair_energy_is_symmetric(spec, model, random_points):
    positions, _ = random_points
    swapped = positions[..., ::-1, :]
    assert np.array_equal(model.pair_energy(spec, positions), model.pair_energy(spec, swapped))


def test_gradient_matches_finite_differences(spec, model, random_points):
    positions, momenta = random_points
    h = 1e-6
    for i in range(spec.particles):
        gradient = grad_r(model, spec, PhasePoint(positions, momenta), i)
        for axis in range(spec.dimension):
            plus, minus = positions.copy(), positions.copy()
            plus[:, i, axis] += h
            minus[:, i, axis] -= h
            difference = (hamiltonian_eval(model, spec, PhasePoint(plus, momenta)) -
                          hamiltonian_eval(model, spec, PhasePoint(minus, momenta))) / (2.0 * h)
            assert np.allclose(gradient[:, axis], difference, rtol=1e-6, atol=1e-7)
    assert np.allclose(grad_p(spec, PhasePoint(positions, momenta), 1), momenta[:, 1] / 2.0)


def test_boltzmann_factor_is_bounded_when_energy_is_nonnegative(spec, model, random_points):
    weight = boltzmann_factor(model, spec, PhasePoint(*random_points))
    assert np.all((weight >= 0.0) & (weight <= 1.0))


def test_singular_set_is_handled_by_weighted_gradient():
    spec = SystemSpec(1, 2, 1.0, 1.0)
    model = HamiltonianModel(WCAPair())
    x = PhasePoint(np.zeros((2, 1)), np.zeros((2, 1)))
    with pytest.raises(SingularityError):
        grad_r(model, spec, x, 0)
    assert np.all(weighted_grad_r(model, spec, x, 0) == 0.0)


def test_weighted_gradient_is_continuous_near_the_core():
    spec = SystemSpec(1, 2, 1.0, 1.0)
    model = HamiltonianModel(WCAPair())
    separations = np.array([1e-1, 1e-2, 1e-3])
    positions = np.stack([np.zeros_like(separations), separations], axis=-1)[..., None]
    weighted = weighted_grad_r(model, spec, PhasePoint(positions, np.zeros_like(positions)), 0)
    assert np.all(np.isfinite(weighted))
    assert np.max(np.abs(weighted)) < 1e-100


def test_decay_diagnostic_accepts_trap_and_rejects_free_particles():
    spec = SystemSpec(1, 2, 1.0, 1.0)
    trapped = schwartz_diagnostic(HamiltonianModel(HarmonicPair(), HarmonicExternal()), spec)
    assert trapped.admissible
    free = schwartz_diagnostic(HamiltonianModel(HarmonicPair()), spec)
    assert not free.admissible
    assert free.reasons


def test_decay_diagnostic_is_euclidean_only():
    spec = SystemSpec(1, 1, 1.0, 1.0, Torus([[2.0]]))
    with pytest.raises(BoundaryError):
        schwartz_diagnostic(HamiltonianModel(), spec)
