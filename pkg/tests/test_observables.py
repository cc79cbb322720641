import numpy as np
import pytest

from hyperforce.exceptions import MissingGradientError
from hyperforce.hamiltonian import weighted_grad_r
from hyperforce.observables import BoltzmannFactor
from hyperforce.observables import CallableFunction
from hyperforce.observables import Constant
from hyperforce.observables import Coordinate
from hyperforce.observables import CosineMode
from hyperforce.observables import Kinetic
from hyperforce.observables import ObservableDispatcher
from hyperforce.observables import Product
from hyperforce.observables import TranslatedFunction
from hyperforce.system import PhasePoint
from hyperforce.system import SystemSpec
from hyperforce.system import Torus


@pytest.fixture
def points():
    generator = np.random.default_rng(11)
    return generator.uniform(-1.5, 1.5, (30, 2, 2)), generator.standard_normal((30, 2, 2))


def _observables():
    plane = Torus([[2.0, 0.0], [0.0, 3.0]])
    return [
        Constant(2.5),
        Coordinate('r', 1, 0),
        Coordinate('p', 0, 1),
        Kinetic(1),
        CosineMode(plane, 0, [1, -1]),
        Product([Coordinate('r', 0, 1), Kinetic(0), CosineMode(plane, 1, [0, 2])]),
    ]


@pytest.mark.parametrize('index', range(6))
@pytest.mark.parametrize('i', [0, 1])
def test_analytic_gradients_match_finite_differences(points, index, i):
    observable = _observables()[index]
    numeric = CallableFunction(observable.value)
    positions, momenta = points
    assert np.allclose(observable.grad_r(positions, momenta, i), numeric.grad_r(positions, momenta, i), atol=1e-7)
    assert np.allclose(observable.grad_p(positions, momenta, i), numeric.grad_p(positions, momenta, i), atol=1e-7)
    assert np.allclose(observable.hess_rp(positions, momenta, i), numeric.hess_rp(positions, momenta, i), atol=1e-4)


@pytest.mark.parametrize('i', [0, 1])
def test_boltzmann_gradients(pair_model, points, i):
    spec = SystemSpec(2, 2, [1.0, 2.0], 0.8)
    observable = BoltzmannFactor(pair_model, spec)
    numeric = CallableFunction(observable.value)
    positions, momenta = points
    assert np.allclose(observable.grad_r(positions, momenta, i), numeric.grad_r(positions, momenta, i), atol=1e-7)
    assert np.allclose(observable.grad_p(positions, momenta, i), numeric.grad_p(positions, momenta, i), atol=1e-7)
    assert np.allclose(observable.hess_rp(positions, momenta, i), numeric.hess_rp(positions, momenta, i), atol=1e-4)
    pair, external = observable.split_weighted_gradient(positions, momenta, i)
    expected = weighted_grad_r(pair_model, spec, PhasePoint(positions, momenta), i)
    assert np.allclose(pair + external, expected)


def test_products_are_built_with_multiplication(points):
    product = Kinetic(0) * Coordinate('r', 1, 1)
    assert isinstance(product, Product)
    positions, momenta = points
    assert np.allclose(product(positions, momenta), np.sum(momenta[:, 0] ** 2, axis=-1) * positions[:, 1, 1])
    assert product.tempered_bound() == (1.0, 3)


def test_missing_gradient_oracle_is_reported(points):
    observable = CallableFunction(lambda positions, momenta: positions[..., 0, 0], finite_differences=False)
    with pytest.raises(MissingGradientError):
        observable.grad_r(*points, 0)
    with pytest.raises(MissingGradientError):
        Product([observable, Constant()]).grad_p(*points, 0)


def test_translated_function_shifts_positions(points):
    shift = np.array([0.5, -0.25])
    translated = TranslatedFunction(Coordinate('r', 0, 0), shift)
    positions, momenta = points
    assert np.allclose(translated(positions, momenta), positions[:, 0, 0] - 0.5)
    assert translated.analytic_gradients


def test_dispatcher_validates_particles_and_axes():
    dispatcher = ObservableDispatcher(SystemSpec(1, 2, 1.0, 1.0))
    assert isinstance(dispatcher.dispatch({'kind': 'product', 'factors': [
        {'kind': 'kinetic', 'particle': 1}, {'kind': 'constant', 'value': 2.0},
    ]}), Product)
    with pytest.raises(IndexError):
        dispatcher.dispatch({'kind': 'kinetic', 'particle': 2})
    with pytest.raises(ValueError):
        dispatcher.dispatch({'kind': 'coordinate', 'of': 'r', 'particle': 0, 'axis': 1})
    with pytest.raises(ValueError):
        dispatcher.dispatch({'kind': 'entropy'})
