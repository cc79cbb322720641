import numpy as np
import pytest

from hyperforce.exceptions import BoundaryError
from hyperforce.fields import BumpField
from hyperforce.fields import ComposedField
from hyperforce.fields import FieldDispatcher
from hyperforce.fields import FourierField
from hyperforce.fields import ScaledField
from hyperforce.fields import SumField
from hyperforce.fields import ZeroField
from hyperforce.system import Euclidean
from hyperforce.system import Torus


def finite_difference_jacobian(field, r, h=1e-6):
    columns = []
    for b in range(r.shape[-1]):
        shift = np.zeros(r.shape[-1])
        shift[b] = h
        columns.append((field.value(r + shift) - field.value(r - shift)) / (2.0 * h))
    return np.stack(columns, axis=-1)


@pytest.fixture
def plane():
    return Torus([[3.0, 0.0], [0.5, 2.0]])


def _fields(plane):
    bump = BumpField([0.1, -0.2], 1.2, [0.15, -0.1])
    fourier = FourierField(plane, [{'wavenumber': [1, 0], 'cos': [0.1, 0.0]},
                                   {'wavenumber': [1, -1], 'sin': [0.0, 0.05]}])
    return [
        bump,
        fourier,
        SumField([bump, ScaledField(bump, -0.5)]),
        ComposedField(bump, ScaledField(BumpField([0.4, 0.0], 0.8, [0.0, 0.2]), 1.0)),
    ]


@pytest.mark.parametrize('index', range(4))
def test_jacobian_matches_finite_differences(plane, index):
    field = _fields(plane)[index]
    r = np.random.default_rng(index).uniform(-1.0, 1.0, size=(50, 2))
    assert np.allclose(field.jacobian(r), finite_difference_jacobian(field, r), atol=1e-7)


def test_bump_vanishes_outside_its_support():
    field = BumpField([0.3], 1.5, [0.2])
    outside = np.array([[0.3 + 1.6], [0.3 - 1.5], [10.0]])
    assert np.all(field.value(outside) == 0.0)
    assert np.all(field.jacobian(outside) == 0.0)
    assert field.value(np.array([[0.3]]))[0, 0] == pytest.approx(0.2)


@pytest.mark.parametrize('radius', [0.0, -1.0])
def test_bump_needs_positive_radius(radius):
    with pytest.raises(ValueError):
        BumpField([0.0], radius, [0.1])


def test_fourier_field_is_periodic(plane):
    field = _fields(plane)[1]
    r = np.random.default_rng(1).uniform(size=(20, 2))
    for coefficients in ([1, 0], [0, 1], [2, -3]):
        shifted = r + plane.lattice_vector(coefficients)
        assert np.allclose(field.value(shifted), field.value(r), atol=1e-12)


def test_fourier_field_needs_a_torus():
    with pytest.raises(BoundaryError):
        FourierField(Euclidean(), [{'wavenumber': [1], 'sin': [0.1]}])


def test_fourier_wavenumbers_must_be_integers():
    with pytest.raises(ValueError):
        FourierField(Torus([[2.0]]), [{'wavenumber': [0.5], 'sin': [0.1]}])


def test_zero_field_is_flagged_zero():
    field = ZeroField(2)
    assert field.is_zero
    assert field.jacobian(np.ones((3, 2))).shape == (3, 2, 2)
    assert BumpField([0.0], 1.0, [0.0]).is_zero


def test_composed_field_is_the_composite_map():
    first = BumpField([0.0], 1.0, [0.2])
    second = BumpField([0.1], 0.7, [-0.15])
    composed = ComposedField(first, second)
    r = np.linspace(-1.5, 1.5, 31)[:, None]
    inner = r + first.value(r)
    assert np.allclose(r + composed.value(r), inner + second.value(inner))


def test_dispatcher_builds_sums():
    dispatcher = FieldDispatcher(Torus([[4.0]]), 1)
    field = dispatcher.dispatch({'kind': 'sum', 'terms': [
        {'kind': 'bump', 'center': [0.0], 'radius': 1.0, 'amplitude': [0.1]},
        {'kind': 'fourier', 'modes': [{'wavenumber': [1], 'sin': [0.1]}]},
    ]})
    assert isinstance(field, SumField)
    assert field.support_box() is not None
    with pytest.raises(ValueError):
        dispatcher.dispatch({'kind': 'swirl'})
