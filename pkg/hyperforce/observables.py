"""
Scalar functions on phase space with gradient oracles.

A phase function is evaluated on positions and momenta of shape (..., N, d) and
returns values of shape (...). Gradients in r_i and p_i have shape (..., d); the
mixed second derivative `hess_rp` has shape (..., d, d) with entry [a, b] equal to
d/dr_{i,b} d/dp_{i,a} f.
"""
import logging

import numpy as np

from hyperforce import settings
from hyperforce.exceptions import MissingGradientError
from hyperforce.hamiltonian import HamiltonianModel
from hyperforce.hamiltonian import boltzmann_factor
from hyperforce.system import PhasePoint
from hyperforce.system import SystemSpec

logger = logging.getLogger(__name__)


def _shifted(array, i, axis, step):
    shifted = np.array(array, dtype=float, copy=True)
    shifted[..., i, axis] += step
    return shifted


class PhaseFunction:
    finite_differences = True
    periodic = True
    analytic_gradients = False
    fd_step = settings.DEFAULT_FD_RELATIVE_STEP

    def value(self, positions, momenta):
        raise NotImplementedError

    def __call__(self, positions, momenta):
        return self.value(positions, momenta)

    def _require_differences(self):
        if not self.finite_differences:
            raise MissingGradientError(
                '{} has no gradient oracle and finite differences are disabled.'.format(type(self).__name__),
            )

    def _step(self, coordinate):
        return self.fd_step * np.maximum(1.0, np.abs(coordinate))

    def grad_r(self, positions, momenta, i):
        self._require_differences()
        positions = np.asarray(positions, dtype=float)
        columns = []
        for axis in range(positions.shape[-1]):
            h = self._step(positions[..., i, axis])
            plus = self.value(_shifted(positions, i, axis, h), momenta)
            minus = self.value(_shifted(positions, i, axis, -h), momenta)
            columns.append((plus - minus) / (2.0 * h))
        return np.stack(columns, axis=-1)

    def grad_p(self, positions, momenta, i):
        self._require_differences()
        momenta = np.asarray(momenta, dtype=float)
        columns = []
        for axis in range(momenta.shape[-1]):
            h = self._step(momenta[..., i, axis])
            plus = self.value(positions, _shifted(momenta, i, axis, h))
            minus = self.value(positions, _shifted(momenta, i, axis, -h))
            columns.append((plus - minus) / (2.0 * h))
        return np.stack(columns, axis=-1)

    def hess_rp(self, positions, momenta, i):
        self._require_differences()
        positions = np.asarray(positions, dtype=float)
        columns = []
        for axis in range(positions.shape[-1]):
            h = self._step(positions[..., i, axis])
            plus = self.grad_p(_shifted(positions, i, axis, h), momenta, i)
            minus = self.grad_p(_shifted(positions, i, axis, -h), momenta, i)
            columns.append((plus - minus) / (2.0 * h)[..., None])
        return np.stack(columns, axis=-1)

    def __mul__(self, other):
        return Product([self, other])

    def as_dict(self):
        return {'kind': type(self).__name__}

    def tempered_bound(self):
        """(C, l) with |f(x)| <= C (1 + |x|)^l, or None when unknown."""
        return None


def _zeros_vector(positions):
    positions = np.asarray(positions, dtype=float)
    return np.zeros(positions.shape[:-2] + positions.shape[-1:])


def _zeros_matrix(positions):
    positions = np.asarray(positions, dtype=float)
    return np.zeros(positions.shape[:-2] + positions.shape[-1:] * 2)


class Constant(PhaseFunction):
    analytic_gradients = True

    def __init__(self, value=1.0):
        self.constant = float(value)

    def value(self, positions, momenta):
        return np.full(np.shape(positions)[:-2], self.constant)

    def grad_r(self, positions, momenta, i):
        return _zeros_vector(positions)

    def grad_p(self, positions, momenta, i):
        return _zeros_vector(positions)

    def hess_rp(self, positions, momenta, i):
        return _zeros_matrix(positions)

    def tempered_bound(self):
        return abs(self.constant), 0

    def as_dict(self):
        return {'kind': 'constant', 'value': self.constant}


class Coordinate(PhaseFunction):
    """A single component of r_particle (of='r') or p_particle (of='p')."""
    analytic_gradients = True

    def __init__(self, of, particle, axis):
        if of not in ('r', 'p'):
            raise ValueError('Coordinate observable must be of "r" or "p", got {}.'.format(of))
        self.of = of
        self.particle = int(particle)
        self.axis = int(axis)
        self.periodic = of == 'p'

    def value(self, positions, momenta):
        source = positions if self.of == 'r' else momenta
        return np.asarray(source, dtype=float)[..., self.particle, self.axis]

    def _unit(self, positions, i, of):
        gradient = _zeros_vector(positions)
        if of == self.of and i == self.particle:
            gradient[..., self.axis] = 1.0
        return gradient

    def grad_r(self, positions, momenta, i):
        return self._unit(positions, i, 'r')

    def grad_p(self, positions, momenta, i):
        return self._unit(positions, i, 'p')

    def hess_rp(self, positions, momenta, i):
        return _zeros_matrix(positions)

    def tempered_bound(self):
        return 1.0, 1

    def as_dict(self):
        return {'kind': 'coordinate', 'of': self.of, 'particle': self.particle, 'axis': self.axis}


class Kinetic(PhaseFunction):
    """|p_particle|^2."""
    analytic_gradients = True

    def __init__(self, particle):
        self.particle = int(particle)

    def value(self, positions, momenta):
        return np.sum(np.asarray(momenta, dtype=float)[..., self.particle, :] ** 2, axis=-1)

    def grad_r(self, positions, momenta, i):
        return _zeros_vector(positions)

    def grad_p(self, positions, momenta, i):
        gradient = _zeros_vector(positions)
        if i == self.particle:
            gradient = 2.0 * np.asarray(momenta, dtype=float)[..., i, :]
        return gradient

    def hess_rp(self, positions, momenta, i):
        return _zeros_matrix(positions)

    def tempered_bound(self):
        return 1.0, 2

    def as_dict(self):
        return {'kind': 'kinetic', 'particle': self.particle}


class CosineMode(PhaseFunction):
    """cos(2 pi m . f(r_particle)) on a torus cell."""
    analytic_gradients = True

    def __init__(self, boundary, particle, wavenumber):
        self.particle = int(particle)
        self.wavenumber = np.asarray(wavenumber, dtype=float)
        self.wavevector = 2.0 * np.pi * boundary.inverse @ self.wavenumber

    def value(self, positions, momenta):
        return np.cos(np.asarray(positions, dtype=float)[..., self.particle, :] @ self.wavevector)

    def grad_r(self, positions, momenta, i):
        gradient = _zeros_vector(positions)
        if i == self.particle:
            phase = np.asarray(positions, dtype=float)[..., i, :] @ self.wavevector
            gradient = -np.sin(phase)[..., None] * self.wavevector
        return gradient

    def grad_p(self, positions, momenta, i):
        return _zeros_vector(positions)

    def hess_rp(self, positions, momenta, i):
        return _zeros_matrix(positions)

    def tempered_bound(self):
        return 1.0, 0

    def as_dict(self):
        return {'kind': 'cosine', 'particle': self.particle, 'wavenumber': self.wavenumber.tolist()}


class Product(PhaseFunction):
    def __init__(self, factors):
        factors = list(factors)
        if not factors:
            raise ValueError('A product needs at least one factor.')
        self.factors = factors
        self.periodic = all(factor.periodic for factor in factors)
        self.finite_differences = all(factor.finite_differences for factor in factors)
        self.analytic_gradients = all(factor.analytic_gradients for factor in factors)

    def _split(self):
        if len(self.factors) == 1:
            return self.factors[0], Constant(1.0)
        return self.factors[0], Product(self.factors[1:])

    def value(self, positions, momenta):
        result = self.factors[0].value(positions, momenta)
        for factor in self.factors[1:]:
            result = result * factor.value(positions, momenta)
        return result

    def grad_r(self, positions, momenta, i):
        first, rest = self._split()
        return (first.grad_r(positions, momenta, i) * rest.value(positions, momenta)[..., None] +
                first.value(positions, momenta)[..., None] * rest.grad_r(positions, momenta, i))

    def grad_p(self, positions, momenta, i):
        first, rest = self._split()
        return (first.grad_p(positions, momenta, i) * rest.value(positions, momenta)[..., None] +
                first.value(positions, momenta)[..., None] * rest.grad_p(positions, momenta, i))

    def hess_rp(self, positions, momenta, i):
        first, rest = self._split()
        a, b = first.value(positions, momenta), rest.value(positions, momenta)
        a_r, b_r = first.grad_r(positions, momenta, i), rest.grad_r(positions, momenta, i)
        a_p, b_p = first.grad_p(positions, momenta, i), rest.grad_p(positions, momenta, i)
        return (first.hess_rp(positions, momenta, i) * b[..., None, None] +
                a_p[..., :, None] * b_r[..., None, :] +
                b_p[..., :, None] * a_r[..., None, :] +
                a[..., None, None] * rest.hess_rp(positions, momenta, i))

    def tempered_bound(self):
        bounds = [factor.tempered_bound() for factor in self.factors]
        if any(bound is None for bound in bounds):
            return None
        return float(np.prod([bound[0] for bound in bounds])), sum(bound[1] for bound in bounds)

    def as_dict(self):
        return {'kind': 'product', 'factors': [factor.as_dict() for factor in self.factors]}


class CallableFunction(PhaseFunction):
    """Wraps a plain callable(positions, momenta); gradients by central differences only."""
    periodic = False

    def __init__(self, function, finite_differences=True, periodic=False):
        self.function = function
        self.finite_differences = finite_differences
        self.periodic = periodic

    def value(self, positions, momenta):
        return np.asarray(self.function(positions, momenta), dtype=float)


class TranslatedFunction(PhaseFunction):
    """x -> f(r - shift, p)."""

    def __init__(self, f, shift):
        self.f = f
        self.shift = np.asarray(shift, dtype=float)
        self.analytic_gradients = f.analytic_gradients
        self.finite_differences = f.finite_differences
        self.periodic = f.periodic

    def _origin(self, positions):
        return np.asarray(positions, dtype=float) - self.shift

    def value(self, positions, momenta):
        return self.f(self._origin(positions), momenta)

    def grad_r(self, positions, momenta, i):
        return self.f.grad_r(self._origin(positions), momenta, i)

    def grad_p(self, positions, momenta, i):
        return self.f.grad_p(self._origin(positions), momenta, i)

    def hess_rp(self, positions, momenta, i):
        return self.f.hess_rp(self._origin(positions), momenta, i)

    def as_dict(self):
        return {'kind': 'translated', 'shift': self.shift.tolist(), 'function': self.f.as_dict()}


class BoltzmannFactor(PhaseFunction):
    """exp(-beta H) with analytic gradients, zero on the singular set."""
    analytic_gradients = True

    def __init__(self, model: HamiltonianModel, spec: SystemSpec):
        self.model = model
        self.spec = spec

    def value(self, positions, momenta):
        return boltzmann_factor(self.model, self.spec, PhasePoint(positions, momenta))

    def weighted_gradient(self, positions, momenta, i):
        """(grad_{r_i} H) exp(-beta H) and exp(-beta H), zero on the singular set."""
        weight = self.value(positions, momenta)
        gradient = (self.model.pair_gradient(self.spec, positions, i) +
                    self.model.external_gradient(positions, i))
        with np.errstate(invalid='ignore', over='ignore'):
            weighted = np.where(weight[..., None] > 0, gradient * weight[..., None], 0.0)
        return weighted, weight

    def split_weighted_gradient(self, positions, momenta, i):
        """Pair and external parts of (grad_{r_i} H) exp(-beta H)."""
        weight = self.value(positions, momenta)
        pair = self.model.pair_gradient(self.spec, positions, i)
        external = self.model.external_gradient(positions, i)
        with np.errstate(invalid='ignore', over='ignore'):
            pair = np.where(weight[..., None] > 0, pair * weight[..., None], 0.0)
            external = np.where(weight[..., None] > 0, external * weight[..., None], 0.0)
        return pair, external

    def grad_r(self, positions, momenta, i):
        weighted, _ = self.weighted_gradient(positions, momenta, i)
        return -self.spec.beta * weighted

    def grad_p(self, positions, momenta, i):
        weight = self.value(positions, momenta)
        return -self.spec.beta * np.asarray(momenta, dtype=float)[..., i, :] / self.spec.masses[i] * weight[..., None]

    def hess_rp(self, positions, momenta, i):
        weighted, _ = self.weighted_gradient(positions, momenta, i)
        velocity = np.asarray(momenta, dtype=float)[..., i, :] / self.spec.masses[i]
        return self.spec.beta ** 2 * velocity[..., :, None] * weighted[..., None, :]

    def as_dict(self):
        return {'kind': 'boltzmann'}


class PulledBackFunction(PhaseFunction):
    """x -> phi(lift(x))."""

    def __init__(self, phi, lifted):
        self.phi = phi
        self.lifted = lifted
        self.periodic = getattr(phi, 'periodic', False)

    def value(self, positions, momenta):
        if self.lifted.is_identity:
            return self.phi(positions, momenta)
        return self.phi(*self.lifted.apply(positions, momenta))


class PulledBackDensity(PhaseFunction):
    """x -> f(lift(x)) |det D lift(x)|."""

    def __init__(self, f, lifted):
        self.f = f
        self.lifted = lifted
        self.periodic = getattr(f, 'periodic', False)

    def value(self, positions, momenta):
        if self.lifted.is_identity:
            return self.f(positions, momenta)
        determinant = np.abs(self.lifted.block_determinant(positions))
        return self.f(*self.lifted.apply(positions, momenta)) * determinant


class ObservableDispatcher:
    def __init__(self, spec: SystemSpec):
        self.spec = spec

    def dispatch(self, definition: dict) -> PhaseFunction:
        arguments = dict(definition)
        kind = arguments.pop('kind')
        if kind == 'constant':
            return Constant(**arguments)
        if kind == 'coordinate':
            observable = Coordinate(**arguments)
            self.spec.check_particle(observable.particle)
            if not 0 <= observable.axis < self.spec.dimension:
                raise ValueError('Coordinate axis {} outside 0..{}.'.format(observable.axis, self.spec.dimension - 1))
            return observable
        if kind == 'kinetic':
            observable = Kinetic(**arguments)
            self.spec.check_particle(observable.particle)
            return observable
        if kind == 'cosine':
            return CosineMode(self.spec.boundary, **arguments)
        if kind == 'product':
            return Product([self.dispatch(factor) for factor in arguments.pop('factors')])
        raise ValueError('Unknown observable kind "{}". Available: {}'.format(
            kind, ['constant', 'coordinate', 'kinetic', 'cosine', 'product'],
        ))
