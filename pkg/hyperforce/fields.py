"""
Smooth vector fields on R^d with analytic Jacobians.

Every field maps positions of shape (..., d) to values of shape (..., d) and
Jacobians of shape (..., d, d) with J[..., a, b] = d eps_a / d r_b.
"""
import logging
import math

import numpy as np

from hyperforce.exceptions import BoundaryError

logger = logging.getLogger(__name__)


def bump_profile(s, order=0):
    """
    h(s) = exp(1 - 1/(1 - s)) for s < 1, else 0, and its derivatives up to order 3.
    """
    s = np.asarray(s, dtype=float)
    inside = s < 1.0
    with np.errstate(divide='ignore', over='ignore', invalid='ignore'):
        q = np.where(inside, 1.0 / (1.0 - s), 0.0)
        h = np.where(inside, np.exp(1.0 - q), 0.0)
        if order == 0:
            return h
        if order == 1:
            return -h * q ** 2
        if order == 2:
            return h * (2.0 * s - 1.0) * q ** 4
        if order == 3:
            return h * (-(2.0 * s - 1.0) * q ** 6 + 2.0 * q ** 4 + 4.0 * (2.0 * s - 1.0) * q ** 5)
    raise ValueError('Bump profile derivatives are available up to order 3, got {}.'.format(order))


class SmoothVectorField:
    kind = None
    is_zero = False
    periodic = False

    def __init__(self, dimension):
        self.dimension = int(dimension)

    def value(self, r):
        raise NotImplementedError

    def jacobian(self, r):
        raise NotImplementedError

    def support_box(self):
        """Axis-aligned (lower, upper) box containing the support, or None when unbounded."""
        return None

    def amplitude_bound(self):
        raise NotImplementedError

    def __call__(self, r):
        return self.value(r)

    def as_dict(self):
        return {'kind': self.kind}


class ZeroField(SmoothVectorField):
    kind = 'zero'
    is_zero = True

    def value(self, r):
        return np.zeros(np.shape(r))

    def jacobian(self, r):
        shape = np.shape(r)
        return np.zeros(shape + shape[-1:])

    def support_box(self):
        return np.zeros(self.dimension), np.zeros(self.dimension)

    def amplitude_bound(self):
        return 0.0


class BumpField(SmoothVectorField):
    kind = 'bump'

    def __init__(self, center, radius, amplitude):
        center = np.atleast_1d(np.asarray(center, dtype=float))
        amplitude = np.atleast_1d(np.asarray(amplitude, dtype=float))
        if not radius > 0:
            raise ValueError('Bump radius must be positive, got {}.'.format(radius))
        if center.shape != amplitude.shape or center.ndim != 1:
            raise ValueError('Bump center {} and amplitude {} must be d-vectors.'.format(center, amplitude))
        super().__init__(center.shape[0])
        self.center = center
        self.radius = float(radius)
        self.amplitude = amplitude
        self.is_zero = not np.any(amplitude)

    def scaled_distance(self, r):
        return np.sum((np.asarray(r, dtype=float) - self.center) ** 2, axis=-1) / self.radius ** 2

    def value(self, r):
        return bump_profile(self.scaled_distance(r))[..., None] * self.amplitude

    def jacobian(self, r):
        r = np.asarray(r, dtype=float)
        # grad h(s(r)) = h'(s) * 2 (r - c) / R^2
        gradient = bump_profile(self.scaled_distance(r), 1)[..., None] * 2.0 * (r - self.center) / self.radius ** 2
        return self.amplitude[:, None] * gradient[..., None, :]

    def support_box(self):
        return self.center - self.radius, self.center + self.radius

    def amplitude_bound(self):
        return float(np.linalg.norm(self.amplitude))

    def as_dict(self):
        return {
            'kind': self.kind,
            'center': self.center.tolist(),
            'radius': self.radius,
            'amplitude': self.amplitude.tolist(),
        }


class FourierField(SmoothVectorField):
    """
    Gamma-periodic field eps(r) = sum_m a_m cos(2 pi k_m . f) + b_m sin(2 pi k_m . f),
    f being the fractional coordinates of r in the torus cell.
    """
    kind = 'fourier'
    periodic = True

    def __init__(self, boundary, modes):
        if not boundary.periodic:
            raise BoundaryError('Fourier fields need a torus boundary.')
        super().__init__(boundary.dimension)
        self.boundary = boundary
        wavenumbers, cosines, sines = [], [], []
        for mode in modes:
            wavenumber = np.asarray(mode['wavenumber'], dtype=float)
            if wavenumber.shape != (self.dimension,) or np.any(wavenumber != np.round(wavenumber)):
                raise ValueError('Fourier wavenumber must be an integer d-vector, got {}.'.format(mode['wavenumber']))
            wavenumbers.append(wavenumber)
            cosines.append(np.asarray(mode.get('cos', np.zeros(self.dimension)), dtype=float))
            sines.append(np.asarray(mode.get('sin', np.zeros(self.dimension)), dtype=float))
        self.modes = [dict(mode) for mode in modes]
        self.wavenumbers = np.array(wavenumbers).reshape(-1, self.dimension)
        self.cosines = np.array(cosines).reshape(-1, self.dimension)
        self.sines = np.array(sines).reshape(-1, self.dimension)
        # phase_m(r) = r . wavevector_m
        self.wavevectors = 2.0 * math.pi * self.wavenumbers @ boundary.inverse.T
        self.is_zero = not (np.any(self.cosines) or np.any(self.sines))

    def _phases(self, r):
        return np.asarray(r, dtype=float) @ self.wavevectors.T

    def value(self, r):
        phases = self._phases(r)
        return np.cos(phases) @ self.cosines + np.sin(phases) @ self.sines

    def jacobian(self, r):
        phases = self._phases(r)
        # d/dr_b of cos(phase_m) = -sin(phase_m) wavevector_m[b]
        weights_cos = -np.sin(phases)
        weights_sin = np.cos(phases)
        jacobian = np.einsum('...m,ma,mb->...ab', weights_cos, self.cosines, self.wavevectors)
        jacobian += np.einsum('...m,ma,mb->...ab', weights_sin, self.sines, self.wavevectors)
        return jacobian

    def amplitude_bound(self):
        return float(np.sum(np.linalg.norm(self.cosines, axis=-1) + np.linalg.norm(self.sines, axis=-1)))

    def support_box(self):
        corners = np.array(np.meshgrid(*[[0.0, 1.0]] * self.dimension, indexing='ij')).reshape(self.dimension, -1).T
        cartesian = self.boundary.to_cartesian(corners)
        return cartesian.min(axis=0), cartesian.max(axis=0)

    def as_dict(self):
        return {'kind': self.kind, 'modes': [
            {key: np.asarray(value).tolist() for key, value in mode.items()} for mode in self.modes
        ]}


class SumField(SmoothVectorField):
    kind = 'sum'

    def __init__(self, fields):
        fields = list(fields)
        if not fields:
            raise ValueError('A sum field needs at least one term.')
        super().__init__(fields[0].dimension)
        self.fields = fields
        self.is_zero = all(field.is_zero for field in fields)
        self.periodic = all(field.periodic for field in fields)

    def value(self, r):
        return sum(field.value(r) for field in self.fields)

    def jacobian(self, r):
        return sum(field.jacobian(r) for field in self.fields)

    def support_box(self):
        boxes = [field.support_box() for field in self.fields]
        if any(box is None for box in boxes):
            return None
        return np.min([box[0] for box in boxes], axis=0), np.max([box[1] for box in boxes], axis=0)

    def amplitude_bound(self):
        return sum(field.amplitude_bound() for field in self.fields)

    def as_dict(self):
        return {'kind': self.kind, 'fields': [field.as_dict() for field in self.fields]}


class ScaledField(SmoothVectorField):
    kind = 'scaled'

    def __init__(self, field, factor):
        super().__init__(field.dimension)
        self.field = field
        self.factor = float(factor)
        self.is_zero = field.is_zero or self.factor == 0.0
        self.periodic = field.periodic

    def value(self, r):
        return self.factor * self.field.value(r)

    def jacobian(self, r):
        return self.factor * self.field.jacobian(r)

    def support_box(self):
        return self.field.support_box()

    def amplitude_bound(self):
        return abs(self.factor) * self.field.amplitude_bound()

    def as_dict(self):
        return {'kind': self.kind, 'factor': self.factor, 'field': self.field.as_dict()}


class ComposedField(SmoothVectorField):
    """r -> eps1(r) + eps2(r + eps1(r)), the field of (Id + eps2) o (Id + eps1) minus the identity."""
    kind = 'composed'

    def __init__(self, first, second):
        if first.dimension != second.dimension:
            raise ValueError('Cannot compose fields of dimensions {} and {}.'.format(first.dimension, second.dimension))
        super().__init__(first.dimension)
        self.first = first
        self.second = second
        self.is_zero = first.is_zero and second.is_zero
        self.periodic = first.periodic and second.periodic

    def value(self, r):
        inner = self.first.value(r)
        return inner + self.second.value(np.asarray(r, dtype=float) + inner)

    def jacobian(self, r):
        r = np.asarray(r, dtype=float)
        inner_jacobian = self.first.jacobian(r)
        outer_jacobian = self.second.jacobian(r + self.first.value(r))
        identity = np.eye(self.dimension)
        return inner_jacobian + outer_jacobian @ (identity + inner_jacobian)

    def support_box(self):
        first, second = self.first.support_box(), self.second.support_box()
        if first is None or second is None:
            return None
        # points moved into the second support come from at most amplitude_bound away
        reach = self.first.amplitude_bound()
        return np.minimum(first[0], second[0] - reach), np.maximum(first[1], second[1] + reach)

    def amplitude_bound(self):
        return self.first.amplitude_bound() + self.second.amplitude_bound()

    def as_dict(self):
        return {'kind': self.kind, 'first': self.first.as_dict(), 'second': self.second.as_dict()}


class InverseField(SmoothVectorField):
    """eps_{-1}(r) = -eps(x) with x + eps(x) = r, so that Id + eps_{-1} inverts Id + eps."""
    kind = 'inverse'

    def __init__(self, field, tol, max_iterations):
        super().__init__(field.dimension)
        self.field = field
        self.tol = tol
        self.max_iterations = max_iterations
        self.is_zero = field.is_zero
        self.periodic = field.periodic

    def preimage(self, r):
        from hyperforce.diffeo import fixed_point_preimage
        return fixed_point_preimage(self.field, r, self.tol, self.max_iterations)

    def value(self, r):
        return -self.field.value(self.preimage(r))

    def jacobian(self, r):
        x = self.preimage(r)
        jacobian = self.field.jacobian(x)
        identity = np.eye(self.dimension)
        # d/dr of -eps(x(r)) = -J(x) (I + J(x))^{-1}
        return -np.swapaxes(np.linalg.solve(np.swapaxes(identity + jacobian, -1, -2),
                                            np.swapaxes(jacobian, -1, -2)), -1, -2)

    def support_box(self):
        box = self.field.support_box()
        if box is None:
            return None
        reach = self.field.amplitude_bound()
        return box[0] - reach, box[1] + reach

    def amplitude_bound(self):
        return self.field.amplitude_bound()

    def as_dict(self):
        return {'kind': self.kind, 'field': self.field.as_dict()}


class FieldDispatcher:
    fields = {
        'zero': lambda boundary, dimension, **arguments: ZeroField(dimension, **arguments),
        'bump': lambda boundary, dimension, **arguments: BumpField(**arguments),
        'fourier': lambda boundary, dimension, **arguments: FourierField(boundary, **arguments),
    }

    def __init__(self, boundary, dimension):
        self.boundary = boundary
        self.dimension = dimension

    def dispatch(self, definition: dict) -> SmoothVectorField:
        arguments = dict(definition)
        kind = arguments.pop('kind')
        if kind == 'sum':
            return SumField([self.dispatch(term) for term in arguments.pop('terms')])
        try:
            factory = self.fields[kind]
        except KeyError:
            raise ValueError('Unknown vector field kind "{}". Available: {}'.format(
                kind, sorted(self.fields) + ['sum'],
            ))
        logger.debug('Creating vector field of kind "{}"...'.format(kind))
        return factory(self.boundary, self.dimension, **arguments)
