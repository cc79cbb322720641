import logging

from typing import NamedTuple

import numpy as np

from cached_property import cached_property

from hyperforce import settings
from hyperforce.exceptions import BoundaryError
from hyperforce.exceptions import InadmissibleFieldError
from hyperforce.exceptions import InversionError
from hyperforce.fields import ComposedField
from hyperforce.fields import InverseField
from hyperforce.fields import ScaledField
from hyperforce.fields import SmoothVectorField
from hyperforce.system import PhasePoint
from hyperforce.system import SystemSpec

logger = logging.getLogger(__name__)


def sampled_jacobian_norm(field: SmoothVectorField, points_per_axis=None):
    """Largest spectral norm of the Jacobian over a tensor grid covering the support box."""
    if field.is_zero:
        return 0.0
    box = field.support_box()
    if box is None:
        raise InadmissibleFieldError('Field {} has no bounded support box to sample.'.format(field.kind))
    if points_per_axis is None:
        points_per_axis = (
            settings.DEFAULT_ADMISSIBILITY_GRID if field.dimension <= 3
            else settings.DEFAULT_ADMISSIBILITY_GRID_HIGH_DIMENSION
        )
    axes = [np.linspace(lower, upper, points_per_axis) for lower, upper in zip(*box)]
    grid = np.stack(np.meshgrid(*axes, indexing='ij'), axis=-1).reshape(-1, field.dimension)
    norms = np.linalg.norm(field.jacobian(grid), ord=2, axis=(-2, -1))
    return float(np.max(norms))


class AdmissibleDiffeo:
    """A vector field eps with sup |eps'| < 1, so that Id + eps is a diffeomorphism."""

    def __init__(self, field: SmoothVectorField, sup_jacobian_norm=None):
        self.field = field
        if sup_jacobian_norm is None:
            sup_jacobian_norm = settings.DEFAULT_ADMISSIBILITY_SAFETY * sampled_jacobian_norm(field)
        self.sup_jacobian_norm = float(sup_jacobian_norm)
        if not self.sup_jacobian_norm < 1.0:
            raise InadmissibleFieldError(
                'Field {} has sup |eps\'| ~ {:.6g} >= 1 and does not define a diffeomorphism.'.format(
                    field.kind, self.sup_jacobian_norm,
                ),
            )

    @property
    def dimension(self):
        return self.field.dimension

    @property
    def is_zero(self):
        return self.field.is_zero

    def value(self, r):
        return self.field.value(r)

    def jacobian(self, r):
        return self.field.jacobian(r)

    def apply(self, r):
        r = np.asarray(r, dtype=float)
        return r + self.field.value(r)

    def scaled(self, factor):
        return AdmissibleDiffeo(ScaledField(self.field, factor), abs(factor) * self.sup_jacobian_norm)

    def __repr__(self):
        return 'AdmissibleDiffeo({}, sup={:.4g})'.format(self.field.as_dict(), self.sup_jacobian_norm)


def fixed_point_preimage(field: SmoothVectorField, r, tol=settings.DEFAULT_INVERSION_TOL,
                         max_iterations=settings.DEFAULT_INVERSION_MAX_ITERATIONS):
    r = np.asarray(r, dtype=float)
    x = r.copy()
    for iteration in range(max_iterations):
        updated = r - field.value(x)
        residual = np.max(np.abs(updated - x), initial=0.0)
        x = updated
        if residual <= tol:
            return x
    raise InversionError(
        'Fixed-point inversion did not reach tol {} in {} iterations (residual {:.3g}).'.format(
            tol, max_iterations, residual,
        ),
    )


def invert_diffeo(e: AdmissibleDiffeo, r, tol=settings.DEFAULT_INVERSION_TOL,
                  max_iterations=settings.DEFAULT_INVERSION_MAX_ITERATIONS):
    """x with x + eps(x) = r, by the contraction x <- r - eps(x)."""
    return fixed_point_preimage(e.field, r, tol, max_iterations)


def inverse_field(e: AdmissibleDiffeo, tol=settings.DEFAULT_INVERSION_TOL,
                  max_iterations=settings.DEFAULT_INVERSION_MAX_ITERATIONS) -> AdmissibleDiffeo:
    field = InverseField(e.field, tol, max_iterations)
    # (I + J)^{-1} - I has norm at most L / (1 - L)
    bound = e.sup_jacobian_norm / (1.0 - e.sup_jacobian_norm)
    if bound < 1.0:
        return AdmissibleDiffeo(field, bound)
    return AdmissibleDiffeo(field)


def compose_fields(e1: AdmissibleDiffeo, e2: AdmissibleDiffeo) -> SmoothVectorField:
    """The field of (Id + eps2) o (Id + eps1): r -> eps1(r) + eps2(r + eps1(r))."""
    composed = ComposedField(e1.field, e2.field)
    try:
        AdmissibleDiffeo(composed)
    except InadmissibleFieldError as error:
        logger.warning('Composite field is not admissible: {}'.format(error))
    return composed


class LiftedMap:
    """
    Lift of Id + eps to phase space at level n: particles 0..n-1 are fixed, the others move by
    r -> r + eps(r), p -> (I + grad eps(r))^{-1} p.
    """

    def __init__(self, diffeo: AdmissibleDiffeo, level: int, spec: SystemSpec):
        if diffeo.dimension != spec.dimension:
            raise ValueError('Field dimension {} does not match d = {}.'.format(diffeo.dimension, spec.dimension))
        self.diffeo = diffeo
        self.level = spec.check_level(level)
        self.spec = spec

    @cached_property
    def identity(self):
        return np.eye(self.spec.dimension)

    @property
    def is_identity(self):
        return self.diffeo.is_zero

    def apply(self, positions, momenta):
        positions, momenta = self.spec.check_phase_arrays(positions, momenta)
        if self.diffeo.is_zero:
            return positions, momenta
        n = self.level
        moving = positions[..., n:, :]
        matrix = self.identity + self.diffeo.jacobian(moving)
        lifted_positions = positions.copy()
        lifted_momenta = momenta.copy()
        lifted_positions[..., n:, :] = moving + self.diffeo.value(moving)
        lifted_momenta[..., n:, :] = np.linalg.solve(matrix, momenta[..., n:, :, None])[..., 0]
        return lifted_positions, lifted_momenta

    def block_determinant(self, positions):
        """det of the lift Jacobian from its block-triangular structure, det(A) det(A^{-1}) per particle."""
        positions = np.asarray(positions, dtype=float)
        if self.diffeo.is_zero:
            return np.ones(positions.shape[:-2])
        matrix = self.identity + self.diffeo.jacobian(positions[..., self.level:, :])
        determinants = np.linalg.det(matrix) * np.linalg.det(np.linalg.inv(matrix))
        return np.prod(determinants, axis=-1)

    def compose(self, other):
        """self o other: apply `other` first."""
        return ComposedLift(self, other)


class ComposedLift:
    def __init__(self, outer, inner):
        if outer.level != inner.level or outer.spec is not inner.spec:
            raise ValueError('Composed lifts must share level and system.')
        self.outer = outer
        self.inner = inner
        self.level = inner.level
        self.spec = inner.spec

    @property
    def is_identity(self):
        return self.outer.is_identity and self.inner.is_identity

    def apply(self, positions, momenta):
        return self.outer.apply(*self.inner.apply(positions, momenta))

    def block_determinant(self, positions):
        positions = np.asarray(positions, dtype=float)
        inner_positions, _ = self.inner.apply(positions, np.zeros_like(positions))
        return self.inner.block_determinant(positions) * self.outer.block_determinant(inner_positions)

    def compose(self, other):
        return ComposedLift(self, other)


def lift_apply(lifted: LiftedMap, x: PhasePoint) -> PhasePoint:
    return PhasePoint(*lifted.apply(*x))


def lift_jacobian_det(lifted: LiftedMap, x: PhasePoint, step=settings.DEFAULT_GRADIENT_CHECK_STEP):
    """Determinant of the full 2dN x 2dN Jacobian of the lift, by central differences."""
    positions, momenta = lifted.spec.check_phase_arrays(*x)
    if lifted.is_identity:
        return 1.0
    shape = positions.shape
    flat = np.concatenate([positions.ravel(), momenta.ravel()])
    size = flat.size // 2

    def lifted_flat(z):
        lifted_positions, lifted_momenta = lifted.apply(z[:size].reshape(shape), z[size:].reshape(shape))
        return np.concatenate([lifted_positions.ravel(), lifted_momenta.ravel()])

    jacobian = np.empty((flat.size, flat.size))
    for k in range(flat.size):
        h = step * max(1.0, abs(flat[k]))
        shift = np.zeros_like(flat)
        shift[k] = h
        jacobian[:, k] = (lifted_flat(flat + shift) - lifted_flat(flat - shift)) / (2.0 * h)
    return float(np.linalg.det(jacobian))


def pullback_function(phi, lifted: LiftedMap):
    from hyperforce.observables import PulledBackFunction
    return PulledBackFunction(phi, lifted)


def pullback_density(f, lifted: LiftedMap):
    from hyperforce.observables import PulledBackDensity
    return PulledBackDensity(f, lifted)


class EquivarianceReport(NamedTuple):
    max_deviation: float
    samples: int

    def as_dict(self):
        return {'max_deviation': self.max_deviation, 'samples': self.samples}


def gamma_equivariance_check(lifted: LiftedMap, samples=100, shifts=None, seed=settings.DEFAULT_SEED,
                             positions=None):
    """
    Max deviation of lift(r + gamma, p) - lift(r, p) - (gamma, 0) over random points and lattice shifts.
    """
    spec = lifted.spec
    boundary = spec.boundary
    if not boundary.periodic:
        raise BoundaryError('Lattice equivariance is defined on the torus only.')
    generator = np.random.default_rng(seed)
    shape = (samples, spec.particles, spec.dimension)
    if positions is None:
        positions = boundary.to_cartesian(generator.uniform(size=shape))
    else:
        positions = np.broadcast_to(np.asarray(positions, dtype=float), shape)
    momenta = generator.standard_normal(shape) * np.sqrt(spec.masses / spec.beta)[:, None]
    if shifts is None:
        coefficients = generator.integers(-2, 3, size=shape)
        shifts = boundary.lattice_vector(coefficients)
    else:
        shifts = np.broadcast_to(np.asarray(shifts, dtype=float), shape)
    base_positions, base_momenta = lifted.apply(positions, momenta)
    shifted_positions, shifted_momenta = lifted.apply(positions + shifts, momenta)
    deviation = max(
        float(np.max(np.abs(shifted_positions - base_positions - shifts))),
        float(np.max(np.abs(shifted_momenta - base_momenta))),
    )
    logger.debug('Lattice equivariance deviation {:.3g} over {} samples'.format(deviation, samples))
    return EquivarianceReport(deviation, samples)
