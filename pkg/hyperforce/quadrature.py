"""
Deterministic phase-space quadrature.

Momenta are integrated with tensor Gauss-Hermite rules in p = sqrt(2 m / beta) x, positions
with adaptive tensor Gauss-Legendre panels. Euclidean positions live in a truncation box,
torus positions in fractional coordinates of the cell.
"""
import logging
import math

from typing import NamedTuple

import numpy as np

from scipy.special import erfc

from hyperforce import settings
from hyperforce.exceptions import IntegrationDomainError

logger = logging.getLogger(__name__)

_CHUNK_POINTS = 2 ** 18


class QuadratureScheme(NamedTuple):
    momentum_order: int = settings.DEFAULT_MOMENTUM_ORDER
    position_order: int = settings.DEFAULT_POSITION_ORDER
    max_depth: int = settings.DEFAULT_MAX_DEPTH
    max_panels: int = settings.DEFAULT_MAX_PANELS
    tol_abs: float = settings.DEFAULT_QUADRATURE_TOL_ABS
    tol_rel: float = settings.DEFAULT_QUADRATURE_TOL_REL
    tail_threshold: float = settings.DEFAULT_TAIL_THRESHOLD

    def as_dict(self):
        return dict(self._asdict())


class IntegrationResult(NamedTuple):
    value: object
    error: float
    flagged: bool = False
    evaluations: int = 0

    def scaled(self, factor):
        value = factor * np.asarray(self.value, dtype=float)
        return IntegrationResult(float(value) if value.ndim == 0 else value, abs(factor) * self.error,
                                 self.flagged, self.evaluations)

    def __add__(self, other):
        return combine_results([(1.0, self), (1.0, other)])

    def __sub__(self, other):
        return combine_results([(1.0, self), (-1.0, other)])

    def as_dict(self):
        return {
            'value': np.asarray(self.value).tolist(),
            'error': self.error,
            'flagged': self.flagged,
            'evaluations': self.evaluations,
        }


def combine_results(terms):
    """Linear combination sum c_k I_k; errors add as sum |c_k| err_k."""
    terms = list(terms)
    if not terms:
        return IntegrationResult(0.0, 0.0)
    value = pairwise_sum([coefficient * np.asarray(result.value, dtype=float) for coefficient, result in terms])
    return IntegrationResult(
        value,
        float(sum(abs(coefficient) * result.error for coefficient, result in terms)),
        any(result.flagged for _, result in terms),
        sum(result.evaluations for _, result in terms),
    )


def pairwise_sum(values):
    values = list(values)
    if not values:
        return 0.0
    if len(values) == 1:
        return values[0]
    middle = len(values) // 2
    return pairwise_sum(values[:middle]) + pairwise_sum(values[middle:])


def truncation_box(model, spec, scheme: QuadratureScheme = QuadratureScheme()):
    """
    Per-axis position box (lower, upper) for Euclidean models, None on the torus.

    The radius around the harmonic confinement center is sqrt(2 T / (beta k)) with T raised
    from `tail_threshold` until the per-axis Gaussian tail mass erfc(sqrt(T)) is below tol_abs / 10.
    """
    if spec.periodic:
        return None
    confinement = model.external.confinement()
    if confinement is None:
        raise IntegrationDomainError(
            'Euclidean integration needs a confining external potential; {!r} has none.'.format(model.external),
        )
    center, stiffness = confinement
    center = np.zeros(spec.dimension) if center is None else np.broadcast_to(center, (spec.dimension,))
    threshold = scheme.tail_threshold
    axes = spec.particles * spec.dimension
    while axes * erfc(math.sqrt(threshold)) >= scheme.tol_abs / 10.0:
        threshold += 10.0
    radius = math.sqrt(2.0 * threshold / (spec.beta * stiffness))
    logger.debug('Truncation radius {:.4g} (T = {}) around {}'.format(radius, threshold, center))
    return center - radius, center + radius


class _Panel(NamedTuple):
    lower: np.ndarray
    upper: np.ndarray
    depths: tuple

    @property
    def volume(self):
        return float(np.prod(self.upper - self.lower))

    def split(self, axis):
        middle = 0.5 * (self.lower[axis] + self.upper[axis])
        left_upper = self.upper.copy()
        left_upper[axis] = middle
        right_lower = self.lower.copy()
        right_lower[axis] = middle
        depths = tuple(depth + (1 if k == axis else 0) for k, depth in enumerate(self.depths))
        return _Panel(self.lower, left_upper, depths), _Panel(right_lower, self.upper, depths)


def hermite_rule(order, scales):
    """Tensor Gauss-Hermite nodes and weights for int g(p) dp, p_k = scales_k x_k."""
    scales = np.asarray(scales, dtype=float)
    if scales.size == 0:
        return np.zeros((1, 0)), np.ones(1)
    knots, weights = np.polynomial.hermite.hermgauss(order)
    weights = weights * np.exp(knots ** 2)
    grids = np.meshgrid(*[knots] * scales.size, indexing='ij')
    nodes = np.stack([grid.ravel() for grid in grids], axis=-1) * scales
    weight_grids = np.meshgrid(*[weights] * scales.size, indexing='ij')
    tensor_weights = np.prod(np.stack([grid.ravel() for grid in weight_grids], axis=-1), axis=-1)
    return nodes, tensor_weights * np.prod(scales)


def legendre_reference(order, dimension):
    """Tensor Gauss-Legendre nodes and weights on [-1, 1]^dimension."""
    if dimension == 0:
        return np.zeros((1, 0)), np.ones(1)
    knots, weights = np.polynomial.legendre.leggauss(order)
    grids = np.meshgrid(*[knots] * dimension, indexing='ij')
    nodes = np.stack([grid.ravel() for grid in grids], axis=-1)
    weight_grids = np.meshgrid(*[weights] * dimension, indexing='ij')
    return nodes, np.prod(np.stack([grid.ravel() for grid in weight_grids], axis=-1), axis=-1)


class _PhaseIntegrator:
    def __init__(self, g, spec, scheme, base_positions, base_momenta, free_positions, free_momenta, box):
        self.g = g
        self.spec = spec
        self.scheme = scheme
        self.base_positions = base_positions
        self.base_momenta = base_momenta
        self.free_positions = free_positions
        self.free_momenta = free_momenta
        d = spec.dimension
        self.position_axes = d * len(free_positions)
        self.momentum_scales = np.repeat(
            [math.sqrt(2.0 * spec.masses[j] / spec.beta) for j in free_momenta], d,
        )
        if spec.periodic:
            self.root = _Panel(np.zeros(self.position_axes), np.ones(self.position_axes), (0,) * self.position_axes)
            self.volume_factor = spec.boundary.volume ** len(free_positions)
        else:
            lower, upper = box if free_positions else (np.zeros(d), np.zeros(d))
            self.root = _Panel(np.tile(lower, len(free_positions)), np.tile(upper, len(free_positions)),
                               (0,) * self.position_axes)
            self.volume_factor = 1.0
        self.reference_nodes, self.reference_weights = legendre_reference(scheme.position_order, self.position_axes)
        self.evaluations = 0
        self.panels = 1
        self.limit_hit = False
        self.nonfinite = 0

    def _cartesian(self, nodes):
        particles = nodes.reshape(nodes.shape[0], len(self.free_positions), self.spec.dimension)
        if self.spec.periodic:
            return self.spec.boundary.to_cartesian(particles)
        return particles

    def node_values(self, nodes, rule):
        """Momentum-integrated integrand at each position node."""
        momentum_nodes, momentum_weights = rule
        q = momentum_nodes.shape[0]
        n, d = self.spec.particles, self.spec.dimension
        momenta_block = momentum_nodes.reshape(1, q, len(self.free_momenta), d)
        chunk = max(1, _CHUNK_POINTS // q)
        results = []
        for start in range(0, nodes.shape[0], chunk):
            part = nodes[start:start + chunk]
            positions = np.array(np.broadcast_to(self.base_positions, (part.shape[0], q, n, d)))
            momenta = np.array(np.broadcast_to(self.base_momenta, (part.shape[0], q, n, d)))
            if self.free_positions:
                positions[:, :, self.free_positions, :] = self._cartesian(part)[:, None, :, :]
            if self.free_momenta:
                momenta[:, :, self.free_momenta, :] = momenta_block
            values = np.asarray(self.g(positions, momenta), dtype=float)
            finite = np.isfinite(values)
            if not np.all(finite):
                self.nonfinite += int(np.size(values) - np.count_nonzero(finite))
                values = np.where(finite, values, 0.0)
            results.append(np.tensordot(momentum_weights, values, axes=([0], [1])))
            self.evaluations += part.shape[0] * q
        return np.concatenate(results, axis=0)

    def estimate(self, panel, rule):
        half = 0.5 * (panel.upper - panel.lower)
        nodes = panel.lower + (self.reference_nodes + 1.0) * half
        weights = self.reference_weights * np.prod(half)
        values = self.node_values(nodes, rule)
        return np.tensordot(weights, values, axes=1) * self.volume_factor, values

    def split_axis(self, values, eligible):
        order = self.scheme.position_order
        grid = values.reshape((order,) * self.position_axes + values.shape[1:])
        variations = [float(np.max(np.ptp(grid, axis=axis))) for axis in eligible]
        return eligible[int(np.argmax(variations))]

    def refine(self, panel, estimate, values, rule, fallback_error):
        eligible = [axis for axis in range(self.position_axes) if panel.depths[axis] < self.scheme.max_depth]
        if not eligible or self.panels >= self.scheme.max_panels:
            self.limit_hit = True
            return [estimate], fallback_error
        axis = self.split_axis(values, eligible)
        children = panel.split(axis)
        self.panels += 1
        results = [self.estimate(child, rule) for child in children]
        delta = float(np.max(np.abs(estimate - (results[0][0] + results[1][0]))))
        if delta <= self.tolerance * panel.volume / self.root.volume:
            return [results[0][0], results[1][0]], delta
        leaves, error = [], 0.0
        for child, (child_estimate, child_values) in zip(children, results):
            child_leaves, child_error = self.refine(child, child_estimate, child_values, rule, 0.5 * delta)
            leaves += child_leaves
            error += child_error
        return leaves, error

    def run(self):
        rule = hermite_rule(self.scheme.momentum_order, self.momentum_scales)
        root_estimate, root_values = self.estimate(self.root, rule)
        self.tolerance = max(self.scheme.tol_abs, self.scheme.tol_rel * float(np.max(np.abs(root_estimate))))
        if self.position_axes:
            leaves, position_error = self.refine(self.root, root_estimate, root_values, rule, 0.0)
        else:
            leaves, position_error = [root_estimate], 0.0
        hermite_error = 0.0
        if self.momentum_scales.size:
            finer = hermite_rule(self.scheme.momentum_order + 1, self.momentum_scales)
            finer_estimate, _ = self.estimate(self.root, finer)
            hermite_error = float(np.max(np.abs(finer_estimate - root_estimate)))
        value = pairwise_sum(leaves)
        error = max(position_error, hermite_error)
        flagged = self.limit_hit or error > max(self.scheme.tol_abs, self.scheme.tol_rel * float(np.max(np.abs(value))))
        if self.nonfinite:
            logger.warning('Integrand returned {} non-finite values; they were counted as zero.'.format(self.nonfinite))
        if flagged:
            logger.warning('Integration did not meet tolerance: error {:.3g} over {} panels{}'.format(
                error, self.panels, ' (refinement limit reached)' if self.limit_hit else '',
            ))
        value = float(value) if np.ndim(value) == 0 else np.asarray(value)
        return IntegrationResult(value, error, bool(flagged), self.evaluations)


def integrate_phase(g, spec, scheme: QuadratureScheme = None, *, base, free_positions=(), free_momenta=(), box=None):
    """
    Integrate g(positions, momenta) over the positions of `free_positions` and the momenta of
    `free_momenta`; every other coordinate is taken from `base` = (positions, momenta).

    g receives arrays of shape (K, Q, N, d) and returns (K, Q) or (K, Q, c) for vector integrands.
    """
    scheme = scheme or QuadratureScheme()
    base_positions = np.asarray(base[0], dtype=float).reshape(spec.particles, spec.dimension)
    base_momenta = np.asarray(base[1], dtype=float).reshape(spec.particles, spec.dimension)
    free_positions = sorted({spec.check_particle(j) for j in free_positions})
    free_momenta = sorted({spec.check_particle(j) for j in free_momenta})
    if free_positions and not spec.periodic and box is None:
        raise IntegrationDomainError('Euclidean position integration needs a truncation box.')
    integrator = _PhaseIntegrator(
        g, spec, scheme, base_positions, base_momenta, free_positions, free_momenta, box,
    )
    result = integrator.run()
    logger.debug('Integrated over positions {} and momenta {}: {} ({} evaluations)'.format(
        free_positions, free_momenta, result.value, result.evaluations,
    ))
    return result
