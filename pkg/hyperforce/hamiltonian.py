import itertools
import logging

from typing import NamedTuple

import numpy as np

from hyperforce import settings
from hyperforce.exceptions import BoundaryError
from hyperforce.exceptions import SingularityError
from hyperforce.potentials import ExternalPotential
from hyperforce.potentials import PairPotential
from hyperforce.potentials import ZeroExternal
from hyperforce.potentials import ZeroPair
from hyperforce.system import PhasePoint
from hyperforce.system import SystemSpec

logger = logging.getLogger(__name__)


class HamiltonianModel:
    """H = sum |p_k|^2 / 2 m_k + sum_{i<j} u(r_i, r_j) + sum_i u_ext(r_i)."""

    def __init__(self, pair: PairPotential = None, external: ExternalPotential = None):
        self.pair = pair or ZeroPair()
        self.external = external or ZeroExternal()

    @property
    def is_ideal(self):
        return isinstance(self.pair, ZeroPair) and isinstance(self.external, ZeroExternal)

    def pair_energy(self, spec: SystemSpec, positions):
        positions = np.asarray(positions, dtype=float)
        energy = np.zeros(positions.shape[:-2])
        for i, j in itertools.combinations(range(positions.shape[-2]), 2):
            separation = spec.boundary.minimum_image(positions[..., i, :] - positions[..., j, :])
            energy = energy + self.pair.energy(separation)
        return energy

    def external_energy(self, positions):
        return np.sum(self.external.energy(positions), axis=-1)

    def potential_energy(self, spec: SystemSpec, positions):
        return self.pair_energy(spec, positions) + self.external_energy(positions)

    def singular_set_predicate(self, spec: SystemSpec, x: PhasePoint):
        return np.isposinf(self.pair_energy(spec, x.positions))

    def pair_gradient(self, spec: SystemSpec, positions, i, partners=None):
        """Sum over `partners` (default: all j != i) of the gradient of u(r_i, r_j) in r_i."""
        positions = np.asarray(positions, dtype=float)
        if partners is None:
            partners = [j for j in range(positions.shape[-2]) if j != i]
        gradient = np.zeros(positions.shape[:-2] + positions.shape[-1:])
        with np.errstate(invalid='ignore', over='ignore'):
            for j in partners:
                separation = spec.boundary.minimum_image(positions[..., i, :] - positions[..., j, :])
                gradient = gradient + self.pair.gradient(separation)
        return gradient

    def external_gradient(self, positions, i):
        return self.external.gradient(np.asarray(positions, dtype=float)[..., i, :])

    def __repr__(self):
        return 'HamiltonianModel(pair={!r}, external={!r})'.format(self.pair, self.external)


def kinetic_energy(spec: SystemSpec, momenta):
    momenta = np.asarray(momenta, dtype=float)
    return np.sum(np.sum(momenta ** 2, axis=-1) / (2.0 * spec.masses), axis=-1)


def hamiltonian_eval(model: HamiltonianModel, spec: SystemSpec, x: PhasePoint):
    positions, momenta = spec.check_phase_arrays(*x)
    return kinetic_energy(spec, momenta) + model.potential_energy(spec, positions)


def boltzmann_factor(model: HamiltonianModel, spec: SystemSpec, x: PhasePoint):
    with np.errstate(over='ignore'):
        return np.exp(-spec.beta * hamiltonian_eval(model, spec, x))


def configurational_weight(model: HamiltonianModel, spec: SystemSpec, positions):
    with np.errstate(over='ignore'):
        return np.exp(-spec.beta * model.potential_energy(spec, positions))


def grad_r(model: HamiltonianModel, spec: SystemSpec, x: PhasePoint, i):
    positions, momenta = spec.check_phase_arrays(*x)
    i = spec.check_particle(i)
    if np.any(model.singular_set_predicate(spec, x)):
        raise SingularityError('Gradient of H requested on the singular set; use weighted_grad_r.')
    return model.pair_gradient(spec, positions, i) + model.external_gradient(positions, i)


def weighted_grad_r(model: HamiltonianModel, spec: SystemSpec, x: PhasePoint, i):
    """(grad_{r_i} H) exp(-beta H), continuously extended by zero on the singular set."""
    positions, momenta = spec.check_phase_arrays(*x)
    i = spec.check_particle(i)
    weight = boltzmann_factor(model, spec, x)
    gradient = model.pair_gradient(spec, positions, i) + model.external_gradient(positions, i)
    with np.errstate(invalid='ignore', over='ignore'):
        return np.where(weight[..., None] > 0, gradient * weight[..., None], 0.0)


def grad_p(spec: SystemSpec, x: PhasePoint, i):
    positions, momenta = spec.check_phase_arrays(*x)
    i = spec.check_particle(i)
    return momenta[..., i, :] / spec.masses[i]


class SchwartzReport(NamedTuple):
    admissible: bool
    sup_values: dict
    shell_values: dict
    reasons: list

    def as_dict(self):
        return {
            'admissible': self.admissible,
            'sup_values': {'k={},order={}'.format(*key): value for key, value in sorted(self.sup_values.items())},
            'reasons': list(self.reasons),
        }


def schwartz_diagnostic(model: HamiltonianModel, spec: SystemSpec, orders=settings.DEFAULT_SCHWARTZ_ORDERS, *,
                        shells=settings.DEFAULT_SCHWARTZ_SHELLS, directions=settings.DEFAULT_SCHWARTZ_DIRECTIONS,
                        growth=settings.DEFAULT_SCHWARTZ_GROWTH, seed=settings.DEFAULT_SEED, step=1e-3):
    """
    Practical decay proxy for exp(-beta H) on an expanding radial grid in phase space.

    Shell radii double from 0.5. On each shell the weighted derivative magnitudes
    (1 + |x|)^(k/2) |D^a exp(-beta H)| are sampled along coordinate axes, collective
    translations and seeded random directions, with |a| <= 2 by central differences.
    A requested (k, |a|) is inadmissible when the outermost three shell maxima grow
    monotonically by more than `growth`, or when any sampled value is not finite.
    """
    if spec.periodic:
        raise BoundaryError('The decay diagnostic applies to the Euclidean boundary only.')
    n_coordinates = 2 * spec.particles * spec.dimension
    origin = np.zeros(n_coordinates)
    confinement = model.external.confinement()
    if confinement is not None and confinement[0] is not None:
        origin[:spec.particles * spec.dimension] = np.tile(confinement[0], spec.particles)

    unit_vectors = list(np.eye(n_coordinates))
    unit_vectors += [-vector for vector in np.eye(n_coordinates)]
    for axis in range(spec.dimension):
        translation = np.zeros(n_coordinates)
        translation[axis:spec.particles * spec.dimension:spec.dimension] = 1.0
        unit_vectors += [translation / np.linalg.norm(translation), -translation / np.linalg.norm(translation)]
    generator = np.random.default_rng(seed)
    for _ in range(directions):
        vector = generator.standard_normal(n_coordinates)
        unit_vectors.append(vector / np.linalg.norm(vector))
    unit_vectors = np.array(unit_vectors)

    def weight(flat):
        positions = flat[..., :n_coordinates // 2].reshape(flat.shape[:-1] + (spec.particles, spec.dimension))
        momenta = flat[..., n_coordinates // 2:].reshape(flat.shape[:-1] + (spec.particles, spec.dimension))
        return boltzmann_factor(model, spec, PhasePoint(positions, momenta))

    radii = 0.5 * 2.0 ** np.arange(shells)
    max_order = max(order for _, order in orders)
    derivative_maxima = np.zeros((shells, max_order + 1))
    finite = True
    with np.errstate(over='ignore', invalid='ignore'):
        for s, radius in enumerate(radii):
            points = origin + radius * unit_vectors
            values = weight(points)
            finite = finite and bool(np.all(np.isfinite(values)))
            derivative_maxima[s, 0] = np.max(np.abs(values))
            for axis in range(n_coordinates):
                shift = np.zeros(n_coordinates)
                shift[axis] = step
                plus, minus = weight(points + shift), weight(points - shift)
                first = (plus - minus) / (2.0 * step)
                second = (plus - 2.0 * values + minus) / step ** 2
                finite = finite and bool(np.all(np.isfinite(first)) and np.all(np.isfinite(second)))
                if max_order >= 1:
                    derivative_maxima[s, 1] = max(derivative_maxima[s, 1], np.max(np.abs(first)))
                if max_order >= 2:
                    derivative_maxima[s, 2] = max(derivative_maxima[s, 2], np.max(np.abs(second)))

    reasons = []
    if not finite:
        reasons.append('exp(-beta H) or its derivatives are not finite on the radial grid')
    sup_values = {}
    shell_values = {}
    for k, order in orders:
        if order > 2:
            raise ValueError('Derivative orders above 2 are not sampled, got {}.'.format(order))
        weighted = (1.0 + radii) ** (k / 2.0) * derivative_maxima[:, order]
        sup_values[(k, order)] = float(np.max(weighted))
        shell_values[(k, order)] = weighted.tolist()
        outer = weighted[-3:]
        if outer[1] > growth * outer[0] and outer[2] > growth * outer[1]:
            reasons.append('no decay for k={}, order={}: outer shells {}'.format(k, order, outer.tolist()))

    if spec.particles >= 2:
        reasons += _coincidence_scan(model, spec, origin, growth)

    admissible = not reasons
    if not admissible:
        logger.warning('Model {!r} fails the decay diagnostic: {}'.format(model, '; '.join(reasons)))
    return SchwartzReport(admissible, sup_values, shell_values, reasons)


def _coincidence_scan(model, spec, origin, growth):
    separations = 10.0 ** -np.arange(1, 7)
    center = origin[:spec.particles * spec.dimension].reshape(spec.particles, spec.dimension)[0]
    positions = np.tile(center, (len(separations), spec.particles, 1))
    for k in range(1, spec.particles):
        positions[:, k, 0] += 1.5 * k
    positions[:, 1, 0] = center[0] + separations
    momenta = np.zeros_like(positions)
    with np.errstate(over='ignore', invalid='ignore'):
        values = boltzmann_factor(model, spec, PhasePoint(positions, momenta))
    if not np.all(np.isfinite(values)):
        return ['exp(-beta H) diverges as two particles approach each other']
    tail = values[-3:]
    if tail[1] > growth * tail[0] and tail[2] > growth * tail[1]:
        return ['exp(-beta H) grows without bound near coincidence: {}'.format(tail.tolist())]
    return []
