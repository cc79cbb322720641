import logging
import math

from typing import NamedTuple

import numpy as np

from cached_property import cached_property

from hyperforce.exceptions import BoundaryError
from hyperforce.exceptions import DimensionMismatchError

logger = logging.getLogger(__name__)


class Euclidean:
    periodic = False

    def wrap(self, positions):
        return positions

    def minimum_image(self, separation):
        return separation

    def as_dict(self):
        return {'kind': 'euclidean'}

    def __repr__(self):
        return 'Euclidean()'


class Torus:
    """
    Periodic cell spanned by the rows of `basis` (the lattice vectors v_1..v_d).

    Cartesian and fractional coordinates are related by r = f @ basis.
    """
    periodic = True

    def __init__(self, basis):
        basis = np.atleast_2d(np.asarray(basis, dtype=float))
        if basis.ndim != 2 or basis.shape[0] != basis.shape[1]:
            raise BoundaryError('Torus basis must be a square matrix, got shape {}.'.format(basis.shape))
        determinant = np.linalg.det(basis)
        if not np.isfinite(determinant) or abs(determinant) < 1e-14:
            raise BoundaryError('Torus basis is singular (det = {}).'.format(determinant))
        self.basis = basis
        self.basis.setflags(write=False)
        self.inverse = np.linalg.inv(basis)
        self.inverse.setflags(write=False)
        self.volume = abs(float(determinant))

    @property
    def dimension(self):
        return self.basis.shape[0]

    def to_fractional(self, positions):
        return np.asarray(positions) @ self.inverse

    def to_cartesian(self, fractions):
        return np.asarray(fractions) @ self.basis

    def wrap(self, positions):
        fractions = self.to_fractional(positions)
        return self.to_cartesian(fractions - np.floor(fractions))

    def minimum_image(self, separation):
        # exact for orthogonal cells; skewed cells need potentials shorter than half the inscribed radius
        fractions = self.to_fractional(separation)
        return self.to_cartesian(fractions - np.round(fractions))

    def lattice_vector(self, coefficients):
        return np.asarray(coefficients, dtype=float) @ self.basis

    @cached_property
    def inscribed_radius(self):
        # half of the smallest distance between opposite faces
        normals = np.linalg.norm(self.inverse, axis=0)
        return 0.5 / float(np.max(normals))

    def as_dict(self):
        return {'kind': 'torus', 'basis': self.basis.tolist()}

    def __repr__(self):
        return 'Torus({})'.format(self.basis.tolist())


class SystemSpec:
    def __init__(self, dimension, particles, masses, beta, boundary=None):
        if int(dimension) != dimension or dimension < 1:
            raise ValueError('Dimension must be a positive integer, got {}.'.format(dimension))
        if int(particles) != particles or particles < 1:
            raise ValueError('Particle count must be a positive integer, got {}.'.format(particles))
        masses = np.broadcast_to(np.asarray(masses, dtype=float), (int(particles),)).copy()
        if not np.all(np.isfinite(masses)) or np.any(masses <= 0):
            raise ValueError('Masses must be positive, got {}.'.format(masses.tolist()))
        if not math.isfinite(beta) or beta <= 0:
            raise ValueError('Inverse temperature must be positive, got {}.'.format(beta))
        boundary = boundary or Euclidean()
        if boundary.periodic and boundary.dimension != dimension:
            raise BoundaryError('Torus basis of dimension {} used with d = {}.'.format(boundary.dimension, dimension))
        masses.setflags(write=False)
        self.dimension = int(dimension)
        self.particles = int(particles)
        self.masses = masses
        self.beta = float(beta)
        self.boundary = boundary

    @property
    def periodic(self):
        return self.boundary.periodic

    @property
    def temperature(self):
        return 1.0 / self.beta

    def thermal_momentum(self, i):
        return math.sqrt(self.masses[i] / self.beta)

    def check_level(self, n, allow_full=False):
        upper = self.particles if allow_full else self.particles - 1
        if int(n) != n or not 0 <= n <= upper:
            raise ValueError('Level n = {} outside 0..{}.'.format(n, upper))
        return int(n)

    def check_particle(self, i, n=0):
        if int(i) != i or not n <= i < self.particles:
            raise IndexError('Particle index {} outside {}..{}.'.format(i, n, self.particles - 1))
        return int(i)

    def check_phase_arrays(self, positions, momenta):
        positions = np.asarray(positions, dtype=float)
        momenta = np.asarray(momenta, dtype=float)
        expected = (self.particles, self.dimension)
        if positions.shape[-2:] != expected or momenta.shape[-2:] != expected:
            raise DimensionMismatchError(
                'Phase point shapes {} / {} do not end with (N, d) = {}.'.format(
                    positions.shape, momenta.shape, expected,
                ),
            )
        return positions, momenta

    def as_dict(self):
        return {
            'dimension': self.dimension,
            'particles': self.particles,
            'masses': self.masses.tolist(),
            'beta': self.beta,
            'boundary': self.boundary.as_dict(),
        }

    def __repr__(self):
        return 'SystemSpec(d={}, N={}, masses={}, beta={}, boundary={!r})'.format(
            self.dimension, self.particles, self.masses.tolist(), self.beta, self.boundary,
        )


class PhasePoint(NamedTuple):
    positions: np.ndarray
    momenta: np.ndarray

    @classmethod
    def create(cls, positions, momenta):
        positions = np.atleast_2d(np.asarray(positions, dtype=float))
        momenta = np.atleast_2d(np.asarray(momenta, dtype=float))
        if positions.shape != momenta.shape:
            raise DimensionMismatchError(
                'Positions {} and momenta {} differ in shape.'.format(positions.shape, momenta.shape),
            )
        if not (np.all(np.isfinite(positions)) and np.all(np.isfinite(momenta))):
            raise ValueError('Phase point coordinates must be finite.')
        return cls(positions, momenta)

    @classmethod
    def empty(cls, dimension):
        return cls(np.zeros((0, dimension)), np.zeros((0, dimension)))

    @property
    def particles(self):
        return self.positions.shape[-2]

    def fixed(self, n):
        return PhasePoint(self.positions[..., :n, :], self.momenta[..., :n, :])

    def free(self, n):
        return PhasePoint(self.positions[..., n:, :], self.momenta[..., n:, :])

    def as_dict(self):
        return {'positions': self.positions.tolist(), 'momenta': self.momenta.tolist()}
