"""
Catalog of pair and external potentials.

Pair potentials are radial. Following the usual molecular-simulation convention
their radial functions take the squared distance `rsq` and return `(u, w)` with

    w = -(1/r) du/dr

so that the gradient of u(|a - b|) with respect to `a` is `-w (a - b)`.
A pair potential returns `u = +inf` on its singular set.
"""
import logging
import math

from typing import NamedTuple

import numpy as np

from hyperforce.exceptions import BoundaryError

logger = logging.getLogger(__name__)


class PotentialCatalogEntry(NamedTuple):
    name: str
    parameters: dict


class PairPotential:
    name = None
    valid_arguments = ()
    singular = False

    def __init__(self, **parameters):
        unknown = set(parameters) - set(self.valid_arguments)
        if unknown:
            raise ValueError(
                'Pair potential "{}" got unknown parameters {}. Available options are: {}'.format(
                    self.name, sorted(unknown), self.valid_arguments,
                ),
            )
        self.parameters = parameters

    @property
    def entry(self):
        return PotentialCatalogEntry(self.name, dict(self.parameters))

    def radial(self, rsq):
        raise NotImplementedError

    def energy(self, separation):
        u, _ = self.radial(np.sum(separation ** 2, axis=-1))
        return u

    def gradient(self, separation):
        """Gradient of u(|a - b|) with respect to `a`, given separation = a - b."""
        _, w = self.radial(np.sum(separation ** 2, axis=-1))
        return -w[..., None] * separation

    def __repr__(self):
        return '{}({})'.format(type(self).__name__, self.parameters)


class ZeroPair(PairPotential):
    name = 'zero'

    def radial(self, rsq):
        zeros = np.zeros_like(np.asarray(rsq, dtype=float))
        return zeros, zeros.copy()


class HarmonicPair(PairPotential):
    name = 'harmonic'
    valid_arguments = ('k',)

    def __init__(self, k=1.0):
        super().__init__(k=float(k))
        self.k = float(k)

    def radial(self, rsq):
        rsq = np.asarray(rsq, dtype=float)
        return 0.5 * self.k * rsq, np.full_like(rsq, -self.k)


class WCAPair(PairPotential):
    """Lennard-Jones cut at its minimum 2^(1/6) sigma and shifted up by epsilon."""
    name = 'wca'
    valid_arguments = ('epsilon', 'sigma')
    singular = True

    def __init__(self, epsilon=1.0, sigma=1.0):
        super().__init__(epsilon=float(epsilon), sigma=float(sigma))
        if sigma <= 0 or epsilon < 0:
            raise ValueError('WCA needs sigma > 0 and epsilon >= 0.')
        self.epsilon = float(epsilon)
        self.sigma = float(sigma)
        self.cutoff = 2.0 ** (1.0 / 6.0) * self.sigma

    def radial(self, rsq):
        rsq = np.asarray(rsq, dtype=float)
        sigsq = self.sigma ** 2
        inside = rsq < self.cutoff ** 2
        with np.errstate(divide='ignore', over='ignore', invalid='ignore'):
            x3 = np.where(inside, (sigsq / rsq) ** 3, 0.0)
            x6 = x3 * x3
            u = np.where(inside, 4.0 * self.epsilon * (x6 - x3) + self.epsilon, 0.0)
            w = np.where(inside, 24.0 * self.epsilon * (2.0 * x6 - x3) / rsq, 0.0)
        # near coincidence the powers overflow and x6 - x3 would be inf - inf
        blown = (rsq == 0.0) | (inside & np.isinf(x6))
        u = np.where(blown, np.inf, u)
        w = np.where(blown, np.inf, w)
        return u, w


class SoftSpherePair(PairPotential):
    """u(r) = epsilon (1 - r/sigma)^alpha / alpha for r < sigma."""
    name = 'soft_sphere'
    valid_arguments = ('epsilon', 'sigma', 'alpha')

    def __init__(self, epsilon=1.0, sigma=1.0, alpha=2.0):
        super().__init__(epsilon=float(epsilon), sigma=float(sigma), alpha=float(alpha))
        if sigma <= 0 or alpha <= 1:
            raise ValueError('Soft sphere needs sigma > 0 and alpha > 1.')
        self.epsilon = float(epsilon)
        self.sigma = float(sigma)
        self.alpha = float(alpha)

    def radial(self, rsq):
        rsq = np.asarray(rsq, dtype=float)
        r = np.sqrt(rsq)
        overlap = np.clip(1.0 - r / self.sigma, 0.0, None)
        u = self.epsilon * overlap ** self.alpha / self.alpha
        du_dr = -self.epsilon * overlap ** (self.alpha - 1.0) / self.sigma
        # the gradient direction is undefined at coincidence; the continuous choice is zero
        w = np.divide(-du_dr, r, out=np.zeros_like(r), where=r > 0)
        return u, w


class CustomPair(PairPotential):
    """Radial pair potential from a callable u(r); gradients by central differences."""
    name = 'custom'
    valid_arguments = ('function', 'step')

    def __init__(self, function, step=1e-6):
        super().__init__(function=function, step=float(step))
        self.function = function
        self.step = float(step)

    def radial(self, rsq):
        r = np.sqrt(np.asarray(rsq, dtype=float))
        with np.errstate(divide='ignore', over='ignore', invalid='ignore'):
            u = np.asarray(self.function(r), dtype=float)
            h = self.step * np.maximum(r, 1.0)
            du_dr = (self.function(r + h) - self.function(np.abs(r - h))) / (2.0 * h)
            w = np.divide(-du_dr, r, out=np.zeros_like(r), where=r > 0)
        u = np.where(np.isnan(u), np.inf, u)
        return u, w


class ExternalPotential:
    name = None
    valid_arguments = ()
    periodic = False

    def __init__(self, **parameters):
        unknown = set(parameters) - set(self.valid_arguments)
        if unknown:
            raise ValueError(
                'External potential "{}" got unknown parameters {}. Available options are: {}'.format(
                    self.name, sorted(unknown), self.valid_arguments,
                ),
            )
        self.parameters = parameters

    @property
    def entry(self):
        return PotentialCatalogEntry(self.name, dict(self.parameters))

    def energy(self, positions):
        raise NotImplementedError

    def gradient(self, positions):
        raise NotImplementedError

    def confinement(self):
        """(center, stiffness) of a quadratic lower bound on the energy growth, or None."""
        return None

    def __repr__(self):
        return '{}({})'.format(type(self).__name__, self.parameters)


class ZeroExternal(ExternalPotential):
    name = 'zero'

    def energy(self, positions):
        return np.zeros(np.shape(positions)[:-1])

    def gradient(self, positions):
        return np.zeros(np.shape(positions))


class HarmonicExternal(ExternalPotential):
    name = 'harmonic'
    valid_arguments = ('k', 'center')

    def __init__(self, k=1.0, center=None):
        super().__init__(k=float(k), center=center)
        if k <= 0:
            raise ValueError('Harmonic external potential needs k > 0.')
        self.k = float(k)
        self.center = None if center is None else np.asarray(center, dtype=float)

    def _displacement(self, positions):
        positions = np.asarray(positions, dtype=float)
        if self.center is None:
            return positions
        return positions - self.center

    def energy(self, positions):
        return 0.5 * self.k * np.sum(self._displacement(positions) ** 2, axis=-1)

    def gradient(self, positions):
        return self.k * self._displacement(positions)

    def confinement(self):
        return self.center, self.k


class CosineExternal(ExternalPotential):
    """u(r) = amplitude * cos(2 pi m . f(r)) with f the fractional coordinates of a torus cell."""
    name = 'cosine'
    valid_arguments = ('amplitude', 'mode')
    periodic = True

    def __init__(self, boundary, amplitude=1.0, mode=None):
        if not boundary.periodic:
            raise BoundaryError('The cosine external potential lives on a torus.')
        mode = np.zeros(boundary.dimension) if mode is None else np.asarray(mode, dtype=float)
        if mode.shape != (boundary.dimension,) or np.any(mode != np.round(mode)):
            raise ValueError('Cosine mode must be an integer vector of length d, got {}.'.format(mode))
        super().__init__(amplitude=float(amplitude), mode=mode.tolist())
        self.boundary = boundary
        self.amplitude = float(amplitude)
        self.wavevector = 2.0 * math.pi * boundary.inverse @ mode

    def energy(self, positions):
        return self.amplitude * np.cos(np.asarray(positions, dtype=float) @ self.wavevector)

    def gradient(self, positions):
        phase = np.asarray(positions, dtype=float) @ self.wavevector
        return -self.amplitude * np.sin(phase)[..., None] * self.wavevector


class PotentialDispatcher:
    pair_potentials = {
        'zero': ZeroPair,
        'harmonic': HarmonicPair,
        'wca': WCAPair,
        'soft_sphere': SoftSpherePair,
        'custom': CustomPair,
    }
    external_potentials = {
        'zero': ZeroExternal,
        'harmonic': HarmonicExternal,
        'cosine': CosineExternal,
    }

    def __init__(self, boundary=None):
        self.boundary = boundary

    def pair(self, definition: dict) -> PairPotential:
        arguments = dict(definition)
        kind = arguments.pop('kind', 'zero')
        logger.debug('Creating pair potential of kind "{}"...'.format(kind))
        try:
            potential_class = self.pair_potentials[kind]
        except KeyError:
            raise ValueError('Unknown pair potential "{}". Available: {}'.format(
                kind, sorted(self.pair_potentials),
            ))
        return potential_class(**arguments)

    def external(self, definition: dict) -> ExternalPotential:
        arguments = dict(definition)
        kind = arguments.pop('kind', 'zero')
        logger.debug('Creating external potential of kind "{}"...'.format(kind))
        try:
            potential_class = self.external_potentials[kind]
        except KeyError:
            raise ValueError('Unknown external potential "{}". Available: {}'.format(
                kind, sorted(self.external_potentials),
            ))
        if potential_class.periodic:
            return potential_class(self.boundary, **arguments)
        return potential_class(**arguments)
