"""
Tempered distributions on the free phase coordinates of a level-n statement and their pairing
with phase functions.

All pairings are unnormalized unless `normalize=True`, which divides by the partition value
(the n = 0 pairing of the constant 1 with exp(-beta H)).
"""
import logging
import math

from typing import NamedTuple

import numpy as np

from cached_property import threaded_cached_property

from hyperforce import settings
from hyperforce.diffeo import AdmissibleDiffeo
from hyperforce.exceptions import MissingGradientError
from hyperforce.hamiltonian import HamiltonianModel
from hyperforce.hamiltonian import configurational_weight
from hyperforce.observables import BoltzmannFactor
from hyperforce.observables import Constant
from hyperforce.observables import PhaseFunction
from hyperforce.quadrature import IntegrationResult
from hyperforce.quadrature import QuadratureScheme
from hyperforce.quadrature import combine_results
from hyperforce.quadrature import integrate_phase
from hyperforce.quadrature import truncation_box
from hyperforce.system import PhasePoint
from hyperforce.system import SystemSpec

logger = logging.getLogger(__name__)


class FunctionDensity:
    kind = 'function'

    def __init__(self, f: PhaseFunction, level=0, bound=None):
        self.f = f
        self.level = int(level)
        self.bound = bound if bound is not None else f.tempered_bound()

    @property
    def differentiable(self):
        return self.f.analytic_gradients or self.f.finite_differences

    def __repr__(self):
        return 'FunctionDensity({}, level={})'.format(self.f.as_dict(), self.level)


class DeltaSlice:
    """delta(r_i - a): the position of particle i pinned to a."""
    kind = 'delta'

    def __init__(self, i, a, level=0):
        self.i = int(i)
        self.a = np.atleast_1d(np.asarray(a, dtype=float))
        self.level = int(level)
        if self.i < self.level:
            raise IndexError('Delta slice index {} is fixed at level {}.'.format(self.i, self.level))

    def __repr__(self):
        return 'DeltaSlice(i={}, a={}, level={})'.format(self.i, self.a.tolist(), self.level)


class LinearCombination:
    kind = 'combination'

    def __init__(self, terms, level=None):
        self.terms = [(float(coefficient), distribution) for coefficient, distribution in terms]
        levels = {distribution.level for _, distribution in self.terms}
        if level is not None:
            levels.add(int(level))
        if len(levels) > 1:
            raise ValueError('Combined distributions must share one level, got {}.'.format(sorted(levels)))
        self.level = levels.pop() if levels else 0

    def __repr__(self):
        return 'LinearCombination({})'.format(self.terms)


class AdjointShift:
    """D_i(eps) u defined through <D_i(eps) u, phi> = -<u, D_i(eps) phi>."""
    kind = 'adjoint_shift'

    def __init__(self, operands, inner):
        self.operands = operands
        self.inner = inner
        self.level = inner.level

    def __repr__(self):
        return 'AdjointShift(i={}, {!r})'.format(self.operands.i, self.inner)


class TemperednessReport(NamedTuple):
    tempered: bool
    worst_ratio: float


def check_tempered(density: FunctionDensity, spec: SystemSpec, radii=None, directions=16,
                   seed=settings.DEFAULT_SEED):
    """|f(x)| <= C (1 + |x|)^l along seeded radial rays in the free phase coordinates."""
    if density.bound is None:
        raise ValueError('{!r} declares no temperedness bound (C, l).'.format(density))
    constant, exponent = density.bound
    radii = np.geomspace(0.1, 100.0, 13) if radii is None else np.asarray(radii, dtype=float)
    free = spec.particles - density.level
    generator = np.random.default_rng(seed)
    vectors = generator.standard_normal((directions, 2, free, spec.dimension))
    vectors /= np.linalg.norm(vectors.reshape(directions, -1), axis=-1)[:, None, None, None]
    points = radii[:, None, None, None, None] * vectors[None]
    positions = np.zeros(points.shape[:2] + (spec.particles, spec.dimension))
    momenta = np.zeros_like(positions)
    positions[..., density.level:, :] = points[:, :, 0]
    momenta[..., density.level:, :] = points[:, :, 1]
    values = np.abs(density.f(positions, momenta))
    envelope = constant * (1.0 + radii[:, None]) ** exponent
    with np.errstate(divide='ignore', invalid='ignore'):
        ratio = float(np.max(np.where(envelope > 0, values / envelope, np.where(values > 0, np.inf, 0.0))))
    return TemperednessReport(bool(np.isfinite(ratio) and ratio <= 1.0), ratio)


class ShiftOperands:
    """delta_i(eps)(x) = eps(r_i) and delta_hat_i(eps)(x) = eps'(r_i) p_i."""

    def __init__(self, diffeo: AdmissibleDiffeo, i):
        self.diffeo = diffeo
        self.i = int(i)

    def delta(self, positions, momenta):
        return self.diffeo.value(np.asarray(positions, dtype=float)[..., self.i, :])

    def delta_hat(self, positions, momenta):
        jacobian = self.diffeo.jacobian(np.asarray(positions, dtype=float)[..., self.i, :])
        return np.einsum('...ab,...b->...a', jacobian, np.asarray(momenta, dtype=float)[..., self.i, :])


class ShiftedFunction(PhaseFunction):
    """D_i(eps) phi = eps(r_i) . grad_{r_i} phi - (eps'(r_i) p_i) . grad_{p_i} phi."""

    def __init__(self, operands: ShiftOperands, phi: PhaseFunction):
        self.operands = operands
        self.phi = phi
        self.finite_differences = phi.finite_differences
        self.periodic = phi.periodic and operands.diffeo.field.periodic

    def value(self, positions, momenta):
        i = self.operands.i
        shift = self.operands.delta(positions, momenta)
        momentum_shift = self.operands.delta_hat(positions, momenta)
        return (np.sum(shift * self.phi.grad_r(positions, momenta, i), axis=-1) -
                np.sum(momentum_shift * self.phi.grad_p(positions, momenta, i), axis=-1))

    def as_dict(self):
        return {'kind': 'shifted', 'particle': self.operands.i, 'function': self.phi.as_dict()}


def apply_D_to_function(operands: ShiftOperands, phi: PhaseFunction) -> PhaseFunction:
    if not (phi.analytic_gradients or phi.finite_differences):
        raise MissingGradientError(
            'D_{}(eps) needs gradients of {}; it has no oracle and finite differences are disabled.'.format(
                operands.i, type(phi).__name__,
            ),
        )
    if operands.diffeo.is_zero:
        return Constant(0.0)
    return ShiftedFunction(operands, phi)


def apply_D_to_distribution(operands: ShiftOperands, u):
    if operands.diffeo.is_zero:
        return FunctionDensity(Constant(0.0), u.level)
    if isinstance(u, FunctionDensity) and u.differentiable:
        return FunctionDensity(apply_D_to_function(operands, u.f), u.level)
    if isinstance(u, LinearCombination):
        return LinearCombination(
            [(coefficient, apply_D_to_distribution(operands, term)) for coefficient, term in u.terms], u.level,
        )
    return AdjointShift(operands, u)


class PairingEvaluator:
    def __init__(self, spec: SystemSpec, model: HamiltonianModel, scheme: QuadratureScheme = None):
        self.spec = spec
        self.model = model
        self.scheme = scheme or QuadratureScheme()
        self.boltzmann = BoltzmannFactor(model, spec)

    @threaded_cached_property
    def box(self):
        return truncation_box(self.model, self.spec, self.scheme)

    def integrate(self, g, base, free_positions=(), free_momenta=()):
        box = self.box if free_positions and not self.spec.periodic else None
        return integrate_phase(g, self.spec, self.scheme, base=base, free_positions=free_positions,
                               free_momenta=free_momenta, box=box)

    def base(self, witness=None):
        """Full (N, d) position and momentum arrays with the witness particles filled in."""
        positions = np.zeros((self.spec.particles, self.spec.dimension))
        momenta = np.zeros_like(positions)
        if witness is not None:
            fixed_positions = np.asarray(witness[0], dtype=float).reshape(-1, self.spec.dimension)
            fixed_momenta = np.asarray(witness[1], dtype=float).reshape(-1, self.spec.dimension)
            positions[:fixed_positions.shape[0]] = fixed_positions
            momenta[:fixed_momenta.shape[0]] = fixed_momenta
        return positions, momenta

    @threaded_cached_property
    def partition(self):
        return pair(self, FunctionDensity(Constant(1.0), 0), self.boltzmann)

    @threaded_cached_property
    def configurational_partition(self):
        spec = self.spec
        return self.integrate(
            lambda positions, momenta: configurational_weight(self.model, spec, positions),
            self.base(), free_positions=range(spec.particles),
        )


def check_witness(spec, level, witness):
    if witness is None:
        witness = PhasePoint.empty(spec.dimension)
    positions = np.asarray(witness[0], dtype=float).reshape(-1, spec.dimension)
    if positions.shape[0] != level:
        raise ValueError('Witness fixes {} particles, the distribution has level {}.'.format(positions.shape[0], level))
    return witness


def normalize_result(result, partition):
    z = float(partition.value)
    value = np.asarray(result.value) / z
    error = result.error / abs(z) + float(np.max(np.abs(value))) * partition.error / abs(z)
    return IntegrationResult(value if np.ndim(value) else float(value), error,
                             result.flagged or partition.flagged, result.evaluations)


def pair(ev: PairingEvaluator, u, phi: PhaseFunction, witness=None, normalize=False) -> IntegrationResult:
    """<K_n[u], phi>(witness): u paired with phi(witness, .) over the free particles."""
    spec = ev.spec
    witness = check_witness(spec, u.level, witness)
    free = list(range(u.level, spec.particles))
    base = ev.base(witness)
    if isinstance(u, FunctionDensity):
        f = u.f
        result = ev.integrate(
            lambda positions, momenta: f(positions, momenta) * phi(positions, momenta),
            base, free_positions=free, free_momenta=free,
        )
    elif isinstance(u, DeltaSlice):
        spec.check_particle(u.i, u.level)
        base[0][u.i] = u.a
        result = ev.integrate(
            lambda positions, momenta: phi(positions, momenta),
            base, free_positions=[j for j in free if j != u.i], free_momenta=free,
        )
    elif isinstance(u, LinearCombination):
        result = combine_results(
            [(coefficient, pair(ev, term, phi, witness)) for coefficient, term in u.terms],
        )
    elif isinstance(u, AdjointShift):
        result = pair(ev, u.inner, apply_D_to_function(u.operands, phi), witness).scaled(-1.0)
    else:
        raise TypeError('Cannot pair distribution {!r}.'.format(u))
    if normalize:
        result = normalize_result(result, ev.partition)
    return result


def reduced_distribution(ev: PairingEvaluator, n, point=None) -> IntegrationResult:
    """phi^[n](r^n, p^n) = N! / (N - n)! times the marginal of exp(-beta H) over particles n..N-1."""
    spec = ev.spec
    n = spec.check_level(n, allow_full=True)
    prefactor = math.factorial(spec.particles) / math.factorial(spec.particles - n)
    if n == spec.particles:
        positions, momenta = spec.check_phase_arrays(*point)
        return IntegrationResult(prefactor * float(ev.boltzmann(positions, momenta)), 0.0, False, 1)
    return pair(ev, FunctionDensity(Constant(1.0), n), ev.boltzmann, point).scaled(prefactor)


def one_body_density(ev: PairingEvaluator, r) -> IntegrationResult:
    """rho(r) = sum_i <delta(r_i - r), exp(-beta H)> / Z."""
    terms = [(1.0, pair(ev, DeltaSlice(i, r, 0), ev.boltzmann)) for i in range(ev.spec.particles)]
    return normalize_result(combine_results(terms), ev.partition)


def reduced_density(ev: PairingEvaluator, n, positions) -> IntegrationResult:
    """rho^(n)(r^n) = N! / (N - n)! / Z_conf times the integral of exp(-beta U) over r_n..r_{N-1}."""
    spec = ev.spec
    n = spec.check_level(n, allow_full=True)
    prefactor = math.factorial(spec.particles) / math.factorial(spec.particles - n)
    base = ev.base((np.asarray(positions, dtype=float).reshape(n, spec.dimension), np.zeros((n, spec.dimension))))
    model = ev.model
    result = ev.integrate(
        lambda sample_positions, momenta: configurational_weight(model, spec, sample_positions),
        base, free_positions=range(n, spec.particles),
    )
    return normalize_result(result.scaled(prefactor), ev.configurational_partition)
