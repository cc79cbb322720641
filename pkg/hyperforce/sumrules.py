"""
Equilibrium sum rules at level n.

The G terms integrate, with r_i pinned, over the remaining free positions and all free momenta:

    G1 = (grad_{r_i} f) B
    G2 = grad_{r_i}((grad_{p_i} f) B) p_i
    G3 = f grad_{r_i} B                      (split into pair and external parts)
    G4 = -beta (p_i p_i^T / m_i) grad_{r_i}(f B)

with B = exp(-beta H). Their sum vanishes at every r_i; every other identity in this module
(localized hyperforce, t-derivative, hierarchy, force balance) is a weighted or reduced form of it.
"""
import itertools
import logging
import math

from typing import NamedTuple

import numpy as np

from hyperforce import settings
from hyperforce.diffeo import AdmissibleDiffeo
from hyperforce.diffeo import LiftedMap
from hyperforce.diffeo import pullback_density
from hyperforce.diffeo import pullback_function
from hyperforce.distributions import DeltaSlice
from hyperforce.distributions import FunctionDensity
from hyperforce.distributions import PairingEvaluator
from hyperforce.distributions import ShiftOperands
from hyperforce.distributions import apply_D_to_distribution
from hyperforce.distributions import apply_D_to_function
from hyperforce.distributions import check_witness
from hyperforce.distributions import normalize_result
from hyperforce.distributions import one_body_density
from hyperforce.distributions import pair
from hyperforce.distributions import reduced_density
from hyperforce.distributions import reduced_distribution
from hyperforce.exceptions import BoundaryError
from hyperforce.exceptions import InadmissibleFieldError
from hyperforce.exceptions import IntegrationDomainError
from hyperforce.hamiltonian import HamiltonianModel
from hyperforce.hamiltonian import configurational_weight
from hyperforce.observables import CallableFunction
from hyperforce.observables import Constant
from hyperforce.observables import PhaseFunction
from hyperforce.observables import TranslatedFunction
from hyperforce.potentials import HarmonicExternal
from hyperforce.potentials import HarmonicPair
from hyperforce.quadrature import IntegrationResult
from hyperforce.quadrature import combine_results
from hyperforce.report import Tolerances
from hyperforce.report import make_record
from hyperforce.report import norm
from hyperforce.report import witness_dict
from hyperforce.system import PhasePoint
from hyperforce.system import SystemSpec
from hyperforce.system import Torus

logger = logging.getLogger(__name__)

G_BLOCKS = ('G1', 'G2', 'G3_pair', 'G3_external', 'G4', 'total')


class Residual(NamedTuple):
    value: object
    error: float
    scale: float
    flagged: bool = False
    details: dict = None

    def record(self, check, label, witness=None, tolerances: Tolerances = Tolerances()):
        return make_record(
            check, label, self.value, self.error, self.scale, witness=witness, flagged=self.flagged,
            details=self.details, tolerances=tolerances, terms_max=self.scale,
        )


def _zero_residual(dimension=None, **details):
    value = 0.0 if dimension is None else np.zeros(dimension)
    return Residual(value, 0.0, 0.0, False, details or None)


class Derivative(NamedTuple):
    value: object
    error: float
    flagged: bool
    magnitude: float


def richardson_derivative(evaluate, step):
    """
    d/ds evaluate(s) at s = 0 from central differences at +-step and +-step/2 combined by one
    Richardson step. `evaluate` returns an IntegrationResult.

    The error adds the gap to the finer difference and the propagated evaluation errors.
    """
    step = abs(float(step))
    samples = {s: evaluate(s) for s in (step, -step, 0.5 * step, -0.5 * step)}
    values = {s: np.asarray(result.value, dtype=float) for s, result in samples.items()}
    coarse = (values[step] - values[-step]) / (2.0 * step)
    fine = (values[0.5 * step] - values[-0.5 * step]) / step
    value = (4.0 * fine - coarse) / 3.0
    error = (
        norm(value - fine) +
        4.0 / (3.0 * step) * (samples[0.5 * step].error + samples[-0.5 * step].error) +
        1.0 / (6.0 * step) * (samples[step].error + samples[-step].error)
    )
    return Derivative(
        float(value) if value.ndim == 0 else value,
        float(error),
        any(result.flagged for result in samples.values()),
        max(norm(sample) for sample in values.values()),
    )


def richardson_gradient(evaluate_at, point, step=settings.DEFAULT_DISTRIBUTION_FD_STEP):
    """Gradient of x -> evaluate_at(x) with a per-axis step of step * max(1, |x_a|)."""
    point = np.asarray(point, dtype=float)
    components = []
    for axis in range(point.size):
        unit = np.zeros_like(point)
        unit[axis] = 1.0
        components.append(richardson_derivative(
            lambda s, unit=unit: evaluate_at(point + s * unit), step * max(1.0, abs(point[axis])),
        ))
    return Derivative(
        np.array([component.value for component in components]),
        float(sum(component.error for component in components)),
        any(component.flagged for component in components),
        max(component.magnitude for component in components),
    )


class GTerms(NamedTuple):
    g1: np.ndarray
    g2: np.ndarray
    g3_pair: np.ndarray
    g3_external: np.ndarray
    g4: np.ndarray
    total: np.ndarray
    error: float
    flagged: bool = False

    @property
    def g3(self):
        return self.g3_pair + self.g3_external

    def term(self, k):
        terms = {1: self.g1, 2: self.g2, 3: self.g3, 4: self.g4}
        if k not in terms:
            raise ValueError('G terms are numbered 1..4, got {}.'.format(k))
        return terms[k]

    @property
    def scale(self):
        return max(norm(self.term(k)) for k in range(1, 5))

    def as_dict(self):
        return {
            'G1': self.g1.tolist(),
            'G2': self.g2.tolist(),
            'G3': self.g3.tolist(),
            'G3_pair': self.g3_pair.tolist(),
            'G3_external': self.g3_external.tolist(),
            'G4': self.g4.tolist(),
        }


def g_integrand(ev: PairingEvaluator, f: PhaseFunction, i):
    """Integrand of the G terms for particle i, stacked as (..., 6, d) blocks in G_BLOCKS order."""
    beta = ev.spec.beta
    mass = ev.spec.masses[i]
    boltzmann = ev.boltzmann

    def integrand(positions, momenta):
        weight = boltzmann(positions, momenta)[..., None]
        pair_weighted, external_weighted = boltzmann.split_weighted_gradient(positions, momenta, i)
        weight_gradient = -beta * (pair_weighted + external_weighted)
        value = np.asarray(f(positions, momenta), dtype=float)[..., None]
        f_r = f.grad_r(positions, momenta, i)
        f_p = f.grad_p(positions, momenta, i)
        momentum = np.asarray(momenta, dtype=float)[..., i, :]

        g1 = f_r * weight
        velocity_jacobian = f.hess_rp(positions, momenta, i) * weight[..., None] + \
            f_p[..., :, None] * weight_gradient[..., None, :]
        g2 = np.einsum('...ab,...b->...a', velocity_jacobian, momentum)
        g3_pair = -beta * value * pair_weighted
        g3_external = -beta * value * external_weighted
        product_gradient = f_r * weight + value * weight_gradient
        g4 = -(beta / mass) * momentum * np.sum(momentum * product_gradient, axis=-1)[..., None]
        total = g1 + g2 + g3_pair + g3_external + g4
        return np.stack([g1, g2, g3_pair, g3_external, g4, total], axis=-2)

    return integrand


def g_terms(ev: PairingEvaluator, i, n, r_i, witness=None, f: PhaseFunction = None) -> GTerms:
    spec = ev.spec
    n = spec.check_level(n)
    i = spec.check_particle(i, n)
    witness = check_witness(spec, n, witness)
    f = f or Constant(1.0)
    base = ev.base(witness)
    base[0][i] = np.broadcast_to(np.asarray(r_i, dtype=float), (spec.dimension,))
    moving = list(range(n, spec.particles))
    result = ev.integrate(
        g_integrand(ev, f, i), base, free_positions=[j for j in moving if j != i], free_momenta=moving,
    )
    blocks = np.asarray(result.value, dtype=float).reshape(len(G_BLOCKS), spec.dimension)
    return GTerms(*blocks, error=result.error, flagged=result.flagged)


def g_term(ev: PairingEvaluator, k, i, n, r_i, witness=None, f: PhaseFunction = None):
    return g_terms(ev, i, n, r_i, witness, f).term(k)


def g_i(ev: PairingEvaluator, i, n, r_i, witness=None, f: PhaseFunction = None,
        tolerances: Tolerances = Tolerances(), label=None, check='g_vanish'):
    """Sum of the four G terms with its verdict; scale is the largest single term."""
    terms = g_terms(ev, i, n, r_i, witness, f)
    return make_record(
        check, label or 'i={} n={}'.format(i, n), terms.total, terms.error, terms.scale,
        witness=witness_dict(witness, r=r_i), flagged=terms.flagged,
        details={'i': i, 'n': n, 'terms': terms.as_dict()}, tolerances=tolerances, terms_max=terms.scale,
    )


def closed_form_terms(ev: PairingEvaluator, i, n, r_i, f: PhaseFunction = None):
    """Exactly known G terms keyed by k; terms without a closed form are missing."""
    spec, model = ev.spec, ev.model
    f = f or Constant(1.0)
    if not isinstance(f, Constant):
        return {}
    zeros = np.zeros(spec.dimension)
    expected = {1: zeros, 2: zeros}
    if model.is_ideal:
        expected.update({3: zeros, 4: zeros})
    elif spec.particles == 1 and not spec.periodic and isinstance(model.external, HarmonicExternal):
        stiffness = model.external.k
        center = zeros if model.external.center is None else model.external.center
        displacement = np.asarray(r_i, dtype=float) - center
        gaussian = math.exp(-0.5 * spec.beta * stiffness * float(displacement @ displacement))
        momentum_mass = (2.0 * math.pi * spec.masses[i] / spec.beta) ** (0.5 * spec.dimension)
        g3 = -f.constant * spec.beta * stiffness * displacement * gaussian * momentum_mass
        expected.update({3: g3, 4: -g3})
    return expected


def g_term_records(ev: PairingEvaluator, i, n, r_i, witness=None, f: PhaseFunction = None,
                   tolerances: Tolerances = Tolerances(), label=None):
    """One record per term: the deviation from the closed form where one exists."""
    terms = g_terms(ev, i, n, r_i, witness, f)
    expected = closed_form_terms(ev, i, n, r_i, f)
    label = label or 'i={} n={}'.format(i, n)
    records = []
    for k in range(1, 5):
        value = terms.term(k)
        details = {'i': i, 'n': n, 'term': value}
        if k in expected:
            details['expected'] = expected[k]
            deviation, scale = value - expected[k], max(norm(value), norm(expected[k]))
        else:
            details['reason'] = 'no closed form; terms recorded'
            deviation, scale = np.zeros_like(value), norm(value)
        record = make_record(
            'g_terms', '{} G{}'.format(label, k), deviation, terms.error, scale,
            witness=witness_dict(witness, r=r_i), flagged=terms.flagged, details=details,
            tolerances=tolerances, terms_max=scale,
        )
        if k not in expected and terms.flagged:
            record = record._replace(verdict='fail')
        records.append(record)
    return records


class LocalizedHyperforce(NamedTuple):
    route_a: Residual
    route_b: Residual

    @property
    def agreement(self):
        return Residual(
            self.route_a.value - self.route_b.value,
            self.route_a.error + self.route_b.error,
            max(self.route_a.scale, self.route_b.scale),
            self.route_a.flagged or self.route_b.flagged,
        )


def _route_a_pairings(ev: PairingEvaluator, operands, density, witness):
    shifted_density = pair(ev, apply_D_to_distribution(operands, density), ev.boltzmann, witness)
    shifted_weight = pair(ev, density, apply_D_to_function(operands, ev.boltzmann), witness)
    return shifted_density + shifted_weight, shifted_density.value, shifted_weight.value


def localized_hyperforce(ev: PairingEvaluator, i, n, diffeo: AdmissibleDiffeo, f: PhaseFunction = None,
                         witness=None) -> LocalizedHyperforce:
    """
    Route A pairs D_i(eps) f with B and f with D_i(eps) B. Route B integrates
    eps(r_i) . G_i(r_i) over r_i together with everything G_i integrates.

    For a differentiable f both routes share one cubature over the free particles; other
    densities pair route A through the adjoint shift.
    """
    spec = ev.spec
    n = spec.check_level(n)
    i = spec.check_particle(i, n)
    witness = check_witness(spec, n, witness)
    f = f or Constant(1.0)
    if diffeo.is_zero:
        return LocalizedHyperforce(_zero_residual(), _zero_residual())

    operands = ShiftOperands(diffeo, i)
    density = FunctionDensity(f, n)
    shifted = apply_D_to_distribution(operands, density)
    integrand = g_integrand(ev, f, i)
    shared = isinstance(shifted, FunctionDensity)
    shifted_weight = apply_D_to_function(operands, ev.boltzmann) if shared else None

    def weighted(positions, momenta):
        blocks = integrand(positions, momenta)
        shift = diffeo.value(np.asarray(positions, dtype=float)[..., i, :])
        localized = np.einsum('...kd,...d->...k', blocks, shift)
        if not shared:
            return localized
        density_part = np.asarray(shifted.f(positions, momenta), dtype=float) * ev.boltzmann(positions, momenta)
        function_part = np.asarray(f(positions, momenta), dtype=float) * shifted_weight(positions, momenta)
        parts = np.stack([density_part + function_part, density_part, function_part], axis=-1)
        return np.concatenate([parts, localized], axis=-1)

    moving = list(range(n, spec.particles))
    contributions = ev.integrate(weighted, ev.base(witness), free_positions=moving, free_momenta=moving)
    values = np.asarray(contributions.value, dtype=float)
    if shared:
        route_a = IntegrationResult(float(values[0]), contributions.error, contributions.flagged)
        terms_a = {'density': float(values[1]), 'function': float(values[2])}
        values = values[3:]
    else:
        route_a, density_value, function_value = _route_a_pairings(ev, operands, density, witness)
        terms_a = {'density': density_value, 'function': function_value}
    parts = dict(zip(G_BLOCKS, values))
    terms_b = {
        'G1': parts['G1'], 'G2': parts['G2'], 'G3': parts['G3_pair'] + parts['G3_external'], 'G4': parts['G4'],
    }
    logger.debug('Localized hyperforce i={} n={}: route A {:.6g}, route B {:.6g}'.format(
        i, n, float(route_a.value), float(parts['total']),
    ))
    return LocalizedHyperforce(
        Residual(float(route_a.value), route_a.error, max(abs(value) for value in terms_a.values()),
                 route_a.flagged, {'terms': terms_a}),
        Residual(float(parts['total']), contributions.error, max(abs(value) for value in terms_b.values()),
                 contributions.flagged, {'terms': terms_b}),
    )


def default_t_step(diffeo: AdmissibleDiffeo):
    return settings.DEFAULT_T_DERIVATIVE_SCALE / diffeo.sup_jacobian_norm


def _check_t_step(diffeo: AdmissibleDiffeo, t_step):
    if t_step == 0:
        raise ValueError('The t step must be nonzero.')
    if abs(t_step) * diffeo.sup_jacobian_norm >= 1.0:
        raise InadmissibleFieldError(
            't = {:.6g} makes t eps inadmissible (|t| sup |eps\'| = {:.6g} >= 1).'.format(
                t_step, abs(t_step) * diffeo.sup_jacobian_norm,
            ),
        )


def pulled_back_pairing(ev: PairingEvaluator, n, diffeo: AdmissibleDiffeo, f: PhaseFunction, t, witness=None,
                        move_density=True, move_function=True) -> IntegrationResult:
    """<(t eps)^* f, (t eps)^* B>; either side can be held fixed."""
    lifted = LiftedMap(diffeo.scaled(t), n, ev.spec)
    density = pullback_density(f, lifted) if move_density else f
    function = pullback_function(ev.boltzmann, lifted) if move_function else ev.boltzmann
    return pair(ev, FunctionDensity(density, n), function, witness)


def hyperforce_t_derivative(ev: PairingEvaluator, n, diffeo: AdmissibleDiffeo, f: PhaseFunction = None,
                            witness=None, t_step=None) -> Residual:
    """
    d/dt of the pulled-back pairing at t = 0. The pairing does not depend on t, so the value
    measures only discretization error.
    """
    spec = ev.spec
    n = spec.check_level(n)
    witness = check_witness(spec, n, witness)
    f = f or Constant(1.0)
    if diffeo.is_zero:
        return _zero_residual(t_step=0.0)
    t_step = default_t_step(diffeo) if t_step is None else float(t_step)
    _check_t_step(diffeo, t_step)
    derivative = richardson_derivative(lambda t: pulled_back_pairing(ev, n, diffeo, f, t, witness), t_step)
    # no relative bar: the value has to stay within the propagated integration error
    return Residual(derivative.value, derivative.error, 0.0, derivative.flagged,
                    {'t_step': t_step, 'pairing_magnitude': derivative.magnitude})


def route_agreement(t_derivative: Residual, localized) -> Residual:
    """The t-derivative against the sum of route A localized values over the moving particles."""
    localized = list(localized)
    total = sum(item.route_a.value for item in localized)
    return Residual(
        t_derivative.value - total,
        t_derivative.error + sum(item.route_a.error for item in localized),
        max([t_derivative.scale] + [item.route_a.scale for item in localized]),
        t_derivative.flagged or any(item.route_a.flagged for item in localized),
        {'t_derivative': t_derivative.value, 'localized_sum': total},
    )


def leibniz_witness(ev: PairingEvaluator, n, diffeo: AdmissibleDiffeo, f: PhaseFunction = None, witness=None,
                    t_step=None):
    """
    Product rule for t -> <u_t, phi_t>: the central difference of the pulled-back pairing against
    the sum of the D_i expansions, and each one-sided part against its own expansion.
    """
    spec = ev.spec
    n = spec.check_level(n)
    witness = check_witness(spec, n, witness)
    f = f or Constant(1.0)
    if diffeo.is_zero:
        return {part: _zero_residual() for part in ('both', 'density', 'function')}
    t_step = default_t_step(diffeo) if t_step is None else float(t_step)
    _check_t_step(diffeo, t_step)

    density = FunctionDensity(f, n)
    moving = range(n, spec.particles)
    density_expansion = combine_results([
        (1.0, pair(ev, apply_D_to_distribution(ShiftOperands(diffeo, i), density), ev.boltzmann, witness))
        for i in moving
    ])
    function_expansion = combine_results([
        (1.0, pair(ev, density, apply_D_to_function(ShiftOperands(diffeo, i), ev.boltzmann), witness))
        for i in moving
    ])
    expansion_scale = max(abs(density_expansion.value), abs(function_expansion.value))

    def compared(derivative, expansion, scale):
        return Residual(
            derivative.value - expansion.value,
            derivative.error + expansion.error,
            max(scale, abs(derivative.value)),
            derivative.flagged or expansion.flagged,
            {'finite_difference': derivative.value, 'expansion': expansion.value},
        )

    both = richardson_derivative(lambda t: pulled_back_pairing(ev, n, diffeo, f, t, witness), t_step)
    density_only = richardson_derivative(
        lambda t: pulled_back_pairing(ev, n, diffeo, f, t, witness, move_function=False), t_step,
    )
    function_only = richardson_derivative(
        lambda t: pulled_back_pairing(ev, n, diffeo, f, t, witness, move_density=False), t_step,
    )
    return {
        'both': compared(both, density_expansion + function_expansion, expansion_scale),
        'density': compared(density_only, density_expansion, abs(density_expansion.value)),
        'function': compared(function_only, function_expansion, abs(function_expansion.value)),
    }


def pairing_invariance(ev: PairingEvaluator, n, diffeo: AdmissibleDiffeo, f: PhaseFunction = None, witness=None,
                       fraction=settings.DEFAULT_INVARIANCE_FRACTION) -> Residual:
    """The pairing pulled back by t eps with t sup |eps'| = fraction against the plain pairing."""
    spec = ev.spec
    n = spec.check_level(n)
    witness = check_witness(spec, n, witness)
    f = f or Constant(1.0)
    if diffeo.is_zero:
        return _zero_residual()
    t = fraction / diffeo.sup_jacobian_norm
    _check_t_step(diffeo, t)
    moved = pulled_back_pairing(ev, n, diffeo, f, t, witness)
    plain = pair(ev, FunctionDensity(f, n), ev.boltzmann, witness)
    return Residual(
        moved.value - plain.value, moved.error + plain.error, max(abs(moved.value), abs(plain.value)),
        moved.flagged or plain.flagged, {'t': t, 'pulled_back': moved.value, 'plain': plain.value},
    )


class BbgkyResult(NamedTuple):
    residual: Residual
    momentum_check: Residual


def _replaced(array, k, row):
    array = np.array(array, dtype=float, copy=True)
    array[k] = row
    return array


def _hierarchy_coupling(ev: PairingEvaluator, n, k, point) -> IntegrationResult:
    """N!/(N-n-1)! times the integral of grad u(r_k, r_n) . grad_{p_k} B over particles n..N-1."""
    spec, model, boltzmann = ev.spec, ev.model, ev.boltzmann
    prefactor = math.factorial(spec.particles) / math.factorial(spec.particles - n - 1)

    def integrand(positions, momenta):
        weight = boltzmann(positions, momenta)
        gradient = model.pair_gradient(spec, positions, k, partners=[n])
        with np.errstate(invalid='ignore', over='ignore'):
            coupling = np.sum(gradient * boltzmann.grad_p(positions, momenta, k), axis=-1)
        return np.where(weight > 0, coupling, 0.0)

    moving = list(range(n, spec.particles))
    return ev.integrate(integrand, ev.base(point), free_positions=moving, free_momenta=moving).scaled(prefactor)


def bbgky_residual(ev: PairingEvaluator, n, k, point) -> BbgkyResult:
    """
    Equilibrium hierarchy at level n for fixed particle k < n:

        (p_k/m_k . grad_{r_k} - F_k . grad_{p_k}) phi^[n] = N!/(N-n-1)! int grad u(r_k, r_n) . grad_{p_k} B

    where F_k is the external plus pair force gradient from the other fixed particles. Both
    derivatives of phi^[n] are Richardson central differences; the momentum one is cross-checked
    against -(beta/m_k) p_k phi^[n].
    """
    spec, model = ev.spec, ev.model
    n = spec.check_level(n)
    if n < 1:
        raise ValueError('The hierarchy is stated for levels n >= 1, got 0.')
    k = spec.check_particle(k)
    if k >= n:
        raise IndexError('Particle {} is not fixed at level {}.'.format(k, n))
    positions = np.asarray(point[0], dtype=float).reshape(n, spec.dimension)
    momenta = np.asarray(point[1], dtype=float).reshape(n, spec.dimension)

    value = reduced_distribution(ev, n, (positions, momenta))
    position_gradient = richardson_gradient(
        lambda r: reduced_distribution(ev, n, (_replaced(positions, k, r), momenta)), positions[k],
    )
    momentum_gradient = richardson_gradient(
        lambda p: reduced_distribution(ev, n, (positions, _replaced(momenta, k, p))), momenta[k],
    )

    velocity = momenta[k] / spec.masses[k]
    shortcut = -spec.beta * velocity * value.value
    momentum_check = Residual(
        momentum_gradient.value - shortcut,
        momentum_gradient.error + spec.beta * norm(velocity) * value.error,
        max(norm(momentum_gradient.value), norm(shortcut)),
        momentum_gradient.flagged or value.flagged,
        {'finite_difference': momentum_gradient.value, 'shortcut': shortcut},
    )

    base_positions = ev.base((positions, momenta))[0]
    force = model.external_gradient(base_positions, k) + model.pair_gradient(
        spec, base_positions, k, partners=[j for j in range(n) if j != k],
    )
    streaming = float(velocity @ position_gradient.value)
    forcing = float(force @ momentum_gradient.value)
    coupling = _hierarchy_coupling(ev, n, k, (positions, momenta))
    lhs = streaming - forcing
    residual = Residual(
        lhs - coupling.value,
        norm(velocity) * position_gradient.error + norm(force) * momentum_gradient.error + coupling.error,
        max(abs(streaming), abs(forcing), abs(coupling.value)),
        position_gradient.flagged or momentum_gradient.flagged or coupling.flagged,
        {'lhs': lhs, 'rhs': coupling.value, 'terms': {'streaming': streaming, 'forcing': forcing,
                                                     'coupling': coupling.value}},
    )
    return BbgkyResult(residual, momentum_check)


def _density_coupling(ev: PairingEvaluator, r) -> IntegrationResult:
    """N(N-1)/Z_conf times the integral of grad_{r_0} u(r, r_1) exp(-beta U) over r_1..r_{N-1}."""
    spec, model = ev.spec, ev.model

    def integrand(positions, momenta):
        weight = configurational_weight(model, spec, positions)
        gradient = model.pair_gradient(spec, positions, 0, partners=[1])
        with np.errstate(invalid='ignore', over='ignore'):
            return np.where(weight[..., None] > 0, gradient * weight[..., None], 0.0)

    base = ev.base((np.reshape(r, (1, spec.dimension)), np.zeros((1, spec.dimension))))
    result = ev.integrate(integrand, base, free_positions=range(1, spec.particles))
    return normalize_result(result.scaled(spec.particles * (spec.particles - 1)), ev.configurational_partition)


def bbgky_density_residual(ev: PairingEvaluator, r) -> Residual:
    """First hierarchy equation in density form: k_B T grad rho1 + rho1 grad u_ext + int grad u rho2."""
    spec, model = ev.spec, ev.model
    if spec.particles < 2:
        raise ValueError('The density form of the hierarchy needs N >= 2.')
    r = np.asarray(r, dtype=float).reshape(spec.dimension)
    density = reduced_density(ev, 1, r[None])
    gradient = richardson_gradient(lambda x: reduced_density(ev, 1, x[None]), r)
    external_gradient = model.external.gradient(r)
    coupling = _density_coupling(ev, r)
    terms = {
        'thermal': gradient.value / spec.beta,
        'external': external_gradient * density.value,
        'interaction': np.asarray(coupling.value, dtype=float),
    }
    return Residual(
        terms['thermal'] + terms['external'] + terms['interaction'],
        gradient.error / spec.beta + norm(external_gradient) * density.error + coupling.error,
        max(norm(term) for term in terms.values()),
        gradient.flagged or density.flagged or coupling.flagged,
        {'terms': dict(terms, density=density.value)},
    )


def _harmonic_parameters(model: HamiltonianModel, spec: SystemSpec):
    external = model.external
    if spec.periodic or not isinstance(external, HarmonicExternal):
        return None
    center = np.zeros(spec.dimension) if external.center is None else np.broadcast_to(
        external.center, (spec.dimension,))
    return center, external.k


def harmonic_pair_density_oracle(model: HamiltonianModel, spec: SystemSpec, r):
    """
    Closed-form terms of the density hierarchy for two particles with harmonic pair and harmonic
    external potentials: per axis the pair is Gaussian with precision beta [[ke+kp, -kp], [-kp, ke+kp]].
    """
    parameters = _harmonic_parameters(model, spec)
    if parameters is None or spec.particles != 2 or not isinstance(model.pair, HarmonicPair):
        return None
    center, external_k = parameters
    pair_k = model.pair.k
    variance = (external_k + pair_k) / (spec.beta * external_k * (external_k + 2.0 * pair_k))
    displacement = np.asarray(r, dtype=float) - center
    density = 2.0 * (2.0 * math.pi * variance) ** (-0.5 * spec.dimension) * math.exp(
        -0.5 * float(displacement @ displacement) / variance)
    return {
        'thermal': -displacement / (spec.beta * variance) * density,
        'external': external_k * displacement * density,
        'interaction': pair_k * external_k / (external_k + pair_k) * displacement * density,
        'density': density,
    }


def harmonic_force_balance_oracle(model: HamiltonianModel, spec: SystemSpec, r):
    """Closed-form force balance terms for one particle in a harmonic trap."""
    parameters = _harmonic_parameters(model, spec)
    if parameters is None or spec.particles != 1:
        return None
    center, stiffness = parameters
    displacement = np.asarray(r, dtype=float) - center
    density = (spec.beta * stiffness / (2.0 * math.pi)) ** (0.5 * spec.dimension) * math.exp(
        -0.5 * spec.beta * stiffness * float(displacement @ displacement))
    return {
        'thermal': stiffness * displacement * density,
        'interaction': np.zeros(spec.dimension),
        'external': -stiffness * displacement * density,
        'density': density,
    }


def _pair_force_function(ev: PairingEvaluator, i):
    boltzmann = ev.boltzmann
    return CallableFunction(lambda positions, momenta: boltzmann.split_weighted_gradient(positions, momenta, i)[0])


def _summed_g_terms(ev: PairingEvaluator, r, f):
    return [g_terms(ev, i, 0, r, None, f) for i in range(ev.spec.particles)]


def force_balance_profile(ev: PairingEvaluator, r, f: PhaseFunction = None) -> Residual:
    """
    One-body force balance at r. For a constant f the three terms -k_B T grad rho,
    -<sum_i delta(r - r_i) grad_i u_N> and -rho grad u_ext (each normalized by Z); for a general f
    the four G-sum components divided by beta Z.
    """
    spec, model = ev.spec, ev.model
    r = np.asarray(r, dtype=float).reshape(spec.dimension)
    f = f or Constant(1.0)
    if isinstance(f, Constant):
        density = one_body_density(ev, r)
        gradient = richardson_gradient(lambda x: one_body_density(ev, x), r)
        if spec.particles > 1:
            interaction = combine_results([
                (-1.0, pair(ev, DeltaSlice(i, r, 0), _pair_force_function(ev, i), normalize=True))
                for i in range(spec.particles)
            ])
        else:
            interaction = IntegrationResult(np.zeros(spec.dimension), 0.0)
        external_gradient = model.external.gradient(r)
        terms = {
            'thermal': -gradient.value / spec.beta,
            'interaction': np.asarray(interaction.value, dtype=float),
            'external': -density.value * external_gradient,
        }
        errors = {
            'thermal': gradient.error / spec.beta,
            'interaction': interaction.error,
            'external': density.error * norm(external_gradient),
        }
        constant = f.constant
        terms = {name: constant * value for name, value in terms.items()}
        errors = {name: abs(constant) * value for name, value in errors.items()}
        flagged = gradient.flagged or density.flagged or interaction.flagged
        details = {'terms': terms, 'term_errors': errors, 'density': density.value}
        return Residual(sum(terms.values()), sum(errors.values()), max(norm(value) for value in terms.values()),
                        flagged, details)

    summed = _summed_g_terms(ev, r, f)
    components = IntegrationResult(
        np.stack([
            sum(terms.g1 + terms.g2 for terms in summed),
            sum(terms.g4 for terms in summed),
            sum(terms.g3_pair for terms in summed),
            sum(terms.g3_external for terms in summed),
            sum(terms.total for terms in summed),
        ]),
        float(sum(terms.error for terms in summed)),
        any(terms.flagged for terms in summed),
    )
    components = normalize_result(components.scaled(1.0 / spec.beta), ev.partition)
    names = ('sigma', 'kinetic', 'pair_force', 'external_force')
    terms = dict(zip(names, np.asarray(components.value)[:4]))
    return Residual(
        np.asarray(components.value)[4], components.error, max(norm(value) for value in terms.values()),
        components.flagged, {'terms': terms},
    )


class SigmaF(NamedTuple):
    sigma: np.ndarray
    kinetic: np.ndarray
    force_pair: np.ndarray
    force_external: np.ndarray
    g_sum: np.ndarray
    error: float
    flagged: bool = False

    @property
    def force(self):
        return self.force_pair + self.force_external

    @property
    def beta_force(self):
        return self.kinetic + self.force

    @property
    def total(self):
        return self.sigma + self.beta_force

    @property
    def scale(self):
        return max(norm(self.sigma), norm(self.kinetic), norm(self.force))

    def as_dict(self):
        return {
            'sigma': self.sigma.tolist(),
            'beta_F': self.beta_force.tolist(),
            'kinetic': self.kinetic.tolist(),
            'force_pair': self.force_pair.tolist(),
            'force_external': self.force_external.tolist(),
        }


def sigma_F_decomposition(ev: PairingEvaluator, r, f: PhaseFunction = None) -> SigmaF:
    """
    <sigma(r) f> = sum_i (G_i1 + G_i2) and <f beta F(r)> = sum_i (G_i3 + G_i4) at level 0, with the
    kinetic stress part sum_i G_i4 and the force part sum_i G_i3 split into pair and external
    contributions. Values are raw, not divided by beta Z.
    """
    summed = _summed_g_terms(ev, np.asarray(r, dtype=float), f or Constant(1.0))
    return SigmaF(
        sum(terms.g1 + terms.g2 for terms in summed),
        sum(terms.g4 for terms in summed),
        sum(terms.g3_pair for terms in summed),
        sum(terms.g3_external for terms in summed),
        sum(terms.total for terms in summed),
        float(sum(terms.error for terms in summed)),
        any(terms.flagged for terms in summed),
    )


def torus_counterpart(ev: PairingEvaluator):
    """
    A torus evaluator whose cell is the Euclidean truncation box moved to the origin, with the
    harmonic trap moved along. Returns the evaluator and the shift.
    """
    spec, model = ev.spec, ev.model
    if spec.periodic:
        raise BoundaryError('The torus counterpart is built from a Euclidean system.')
    parameters = _harmonic_parameters(model, spec)
    if parameters is None:
        raise IntegrationDomainError('The torus counterpart needs a harmonic external potential.')
    center, stiffness = parameters
    lower, upper = ev.box
    shift = -np.asarray(lower, dtype=float)
    torus_spec = SystemSpec(spec.dimension, spec.particles, spec.masses, spec.beta, Torus(np.diag(upper - lower)))
    torus_model = HamiltonianModel(model.pair, HarmonicExternal(stiffness, center + shift))
    return PairingEvaluator(torus_spec, torus_model, ev.scheme), shift


def euclid_torus_consistency(ev: PairingEvaluator, i, n, r_i, witness=None, f: PhaseFunction = None) -> Residual:
    """The same G_i on the Euclidean system and on a torus cell holding all of its Boltzmann mass."""
    spec = ev.spec
    witness = check_witness(spec, n, witness)
    f = f or Constant(1.0)
    torus_ev, shift = torus_counterpart(ev)
    shifted_witness = PhasePoint(np.reshape(witness[0], (-1, spec.dimension)) + shift, witness[1])
    euclid = g_terms(ev, i, n, r_i, witness, f)
    periodic = g_terms(torus_ev, i, n, np.asarray(r_i, dtype=float) + shift, shifted_witness,
                       TranslatedFunction(f, shift))
    euclid_blocks = np.stack(euclid[:len(G_BLOCKS)])
    periodic_blocks = np.stack(periodic[:len(G_BLOCKS)])
    return Residual(
        (euclid_blocks - periodic_blocks).ravel(), euclid.error + periodic.error,
        max(euclid.scale, periodic.scale), euclid.flagged or periodic.flagged,
        {'euclid': euclid.as_dict(), 'torus': periodic.as_dict(), 'shift': shift},
    )


def _confinement_scale(model: HamiltonianModel, spec: SystemSpec):
    parameters = _harmonic_parameters(model, spec)
    if parameters is None:
        return np.zeros(spec.dimension), 1.0
    center, stiffness = parameters
    return np.asarray(center, dtype=float), 1.0 / math.sqrt(spec.beta * stiffness)


def site_positions(model: HamiltonianModel, spec: SystemSpec, count=settings.DEFAULT_SITE_COUNT):
    """Evaluation sites along the first axis: +-2 sigma around the trap, or fractions 0.1..0.9 of the cell."""
    if spec.periodic:
        fractions = np.full((count, spec.dimension), 0.5)
        fractions[:, 0] = np.linspace(0.1, 0.9, count)
        return spec.boundary.to_cartesian(fractions)
    center, sigma = _confinement_scale(model, spec)
    sites = np.tile(center, (count, 1))
    sites[:, 0] += np.linspace(-2.0 * sigma, 2.0 * sigma, count)
    return sites


def _position_grid(model: HamiltonianModel, spec: SystemSpec):
    if spec.periodic:
        fractions = np.array(list(itertools.product((1.0 / 6.0, 0.5, 5.0 / 6.0), repeat=spec.dimension)))
        return spec.boundary.to_cartesian(fractions)
    center, sigma = _confinement_scale(model, spec)
    offsets = np.array(list(itertools.product((-2.0 * sigma, 0.0, 2.0 * sigma), repeat=spec.dimension)))
    return center + offsets


def witness_points(model: HamiltonianModel, spec: SystemSpec, n, count=settings.DEFAULT_WITNESS_COUNT):
    """
    Evenly spaced picks from the tensor grid of fixed positions and momenta
    ({-1, 0, 1} sqrt(m/beta) per axis), skipping coincident fixed positions.
    """
    n = spec.check_level(n)
    if n == 0:
        return [PhasePoint.empty(spec.dimension)]
    positions = _position_grid(model, spec)
    units = np.array(list(itertools.product((-1.0, 0.0, 1.0), repeat=spec.dimension)))
    placements = [choice for choice in itertools.product(range(len(positions)), repeat=n) if len(set(choice)) == n]
    momentum_combinations = len(units) ** n
    total = len(placements) * momentum_combinations
    picks = np.unique(np.round(np.linspace(0, total - 1, min(count, total))).astype(int))
    thermal = np.sqrt(spec.masses[:n] / spec.beta)[:, None]
    witnesses = []
    for pick in picks:
        placement = placements[pick // momentum_combinations]
        momentum_choice = np.unravel_index(pick % momentum_combinations, (len(units),) * n)
        witnesses.append(PhasePoint(positions[list(placement)], units[list(momentum_choice)] * thermal))
    return witnesses
