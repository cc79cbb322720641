"""
Named checks a scenario can request.

Every check expands into independent tasks, one per (level, witness, particle, site, observable)
combination it covers. The dispatcher runs the tasks on a thread pool and assembles their
records in scenario order.
"""
import abc
import concurrent.futures
import logging

import numpy as np

from cached_property import cached_property

from hyperforce import settings
from hyperforce.calculus import brute_force_ps
from hyperforce.calculus import enumerate_ps
from hyperforce.calculus import envelope_check
from hyperforce.calculus import faa_di_bruno
from hyperforce.calculus import faa_di_bruno_catalog
from hyperforce.calculus import nested_central_difference
from hyperforce.diffeo import AdmissibleDiffeo
from hyperforce.diffeo import LiftedMap
from hyperforce.diffeo import compose_fields
from hyperforce.diffeo import gamma_equivariance_check
from hyperforce.diffeo import inverse_field
from hyperforce.diffeo import lift_jacobian_det
from hyperforce.diffeo import pullback_density
from hyperforce.distributions import FunctionDensity
from hyperforce.distributions import normalize_result
from hyperforce.distributions import pair
from hyperforce.exceptions import HyperforceException
from hyperforce.fields import BumpField
from hyperforce.montecarlo import mc_estimate
from hyperforce.observables import Constant
from hyperforce.potentials import HarmonicExternal
from hyperforce.quadrature import IntegrationResult
from hyperforce.report import SumRuleReport
from hyperforce.report import Tolerances
from hyperforce.report import failure_record
from hyperforce.report import make_record
from hyperforce.report import norm
from hyperforce.report import skip_record
from hyperforce.report import witness_dict
from hyperforce.sumrules import Residual
from hyperforce.sumrules import bbgky_density_residual
from hyperforce.sumrules import bbgky_residual
from hyperforce.sumrules import euclid_torus_consistency
from hyperforce.sumrules import force_balance_profile
from hyperforce.sumrules import g_i
from hyperforce.sumrules import g_term_records
from hyperforce.sumrules import harmonic_force_balance_oracle
from hyperforce.sumrules import harmonic_pair_density_oracle
from hyperforce.sumrules import hyperforce_t_derivative
from hyperforce.sumrules import leibniz_witness
from hyperforce.sumrules import localized_hyperforce
from hyperforce.sumrules import pairing_invariance
from hyperforce.sumrules import site_positions
from hyperforce.sumrules import route_agreement
from hyperforce.sumrules import sigma_F_decomposition
from hyperforce.sumrules import witness_points
from hyperforce.system import PhasePoint

logger = logging.getLogger(__name__)

TOLERANCE_SEMANTICS = (
    'A record passes when |value| <= max(tol_abs, tol_rel * scale, 3 * error), where scale is the largest '
    'constituent term and error the propagated integration error. It is degenerate when every term is '
    'below tol_abs, skipped when the check does not apply, and fails otherwise.'
)

FAA_DI_BRUNO_TOLERANCES = Tolerances(tol_abs=1e-8, tol_rel=1e-5)
GEOMETRY_TOLERANCES = Tolerances(tol_abs=settings.DEFAULT_GEOMETRY_TOL_ABS, tol_rel=0.0)
EQUIVARIANCE_TOLERANCES = Tolerances(tol_abs=settings.DEFAULT_EQUIVARIANCE_TOL_ABS, tol_rel=0.0)
PS_GRID = [
    ((1,), (1,)), ((2,), (1,)), ((2,), (2,)), ((3,), (2,)), ((3,), (1, 1)),
    ((1, 1), (1,)), ((1, 1), (2,)), ((2, 1), (1, 1)), ((2, 1), (2,)), ((1, 2), (1, 2)),
]
PHASE_SAMPLE_COUNT = 8
EQUIVARIANCE_SAMPLES = 50


def _guarded(check, label, task):
    try:
        return task()
    except HyperforceException as error:
        logger.error('{} [{}] failed: {}'.format(check, label, error))
        return [failure_record(check, label, '{}: {}'.format(type(error).__name__, error))]


class BaseCheck:
    name = None

    def __init__(self, scenario):
        self.scenario = scenario

    @abc.abstractmethod
    def tasks(self):
        """Yields (label, task) pairs; each task returns a list of CheckRecord."""
        raise NotImplementedError

    @cached_property
    def ev(self):
        return self.scenario.evaluator

    @property
    def spec(self):
        return self.scenario.spec

    @property
    def model(self):
        return self.scenario.model

    @property
    def tolerances(self):
        return self.scenario.tolerances

    @cached_property
    def sites(self):
        return site_positions(self.model, self.spec, self.scenario.site_count)

    def witnesses(self, n):
        return witness_points(self.model, self.spec, n, self.scenario.witness_count)

    def observables(self):
        return enumerate(self.scenario.observables)

    def skip(self, reason):
        yield 'skipped', lambda: [skip_record(self.name, 'skipped', reason)]

    def record(self, residual: Residual, label, witness=None, tolerances=None):
        return residual.record(self.name, label, witness, tolerances or self.tolerances)


class GCheck(BaseCheck):
    def points(self):
        for n in self.scenario.levels:
            for w, witness in enumerate(self.witnesses(n)):
                for i in range(n, self.spec.particles):
                    for p, r in enumerate(self.sites):
                        for index, f in self.observables():
                            yield 'f{} n{} w{} i{} r{}'.format(index, n, w, i, p), n, witness, i, r, f


class GTermsCheck(GCheck):
    """
    The four G terms of particle i at level n, pinned at each evaluation site: the integrals of
    (grad_r f) B, the momentum-weighted Jacobian of (grad_p f) B, f grad_r B and
    -beta (p p^T / m) grad_r(f B). Terms with a closed form (constant f, ideal gas, one trapped
    particle) are compared to it; the others are recorded.
    """
    name = 'g_terms'

    def tasks(self):
        for label, n, witness, i, r, f in self.points():
            yield label, lambda n=n, witness=witness, i=i, r=r, f=f, label=label: g_term_records(
                self.ev, i, n, r, witness, f, self.tolerances, label,
            )


class GVanishCheck(GCheck):
    """
    G1 + G2 + G3 + G4 = 0 at every pinned position r_i: integrating out the remaining phase
    variables leaves no force on a single particle in equilibrium.
    """
    name = 'g_vanish'

    def tasks(self):
        for label, n, witness, i, r, f in self.points():
            yield label, lambda n=n, witness=witness, i=i, r=r, f=f, label=label: [
                g_i(self.ev, i, n, r, witness, f, self.tolerances, label, check=self.name),
            ]


class DiffeoCheck(BaseCheck):
    @property
    def diffeo(self):
        return self.scenario.diffeo

    def tasks(self):
        if self.diffeo is None:
            yield from self.skip('scenario has no field')
        else:
            yield from self.field_tasks()

    @abc.abstractmethod
    def field_tasks(self):
        raise NotImplementedError


class LocalizedHyperforceCheck(DiffeoCheck):
    """
    Localized hyperforce sum rule <D_i(eps) f, B> + <f, D_i(eps) B> = 0, computed twice: from the
    shifted pairings (route A) and as the integral of eps(r_i) . G_i(r_i) (route B). Both routes
    vanish and agree with each other.
    """
    name = 'localized_hyperforce'

    def field_tasks(self):
        for n in self.scenario.levels:
            for w, witness in enumerate(self.witnesses(n)):
                for i in range(n, self.spec.particles):
                    for index, f in self.observables():
                        label = 'f{} n{} w{} i{}'.format(index, n, w, i)
                        yield label, lambda n=n, witness=witness, i=i, f=f, label=label: self.localized(
                            n, witness, i, f, label,
                        )

    def localized(self, n, witness, i, f, label):
        result = localized_hyperforce(self.ev, i, n, self.diffeo, f, witness)
        witness = witness_dict(witness)
        return [
            self.record(result.route_a, '{} route A'.format(label), witness),
            self.record(result.route_b, '{} route B'.format(label), witness),
            self.record(result.agreement, '{} agreement'.format(label), witness),
        ]


class TDerivativeCheck(DiffeoCheck):
    """
    d/dt <(t eps)^* f, (t eps)^* B> at t = 0, by central differences at +-t and +-t/2 with one
    Richardson step. The pairing is invariant, so the derivative vanishes; it also equals the
    sum of the localized route A values over the moving particles.
    """
    name = 't_derivative'

    def field_tasks(self):
        for n in self.scenario.levels:
            for w, witness in enumerate(self.witnesses(n)):
                for index, f in self.observables():
                    label = 'f{} n{} w{}'.format(index, n, w)
                    yield label, lambda n=n, witness=witness, f=f, label=label: self.derivative(n, witness, f, label)

    def derivative(self, n, witness, f, label):
        derivative = hyperforce_t_derivative(self.ev, n, self.diffeo, f, witness)
        localized = [
            localized_hyperforce(self.ev, i, n, self.diffeo, f, witness) for i in range(n, self.spec.particles)
        ]
        witness = witness_dict(witness)
        return [
            self.record(derivative, label, witness),
            self.record(route_agreement(derivative, localized), '{} vs localized'.format(label), witness),
        ]


def _term_comparisons(check, label, terms, expected, errors, tolerances, witness=None):
    records = []
    for name, value in expected.items():
        value = np.asarray(value, dtype=float)
        computed = np.asarray(terms[name], dtype=float)
        records.append(make_record(
            check, '{} {} closed form'.format(label, name), computed - value, errors[name],
            max(norm(computed), norm(value)), witness=witness,
            details={'computed': computed, 'expected': value}, tolerances=tolerances,
        ))
    return records


class BbgkyCheck(BaseCheck):
    """
    Equilibrium hierarchy for the reduced distributions phi^[n]: the streaming and forcing
    derivatives of phi^[n] in the fixed particle k balance the coupling integral over particle n.
    Also the n = 1 density form k_B T grad rho1 + rho1 grad u_ext + int grad u rho2 = 0, compared
    term by term to the Gaussian closed form for two harmonically bound particles.
    """
    name = 'bbgky'

    def levels(self):
        levels = [n for n in self.scenario.levels if n >= 1]
        return levels or [1]

    def tasks(self):
        if self.spec.particles < 2:
            yield from self.skip('the hierarchy couples at least two particles')
            return
        for n in self.levels():
            for w, witness in enumerate(self.witnesses(n)):
                for k in range(n):
                    label = 'n{} w{} k{}'.format(n, w, k)
                    yield label, lambda n=n, witness=witness, k=k, label=label: self.hierarchy(n, witness, k, label)
        for p, r in enumerate(self.sites):
            label = 'density r{}'.format(p)
            yield label, lambda r=r, label=label: self.density(r, label)

    def hierarchy(self, n, witness, k, label):
        result = bbgky_residual(self.ev, n, k, witness)
        witness = witness_dict(witness)
        return [
            self.record(result.residual, label, witness),
            self.record(result.momentum_check, '{} momentum'.format(label), witness),
        ]

    def density(self, r, label):
        residual = bbgky_density_residual(self.ev, r)
        witness = witness_dict(r=r)
        records = [self.record(residual, label, witness)]
        expected = harmonic_pair_density_oracle(self.model, self.spec, r)
        if expected is not None:
            terms = residual.details['terms']
            errors = {name: residual.error for name in expected}
            records += _term_comparisons(self.name, label, terms, expected, errors, self.tolerances, witness)
        return records


def force_balance_oracle(model, spec, r):
    """Closed-form force balance terms: one trapped particle, or a harmonically bound trapped pair."""
    expected = harmonic_force_balance_oracle(model, spec, r)
    if expected is not None:
        return expected
    density_form = harmonic_pair_density_oracle(model, spec, r)
    if density_form is None:
        return None
    expected = {name: -value for name, value in density_form.items() if name != 'density'}
    expected['density'] = density_form['density']
    return expected


class ForceBalanceCheck(BaseCheck):
    """
    One-body force balance at each site r. For f = 1 the thermal term -k_B T grad rho, the
    interparticle force density and the external force density -rho grad u_ext add up to zero;
    for a general f the sum of the stress, kinetic, pair force and external force components
    (the G sums over all particles divided by beta Z) vanishes.
    """
    name = 'force_balance'

    def tasks(self):
        for p, r in enumerate(self.sites):
            for index, f in self.observables():
                label = 'f{} r{}'.format(index, p)
                yield label, lambda r=r, f=f, label=label: self.balance(r, f, label)

    def balance(self, r, f, label):
        residual = force_balance_profile(self.ev, r, f)
        witness = witness_dict(r=r)
        records = [self.record(residual, label, witness)]
        expected = force_balance_oracle(self.model, self.spec, r)
        if expected is not None and isinstance(f, Constant):
            details = residual.details
            terms = dict(details['terms'], density=details['density'])
            errors = dict(details['term_errors'], density=details['term_errors']['external'])
            expected = {name: f.constant * value if name != 'density' else value for name, value in expected.items()}
            records += _term_comparisons(self.name, label, terms, expected, errors, self.tolerances, witness)
        return records


class SigmaFCheck(BaseCheck):
    """
    Split of the summed G terms into the stress part <sigma f> = sum (G1 + G2) and the force part
    <f beta F> = sum (G3 + G4), with G4 the kinetic stress and G3 split into interparticle and
    external forces. The parts add up to zero, the regrouping is exact to rounding, and for f = 1
    the stress part vanishes identically while the kinetic and force parts reproduce the force
    balance terms.
    """
    name = 'sigma_F'

    def tasks(self):
        for p, r in enumerate(self.sites):
            for index, f in self.observables():
                label = 'f{} r{}'.format(index, p)
                yield label, lambda r=r, f=f, label=label: self.decomposition(r, f, label)

    def decomposition(self, r, f, label):
        parts = sigma_F_decomposition(self.ev, r, f)
        witness = witness_dict(r=r)
        details = parts.as_dict()
        regrouping = Tolerances(settings.DEFAULT_REGROUPING_TOL, settings.DEFAULT_REGROUPING_TOL, 0.0)
        records = [
            make_record(self.name, label, parts.total, parts.error, parts.scale, witness=witness,
                        flagged=parts.flagged, details=details, tolerances=self.tolerances),
            make_record(self.name, '{} regrouping'.format(label), parts.total - parts.g_sum, 0.0,
                        max(parts.scale, norm(parts.g_sum)), witness=witness, tolerances=regrouping),
        ]
        if not isinstance(f, Constant):
            return records
        records.append(make_record(
            self.name, '{} stress'.format(label), parts.sigma, 0.0, parts.scale, witness=witness,
            tolerances=self.tolerances,
        ))
        beta, partition = self.spec.beta, self.ev.partition
        kinetic = normalize_result(IntegrationResult(parts.kinetic / beta, parts.error / beta), partition)
        force = normalize_result(IntegrationResult(parts.force / beta, parts.error / beta), partition)
        balance = force_balance_profile(self.ev, r, f)
        terms, errors = balance.details['terms'], balance.details['term_errors']
        thermal = np.asarray(terms['thermal'])
        forces = np.asarray(terms['interaction']) + np.asarray(terms['external'])
        records += [
            make_record(
                self.name, '{} kinetic vs thermal'.format(label), kinetic.value - thermal,
                kinetic.error + errors['thermal'], max(norm(kinetic.value), norm(thermal)), witness=witness,
                flagged=kinetic.flagged or balance.flagged, tolerances=self.tolerances,
            ),
            make_record(
                self.name, '{} force vs force densities'.format(label), force.value - forces,
                force.error + errors['interaction'] + errors['external'], max(norm(force.value), norm(forces)),
                witness=witness, flagged=force.flagged or balance.flagged, tolerances=self.tolerances,
            ),
        ]
        return records


def phase_samples(model, spec, count, seed):
    """Seeded phase points: Gaussian around the trap, or uniform in the cell, with thermal momenta."""
    generator = np.random.default_rng(seed)
    shape = (count, spec.particles, spec.dimension)
    if spec.periodic:
        positions = spec.boundary.to_cartesian(generator.uniform(size=shape))
    else:
        confinement = model.external.confinement()
        center, stiffness = confinement if confinement is not None else (None, 1.0)
        center = np.zeros(spec.dimension) if center is None else np.broadcast_to(center, (spec.dimension,))
        positions = center + generator.standard_normal(shape) / np.sqrt(spec.beta * stiffness)
    momenta = generator.standard_normal(shape) * np.sqrt(spec.masses / spec.beta)[:, None]
    return [PhasePoint(positions[s], momenta[s]) for s in range(count)]


class InvariantSuiteCheck(BaseCheck):
    """
    Structural invariants behind the sum rules: invariance of the pairing under a finite
    pull-back, the product rule for the pulled-back pairing, unit Jacobian determinant of the lift,
    the group law with the inverse field in both orders, associativity of composition, pull-back along
    composed fields, lattice equivariance on the torus, agreement of Euclidean and torus G terms for
    trapped systems, and a Monte Carlo cross-check of the quadrature averages.
    """
    name = 'invariant_suite'

    @property
    def diffeo(self):
        return self.scenario.diffeo

    @cached_property
    def samples(self):
        return phase_samples(self.model, self.spec, PHASE_SAMPLE_COUNT, self.scenario.sampler.seed)

    def tasks(self):
        if self.diffeo is not None and not self.diffeo.is_zero:
            for n in self.scenario.levels:
                witness = self.witnesses(n)[0]
                for index, f in self.observables():
                    label = 'f{} n{}'.format(index, n)
                    yield 'invariance ' + label, lambda n=n, witness=witness, f=f, label=label: [self.record(
                        pairing_invariance(self.ev, n, self.diffeo, f, witness),
                        'pairing invariance {}'.format(label), witness_dict(witness),
                    )]
                    yield 'leibniz ' + label, lambda n=n, witness=witness, f=f, label=label: self.leibniz(
                        n, witness, f, label,
                    )
                yield 'lift n{}'.format(n), lambda n=n: self.lift_determinant(n)
                yield 'group law n{}'.format(n), lambda n=n: self.group_law(n)
                yield 'associativity n{}'.format(n), lambda n=n: self.associativity(n)
                yield 'composition n{}'.format(n), lambda n=n: self.pullback_composition(n)
                if self.spec.periodic:
                    yield 'equivariance n{}'.format(n), lambda n=n: self.equivariance(n)
        if not self.spec.periodic and isinstance(self.model.external, HarmonicExternal):
            for n in self.scenario.levels:
                witness = self.witnesses(n)[0]
                for index, f in self.observables():
                    label = 'f{} n{}'.format(index, n)
                    yield 'torus ' + label, lambda n=n, witness=witness, f=f, label=label: self.torus(
                        n, witness, f, label,
                    )
        for index, f in self.observables():
            label = 'f{}'.format(index)
            yield 'monte carlo ' + label, lambda f=f, label=label: self.monte_carlo(f, label)

    def leibniz(self, n, witness, f, label):
        parts = leibniz_witness(self.ev, n, self.diffeo, f, witness)
        witness = witness_dict(witness)
        return [
            self.record(residual, 'leibniz {} {}'.format(part, label), witness)
            for part, residual in parts.items()
        ]

    def lift_determinant(self, n):
        lifted = LiftedMap(self.diffeo, n, self.spec)
        records = []
        for s, sample in enumerate(self.samples):
            fine = lift_jacobian_det(lifted, sample)
            coarse = lift_jacobian_det(lifted, sample, step=10.0 * settings.DEFAULT_GRADIENT_CHECK_STEP)
            block = float(lifted.block_determinant(sample.positions))
            witness = witness_dict(sample)
            records += [
                make_record(self.name, 'lift determinant n{} s{}'.format(n, s), fine - 1.0, abs(fine - coarse),
                            1.0, witness=witness, details={'determinant': fine}, tolerances=GEOMETRY_TOLERANCES),
                make_record(self.name, 'block determinant n{} s{}'.format(n, s), block - 1.0, 0.0, 1.0,
                            witness=witness, details={'determinant': block}, tolerances=GEOMETRY_TOLERANCES),
            ]
        return records

    def _identity_records(self, label, lifted):
        records = []
        for s, sample in enumerate(self.samples):
            positions, momenta = lifted.apply(*sample)
            deviation = np.concatenate([(positions - sample.positions).ravel(), (momenta - sample.momenta).ravel()])
            scale = max(norm(sample.positions), norm(sample.momenta))
            records.append(make_record(
                self.name, '{} s{}'.format(label, s), deviation, settings.DEFAULT_INVERSION_TOL * scale,
                scale, witness=witness_dict(sample), tolerances=GEOMETRY_TOLERANCES,
            ))
        return records

    def group_law(self, n):
        """(Id + eps) o (Id + eps)^{-1} and (Id + eps)^{-1} o (Id + eps) are the identity on phase space."""
        forward = LiftedMap(self.diffeo, n, self.spec)
        backward = LiftedMap(inverse_field(self.diffeo), n, self.spec)
        return (
            self._identity_records('group law n{}'.format(n), forward.compose(backward)) +
            self._identity_records('group law inverse first n{}'.format(n), backward.compose(forward))
        )

    def associativity(self, n):
        """The two bracketings of three composed fields agree, as fields and as lifts."""
        e1, e2, e3 = self.diffeo.scaled(0.3), self.diffeo.scaled(-0.2), self.diffeo.scaled(0.25)
        left = AdmissibleDiffeo(compose_fields(AdmissibleDiffeo(compose_fields(e1, e2)), e3))
        right = AdmissibleDiffeo(compose_fields(e1, AdmissibleDiffeo(compose_fields(e2, e3))))
        positions = np.stack([sample.positions for sample in self.samples])
        momenta = np.stack([sample.momenta for sample in self.samples])
        left_positions, left_momenta = LiftedMap(left, n, self.spec).apply(positions, momenta)
        right_positions, right_momenta = LiftedMap(right, n, self.spec).apply(positions, momenta)
        deviation = np.concatenate([(left_positions - right_positions).ravel(), (left_momenta - right_momenta).ravel()])
        return [make_record(
            self.name, 'associativity n{}'.format(n), deviation, 0.0, max(norm(positions), norm(momenta)),
            details={'samples': len(self.samples)}, tolerances=GEOMETRY_TOLERANCES,
        )]

    def pullback_composition(self, n):
        """Pulling back by two lifts in turn equals pulling back by the lift of the composed field."""
        first, second = self.diffeo.scaled(0.4), self.diffeo.scaled(-0.3)
        composed_field = AdmissibleDiffeo(compose_fields(first, second))
        in_turn = pullback_density(self.ev.boltzmann, LiftedMap(second, n, self.spec).compose(
            LiftedMap(first, n, self.spec)))
        at_once = pullback_density(self.ev.boltzmann, LiftedMap(composed_field, n, self.spec))
        positions = np.stack([sample.positions for sample in self.samples])
        momenta = np.stack([sample.momenta for sample in self.samples])
        expected = np.asarray(at_once(positions, momenta), dtype=float)
        computed = np.asarray(in_turn(positions, momenta), dtype=float)
        return [make_record(
            self.name, 'pullback composition n{}'.format(n), computed - expected, 0.0,
            max(norm(computed), norm(expected)), tolerances=self.tolerances,
        )]

    def equivariance(self, n):
        report = gamma_equivariance_check(
            LiftedMap(self.diffeo, n, self.spec), samples=EQUIVARIANCE_SAMPLES, seed=self.scenario.sampler.seed,
        )
        scale = float(np.max(np.linalg.norm(self.spec.boundary.basis, axis=-1)))
        return [make_record(
            self.name, 'lattice equivariance n{}'.format(n), report.max_deviation, 0.0, scale,
            details=report.as_dict(), tolerances=EQUIVARIANCE_TOLERANCES,
        )]

    def torus(self, n, witness, f, label):
        site = self.sites[len(self.sites) // 2]
        residual = euclid_torus_consistency(self.ev, n, n, site, witness, f)
        return [self.record(residual, 'euclid torus {}'.format(label), witness_dict(witness, r=site))]

    def monte_carlo(self, f, label):
        estimate = mc_estimate(f, self.model, self.spec, self.scenario.sampler)
        quadrature = pair(self.ev, FunctionDensity(f, 0), self.ev.boltzmann, normalize=True)
        return [make_record(
            self.name, 'monte carlo {}'.format(label), np.asarray(estimate.mean) - quadrature.value,
            float(np.max(estimate.stderr)) + quadrature.error, norm(quadrature.value),
            flagged=quadrature.flagged, tolerances=self.tolerances,
            details=dict(estimate.as_dict(), quadrature=quadrature.value),
        )]


class FaaDiBrunoCheck(BaseCheck):
    """
    Multivariate chain rule D^nu (f o g) against exact values or nested central differences with
    one Richardson step (relative tolerance 1e-5), the p_s enumeration against exhaustive search,
    and the Gaussian envelope of the derivatives of a Gaussian composed with a lift.
    """
    name = 'faadibruno_suite'

    def tasks(self):
        for case in faa_di_bruno_catalog():
            label = '{} nu={}'.format(case.name, case.nu)
            yield label, lambda case=case, label=label: [self.chain_rule(case, label)]
        yield 'p_s enumeration', self.enumeration
        yield 'envelope', self.envelope

    def chain_rule(self, case, label):
        computed = faa_di_bruno(case.f, case.g, case.x0, case.nu)
        if case.expected is not None:
            expected, tolerances = case.expected, self.tolerances
        else:
            expected = nested_central_difference(case.composite, case.x0, case.nu)
            tolerances = FAA_DI_BRUNO_TOLERANCES
        return make_record(
            self.name, label, computed - expected, 0.0, max(abs(computed), abs(expected)),
            details={'computed': computed, 'expected': expected}, tolerances=tolerances,
        )

    def enumeration(self):
        records = []
        for nu, lam in PS_GRID:
            for s in range(1, sum(nu) + 1):
                enumerated = set(enumerate_ps(nu, lam, s))
                exhaustive = brute_force_ps(nu, lam, s)
                mismatches = len(enumerated.symmetric_difference(exhaustive))
                records.append(make_record(
                    self.name, 'p_s nu={} lambda={} s={}'.format(nu, lam, s), float(mismatches), 0.0,
                    float(len(exhaustive)), details={'count': len(exhaustive)}, tolerances=self.tolerances,
                ))
        return records

    def envelope(self):
        field = self.scenario.diffeo.field if self.scenario.diffeo is not None else None
        if not isinstance(field, BumpField):
            d = self.spec.dimension
            field = BumpField(np.zeros(d), 1.5, np.full(d, 0.2))
        report = envelope_check(field)
        if not report.bounded:
            return [failure_record(self.name, 'envelope', '; '.join(report.reasons))]
        return [make_record(
            self.name, 'envelope', 0.0, 0.0, max(report.max_ratios.values()), details=report.as_dict(),
            tolerances=self.tolerances,
        )]


class CheckDispatcher:
    checks = {
        check.name: check for check in (
            GTermsCheck, GVanishCheck, LocalizedHyperforceCheck, TDerivativeCheck, BbgkyCheck,
            ForceBalanceCheck, SigmaFCheck, InvariantSuiteCheck, FaaDiBrunoCheck,
        )
    }

    def __init__(self, scenario, workers=settings.DEFAULT_WORKERS):
        self.scenario = scenario
        self.workers = max(1, int(workers))

    @classmethod
    def available(cls):
        return sorted(cls.checks)

    @classmethod
    def describe(cls, name):
        try:
            check = cls.checks[name]
        except KeyError:
            raise ValueError('Unknown check "{}". Available checks: {}'.format(name, cls.available()))
        provenance = ' '.join(check.__doc__.split())
        return '{}\n\n{}\n\nTolerances: {}'.format(name, provenance, TOLERANCE_SEMANTICS)

    def tasks(self):
        for name in self.scenario.checks:
            for label, task in self.checks[name](self.scenario).tasks():
                yield name, label, task

    def run(self) -> SumRuleReport:
        tasks = list(self.tasks())
        logger.info('Running {} tasks of {} checks on {} workers...'.format(
            len(tasks), len(self.scenario.checks), self.workers,
        ))
        with concurrent.futures.ThreadPoolExecutor(max_workers=self.workers) as executor:
            futures = [executor.submit(_guarded, name, label, task) for name, label, task in tasks]
            records = [record for future in futures for record in future.result()]
        report = SumRuleReport(self.scenario.identifier, records, {
            'scenario': self.scenario.as_dict(),
        })
        counts = report.counts()
        logger.info('Scenario {}: {} records, {} failed'.format(self.scenario.identifier, len(records), counts['fail']))
        return report
