import logging
import math

from typing import NamedTuple

import numpy as np

from hyperforce import settings
from hyperforce.hamiltonian import HamiltonianModel
from hyperforce.hamiltonian import hamiltonian_eval
from hyperforce.system import PhasePoint
from hyperforce.system import SystemSpec

logger = logging.getLogger(__name__)


class McSampler(NamedTuple):
    seed: int = settings.DEFAULT_SEED
    samples: int = settings.DEFAULT_MC_SAMPLES
    burn_in: int = settings.DEFAULT_MC_BURN_IN
    chains: int = settings.DEFAULT_MC_CHAINS
    proposal_scale: float = 2.38

    def as_dict(self):
        return dict(self._asdict())


class McResult(NamedTuple):
    mean: object
    stderr: object
    acceptance: float
    warnings: list

    def as_dict(self):
        return {
            'mean': np.asarray(self.mean).tolist(),
            'stderr': np.asarray(self.stderr).tolist(),
            'acceptance': self.acceptance,
            'warnings': list(self.warnings),
        }


def _position_scale(model, spec):
    confinement = model.external.confinement()
    if spec.periodic:
        return spec.boundary.inscribed_radius
    if confinement is not None:
        return 1.0 / math.sqrt(spec.beta * confinement[1])
    return 1.0


def _initial_positions(model, spec, chains):
    """Particles spread along the first axis, away from each other's cores."""
    d, n = spec.dimension, spec.particles
    if spec.periodic:
        fractions = np.full((n, d), 0.5)
        fractions[:, 0] = (np.arange(n) + 0.5) / n
        positions = spec.boundary.to_cartesian(fractions)
    else:
        confinement = model.external.confinement()
        center = np.zeros(d)
        if confinement is not None and confinement[0] is not None:
            center = np.broadcast_to(confinement[0], (d,))
        spacing = max(1.5, 1.5 * _position_scale(model, spec))
        positions = np.tile(center, (n, 1))
        positions[:, 0] += (np.arange(n) - 0.5 * (n - 1)) * spacing
    return np.tile(positions, (chains, 1, 1))


def mc_estimate(g, model: HamiltonianModel, spec: SystemSpec, sampler: McSampler = McSampler()):
    """
    Thermal average <g> = int g exp(-beta H) / int exp(-beta H) from independent Metropolis chains.

    Each step proposes a Gaussian move of the full phase point. The standard error is the
    spread of the per-chain means.
    """
    generator = np.random.default_rng(sampler.seed)
    chains, d, n = sampler.chains, spec.dimension, spec.particles
    dimensions = 2 * n * d
    step = sampler.proposal_scale / math.sqrt(dimensions)
    position_step = step * _position_scale(model, spec)
    momentum_step = step * np.sqrt(spec.masses / spec.beta)[:, None]

    positions = _initial_positions(model, spec, chains)
    momenta = np.zeros_like(positions)
    energy = hamiltonian_eval(model, spec, PhasePoint(positions, momenta))
    totals = None
    accepted = 0
    for iteration in range(sampler.burn_in + sampler.samples):
        trial_positions = spec.boundary.wrap(positions + position_step * generator.standard_normal(positions.shape))
        trial_momenta = momenta + momentum_step * generator.standard_normal(momenta.shape)
        trial_energy = hamiltonian_eval(model, spec, PhasePoint(trial_positions, trial_momenta))
        with np.errstate(invalid='ignore'):
            accept = np.log(generator.uniform(size=chains)) < -spec.beta * (trial_energy - energy)
        positions = np.where(accept[:, None, None], trial_positions, positions)
        momenta = np.where(accept[:, None, None], trial_momenta, momenta)
        energy = np.where(accept, trial_energy, energy)
        if iteration < sampler.burn_in:
            continue
        accepted += int(np.count_nonzero(accept))
        values = np.asarray(g(positions, momenta), dtype=float)
        totals = values if totals is None else totals + values

    chain_means = totals / sampler.samples
    mean = np.mean(chain_means, axis=0)
    stderr = np.std(chain_means, axis=0, ddof=1) / math.sqrt(chains) if chains > 1 else np.full_like(mean, np.inf)
    acceptance = accepted / float(chains * sampler.samples)
    warnings = []
    low, high = settings.DEFAULT_MC_ACCEPTANCE_WINDOW
    if not low <= acceptance <= high:
        warnings.append('acceptance rate {:.3f} outside [{}, {}]'.format(acceptance, low, high))
        logger.warning('Metropolis acceptance rate {:.3f} is outside [{}, {}]'.format(acceptance, low, high))
    if np.ndim(mean) == 0:
        mean, stderr = float(mean), float(stderr)
    return McResult(mean, stderr, acceptance, warnings)
