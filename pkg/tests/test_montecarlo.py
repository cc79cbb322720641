from hyperforce.montecarlo import McSampler
from hyperforce.montecarlo import mc_estimate

SAMPLER = McSampler(seed=5, samples=4000, burn_in=500, chains=16)


def _square(positions, momenta):
    return positions[..., 0, 0] ** 2


def test_trap_position_variance(trap_model, trap_spec):
    result = mc_estimate(_square, trap_model, trap_spec, SAMPLER)
    assert abs(result.mean - 1.0) < max(5.0 * result.stderr, 0.05)
    assert 0.1 <= result.acceptance <= 0.9
    assert result.warnings == []


def test_momentum_variance_follows_the_mass(pair_model, pair_spec):
    result = mc_estimate(lambda positions, momenta: momenta[..., 1, 0] ** 2, pair_model, pair_spec, SAMPLER)
    assert abs(result.mean - 2.0) < max(5.0 * result.stderr, 0.1)


def test_seeded_runs_repeat(trap_model, trap_spec):
    first = mc_estimate(_square, trap_model, trap_spec, SAMPLER._replace(samples=200))
    second = mc_estimate(_square, trap_model, trap_spec, SAMPLER._replace(samples=200))
    assert first.mean == second.mean
    assert first.stderr == second.stderr


def test_poor_acceptance_is_reported(trap_model, trap_spec):
    result = mc_estimate(_square, trap_model, trap_spec, SAMPLER._replace(samples=300, proposal_scale=100.0))
    assert result.acceptance < 0.1
    assert result.warnings
    assert 'acceptance' in result.as_dict()['warnings'][0]
