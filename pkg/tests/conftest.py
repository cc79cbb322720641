import textwrap

import numpy as np
import pytest

from hyperforce.diffeo import AdmissibleDiffeo
from hyperforce.distributions import PairingEvaluator
from hyperforce.fields import BumpField
from hyperforce.fields import FourierField
from hyperforce.hamiltonian import HamiltonianModel
from hyperforce.potentials import HarmonicExternal
from hyperforce.potentials import HarmonicPair
from hyperforce.potentials import WCAPair
from hyperforce.quadrature import QuadratureScheme
from hyperforce.report import Tolerances
from hyperforce.system import SystemSpec
from hyperforce.system import Torus

LIGHT_SCHEME = QuadratureScheme(momentum_order=10, position_order=12)
LOOSE = Tolerances(tol_abs=1e-8, tol_rel=1e-5)


@pytest.fixture
def scheme():
    return LIGHT_SCHEME


@pytest.fixture
def loose():
    return LOOSE


@pytest.fixture
def trap_spec():
    return SystemSpec(1, 1, 1.0, 1.0)


@pytest.fixture
def trap_model():
    return HamiltonianModel(external=HarmonicExternal(k=1.0))


@pytest.fixture
def trap_ev(trap_spec, trap_model, scheme):
    return PairingEvaluator(trap_spec, trap_model, scheme)


@pytest.fixture
def pair_spec():
    return SystemSpec(1, 2, [1.0, 2.0], 1.0)


@pytest.fixture
def pair_model():
    return HamiltonianModel(HarmonicPair(k=0.5), HarmonicExternal(k=1.0))


@pytest.fixture
def pair_ev(pair_spec, pair_model, scheme):
    return PairingEvaluator(pair_spec, pair_model, scheme)


@pytest.fixture
def ring():
    return Torus([[4.0]])


@pytest.fixture
def ring_spec(ring):
    return SystemSpec(1, 2, 1.0, 1.0, ring)


@pytest.fixture
def wca_model():
    return HamiltonianModel(WCAPair(epsilon=1.0, sigma=1.0))


@pytest.fixture
def ideal_ev(ring_spec, scheme):
    return PairingEvaluator(ring_spec, HamiltonianModel(), scheme)


@pytest.fixture
def bump():
    return AdmissibleDiffeo(BumpField([0.3], 1.5, [0.2]))


@pytest.fixture
def fourier(ring):
    return AdmissibleDiffeo(FourierField(ring, [{'wavenumber': [1], 'sin': [0.2]}]))


@pytest.fixture
def random_points():
    generator = np.random.default_rng(7)
    return generator.standard_normal((100, 2, 2)), generator.standard_normal((100, 2, 2))


@pytest.fixture
def scenario_text():
    def build(body=''):
        header = textwrap.dedent("""\
            schema_version: 1
            id: tiny
            description: One trapped particle.
            system:
              dimension: 1
              particles: 1
              beta: 1.0
              boundary:
                kind: euclidean
            potentials:
              external:
                kind: harmonic
                k: 1.0
            quadrature:
              momentum_order: 8
              position_order: 10
            sites: 2
            witnesses: 1
            """)
        return header + textwrap.dedent(body)

    return build
