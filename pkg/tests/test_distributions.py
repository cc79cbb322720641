import math

import numpy as np
import pytest

from hyperforce.diffeo import AdmissibleDiffeo
from hyperforce.distributions import AdjointShift
from hyperforce.distributions import DeltaSlice
from hyperforce.distributions import FunctionDensity
from hyperforce.distributions import LinearCombination
from hyperforce.distributions import ShiftOperands
from hyperforce.distributions import apply_D_to_distribution
from hyperforce.distributions import apply_D_to_function
from hyperforce.distributions import check_tempered
from hyperforce.distributions import check_witness
from hyperforce.distributions import one_body_density
from hyperforce.distributions import pair
from hyperforce.distributions import reduced_density
from hyperforce.distributions import reduced_distribution
from hyperforce.exceptions import MissingGradientError
from hyperforce.fields import ZeroField
from hyperforce.observables import CallableFunction
from hyperforce.observables import Constant
from hyperforce.observables import Coordinate
from hyperforce.observables import Kinetic


def test_partition_functions(trap_ev):
    assert trap_ev.partition.value == pytest.approx(2.0 * math.pi, rel=1e-9)
    assert trap_ev.configurational_partition.value == pytest.approx(math.sqrt(2.0 * math.pi), rel=1e-9)


def test_normalized_pairing_of_one(trap_ev):
    result = pair(trap_ev, FunctionDensity(Constant(1.0)), trap_ev.boltzmann, normalize=True)
    assert result.value == pytest.approx(1.0, rel=1e-12)


@pytest.mark.parametrize('r', [0.0, 0.5, -1.3])
def test_one_body_density_of_a_trap(trap_ev, r):
    expected = math.exp(-0.5 * r ** 2) / math.sqrt(2.0 * math.pi)
    assert float(one_body_density(trap_ev, [r]).value) == pytest.approx(expected, rel=1e-9)
    assert float(reduced_density(trap_ev, 1, [[r]]).value) == pytest.approx(expected, rel=1e-9)


def test_full_reduced_distribution_is_the_boltzmann_factor(trap_ev):
    result = reduced_distribution(trap_ev, 1, ([[0.5]], [[-1.0]]))
    assert result.value == pytest.approx(math.exp(-0.5 * (0.25 + 1.0)))
    assert result.error == 0.0


def test_reduced_distribution_integrates_to_the_partition(trap_ev):
    assert reduced_distribution(trap_ev, 0).value == pytest.approx(trap_ev.partition.value)


def test_witness_must_match_the_level(pair_spec):
    with pytest.raises(ValueError):
        check_witness(pair_spec, 1, None)
    with pytest.raises(ValueError):
        check_witness(pair_spec, 0, ([[0.0]], [[0.0]]))
    assert check_witness(pair_spec, 1, ([[0.0]], [[0.0]]))[0] == [[0.0]]


def test_delta_slice_and_linear_combination(trap_ev):
    slice_value = pair(trap_ev, DeltaSlice(0, [0.0]), trap_ev.boltzmann).value
    assert slice_value == pytest.approx(math.sqrt(2.0 * math.pi), rel=1e-12)
    combination = LinearCombination([(2.0, DeltaSlice(0, [0.0])), (-1.0, FunctionDensity(Constant(1.0)))])
    assert pair(trap_ev, combination, trap_ev.boltzmann).value == pytest.approx(
        2.0 * slice_value - 2.0 * math.pi, rel=1e-9)
    with pytest.raises(ValueError):
        LinearCombination([(1.0, DeltaSlice(0, [0.0])), (1.0, FunctionDensity(Constant(1.0), level=1))])


def test_delta_slice_rejects_fixed_particles():
    with pytest.raises(IndexError):
        DeltaSlice(0, [0.0], level=1)


def test_zero_shift_gives_zero(trap_ev):
    operands = ShiftOperands(AdmissibleDiffeo(ZeroField(1)), 0)
    shifted = apply_D_to_distribution(operands, FunctionDensity(Kinetic(0)))
    assert isinstance(shifted.f, Constant)
    assert shifted.f.constant == 0.0
    assert pair(trap_ev, shifted, trap_ev.boltzmann).value == 0.0


def test_adjoint_shift_agrees_with_the_pointwise_shift(trap_ev, bump):
    operands = ShiftOperands(bump, 0)
    density = FunctionDensity(Kinetic(0) * Coordinate('r', 0, 0))
    pointwise = pair(trap_ev, apply_D_to_distribution(operands, density), trap_ev.boltzmann)
    adjoint = pair(trap_ev, AdjointShift(operands, density), trap_ev.boltzmann)
    assert abs(pointwise.value) > 1e-3
    assert adjoint.value == pytest.approx(pointwise.value, rel=1e-7, abs=1e-9)


def test_shift_needs_gradients(bump):
    opaque = CallableFunction(lambda positions, momenta: positions[..., 0, 0], finite_differences=False)
    with pytest.raises(MissingGradientError):
        apply_D_to_function(ShiftOperands(bump, 0), opaque)
    shifted = apply_D_to_distribution(ShiftOperands(bump, 0), FunctionDensity(opaque, bound=(1.0, 1)))
    assert isinstance(shifted, AdjointShift)


def test_temperedness(pair_spec):
    assert check_tempered(FunctionDensity(Kinetic(1)), pair_spec).tempered
    growing = FunctionDensity(CallableFunction(lambda positions, momenta: np.exp(positions[..., 0, 0] ** 2)),
                              bound=(1.0, 4))
    report = check_tempered(growing, pair_spec)
    assert not report.tempered
    assert report.worst_ratio > 1.0
    with pytest.raises(ValueError):
        check_tempered(FunctionDensity(CallableFunction(lambda positions, momenta: positions[..., 0, 0])), pair_spec)
