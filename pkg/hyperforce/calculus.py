"""
Higher-order derivatives of composed maps.

`faa_di_bruno` evaluates D^nu (f o g)(x0) from derivative oracles of f and g with
the multivariate Faa di Bruno formula, summing over the sets `enumerate_ps`.
`nested_central_difference` is the independent finite-difference oracle it is
checked against.
"""
import functools
import itertools
import logging
import math

from typing import NamedTuple

import numpy as np

from scipy.special import comb
from scipy.special import eval_hermitenorm

from hyperforce import settings
from hyperforce.fields import BumpField
from hyperforce.fields import ZeroField
from hyperforce.fields import bump_profile

logger = logging.getLogger(__name__)


class MultiIndex(tuple):
    def __new__(cls, entries=()):
        entries = tuple(int(entry) for entry in entries)
        if any(entry < 0 for entry in entries):
            raise ValueError('Multi-index entries must be non-negative, got {}.'.format(entries))
        return super().__new__(cls, entries)

    @classmethod
    def zero(cls, length):
        return cls((0,) * length)

    @classmethod
    def unit(cls, length, k):
        return cls(1 if j == k else 0 for j in range(length))

    @property
    def degree(self):
        return sum(self)

    @property
    def factorial(self):
        return math.prod(math.factorial(entry) for entry in self)

    def power(self, z):
        """z^self = prod z_k^self_k, with 0^0 = 1."""
        z = np.asarray(z, dtype=float)
        return math.prod(1.0 if entry == 0 else float(z[k]) ** entry for k, entry in enumerate(self))

    def plus(self, other):
        return MultiIndex(a + b for a, b in zip(self, other))

    def minus(self, other):
        return MultiIndex(a - b for a, b in zip(self, other))

    def scaled(self, factor):
        return MultiIndex(factor * entry for entry in self)

    def dominated_by(self, other):
        return all(a <= b for a, b in zip(self, other))

    def __repr__(self):
        return 'MultiIndex{}'.format(tuple(self))


def order_lt(a, b):
    """
    mu < nu iff |nu| < |mu|, or |mu| = |nu| and mu_k < nu_k at the first entry where they differ.

    Under this order the zero index is the largest element of N_0^l.
    """
    if len(a) != len(b):
        raise ValueError('Cannot order multi-indices of lengths {} and {}.'.format(len(a), len(b)))
    a, b = MultiIndex(a), MultiIndex(b)
    if a.degree != b.degree:
        return b.degree < a.degree
    for entry_a, entry_b in zip(a, b):
        if entry_a != entry_b:
            return entry_a < entry_b
    return False


def _compare(a, b):
    if order_lt(a, b):
        return -1
    if order_lt(b, a):
        return 1
    return 0


def bounded_indices(upper):
    """Every multi-index componentwise <= upper, including zero."""
    return [MultiIndex(entries) for entries in itertools.product(*[range(entry + 1) for entry in upper])]


def _satisfies_ps(nu, lam, ks, ls):
    if any(MultiIndex(k).degree == 0 for k in ks) or any(MultiIndex(l).degree == 0 for l in ls):
        return False
    if any(not order_lt(first, second) for first, second in zip(ls, ls[1:])):
        return False
    k_sum = functools.reduce(MultiIndex.plus, ks, MultiIndex.zero(len(lam)))
    l_sum = functools.reduce(MultiIndex.plus, [l.scaled(k.degree) for k, l in zip(ks, ls)], MultiIndex.zero(len(nu)))
    return k_sum == lam and l_sum == nu


@functools.lru_cache(maxsize=None)
def _ps_chains(nu, lam, s, start, candidates):
    """Chains (k_j, l_j), j = 1..s, with l_j taken from candidates[start:] in increasing position."""
    if s == 0:
        return ((),) if nu.degree == 0 and lam.degree == 0 else ()
    chains = []
    for position in range(start, len(candidates)):
        l = candidates[position]
        for k in bounded_indices(lam):
            if k.degree == 0:
                continue
            used = l.scaled(k.degree)
            if not used.dominated_by(nu):
                continue
            for rest in _ps_chains(nu.minus(used), lam.minus(k), s - 1, position + 1, candidates):
                chains.append(((k, l),) + rest)
    return tuple(chains)


@functools.lru_cache(maxsize=None)
def enumerate_ps(nu, lam, s):
    """
    p_s(nu, lam): tuples (k_1..k_s, l_1..l_s) with |k_j| > 0, l_j != 0 increasing under `order_lt`,
    sum k_j = lam and sum |k_j| l_j = nu.
    """
    nu, lam = MultiIndex(nu), MultiIndex(lam)
    if nu.degree < 1:
        raise ValueError('enumerate_ps needs |nu| >= 1, got {}.'.format(nu))
    if s < 1:
        raise ValueError('enumerate_ps needs s >= 1, got {}.'.format(s))
    candidates = tuple(sorted(
        (index for index in bounded_indices(nu) if index.degree > 0),
        key=functools.cmp_to_key(_compare),
    ))
    result = []
    for chain in _ps_chains(nu, lam, s, 0, candidates):
        ks = tuple(k for k, _ in chain)
        ls = tuple(l for _, l in chain)
        if not _satisfies_ps(nu, lam, ks, ls):
            raise ArithmeticError('Enumerated tuple {} / {} violates the p_s constraints.'.format(ks, ls))
        result.append((ks, ls))
    return tuple(result)


def brute_force_ps(nu, lam, s):
    """p_s(nu, lam) by exhaustive search over ordered candidate tuples; a reference for small indices."""
    nu, lam = MultiIndex(nu), MultiIndex(lam)
    candidates = [index for index in bounded_indices(nu) if index.degree > 0]
    multiplicities = [k for k in bounded_indices(lam) if k.degree > 0]
    found = set()
    for ls in itertools.permutations(candidates, s):
        for ks in itertools.product(multiplicities, repeat=s):
            if _satisfies_ps(nu, lam, ks, ls):
                found.add((tuple(ks), tuple(ls)))
    return found


class DerivativeOracle:
    """
    Derivatives of a map R^l -> R^m (or a scalar function) up to `max_order`.

    `derivative(x, index)` returns D^index at a single point; `value(x)` is vectorized
    over leading axes of x.
    """

    def __init__(self, derivative, max_order, value=None, name=None):
        self._derivative = derivative
        self.max_order = max_order
        self._value = value
        self.name = name

    def derivative(self, x, index):
        index = MultiIndex(index)
        if index.degree > self.max_order:
            raise ValueError('{} has derivatives up to order {}, order {} requested.'.format(
                self.name or 'Oracle', self.max_order, index.degree,
            ))
        return self._derivative(np.asarray(x, dtype=float), index)

    def value(self, x):
        if self._value is not None:
            return self._value(np.asarray(x, dtype=float))
        return self.derivative(x, MultiIndex.zero(np.shape(x)[-1]))

    def __repr__(self):
        return 'DerivativeOracle({}, max_order={})'.format(self.name, self.max_order)


def faa_di_bruno(f_oracle: DerivativeOracle, g_oracle: DerivativeOracle, x0, nu):
    """D^nu (f o g)(x0) for f: R^m -> R and g: R^l -> R^m."""
    nu = MultiIndex(nu)
    x0 = np.asarray(x0, dtype=float)
    if len(nu) != x0.shape[-1]:
        raise ValueError('Multi-index {} does not match a point of dimension {}.'.format(nu, x0.shape[-1]))
    if nu.degree < 1:
        raise ValueError('faa_di_bruno needs |nu| >= 1, got {}.'.format(nu))
    y0 = np.atleast_1d(g_oracle.value(x0))
    m = y0.shape[-1]
    g_cache = {}

    def g_derivative(l):
        if l not in g_cache:
            g_cache[l] = np.atleast_1d(g_oracle.derivative(x0, l))
        return g_cache[l]

    total = 0.0
    for degree in range(1, nu.degree + 1):
        for lam in bounded_indices((degree,) * m):
            if lam.degree != degree:
                continue
            inner = 0.0
            for s in range(1, nu.degree + 1):
                for ks, ls in enumerate_ps(nu, lam, s):
                    term = float(nu.factorial)
                    for k, l in zip(ks, ls):
                        term *= k.power(g_derivative(l)) / (k.factorial * float(l.factorial) ** k.degree)
                    inner += term
            if inner != 0.0:
                total += float(np.squeeze(f_oracle.derivative(y0, lam))) * inner
    return total


def _difference_at(func, x0, nu, step):
    x0 = np.asarray(x0, dtype=float)
    offsets, weights = [], []
    per_axis = []
    for order in nu:
        per_axis.append([((order / 2.0 - j) * step, (-1) ** j * comb(order, j, exact=True)) for j in range(order + 1)])
    for combination in itertools.product(*per_axis):
        offsets.append([offset for offset, _ in combination])
        weights.append(math.prod(weight for _, weight in combination))
    values = np.asarray(func(x0 + np.array(offsets)), dtype=float)
    return float(np.dot(np.asarray(weights, dtype=float), values)) / step ** MultiIndex(nu).degree


def nested_central_difference(func, x0, nu, step=1e-2):
    """
    D^nu func(x0) by a tensor central-difference stencil with one Richardson extrapolation step.

    `func` takes points of shape (..., l).
    """
    nu = MultiIndex(nu)
    if nu.degree == 0:
        return float(np.asarray(func(np.asarray(x0, dtype=float)[None, :]))[0])
    coarse = _difference_at(func, x0, nu, step)
    fine = _difference_at(func, x0, nu, step / 2.0)
    return (4.0 * fine - coarse) / 3.0


def exp_oracle(weights, max_order=8):
    """f(y) = exp(w . y)."""
    weights = np.atleast_1d(np.asarray(weights, dtype=float))

    def derivative(y, index):
        return index.power(weights) * np.exp(y @ weights)

    return DerivativeOracle(derivative, max_order, value=lambda y: np.exp(y @ weights), name='exp')


def sin_oracle(weights, max_order=8):
    """f(y) = sin(w . y)."""
    weights = np.atleast_1d(np.asarray(weights, dtype=float))

    def derivative(y, index):
        return index.power(weights) * np.sin(y @ weights + index.degree * math.pi / 2.0)

    return DerivativeOracle(derivative, max_order, value=lambda y: np.sin(y @ weights), name='sin')


def gaussian_oracle(dimension, max_order=8):
    """f(y) = exp(-|y|^2 / 2), derivatives from probabilists' Hermite polynomials."""

    def value(y):
        return np.exp(-0.5 * np.sum(y ** 2, axis=-1))

    def derivative(y, index):
        factor = 1.0
        for k, order in enumerate(index):
            factor *= (-1) ** order * eval_hermitenorm(order, y[..., k])
        return factor * value(y)

    return DerivativeOracle(derivative, max_order, value=value, name='gaussian{}'.format(dimension))


def polynomial_oracle(components):
    """
    Polynomial map from monomial coefficients: a dict {exponents: coefficient} for a scalar
    function, or a list of such dicts for a vector map.
    """
    scalar = isinstance(components, dict)
    terms = [components] if scalar else list(components)
    terms = [{MultiIndex(exponents): float(coefficient) for exponents, coefficient in term.items()} for term in terms]
    max_degree = max((exponents.degree for term in terms for exponents in term), default=0)

    def monomial_derivative(x, exponents, index):
        if not index.dominated_by(exponents):
            return np.zeros(np.shape(x)[:-1])
        remaining = exponents.minus(index)
        factor = exponents.factorial / remaining.factorial
        return factor * np.prod(x ** np.array(remaining), axis=-1)

    def derivative(x, index):
        values = np.stack([
            sum((coefficient * monomial_derivative(x, exponents, index) for exponents, coefficient in term.items()),
                np.zeros(np.shape(x)[:-1]))
            for term in terms
        ], axis=-1)
        return values[..., 0] if scalar else values

    def value(x):
        return derivative(x, MultiIndex.zero(np.shape(x)[-1]))

    return DerivativeOracle(derivative, max_degree + 8, value=value, name='polynomial')


def bump_profile_derivatives(max_order=3):
    """The scalar bump profile h(s) with its closed-form derivatives."""

    def derivative(s, index):
        return bump_profile(s[..., 0], index.degree)

    return DerivativeOracle(derivative, max_order, value=lambda s: bump_profile(s[..., 0]), name='bump_profile')


def bump_field_oracle(field: BumpField):
    """Components of eps(r) = a h(|r - c|^2 / R^2); derivatives up to order 3 via the chain rule."""
    profile = bump_profile_derivatives()
    dimension = field.dimension
    scaled_distance = polynomial_oracle(_scaled_distance_terms(field))

    def derivative(r, index):
        if index.degree == 0:
            return field.value(r)
        return field.amplitude * faa_di_bruno(profile, scaled_distance, r, index)

    oracle = DerivativeOracle(derivative, 3, value=field.value, name='bump{}'.format(dimension))
    return oracle


def _scaled_distance_terms(field):
    """|r - c|^2 / R^2 as monomial coefficients."""
    dimension = field.dimension
    terms = {MultiIndex.zero(dimension): float(np.sum(field.center ** 2)) / field.radius ** 2}
    for k in range(dimension):
        square = MultiIndex.unit(dimension, k).scaled(2)
        linear = MultiIndex.unit(dimension, k)
        terms[square] = terms.get(square, 0.0) + 1.0 / field.radius ** 2
        terms[linear] = terms.get(linear, 0.0) - 2.0 * field.center[k] / field.radius ** 2
    return terms


def lift_derivative_oracle(field):
    """
    Derivatives up to order 2 of the single-particle lift x = (r, p) -> (r + eps(r), (I + eps'(r))^{-1} p)
    on R^{2d}, for bump fields.
    """
    if isinstance(field, ZeroField):
        field = BumpField(np.zeros(field.dimension), 1.0, np.zeros(field.dimension))
    if not isinstance(field, BumpField):
        raise ValueError('Lift derivative oracles are available for bump fields, got "{}".'.format(field.kind))
    d = field.dimension
    eps = bump_field_oracle(field)
    identity = np.eye(d)

    def matrix_derivative(r, positions_index):
        """d^index A with A = I + eps'(r); entry [a, b] is D^(index + e_b) eps_a."""
        columns = [eps.derivative(r, positions_index.plus(MultiIndex.unit(d, b))) for b in range(d)]
        return np.stack(columns, axis=-1)

    def inverse_derivative(r, positions_index):
        matrix = identity + field.jacobian(r)
        inverse = np.linalg.inv(matrix)
        axes = [k for k, order in enumerate(positions_index) for _ in range(order)]
        if not axes:
            return inverse
        if len(axes) == 1:
            d_matrix = matrix_derivative(r, MultiIndex.unit(d, axes[0]))
            return -inverse @ d_matrix @ inverse
        first = matrix_derivative(r, MultiIndex.unit(d, axes[0]))
        second = matrix_derivative(r, MultiIndex.unit(d, axes[1]))
        both = matrix_derivative(r, positions_index)
        return inverse @ (first @ inverse @ second + second @ inverse @ first - both) @ inverse

    def value(x):
        r, p = x[..., :d], x[..., d:]
        matrix = identity + field.jacobian(r)
        return np.concatenate([r + field.value(r), np.linalg.solve(matrix, p[..., None])[..., 0]], axis=-1)

    def derivative(x, index):
        r, p = x[:d], x[d:]
        positions_index, momenta_index = MultiIndex(index[:d]), MultiIndex(index[d:])
        if index.degree == 0:
            return value(x)
        moved = np.zeros(d)
        if momenta_index.degree == 0:
            moved = eps.derivative(r, positions_index)
            if positions_index.degree == 1:
                moved = moved + identity[positions_index.index(1)]
        momenta = np.zeros(d)
        if momenta_index.degree == 0:
            momenta = inverse_derivative(r, positions_index) @ p
        elif momenta_index.degree == 1:
            momenta = inverse_derivative(r, positions_index)[:, momenta_index.index(1)]
        return np.concatenate([moved, momenta])

    return DerivativeOracle(derivative, 2, value=value, name='lift{}'.format(d))


class FaaDiBrunoCase(NamedTuple):
    name: str
    f: DerivativeOracle
    g: DerivativeOracle
    x0: tuple
    nu: tuple
    expected: float = None

    def composite(self, x):
        return self.f.value(self.g.value(x))


def faa_di_bruno_catalog():
    """(f, g, x0, nu) cases with |nu| <= 3 and l, m <= 2."""
    square = polynomial_oracle([{(2,): 1.0}])
    product = polynomial_oracle([{(1, 1): 1.0}])
    quadratic_map = polynomial_oracle([{(2, 0): 1.0, (0, 1): -0.5}, {(1, 1): 0.7, (1, 0): 0.3}])
    cubic = polynomial_oracle([{(3,): 0.5, (1,): -1.0}])
    bump_1d = bump_field_oracle(BumpField([0.1], 1.5, [0.4]))
    bump_2d = bump_field_oracle(BumpField([0.0, 0.2], 1.2, [0.3, -0.2]))
    cases = [
        FaaDiBrunoCase('exp_of_square', exp_oracle([1.0]), square, (1.0,), (2,), 6.0 * math.e),
        FaaDiBrunoCase('exp_of_product', exp_oracle([1.0]), product, (1.0, 1.0), (1, 1), 2.0 * math.e),
        FaaDiBrunoCase('linear_of_cubic', polynomial_oracle({(1,): 1.0}), cubic, (0.7,), (3,), 3.0),
    ]
    for nu in [(1,), (2,), (3,)]:
        cases.append(FaaDiBrunoCase('sin_of_cubic', sin_oracle([1.3]), cubic, (0.4,), nu))
        cases.append(FaaDiBrunoCase('exp_of_bump', exp_oracle([1.0]), bump_1d, (0.5,), nu))
    for nu in [(1, 0), (0, 1), (1, 1), (2, 1), (0, 3)]:
        cases.append(FaaDiBrunoCase('sin_of_quadratic_map', sin_oracle([0.8, -0.6]), quadratic_map, (0.3, -0.4), nu))
        cases.append(FaaDiBrunoCase('gaussian_of_bump', gaussian_oracle(2), bump_2d, (0.2, 0.5), nu))
    return cases


class EnvelopeReport(NamedTuple):
    bounded: bool
    max_ratios: dict
    reasons: list

    def as_dict(self):
        return {
            'bounded': self.bounded,
            'max_ratios': {'order={}'.format(order): value for order, value in sorted(self.max_ratios.items())},
            'reasons': list(self.reasons),
        }


def envelope_check(field, max_order=2, radii=None, directions=settings.DEFAULT_SCHWARTZ_DIRECTIONS,
                   seed=settings.DEFAULT_SEED, growth=settings.DEFAULT_SCHWARTZ_GROWTH):
    """
    Bound the |nu| <= max_order derivatives of f o lift, f the standard Gaussian on R^{2d}, by
    (1 + |x|)^{2|nu|} exp(-kappa |x|^2 / 2) with kappa = 1 / (1 + L)^2 along radial rays.

    L is the sampled sup of |eps'|. The ratio to the envelope must stay finite and must not
    grow over the three outermost shells.
    """
    from hyperforce.diffeo import sampled_jacobian_norm

    d = field.dimension
    lift = lift_derivative_oracle(field)
    gaussian = gaussian_oracle(2 * d)
    lipschitz = sampled_jacobian_norm(field)
    kappa = 1.0 / (1.0 + lipschitz) ** 2
    if radii is None:
        radii = np.linspace(0.5, 6.0, 12)
    generator = np.random.default_rng(seed)
    unit_vectors = list(np.eye(2 * d)) + list(-np.eye(2 * d))
    for _ in range(directions):
        vector = generator.standard_normal(2 * d)
        unit_vectors.append(vector / np.linalg.norm(vector))

    indices = [index for index in bounded_indices((max_order,) * (2 * d)) if 1 <= index.degree <= max_order]
    shell_maxima = {order: np.zeros(len(radii)) for order in range(1, max_order + 1)}
    for s, radius in enumerate(radii):
        for vector in unit_vectors:
            x = radius * vector
            for index in indices:
                envelope = (1.0 + radius) ** (2 * index.degree) * np.exp(-0.5 * kappa * radius ** 2)
                ratio = abs(faa_di_bruno(gaussian, lift, x, index)) / envelope
                shell_maxima[index.degree][s] = max(shell_maxima[index.degree][s], ratio)

    reasons = []
    for order, maxima in shell_maxima.items():
        if not np.all(np.isfinite(maxima)):
            reasons.append('order {} derivatives are not finite'.format(order))
            continue
        outer = maxima[-3:]
        if outer[1] > growth * outer[0] and outer[2] > growth * outer[1]:
            reasons.append('order {} derivatives outgrow the envelope: {}'.format(order, outer.tolist()))
    if reasons:
        logger.warning('Envelope check failed: {}'.format('; '.join(reasons)))
    envelope = {order: float(np.max(maxima)) for order, maxima in shell_maxima.items()}
    return EnvelopeReport(not reasons, envelope, reasons)
