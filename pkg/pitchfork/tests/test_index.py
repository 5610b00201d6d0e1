# pylint: disable=missing-docstring

from collections.abc import Callable
import math
from unittest import TestCase

import numpy as np

from pitchfork.criteria import check_p0
from pitchfork.equilibria import find_zeros_in_ball
from pitchfork.field import FieldSpec, load_problem, parse_field
from pitchfork.index import (IndexFailure, InconclusiveRadiusError, SingularJacobianError,
                             ZeroOnBoundaryError, index_1d, index_by_perturbation, index_local,
                             index_nondegenerate, index_product, winding_2d)

def linear_field(m: np.ndarray) -> FieldSpec:
    names = [f'x{i}' for i in range(1, len(m) + 1)]
    lines = [f'dim = {len(m)}', 'param = eps', f"vars = {' '.join(names)}"]
    for i, row in enumerate(m, 1):
        terms = ' + '.join(f'({float(c)!r})*{name}' for c, name in zip(row, names))
        lines.append(f'eq {i} = {terms}')
    return parse_field('\n'.join(lines))

def polynomial_field(rng: np.random.Generator) -> FieldSpec:
    """Planar polynomial field of degree 3 vanishing at the origin."""
    monomials = [(a, b) for a in range(4) for b in range(4) if 1 <= a + b <= 3]
    lines = ['dim = 2', 'param = eps', 'vars = x y']
    for i in (1, 2):
        terms = []
        for a, b in monomials:
            factors = [f'({float(rng.uniform(-1, 1))!r})']
            factors += [f'{name}^{power}' for name, power in (('x', a), ('y', b)) if power]
            terms.append('*'.join(factors))
        lines.append(f"eq {i} = {' + '.join(terms)}")
    return parse_field('\n'.join(lines))

def center_field(rng: np.random.Generator) -> tuple[FieldSpec, int, int]:
    """Field with a center direction u and a hyperbolic direction y, with its center index and
    stable count at the origin for eps = 0.
    """
    a, b, m = rng.choice([-1, 1], 3) * rng.uniform(0.5, 2, 3)
    c, g = rng.uniform(-1, 1, 2)
    k = rng.uniform(-0.5, 0.5)
    spec = parse_field(
        'dim = 2\nparam = eps\nvars = u y\n'
        f'eq 1 = ({float(b)!r})*eps*u + ({float(a)!r})*u^3 + ({float(c)!r})*u*y^2\n'
        f'eq 2 = ({float(m)!r})*y + ({float(g)!r})*u^2 + ({float(k)!r})*u*y\n')
    return spec, 1 if a > 0 else -1, int(m < 0)

class IndexNondegenerateTest(TestCase):
    def test(self) -> None:
        result = index_nondegenerate([[1, 0], [0, -1]])
        self.assertEqual(result.value, -1)
        self.assertEqual(result.method, 'sign-det')
        self.assertEqual(index_nondegenerate([[-1, 0], [0, -1]]).value, 1)

    def test_singular(self) -> None:
        with self.assertRaises(SingularJacobianError):
            index_nondegenerate([[1, 2], [2, 4]])

class Index1DTest(TestCase):
    def test(self) -> None:
        self.assertEqual(index_1d(lambda u: u ** 3, 0, 0.1).value, 1)
        self.assertEqual(index_1d(lambda u: -u, 0, 0.1).value, -1)
        self.assertEqual(index_1d(lambda u: u ** 2, 0, 0.1).value, 0)

    def test_shifted(self) -> None:
        result = index_1d(lambda u: 1 - u, 1, 0.5)
        self.assertEqual(result.value, -1)
        self.assertEqual(result.certificate['sign_changes'], 1)

    def test_several_zeros(self) -> None:
        result = index_1d(lambda u: u ** 3 - 0.01 * u, 0, 0.5)
        self.assertEqual(result.value, 1)
        self.assertEqual(result.certificate['sign_changes'], 3)

    def test_inconclusive(self) -> None:
        with self.assertRaises(InconclusiveRadiusError):
            index_1d(lambda u: u ** 3, 0, 1e-6)

    def test_bad_radius(self) -> None:
        with self.assertRaises(ValueError):
            index_1d(lambda u: u, 0, 0)

    def test_positive_scaling(self) -> None:
        functions: list[Callable[[float], float]] = [
            lambda u: u ** 3, lambda u: -u, lambda u: u ** 2, lambda u: math.sin(u) - u / 2]
        for f in functions:
            expected = index_1d(f, 0, 0.5).value
            for c in (1e-3, 0.5, 7.0):
                self.assertEqual(index_1d(lambda u, f=f, c=c: c * f(u), 0, 0.5).value, expected)

class IndexProductTest(TestCase):
    def test(self) -> None:
        self.assertEqual(index_product(-1, 1), 1)
        self.assertEqual(index_product(1, 1), -1)
        self.assertEqual(index_product(-1, 0), -1)
        self.assertEqual(index_product(0, 3), 0)

    def test_bad_index(self) -> None:
        with self.assertRaises(ValueError):
            index_product(2, 0)

class Winding2DTest(TestCase):
    def test(self) -> None:
        result = winding_2d(load_problem('fork').spec, [0, 0], 0, 0.3)
        self.assertEqual(result.value, 1)
        self.assertEqual(result.method, 'winding')

    def test_halved_radius(self) -> None:
        spec = load_problem('fork').spec
        for r in (0.6, 0.3):
            self.assertEqual(winding_2d(spec, [0, 0], 0, r).value,
                             winding_2d(spec, [0, 0], 0, r / 2).value)
        rng = np.random.default_rng(5)
        for _ in range(5):
            spec, _, _ = center_field(rng)
            self.assertEqual(winding_2d(spec, [0, 0], 0, 0.2).value,
                             winding_2d(spec, [0, 0], 0, 0.1).value)

    def test_power(self) -> None:
        spec = parse_field('dim = 2\nparam = eps\nvars = x y\neq 1 = x^3 - 3*x*y^2\n'
                           'eq 2 = 3*x^2*y - y^3\n')
        self.assertEqual(winding_2d(spec, [0, 0], 0, 1).value, 3)
        conjugate = parse_field('dim = 2\nparam = eps\nvars = x y\neq 1 = x^2 - y^2\n'
                                'eq 2 = -2*x*y\n')
        self.assertEqual(winding_2d(conjugate, [0, 0], 0, 1).value, -2)

    def test_zero_on_boundary(self) -> None:
        spec = parse_field('dim = 2\nparam = eps\nvars = x y\neq 1 = x - 1\neq 2 = y\n')
        with self.assertRaises(ZeroOnBoundaryError):
            winding_2d(spec, [0, 0], 0, 1)

    def test_bad_dimension(self) -> None:
        with self.assertRaises(ValueError):
            winding_2d(load_problem('moving-zero').spec, [0], 0, 0.1)

    def test_linear(self) -> None:
        rng = np.random.default_rng(0)
        for _ in range(10):
            m = rng.uniform(-1, 1, (2, 2))
            if abs(np.linalg.det(m)) < 0.1:
                continue
            self.assertEqual(winding_2d(linear_field(m), [0, 0], 0, 0.5).value,
                             int(np.sign(np.linalg.det(m))))

class IndexByPerturbationTest(TestCase):
    def test(self) -> None:
        spec = parse_field('dim = 3\nparam = eps\nvars = x y z\neq 1 = x^3\neq 2 = y\n'
                           'eq 3 = -z\n')
        result = index_by_perturbation(spec, [0, 0, 0], 0, 0.5, grid=11)
        self.assertEqual(result.value, -1)
        self.assertEqual(result.method, 'perturbation-sum')

    def test_degenerate(self) -> None:
        spec = parse_field('dim = 2\nparam = eps\nvars = x y\neq 1 = x^2 - y^2\neq 2 = 2*x*y\n')
        result = index_by_perturbation(spec, [0, 0], 0, 0.5)
        self.assertEqual(result.value, 2)
        self.assertEqual(result.certificate['counts'], [2, 2])

    def test_against_winding(self) -> None:
        spec = load_problem('fork').spec
        self.assertEqual(index_by_perturbation(spec, [0, 0], 0, 0.3).value,
                         winding_2d(spec, [0, 0], 0, 0.3).value)

    def test_linear(self) -> None:
        rng = np.random.default_rng(1)
        for _ in range(5):
            m = rng.uniform(-1, 1, (3, 3)) + np.diag(rng.choice([-1.5, 1.5], 3))
            if abs(np.linalg.det(m)) < 0.1:
                continue
            result = index_by_perturbation(linear_field(m), [0, 0, 0], 0, 0.5, grid=7)
            self.assertEqual(result.value, int(np.sign(np.linalg.det(m))))

    def test_zero_on_boundary(self) -> None:
        spec = parse_field('dim = 1\nparam = eps\nvars = x\neq 1 = x - 1\n')
        with self.assertRaises(ZeroOnBoundaryError):
            index_by_perturbation(spec, [0], 0, 1)

    def test_random_fields(self) -> None:
        rng = np.random.default_rng(3)
        agreed = 0
        for _ in range(50):
            spec = polynomial_field(rng)
            try:
                winding = winding_2d(spec, [0, 0], 0, 0.25)
                perturbation = index_by_perturbation(spec, [0, 0], 0, 0.25)
            except IndexFailure:
                continue
            self.assertEqual(winding.value, perturbation.value, spec.source)
            agreed += 1
        self.assertGreaterEqual(agreed, 45)

class CenterFieldTest(TestCase):
    def test_index_product(self) -> None:
        rng = np.random.default_rng(6)
        for _ in range(10):
            spec, center, stable = center_field(rng)
            record = check_p0(spec, [0, 0], 0, 0.2)
            self.assertEqual(record.center_index, center)
            self.assertEqual(record.index, index_product(center, stable))
            self.assertEqual(winding_2d(spec, [0, 0], 0, 0.2).value,
                             index_product(center, stable))

    def test_index_sum(self) -> None:
        rng = np.random.default_rng(7)
        for _ in range(5):
            spec, center, stable = center_field(rng)
            for eps in (-0.003, -0.0015, 0.001, 0.0015, 0.003):
                zeros = find_zeros_in_ball(spec, [0, 0], 0.2, eps)
                self.assertTrue(all(zero.index for zero in zeros))
                self.assertEqual(sum(zero.index.value for zero in zeros if zero.index),
                                 index_product(center, stable))

class IndexLocalTest(TestCase):
    def test(self) -> None:
        self.assertEqual(index_local(load_problem('oscillating').spec, [0], 0, 0.1).value, -1)
        self.assertEqual(index_local(load_problem('fork').spec, [0, 0], 0, 0.3).value, 1)
        self.assertEqual(index_local(load_problem('cubic-quadratic').spec, [0], 0, 0.1).value, 0)
