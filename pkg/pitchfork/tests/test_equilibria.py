# pylint: disable=missing-docstring

import math
from unittest import TestCase

import numpy as np

from pitchfork.equilibria import (BallExitError, BudgetError, NonContractionError,
                                  NonConvergenceError, cluster_radius, continue_branch,
                                  count_two_sided, find_zeros_in_ball, make_equilibrium, newton,
                                  newton_scaled_1d)
from pitchfork.field import evaluate_regular, load_problem, parse_field
from pitchfork.index import SingularJacobianError

def side_zero(eps: float) -> list[float]:
    x = (eps + math.sqrt(eps ** 2 + 4 * eps)) / 2
    return [x, eps - x]

class NewtonTest(TestCase):
    def test(self) -> None:
        zero = newton(load_problem('fork').spec, [0.25, -0.15], 0.04)
        np.testing.assert_allclose(zero.x, side_zero(0.04), atol=1e-9)
        self.assertLessEqual(zero.residual, 1e-10)
        self.assertFalse(zero.degenerate)
        assert zero.index is not None
        self.assertEqual(zero.index.value, 1)
        self.assertGreater(zero.newton_iters, 0)

    def test_at_zero(self) -> None:
        zero = newton(load_problem('fork').spec, [0, 0], 0)
        self.assertEqual(zero.x, (0, 0))
        self.assertEqual(zero.newton_iters, 0)
        self.assertTrue(zero.degenerate)
        self.assertIsNone(zero.index)

    def test_singular(self) -> None:
        spec = parse_field('dim = 2\nparam = eps\nvars = x y\neq 1 = x^2 + 1\neq 2 = y\n')
        with self.assertRaises(SingularJacobianError):
            newton(spec, [0, 0], 0)

    def test_no_zero(self) -> None:
        spec = parse_field('dim = 1\nparam = eps\nvars = x\neq 1 = x^2 + 1\n')
        with self.assertRaises((NonConvergenceError, SingularJacobianError)):
            newton(spec, [0.5], 0)

    def test_degenerate(self) -> None:
        zero = newton(load_problem('fork-perturbed').spec, [0.01, -0.01], 0)
        np.testing.assert_allclose(zero.x, [0, 0], atol=1e-8)
        self.assertTrue(zero.degenerate)

    def test_triple(self) -> None:
        spec = load_problem('moving-manifold').spec
        for eps in np.linspace(-0.1, 0.1, 9):
            zero = newton(spec, [0.05, -eps / 2 + 0.01], float(eps))
            np.testing.assert_allclose(zero.x, [0, -eps / 2], atol=1e-8)

class NewtonScaled1DTest(TestCase):
    def test(self) -> None:
        self.assertAlmostEqual(newton_scaled_1d(lambda u, e: u - e, 0.01, 0.5), 0.01,
                               delta=1e-12)
        u = newton_scaled_1d(lambda u, e: u * (1 + u ** 2) - e, 0.01, 0.5)
        self.assertAlmostEqual(u * (1 + u ** 2), 0.01, delta=1e-12)

    def test_non_contracting(self) -> None:
        with self.assertRaises(NonContractionError):
            newton_scaled_1d(lambda u, e: u * (e - u ** 2) - e ** 2, 0.01, 0.5)

    def test_ball_exit(self) -> None:
        with self.assertRaises(BallExitError):
            newton_scaled_1d(lambda u, e: u - 1, 0.01, 0.5)

    def test_bad_eps(self) -> None:
        with self.assertRaises(ValueError):
            newton_scaled_1d(lambda u, e: u, 0, 0.5)

class MakeEquilibriumTest(TestCase):
    def test(self) -> None:
        zero = make_equilibrium(load_problem('fork').spec, [0, 0], -0.04)
        self.assertFalse(zero.degenerate)
        self.assertAlmostEqual(zero.det, 1 - 0.96 ** 2)
        assert zero.index is not None and zero.spectrum is not None
        self.assertEqual(zero.index.value, 1)
        self.assertTrue(zero.stable)

    def test_singular_jet(self) -> None:
        zero = make_equilibrium(load_problem('oscillating').spec, [0], 0)
        self.assertTrue(zero.degenerate)
        self.assertEqual(zero.residual, 0)

class FindZerosInBallTest(TestCase):
    def test(self) -> None:
        zeros = find_zeros_in_ball(load_problem('fork').spec, [0, 0], 0.8, 0.04)
        self.assertEqual(len(zeros), 3)
        np.testing.assert_allclose(zeros[0].x, side_zero(0.04)[::-1], atol=1e-9)
        np.testing.assert_allclose(zeros[1].x, [0, 0], atol=1e-9)
        np.testing.assert_allclose(zeros[2].x, side_zero(0.04), atol=1e-9)
        self.assertEqual(sum(zero.index.value for zero in zeros if zero.index), 1)
        self.assertTrue(all(zero.index for zero in zeros))

    def test_below(self) -> None:
        zeros = find_zeros_in_ball(load_problem('fork').spec, [0, 0], 0.8, -0.04)
        self.assertEqual(len(zeros), 1)

    def test_degenerate(self) -> None:
        zeros = find_zeros_in_ball(load_problem('fork-perturbed').spec, [0, 0], 3, 0)
        ys = [zero.x[1] for zero in zeros]
        np.testing.assert_allclose(sorted(ys), [0, 1 - 1 / math.sqrt(1.1), 1 + 1 / math.sqrt(1.1)],
                                   atol=1e-8)
        self.assertTrue(zeros[1].degenerate)

    def test_one_dimensional(self) -> None:
        zeros = find_zeros_in_ball(load_problem('oscillating').spec, [0], 0.2, 1e-3)
        self.assertGreater(len(zeros), 3)
        self.assertTrue(all(abs(zero.x[0]) <= 0.2 for zero in zeros))
        self.assertEqual([zero.x for zero in zeros], sorted(zero.x for zero in zeros))

    def test_sign_change_roots(self) -> None:
        zeros = find_zeros_in_ball(load_problem('cubic-quadratic').spec, [0], 0.4, 0.01)
        np.testing.assert_allclose([zero.x[0] for zero in zeros], [(-1 + math.sqrt(0.96)) / 2, 0],
                                   atol=1e-14)

    def test_flat(self) -> None:
        zeros = find_zeros_in_ball(load_problem('oscillating').spec, [0], 0.2, 0)
        self.assertEqual(len(zeros), 1)
        self.assertLessEqual(abs(zeros[0].x[0]), 1e-12)
        zeros = find_zeros_in_ball(load_problem('oscillating-coupled').spec, [0, 0], 0.5, 0)
        self.assertEqual(len(zeros), 1)
        np.testing.assert_allclose(zeros[0].x, [0, 0], atol=1e-8)

    def test_removable_singularity(self) -> None:
        spec = load_problem('oscillating-coupled').spec
        equilibrium = newton(spec, [0, 0], 1e-3)
        self.assertEqual(equilibrium.x, (0, 0))
        zeros = find_zeros_in_ball(spec, [0, 0], 0.5, 1e-3)
        self.assertTrue(any(np.linalg.norm(zero.x) <= 1e-8 for zero in zeros))

    def test_accumulating(self) -> None:
        spec = load_problem('oscillating').spec
        grid = np.linspace(-0.2, 0.2, 1_000_001)
        values = evaluate_regular(spec, grid[None, :], 1e-3)[0]
        signs = np.sign(values[values != 0])
        expected = int(np.count_nonzero(values == 0) + np.count_nonzero(signs[1:] != signs[:-1]))
        zeros = find_zeros_in_ball(spec, [0], 0.2, 1e-3)
        self.assertGreater(len(zeros), 3)
        self.assertLessEqual(abs(len(zeros) - expected), 2)

    def test_grid_refinement(self) -> None:
        for name, eps in (('fork', 0.04), ('fork-asymmetric', 0.04), ('fork-perturbed', 0),
                          ('moving-manifold', 0.1), ('cubic-quadratic', 0.01),
                          ('moving-zero', 0.1)):
            problem = load_problem(name)
            assert problem.radius
            coarse = find_zeros_in_ball(problem.spec, problem.point, problem.radius, eps, 21)
            fine = find_zeros_in_ball(problem.spec, problem.point, problem.radius, eps, 31)
            self.assertEqual(len(coarse), len(fine), name)
            for a, b in zip(coarse, fine):
                self.assertLessEqual(float(np.linalg.norm(a.point - b.point)),
                                     cluster_radius(1e-10))

    def test_budget(self) -> None:
        spec = parse_field('dim = 3\nparam = eps\nvars = x y z\neq 1 = x\neq 2 = y\neq 3 = z\n')
        with self.assertRaises(BudgetError):
            find_zeros_in_ball(spec, [0, 0, 0], 1, 0, 41)

class CountTwoSidedTest(TestCase):
    def test(self) -> None:
        self.assertEqual(count_two_sided(load_problem('fork').spec, [0, 0], 0, 0.04, 0.8), (1, 3))

    def test_exchange(self) -> None:
        self.assertEqual(
            count_two_sided(load_problem('cubic-quadratic').spec, [0], 0, 0.01, 0.4), (2, 2))

    def test_bad_delta(self) -> None:
        with self.assertRaises(ValueError):
            count_two_sided(load_problem('fork').spec, [0, 0], 0, 0, 0.8)

class ContinueBranchTest(TestCase):
    def test(self) -> None:
        spec = load_problem('moving-manifold').spec
        seed = make_equilibrium(spec, [0, 0], 0)
        branch = continue_branch(spec, seed, -0.2, 0.2, 0.05)
        self.assertEqual((branch.lo_reason, branch.hi_reason), ('range-end', 'range-end'))
        self.assertAlmostEqual(branch.points[0].eps, -0.2)
        self.assertAlmostEqual(branch.points[-1].eps, 0.2)
        for point in branch.points:
            np.testing.assert_allclose(point.x, [0, -point.eps / 2], atol=1e-9)

    def test_fold(self) -> None:
        spec = parse_field('dim = 1\nparam = eps\nvars = x\neq 1 = eps - x^2\n')
        seed = newton(spec, [0.5], 0.25)
        branch = continue_branch(spec, seed, -0.1, 0.3, 0.05)
        self.assertEqual(branch.lo_reason, 'fold')
        self.assertEqual(branch.hi_reason, 'range-end')
        self.assertGreaterEqual(branch.points[0].eps, 0)
        self.assertLess(branch.points[0].eps, 0.05)

    def test_ball_exit(self) -> None:
        spec = load_problem('moving-manifold').spec
        seed = make_equilibrium(spec, [0, 0], 0)
        branch = continue_branch(spec, seed, -1, 1, 0.05, center=[0, 0], radius=0.1)
        self.assertEqual((branch.lo_reason, branch.hi_reason), ('ball-exit', 'ball-exit'))
        self.assertTrue(all(abs(point.eps) <= 0.2 + 1e-12 for point in branch.points))

    def test_seed_outside(self) -> None:
        spec = load_problem('moving-manifold').spec
        with self.assertRaises(ValueError):
            continue_branch(spec, make_equilibrium(spec, [0, 0], 0), 0.1, 0.2, 0.05)
