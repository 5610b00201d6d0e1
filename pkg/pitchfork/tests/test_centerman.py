# pylint: disable=missing-docstring

from unittest import TestCase

import numpy as np

from pitchfork.centerman import (NormalFormError, center_coeffs, normalize, p3_value,
                                 p3_via_manifold, reduced_derivs)
from pitchfork.field import jet, load_problem, parse_field

class NormalizeTest(TestCase):
    def test(self) -> None:
        nf = normalize(load_problem('fork').spec, [0, 0], 0)
        np.testing.assert_allclose(nf.a_inv, [[1, -1], [1, 1]], atol=1e-12)
        np.testing.assert_allclose(nf.a, [[0.5, 0.5], [-0.5, 0.5]], atol=1e-12)
        np.testing.assert_allclose(nf.m, [[-2]], atol=1e-12)
        np.testing.assert_allclose(nf.shear, [0, 0], atol=1e-12)
        np.testing.assert_allclose(nf.jet.jacobian, [[0, 0], [0, -2]], atol=1e-12)
        self.assertEqual(nf.order, 3)
        self.assertEqual(nf.spectrum.stable_count, 1)

    def test_shear(self) -> None:
        nf = normalize(load_problem('moving-manifold').spec, [0, 0], 0)
        np.testing.assert_allclose(nf.shear, [0, -0.5], atol=1e-12)
        np.testing.assert_allclose(nf.jet.d1[:, 2], [0, 0], atol=1e-12)

    def test_hyperbolic(self) -> None:
        spec = parse_field('dim = 2\nparam = eps\nvars = x y\neq 1 = x\neq 2 = -y\n')
        with self.assertRaises(NormalFormError):
            normalize(spec, [0, 0], 0)

    def test_double_zero(self) -> None:
        spec = parse_field('dim = 2\nparam = eps\nvars = x y\neq 1 = x^2\neq 2 = y^2 + eps\n')
        with self.assertRaises(NormalFormError):
            normalize(spec, [0, 0], 0)

class CenterCoeffsTest(TestCase):
    def test(self) -> None:
        cc = center_coeffs(normalize(load_problem('fork').spec, [0, 0], 0))
        self.assertAlmostEqual(cc.h20[0], 0.25)
        self.assertAlmostEqual(cc.h01[0], 0)
        self.assertLess(cc.residual, 1e-12)

    def test_one_dimensional(self) -> None:
        cc = center_coeffs(normalize(load_problem('cubic-quadratic').spec, [0], 0))
        self.assertEqual((cc.h01, cc.h20, cc.h11, cc.h02), ((), (), (), ()))

class ReducedDerivsTest(TestCase):
    def test(self) -> None:
        nf = normalize(load_problem('fork').spec, [0, 0], 0)
        reduced = reduced_derivs(nf, center_coeffs(nf))
        self.assertAlmostEqual(reduced.f_e, 0)
        self.assertAlmostEqual(reduced.f_ue, 1)
        self.assertAlmostEqual(reduced.f_uu, 0)
        assert reduced.f_uuu is not None
        self.assertAlmostEqual(reduced.f_uuu, -1.5)

    def test_moving_manifold(self) -> None:
        nf = normalize(load_problem('moving-manifold').spec, [0, 0], 0)
        reduced = reduced_derivs(nf, center_coeffs(nf))
        self.assertAlmostEqual(reduced.f_ue, 0)
        self.assertAlmostEqual(reduced.f_ue_unsheared, 1)

    def test_one_dimensional(self) -> None:
        nf = normalize(load_problem('cubic-quadratic').spec, [0], 0)
        reduced = reduced_derivs(nf, center_coeffs(nf))
        self.assertAlmostEqual(reduced.f_ue, 1)
        self.assertAlmostEqual(reduced.f_uu, 2)
        self.assertAlmostEqual(reduced.f_uuu or 0, 6)

    def test_det_relation(self) -> None:
        spec = load_problem('fork-asymmetric').spec
        nf = normalize(spec, [0, 0], 0)
        reduced = reduced_derivs(nf, center_coeffs(nf))
        h = 1e-6
        upper = np.linalg.det(jet(spec, [0, 0], h, 1).jacobian)
        lower = np.linalg.det(jet(spec, [0, 0], -h, 1).jacobian)
        self.assertAlmostEqual(reduced.f_ue_unsheared * np.linalg.det(nf.m),
                               (upper - lower) / (2 * h), delta=1e-6)

class P3ValueTest(TestCase):
    def test(self) -> None:
        nf = normalize(load_problem('fork').spec, [0, 0], 0)
        p3 = p3_value(nf)
        self.assertAlmostEqual(p3.value, 3)
        self.assertAlmostEqual(p3.value, p3_via_manifold(nf, center_coeffs(nf)))

    def test_cancellation(self) -> None:
        nf = normalize(load_problem('oscillating-coupled').spec, [0, 0], 0)
        p3 = p3_value(nf)
        self.assertAlmostEqual(p3.d_uu_det, 8, delta=1e-3)
        self.assertAlmostEqual(p3.d_y_term, -8, delta=1e-3)
        self.assertAlmostEqual(p3.value, 0, delta=1e-6)

    def test_order(self) -> None:
        nf = normalize(load_problem('fork').spec, [0, 0], 0)
        with self.assertRaises(NormalFormError):
            p3_value(nf.model_copy(update={'jet': nf.jet.truncated(2)}))
