"""Conditions (P0) to (P3) and classification of bifurcations.

(P0) x0 is an isolated simple non-hyperbolic zero of V(., eps0) with nonzero index. (P1) dV/deps
lies in the image of DxV. (P2) The derivative of det(DxV) along the parameter direction omega of the
kernel of DV does not vanish. (P3) The second-order determinant combination of the normal form does
not vanish. (P0) to (P2) imply a bifurcation of one zero into k >= 3 zeros (pitchfork-type), all
four imply exactly three (pitchfork).
"""

from __future__ import annotations

from collections.abc import Callable
from logging import getLogger
import math
from typing import Literal, TypeVar

import numpy as np
from numpy.typing import ArrayLike
from pydantic import BaseModel, ConfigDict, Field

from . import context
from .centerman import (NormalFormError, ReducedField, center_coeffs, normalize, p3_value,
                        p3_via_manifold, reduced_derivs)
from .equilibria import cluster_radius, count_two_sided, find_zeros_in_ball
from .field import FieldSpec, evaluate_regular, jet_auto
from .index import IndexFailure, IndexResult, index_1d, index_local, index_nondegenerate
from .smallmat import (Spectrum, eigenvalues, jacobi_gradient, kernel_left, kernel_right,
                       parameter_direction)
from .util import timer

_T = TypeVar('_T')

class CriteriaError(ValueError):
    """Condition could not be checked."""

class NotAnEquilibriumError(CriteriaError):
    """The point is not a zero of the field."""

class IndexMismatchError(CriteriaError):
    """Independent index computations disagree."""

class Tolerances(BaseModel): # type: ignore[misc]
    """Numerical thresholds of all checks.

    .. attribute:: tol_res

       Residual |V| below which a point counts as an equilibrium.

    .. attribute:: tol_zero

       Magnitude below which an eigenvalue counts as zero.

    .. attribute:: tol_kernel

       Relative singular value below which a direction belongs to a kernel.

    .. attribute:: tol_p1

       Threshold of (P1).

    .. attribute:: tol_p2

       Threshold of (P2).

    .. attribute:: tol_p3

       Threshold of (P3).

    .. attribute:: fd_step

       Step of finite-difference jets.

    .. attribute:: grid

       Newton seeds per axis of zero searches.

    .. attribute:: seed

       Seed of random perturbations.
    """

    model_config = ConfigDict(frozen=True)

    tol_res: float = Field(default=1e-10, gt=0)
    tol_zero: float = Field(default=1e-7, gt=0)
    tol_kernel: float = Field(default=1e-8, gt=0)
    tol_p1: float = Field(default=1e-7, gt=0)
    tol_p2: float = Field(default=1e-7, gt=0)
    tol_p3: float = Field(default=1e-6, gt=0)
    fd_step: float = Field(default=2 ** -14, gt=0, le=1e-2)
    grid: int = Field(default=21, ge=3)
    seed: int = Field(default=0, ge=0)

def current_tolerances() -> Tolerances:
    """Tolerances of the current context, or the defaults."""
    return context.tolerances.get(Tolerances())

class P0Record(BaseModel): # type: ignore[misc]
    """Witnesses of (P0).

    .. attribute:: residual

       |V(x0, eps0)|.

    .. attribute:: spectrum

       Eigenvalues of DxV.

    .. attribute:: simple_nonhyp

       Indicates if x0 is simple non-hyperbolic.

    .. attribute:: zero_count

       Number of zeros found in the ball at eps0, x0 included.

    .. attribute:: nearest_distance

       Distance to the nearest other zero in the ball, if any.

    .. attribute:: isolated

       Indicates if x0 is the only zero in the ball.

    .. attribute:: center_index

       Index of the reduced field on the center manifold.

    .. attribute:: index

       Index of x0, if it could be determined.

    .. attribute:: index_method

       How the index was determined.

    .. attribute:: cross_check

       Independent index computation, for n <= 2.

    .. attribute:: reduced

       Derivatives of the reduced field, if the normal form exists.

    .. attribute:: notes

       Fallbacks and failed side computations.

    .. attribute:: passed

       Indicates if (P0) holds.
    """

    model_config = ConfigDict(frozen=True)

    residual: float
    spectrum: Spectrum
    simple_nonhyp: bool
    zero_count: int
    nearest_distance: float | None
    isolated: bool
    center_index: int | None
    index: int | None
    index_method: str
    cross_check: IndexResult | None
    reduced: ReducedField | None
    notes: tuple[str, ...] = ()
    passed: bool

class P1Record(BaseModel): # type: ignore[misc]
    """Witnesses of (P1).

    .. attribute:: v_l

       Left null vector of DxV with unit norm.

    .. attribute:: vl_dVeps

       v_l dV/deps.

    .. attribute:: margin

       |vl_dVeps| / tol_p1. (P1) holds for a margin of at most 1.

    .. attribute:: passed

       Indicates if (P1) holds.
    """

    model_config = ConfigDict(frozen=True)

    v_l: tuple[float, ...]
    vl_dVeps: float
    margin: float
    passed: bool

class P2Record(BaseModel): # type: ignore[misc]
    """Witnesses of (P2).

    .. attribute:: omega

       Kernel direction of DV with last component 1, if there is one.

    .. attribute:: gradient

       Gradient of det(DxV) over (x, eps).

    .. attribute:: directional_deriv

       Gradient along omega.

    .. attribute:: kernel_derivs

       Gradient along each vector of an orthonormal kernel basis of DV.

    .. attribute:: vr_check

       |gradient (v_r, 0)|, which vanishes whenever (P0) and (P1) hold.

    .. attribute:: margin

       |directional_deriv| / tol_p2. (P2) holds for a margin greater than 1.

    .. attribute:: applicable

       Indicates if the parameter axis is not orthogonal to the kernel of DV.

    .. attribute:: passed

       Indicates if (P2) holds.
    """

    model_config = ConfigDict(frozen=True)

    omega: tuple[float, ...] | None
    gradient: tuple[float, ...]
    directional_deriv: float | None
    kernel_derivs: tuple[float, ...]
    vr_check: float | None
    margin: float | None
    applicable: bool
    passed: bool

class P3Record(BaseModel): # type: ignore[misc]
    """Witnesses of (P3).

    .. attribute:: available

       Indicates if third derivatives are available at the point.

    .. attribute:: value

       Second-order determinant combination.

    .. attribute:: d_uu_det

       Its second derivative summand.

    .. attribute:: d_y_term

       Its center manifold summand.

    .. attribute:: via_manifold

       Second derivative of det along the center curve.

    .. attribute:: margin

       Smaller magnitude of both values over tol_p3.

    .. attribute:: passed

       Indicates if (P3) holds, ``None`` if it is undetermined.
    """

    model_config = ConfigDict(frozen=True)

    available: bool
    value: float | None = None
    d_uu_det: float | None = None
    d_y_term: float | None = None
    via_manifold: float | None = None
    margin: float | None = None
    passed: bool | None = None

class ConditionReport(BaseModel): # type: ignore[misc]
    """Outcome of all conditions at a point.

    A condition that could not be checked is absent.

    .. attribute:: point

       Point x0.

    .. attribute:: eps0

       Parameter eps0.

    .. attribute:: radius

       Radius of the ball zeros are considered in.

    .. attribute:: p0

       (P0).

    .. attribute:: p1

       (P1).

    .. attribute:: p2

       (P2).

    .. attribute:: p3

       (P3).

    .. attribute:: tolerances

       Tolerances used.
    """

    model_config = ConfigDict(frozen=True)

    point: tuple[float, ...]
    eps0: float
    radius: float
    p0: P0Record | None
    p1: P1Record | None
    p2: P2Record | None
    p3: P3Record | None
    tolerances: Tolerances

Verdict = Literal['Pitchfork_1to3', 'Pitchfork_3to1', 'PitchforkType_1toK', 'PitchforkType_Kto1',
                  'SaddleNodeLikely', 'NoBifurcationDetected', 'Inconsistent', 'Undetermined']

class Classification(BaseModel): # type: ignore[misc]
    """Verdict on the bifurcation at a point.

    .. attribute:: verdict

       Kind of bifurcation.

    .. attribute:: k

       Number of zeros on the many side for pitchfork-type verdicts, a lower bound where zeros
       accumulate.

    .. attribute:: theory_basis

       Which set of conditions holds: ``pitchfork`` for (P0) to (P3), ``pitchfork-type`` for (P0) to
       (P2).

    .. attribute:: numeric_counts

       Numbers of zeros in the ball at eps0 - delta_eps and eps0 + delta_eps.

    .. attribute:: delta_eps

       Parameter offset of the counts.

    .. attribute:: notes

       Remarks supporting the verdict.
    """

    model_config = ConfigDict(frozen=True)

    verdict: Verdict
    k: int | None = None
    theory_basis: Literal['pitchfork', 'pitchfork-type', 'none'] = 'none'
    numeric_counts: tuple[int, int] | None = None
    delta_eps: float | None = None
    notes: tuple[str, ...] = ()

    @property
    def label(self) -> str:
        """Human-readable verdict."""
        labels = {
            'Pitchfork_1to3': 'Pitchfork 1→3',
            'Pitchfork_3to1': 'Pitchfork 3→1',
            'PitchforkType_1toK': f'Pitchfork-type 1→{self.k}',
            'PitchforkType_Kto1': f'Pitchfork-type {self.k}→1',
            'SaddleNodeLikely': 'Saddle-node likely',
            'NoBifurcationDetected': 'No bifurcation detected',
            'Inconsistent': 'Inconsistent',
            'Undetermined': 'Undetermined'
        }
        return labels[self.verdict]

def _sign(value: float) -> int:
    return (value > 0) - (value < 0)

def _residual(spec: FieldSpec, x0: ArrayLike, eps0: float, tol: Tolerances) -> float:
    residual = float(np.linalg.norm(evaluate_regular(spec, x0, eps0)))
    if not residual <= tol.tol_res:
        raise NotAnEquilibriumError(f'Residual {residual:.3g} at {np.asarray(x0).tolist()}, eps '
                                    f'{eps0:g} exceeds {tol.tol_res:g}')
    return residual

def _center_index(spec: FieldSpec, x0: ArrayLike, eps0: float, reduced: ReducedField,
                  exact: bool, a: np.ndarray, a_inv: np.ndarray, h20: np.ndarray, rho: float,
                  tol: Tolerances) -> tuple[int, str]:
    """Index of the reduced field u -> F(u, h(u, 0), 0) at 0."""
    if exact:
        if abs(reduced.f_uu) > tol.tol_p3:
            return 0, 'center-taylor'
        if reduced.f_uuu is not None and abs(reduced.f_uuu) > tol.tol_p3:
            return _sign(reduced.f_uuu), 'center-taylor'
    point = np.asarray(x0, dtype=float)

    def f(u: float) -> float:
        z = np.concatenate([[u], h20 * u ** 2])
        return float((a_inv @ evaluate_regular(spec, point + a @ z, eps0))[0])

    # rho is a distance in x, u is measured along the first column of A
    result = index_1d(f, 0.0, rho / float(np.linalg.norm(a[:, 0])))
    return result.value, 'center-one-dim'

def check_p0(spec: FieldSpec, x0: ArrayLike, eps0: float, r: float,
             tol: Tolerances | None = None) -> P0Record:
    """Check (P0) at the equilibrium *x0* of *spec* at *eps0* within the ball of radius *r*.

    The index is the index of the reduced field times sign det M. With exact jets, the reduced index
    follows from the Taylor coefficients of the reduced field, else it is evaluated on the center
    curve through the field itself. For n <= 2 it is cross-checked against the degree of the field,
    and an :exc:`IndexMismatchError` is raised if both disagree. If *x0* is not an equilibrium, a
    :exc:`NotAnEquilibriumError` is raised.
    """
    tol = tol or current_tolerances()
    point = np.asarray(x0, dtype=float)
    notes: list[str] = []
    residual = _residual(spec, point, eps0, tol)
    jet = jet_auto(spec, point, eps0, 3, h=tol.fd_step)
    spectrum = eigenvalues(jet.jacobian, tol.tol_zero)

    zeros = find_zeros_in_ball(spec, point, r, eps0, tol.grid, tol_res=tol.tol_res,
                               tol_zero=tol.tol_zero)
    distances = [float(np.linalg.norm(zero.point - point)) for zero in zeros]
    others = [d for d in distances if d > cluster_radius(tol.tol_res)]
    nearest = min(others, default=None)
    rho = r / 2 if nearest is None else min(r / 2, nearest / 2)

    center_index = None
    index = None
    method = 'none'
    reduced = None
    if spectrum.hyperbolic:
        index = index_nondegenerate(jet.jacobian).value
        method = 'sign-det'
    elif spectrum.simple_zero:
        try:
            nf = normalize(spec, point, eps0, tol_zero=tol.tol_zero, tol_kernel=tol.tol_kernel,
                           h=tol.fd_step)
            cc = center_coeffs(nf)
            reduced = reduced_derivs(nf, cc)
            center_index, method = _center_index(spec, point, eps0, reduced, nf.jet.exact,
                                                 np.asarray(nf.a), np.asarray(nf.a_inv),
                                                 np.array(cc.h20), rho, tol)
            index = center_index * (-1) ** nf.spectrum.stable_count
        except (NormalFormError, IndexFailure) as e:
            notes.append(f'Center reduction failed ({e})')

    cross_check = None
    if spec.dim <= 2 or index is None:
        try:
            cross_check = index_local(spec, point, eps0, rho, seed=tol.seed, grid=tol.grid,
                                      tol_res=tol.tol_res)
        except (IndexFailure, ValueError) as e:
            notes.append(f'Index cross-check failed ({e})')
    if cross_check:
        if index is None:
            index = cross_check.value
            method = cross_check.method
        elif cross_check.value != index:
            raise IndexMismatchError(f'Index {index} by {method} disagrees with '
                                     f'{cross_check.value} by {cross_check.method}')

    simple_nonhyp = spectrum.simple_zero
    isolated = not others
    return P0Record(
        residual=residual, spectrum=spectrum, simple_nonhyp=simple_nonhyp,
        zero_count=len(others) + 1,
        nearest_distance=nearest, isolated=isolated, center_index=center_index, index=index,
        index_method=method, cross_check=cross_check, reduced=reduced, notes=tuple(notes),
        passed=bool(simple_nonhyp and isolated and index))

def check_p1(spec: FieldSpec, x0: ArrayLike, eps0: float,
             tol: Tolerances | None = None) -> P1Record:
    """Check (P1) at *x0* and *eps0*, v_l dV/deps = 0 for the left null vector v_l of DxV.

    If the left null space of DxV is not one-dimensional, a :exc:`CriteriaError` is raised.
    """
    tol = tol or current_tolerances()
    jet = jet_auto(spec, x0, eps0, 1, h=tol.fd_step)
    kernel = kernel_left(jet.jacobian, tol.tol_kernel, tol.tol_zero)
    if len(kernel) != 1:
        raise CriteriaError(f'Left null space of dimension {len(kernel)}, expected 1')
    v_l = kernel[0]
    value = float(v_l @ jet.d1[:, spec.dim])
    margin = abs(value) / tol.tol_p1
    return P1Record(v_l=tuple(v_l.tolist()), vl_dVeps=value, margin=margin, passed=margin <= 1)

def check_p2(spec: FieldSpec, x0: ArrayLike, eps0: float,
             tol: Tolerances | None = None) -> P2Record:
    """Check (P2) at *x0* and *eps0*, D det(DxV) omega != 0 along the kernel direction omega of DV.

    If the parameter axis is orthogonal to the kernel of DV, (P2) is inapplicable and fails.
    """
    tol = tol or current_tolerances()
    n = spec.dim
    jet = jet_auto(spec, x0, eps0, 2, h=tol.fd_step)
    gradient = jacobi_gradient(jet)
    kernel = kernel_right(jet.d1, tol.tol_kernel, tol.tol_zero)
    kernel_derivs = tuple(float(gradient @ k) for k in kernel)
    v_r = kernel_right(jet.jacobian, tol.tol_kernel, tol.tol_zero)
    vr_check = float(abs(gradient[:n] @ v_r[0])) if len(v_r) == 1 else None

    omega = parameter_direction(jet.d1, tol.tol_kernel, tol.tol_zero)
    if omega is None:
        return P2Record(omega=None, gradient=tuple(gradient.tolist()), directional_deriv=None,
                        kernel_derivs=kernel_derivs, vr_check=vr_check, margin=None,
                        applicable=False, passed=False)
    value = float(gradient @ omega)
    margin = abs(value) / tol.tol_p2
    return P2Record(omega=tuple(omega.tolist()), gradient=tuple(gradient.tolist()),
                    directional_deriv=value, kernel_derivs=kernel_derivs, vr_check=vr_check,
                    margin=margin, applicable=True, passed=margin > 1)

def check_p3(spec: FieldSpec, x0: ArrayLike, eps0: float,
             tol: Tolerances | None = None) -> P3Record:
    """Check (P3) at *x0* and *eps0*.

    The combination D_uu det + D_y det (-M^-1 G_uu) of the normal form and the second derivative of
    det along the center curve must both be nonzero with the same sign. Without third derivatives,
    (P3) is unavailable.
    """
    tol = tol or current_tolerances()
    nf = normalize(spec, x0, eps0, tol_zero=tol.tol_zero, tol_kernel=tol.tol_kernel, h=tol.fd_step)
    if nf.order < 3:
        return P3Record(available=False)
    cc = center_coeffs(nf)
    p3 = p3_value(nf)
    via = p3_via_manifold(nf, cc)
    margin = min(abs(p3.value), abs(via)) / tol.tol_p3
    passed = margin > 1 and _sign(p3.value) == _sign(via)
    return P3Record(available=True, value=p3.value, d_uu_det=p3.d_uu_det, d_y_term=p3.d_y_term,
                    via_manifold=via, margin=margin, passed=passed)

def default_delta_eps(p2: P2Record | None, tol: Tolerances) -> float:
    """Parameter offset for counting zeros, scaled to the speed at which det(DxV) changes."""
    speed = abs(p2.directional_deriv) if p2 and p2.directional_deriv is not None else 0.0
    return min(max(10 * math.sqrt(tol.tol_zero) / max(speed, 1e-3), 1e-4), 0.1)

def classify(spec: FieldSpec, x0: ArrayLike, eps0: float, r: float,
             delta_eps: float | None = None,
             tol: Tolerances | None = None) -> tuple[ConditionReport, Classification]:
    """Check all conditions at *x0* and *eps0* and classify the bifurcation.

    The verdict from the conditions is compared with the numbers of zeros within radius *r* at
    *eps0* -+ *delta_eps*, by default :func:`default_delta_eps`. Checks that fail are absent from
    the report and lead to an ``Undetermined`` verdict. If *x0* is not an equilibrium, a
    :exc:`NotAnEquilibriumError` is raised.
    """
    logger = getLogger(__name__)
    tol = tol or current_tolerances()
    point = np.asarray(x0, dtype=float)
    _residual(spec, point, eps0, tol)
    notes: list[str] = []

    def attempt(name: str, check: Callable[[], _T]) -> _T | None:
        try:
            return check()
        except (ValueError, np.linalg.LinAlgError) as e:
            notes.append(f'{name} failed ({e})')
            logger.warning('%s failed at x=%s, eps=%g (%s)', name, point.tolist(), eps0, e)
            return None

    with timer() as t:
        p0 = attempt('P0', lambda: check_p0(spec, point, eps0, r, tol))
        p1 = attempt('P1', lambda: check_p1(spec, point, eps0, tol))
        p2 = attempt('P2', lambda: check_p2(spec, point, eps0, tol))
        p3 = attempt('P3', lambda: check_p3(spec, point, eps0, tol))
        delta = delta_eps if delta_eps is not None else default_delta_eps(p2, tol)
        counts = attempt('Count', lambda: count_two_sided(
            spec, point, eps0, delta, r, grid=tol.grid, tol_res=tol.tol_res,
            tol_zero=tol.tol_zero))
        report = ConditionReport(point=tuple(point.tolist()), eps0=eps0, radius=r, p0=p0, p1=p1,
                                 p2=p2, p3=p3, tolerances=tol)
        if p0:
            notes += p0.notes
        classification = _verdict(report, counts, delta, notes)
    logger.info('Classified x=%s, eps=%g as %s (%.1fms)', point.tolist(), eps0,
                classification.verdict, t() * 1000)
    return report, classification

def _verdict(report: ConditionReport, counts: tuple[int, int] | None, delta: float,
             notes: list[str]) -> Classification:
    p0, p1, p2, p3 = report.p0, report.p1, report.p2, report.p3
    if p0 is None or p1 is None or p2 is None or counts is None:
        return Classification(verdict='Undetermined', numeric_counts=counts, delta_eps=delta,
                              notes=tuple(notes))
    if p3 is None or not p3.available:
        notes.append('Third derivatives unavailable, (P3) undetermined')

    if p0.reduced and p0.center_index:
        # The continuing zero changes its reduced index with the sign of f_ue e
        for side, e in (('below', -delta), ('above', delta)):
            slope = _sign(p0.reduced.f_ue * e)
            if slope:
                notes.append(f'Continuing zero {side} eps0 has reduced index {slope:+d}')

    minus, plus = counts
    if p0.passed and p1.passed and p2.passed:
        few, many = min(counts), max(counts)
        if p3 and p3.passed:
            if counts in {(1, 3), (3, 1)}:
                return Classification(
                    verdict='Pitchfork_1to3' if minus == 1 else 'Pitchfork_3to1', k=3,
                    theory_basis='pitchfork', numeric_counts=counts, delta_eps=delta,
                    notes=tuple(notes))
            notes.append(f'(P0) to (P3) hold, but zero counts are {counts}')
            return Classification(verdict='Inconsistent', theory_basis='pitchfork',
                                  numeric_counts=counts, delta_eps=delta, notes=tuple(notes))
        if few == 1 and many >= 3:
            if many > 3:
                notes.append(f'{many} zeros found, zeros may accumulate and the count '
                             'depends on the radius')
            return Classification(
                verdict='PitchforkType_1toK' if minus == 1 else 'PitchforkType_Kto1', k=many,
                theory_basis='pitchfork-type', numeric_counts=counts, delta_eps=delta,
                notes=tuple(notes))
        notes.append(f'(P0) to (P2) hold, but zero counts are {counts}')
        return Classification(verdict='Inconsistent', theory_basis='pitchfork-type',
                              numeric_counts=counts, delta_eps=delta, notes=tuple(notes))

    if p0.simple_nonhyp and p0.index == 0 and abs(plus - minus) == 2:
        notes.append('Zero of index 0, a pair of zeros with opposite index is created or '
                     'annihilated')
        return Classification(verdict='SaddleNodeLikely', numeric_counts=counts, delta_eps=delta,
                              notes=tuple(notes))
    if minus == plus:
        failed = [name for name, record in (('P0', p0), ('P1', p1), ('P2', p2))
                  if not record.passed]
        notes.append(f"{', '.join(failed)} failed, zero count {minus} on both sides")
        return Classification(verdict='NoBifurcationDetected', numeric_counts=counts,
                              delta_eps=delta, notes=tuple(notes))
    notes.append(f'Zero count changes from {minus} to {plus} without a pitchfork-type '
                 'condition set')
    return Classification(verdict='Undetermined', numeric_counts=counts, delta_eps=delta,
                          notes=tuple(notes))
