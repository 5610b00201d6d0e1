"""Normal form and center manifold at a simple non-hyperbolic equilibrium.

In the normalized coordinates z = (u, y), the field reads u' = F(u, y, e), y' = M y + G(u, y, e)
with e = eps - eps0, a scalar center direction u and the hyperbolic block M. The center manifold
y = h(u, e) is computed as a Taylor polynomial of order 2.
"""

from __future__ import annotations

from logging import getLogger
import math

import numpy as np
from numpy.typing import ArrayLike, NDArray
from pydantic import BaseModel, ConfigDict, model_validator
import scipy.linalg

from .field import FieldSpec, Jet3, jet_auto
from .smallmat import (Spectrum, canonical, det_hessian, eigenvalues, jacobi_gradient,
                       parameter_direction)

Array = NDArray[np.float64]

MAX_CONDITION = 1e8

class NormalFormError(ValueError):
    """Field cannot be brought into normal form at the point."""

def _freeze(*arrays: Array | None) -> None:
    for array in arrays:
        if array is not None:
            array.flags.writeable = False

class NormalForm(BaseModel): # type: ignore[misc]
    """Field in normalized coordinates around (x0, eps0).

    The original coordinates are x = x0 + A z + s e with the shear s.

    .. attribute:: a

       Change of basis A, its first column the right null vector of DxV.

    .. attribute:: a_inv

       Inverse of A, its first row the left null vector of DxV.

    .. attribute:: m

       Hyperbolic block M.

    .. attribute:: shear

       Shear s, the x-part of the parameter direction of the kernel of DV, or zero if there is none.

    .. attribute:: shift

       Point x0.

    .. attribute:: eps0

       Parameter eps0.

    .. attribute:: spectrum

       Eigenvalues of DxV at (x0, eps0).

    .. attribute:: jet

       Jet of the normalized field at the origin, slots u, y and e.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    a: np.ndarray
    a_inv: np.ndarray
    m: np.ndarray
    shear: np.ndarray
    shift: tuple[float, ...]
    eps0: float
    spectrum: Spectrum
    jet: Jet3

    @model_validator(mode='after')
    def _check(self) -> NormalForm:
        _freeze(self.a, self.a_inv, self.m, self.shear)
        return self

    @property
    def dim(self) -> int:
        """Number of variables n."""
        return len(self.shift)

    @property
    def order(self) -> int:
        """Highest available derivative order."""
        return self.jet.order

def normalize(spec: FieldSpec, x0: ArrayLike, eps0: float, *, tol_zero: float = 1e-7,
              tol_kernel: float = 1e-8, h: float = 2 ** -14) -> NormalForm:
    """Bring *spec* into normal form around the equilibrium *x0* at *eps0*.

    The hyperbolic subspace is spanned by real Schur vectors, so complex pairs stay as real blocks
    of M. Each row of A^-1 is scaled to unit max-norm with its first significant component positive.
    If the zero eigenvalue is not simple or A is ill-conditioned, a :exc:`NormalFormError` is
    raised.
    """
    point = np.asarray(x0, dtype=float)
    n = spec.dim
    jet = jet_auto(spec, point, eps0, 3, h=h)
    jacobian = jet.jacobian
    spectrum = eigenvalues(jacobian, tol_zero)
    if not spectrum.simple_zero:
        raise NormalFormError(f'Zero eigenvalue of multiplicity {spectrum.zero_count}, not simple')

    _, z, sdim = scipy.linalg.schur(jacobian, output='real',
                                    sort=lambda re, im: abs(complex(re, im)) > tol_zero)
    if sdim != n - 1:
        raise NormalFormError(f'Hyperbolic subspace of dimension {sdim}, expected {n - 1}')
    v_r = canonical(np.linalg.svd(jacobian)[2][-1])
    a0 = np.column_stack([v_r, z[:, :n - 1]])
    if np.linalg.cond(a0) > MAX_CONDITION:
        raise NormalFormError(f'Ill-conditioned change of basis ({np.linalg.cond(a0):.3g})')
    a_inv = np.array([canonical(row) / np.max(np.abs(row)) for row in np.linalg.inv(a0)])
    a = np.linalg.inv(a_inv)
    condition = np.linalg.cond(a)
    if condition > MAX_CONDITION:
        raise NormalFormError(f'Ill-conditioned change of basis ({condition:.3g})')

    omega = parameter_direction(jet.d1, tol_kernel, tol_zero)
    shear = np.zeros(n) if omega is None else omega[:n]
    t = np.zeros((n + 1, n + 1))
    t[:n, :n] = a
    t[:n, n] = shear
    t[n, n] = 1

    value = a_inv @ jet.value
    d1 = np.einsum('ia,aq,qp->ip', a_inv, jet.d1, t)
    d2 = d3 = None
    if jet.d2 is not None:
        d2 = np.einsum('ia,aqr,qp,rs->ips', a_inv, jet.d2, t, t)
    if jet.d3 is not None:
        d3 = np.einsum('ia,aqrv,qp,rs,vw->ipsw', a_inv, jet.d3, t, t, t)
    normal_jet = Jet3(value=value, d1=d1, d2=d2, d3=d3, order=jet.order, exact=jet.exact)

    m = d1[1:, 1:n].copy()
    scale = max(1.0, float(np.linalg.norm(jacobian)))
    blocks = np.concatenate([d1[:1, :n].ravel(), d1[1:, :1].ravel()])
    if np.max(np.abs(blocks), initial=0) > math.sqrt(tol_zero) * scale:
        raise NormalFormError('Failed to separate center and hyperbolic blocks')
    return NormalForm(a=a, a_inv=a_inv, m=m, shear=shear, shift=tuple(point.tolist()),
                      eps0=eps0, spectrum=spectrum, jet=normal_jet)

class CenterCoeffs(BaseModel): # type: ignore[misc]
    """Taylor coefficients of the center manifold y = h(u, e).

    h(u, e) = h01 e + h20 u^2 + h11 u e + h02 e^2. The linear term h01 vanishes whenever the normal
    form is sheared.

    .. attribute:: h01

       e coefficient.

    .. attribute:: h20

       u^2 coefficient.

    .. attribute:: h11

       u e coefficient.

    .. attribute:: h02

       e^2 coefficient.

    .. attribute:: residual

       Largest coefficient of order at most 2 of the invariance equation with h substituted.

    .. attribute:: order

       Order of the approximation.
    """

    model_config = ConfigDict(frozen=True)

    h01: tuple[float, ...]
    h20: tuple[float, ...]
    h11: tuple[float, ...]
    h02: tuple[float, ...]
    residual: float
    order: int = 2

def _solve(m: Array, b: Array) -> Array:
    if not len(m):
        return np.zeros(0)
    return np.linalg.solve(m, b)

def _invariance_residual(nf: NormalForm, h01: Array, h20: Array, h11: Array,
                         h02: Array) -> float:
    """Largest Taylor coefficient up to order 2 of h_u F - (M h + G) along a few directions."""
    n = nf.dim
    d1 = nf.jet.d1
    d2 = nf.jet.d2
    assert d2 is not None
    worst = 0.0
    for alpha, beta in ((1.0, 0.0), (0.0, 1.0), (1.0, 1.0), (1.0, -2.0)):
        # z(t) = z1 t + z2 t^2 along u = alpha t, e = beta t
        z1 = np.concatenate([[alpha], h01 * beta, [beta]])
        z2 = np.concatenate([[0.0], h20 * alpha ** 2 + h11 * alpha * beta + h02 * beta ** 2,
                             [0.0]])
        w1 = d1 @ z1
        w2 = d1 @ z2 + np.einsum('ipq,p,q->i', d2, z1, z1) / 2
        h_u0 = np.zeros(n - 1)
        h_u1 = 2 * h20 * alpha + h11 * beta
        # coefficients of h_u(t) W_u(z(t)) - W_y(z(t))
        r1 = h_u0 * w1[0] - w1[1:]
        r2 = h_u0 * w2[0] + h_u1 * w1[0] - w2[1:]
        worst = max(worst, float(np.max(np.abs(np.concatenate([r1, r2])), initial=0)))
    return worst

def center_coeffs(nf: NormalForm) -> CenterCoeffs:
    """Center manifold coefficients of order 2, solving the invariance equation order by order.

    If the residual of the invariance equation exceeds 1e-8 relative to the second derivatives, a
    :exc:`NormalFormError` is raised.
    """
    n = nf.dim
    d1 = nf.jet.d1
    d2 = nf.jet.d2
    if d2 is None:
        raise NormalFormError('Second derivatives required')
    m = nf.m
    y = slice(1, n)
    f_e = d1[0, n]
    g_e = d1[y, n]
    g_uu = d2[y, 0, 0]
    g_uy = d2[y, 0, y]
    g_ue = d2[y, 0, n]
    g_yy = d2[y, y, y]
    g_ye = d2[y, y, n]
    g_ee = d2[y, n, n]

    h01 = -_solve(m, g_e)
    h20 = -_solve(m, g_uu) / 2
    h11 = _solve(m, 2 * f_e * h20 - g_ue - g_uy @ h01)
    h02 = _solve(m, h11 * f_e - g_ee / 2 - g_ye @ h01 - np.einsum('ipq,p,q->i', g_yy, h01, h01) / 2)

    residual = _invariance_residual(nf, h01, h20, h11, h02)
    if residual > 1e-8 * (1 + np.max(np.abs(d2), initial=0)):
        raise NormalFormError(f'Invariance equation residual {residual:.3g}')
    return CenterCoeffs(h01=tuple(h01.tolist()), h20=tuple(h20.tolist()), h11=tuple(h11.tolist()),
                        h02=tuple(h02.tolist()), residual=residual)

class ReducedField(BaseModel): # type: ignore[misc]
    """Derivatives of the reduced field f(u, e) = F(u, h(u, e), e) at the origin.

    .. attribute:: f_e

       df/de, v_l dV/deps in normalized coordinates.

    .. attribute:: f_ue

       d2f/du de in sheared coordinates. f_ue det M equals the derivative of det(DxV) along the
       parameter direction of the kernel.

    .. attribute:: f_ue_unsheared

       d2F/du de in unsheared coordinates. f_ue_unsheared det M equals d det(DxV) / d eps.

    .. attribute:: f_uu

       d2f/du2, recorded as diagnostic.

    .. attribute:: f_uuu

       d3f/du3. Absent without third derivatives.
    """

    model_config = ConfigDict(frozen=True)

    f_e: float
    f_ue: float
    f_ue_unsheared: float
    f_uu: float
    f_uuu: float | None

def reduced_derivs(nf: NormalForm, cc: CenterCoeffs) -> ReducedField:
    """Derivatives of the reduced field by composing F with the center manifold."""
    n = nf.dim
    d1 = nf.jet.d1
    d2 = nf.jet.d2
    if d2 is None:
        raise NormalFormError('Second derivatives required')
    y = slice(1, n)
    h01 = np.array(cc.h01)
    h20 = np.array(cc.h20)
    h11 = np.array(cc.h11)
    f_y = d1[0, y]

    f_uu = d2[0, 0, 0] + 2 * f_y @ h20
    f_ue = d2[0, 0, n] + d2[0, 0, y] @ h01 + f_y @ h11
    f_uuu = None
    if nf.jet.d3 is not None:
        # Third-order terms of h enter only through F_y, which vanishes in normal form
        f_uuu = float(nf.jet.d3[0, 0, 0, 0] + 6 * d2[0, 0, y] @ h20)

    # dF/du de along the plain parameter axis, undoing the shear
    sheared = d2[0, 0, n]
    shear_z = nf.a_inv @ nf.shear
    f_ue_unsheared = sheared - d2[0, 0, :n] @ shear_z
    return ReducedField(f_e=float(d1[0, n]), f_ue=float(f_ue), f_ue_unsheared=float(f_ue_unsheared),
                        f_uu=float(f_uu), f_uuu=f_uuu)

class P3Value(BaseModel): # type: ignore[misc]
    """Second-order determinant combination D_uu det DzW + D_y det DzW (-M^-1 G_uu).

    .. attribute:: value

       Combination.

    .. attribute:: d_uu_det

       First summand.

    .. attribute:: d_y_term

       Second summand.
    """

    model_config = ConfigDict(frozen=True)

    value: float
    d_uu_det: float
    d_y_term: float

def _det_derivatives(nf: NormalForm) -> tuple[Array, Array]:
    if nf.jet.d3 is None:
        raise NormalFormError('Third derivatives required')
    return jacobi_gradient(nf.jet), det_hessian(nf.jet)

def p3_value(nf: NormalForm) -> P3Value:
    """Second-order determinant combination of the normal form, with its summands."""
    n = nf.dim
    gradient, hessian = _det_derivatives(nf)
    assert nf.jet.d2 is not None
    direction = -_solve(nf.m, nf.jet.d2[1:, 0, 0])
    d_uu = float(hessian[0, 0])
    d_y = float(gradient[1:n] @ direction)
    return P3Value(value=d_uu + d_y, d_uu_det=d_uu, d_y_term=d_y)

def p3_via_manifold(nf: NormalForm, cc: CenterCoeffs) -> float:
    """Second derivative of det DzW along the center curve c(u) = (u, h(u, 0), 0).

    It is D2 det [c', c'] + D det c'' with c' = (1, 0, 0) and c'' = (0, 2 h20, 0).
    """
    n = nf.dim
    gradient, hessian = _det_derivatives(nf)
    c1 = np.zeros(n + 1)
    c1[0] = 1
    c2 = np.zeros(n + 1)
    c2[1:n] = 2 * np.array(cc.h20)
    value = float(c1 @ hessian @ c1 + gradient @ c2)
    getLogger(__name__).debug('Second derivative along center curve %g', value)
    return value
