"""Dense linear algebra for small matrices.

Determinants, adjugates, kernels and eigenvalues, as well as the derivatives of det(DxV) by Jacobi's
formula.

.. data:: MAX_DIM

   Largest supported matrix dimension.
"""

from __future__ import annotations

from itertools import permutations

import numpy as np
from numpy.typing import ArrayLike, NDArray
from pydantic import BaseModel, ConfigDict, Field, model_validator
import scipy.linalg

from .field import FieldSpec, Jet3, jet_auto

Array = NDArray[np.float64]

MAX_DIM = 12

class MatrixError(ValueError):
    """Error concerning a matrix."""

class NearImaginaryError(MatrixError):
    """Eigenvalue too close to the imaginary axis to classify."""

class EigenvalueError(MatrixError):
    """Eigenvalue computation did not converge."""

def _square(m: ArrayLike) -> Array:
    matrix = np.asarray(m, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise MatrixError(f'Non-square matrix of shape {matrix.shape}')
    if not np.all(np.isfinite(matrix)):
        raise MatrixError('Non-finite matrix entries')
    return matrix

def det(m: ArrayLike) -> float:
    """Determinant of *m* by LU decomposition with partial pivoting."""
    matrix = _square(m)
    if not matrix.size:
        return 1.0
    return float(scipy.linalg.det(matrix))

def adjugate(m: ArrayLike) -> Array:
    """Adjugate of *m*, the transposed cofactor matrix.

    Cofactors are computed explicitly, so the adjugate is accurate at singular matrices as well.
    """
    matrix = _square(m)
    n = len(matrix)
    adj = np.zeros((n, n))
    for i in range(n):
        rows = np.delete(matrix, i, axis=0)
        for j in range(n):
            adj[j, i] = (-1) ** (i + j) * det(np.delete(rows, j, axis=1))
    return adj

def canonical(vector: Array, tol: float = 1e-12) -> Array:
    """*vector* with its first significant component positive."""
    significant = np.flatnonzero(np.abs(vector) > tol * np.max(np.abs(vector), initial=0))
    if len(significant) and vector[significant[0]] < 0:
        return -vector
    return vector

def kernel_right(m: ArrayLike, tol: float = 1e-8, atol: float = 0) -> list[Array]:
    """Orthonormal basis of the numerical right null space of *m*.

    Singular values at most max(*tol* sigma_max, *atol*) count as zero. Each basis vector has its
    first significant component positive.
    """
    matrix = np.asarray(m, dtype=float)
    if matrix.ndim != 2:
        raise MatrixError(f'Bad matrix shape {matrix.shape}')
    if not np.all(np.isfinite(matrix)):
        raise MatrixError('Non-finite matrix entries')
    _, s, vh = np.linalg.svd(matrix, full_matrices=True)
    threshold = max(tol * np.max(s, initial=0), atol)
    rank = int(np.count_nonzero(s > threshold))
    return [canonical(v) for v in vh[rank:]]

def kernel_left(m: ArrayLike, tol: float = 1e-8, atol: float = 0) -> list[Array]:
    """Orthonormal basis of the numerical left null space of *m*.

    See :func:`kernel_right`.
    """
    return kernel_right(np.asarray(m, dtype=float).T, tol, atol)

def parameter_direction(m_ext: ArrayLike, tol: float = 1e-8, atol: float = 0) -> Array | None:
    """Kernel direction omega of the extended Jacobian *m_ext* with last component 1.

    omega is the projection of the parameter axis onto the kernel, scaled. If the parameter axis is
    (nearly) orthogonal to the kernel, ``None`` is returned.
    """
    matrix = np.asarray(m_ext, dtype=float)
    basis = kernel_right(matrix, tol, atol)
    if not basis:
        return None
    k = np.array(basis)
    projection = k.T @ k[:, -1]
    if projection[-1] <= tol:
        return None
    return projection / projection[-1]

class Spectrum(BaseModel): # type: ignore[misc]
    """Eigenvalues of a square matrix, classified by their real part.

    .. attribute:: eigenvalues

       Eigenvalues as pairs of real and imaginary part, sorted.

    .. attribute:: zero_count

       Number of eigenvalues with modulus at most *tol_zero*.

    .. attribute:: unstable_count

       Number of eigenvalues with real part greater than *tol_zero*.

    .. attribute:: stable_count

       Number of eigenvalues with real part less than -*tol_zero*.
    """

    model_config = ConfigDict(frozen=True)

    eigenvalues: tuple[tuple[float, float], ...]
    zero_count: int = Field(ge=0)
    unstable_count: int = Field(ge=0)
    stable_count: int = Field(ge=0)

    @model_validator(mode='after')
    def _check_counts(self) -> Spectrum:
        if self.zero_count + self.unstable_count + self.stable_count != len(self.eigenvalues):
            raise ValueError('Bad eigenvalue counts')
        return self

    @property
    def dim(self) -> int:
        """Dimension of the matrix."""
        return len(self.eigenvalues)

    @property
    def simple_zero(self) -> bool:
        """Indicates if exactly one eigenvalue is zero."""
        return self.zero_count == 1

    @property
    def hyperbolic(self) -> bool:
        """Indicates if no eigenvalue is zero."""
        return self.zero_count == 0

    @property
    def stable(self) -> bool:
        """Indicates if all eigenvalues have negative real part."""
        return self.stable_count == self.dim

    def min_modulus(self) -> float:
        """Smallest eigenvalue modulus."""
        return min((abs(complex(*value)) for value in self.eigenvalues), default=float('inf'))

def eigenvalues(m: ArrayLike, tol_zero: float = 1e-7) -> Spectrum:
    """Eigenvalues of *m*, classified with the threshold *tol_zero*.

    An eigenvalue that is not zero but has a real part of at most *tol_zero* raises a
    :exc:`NearImaginaryError`.
    """
    matrix = _square(m)
    if len(matrix) > MAX_DIM:
        raise MatrixError(f'Matrix dimension {len(matrix)} exceeds {MAX_DIM}')
    try:
        values = np.linalg.eigvals(matrix)
    except np.linalg.LinAlgError as e:
        raise EigenvalueError(f'Eigenvalue computation failed ({e})') from e
    zero = unstable = stable = 0
    for value in values:
        if abs(value) <= tol_zero:
            zero += 1
        elif abs(value.real) <= tol_zero:
            raise NearImaginaryError(f'Near-imaginary eigenvalue {value:.6g}')
        elif value.real > 0:
            unstable += 1
        else:
            stable += 1
    pairs = sorted((float(value.real), float(value.imag)) for value in values)
    return Spectrum(eigenvalues=tuple(pairs), zero_count=zero, unstable_count=unstable,
                    stable_count=stable)

def jacobi_gradient(jet: Jet3) -> Array:
    """Gradient of det(DxV) over (x, eps) from a *jet* of at least order 2.

    Each component is tr(adj(DxV) dv DxV) by Jacobi's formula.
    """
    if jet.d2 is None:
        raise MatrixError('Second derivatives required')
    n = jet.dim
    return np.einsum('ab,bav->v', adjugate(jet.jacobian), jet.d2[:, :n, :])

def det_gradient(spec: FieldSpec, x: ArrayLike, eps: float, *, h: float = 2 ** -14) -> Array:
    """Gradient of det(DxV) of *spec* over (x, eps) at *x* and *eps*.

    Where exact jets are not defined, finite differences with step *h* are used.
    """
    return jacobi_gradient(jet_auto(spec, x, eps, 2, h=h))

def det_hessian(jet: Jet3) -> Array:
    """Hessian of det(DxV) over (x, eps) from a *jet* of order 3.

    det is multilinear in the columns of DxV, so the second derivative is the sum of determinants
    with one column replaced by its second derivative and with two columns replaced by first
    derivatives. This holds at singular Jacobians as well.
    """
    if jet.d2 is None or jet.d3 is None:
        raise MatrixError('Third derivatives required')
    n = jet.dim
    m = n + 1
    j = jet.jacobian
    hessian = np.zeros((m, m))
    for v in range(m):
        for w in range(v, m):
            total = 0.0
            for a in range(n):
                replaced = j.copy()
                replaced[:, a] = jet.d3[:, a, v, w]
                total += det(replaced)
            for a, b in permutations(range(n), 2):
                replaced = j.copy()
                replaced[:, a] = jet.d2[:, a, v]
                replaced[:, b] = jet.d2[:, b, w]
                total += det(replaced)
            hessian[v, w] = hessian[w, v] = total
    return hessian
