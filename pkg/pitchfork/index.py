"""Topological index of isolated zeros.

The index of a zero is the degree of V / |V| on a small sphere around it, which is sign det DxV at
nondegenerate zeros.
"""

from __future__ import annotations

from collections.abc import Callable
from logging import getLogger
import math
from typing import Literal, Union

import numpy as np
from numpy.typing import ArrayLike
from pydantic import BaseModel, ConfigDict

from .field import FieldSpec, evaluate_regular
from .smallmat import det

Certificate = dict[str, Union[int, float, str, list[float], list[int], list[list[float]]]]

class IndexFailure(ValueError):
    """Index could not be determined."""

class SingularJacobianError(IndexFailure):
    """Jacobian is singular where a nondegenerate zero was expected."""

class InconclusiveRadiusError(IndexFailure):
    """Boundary value too small to decide a sign."""

class ZeroOnBoundaryError(IndexFailure):
    """The field vanishes on the boundary sphere."""

class WindingError(IndexFailure):
    """Winding number did not settle to an integer."""

class PerturbationMismatchError(IndexFailure):
    """Two perturbations yield different index sums."""

class IndexResult(BaseModel): # type: ignore[misc]
    """Index of a zero with the witness of its computation.

    .. attribute:: value

       Index.

    .. attribute:: method

       Method the index was computed with.

    .. attribute:: certificate

       Method-specific witness, e.g. sampled boundary values.
    """

    model_config = ConfigDict(frozen=True)

    value: int
    method: Literal['sign-det', 'one-dim', 'product', 'winding', 'perturbation-sum']
    certificate: Certificate = {}

def index_nondegenerate(j: ArrayLike, tol: float = 1e-12) -> IndexResult:
    """Index of a zero with the nonsingular Jacobian *j*.

    If |det j| is at most *tol*, a :exc:`SingularJacobianError` is raised.
    """
    value = det(j)
    if abs(value) <= tol:
        raise SingularJacobianError(f'Singular Jacobian, det {value:.3g}')
    return IndexResult(value=1 if value > 0 else -1, method='sign-det', certificate={'det': value})

def index_1d(f: Callable[[float], float], u0: float, r: float, *, tol: float = 1e-14,
             samples: int = 1000) -> IndexResult:
    """Index of the zero *u0* of the scalar function *f*, from its values at u0 -+ *r*.

    The interval is sampled for further sign changes, which indicate other zeros and are logged. If
    a boundary value is at most *tol* in magnitude, an :exc:`InconclusiveRadiusError` is raised.
    """
    if not r > 0:
        raise ValueError(f'Bad radius {r}')
    left = float(f(u0 - r))
    right = float(f(u0 + r))
    if not (abs(left) > tol and abs(right) > tol):
        raise InconclusiveRadiusError(
            f'Inconclusive radius {r:g} with boundary values {left:.3g}, {right:.3g}')
    values = np.array([f(u) for u in np.linspace(u0 - r, u0 + r, samples)])
    signs = np.sign(values[np.isfinite(values) & (values != 0)])
    changes = int(np.count_nonzero(signs[1:] != signs[:-1]))
    if changes > 1:
        getLogger(__name__).warning('%d sign changes around u=%g within radius %g', changes, u0, r)
    value = (int(np.sign(right)) - int(np.sign(left))) // 2
    return IndexResult(value=value, method='one-dim',
                       certificate={'left': left, 'right': right, 'sign_changes': changes})

def index_product(ind_center: int, stable_count: int) -> int:
    """Index of a zero from the index *ind_center* of the reduced field on the center manifold.

    The hyperbolic directions contribute sign det M = (-1)^*stable_count*, with *stable_count* the
    number of eigenvalues with negative real part. This is the degree of V; the exponent is the
    stable count, not the unstable count of the fixed-point index of the flow, which differs from
    the degree by (-1)^n.
    """
    if ind_center not in {-1, 0, 1}:
        raise ValueError(f'Bad center index {ind_center}')
    if stable_count < 0:
        raise ValueError(f'Bad stable count {stable_count}')
    return ind_center * (-1) ** stable_count

def winding_2d(spec: FieldSpec, center: ArrayLike, eps: float, r: float, samples: int = 64, *,
               tol: float = 1e-12, max_samples: int = 4096) -> IndexResult:
    """Winding number of the planar field *spec* along the circle of radius *r* around *center*.

    Angle increments between consecutive samples are taken in (-pi, pi]. The number of samples
    doubles until the total is within 0.2 of an integer and no increment exceeds pi / 2, else a
    :exc:`WindingError` is raised. If the field vanishes on the circle, a
    :exc:`ZeroOnBoundaryError` is raised.
    """
    if spec.dim != 2:
        raise ValueError(f'Bad dimension {spec.dim} for winding number')
    if samples < 64:
        raise ValueError(f'Bad samples {samples}')
    c = np.asarray(center, dtype=float)
    count = samples
    while count <= max_samples:
        theta = np.linspace(0, 2 * math.pi, count, endpoint=False)
        points = c[:, None] + r * np.array([np.cos(theta), np.sin(theta)])
        values = evaluate_regular(spec, points, eps)
        z = values[0] + 1j * values[1]
        if not np.all(np.isfinite(z)):
            raise WindingError(f'Field undefined on the circle of radius {r:g}')
        minimum = float(np.min(np.abs(z)))
        if minimum <= tol:
            raise ZeroOnBoundaryError(f'Zero on the circle of radius {r:g}')
        steps = np.angle(np.roll(z, -1) / z)
        total = float(np.sum(steps)) / (2 * math.pi)
        value = round(total)
        if abs(total - value) < 0.2 and np.max(np.abs(steps)) < math.pi / 2:
            return IndexResult(value=value, method='winding',
                               certificate={'samples': count, 'total': total,
                                            'min_abs': minimum})
        count *= 2
    raise WindingError(f'No integer winding number with {max_samples} samples')

def _boundary(dim: int, r: float, rng: np.random.Generator) -> np.ndarray:
    if dim == 1:
        return np.array([[-r, r]])
    if dim == 2:
        theta = np.linspace(0, 2 * math.pi, 256, endpoint=False)
        return r * np.array([np.cos(theta), np.sin(theta)])
    directions = rng.standard_normal((dim, 2000))
    return r * directions / np.linalg.norm(directions, axis=0)

def index_by_perturbation(spec: FieldSpec, center: ArrayLike, eps: float, r: float, *,
                          seed: int = 0, grid: int = 21, tol_res: float = 1e-10,
                          tol: float = 1e-12) -> IndexResult:
    """Sum of sign det DxV over the zeros of V - eta in the ball of radius *r* around *center*.

    The constant eta has magnitude 1e-3 min |V| over the boundary sphere and a random direction.
    Two perturbations drawn with *seed* and *seed* + 1 must agree, else a
    :exc:`PerturbationMismatchError` is raised.
    """
    # pylint: disable=import-outside-toplevel,cyclic-import
    from .equilibria import EquilibriumError, find_zeros_in_ball
    c = np.asarray(center, dtype=float)
    boundary = c[:, None] + _boundary(spec.dim, r, np.random.default_rng(seed))
    values = evaluate_regular(spec, boundary, eps)
    norms = np.linalg.norm(values, axis=0)
    if not np.all(np.isfinite(norms)):
        raise IndexFailure(f'Field undefined on the sphere of radius {r:g}')
    minimum = float(np.min(norms))
    if minimum <= tol:
        raise ZeroOnBoundaryError(f'Zero on the sphere of radius {r:g}')

    perturbations: list[list[float]] = []
    sums: list[int] = []
    counts: list[int] = []
    for s in (seed, seed + 1):
        direction = np.random.default_rng(s).standard_normal(spec.dim)
        eta = 1e-3 * minimum * direction / np.linalg.norm(direction)
        try:
            zeros = find_zeros_in_ball(spec.offset(-eta), c, r, eps, grid, tol_res=tol_res)
        except EquilibriumError as e:
            raise IndexFailure(f'Failed to find zeros of perturbed field ({e})') from e
        if any(zero.degenerate for zero in zeros):
            raise IndexFailure('Degenerate zero of perturbed field')
        perturbations.append(eta.tolist())
        counts.append(len(zeros))
        sums.append(sum(1 if zero.det > 0 else -1 for zero in zeros))
    if sums[0] != sums[1]:
        raise PerturbationMismatchError(f'Perturbations disagree with index sums {sums}')
    return IndexResult(value=sums[0], method='perturbation-sum',
                       certificate={'perturbations': perturbations, 'counts': counts,
                                    'min_abs': minimum})

def index_local(spec: FieldSpec, x: ArrayLike, eps: float, r: float, *, seed: int = 0,
                grid: int = 21, tol_res: float = 1e-10) -> IndexResult:
    """Index of the isolated zero *x* by the best available method for its dimension.

    *r* must separate *x* from all other zeros.
    """
    point = np.asarray(x, dtype=float)
    if spec.dim == 1:
        return index_1d(lambda u: float(evaluate_regular(spec, [u], eps)[0]), float(point[0]), r)
    if spec.dim == 2:
        return winding_2d(spec, point, eps, r)
    return index_by_perturbation(spec, point, eps, r, seed=seed, grid=grid, tol_res=tol_res)
