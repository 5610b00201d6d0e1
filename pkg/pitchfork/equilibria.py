"""Location, counting and continuation of equilibria."""

from __future__ import annotations

from collections.abc import Callable
from logging import getLogger
import math
from typing import Literal

import numpy as np
from numpy.typing import ArrayLike, NDArray
from pydantic import BaseModel, ConfigDict, model_validator
from scipy.optimize import brentq

from .field import FieldError, FieldSpec, evaluate_regular, jacobian_batch, jet_auto
from .index import IndexFailure, IndexResult, SingularJacobianError, index_nondegenerate
from .smallmat import MatrixError, Spectrum, det, eigenvalues
from .util import timer

Array = NDArray[np.float64]

BUDGET = 200000
SCAN_SAMPLES = 20001
STEP_TOL = 1e-12

class EquilibriumError(ValueError):
    """Equilibrium could not be located."""

class NonConvergenceError(EquilibriumError):
    """Newton's method failed to converge."""

class BudgetError(EquilibriumError):
    """Zero search exceeds the seed budget."""

class BallExitError(EquilibriumError):
    """Iteration left the ball it is confined to."""

class NonContractionError(EquilibriumError):
    """Newton map is not contracting on the ball."""

class Equilibrium(BaseModel): # type: ignore[misc]
    """Located zero of V(., eps).

    .. attribute:: x

       Position.

    .. attribute:: eps

       Parameter.

    .. attribute:: residual

       |V(x, eps)|.

    .. attribute:: spectrum

       Eigenvalues of DxV. Absent if an eigenvalue is too close to the imaginary axis to classify.

    .. attribute:: det

       det DxV.

    .. attribute:: degenerate

       Indicates if DxV is numerically singular.

    .. attribute:: index

       Index, present for nondegenerate zeros or once determined.

    .. attribute:: newton_iters

       Number of Newton iterations it took to locate the zero.
    """

    model_config = ConfigDict(frozen=True)

    x: tuple[float, ...]
    eps: float
    residual: float
    spectrum: Spectrum | None
    det: float
    degenerate: bool
    index: IndexResult | None = None
    newton_iters: int = 0

    @property
    def point(self) -> Array:
        """Position as array."""
        return np.array(self.x)

    @property
    def stable(self) -> bool:
        """Indicates if all eigenvalues have negative real part."""
        return bool(self.spectrum and self.spectrum.stable)

def cluster_radius(tol_res: float) -> float:
    """Distance below which two located zeros are considered the same."""
    return 10 * math.sqrt(tol_res)

def make_equilibrium(spec: FieldSpec, x: ArrayLike, eps: float, *, newton_iters: int = 0,
                     tol_res: float = 1e-10, tol_zero: float = 1e-7) -> Equilibrium:
    """Equilibrium record for the zero *x* of *spec* at *eps*.

    The Jacobian is taken from exact jets, or from finite differences at singular jet points.
    """
    point = np.asarray(x, dtype=float)
    residual = float(np.linalg.norm(evaluate_regular(spec, point, eps)))
    try:
        jacobian = jet_auto(spec, point, eps, 1).jacobian
    except FieldError:
        getLogger(__name__).warning('No Jacobian at zero x=%s, eps=%g', point.tolist(), eps)
        return Equilibrium(x=tuple(point.tolist()), eps=eps, residual=residual, spectrum=None,
                           det=math.nan, degenerate=True, newton_iters=newton_iters)
    try:
        spectrum: Spectrum | None = eigenvalues(jacobian, tol_zero)
    except MatrixError:
        spectrum = None
    moduli = np.abs(np.linalg.eigvals(jacobian))
    degenerate = bool(np.min(moduli) <=
                      cluster_radius(tol_res) * max(1.0, float(np.linalg.norm(jacobian))))
    index = None
    if not degenerate:
        try:
            index = index_nondegenerate(jacobian)
        except IndexFailure:
            degenerate = True
    return Equilibrium(x=tuple(point.tolist()), eps=eps, residual=residual, spectrum=spectrum,
                       det=det(jacobian), degenerate=degenerate, index=index,
                       newton_iters=newton_iters)

def _converged(residual: Array, step: Array, x: Array, tol_res: float) -> Array:
    return (residual == 0) | ((residual <= tol_res) &
                              (step <= math.sqrt(tol_res) * (1 + np.linalg.norm(x, axis=0))))

def newton(spec: FieldSpec, x0: ArrayLike, eps: float, tol_res: float = 1e-10,
           max_iters: int = 100, *, tol_zero: float = 1e-7, settle: bool = True) -> Equilibrium:
    """Locate a zero of *spec* at *eps* by Newton's method from *x0*.

    Steps are minimum-norm least-squares solutions, damped by halving until the residual decreases.
    Once |V| is at most *tol_res*, the iteration goes on until the step is at most
    :data:`STEP_TOL` (1 + |x|), so that degenerate zeros, where Newton's method converges only
    linearly, are located to the same precision. If that stalls and *settle* is true, the zero is
    still accepted if the step is at most sqrt(*tol_res*) (1 + |x|).

    If the Jacobian is singular and V is not in its range, an :exc:`index.SingularJacobianError` is
    raised. If the iterate leaves the ball of radius 10 max(1, |x0|) around *x0*, fails to descend
    or *max_iters* is exceeded, a :exc:`NonConvergenceError` is raised.
    """
    start = np.asarray(x0, dtype=float)
    n = spec.dim
    if start.shape != (n, ):
        raise ValueError(f'Bad point shape {start.shape} for dim {n}')
    bound = 10 * max(1.0, float(np.linalg.norm(start)))
    x = start
    for iteration in range(max_iters + 1):
        values, d1 = jacobian_batch(spec, x[:, None], eps)
        value = values[:, 0]
        jacobian = d1[0, :, :n]
        residual = float(np.linalg.norm(value))
        if not (math.isfinite(residual) and np.all(np.isfinite(jacobian))):
            # Removable singular point where the continued field vanishes
            if float(np.linalg.norm(evaluate_regular(spec, x, eps))) <= tol_res:
                return make_equilibrium(spec, x, eps, newton_iters=iteration, tol_res=tol_res,
                                        tol_zero=tol_zero)
            raise NonConvergenceError(f'Field undefined at iterate {x.tolist()}')
        if residual == 0:
            step = np.zeros(n)
        else:
            step = np.linalg.lstsq(jacobian, -value, rcond=None)[0]
            if np.linalg.norm(jacobian @ step + value) > 1e-3 * residual:
                raise SingularJacobianError(
                    f'Singular Jacobian at {x.tolist()} with residual outside its range')
        scale = 1 + float(np.linalg.norm(x))
        size = float(np.linalg.norm(step))
        # Near enough to stop if refinement stalls
        settled = settle and residual <= tol_res and size <= math.sqrt(tol_res) * scale
        if residual == 0 or (residual <= tol_res and size <= STEP_TOL * scale):
            return make_equilibrium(spec, x, eps, newton_iters=iteration, tol_res=tol_res,
                                    tol_zero=tol_zero)
        if iteration == max_iters:
            if settled:
                return make_equilibrium(spec, x, eps, newton_iters=iteration, tol_res=tol_res,
                                        tol_zero=tol_zero)
            break

        t = 1.0
        for _ in range(9):
            trial = x + t * step
            trial_residual = float(np.linalg.norm(evaluate_regular(spec, trial, eps)))
            if trial_residual < residual:
                break
            t /= 2
        else:
            if settled:
                return make_equilibrium(spec, x, eps, newton_iters=iteration, tol_res=tol_res,
                                        tol_zero=tol_zero)
            raise NonConvergenceError(f'No descent from {x.tolist()}')
        x = trial
        if np.linalg.norm(x - start) > bound:
            raise NonConvergenceError(f'Divergence from {start.tolist()}')
    raise NonConvergenceError(f'No convergence after {max_iters} iterations')

def newton_scaled_1d(f: Callable[[float, float], float], eps: float, delta: float, *,
                     max_iters: int = 100, samples: int = 16) -> float:
    """Locate the zero of u -> *f(u, eps)* in the ball of radius |eps|^(1 - *delta*) around 0.

    Newton's method starts at 0 with finite-difference derivatives. If the iterate leaves the ball,
    a :exc:`BallExitError` is raised. The Newton map F(u) = u - f / f' is checked to contract by
    sampling |F'| < 1 at *samples* points of the ball, else a :exc:`NonContractionError` is raised.
    """
    if eps == 0:
        raise ValueError('Bad eps 0')
    if not 0 < delta < 1:
        raise ValueError(f'Bad delta {delta}')
    rho = abs(eps) ** (1 - delta)
    h = 1e-6 * rho

    def derivative(u: float) -> float:
        return (f(u + h, eps) - f(u - h, eps)) / (2 * h)

    def newton_map(u: float) -> float:
        return u - f(u, eps) / derivative(u)

    outer = 1e-3 * rho
    for u in np.linspace(-rho + outer, rho - outer, samples):
        slope = (newton_map(u + outer) - newton_map(u - outer)) / (2 * outer)
        if not abs(slope) < 1:
            raise NonContractionError(
                f'Newton map not contracting at u={u:g} with slope {slope:.3g}')

    u = 0.0
    for _ in range(max_iters):
        value = f(u, eps)
        if value == 0:
            return u
        step = value / derivative(u)
        u -= step
        if abs(u) > rho:
            raise BallExitError(f'Iterate {u:g} left the ball of radius {rho:g}')
        if abs(step) <= 1e-15 + 1e-12 * rho:
            return u
    raise NonConvergenceError(f'No convergence after {max_iters} iterations')

def _grid_newton(spec: FieldSpec, seeds: Array, eps: float, tol_res: float,
                 max_iters: int) -> Array:
    """Newton's method from all *seeds* at once, returning the converged points."""
    n = spec.dim
    x = seeds.copy()
    bound = 10 * max(1.0, float(np.max(np.linalg.norm(seeds, axis=0), initial=0)))
    active = np.ones(x.shape[1], dtype=bool)
    done = np.zeros(x.shape[1], dtype=bool)
    for _ in range(max_iters):
        index = np.flatnonzero(active)
        if not len(index):
            break
        points = x[:, index]
        values, d1 = jacobian_batch(spec, points, eps)
        jacobians = d1[:, :, :n]
        residuals = np.linalg.norm(values, axis=0)
        finite = np.isfinite(residuals) & np.all(np.isfinite(jacobians), axis=(1, 2))
        if not np.all(finite):
            singular = index[~finite]
            regular = np.linalg.norm(evaluate_regular(spec, x[:, singular], eps), axis=0)
            done[singular[regular <= tol_res]] = True
        active[index[~finite]] = False
        index, points, values, jacobians, residuals = (
            index[finite], points[:, finite], values[:, finite], jacobians[finite],
            residuals[finite])
        if not len(index):
            break
        steps = -(np.linalg.pinv(jacobians, rcond=1e-12) @ values.T[..., None])[..., 0].T
        converged = _converged(residuals, np.linalg.norm(steps, axis=0), points, tol_res)
        done[index[converged]] = True
        active[index[converged]] = False
        index, points, steps, residuals = (index[~converged], points[:, ~converged],
                                           steps[:, ~converged], residuals[~converged])

        t = np.ones(len(index))
        trial = points + steps
        for _ in range(8):
            trial_residuals = np.linalg.norm(evaluate_regular(spec, trial, eps), axis=0)
            worse = ~(trial_residuals < residuals)
            if not np.any(worse):
                break
            t[worse] /= 2
            trial = points + t * steps
        x[:, index] = trial
        active[index[np.linalg.norm(trial, axis=0) > bound]] = False
    return x[:, done]

def _scan_1d(spec: FieldSpec, center: float, r: float, eps: float) -> list[float]:
    """Zeros of a scalar field by a dense sign-change scan refined with Brent's method."""
    def f(u: float) -> float:
        return float(evaluate_regular(spec, [u], eps)[0])

    grid = np.linspace(center - r, center + r, SCAN_SAMPLES)
    values = evaluate_regular(spec, grid[None, :], eps)[0]
    roots = [float(u) for u, value in zip(grid, values) if value == 0]
    finite = np.flatnonzero(np.isfinite(values) & (values != 0))
    for i, j in zip(finite[:-1], finite[1:]):
        if np.sign(values[i]) != np.sign(values[j]):
            roots.append(float(brentq(f, grid[i], grid[j], xtol=1e-15,
                                      rtol=4 * np.finfo(float).eps)))
    return roots

def _cluster(candidates: list[tuple[Array, bool, float]],
             radius: float) -> list[tuple[Array, bool, float]]:
    """Merge *candidates* closer than *radius*.

    Certified candidates represent their cluster first, then those of least residual.
    """
    representatives: list[tuple[Array, bool, float]] = []
    for candidate in sorted(candidates, key=lambda c: (not c[1], c[2], tuple(c[0]))):
        if all(np.linalg.norm(candidate[0] - other[0]) > radius for other in representatives):
            representatives.append(candidate)
    return representatives

def find_zeros_in_ball(spec: FieldSpec, center: ArrayLike, r: float, eps: float,
                       grid_per_axis: int = 21, *, tol_res: float = 1e-10, tol_zero: float = 1e-7,
                       max_iters: int = 100) -> list[Equilibrium]:
    """All zeros of *spec* at *eps* within the ball of radius *r* around *center*.

    Newton's method runs from the center and from the nodes of a grid with *grid_per_axis* points
    per axis over the enclosing cube. In one dimension, a dense sign-change scan contributes further
    zeros, which are certified by the sign change. Candidates closer than :func:`cluster_radius` are
    merged. Grid candidates are kept only if :func:`newton` converges from them without settling,
    as the grid pass accepts points of small residual where V is flat. The result is ordered
    lexicographically. If the search needs more than :data:`BUDGET` seed coordinates, a
    :exc:`BudgetError` is raised.
    """
    logger = getLogger(__name__)
    c = np.asarray(center, dtype=float)
    n = spec.dim
    if c.shape != (n, ):
        raise ValueError(f'Bad center shape {c.shape} for dim {n}')
    if not r > 0:
        raise ValueError(f'Bad radius {r}')
    if grid_per_axis < 3:
        raise ValueError(f'Bad grid {grid_per_axis}')
    if n * grid_per_axis ** n > BUDGET:
        raise BudgetError(f'Zero search needs {n * grid_per_axis ** n} seed coordinates, budget is '
                          f'{BUDGET}')

    with timer() as t:
        axes = [np.linspace(c[i] - r, c[i] + r, grid_per_axis) for i in range(n)]
        seeds = np.array([axis.ravel() for axis in np.meshgrid(*axes, indexing='ij')])
        seeds = np.hstack([seeds, c[:, None]])
        candidates = [(x, False) for x in _grid_newton(spec, seeds, eps, tol_res, max_iters).T]
        if n == 1:
            candidates += [(np.array([u]), True) for u in _scan_1d(spec, float(c[0]), r, eps)]
        radius = cluster_radius(tol_res)
        inside = [
            (x, certified, float(np.linalg.norm(evaluate_regular(spec, x, eps))))
            for x, certified in candidates if np.linalg.norm(x - c) <= r * (1 + 1e-12)]

        zeros: list[Equilibrium] = []
        for x, certified, _ in _cluster(inside, radius):
            if certified:
                zero = make_equilibrium(spec, x, eps, tol_res=tol_res, tol_zero=tol_zero)
            else:
                try:
                    zero = newton(spec, x, eps, tol_res, max_iters, tol_zero=tol_zero,
                                  settle=False)
                except (EquilibriumError, IndexFailure):
                    continue
            if (zero.residual <= tol_res and np.linalg.norm(zero.point - c) <= r * (1 + 1e-12)
                    and all(np.linalg.norm(zero.point - other.point) > radius
                            for other in zeros)):
                zeros.append(zero)
        zeros.sort(key=lambda zero: zero.x)
    logger.info('Found %d zero(s) at eps=%g (%.1fms)', len(zeros), eps, t() * 1000)
    return zeros

def count_two_sided(spec: FieldSpec, x0: ArrayLike, eps0: float, delta_eps: float, r: float, *,
                    grid: int = 21, tol_res: float = 1e-10,
                    tol_zero: float = 1e-7) -> tuple[int, int]:
    """Numbers of zeros within radius *r* of *x0* at *eps0* -+ *delta_eps*."""
    if not delta_eps > 0:
        raise ValueError(f'Bad delta_eps {delta_eps}')
    minus, plus = (
        len(find_zeros_in_ball(spec, x0, r, eps, grid, tol_res=tol_res, tol_zero=tol_zero))
        for eps in (eps0 - delta_eps, eps0 + delta_eps))
    return minus, plus

EndReason = Literal['range-end', 'fold', 'ball-exit']

class Branch(BaseModel): # type: ignore[misc]
    """Curve of equilibria as a graph over eps.

    .. attribute:: points

       Equilibria, ordered by strictly increasing eps.

    .. attribute:: origin

       Equilibrium the branch was continued from.

    .. attribute:: lo_reason

       Why the branch ends at the lower eps.

    .. attribute:: hi_reason

       Why the branch ends at the upper eps.
    """

    model_config = ConfigDict(frozen=True)

    points: tuple[Equilibrium, ...]
    origin: Equilibrium
    lo_reason: EndReason
    hi_reason: EndReason

    @model_validator(mode='after')
    def _check_order(self) -> Branch:
        if any(b.eps <= a.eps for a, b in zip(self.points, self.points[1:])):
            raise ValueError('Non-monotone branch')
        return self

def _continue(spec: FieldSpec, seed: Equilibrium, limit: float, max_step: float,
              center: Array | None, radius: float | None, tol_res: float,
              tol_zero: float) -> tuple[list[Equilibrium], EndReason]:
    direction = 1.0 if limit > seed.eps else -1.0
    points = [seed]
    step = max_step
    halvings = 0
    while abs(limit - points[-1].eps) > 1e-12 * max(1.0, abs(limit)):
        last = points[-1]
        eps = last.eps + direction * min(step, abs(limit - last.eps))
        if abs(limit - eps) <= 1e-12 * max(1.0, abs(limit)):
            eps = limit
        prediction = last.point
        if len(points) > 1:
            before = points[-2]
            prediction = last.point + (last.point - before.point) * (eps - last.eps) / (
                last.eps - before.eps)
        try:
            zero = newton(spec, prediction, eps, tol_res, tol_zero=tol_zero)
            jump = float(np.linalg.norm(zero.point - prediction))
            previous = (float(np.linalg.norm(last.point - points[-2].point))
                        if len(points) > 1 else 0.0)
            if jump > 10 * max(abs(eps - last.eps), previous, cluster_radius(tol_res)):
                raise NonConvergenceError(f'Jump of {jump:g} at eps={eps:g}')
        except (EquilibriumError, IndexFailure):
            halvings += 1
            if halvings > 6:
                return points, 'fold'
            step /= 2
            continue
        if (center is not None and radius is not None
                and np.linalg.norm(zero.point - center) > radius):
            return points, 'ball-exit'
        points.append(zero)
        halvings = 0
        step = min(2 * step, max_step)
    return points, 'range-end'

def continue_branch(spec: FieldSpec, seed: Equilibrium, eps_lo: float, eps_hi: float,
                    max_step: float, *, center: ArrayLike | None = None,
                    radius: float | None = None, tol_res: float = 1e-10,
                    tol_zero: float = 1e-7) -> Branch:
    """Continue the equilibrium *seed* over the parameter range [*eps_lo*, *eps_hi*].

    Each step predicts by secant extrapolation and corrects with Newton's method. A failed step is
    halved, and after 6 halvings the branch ends at a fold. If *center* and *radius* are given, the
    branch ends where it leaves that ball.
    """
    if not eps_lo <= seed.eps <= eps_hi:
        raise ValueError(f'Seed eps {seed.eps} outside of [{eps_lo}, {eps_hi}]')
    if not max_step > 0:
        raise ValueError(f'Bad max_step {max_step}')
    c = None if center is None else np.asarray(center, dtype=float)
    lower, lo_reason = _continue(spec, seed, eps_lo, max_step, c, radius, tol_res, tol_zero)
    upper, hi_reason = _continue(spec, seed, eps_hi, max_step, c, radius, tol_res, tol_zero)
    points = [*reversed(lower[1:]), *upper]
    return Branch(points=tuple(points), origin=seed, lo_reason=lo_reason, hi_reason=hi_reason)
