"""Command-Line interface."""

from __future__ import annotations

from argparse import ArgumentParser
import asyncio
from asyncio import CancelledError, Semaphore, Task, create_task, current_task, get_running_loop
from collections.abc import Callable, Generator, Sequence
from configparser import ConfigParser, ParsingError, SectionProxy
from contextlib import contextmanager
from functools import partial
from importlib import resources
import logging
from logging import getLogger
from pathlib import Path
import signal
import sys
from threading import current_thread, main_thread
from typing import Literal, TextIO, TypeVar, cast

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from . import context
from .criteria import Classification, ConditionReport, Tolerances, classify
from .equilibria import (Branch, Equilibrium, cluster_radius, continue_branch,
                         find_zeros_in_ball)
from .field import FieldError, Problem, bundled_problems, load_problem, parse_problem
from .index import IndexFailure, index_local
from .util import cancel, format_number, format_vector, write_csv

_T = TypeVar('_T')

_TOLERANCES = ('tol_res', 'tol_zero', 'tol_kernel', 'tol_p1', 'tol_p2', 'tol_p3', 'fd_step', 'grid',
               'seed')

class RunConfig(BaseModel): # type: ignore[misc]
    """Configuration of a command.

    .. attribute:: command

       Command to run.

    .. attribute:: problem_path

       Path of the problem file, or name of a bundled problem.

    .. attribute:: radius

       Radius of the ball in which zeros are considered. Without one, the problem's radius applies.

    .. attribute:: default_radius

       Radius if neither the command nor the problem give one.

    .. attribute:: center

       Center of the ball for *sweep* and *diagram*, by default the problem point.

    .. attribute:: delta_eps

       Parameter offset of the zero counts of *analyze*, chosen automatically if absent.

    .. attribute:: eps_lo

       Lower end of the parameter range of *sweep* and *diagram*.

    .. attribute:: eps_hi

       Upper end of the parameter range.

    .. attribute:: steps

       Number of parameter values of the range.

    .. attribute:: tolerances

       Numerical thresholds.

    .. attribute:: output_path

       Output file, standard output if absent.

    .. attribute:: json_output

       Indicates if *analyze* writes JSON instead of text.

    .. attribute:: jobs

       Number of parameter values processed concurrently.
    """

    model_config = ConfigDict(frozen=True)

    command: Literal['analyze', 'sweep', 'diagram']
    problem_path: str
    radius: float | None = Field(default=None, gt=0)
    default_radius: float = Field(default=0.5, gt=0)
    center: tuple[float, ...] | None = None
    delta_eps: float | None = Field(default=None, gt=0)
    eps_lo: float | None = None
    eps_hi: float | None = None
    steps: int = Field(default=21, ge=2)
    tolerances: Tolerances = Tolerances()
    output_path: str | None = None
    json_output: bool = False
    jobs: int = Field(default=4, ge=1)

    @model_validator(mode='after')
    def _check_range(self) -> RunConfig:
        if self.command != 'analyze':
            if self.eps_lo is None or self.eps_hi is None:
                raise ValueError('Missing parameter range')
            if self.eps_lo > self.eps_hi:
                raise ValueError(f'Bad parameter range [{self.eps_lo}, {self.eps_hi}]')
        return self

    def eps_values(self) -> list[float]:
        """Parameter values of the range, a single one if it is empty."""
        assert self.eps_lo is not None and self.eps_hi is not None
        if self.eps_lo == self.eps_hi:
            return [self.eps_lo]
        return [float(eps) for eps in np.linspace(self.eps_lo, self.eps_hi, self.steps)]

def load(cfg: RunConfig) -> Problem:
    """Load the problem of *cfg*."""
    path = Path(cfg.problem_path)
    if not path.exists() and cfg.problem_path in bundled_problems():
        return load_problem(cfg.problem_path)
    return parse_problem(path.read_text(encoding='utf-8'))

def _radius(cfg: RunConfig, problem: Problem) -> float:
    return cfg.radius or problem.radius or cfg.default_radius

def _center(cfg: RunConfig, problem: Problem) -> np.ndarray:
    center = np.array(cfg.center if cfg.center is not None else problem.point)
    if center.shape != (problem.spec.dim, ):
        raise ValueError(f'Bad center {cfg.center} for dim {problem.spec.dim}')
    return center

async def _run_limited(jobs: int, calls: Sequence[Callable[[], _T]]) -> list[_T]:
    """Run *calls* in worker threads, at most *jobs* at a time, and return results in order."""
    semaphore = Semaphore(jobs)

    async def run(call: Callable[[], _T]) -> _T:
        async with semaphore:
            return await asyncio.to_thread(call)

    tasks = [create_task(run(call)) for call in calls]
    try:
        return [await task for task in tasks]
    finally:
        for task in tasks:
            if not task.done():
                await cancel(cast(Task[object], task))

def _mark(passed: bool | None) -> str:
    if passed is None:
        return 'UNDETERMINED'
    return 'PASS' if passed else 'FAIL'

def _yes(value: bool) -> str:
    return 'yes' if value else 'no'

def format_report(problem: Problem, report: ConditionReport,
                  classification: Classification) -> str:
    """Text report of *report* and *classification*, one key: value line each."""
    names = ', '.join(problem.spec.var_names)
    lines = [f'Point: ({names}) = {format_vector(report.point)}, '
             f'{problem.spec.param_name}0 = {format_number(report.eps0)}',
             f'Radius: {format_number(report.radius)}']
    p0, p1, p2, p3 = report.p0, report.p1, report.p2, report.p3
    if p0:
        eigenvalues = ', '.join(
            format_number(re) if not im else f'{format_number(re)}{im:+.6g}i'
            for re, im in p0.spectrum.eigenvalues)
        lines += [
            f'P0: {_mark(p0.passed)}',
            f'P0: residual = {format_number(p0.residual)}',
            f'P0: eigenvalues = [{eigenvalues}]',
            f'P0: simple non-hyperbolic = {_yes(p0.simple_nonhyp)}',
            f'P0: isolated = {_yes(p0.isolated)} ({p0.zero_count} zero(s) in ball)',
            f'P0: index = {format_number(p0.index)} ({p0.index_method})'
        ]
        if p0.center_index is not None:
            lines.append(f'P0: center index = {p0.center_index}')
        if p0.cross_check:
            lines.append(f'P0: cross-check index = {p0.cross_check.value} '
                         f'({p0.cross_check.method})')
    else:
        lines.append('P0: UNDETERMINED')
    if p1:
        lines += [f'P1: {_mark(p1.passed)}',
                  f'P1: v_l dV/deps = {format_number(p1.vl_dVeps)} '
                  f'(margin {format_number(p1.margin, digits=3)})']
    else:
        lines.append('P1: UNDETERMINED')
    if p2:
        lines.append(f'P2: {_mark(p2.passed)}')
        if p2.omega is not None and p2.directional_deriv is not None and p2.margin is not None:
            lines += [f'P2: omega = {format_vector(p2.omega)}',
                      f'P2: directional derivative = {format_number(p2.directional_deriv)} '
                      f'(margin {format_number(p2.margin, digits=3)})']
        else:
            lines.append('P2: inapplicable, parameter axis orthogonal to kernel')
    else:
        lines.append('P2: UNDETERMINED')
    if p3 and p3.available:
        lines += [f'P3: {_mark(p3.passed)}',
                  f'P3: value = {format_number(p3.value)} (D_uu det = '
                  f'{format_number(p3.d_uu_det)}, D_y term = {format_number(p3.d_y_term)})',
                  f'P3: via center manifold = {format_number(p3.via_manifold)}']
    else:
        lines.append('P3: UNDETERMINED')
    if classification.numeric_counts:
        minus, plus = classification.numeric_counts
        lines.append(f'Counts: {minus} -> {plus} (delta_eps = '
                     f'{format_number(classification.delta_eps)})')
    lines.append(f'Verdict: {classification.label}')
    lines += [f'Note: {note}' for note in classification.notes]
    return '\n'.join(lines) + '\n'

async def cmd_analyze(cfg: RunConfig, out: TextIO) -> int:
    """Check all conditions at the problem point and classify the bifurcation.

    Return 0 for a verdict, 2 if it is ``Undetermined`` or ``Inconsistent``.
    """
    problem = load(cfg)
    report, classification = await asyncio.to_thread(
        classify, problem.spec, problem.point, problem.eps0, _radius(cfg, problem), cfg.delta_eps,
        cfg.tolerances)
    if cfg.json_output:
        out.write(Analysis(report=report, classification=classification).model_dump_json(
            indent=2) + '\n')
    else:
        out.write(format_report(problem, report, classification))
    return 2 if classification.verdict in {'Undetermined', 'Inconsistent'} else 0

class Analysis(BaseModel): # type: ignore[misc]
    """JSON output of *analyze*.

    .. attribute:: report

       Conditions.

    .. attribute:: classification

       Verdict.
    """

    model_config = ConfigDict(frozen=True)

    report: ConditionReport
    classification: Classification

def _zero_index(problem: Problem, zero: Equilibrium, zeros: list[Equilibrium], radius: float,
                tol: Tolerances) -> int | None:
    if zero.index is not None:
        return zero.index.value
    others = [float(np.linalg.norm(other.point - zero.point)) for other in zeros
              if other is not zero]
    rho = min([radius / 2, *(d / 2 for d in others)])
    try:
        return index_local(problem.spec, zero.point, zero.eps, rho, seed=tol.seed, grid=tol.grid,
                           tol_res=tol.tol_res).value
    except IndexFailure as e:
        getLogger(__name__).warning('No index for zero x=%s, eps=%g (%s)', list(zero.x), zero.eps,
                                    e)
        return None

def _sweep_row(problem: Problem, center: np.ndarray, radius: float, eps: float,
               tol: Tolerances) -> tuple[float, int, int | None, float | None]:
    zeros = find_zeros_in_ball(problem.spec, center, radius, eps, tol.grid, tol_res=tol.tol_res,
                               tol_zero=tol.tol_zero)
    indices = [_zero_index(problem, zero, zeros, radius, tol) for zero in zeros]
    total = None if None in indices else sum(cast(list[int], indices))
    min_abs_det = min((abs(zero.det) for zero in zeros), default=None)
    return eps, len(zeros), total, min_abs_det

async def cmd_sweep(cfg: RunConfig, out: TextIO) -> int:
    """Write zero counts and index sums over the parameter range as CSV."""
    problem = load(cfg)
    center = _center(cfg, problem)
    radius = _radius(cfg, problem)
    tol = cfg.tolerances
    rows = await _run_limited(
        cfg.jobs,
        [partial(_sweep_row, problem, center, radius, eps, tol) for eps in cfg.eps_values()])
    write_csv(out, ['eps', 'zero_count', 'sum_of_indices', 'min_abs_det'], rows)
    sums = {row[2] for row in rows}
    if len(sums) > 1:
        getLogger(__name__).warning('Index sum not constant over the range (%s)',
                                    ', '.join(str(value) for value in sums))
    return 0

def _is_duplicate(seed: Equilibrium, branches: list[Branch], tol: float) -> bool:
    for branch in branches:
        eps = [point.eps for point in branch.points]
        if not eps[0] <= seed.eps <= eps[-1]:
            continue
        position = np.array([np.interp(seed.eps, eps, [point.x[i] for point in branch.points])
                             for i in range(len(seed.x))])
        if np.linalg.norm(position - seed.point) <= tol:
            return True
    return False

async def cmd_diagram(cfg: RunConfig, out: TextIO) -> int:
    """Write the branches of equilibria over the parameter range as CSV.

    Branches are continued from the zeros found at both ends and the middle of the range.
    """
    logger = getLogger(__name__)
    problem = load(cfg)
    center = _center(cfg, problem)
    radius = _radius(cfg, problem)
    tol = cfg.tolerances
    assert cfg.eps_lo is not None and cfg.eps_hi is not None
    lo, hi = cfg.eps_lo, cfg.eps_hi
    max_step = (hi - lo) / (cfg.steps - 1) if hi > lo else 1.0

    seed_eps = sorted({lo, (lo + hi) / 2, hi})
    found = await _run_limited(cfg.jobs, [
        partial(find_zeros_in_ball, problem.spec, center, radius, eps, tol.grid,
                tol_res=tol.tol_res, tol_zero=tol.tol_zero)
        for eps in seed_eps
    ])
    seeds = [zero for zeros in found for zero in zeros]
    candidates = await _run_limited(cfg.jobs, [
        partial(continue_branch, problem.spec, seed, lo, hi, max_step, center=center,
                radius=radius, tol_res=tol.tol_res, tol_zero=tol.tol_zero)
        for seed in seeds
    ])
    branches: list[Branch] = []
    for seed, branch in zip(seeds, candidates):
        if not _is_duplicate(seed, branches, max(cluster_radius(tol.tol_res), 0.1 * max_step)):
            branches.append(branch)
    logger.info('Continued %d branch(es) from %d seed(s)', len(branches), len(seeds))

    header = ['branch_id', 'eps', *problem.spec.var_names, 'stable', 'index']
    rows = [
        (i, point.eps, *point.x, int(point.stable), point.index.value if point.index else None)
        for i, branch in enumerate(branches) for point in branch.points
    ]
    write_csv(out, header, rows)
    return 0

def _parser() -> ArgumentParser:
    common = ArgumentParser(add_help=False)
    common.add_argument('problem', help='problem file or name of a bundled problem')
    common.add_argument('--radius', type=float, help='radius of the ball zeros are considered in')
    common.add_argument('--seed', type=int, help='seed of random perturbations')
    common.add_argument('--grid', type=int, help='Newton seeds per axis of zero searches')
    common.add_argument('--fd-step', type=float, help='step of finite-difference jets')
    for name in ('res', 'zero', 'kernel', 'p1', 'p2', 'p3'):
        common.add_argument(f'--tol-{name}', type=float, help=f'tolerance tol_{name}')
    common.add_argument('-o', '--output', help='output file, standard output by default')
    common.add_argument('-v', '--verbose', action='store_true', help='log progress')

    parser = ArgumentParser(prog='python3 -m pitchfork',
                            description='Detect and classify pitchfork bifurcations.')
    commands = parser.add_subparsers(dest='command', required=True)
    analyze = commands.add_parser('analyze', parents=[common],
                                  help='check conditions and classify the bifurcation at a point')
    analyze.add_argument('--delta-eps', type=float, help='parameter offset of zero counts')
    analyze.add_argument('--json', action='store_true', help='write JSON instead of text')
    for name, help_text in (('sweep', 'count zeros over a parameter range'),
                            ('diagram', 'continue branches of equilibria over a parameter range')):
        command = commands.add_parser(name, parents=[common], help=help_text)
        command.add_argument('--eps-lo', type=float, required=True, help='lower end of range')
        command.add_argument('--eps-hi', type=float, required=True, help='upper end of range')
        command.add_argument('--steps', type=int, help='number of parameter values')
        command.add_argument('--center', type=float, nargs='+', help='center of the ball')
        command.add_argument('--jobs', type=int, help='parameter values processed concurrently')
    return parser

def _run_config(args: dict[str, object], options: SectionProxy) -> RunConfig:
    tolerances = {key: options[key] for key in _TOLERANCES if key in options}
    tolerances.update({key: args[key] for key in _TOLERANCES if args.get(key) is not None})
    values = {
        'command': args['command'],
        'problem_path': args['problem'],
        'radius': args['radius'],
        'default_radius': options.get('radius', '0.5'),
        'center': args.get('center'),
        'delta_eps': args.get('delta_eps'),
        'eps_lo': args.get('eps_lo'),
        'eps_hi': args.get('eps_hi'),
        'tolerances': tolerances,
        'output_path': args['output'],
        'json_output': args.get('json', False),
        'jobs': args.get('jobs') or options.get('jobs', '4')
    }
    if args.get('steps') is not None:
        values['steps'] = args['steps']
    return RunConfig.model_validate(values)

@contextmanager
def _output(path: str | None) -> Generator[TextIO, None, None]:
    if path is None:
        yield sys.stdout
        return
    with open(path, 'w', encoding='utf-8', newline='') as f:
        yield f

async def main(argv: Sequence[str] | None = None) -> int:
    """Run pitchfork with the command-line arguments *argv*."""
    if current_thread() == main_thread():
        loop = get_running_loop()
        task = cast(Task[object], current_task())
        loop.add_signal_handler(signal.SIGINT, task.cancel) # type: ignore[misc]
        loop.add_signal_handler(signal.SIGTERM, task.cancel) # type: ignore[misc]

    try:
        args = vars(_parser().parse_args(argv))
    except SystemExit as e:
        # Usage errors are input errors
        return 0 if e.code == 0 else 1

    logging.basicConfig(format='%(asctime)s %(levelname)s %(name)s: %(message)s',
                        level=logging.INFO if args['verbose'] else logging.WARNING)
    logger = getLogger(__name__)

    res = resources.files(f'{__package__}.res')
    config = ConfigParser(strict=False, interpolation=None)
    with (res / 'default.ini').open() as f:
        config.read_file(f)
    try:
        config.read('pitchfork.ini')
    except ParsingError as e:
        logger.critical('Failed to load config file (%s)', e)
        return 1
    options = config['pitchfork']

    try:
        cfg = _run_config(args, options)
    except ValidationError as e:
        logger.critical('Bad configuration (%s)', e)
        return 1
    context.tolerances.set(cfg.tolerances)

    commands = {'analyze': cmd_analyze, 'sweep': cmd_sweep, 'diagram': cmd_diagram}
    try:
        with _output(cfg.output_path) as out:
            return await commands[cfg.command](cfg, out)
    except OSError as e:
        logger.critical('Failed to access file (%s)', e)
        return 1
    except (FieldError, ValidationError) as e:
        logger.critical('Failed to load problem (%s)', e)
        return 1
    except ValueError as e:
        logger.critical('Failed to analyze problem (%s)', e)
        return 1
    except CancelledError:
        return 0
    except Exception: # pylint: disable=broad-exception-caught
        logger.exception('Unhandled error')
        return 1

if __name__ == '__main__':
    sys.exit(asyncio.run(main()))
