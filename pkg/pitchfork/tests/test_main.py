# pylint: disable=missing-docstring

from contextlib import redirect_stderr, redirect_stdout
from io import StringIO
import json
from pathlib import Path
from tempfile import TemporaryDirectory
from unittest import IsolatedAsyncioTestCase

from pitchfork.__main__ import main

class TestCase(IsolatedAsyncioTestCase):
    async def asyncSetUp(self) -> None:
        self._directory = TemporaryDirectory()
        self.path = Path(self._directory.name)

    async def asyncTearDown(self) -> None:
        self._directory.cleanup()

    async def run_main(self, *args: str) -> tuple[int, str]:
        output = self.path / 'output.txt'
        with redirect_stderr(StringIO()):
            code = await main([*args, '-o', str(output)])
        text = output.read_text(encoding='utf-8') if output.exists() else ''
        return code, text

class AnalyzeTest(TestCase):
    async def test(self) -> None:
        code, text = await self.run_main('analyze', 'fork')
        self.assertEqual(code, 0)
        lines = text.splitlines()
        self.assertEqual(lines[0], 'Point: (x, y) = [0.0, 0.0], eps0 = 0.0')
        self.assertIn('Radius: 0.8', lines)
        self.assertIn('P0: PASS', lines)
        self.assertIn('P0: index = 1 (center-taylor)', lines)
        self.assertIn('P0: center index = -1', lines)
        self.assertIn('P1: PASS', lines)
        self.assertIn('P2: directional derivative = -2.0 (margin 20000000.0)', lines)
        self.assertIn('P3: PASS', lines)
        self.assertIn('Counts: 1 -> 3 (delta_eps = 0.00158113883008)', lines)
        self.assertIn('Verdict: Pitchfork 1→3', lines)

    async def test_no_bifurcation(self) -> None:
        code, text = await self.run_main('analyze', 'moving-zero')
        self.assertEqual(code, 0)
        lines = text.splitlines()
        self.assertIn('P1: FAIL', lines)
        self.assertIn('P2: inapplicable, parameter axis orthogonal to kernel', lines)
        self.assertIn('Verdict: No bifurcation detected', lines)

    async def test_pitchfork_type(self) -> None:
        code, text = await self.run_main('analyze', 'oscillating')
        self.assertEqual(code, 0)
        lines = text.splitlines()
        self.assertIn('P3: UNDETERMINED', lines)
        self.assertTrue(any(line.startswith('Verdict: Pitchfork-type 1→') for line in lines))

    async def test_inconsistent(self) -> None:
        code, text = await self.run_main('analyze', 'fork', '--delta-eps', '0.5')
        self.assertEqual(code, 2)
        self.assertIn('Verdict: Inconsistent', text.splitlines())

    async def test_json(self) -> None:
        code, text = await self.run_main('analyze', 'fork', '--json')
        self.assertEqual(code, 0)
        analysis = json.loads(text)
        self.assertEqual(analysis['classification']['verdict'], 'Pitchfork_1to3')
        self.assertEqual(analysis['classification']['numeric_counts'], [1, 3])
        self.assertEqual(analysis['report']['radius'], 0.8)
        self.assertTrue(analysis['report']['p3']['passed'])

    async def test_problem_file(self) -> None:
        problem = self.path / 'problem.txt'
        problem.write_text('dim = 1\nparam = mu\nvars = u\neq 1 = mu*u - u^3\npoint = 0\n'
                           'eps0 = 0\n', encoding='utf-8')
        code, text = await self.run_main('analyze', str(problem), '--radius', '0.3')
        self.assertEqual(code, 0)
        lines = text.splitlines()
        self.assertEqual(lines[0], 'Point: (u) = [0.0], mu0 = 0.0')
        self.assertIn('Radius: 0.3', lines)
        self.assertIn('Verdict: Pitchfork 1→3', lines)

    async def test_default_radius(self) -> None:
        problem = self.path / 'problem.txt'
        problem.write_text('dim = 1\nparam = mu\nvars = u\neq 1 = mu*u - u^3\npoint = 0\n'
                           'eps0 = 0\n', encoding='utf-8')
        _, text = await self.run_main('analyze', str(problem))
        self.assertIn('Radius: 0.5', text.splitlines())

    async def test_malformed_problem(self) -> None:
        problem = self.path / 'problem.txt'
        problem.write_text('dim = 1\nparam = mu\nvars = u\neq 1 = u^(1/2)\npoint = 0\neps0 = 0\n',
                           encoding='utf-8')
        code, _ = await self.run_main('analyze', str(problem))
        self.assertEqual(code, 1)

    async def test_not_an_equilibrium(self) -> None:
        problem = self.path / 'problem.txt'
        problem.write_text('dim = 1\nparam = mu\nvars = u\neq 1 = mu*u - u^3\npoint = 0.1\n'
                           'eps0 = 0\n', encoding='utf-8')
        code, _ = await self.run_main('analyze', str(problem))
        self.assertEqual(code, 1)

    async def test_missing_problem(self) -> None:
        code, _ = await self.run_main('analyze', str(self.path / 'foo.txt'))
        self.assertEqual(code, 1)

    async def test_bad_tolerance(self) -> None:
        code, _ = await self.run_main('analyze', 'fork', '--tol-res', '-1')
        self.assertEqual(code, 1)

class UsageTest(TestCase):
    async def test_missing_argument(self) -> None:
        with redirect_stderr(StringIO()):
            self.assertEqual(await main(['analyze']), 1)

    async def test_help(self) -> None:
        out = StringIO()
        with redirect_stdout(out):
            self.assertEqual(await main(['--help']), 0)
        self.assertIn('analyze', out.getvalue())

    async def test_missing_range(self) -> None:
        with redirect_stderr(StringIO()):
            self.assertEqual(await main(['sweep', 'fork', '--eps-lo', '0']), 1)

class SweepTest(TestCase):
    async def test(self) -> None:
        code, text = await self.run_main('sweep', 'cubic-quadratic', '--eps-lo', '-0.1',
                                         '--eps-hi', '0.1', '--steps', '3', '--center', '-0.5',
                                         '--radius', '1')
        self.assertEqual(code, 0)
        rows = [line.split(',') for line in text.splitlines()]
        self.assertEqual(rows[0], ['eps', 'zero_count', 'sum_of_indices', 'min_abs_det'])
        self.assertEqual([row[:3] for row in rows[1:]],
                         [['-0.1', '3', '1'], ['0.0', '2', '1'], ['0.1', '3', '1']])
        self.assertLess(float(rows[2][3]), 1e-4)
        self.assertIn(b'\r\n', (self.path / 'output.txt').read_bytes())

    async def test_stdout(self) -> None:
        out = StringIO()
        with redirect_stdout(out):
            code = await main(['sweep', 'fork', '--eps-lo', '0.04', '--eps-hi', '0.04'])
        self.assertEqual(code, 0)
        self.assertEqual(out.getvalue().splitlines()[1].split(',')[:3], ['0.04', '3', '1'])

    async def test_bad_center(self) -> None:
        code, _ = await self.run_main('sweep', 'fork', '--eps-lo', '0', '--eps-hi', '0.1',
                                      '--center', '0')
        self.assertEqual(code, 1)

class DiagramTest(TestCase):
    async def test(self) -> None:
        code, text = await self.run_main('diagram', 'moving-manifold', '--eps-lo', '-0.2',
                                         '--eps-hi', '0.2', '--steps', '5')
        self.assertEqual(code, 0)
        rows = [line.split(',') for line in text.splitlines()]
        self.assertEqual(rows[0], ['branch_id', 'eps', 'x', 'y', 'stable', 'index'])
        self.assertEqual(len(rows), 6)
        for row in rows[1:]:
            self.assertEqual(row[0], '0')
            self.assertAlmostEqual(float(row[2]), 0, delta=1e-8)
            self.assertAlmostEqual(float(row[3]), -float(row[1]) / 2, delta=1e-8)
            self.assertEqual(row[4:], ['0', ''])

    async def test_pitchfork(self) -> None:
        code, text = await self.run_main('diagram', 'fork', '--eps-lo', '-0.04', '--eps-hi',
                                         '0.04')
        self.assertEqual(code, 0)
        ids = {line.split(',')[0] for line in text.splitlines()[1:]}
        self.assertEqual(ids, {'0', '1', '2'})
