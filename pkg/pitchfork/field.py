"""Parametrized vector fields V(x, eps): parsing, evaluation and derivative jets.

A field is given as text in the problem-file grammar::

    dim = 2
    param = eps
    vars = x y
    eq 1 = y^2 - (eps + 1)*y - x
    eq 2 = x^2 - (eps + 1)*x - y
    point = 0 0
    eps0 = 0

Derivatives are computed in Taylor mode: truncated univariate series are pushed through the
expression tree along the coordinate directions and their pairings and triplings, and the tensors
are recovered by polarization. Where an expression is not differentiable, finite-difference jets
serve as fallback.

.. data:: AnyNode

   Any expression node.

.. data:: FUNCTIONS

   Known function names.
"""

from __future__ import annotations

from collections.abc import Sequence
from functools import reduce
from importlib import resources
from itertools import combinations, permutations, product
from logging import getLogger
import math
import re
from typing import Annotated, ClassVar, Literal, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray
from pydantic import BaseModel, ConfigDict, Field, model_validator

Array = NDArray[np.float64]
Value = Union[np.float64, Array, 'Taylor']

FUNCTIONS = frozenset({'sin', 'cos', 'exp', 'sqrt'})

class FieldError(ValueError):
    """Error concerning a vector field."""

class ParseError(FieldError):
    """Malformed field text.

    .. attribute:: line

       Line of the error, starting at 1.

    .. attribute:: column

       Column of the error, starting at 1.
    """

    def __init__(self, message: str, line: int = 1, column: int = 1) -> None:
        super().__init__(f'{message} (line {line}, column {column})')
        self.line = line
        self.column = column

class DomainError(FieldError):
    """Evaluation outside the domain of a function."""

class SingularJetError(DomainError):
    """Derivative jet requested at a point where the field is not differentiable."""

class StencilError(FieldError):
    """Finite-difference stencil point could not be evaluated."""

class Taylor:
    """Truncated univariate Taylor series with array-valued coefficients.

    *coeffs* has shape ``(K, ...)``, coefficient *k* of t^k along the first axis. Trailing axes
    broadcast, so a single series carries many directions and points at once.
    """

    __slots__ = ('coeffs', )
    __array_ufunc__ = None

    def __init__(self, coeffs: Array) -> None:
        self.coeffs = coeffs

    def _lift(self, other: Value) -> Array:
        if isinstance(other, Taylor):
            return other.coeffs
        shape = np.broadcast_shapes(self.coeffs.shape[1:], np.shape(other))
        coeffs = np.zeros((len(self.coeffs), *shape))
        coeffs[0] = other
        return coeffs

    def __neg__(self) -> Taylor:
        return Taylor(-self.coeffs)

    def __add__(self, other: Value) -> Taylor:
        if isinstance(other, Taylor):
            return Taylor(self.coeffs + other.coeffs)
        return Taylor(self.coeffs + self._lift(other))

    __radd__ = __add__

    def __sub__(self, other: Value) -> Taylor:
        return self + -other

    def __rsub__(self, other: Value) -> Taylor:
        return -self + other

    def __mul__(self, other: Value) -> Taylor:
        if not isinstance(other, Taylor):
            return Taylor(self.coeffs * other)
        a, b = self.coeffs, other.coeffs
        out = np.zeros(np.broadcast_shapes(a.shape, b.shape))
        for k in range(len(out)):
            out[k] = sum(a[j] * b[k - j] for j in range(k + 1))
        return Taylor(out)

    __rmul__ = __mul__

    def __truediv__(self, other: Value) -> Taylor:
        if not isinstance(other, Taylor):
            return Taylor(self.coeffs / other)
        return _divide(self.coeffs, other.coeffs)

    def __rtruediv__(self, other: Value) -> Taylor:
        return _divide(self._lift(other), self.coeffs)

    def __pow__(self, exponent: int) -> Taylor:
        result = Taylor(self._lift(np.ones(self.coeffs.shape[1:])))
        base: Taylor = self
        while exponent:
            if exponent & 1:
                result = result * base
            exponent >>= 1
            if exponent:
                base = base * base
        return result

    def exp(self) -> Taylor:
        """Exponential of the series."""
        a = self.coeffs
        e = np.zeros_like(a)
        e[0] = np.exp(a[0])
        for k in range(1, len(a)):
            e[k] = sum(j * a[j] * e[k - j] for j in range(1, k + 1)) / k
        return Taylor(e)

    def sincos(self) -> tuple[Taylor, Taylor]:
        """Sine and cosine of the series."""
        a = self.coeffs
        s = np.zeros_like(a)
        c = np.zeros_like(a)
        s[0] = np.sin(a[0])
        c[0] = np.cos(a[0])
        for k in range(1, len(a)):
            s[k] = sum(j * a[j] * c[k - j] for j in range(1, k + 1)) / k
            c[k] = -sum(j * a[j] * s[k - j] for j in range(1, k + 1)) / k
        return Taylor(s), Taylor(c)

    def sqrt(self, *, strict: bool = True) -> Taylor:
        """Square root of the series.

        In *strict* mode, a :exc:`DomainError` is raised for negative values and a
        :exc:`SingularJetError` for a zero value with nonzero higher coefficients.
        """
        a = self.coeffs
        flat = np.all(a == 0, axis=0)
        if strict:
            if np.any(a[0] < 0):
                raise DomainError('Square root of negative value')
            if np.any((a[0] == 0) & ~flat):
                raise SingularJetError('Square root at zero')
        r = np.zeros_like(a)
        r[0] = np.sqrt(a[0])
        for k in range(1, len(a)):
            r[k] = (a[k] - sum(r[j] * r[k - j] for j in range(1, k))) / (2 * r[0])
        r[:, flat] = 0
        return Taylor(r)

def _divide(a: Array, b: Array) -> Taylor:
    q = np.zeros(np.broadcast_shapes(a.shape, b.shape))
    for k in range(len(q)):
        q[k] = (a[k] - sum(b[j] * q[k - j] for j in range(1, k + 1))) / b[0]
    return Taylor(q)

def _div(a: Value, b: Value, strict: bool) -> Value:
    if strict:
        denominator = b.coeffs[0] if isinstance(b, Taylor) else b
        if np.any(denominator == 0):
            if isinstance(b, Taylor):
                raise SingularJetError('Division by zero')
            raise DomainError('Division by zero')
    return a / b # type: ignore[operator]

def _sqrt(a: Value, strict: bool) -> Value:
    if isinstance(a, Taylor):
        return a.sqrt(strict=strict)
    if strict and np.any(a < 0):
        raise DomainError('Square root of negative value')
    return np.sqrt(a)

def _sin(a: Value) -> Value:
    return a.sincos()[0] if isinstance(a, Taylor) else np.sin(a)

def _cos(a: Value) -> Value:
    return a.sincos()[1] if isinstance(a, Taylor) else np.cos(a)

def _exp(a: Value) -> Value:
    return a.exp() if isinstance(a, Taylor) else np.exp(a)

class Node(BaseModel): # type: ignore[misc]
    """Expression tree node.

    .. attribute:: type

       Type of the node.

    .. attribute:: PRECEDENCE

       Binding strength when unparsed. Atoms bind strongest.
    """

    model_config = ConfigDict(frozen=True)

    PRECEDENCE: ClassVar[int] = 5

    type: str

    @property
    def precedence(self) -> int:
        """Binding strength of this node."""
        return self.PRECEDENCE

    def evaluate(self, args: Sequence[Value], strict: bool = True) -> Value:
        """Evaluate the expression for the variable values *args*.

        The parameter is the last entry of *args*. Without *strict*, domain failures yield NaN
        instead of raising a :exc:`DomainError`.
        """
        raise NotImplementedError()

    def unparse(self, names: Sequence[str]) -> str:
        """Write the expression as text, with variables named by *names*."""
        raise NotImplementedError()

    def substitute(self, replacements: Sequence[AnyNode]) -> AnyNode:
        """Replace each variable *i* by the expression *replacements[i]*."""
        raise NotImplementedError()

    def variables(self) -> set[int]:
        """Indices of the variables the expression refers to."""
        return set()

    def _wrap(self, node: Node, precedence: int, names: Sequence[str]) -> str:
        text = node.unparse(names)
        return f'({text})' if node.precedence < precedence else text

class Constant(Node): # type: ignore[misc]
    """Numeric literal.

    .. attribute:: value

       Value of the literal.
    """

    type: Literal['Constant'] = 'Constant'
    value: float

    @property
    def precedence(self) -> int:
        return 3 if math.copysign(1, self.value) < 0 else self.PRECEDENCE

    def evaluate(self, args: Sequence[Value], strict: bool = True) -> Value:
        return np.float64(self.value)

    def unparse(self, names: Sequence[str]) -> str:
        return repr(self.value)

    def substitute(self, replacements: Sequence[AnyNode]) -> AnyNode:
        return self

class Variable(Node): # type: ignore[misc]
    """Reference to a variable or, for the last index, the parameter.

    .. attribute:: index

       Index of the variable.
    """

    type: Literal['Variable'] = 'Variable'
    index: int = Field(ge=0)

    def evaluate(self, args: Sequence[Value], strict: bool = True) -> Value:
        return args[self.index]

    def unparse(self, names: Sequence[str]) -> str:
        return names[self.index]

    def substitute(self, replacements: Sequence[AnyNode]) -> AnyNode:
        return replacements[self.index]

    def variables(self) -> set[int]:
        return {self.index}

class Unary(Node): # type: ignore[misc]
    """Negation or function call.

    .. attribute:: op

       Negation ``neg`` or a function name.

    .. attribute:: arg

       Operand.
    """

    type: Literal['Unary'] = 'Unary'
    op: Literal['neg', 'sin', 'cos', 'exp', 'sqrt']
    arg: AnyNode

    @property
    def precedence(self) -> int:
        return 3 if self.op == 'neg' else self.PRECEDENCE

    def evaluate(self, args: Sequence[Value], strict: bool = True) -> Value:
        value = self.arg.evaluate(args, strict)
        if self.op == 'neg':
            return -value
        if self.op == 'sqrt':
            return _sqrt(value, strict)
        return {'sin': _sin, 'cos': _cos, 'exp': _exp}[self.op](value)

    def unparse(self, names: Sequence[str]) -> str:
        if self.op == 'neg':
            return f'-{self._wrap(self.arg, 3, names)}'
        return f'{self.op}({self.arg.unparse(names)})'

    def substitute(self, replacements: Sequence[AnyNode]) -> AnyNode:
        return self.model_copy(update={'arg': self.arg.substitute(replacements)})

    def variables(self) -> set[int]:
        return self.arg.variables()

class Binary(Node): # type: ignore[misc]
    """Arithmetic operation.

    .. attribute:: op

       Operator.

    .. attribute:: left

       Left operand.

    .. attribute:: right

       Right operand.
    """

    type: Literal['Binary'] = 'Binary'
    op: Literal['add', 'sub', 'mul', 'div']
    left: AnyNode
    right: AnyNode

    _SYMBOLS: ClassVar[dict[str, str]] = {'add': '+', 'sub': '-', 'mul': '*', 'div': '/'}

    @property
    def precedence(self) -> int:
        return 1 if self.op in {'add', 'sub'} else 2

    def evaluate(self, args: Sequence[Value], strict: bool = True) -> Value:
        left = self.left.evaluate(args, strict)
        right = self.right.evaluate(args, strict)
        if self.op == 'add':
            return left + right
        if self.op == 'sub':
            return left - right
        if self.op == 'mul':
            return left * right
        return _div(left, right, strict)

    def unparse(self, names: Sequence[str]) -> str:
        precedence = self.precedence
        # Left-associative, so a right operand of equal precedence needs parentheses for - and /
        right_precedence = precedence + 1 if self.op in {'sub', 'div'} else precedence
        return (f'{self._wrap(self.left, precedence, names)} {self._SYMBOLS[self.op]} '
                f'{self._wrap(self.right, right_precedence, names)}')

    def substitute(self, replacements: Sequence[AnyNode]) -> AnyNode:
        return self.model_copy(update={'left': self.left.substitute(replacements),
                                       'right': self.right.substitute(replacements)})

    def variables(self) -> set[int]:
        return self.left.variables() | self.right.variables()

class Power(Node): # type: ignore[misc]
    """Power with a non-negative integer exponent.

    .. attribute:: base

       Base.

    .. attribute:: exponent

       Exponent.
    """

    PRECEDENCE: ClassVar[int] = 4

    type: Literal['Power'] = 'Power'
    base: AnyNode
    exponent: int = Field(ge=0)

    def evaluate(self, args: Sequence[Value], strict: bool = True) -> Value:
        return self.base.evaluate(args, strict) ** self.exponent # type: ignore[operator]

    def unparse(self, names: Sequence[str]) -> str:
        return f'{self._wrap(self.base, 5, names)}^{self.exponent}'

    def substitute(self, replacements: Sequence[AnyNode]) -> AnyNode:
        return self.model_copy(update={'base': self.base.substitute(replacements)})

    def variables(self) -> set[int]:
        return self.base.variables()

AnyNode = Annotated[Union[Constant, Variable, Unary, Binary, Power], Field(discriminator='type')]

for _cls in (Unary, Binary, Power):
    _cls.model_rebuild()

def _sum(terms: Sequence[AnyNode]) -> AnyNode:
    if not terms:
        return Constant(value=0.0)
    return reduce(lambda a, b: Binary(op='add', left=a, right=b), terms)

def _linear(coeffs: Sequence[float]) -> AnyNode:
    """Linear form sum of *coeffs[j]* times variable *j*."""
    return _sum([Binary(op='mul', left=Constant(value=float(c)), right=Variable(index=j))
                 for j, c in enumerate(coeffs) if c != 0])

class FieldSpec(BaseModel): # type: ignore[misc]
    """Vector field family V(x, eps) in *dim* dimensions with one parameter.

    .. attribute:: dim

       Number of variables n.

    .. attribute:: param_name

       Name of the parameter.

    .. attribute:: var_names

       Names of the variables.

    .. attribute:: exprs

       Expression of each component. Variable index *dim* refers to the parameter.

    .. attribute:: source

       Text the field was parsed from.
    """

    model_config = ConfigDict(frozen=True)

    dim: int = Field(ge=1)
    param_name: str
    var_names: tuple[str, ...]
    exprs: tuple[AnyNode, ...]
    source: str = ''

    @model_validator(mode='after')
    def _check(self) -> FieldSpec:
        if len(self.var_names) != self.dim or len(self.exprs) != self.dim:
            raise ValueError(f'Dimension mismatch {len(self.var_names)} / {len(self.exprs)} for '
                             f'dim {self.dim}')
        for expr in self.exprs:
            if any(index > self.dim for index in expr.variables()):
                raise ValueError('Unknown variable index')
        return self

    @property
    def names(self) -> tuple[str, ...]:
        """Names of the variables followed by the parameter."""
        return (*self.var_names, self.param_name)

    def unparse(self) -> str:
        """Write the field in the problem-file grammar."""
        lines = [f'dim = {self.dim}', f'param = {self.param_name}',
                 f"vars = {' '.join(self.var_names)}"]
        lines += [f'eq {i} = {expr.unparse(self.names)}' for i, expr in enumerate(self.exprs, 1)]
        return '\n'.join(lines) + '\n'

    def linear_change(self, a: ArrayLike, s: ArrayLike | None = None) -> FieldSpec:
        """Field in the coordinates x' = A x + s eps.

        The new field is V'(x', eps) = A V(A^-1 (x' - s eps), eps), so the block-upper-triangular
        map [[A, s], [0, 1]] carries zeros to zeros.
        """
        matrix = np.asarray(a, dtype=float)
        shear = np.zeros(self.dim) if s is None else np.asarray(s, dtype=float)
        if matrix.shape != (self.dim, self.dim) or shear.shape != (self.dim, ):
            raise ValueError(f'Bad change of coordinates shape {matrix.shape}')
        inverse = np.linalg.inv(matrix)
        offset = inverse @ shear
        replacements = [_linear([*inverse[i], -offset[i]]) for i in range(self.dim)]
        replacements.append(Variable(index=self.dim))
        old = [expr.substitute(replacements) for expr in self.exprs]
        exprs = tuple(
            _sum([Binary(op='mul', left=Constant(value=float(matrix[k, i])), right=old[i])
                  for i in range(self.dim) if matrix[k, i] != 0])
            for k in range(self.dim))
        spec = self.model_copy(update={'exprs': exprs})
        return spec.model_copy(update={'source': spec.unparse()})

    def offset(self, c: ArrayLike) -> FieldSpec:
        """Field V + c for a constant vector *c*."""
        shift = np.asarray(c, dtype=float)
        if shift.shape != (self.dim, ):
            raise ValueError(f'Bad offset shape {shift.shape}')
        exprs = tuple(Binary(op='add', left=expr, right=Constant(value=float(value)))
                      for expr, value in zip(self.exprs, shift))
        spec = self.model_copy(update={'exprs': exprs})
        return spec.model_copy(update={'source': spec.unparse()})

    def scaled(self, c: float) -> FieldSpec:
        """Field c V."""
        exprs = tuple(Binary(op='mul', left=Constant(value=float(c)), right=expr)
                      for expr in self.exprs)
        spec = self.model_copy(update={'exprs': exprs})
        return spec.model_copy(update={'source': spec.unparse()})

class Problem(BaseModel): # type: ignore[misc]
    """Field together with the point to analyze.

    .. attribute:: spec

       Vector field.

    .. attribute:: point

       Candidate equilibrium x0.

    .. attribute:: eps0

       Candidate bifurcation parameter.

    .. attribute:: radius

       Radius of the ball around x0 in which zeros are considered, if given.
    """

    model_config = ConfigDict(frozen=True)

    spec: FieldSpec
    point: tuple[float, ...]
    eps0: float
    radius: float | None = Field(default=None, gt=0)

    @model_validator(mode='after')
    def _check(self) -> Problem:
        if len(self.point) != self.spec.dim:
            raise ValueError(f'Dimension mismatch {len(self.point)} for point')
        return self

_TOKEN = re.compile(r"""\s*(?:(?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
                       |(?P<name>[A-Za-z_][A-Za-z_0-9]*)
                       |(?P<op>[-+*/^(),])
                       |(?P<bad>\S))""", re.VERBOSE)
_IDENTIFIER = re.compile(r'[A-Za-z_][A-Za-z_0-9]*')
_INTEGER = re.compile(r'\d+')

class _Parser:
    """Recursive descent parser for one expression.

    Grammar, loosest binding first::

        expr  = term (('+' | '-') term)*
        term  = unary (('*' | '/') unary)*
        unary = ('-' | '+') unary | power
        power = atom ('^' exponent)?
        atom  = number | name | name '(' expr ')' | '(' expr ')'
    """

    def __init__(self, text: str, names: Sequence[str], line: int, column: int) -> None:
        self.line = line
        self.names = list(names)
        self.tokens: list[tuple[str, str, int]] = []
        for match in _TOKEN.finditer(text):
            kind = match.lastgroup
            assert kind
            position = column + match.start(kind)
            if kind == 'bad':
                raise ParseError(f'Unexpected character {match[kind]!r}', line, position)
            self.tokens.append((kind, match[kind], position))
        self.tokens.append(('end', '', column + len(text.rstrip())))
        self.i = 0

    def parse(self) -> AnyNode:
        node = self.expr()
        self._expect('end')
        return node

    def _peek(self) -> tuple[str, str, int]:
        return self.tokens[self.i]

    def _next(self) -> tuple[str, str, int]:
        token = self.tokens[self.i]
        self.i += 1
        return token

    def _error(self, message: str) -> ParseError:
        return ParseError(message, self.line, self._peek()[2])

    def _accept(self, op: str) -> bool:
        kind, text, _ = self._peek()
        if kind == 'op' and text == op:
            self.i += 1
            return True
        return False

    def _expect(self, kind: str, op: str | None = None) -> None:
        token_kind, text, _ = self._peek()
        if token_kind != kind or (op is not None and text != op):
            expected = op or kind
            raise self._error(f"Expected {expected!r}, got {text!r}" if text else
                              f'Expected {expected!r} at end of expression')
        self.i += 1

    def expr(self) -> AnyNode:
        node = self.term()
        while True:
            if self._accept('+'):
                node = Binary(op='add', left=node, right=self.term())
            elif self._accept('-'):
                node = Binary(op='sub', left=node, right=self.term())
            else:
                return node

    def term(self) -> AnyNode:
        node = self.unary()
        while True:
            if self._accept('*'):
                node = Binary(op='mul', left=node, right=self.unary())
            elif self._accept('/'):
                node = Binary(op='div', left=node, right=self.unary())
            else:
                return node

    def unary(self) -> AnyNode:
        if self._accept('-'):
            return Unary(op='neg', arg=self.unary())
        if self._accept('+'):
            return self.unary()
        return self.power()

    def power(self) -> AnyNode:
        node = self.atom()
        if not self._accept('^'):
            return node
        kind, text, _ = self._peek()
        if kind == 'number' and _INTEGER.fullmatch(text):
            self.i += 1
            return Power(base=node, exponent=int(text))
        if self._accept('('):
            exponent = self.expr()
            self._expect('op', ')')
            if (isinstance(exponent, Constant) and exponent.value >= 0
                    and exponent.value.is_integer()):
                return Power(base=node, exponent=int(exponent.value))
        raise self._error('Non-integer exponent, must be a non-negative integer literal')

    def atom(self) -> AnyNode:
        kind, text, _ = self._peek()
        if kind == 'number':
            self.i += 1
            return Constant(value=float(text))
        if kind == 'name':
            if text in FUNCTIONS:
                self.i += 1
                self._expect('op', '(')
                arg = self.expr()
                self._expect('op', ')')
                return Unary(op=text, arg=arg) # type: ignore[arg-type]
            if text in self.names:
                self.i += 1
                return Variable(index=self.names.index(text))
            raise self._error(f'Unknown identifier {text!r}')
        if self._accept('('):
            node = self.expr()
            self._expect('op', ')')
            return node
        raise self._error(f'Unexpected token {text!r}' if text else 'Unexpected end of expression')

def parse_expression(text: str, var_names: Sequence[str], param_name: str, *, line: int = 1,
                     column: int = 1) -> AnyNode:
    """Parse the expression *text* over the variables *var_names* and the parameter *param_name*.

    *line* and *column* locate *text* for error messages.
    """
    return _Parser(text, [*var_names, param_name], line, column).parse()

def _read(text: str) -> tuple[dict[str, tuple[str, int, int]], dict[int, tuple[str, int, int]]]:
    keys: dict[str, tuple[str, int, int]] = {}
    eqs: dict[int, tuple[str, int, int]] = {}
    for number, raw in enumerate(text.splitlines(), 1):
        line = raw.split('#', 1)[0]
        if not line.strip():
            continue
        key, sep, value = line.partition('=')
        if not sep:
            raise ParseError("Expected 'key = value'", number, len(raw) - len(raw.lstrip()) + 1)
        column = len(key) + 2
        key = ' '.join(key.split())
        entry = (value, number, column)
        if key.startswith('eq '):
            index = key[3:]
            if not _INTEGER.fullmatch(index):
                raise ParseError(f'Bad equation index {index!r}', number, 1)
            if int(index) in eqs:
                raise ParseError(f'Duplicate equation {index}', number, 1)
            eqs[int(index)] = entry
        elif key in {'dim', 'param', 'vars', 'point', 'eps0', 'radius'}:
            if key in keys:
                raise ParseError(f'Duplicate key {key!r}', number, 1)
            keys[key] = entry
        else:
            raise ParseError(f'Unknown key {key!r}', number, 1)
    return keys, eqs

def _reals(entry: tuple[str, int, int], key: str) -> list[float]:
    value, number, column = entry
    try:
        return [float(word) for word in value.split()]
    except ValueError:
        raise ParseError(f'Bad {key} {value.strip()!r}', number, column) from None

def _parse_spec(text: str,
                keys: dict[str, tuple[str, int, int]],
                eqs: dict[int, tuple[str, int, int]]) -> FieldSpec:
    for key in ('dim', 'param', 'vars'):
        if key not in keys:
            raise ParseError(f'Missing key {key!r}', len(text.splitlines()) or 1, 1)
    value, number, column = keys['dim']
    if not _INTEGER.fullmatch(value.strip()) or int(value) < 1:
        raise ParseError(f'Bad dim {value.strip()!r}', number, column)
    dim = int(value)

    value, number, column = keys['param']
    param_name = value.strip()
    value, vars_number, vars_column = keys['vars']
    var_names = value.split()
    for name in [param_name, *var_names]:
        if not _IDENTIFIER.fullmatch(name) or name in FUNCTIONS:
            raise ParseError(f'Bad identifier {name!r}', number, column)
    if len(set(var_names) | {param_name}) != len(var_names) + 1:
        raise ParseError('Duplicate identifier', vars_number, vars_column)
    if len(var_names) != dim:
        raise ParseError(f'Dimension mismatch, {len(var_names)} variable(s) for dim {dim}',
                         vars_number, vars_column)
    if sorted(eqs) != list(range(1, dim + 1)):
        raise ParseError(f'Dimension mismatch, equation(s) {sorted(eqs)} for dim {dim}',
                         max((entry[1] for entry in eqs.values()), default=1), 1)

    exprs = tuple(
        parse_expression(eqs[i][0], var_names, param_name, line=eqs[i][1], column=eqs[i][2])
        for i in range(1, dim + 1))
    return FieldSpec(dim=dim, param_name=param_name, var_names=tuple(var_names), exprs=exprs,
                     source=text)

def parse_field(text: str) -> FieldSpec:
    """Parse a vector field from problem-file *text*.

    Keys other than the field keys are checked for syntax but otherwise ignored. If the text is
    malformed, a :exc:`ParseError` is raised.
    """
    keys, eqs = _read(text)
    return _parse_spec(text, keys, eqs)

def parse_problem(text: str) -> Problem:
    """Parse a problem file *text* with field, point, *eps0* and optional radius."""
    keys, eqs = _read(text)
    spec = _parse_spec(text, keys, eqs)
    for key in ('point', 'eps0'):
        if key not in keys:
            raise ParseError(f'Missing key {key!r}', len(text.splitlines()), 1)
    point = _reals(keys['point'], 'point')
    if len(point) != spec.dim:
        raise ParseError(f'Dimension mismatch, {len(point)} coordinate(s) for dim {spec.dim}',
                         keys['point'][1], keys['point'][2])
    eps0 = _reals(keys['eps0'], 'eps0')
    if len(eps0) != 1:
        raise ParseError('Bad eps0', keys['eps0'][1], keys['eps0'][2])
    radius = None
    if 'radius' in keys:
        values = _reals(keys['radius'], 'radius')
        if len(values) != 1 or not values[0] > 0:
            raise ParseError('Bad radius', keys['radius'][1], keys['radius'][2])
        radius = values[0]
    return Problem(spec=spec, point=tuple(point), eps0=eps0[0], radius=radius)

def load_problem(name: str) -> Problem:
    """Load the bundled problem file *name* (without extension)."""
    res = resources.files(f'{__package__}.res') / 'problems' / f'{name}.txt'
    return parse_problem(res.read_text())

def bundled_problems() -> list[str]:
    """Names of the bundled problem files."""
    res = resources.files(f'{__package__}.res') / 'problems'
    return sorted(path.name.removesuffix('.txt') for path in res.iterdir()
                  if path.name.endswith('.txt'))

def evaluate(spec: FieldSpec, x: ArrayLike, eps: ArrayLike, *, strict: bool = True) -> Array:
    """Evaluate *spec* at *x* and *eps*.

    *x* has shape ``(n, )`` or ``(n, S)`` for *S* points at once, *eps* is a scalar or broadcasts
    against the points. Outside the domain of a function, a :exc:`DomainError` is raised, or without
    *strict*, the affected components are NaN.
    """
    points = np.asarray(x, dtype=float)
    if points.shape[:1] != (spec.dim, ):
        raise ValueError(f'Bad point shape {points.shape} for dim {spec.dim}')
    shape = points.shape[1:]
    args: list[Value] = [*points, np.broadcast_to(np.asarray(eps, dtype=float), shape)]
    with np.errstate(all='ignore'):
        values = [np.broadcast_to(expr.evaluate(args, strict), shape) for expr in spec.exprs]
    return np.array(values, dtype=float)

def evaluate_regular(spec: FieldSpec, x: ArrayLike, eps: ArrayLike, *,
                     tau: float = 1e-12) -> Array:
    """Evaluate *spec* at *x* and *eps*, continuing it at removable singular points.

    Where a component is undefined, the mean over the two points x -+ tau (1, ..., 1) is taken
    instead. Points undefined there as well stay NaN.
    """
    points = np.asarray(x, dtype=float)
    values = evaluate(spec, points, eps, strict=False)
    bad = np.isnan(values)
    if np.any(bad):
        shape = (spec.dim, ) + (1, ) * (points.ndim - 1)
        shift = np.full(shape, tau)
        limit = (evaluate(spec, points - shift, eps, strict=False) +
                 evaluate(spec, points + shift, eps, strict=False)) / 2
        values = np.where(bad, limit, values)
    return values

class Jet3(BaseModel): # type: ignore[misc]
    """Derivatives of V at a point in (x, eps), up to third order.

    Slot *n* of the derivative axes is the parameter.

    .. attribute:: value

       V, shape ``(n, )``.

    .. attribute:: d1

       First derivatives, shape ``(n, n + 1)``.

    .. attribute:: d2

       Second derivatives, shape ``(n, n + 1, n + 1)``, symmetric in the last two axes. Absent below
       order 2.

    .. attribute:: d3

       Third derivatives, shape ``(n, n + 1, n + 1, n + 1)``, symmetric in the last three axes.
       Absent below order 3.

    .. attribute:: order

       Highest derivative order present.

    .. attribute:: exact

       Indicates if the jet is exact up to rounding, as opposed to finite differences.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    value: np.ndarray
    d1: np.ndarray
    d2: np.ndarray | None = None
    d3: np.ndarray | None = None
    order: Literal[1, 2, 3]
    exact: bool = True

    @model_validator(mode='after')
    def _check(self) -> Jet3:
        if (self.d2 is None) != (self.order < 2) or (self.d3 is None) != (self.order < 3):
            raise ValueError(f'Bad tensors for order {self.order}')
        for array in (self.value, self.d1, self.d2, self.d3):
            if array is not None:
                array.flags.writeable = False
        return self

    @property
    def dim(self) -> int:
        """Number of variables n."""
        return len(self.value)

    @property
    def jacobian(self) -> Array:
        """Jacobian DxV, the x-block of :attr:`d1`."""
        return self.d1[:, :self.dim]

    def truncated(self, order: int) -> Jet3:
        """Jet cut down to *order*."""
        if order >= self.order:
            return self
        return self.model_copy(update={'order': order, 'd3': None,
                                       'd2': self.d2 if order >= 2 else None})

def _directions(m: int, order: int) -> tuple[Array, dict[tuple[int, ...], int]]:
    eye = np.eye(m)
    keys: list[tuple[int, ...]] = [(a, ) for a in range(m)]
    if order >= 2:
        keys += list(combinations(range(m), 2))
    if order >= 3:
        keys += [(a, a, b) for a, b in permutations(range(m), 2)]
        keys += list(combinations(range(m), 3))
    vectors = [sum(eye[a] for a in key) for key in keys]
    return np.array(vectors), {key: i for i, key in enumerate(keys)}

def _series(spec: FieldSpec, points: Array, order: int,
            strict: bool) -> tuple[Array, dict[tuple[int, ...], int]]:
    """Taylor coefficients of *spec* along the polarization directions.

    *points* has shape ``(n + 1, S)``. The result has shape ``(n, K, D, S)`` for *K* = *order* + 1
    coefficients and *D* directions.
    """
    m, count = points.shape
    directions, keys = _directions(m, order)
    args: list[Value] = []
    for i in range(m):
        coeffs = np.zeros((order + 1, len(directions), count))
        coeffs[0] = points[i]
        coeffs[1] = directions[:, i, None]
        args.append(Taylor(coeffs))
    result = np.zeros((spec.dim, order + 1, len(directions), count))
    with np.errstate(all='ignore'):
        for i, expr in enumerate(spec.exprs):
            value = expr.evaluate(args, strict)
            if isinstance(value, Taylor):
                result[i] = value.coeffs
            else:
                result[i, 0] = value
    return result, keys

def _polarize(series: Array, keys: dict[tuple[int, ...], int], m: int,
              order: int) -> tuple[Array, Array, Array | None, Array | None]:
    def c(k: int, *key: int) -> Array:
        return series[:, k, keys[key]]

    value = series[:, 0, 0]
    d1 = np.stack([c(1, a) for a in range(m)], axis=1)
    d2 = d3 = None
    if order >= 2:
        d2 = np.zeros((series.shape[0], m, m, *series.shape[3:]))
        for a in range(m):
            d2[:, a, a] = 2 * c(2, a)
        for a, b in combinations(range(m), 2):
            d2[:, a, b] = d2[:, b, a] = c(2, a, b) - c(2, a) - c(2, b)
    if order >= 3:
        d3 = np.zeros((series.shape[0], m, m, m, *series.shape[3:]))
        for a in range(m):
            d3[:, a, a, a] = 6 * c(3, a)
        for a, b in permutations(range(m), 2):
            t = c(3, a, a, b) - 2 * c(3, *sorted((a, b))) - 6 * c(3, a) + c(3, b)
            for index in set(permutations((a, a, b))):
                d3[(slice(None), *index)] = t
        for a, b, e in combinations(range(m), 3):
            t = (c(3, a, b, e) - c(3, a, b) - c(3, a, e) - c(3, b, e) + c(3, a) + c(3, b)
                 + c(3, e))
            for index in permutations((a, b, e)):
                d3[(slice(None), *index)] = t
    return value, d1, d2, d3

def jet(spec: FieldSpec, x: ArrayLike, eps: float, order: Literal[1, 2, 3] = 3) -> Jet3:
    """Exact derivatives of *spec* at *x* and *eps* up to *order*.

    If the field is not differentiable at the point, a :exc:`SingularJetError` is raised.
    """
    point = np.append(np.asarray(x, dtype=float), eps)
    if point.shape != (spec.dim + 1, ):
        raise ValueError(f'Bad point shape {point.shape[0] - 1} for dim {spec.dim}')
    series, keys = _series(spec, point[:, None], order, strict=True)
    value, d1, d2, d3 = _polarize(series, keys, spec.dim + 1, order)
    return Jet3(value=value[..., 0], d1=d1[..., 0], d2=None if d2 is None else d2[..., 0],
                d3=None if d3 is None else d3[..., 0], order=order)

def jacobian_batch(spec: FieldSpec, x: Array, eps: ArrayLike) -> tuple[Array, Array]:
    """Values and first derivatives of *spec* at many points at once.

    *x* has shape ``(n, S)``. Returns the values with shape ``(n, S)`` and the derivatives with
    shape ``(S, n, n + 1)``. Points outside the domain yield NaN.
    """
    points = np.vstack([x, np.broadcast_to(np.asarray(eps, dtype=float), x.shape[1:])])
    series, keys = _series(spec, points, 1, strict=False)
    value, d1, _, _ = _polarize(series, keys, spec.dim + 1, 1)
    return value, np.moveaxis(d1, -1, 0)

_STENCILS = {
    0: {0: 1.0},
    1: {1: 0.5, -1: -0.5},
    2: {1: 1.0, 0: -2.0, -1: 1.0},
    3: {2: 0.5, 1: -1.0, -1: 1.0, -2: -0.5}
}

def jet_fd(spec: FieldSpec, x: ArrayLike, eps: float, order: Literal[1, 2, 3], h: float) -> Jet3:
    """Central finite-difference derivatives of *spec* at *x* and *eps* with step *h*.

    The error is O(h^2). A stencil point where the field is undefined is replaced by the mean over
    two points placed symmetrically around it at distance 2^-30 h along (1, ..., 1); if these fail
    as well, a :exc:`StencilError` is raised.
    """
    if not (h > 0 and math.isfinite(h)):
        raise ValueError(f'Bad step {h}')
    center = np.append(np.asarray(x, dtype=float), eps)
    m = len(center)
    n = spec.dim
    tau = 2.0 ** -30 * h * np.ones(m)
    cache: dict[tuple[int, ...], Array] = {}

    def f(offset: tuple[int, ...]) -> Array:
        if offset not in cache:
            point = center + h * np.array(offset)
            try:
                cache[offset] = evaluate(spec, point[:n], point[n])
            except DomainError:
                try:
                    lower, upper = point - tau, point + tau
                    cache[offset] = (evaluate(spec, lower[:n], lower[n]) +
                                     evaluate(spec, upper[:n], upper[n])) / 2
                except DomainError as e:
                    raise StencilError(f'Failed to evaluate stencil point {point} ({e})') from e
        return cache[offset]

    def derivative(slots: tuple[int, ...]) -> Array:
        counts = {a: slots.count(a) for a in set(slots)}
        axes = sorted(counts)
        total = np.zeros(n)
        for steps in product(*(_STENCILS[counts[a]].items() for a in axes)):
            offset = [0] * m
            weight = 1.0
            for a, (k, w) in zip(axes, steps):
                offset[a] = k
                weight *= w
            total += weight * f(tuple(offset))
        return total / h ** len(slots)

    d1 = np.stack([derivative((a, )) for a in range(m)], axis=1)
    d2 = d3 = None
    if order >= 2:
        d2 = np.zeros((n, m, m))
        for slots in {tuple(sorted(s)) for s in product(range(m), repeat=2)}:
            value = derivative(slots)
            for index in set(permutations(slots)):
                d2[(slice(None), *index)] = value
    if order >= 3:
        d3 = np.zeros((n, m, m, m))
        for slots in {tuple(sorted(s)) for s in product(range(m), repeat=3)}:
            value = derivative(slots)
            for index in set(permutations(slots)):
                d3[(slice(None), *index)] = value
    return Jet3(value=f((0, ) * m), d1=d1, d2=d2, d3=d3, order=order, exact=False)

def _richardson(spec: FieldSpec, x: ArrayLike, eps: float, order: Literal[1, 2, 3],
                h: float) -> Jet3:
    coarse = jet_fd(spec, x, eps, order, h)
    fine = jet_fd(spec, x, eps, order, h / 2)

    def combine(a: Array | None, b: Array | None) -> Array | None:
        return None if a is None or b is None else (4 * b - a) / 3

    return Jet3(value=fine.value, d1=combine(coarse.d1, fine.d1), d2=combine(coarse.d2, fine.d2),
                d3=combine(coarse.d3, fine.d3), order=order, exact=False)

def jet_auto(spec: FieldSpec, x: ArrayLike, eps: float, order: Literal[1, 2, 3] = 3, *,
             h: float = 2 ** -14, rtol: float = 1e-3) -> Jet3:
    """Derivatives of *spec* at *x* and *eps*, exact where possible.

    At a singular jet point, Richardson-extrapolated finite differences with steps *h* and 2 *h* are
    compared, and the jet is cut down to the highest order whose tensors agree within *rtol*. *h* is
    rounded to a power of two. If not even first derivatives agree, a :exc:`SingularJetError` is
    raised.
    """
    try:
        return jet(spec, x, eps, order)
    except SingularJetError as e:
        getLogger(__name__).info('Singular jet point at x=%s, eps=%g (%s), using finite '
                                 'differences', np.asarray(x).tolist(), eps, e)
    h = 2.0 ** round(math.log2(h))
    fine = _richardson(spec, x, eps, order, h)
    coarse = _richardson(spec, x, eps, order, 2 * h)
    valid = 0
    for a, b in ((fine.d1, coarse.d1), (fine.d2, coarse.d2), (fine.d3, coarse.d3)):
        if a is None or b is None or not np.all(np.isfinite(a)):
            break
        if np.max(np.abs(a - b), initial=0) > rtol * (1 + np.max(np.abs(a), initial=0)):
            break
        valid += 1
    if not valid:
        raise SingularJetError(f'No consistent derivatives at x={np.asarray(x).tolist()}, '
                               f'eps={eps}')
    return fine.truncated(valid)
