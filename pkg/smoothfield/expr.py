import logging
import math
from typing import Mapping, Optional

import numpy as np
from lark import Lark, Transformer, Token
from lark.exceptions import UnexpectedInput, VisitError

from .base import SmoothField
from .errors import (
    DomainError,
    ExprError,
    ExprSyntaxError,
    UnknownIdentifierError,
    VariableRangeError,
)
from .jet import SERIES, JetSpace, jet_space

logger = logging.getLogger("smoothfield.expr")

GRAMMAR = r"""
?start: sum

?sum: product
    | sum "+" product   -> add
    | sum "-" product   -> sub

?product: unary
    | product "*" unary -> mul
    | product "/" unary -> div

?unary: power
    | "-" unary         -> neg
    | "+" unary

?power: atom
    | atom "^" unary    -> pow

?atom: NUMBER           -> number
    | NAME "(" sum ")"  -> call
    | NAME              -> name
    | "(" sum ")"

NAME: /[A-Za-z_][A-Za-z_0-9]*/

%import common.NUMBER
%import common.WS
%ignore WS
"""

CONSTANTS = {"pi": math.pi, "e": math.e}
FUNCTIONS = ("exp", "log", "sin", "cos", "sqrt")

_parser = Lark(GRAMMAR, parser="lalr", propagate_positions=True)


# ============ expression nodes ============


class Expr:
    """Immutable expression tree node over chart coordinates."""

    def evaluate(self, point) -> float:
        raise NotImplementedError

    def jet(self, space: JetSpace, point) -> np.ndarray:
        raise NotImplementedError

    def to_source(self) -> str:
        raise NotImplementedError

    def variables(self) -> set[int]:
        return set()

    def __repr__(self):
        return f"Expr({self.to_source()!r})"


class Const(Expr):
    def __init__(self, value: float):
        self.value = float(value)

    def evaluate(self, point):
        return self.value

    def jet(self, space, point):
        return space.constant(self.value)

    def to_source(self):
        text = repr(self.value)
        return f"({text})" if self.value < 0 else text


class Var(Expr):
    def __init__(self, index: int):
        self.index = index

    def evaluate(self, point):
        return float(point[self.index])

    def jet(self, space, point):
        return space.variable(self.index, point[self.index])

    def to_source(self):
        return f"x{self.index}"

    def variables(self):
        return {self.index}


class Neg(Expr):
    def __init__(self, arg: Expr):
        self.arg = arg

    def evaluate(self, point):
        return -self.arg.evaluate(point)

    def jet(self, space, point):
        return -self.arg.jet(space, point)

    def to_source(self):
        return f"(-{self.arg.to_source()})"

    def variables(self):
        return self.arg.variables()


class Binary(Expr):
    symbol = "?"

    def __init__(self, left: Expr, right: Expr):
        self.left = left
        self.right = right

    def to_source(self):
        return f"({self.left.to_source()} {self.symbol} {self.right.to_source()})"

    def variables(self):
        return self.left.variables() | self.right.variables()


class Add(Binary):
    symbol = "+"

    def evaluate(self, point):
        return self.left.evaluate(point) + self.right.evaluate(point)

    def jet(self, space, point):
        return self.left.jet(space, point) + self.right.jet(space, point)


class Sub(Binary):
    symbol = "-"

    def evaluate(self, point):
        return self.left.evaluate(point) - self.right.evaluate(point)

    def jet(self, space, point):
        return self.left.jet(space, point) - self.right.jet(space, point)


class Mul(Binary):
    symbol = "*"

    def evaluate(self, point):
        return self.left.evaluate(point) * self.right.evaluate(point)

    def jet(self, space, point):
        return space.mul(self.left.jet(space, point), self.right.jet(space, point))


class Div(Binary):
    symbol = "/"

    def evaluate(self, point):
        denom = self.right.evaluate(point)
        if denom == 0.0:
            raise DomainError(f"division by zero in {self.to_source()}")
        return self.left.evaluate(point) / denom

    def jet(self, space, point):
        return space.mul(self.left.jet(space, point), space.reciprocal(self.right.jet(space, point)))


class Pow(Expr):
    def __init__(self, base: Expr, exponent: int):
        self.base = base
        self.exponent = int(exponent)

    def evaluate(self, point):
        b = self.base.evaluate(point)
        if b == 0.0 and self.exponent < 0:
            raise DomainError(f"zero to a negative power in {self.to_source()}")
        return b**self.exponent

    def jet(self, space, point):
        return space.power(self.base.jet(space, point), self.exponent)

    def to_source(self):
        exp = str(self.exponent) if self.exponent >= 0 else f"({self.exponent})"
        return f"({self.base.to_source()} ^ {exp})"

    def variables(self):
        return self.base.variables()


class Call(Expr):
    def __init__(self, name: str, arg: Expr):
        self.name = name
        self.arg = arg

    def evaluate(self, point):
        x = self.arg.evaluate(point)
        return _apply_scalar(self.name, x)

    def jet(self, space, point):
        inner = self.arg.jet(space, point)
        return space.compose(inner, SERIES[self.name](inner[..., 0], space.order))

    def to_source(self):
        return f"{self.name}({self.arg.to_source()})"

    def variables(self):
        return self.arg.variables()


def _apply_scalar(name: str, x: float) -> float:
    if name == "log" and x <= 0.0:
        raise DomainError(f"log of non-positive value {x}")
    if name == "sqrt" and x < 0.0:
        raise DomainError(f"sqrt of negative value {x}")
    return float(getattr(math, name)(x))


# ============ parser ============


class ExprBuilder(Transformer):
    """Turns the lark parse tree into Expr nodes, folding constant subtrees."""

    def __init__(self, chart_dim: int, aliases: Optional[Mapping[str, int]] = None):
        super().__init__()
        self.chart_dim = chart_dim
        self.aliases = dict(aliases or {})

    def number(self, items):
        return Const(float(items[0]))

    def name(self, items):
        token: Token = items[0]
        text = str(token)
        if text in self.aliases:
            return self._var(self.aliases[text], token)
        if text in CONSTANTS:
            return Const(CONSTANTS[text])
        if text[0] == "x" and text[1:].isdigit():
            return self._var(int(text[1:]), token)
        raise UnknownIdentifierError(f"unknown identifier {text!r}", token.start_pos)

    def _var(self, index: int, token: Token) -> Var:
        if index >= self.chart_dim:
            raise VariableRangeError(
                f"variable {token} is out of range for chart dimension {self.chart_dim}",
                token.start_pos,
            )
        return Var(index)

    def call(self, items):
        token, arg = items
        if str(token) not in FUNCTIONS:
            raise UnknownIdentifierError(f"unknown function {str(token)!r}", token.start_pos)
        node = Call(str(token), arg)
        if isinstance(arg, Const):
            try:
                return Const(_apply_scalar(node.name, arg.value))
            except DomainError:
                return node
        return node

    def neg(self, items):
        (arg,) = items
        if isinstance(arg, Const):
            return Const(-arg.value)
        return Neg(arg)

    def _binary(self, cls, items, fold):
        left, right = items
        if isinstance(left, Const) and isinstance(right, Const):
            try:
                return Const(fold(left.value, right.value))
            except ZeroDivisionError:
                pass
        return cls(left, right)

    def add(self, items):
        return self._binary(Add, items, lambda a, b: a + b)

    def sub(self, items):
        return self._binary(Sub, items, lambda a, b: a - b)

    def mul(self, items):
        return self._binary(Mul, items, lambda a, b: a * b)

    def div(self, items):
        return self._binary(Div, items, lambda a, b: a / b)

    def pow(self, items):
        base, exponent = items
        if not isinstance(exponent, Const) or exponent.value != int(exponent.value):
            raise ExprSyntaxError("exponent must be an integer constant")
        if isinstance(base, Const) and not (base.value == 0.0 and exponent.value < 0):
            return Const(base.value ** int(exponent.value))
        return Pow(base, int(exponent.value))


def parse_expr(source: str, chart_dim: int, aliases: Optional[Mapping[str, int]] = None) -> Expr:
    """
    Parse an infix expression over x0..x{chart_dim-1}.

    ``aliases`` maps extra identifiers to coordinate indices, e.g. {"t": 0}.
    """
    try:
        tree = _parser.parse(source)
    except UnexpectedInput as e:
        position = getattr(e, "pos_in_stream", None)
        raise ExprSyntaxError(f"cannot parse {source!r}", position) from None
    try:
        return ExprBuilder(chart_dim, aliases).transform(tree)
    except VisitError as e:
        if isinstance(e.orig_exc, ExprError):
            raise e.orig_exc from None
        raise


class ExprField(SmoothField):
    """Expression-backed scalar field on a chart of ``num_vars`` coordinates."""

    def __init__(self, expr: Expr, num_vars: int):
        self.expr = expr
        self.num_vars = num_vars

    @classmethod
    def parse(cls, source: str, num_vars: int, aliases=None) -> "ExprField":
        return cls(parse_expr(source, num_vars, aliases), num_vars)

    def coeffs(self, point, order):
        return self.expr.jet(jet_space(self.num_vars, order), np.asarray(point, dtype=float))

    def value(self, point):
        return self.expr.evaluate(np.asarray(point, dtype=float))

    def to_source(self) -> str:
        return self.expr.to_source()

    def __repr__(self):
        return f"ExprField({self.to_source()!r}, num_vars={self.num_vars})"
