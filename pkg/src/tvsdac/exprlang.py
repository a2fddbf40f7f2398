"""Small arithmetic expression language used for plant terms and the reference model.

Grammar (EBNF)::

    expr     = term { ("+" | "-") term } ;
    term     = unary { ("*" | "/") unary } ;
    unary    = ("-" | "+") unary | power ;
    power    = atom { "^" exponent } ;
    exponent = [ "-" | "+" ] NUMBER | "(" [ "-" | "+" ] NUMBER ")" ;
    atom     = NUMBER | NAME | FUNC "(" expr ")" | "(" expr ")" ;
    FUNC     = "sin" | "cos" | "tanh" | "exp" | "abs" | "sqrt" ;

``^`` binds tighter than unary minus, so ``-x1^2`` is ``-(x1^2)``.  Exponents
must be numeric literals.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Mapping, Union

import numpy as np

from .errors import ExprDomainError, ExprSyntaxError, UnboundVariableError

FUNCTIONS = ("sin", "cos", "tanh", "exp", "abs", "sqrt")


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Pow:
    base: "Expr"
    exponent: float


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Expr"


Expr = Union[Num, Var, Neg, BinOp, Pow, Call]


# -- tokenizer ---------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^()])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Token:
    kind: str  # "num", "name", "op", "eof"
    text: str
    offset: int


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ExprSyntaxError(pos, f"unexpected character {text[pos]!r}")
        kind = m.lastgroup
        if kind != "ws":
            tokens.append(_Token(kind, m.group(), pos))
        pos = m.end()
    tokens.append(_Token("eof", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.pos = 0

    @property
    def tok(self) -> _Token:
        return self.tokens[self.pos]

    def advance(self) -> _Token:
        t = self.tokens[self.pos]
        self.pos += 1
        return t

    def expect(self, text: str) -> None:
        if self.tok.text != text or self.tok.kind != "op":
            raise ExprSyntaxError(self.tok.offset, f"expected {text!r}, found {self._describe()}")
        self.advance()

    def _describe(self) -> str:
        return "end of input" if self.tok.kind == "eof" else repr(self.tok.text)

    def parse(self) -> Expr:
        e = self.expr()
        if self.tok.kind != "eof":
            raise ExprSyntaxError(self.tok.offset, f"unexpected {self._describe()}")
        return e

    def expr(self) -> Expr:
        left = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self.advance().text
            left = BinOp(op, left, self.term())
        return left

    def term(self) -> Expr:
        left = self.unary()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = self.advance().text
            left = BinOp(op, left, self.unary())
        return left

    def unary(self) -> Expr:
        if self.tok.kind == "op" and self.tok.text == "-":
            self.advance()
            return Neg(self.unary())
        if self.tok.kind == "op" and self.tok.text == "+":
            self.advance()
            return self.unary()
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        while self.tok.kind == "op" and self.tok.text == "^":
            self.advance()
            base = Pow(base, self.exponent())
        return base

    def exponent(self) -> float:
        paren = self.tok.kind == "op" and self.tok.text == "("
        if paren:
            self.advance()
        sign = 1.0
        if self.tok.kind == "op" and self.tok.text in "+-":
            sign = -1.0 if self.advance().text == "-" else 1.0
        if self.tok.kind != "num":
            raise ExprSyntaxError(self.tok.offset, "exponent must be a numeric literal")
        value = sign * float(self.advance().text)
        if paren:
            self.expect(")")
        return value

    def atom(self) -> Expr:
        t = self.tok
        if t.kind == "num":
            self.advance()
            return Num(float(t.text))
        if t.kind == "name":
            self.advance()
            if t.text in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Call(t.text, arg)
            if self.tok.kind == "op" and self.tok.text == "(":
                raise ExprSyntaxError(t.offset, f"unknown function {t.text!r}")
            return Var(t.text)
        if t.kind == "op" and t.text == "(":
            self.advance()
            e = self.expr()
            self.expect(")")
            return e
        raise ExprSyntaxError(t.offset, f"expected an operand, found {self._describe()}")


def parse(text: str) -> Expr:
    """Parse ``text`` into an expression tree.

    Raises :class:`ExprSyntaxError` carrying the byte offset of the problem.
    """
    return _Parser(text).parse()


# -- evaluation --------------------------------------------------------------


def _pow(base: float, exponent: float) -> float:
    if base == 0.0 and exponent < 0.0:
        raise ExprDomainError("division by zero (zero raised to a negative power)")
    if base < 0.0 and not float(exponent).is_integer():
        raise ExprDomainError(f"negative base {base!r} with non-integer exponent {exponent!r}")
    try:
        return math.pow(base, exponent)
    except OverflowError:
        raise ExprDomainError("overflow in power") from None


def _call(func: str, x: float) -> float:
    if func == "sin":
        return math.sin(x)
    if func == "cos":
        return math.cos(x)
    if func == "tanh":
        return math.tanh(x)
    if func == "exp":
        try:
            return math.exp(x)
        except OverflowError:
            raise ExprDomainError(f"overflow in exp({x!r})") from None
    if func == "abs":
        return abs(x)
    if func == "sqrt":
        if x < 0.0:
            raise ExprDomainError(f"sqrt of negative value {x!r}")
        return math.sqrt(x)
    raise ExprDomainError(f"unknown function {func!r}")


def evaluate(e: Expr, env: Mapping[str, float]) -> float:
    """Evaluate ``e`` in IEEE double precision with variables bound by ``env``."""
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        try:
            return float(env[e.name])
        except KeyError:
            raise UnboundVariableError(e.name) from None
    if isinstance(e, BinOp):
        a = evaluate(e.left, env)
        b = evaluate(e.right, env)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        if b == 0.0:
            raise ExprDomainError("division by zero")
        return a / b
    if isinstance(e, Neg):
        return -evaluate(e.operand, env)
    if isinstance(e, Pow):
        return _pow(evaluate(e.base, env), e.exponent)
    if isinstance(e, Call):
        return _call(e.func, evaluate(e.arg, env))
    raise TypeError(f"not an expression node: {e!r}")


def free_vars(e: Expr) -> set[str]:
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, Num):
        return set()
    if isinstance(e, BinOp):
        return free_vars(e.left) | free_vars(e.right)
    if isinstance(e, Neg):
        return free_vars(e.operand)
    if isinstance(e, Pow):
        return free_vars(e.base)
    if isinstance(e, Call):
        return free_vars(e.arg)
    raise TypeError(f"not an expression node: {e!r}")


def to_source(e: Expr) -> str:
    """Render ``e`` back to text; every compound subterm is parenthesized."""
    if isinstance(e, Num):
        return repr(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, BinOp):
        return f"({to_source(e.left)} {e.op} {to_source(e.right)})"
    if isinstance(e, Neg):
        return f"(-{to_source(e.operand)})"
    if isinstance(e, Pow):
        return f"({to_source(e.base)}^({e.exponent!r}))"
    if isinstance(e, Call):
        return f"{e.func}({to_source(e.arg)})"
    raise TypeError(f"not an expression node: {e!r}")


# -- flat programs for the compiled kernel -----------------------------------

OP_CONST, OP_VAR, OP_ADD, OP_SUB, OP_MUL, OP_DIV, OP_NEG, OP_POW = range(8)
OP_SIN, OP_COS, OP_TANH, OP_EXP, OP_ABS, OP_SQRT = range(8, 14)
_FUNC_OPS = {"sin": OP_SIN, "cos": OP_COS, "tanh": OP_TANH, "exp": OP_EXP,
             "abs": OP_ABS, "sqrt": OP_SQRT}
_BIN_OPS = {"+": OP_ADD, "-": OP_SUB, "*": OP_MUL, "/": OP_DIV}


@dataclass(frozen=True)
class Program:
    """Postfix form of an expression: ``code`` is an (k, 2) int array of (opcode, arg)."""

    code: np.ndarray
    consts: np.ndarray
    depth: int


def compile_program(e: Expr, slots: Mapping[str, int]) -> Program:
    """Flatten ``e`` into a stack program reading variables from ``env[slots[name]]``."""
    code: list[tuple[int, int]] = []
    consts: list[float] = []

    def const(value: float) -> int:
        consts.append(float(value))
        return len(consts) - 1

    def emit(node: Expr) -> int:
        # returns the stack depth needed by ``node``
        if isinstance(node, Num):
            code.append((OP_CONST, const(node.value)))
            return 1
        if isinstance(node, Var):
            if node.name not in slots:
                raise UnboundVariableError(node.name)
            code.append((OP_VAR, slots[node.name]))
            return 1
        if isinstance(node, BinOp):
            d1 = emit(node.left)
            d2 = emit(node.right)
            code.append((_BIN_OPS[node.op], 0))
            return max(d1, d2 + 1)
        if isinstance(node, Neg):
            d = emit(node.operand)
            code.append((OP_NEG, 0))
            return d
        if isinstance(node, Pow):
            d = emit(node.base)
            code.append((OP_POW, const(node.exponent)))
            return d
        if isinstance(node, Call):
            d = emit(node.arg)
            code.append((_FUNC_OPS[node.func], 0))
            return d
        raise TypeError(f"not an expression node: {node!r}")

    depth = emit(e)
    return Program(
        code=np.asarray(code, dtype=np.int32).reshape(-1, 2),
        consts=np.asarray(consts, dtype=np.float64),
        depth=depth,
    )
