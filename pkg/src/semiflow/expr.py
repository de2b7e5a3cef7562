"""Small arithmetic expression language for scenario data.

Grammar (lowest to highest precedence)::

    expr  := term (('+' | '-') term)*
    term  := unary (('*' | '/') unary)*
    unary := '-' unary | power
    power := atom ('^' unary)?          # right-associative
    atom  := NUMBER | NAME | NAME '(' expr (',' expr)* ')' | '(' expr ')'

Evaluation is vectorised over numpy arrays.  ``ln`` and ``sqrt`` outside
their domain raise :class:`EvalError` with the offending position; division
follows IEEE rules.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np

from .errors import ScenarioError

VARIABLES = frozenset({"x", "y", "u", "t", "s"})
CONSTANTS = {"pi": math.pi, "e": math.e}
UNARY_FUNCS = {
    "sin": np.sin, "cos": np.cos, "exp": np.exp, "ln": np.log,
    "abs": np.abs, "sqrt": np.sqrt, "sign": np.sign,
}
VARIADIC_FUNCS = {"min": np.minimum, "max": np.maximum}
FUNCTIONS = frozenset(UNARY_FUNCS) | frozenset(VARIADIC_FUNCS)


class ParseError(ScenarioError):
    """Syntax error at a byte offset, with the set of tokens that would have fit."""

    def __init__(self, message: str, text: str, pos: int, expected=()):
        self.offset = len(text[:pos].encode("utf-8"))
        self.expected = frozenset(expected)
        hint = f"; expected one of {sorted(self.expected)}" if self.expected else ""
        super().__init__(f"{message} at byte {self.offset}{hint}")


class EvalError(ScenarioError):
    def __init__(self, message: str, pos: int):
        self.pos = pos
        super().__init__(f"{message} (at position {pos})")


# --------------------------------------------------------------------------
# AST
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Num:
    value: float
    pos: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Const:
    name: str
    pos: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Var:
    name: str
    pos: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Neg:
    operand: object
    pos: int = field(default=0, compare=False)


@dataclass(frozen=True)
class BinOp:
    op: str
    left: object
    right: object
    pos: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple
    pos: int = field(default=0, compare=False)


# --------------------------------------------------------------------------
# tokenizer and parser
# --------------------------------------------------------------------------

_TOKEN = re.compile(r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^(),])
""", re.VERBOSE)

_ATOM_START = {"NUMBER", "NAME", "(", "-"}


def _tokenize(text: str):
    tokens, pos = [], 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", text, pos,
                             _ATOM_START | {"+", "*", "/", "^", ")", ","})
        kind = m.lastgroup
        if kind != "ws":
            tokens.append((kind, m.group(), pos))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def fail(self, expected, message=None):
        kind, value, pos = self.peek()
        what = "end of input" if kind == "end" else repr(value)
        raise ParseError(message or f"unexpected {what}", self.text, pos, expected)

    def expect(self, value):
        if self.peek()[1] != value or self.peek()[0] != "op":
            self.fail({value})
        return self.advance()

    def parse(self):
        node = self.expr()
        if self.peek()[0] != "end":
            self.fail({"+", "-", "*", "/", "^", "end of input"})
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            _, op, pos = self.advance()
            node = BinOp(op, node, self.term(), pos)
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            _, op, pos = self.advance()
            node = BinOp(op, node, self.unary(), pos)
        return node

    def unary(self):
        kind, value, pos = self.peek()
        if kind == "op" and value == "-":
            self.advance()
            return Neg(self.unary(), pos)
        return self.power()

    def power(self):
        node = self.atom()
        kind, value, pos = self.peek()
        if kind == "op" and value == "^":
            self.advance()
            return BinOp("^", node, self.unary(), pos)
        return node

    def atom(self):
        kind, value, pos = self.peek()
        if kind == "num":
            self.advance()
            return Num(float(value), pos)
        if kind == "name":
            self.advance()
            if value in FUNCTIONS:
                self.expect("(")
                args = [self.expr()]
                if value in VARIADIC_FUNCS:
                    # arity errors point at the token that broke it
                    if not (self.peek()[0] == "op" and self.peek()[1] == ","):
                        self.fail({","}, f"{value} takes at least two arguments")
                    while self.peek()[1] == "," and self.peek()[0] == "op":
                        self.advance()
                        args.append(self.expr())
                    self.expect(")")
                elif not (self.peek()[0] == "op" and self.peek()[1] == ")"):
                    self.fail({")"}, f"{value} takes one argument")
                else:
                    self.advance()
                return Call(value, tuple(args), pos)
            if value in CONSTANTS:
                return Const(value, pos)
            if value in VARIABLES:
                return Var(value, pos)
            raise ParseError(f"unknown name {value!r}", self.text, pos,
                             VARIABLES | FUNCTIONS | frozenset(CONSTANTS))
        if kind == "op" and value == "(":
            self.advance()
            node = self.expr()
            self.expect(")")
            return node
        self.fail({"NUMBER", "NAME", "(", "-"})


def parse_ast(text: str):
    return _Parser(text).parse()


# --------------------------------------------------------------------------
# printing, free variables, evaluation
# --------------------------------------------------------------------------

def to_text(node) -> str:
    """Fully parenthesised source that parses back to an equal AST."""
    if isinstance(node, Num):
        return repr(float(node.value))
    if isinstance(node, (Const, Var)):
        return node.name
    if isinstance(node, Neg):
        return f"(-{to_text(node.operand)})"
    if isinstance(node, BinOp):
        return f"({to_text(node.left)} {node.op} {to_text(node.right)})"
    if isinstance(node, Call):
        return f"{node.name}({', '.join(to_text(a) for a in node.args)})"
    raise TypeError(f"not an expression node: {node!r}")


def free_variables(node) -> frozenset:
    if isinstance(node, Var):
        return frozenset({node.name})
    if isinstance(node, Neg):
        return free_variables(node.operand)
    if isinstance(node, BinOp):
        return free_variables(node.left) | free_variables(node.right)
    if isinstance(node, Call):
        return frozenset().union(*(free_variables(a) for a in node.args))
    return frozenset()


def evaluate(node, env: dict):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Const):
        return CONSTANTS[node.name]
    if isinstance(node, Var):
        if node.name not in env:
            raise EvalError(f"variable {node.name!r} is not bound", node.pos)
        return env[node.name]
    if isinstance(node, Neg):
        return -evaluate(node.operand, env)
    if isinstance(node, BinOp):
        a = np.asarray(evaluate(node.left, env), dtype=float)
        b = np.asarray(evaluate(node.right, env), dtype=float)
        with np.errstate(all="ignore"):
            if node.op == "+":
                return a + b
            if node.op == "-":
                return a - b
            if node.op == "*":
                return a * b
            if node.op == "/":
                return a / b
            return np.power(a, b)
    if isinstance(node, Call):
        args = [np.asarray(evaluate(a, env), dtype=float) for a in node.args]
        if node.name == "ln" and np.any(args[0] <= 0):
            raise EvalError("ln of a nonpositive value", node.pos)
        if node.name == "sqrt" and np.any(args[0] < 0):
            raise EvalError("sqrt of a negative value", node.pos)
        if node.name in UNARY_FUNCS:
            return UNARY_FUNCS[node.name](args[0])
        out = args[0]
        for a in args[1:]:
            out = VARIADIC_FUNCS[node.name](out, a)
        return out
    raise TypeError(f"not an expression node: {node!r}")


@dataclass(frozen=True)
class Expression:
    """Parsed expression with its source text."""

    text: str
    ast: object

    @classmethod
    def parse(cls, text: str) -> "Expression":
        return cls(text, parse_ast(text))

    @property
    def variables(self) -> frozenset:
        return free_variables(self.ast)

    def require(self, allowed, slot: str = "expression") -> "Expression":
        extra = self.variables - frozenset(allowed)
        if extra:
            raise ScenarioError(f"{slot} may only use {sorted(allowed)}, found {sorted(extra)} in {self.text!r}")
        return self

    def __call__(self, **env):
        return evaluate(self.ast, env)

    def __str__(self) -> str:
        return to_text(self.ast)


def parse_expression(text: str) -> Expression:
    return Expression.parse(text)


__all__ = [
    "BinOp", "CONSTANTS", "Call", "Const", "EvalError", "Expression", "FUNCTIONS", "Neg", "Num",
    "ParseError", "VARIABLES", "Var", "evaluate", "free_variables", "parse_ast",
    "parse_expression", "to_text",
]
