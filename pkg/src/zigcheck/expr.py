"""Tiny arithmetic/boolean expression trees for guards, rates and updates.

Expressions are built either with Python operators on :class:`Var` /
:class:`Const` nodes or parsed from PRISM-like strings::

    >>> e = parse("R_leave*(1-P_comp)*Size")
    >>> e.evaluate({"R_leave": 0.5, "P_comp": 0.0, "Size": 4})
    2.0

Names are resolved at evaluation time against a single mapping holding both
state variables and model constants. Only arithmetic, comparisons and the
boolean connectives ``&``, ``|`` and ``!`` are supported.
"""
from __future__ import annotations

import ast
import operator
from dataclasses import dataclass
from typing import Any, Callable, Mapping

__all__ = [
    "Expr",
    "Const",
    "Var",
    "BinOp",
    "Not",
    "ExprError",
    "parse",
    "as_expr",
    "TRUE",
]


class ExprError(ValueError):
    """Malformed expression or unresolvable name."""


_BINOPS: dict[str, Callable[[Any, Any], Any]] = {
    "+": operator.add,
    "-": operator.sub,
    "*": operator.mul,
    "/": operator.truediv,
    "<": operator.lt,
    "<=": operator.le,
    ">": operator.gt,
    ">=": operator.ge,
    "=": operator.eq,
    "!=": operator.ne,
    "&": lambda a, b: bool(a) and bool(b),
    "|": lambda a, b: bool(a) or bool(b),
}


class Expr:
    """Base class for expression nodes."""

    def evaluate(self, env: Mapping[str, Any]) -> Any:
        raise NotImplementedError

    def names(self) -> frozenset[str]:
        raise NotImplementedError

    def substitute(self, env: Mapping[str, Any]) -> "Expr":
        """Replace names found in ``env`` by constants, folding where possible."""
        raise NotImplementedError

    def compile(self, index: Mapping[str, int]) -> Callable[[tuple], Any]:
        """Compile to a closure over a state tuple.

        ``index`` maps each free name to a position in the tuple. All other
        names must already have been substituted away.
        """
        raise NotImplementedError

    # operator sugar
    def __add__(self, o): return BinOp("+", self, as_expr(o))
    def __radd__(self, o): return BinOp("+", as_expr(o), self)
    def __sub__(self, o): return BinOp("-", self, as_expr(o))
    def __rsub__(self, o): return BinOp("-", as_expr(o), self)
    def __mul__(self, o): return BinOp("*", self, as_expr(o))
    def __rmul__(self, o): return BinOp("*", as_expr(o), self)
    def __truediv__(self, o): return BinOp("/", self, as_expr(o))
    def __rtruediv__(self, o): return BinOp("/", as_expr(o), self)
    def __lt__(self, o): return BinOp("<", self, as_expr(o))
    def __le__(self, o): return BinOp("<=", self, as_expr(o))
    def __gt__(self, o): return BinOp(">", self, as_expr(o))
    def __ge__(self, o): return BinOp(">=", self, as_expr(o))
    def __and__(self, o): return BinOp("&", self, as_expr(o))
    def __or__(self, o): return BinOp("|", self, as_expr(o))
    def __invert__(self): return Not(self)

    def eq(self, o) -> "BinOp":
        return BinOp("=", self, as_expr(o))

    def ne(self, o) -> "BinOp":
        return BinOp("!=", self, as_expr(o))


@dataclass(frozen=True, eq=True)
class Const(Expr):
    value: Any

    def evaluate(self, env):
        return self.value

    def names(self):
        return frozenset()

    def substitute(self, env):
        return self

    def compile(self, index):
        v = self.value
        return lambda s: v

    def __str__(self):
        if isinstance(self.value, bool):
            return "true" if self.value else "false"
        return repr(self.value)


@dataclass(frozen=True, eq=True)
class Var(Expr):
    name: str

    def evaluate(self, env):
        try:
            return env[self.name]
        except KeyError:
            raise ExprError(f"unbound name {self.name!r}") from None

    def names(self):
        return frozenset((self.name,))

    def substitute(self, env):
        if self.name in env:
            return Const(env[self.name])
        return self

    def compile(self, index):
        try:
            i = index[self.name]
        except KeyError:
            raise ExprError(f"unbound name {self.name!r}") from None
        return operator.itemgetter(i)

    def __str__(self):
        return self.name


@dataclass(frozen=True, eq=True)
class BinOp(Expr):
    op: str
    left: Expr
    right: Expr

    def __post_init__(self):
        if self.op not in _BINOPS:
            raise ExprError(f"unknown operator {self.op!r}")

    def evaluate(self, env):
        return _BINOPS[self.op](self.left.evaluate(env), self.right.evaluate(env))

    def names(self):
        return self.left.names() | self.right.names()

    def substitute(self, env):
        left = self.left.substitute(env)
        right = self.right.substitute(env)
        if isinstance(left, Const) and isinstance(right, Const):
            return Const(_BINOPS[self.op](left.value, right.value))
        return BinOp(self.op, left, right)

    def compile(self, index):
        f = _BINOPS[self.op]
        lf = self.left.compile(index)
        rf = self.right.compile(index)
        if isinstance(self.left, Const):
            lv = self.left.value
            return lambda s: f(lv, rf(s))
        if isinstance(self.right, Const):
            rv = self.right.value
            return lambda s: f(lf(s), rv)
        return lambda s: f(lf(s), rf(s))

    def __str__(self):
        return f"({self.left} {self.op} {self.right})"


@dataclass(frozen=True, eq=True)
class Not(Expr):
    operand: Expr

    def evaluate(self, env):
        return not self.operand.evaluate(env)

    def names(self):
        return self.operand.names()

    def substitute(self, env):
        inner = self.operand.substitute(env)
        if isinstance(inner, Const):
            return Const(not inner.value)
        return Not(inner)

    def compile(self, index):
        f = self.operand.compile(index)
        return lambda s: not f(s)

    def __str__(self):
        return f"!{self.operand}"


TRUE = Const(True)


def as_expr(x: Any) -> Expr:
    """Coerce numbers, bools and strings to expressions (strings are parsed)."""
    if isinstance(x, Expr):
        return x
    if isinstance(x, str):
        return parse(x)
    if isinstance(x, (bool, int, float)):
        return Const(x)
    raise ExprError(f"cannot convert {x!r} to an expression")


_AST_BINOPS = {ast.Add: "+", ast.Sub: "-", ast.Mult: "*", ast.Div: "/"}
_AST_CMPOPS = {
    ast.Lt: "<",
    ast.LtE: "<=",
    ast.Gt: ">",
    ast.GtE: ">=",
    ast.Eq: "=",
    ast.NotEq: "!=",
}


def parse(text: str) -> Expr:
    """Parse a PRISM-style expression string.

    Accepts ``=`` for equality, ``!`` for negation, ``&``/``|`` for
    conjunction/disjunction and the literals ``true``/``false``.
    """
    src = text.strip()
    if not src:
        raise ExprError("empty expression")
    # Translate PRISM syntax into a Python expression we can hand to ast.
    src = src.replace("==", "=")
    src = src.replace("!=", "\x01").replace("<=", "\x02").replace(">=", "\x03")
    src = src.replace("!", " not ").replace("=", "==")
    src = src.replace("\x01", "!=").replace("\x02", "<=").replace("\x03", ">=")
    src = src.replace("&", " and ").replace("|", " or ").strip()
    try:
        tree = ast.parse(src, mode="eval")
    except SyntaxError as exc:
        raise ExprError(f"cannot parse {text!r}: {exc.msg}") from None
    return _convert(tree.body, text)


def _convert(node: ast.AST, text: str) -> Expr:
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float, bool)):
        return Const(node.value)
    if isinstance(node, ast.Name):
        if node.id == "true":
            return Const(True)
        if node.id == "false":
            return Const(False)
        return Var(node.id)
    if isinstance(node, ast.BinOp) and type(node.op) in _AST_BINOPS:
        return BinOp(_AST_BINOPS[type(node.op)], _convert(node.left, text), _convert(node.right, text))
    if isinstance(node, ast.UnaryOp):
        if isinstance(node.op, ast.Not):
            return Not(_convert(node.operand, text))
        if isinstance(node.op, ast.USub):
            inner = _convert(node.operand, text)
            if isinstance(inner, Const):
                return Const(-inner.value)
            return BinOp("-", Const(0), inner)
        if isinstance(node.op, ast.UAdd):
            return _convert(node.operand, text)
    if isinstance(node, ast.BoolOp):
        op = "&" if isinstance(node.op, ast.And) else "|"
        out = _convert(node.values[0], text)
        for v in node.values[1:]:
            out = BinOp(op, out, _convert(v, text))
        return out
    if isinstance(node, ast.Compare):
        parts = []
        left = _convert(node.left, text)
        for op, comp in zip(node.ops, node.comparators):
            if type(op) not in _AST_CMPOPS:
                break
            right = _convert(comp, text)
            parts.append(BinOp(_AST_CMPOPS[type(op)], left, right))
            left = right
        else:
            out = parts[0]
            for p in parts[1:]:
                out = BinOp("&", out, p)
            return out
    raise ExprError(f"unsupported construct in {text!r}: {ast.dump(node)[:60]}")
