"""Small scalar expression language for defining problem fields in text config.

Grammar (highest binding first)::

    power   := atom ('^' signed)?          # right associative
    signed  := '-' signed | power
    factor  := '-' factor | power
    term    := factor (('*' | '/') factor)*
    sum     := term (('+' | '-') term)*
    atom    := NUMBER | 'pi' | NAME | NAME '(' sum (',' sum)* ')' | '(' sum ')'

Unary functions: sin cos exp log sqrt abs tanh. Binary functions: min max.
No implicit multiplication, no user-defined functions. Expressions are
immutable after parse and safe to evaluate concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    ArityError,
    EvalDomainError,
    MissingBindingError,
    ParseError,
    UnknownIdentifierError,
)

__all__ = [
    "Expression",
    "Const",
    "Var",
    "Unary",
    "Binary",
    "parse",
    "evaluate",
    "evaluate_array",
    "free_variables",
    "to_source",
]

_UNARY_FUNCS = ("sin", "cos", "exp", "log", "sqrt", "abs", "tanh")
_BINARY_FUNCS = ("min", "max")


@dataclass(frozen=True)
class Const:
    value: float

    def __str__(self):
        return to_source(self)


@dataclass(frozen=True)
class Var:
    name: str

    def __str__(self):
        return to_source(self)


@dataclass(frozen=True)
class Unary:
    op: str  # 'neg' or a function name
    child: "Expression"

    def __str__(self):
        return to_source(self)


@dataclass(frozen=True)
class Binary:
    op: str  # '+', '-', '*', '/', '^', 'min', 'max'
    left: "Expression"
    right: "Expression"

    def __str__(self):
        return to_source(self)


Expression = Const | Var | Unary | Binary


# --- tokenizer --------------------------------------------------------------

_SINGLE = "+-*/^(),"


def _byte_offset(source: str, index: int) -> int:
    return len(source[:index].encode("utf-8"))


def _tokenize(source: str):
    """Yield (kind, text, byte_offset) tuples; kind in {num, name, op, end}."""
    tokens = []
    i = 0
    n = len(source)
    while i < n:
        c = source[i]
        if c.isspace():
            i += 1
            continue
        off = _byte_offset(source, i)
        if c in _SINGLE:
            tokens.append(("op", c, off))
            i += 1
        elif c.isdigit() or (c == "." and i + 1 < n and source[i + 1].isdigit()):
            j = i
            seen_dot = False
            while j < n and (source[j].isdigit() or (source[j] == "." and not seen_dot)):
                if source[j] == ".":
                    seen_dot = True
                j += 1
            # exponent part
            if j < n and source[j] in "eE":
                k = j + 1
                if k < n and source[k] in "+-":
                    k += 1
                if k < n and source[k].isdigit():
                    while k < n and source[k].isdigit():
                        k += 1
                    j = k
            tokens.append(("num", source[i:j], off))
            i = j
        elif c.isalpha() or c == "_":
            j = i
            while j < n and (source[j].isalnum() or source[j] == "_"):
                j += 1
            tokens.append(("name", source[i:j], off))
            i = j
        else:
            raise ParseError(f"unexpected character '{c}'", off)
    tokens.append(("end", "", _byte_offset(source, n)))
    return tokens


# --- parser ------------------------------------------------------------------


class _Parser:
    def __init__(self, source: str, allowed_vars):
        self.tokens = _tokenize(source)
        self.pos = 0
        self.allowed = set(allowed_vars)

    def _peek(self):
        return self.tokens[self.pos]

    def _next(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def _expect(self, text):
        kind, tok, off = self._next()
        if kind != "op" or tok != text:
            raise ParseError(f"expected '{text}'", off)

    def parse(self) -> Expression:
        e = self.sum()
        kind, tok, off = self._peek()
        if kind != "end":
            raise ParseError(f"unexpected trailing input '{tok}'", off)
        return e

    def sum(self) -> Expression:
        e = self.term()
        while True:
            kind, tok, _ = self._peek()
            if kind == "op" and tok in "+-":
                self._next()
                e = Binary(tok, e, self.term())
            else:
                return e

    def term(self) -> Expression:
        e = self.factor()
        while True:
            kind, tok, _ = self._peek()
            if kind == "op" and tok in "*/":
                self._next()
                e = Binary(tok, e, self.factor())
            else:
                return e

    def factor(self) -> Expression:
        kind, tok, _ = self._peek()
        if kind == "op" and tok == "-":
            self._next()
            return Unary("neg", self.factor())
        return self.power()

    def signed(self) -> Expression:
        kind, tok, _ = self._peek()
        if kind == "op" and tok == "-":
            self._next()
            return Unary("neg", self.signed())
        return self.power()

    def power(self) -> Expression:
        e = self.atom()
        kind, tok, _ = self._peek()
        if kind == "op" and tok == "^":
            self._next()
            return Binary("^", e, self.signed())
        return e

    def atom(self) -> Expression:
        kind, tok, off = self._next()
        if kind == "num":
            return Const(float(tok))
        if kind == "name":
            if tok == "pi":
                return Const(math.pi)
            nkind, ntok, _ = self._peek()
            if nkind == "op" and ntok == "(":
                return self._call(tok, off)
            if tok in _UNARY_FUNCS or tok in _BINARY_FUNCS:
                raise ParseError(f"function '{tok}' requires arguments", off)
            if tok not in self.allowed:
                raise UnknownIdentifierError(tok, off)
            return Var(tok)
        if kind == "op" and tok == "(":
            e = self.sum()
            self._expect(")")
            return e
        raise ParseError("expected operand" if kind == "end" else f"unexpected '{tok}'", off)

    def _call(self, func, off) -> Expression:
        self._expect("(")
        args = [self.sum()]
        while True:
            kind, tok, _ = self._peek()
            if kind == "op" and tok == ",":
                self._next()
                args.append(self.sum())
            else:
                break
        self._expect(")")
        if func in _UNARY_FUNCS:
            if len(args) != 1:
                raise ArityError(func, 1, len(args), off)
            return Unary(func, args[0])
        if func in _BINARY_FUNCS:
            if len(args) != 2:
                raise ArityError(func, 2, len(args), off)
            return Binary(func, args[0], args[1])
        raise UnknownIdentifierError(func, off)


def parse(source: str, allowed_vars) -> Expression:
    """Parse ``source`` using only variables from ``allowed_vars``.

    Raises ParseError (with byte offset), UnknownIdentifierError or ArityError.
    """
    return _Parser(source, allowed_vars).parse()


# --- evaluation ---------------------------------------------------------------


def _eval(node, bindings, array):
    if isinstance(node, Const):
        return node.value
    if isinstance(node, Var):
        try:
            return bindings[node.name]
        except KeyError:
            raise MissingBindingError(node.name) from None
    if isinstance(node, Unary):
        v = _eval(node.child, bindings, array)
        return _apply_unary(node, v, array)
    v1 = _eval(node.left, bindings, array)
    v2 = _eval(node.right, bindings, array)
    return _apply_binary(node, v1, v2, array)


def _any(cond, array):
    return bool(np.any(cond)) if array else bool(cond)


def _apply_unary(node, v, array):
    op = node.op
    if op == "neg":
        return -v
    if op == "sin":
        return np.sin(v)
    if op == "cos":
        return np.cos(v)
    if op == "exp":
        return np.exp(v)
    if op == "tanh":
        return np.tanh(v)
    if op == "abs":
        return np.abs(v)
    if op == "log":
        if _any(v <= 0.0, array):
            raise EvalDomainError("log of non-positive value", node)
        return np.log(v)
    if op == "sqrt":
        if _any(v < 0.0, array):
            raise EvalDomainError("sqrt of negative value", node)
        return np.sqrt(v)
    raise AssertionError(op)


def _apply_binary(node, v1, v2, array):
    op = node.op
    if op == "+":
        return v1 + v2
    if op == "-":
        return v1 - v2
    if op == "*":
        return v1 * v2
    if op == "/":
        if _any(v2 == 0.0, array):
            raise EvalDomainError("division by zero", node)
        return v1 / v2
    if op == "^":
        frac = np.not_equal(np.floor(v2), v2)
        if _any(np.logical_and(v1 < 0.0, frac), array):
            raise EvalDomainError("negative base with non-integer exponent", node)
        if _any(np.logical_and(v1 == 0.0, v2 < 0.0), array):
            raise EvalDomainError("zero base with negative exponent", node)
        return np.power(v1, v2)
    if op == "min":
        return np.minimum(v1, v2)
    if op == "max":
        return np.maximum(v1, v2)
    raise AssertionError(op)


def evaluate(e: Expression, bindings: dict) -> float:
    """Evaluate to an IEEE double. Domain violations raise EvalDomainError."""
    out = float(_eval(e, {k: float(v) for k, v in bindings.items()}, array=False))
    if math.isnan(out):
        raise EvalDomainError("evaluation produced NaN", e)
    return out


def evaluate_array(e: Expression, bindings: dict) -> np.ndarray:
    """Vectorized evaluation; bindings map names to broadcastable arrays."""
    out = np.asarray(_eval(e, bindings, array=True), dtype=float)
    if np.any(np.isnan(out)):
        raise EvalDomainError("evaluation produced NaN", e)
    return out


def free_variables(e: Expression) -> set:
    if isinstance(e, Const):
        return set()
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, Unary):
        return free_variables(e.child)
    return free_variables(e.left) | free_variables(e.right)


def to_source(e: Expression) -> str:
    """Fully parenthesized form; reparsing yields an identical tree."""
    if isinstance(e, Const):
        return repr(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Unary):
        if e.op == "neg":
            return f"(-{to_source(e.child)})"
        return f"{e.op}({to_source(e.child)})"
    if e.op in _BINARY_FUNCS:
        return f"{e.op}({to_source(e.left)}, {to_source(e.right)})"
    return f"({to_source(e.left)} {e.op} {to_source(e.right)})"
