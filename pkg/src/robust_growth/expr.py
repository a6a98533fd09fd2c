"""Tiny arithmetic grammar for inline one-dimensional covariance functions.

Grammar::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | power
    power   := atom ('^' unary)?
    atom    := NUMBER | 'x' | NAME '(' expr ')' | '(' expr ')'

``NAME`` is one of the functions in :data:`FUNCTIONS`.  Expressions are
compiled to a numba scalar function of ``x``.
"""

import math
import re

from numba import njit

from . import special
from .sigs import SCALAR_SIG


FUNCTIONS = {
    "log": "math.log",
    "exp": "math.exp",
    "sqrt": "math.sqrt",
    "sin": "math.sin",
    "cos": "math.cos",
    "intloglog": "_int_log_neg_log",
    "intcosrsqrt": "_int_cos_rsqrt",
}

_TOKEN = re.compile(r"\s*(?:(\d+\.\d*(?:[eE][-+]?\d+)?|\.\d+(?:[eE][-+]?\d+)?|\d+(?:[eE][-+]?\d+)?)|([A-Za-z_]\w*)|(\*\*|[-+*/^()]))")


class ExpressionError(ValueError):
    pass


def _tokenize(text):
    pos, tokens = 0, []
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise ExpressionError(f"unexpected character {text[pos]!r} at position {pos} in {text!r}")
        num, name, op = m.groups()
        if num is not None:
            tokens.append(("num", num))
        elif name is not None:
            tokens.append(("name", name))
        else:
            tokens.append(("op", "^" if op == "**" else op))
        pos = m.end()
    tokens.append(("end", ""))
    return tokens


class _Parser:
    def __init__(self, text):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self, kind=None, value=None):
        tok = self.tokens[self.i]
        if (kind and tok[0] != kind) or (value and tok[1] != value):
            want = value or kind
            raise ExpressionError(f"expected {want!r} but found {tok[1] or 'end of input'!r} in {self.text!r}")
        self.i += 1
        return tok

    def parse(self):
        out = self.expr()
        self.take("end")
        return out

    def expr(self):
        out = self.term()
        while self.peek() in (("op", "+"), ("op", "-")):
            op = self.take()[1]
            out = f"({out} {op} {self.term()})"
        return out

    def term(self):
        out = self.unary()
        while self.peek() in (("op", "*"), ("op", "/")):
            op = self.take()[1]
            out = f"({out} {op} {self.unary()})"
        return out

    def unary(self):
        if self.peek() == ("op", "-"):
            self.take()
            return f"(-{self.unary()})"
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek() == ("op", "^"):
            self.take()
            return f"({base} ** {self.unary()})"
        return base

    def atom(self):
        kind, value = self.peek()
        if kind == "num":
            self.take()
            return repr(float(value))
        if kind == "name":
            self.take()
            if value == "x":
                return "x"
            if value not in FUNCTIONS:
                known = ", ".join(sorted(FUNCTIONS))
                raise ExpressionError(f"unknown function {value!r}; known: {known}")
            self.take("op", "(")
            arg = self.expr()
            self.take("op", ")")
            return f"{FUNCTIONS[value]}({arg})"
        if (kind, value) == ("op", "("):
            self.take()
            inner = self.expr()
            self.take("op", ")")
            return inner
        raise ExpressionError(f"unexpected {value or 'end of input'!r} in {self.text!r}")


def to_python(text: str) -> str:
    """Translate an expression to a Python expression in ``x``."""
    return _Parser(text).parse()


_CACHE = {}


def compile_scalar(text: str):
    """Compile ``text`` into a jitted ``f(x) -> float``; results are memoized."""
    key = " ".join(text.split())
    if key not in _CACHE:
        body = to_python(key)
        namespace = {
            "math": math,
            "_int_log_neg_log": special.int_log_neg_log,
            "_int_cos_rsqrt": special.int_cos_rsqrt,
        }
        exec(f"def _c(x):\n    return {body}\n", namespace)
        _CACHE[key] = njit(SCALAR_SIG)(namespace["_c"])
    return _CACHE[key]
