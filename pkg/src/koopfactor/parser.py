"""Vector-field source text: tokenizer, recursive-descent parser, compiler.

Grammar (whitespace-insensitive)::

    field  := '[' expr (',' expr)* ']'
    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := ('-' | '+') unary | power
    power  := atom ('^' unary)?          # right-associative, integer exponent
    atom   := NUMBER | NAME | NAME '(' expr ')' | '(' expr ')'

Names are the state variables ``x1 .. xn``, bound parameters, or one of the
functions ``sin cos exp log sqrt tanh``.  Parsed components are compiled to
Python functions that accept floats, complex numbers, numpy arrays or
:class:`~koopfactor.jet.Jet` objects alike.
"""

from __future__ import annotations

import cmath
import math
import re
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .jet import Jet, JetDomainError, MapJet

FUNCTIONS = ("sin", "cos", "exp", "log", "sqrt", "tanh")


class FieldSyntaxError(ValueError):
    """Malformed field source; carries the 1-based line and column."""

    def __init__(self, msg: str, line: int, col: int):
        super().__init__(f"line {line}, column {col}: {msg}")
        self.line = line
        self.col = col


class FieldDomainError(ArithmeticError):
    """Evaluation left the domain of an operation in one component."""

    def __init__(self, component: int, cause: Exception):
        super().__init__(f"component {component + 1}: {cause}")
        self.component = component
        self.cause = cause


# AST ---------------------------------------------------------------------

@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    index: int  # 0-based


@dataclass(frozen=True)
class Neg:
    arg: object


@dataclass(frozen=True)
class BinOp:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class Pow:
    base: object
    exponent: int


@dataclass(frozen=True)
class Call:
    func: str
    arg: object


# tokenizer ---------------------------------------------------------------

_TOKEN = re.compile(
    r"(?P<ws>\s+)"
    r"|(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^(),\[\]])"
)


@dataclass(frozen=True)
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(src: str) -> list[_Tok]:
    toks = []
    pos, line, line_start = 0, 1, 0
    while pos < len(src):
        m = _TOKEN.match(src, pos)
        if m is None:
            raise FieldSyntaxError(f"unexpected character {src[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        text = m.group()
        if kind == "ws":
            for j, ch in enumerate(text):
                if ch == "\n":
                    line += 1
                    line_start = pos + j + 1
        else:
            toks.append(_Tok(kind, text, line, pos - line_start + 1))
        pos = m.end()
    toks.append(_Tok("end", "", line, pos - line_start + 1))
    return toks


class _Parser:
    def __init__(self, src: str, n: int | None, params: Mapping[str, float]):
        self.toks = _tokenize(src)
        self.i = 0
        self.n = n
        self.params = dict(params)

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def error(self, msg: str, tok: _Tok | None = None):
        tok = tok or self.tok
        raise FieldSyntaxError(msg, tok.line, tok.col)

    def expect(self, text: str) -> _Tok:
        tok = self.tok
        if tok.text != text or tok.kind == "end":
            found = "end of input" if tok.kind == "end" else repr(tok.text)
            self.error(f"expected {text!r}, found {found}")
        self.i += 1
        return tok

    def field(self) -> list:
        self.expect("[")
        comps = [self.expr()]
        while self.tok.text == ",":
            self.i += 1
            comps.append(self.expr())
        self.expect("]")
        if self.tok.kind != "end":
            self.error(f"trailing input {self.tok.text!r}")
        return comps

    def expr(self):
        node = self.term()
        while self.tok.text in ("+", "-") and self.tok.kind == "op":
            op = self.tok.text
            self.i += 1
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.tok.text in ("*", "/") and self.tok.kind == "op":
            op = self.tok.text
            self.i += 1
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        if self.tok.kind == "op" and self.tok.text in ("-", "+"):
            op = self.tok.text
            self.i += 1
            arg = self.unary()
            return Neg(arg) if op == "-" else arg
        return self.power()

    def power(self):
        base = self.atom()
        if self.tok.kind == "op" and self.tok.text == "^":
            tok = self.tok
            self.i += 1
            exp_node = self.unary()
            value = _const_value(exp_node)
            if value is None or not float(value).is_integer():
                self.error("exponent must be a constant integer", tok)
            return Pow(base, int(value))
        return base

    def atom(self):
        tok = self.tok
        if tok.kind == "num":
            self.i += 1
            return Num(float(tok.text))
        if tok.kind == "name":
            self.i += 1
            name = tok.text
            if name in FUNCTIONS:
                if self.tok.text != "(":
                    self.error(f"function {name!r} needs an argument list")
                self.i += 1
                arg = self.expr()
                if self.tok.text == ",":
                    self.error(f"function {name!r} takes exactly one argument")
                self.expect(")")
                return Call(name, arg)
            if self.tok.text == "(":
                self.error(f"unknown function {name!r}", tok)
            if name in self.params:
                return Num(float(self.params[name]))
            m = re.fullmatch(r"x([1-9]\d*)", name)
            if m and (self.n is None or int(m.group(1)) <= self.n):
                return Var(int(m.group(1)) - 1)
            self.error(f"unknown identifier {name!r}", tok)
        if tok.text == "(":
            self.i += 1
            node = self.expr()
            self.expect(")")
            return node
        found = "end of input" if tok.kind == "end" else repr(tok.text)
        self.error(f"unexpected {found}")


def _const_value(node):
    """Fold a variable-free exponent expression, or return None."""
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Neg):
        v = _const_value(node.arg)
        return None if v is None else -v
    if isinstance(node, Pow):
        v = _const_value(node.base)
        return None if v is None else v ** node.exponent
    if isinstance(node, BinOp):
        a, b = _const_value(node.left), _const_value(node.right)
        if a is None or b is None:
            return None
        if node.op == "/" and b == 0:
            return None
        return {"+": a + b, "-": a - b, "*": a * b, "/": a / b if b else None}[node.op]
    return None


def _max_var(node) -> int:
    if isinstance(node, Var):
        return node.index + 1
    if isinstance(node, Num):
        return 0
    if isinstance(node, (Neg, Call)):
        return _max_var(node.arg)
    if isinstance(node, Pow):
        return _max_var(node.base)
    return max(_max_var(node.left), _max_var(node.right))


# code generation ---------------------------------------------------------

def _fmt_num(v: float) -> str:
    s = repr(float(v))
    return f"({s})" if s.startswith("-") else s


def _to_python(node) -> str:
    if isinstance(node, Num):
        return _fmt_num(node.value)
    if isinstance(node, Var):
        return f"x[{node.index}]"
    if isinstance(node, Neg):
        return f"(-{_to_python(node.arg)})"
    if isinstance(node, BinOp):
        return f"({_to_python(node.left)} {node.op} {_to_python(node.right)})"
    if isinstance(node, Pow):
        return f"_pow({_to_python(node.base)}, {node.exponent})"
    return f"_{node.func}({_to_python(node.arg)})"


def to_source(node) -> str:
    """Fully parenthesized source text that reparses to the same evaluation."""
    if isinstance(node, Num):
        return _fmt_num(node.value)
    if isinstance(node, Var):
        return f"x{node.index + 1}"
    if isinstance(node, Neg):
        return f"(-{to_source(node.arg)})"
    if isinstance(node, BinOp):
        return f"({to_source(node.left)} {node.op} {to_source(node.right)})"
    if isinstance(node, Pow):
        e = node.exponent
        return f"({to_source(node.base)}^{e if e >= 0 else f'({e})'})"
    return f"{node.func}({to_source(node.arg)})"


def _pow(a, e):
    try:
        return a ** e
    except OverflowError:
        return math.copysign(math.inf, a) if e % 2 else math.inf


def _unary(name, real_fn, complex_fn, np_fn):
    def f(a):
        if isinstance(a, Jet):
            return getattr(a, name)()
        if isinstance(a, np.ndarray):
            with np.errstate(all="ignore"):
                return np_fn(a)
        if isinstance(a, complex):
            return complex_fn(a)
        try:
            return real_fn(a)
        except OverflowError:
            return math.inf
    f.__name__ = "_" + name
    return f


_NAMESPACE = {
    "_pow": _pow,
    "_sin": _unary("sin", math.sin, cmath.sin, np.sin),
    "_cos": _unary("cos", math.cos, cmath.cos, np.cos),
    "_exp": _unary("exp", math.exp, cmath.exp, np.exp),
    "_log": _unary("log", math.log, cmath.log, np.log),
    "_sqrt": _unary("sqrt", math.sqrt, cmath.sqrt, np.sqrt),
    "_tanh": _unary("tanh", math.tanh, cmath.tanh, np.tanh),
}


def _compile(exprs) -> list:
    lines = []
    for i, e in enumerate(exprs):
        lines.append(f"def _c{i}(x):\n    return {_to_python(e)}\n")
    lines.append(f"_all = ({', '.join(f'_c{i}' for i in range(len(exprs)))},)\n")
    ns = dict(_NAMESPACE)
    exec(compile("".join(lines), "<field>", "exec"), ns)
    return list(ns["_all"])


class FieldProgram:
    """Parsed and compiled vector field (or map) in ``n`` variables.

    Instances are immutable after construction and safe to share between
    threads.
    """

    def __init__(self, exprs: Sequence, n: int, params: Mapping[str, float] | None = None,
                 source: str | None = None):
        self.exprs = tuple(exprs)
        self.n = n
        self.params = dict(params or {})
        self.source = source
        self._funcs = _compile(self.exprs)

    def __repr__(self) -> str:
        return f"FieldProgram(n={self.n}, {self.pretty()!r})"

    def __reduce__(self):
        return (FieldProgram, (self.exprs, self.n, self.params, self.source))

    @property
    def components(self) -> int:
        return len(self.exprs)

    def pretty(self) -> str:
        return "[" + ", ".join(to_source(e) for e in self.exprs) + "]"

    def evaluate(self, x) -> list:
        """Evaluate every component on a sequence of scalars, arrays or jets."""
        out = []
        for i, fn in enumerate(self._funcs):
            try:
                out.append(fn(x))
            except (ZeroDivisionError, ValueError, JetDomainError) as exc:
                raise FieldDomainError(i, exc) from None
        return out

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x)
        if x.shape[:1] != (self.n,):
            raise ValueError(f"expected {self.n} coordinates, got shape {x.shape}")
        if x.ndim == 1:
            vals = self.evaluate(x.tolist())
            dt = complex if any(isinstance(v, complex) for v in vals) else float
            return np.array(vals, dtype=dt)
        vals = self.evaluate(list(x))
        return np.array([np.broadcast_to(v, x.shape[1:]) for v in vals])

    def jet(self, x0, k: int) -> MapJet:
        return field_jet(self, x0, k)


def parse_field(source: str, n: int | None = None,
                params: Mapping[str, float] | None = None) -> FieldProgram:
    """Parse ``[e1, e2, ...]`` into a :class:`FieldProgram`.

    Parameters
    ----------
    source : field text
    n : number of state variables; inferred from the component count when
        omitted.  Must equal the number of components.
    params : named constants substituted by value.
    """
    parser = _Parser(source, n, params or {})
    exprs = parser.field()
    if n is None:
        n = len(exprs)
        used = max(_max_var(e) for e in exprs)
        if used > n:
            raise FieldSyntaxError(f"variable x{used} exceeds dimension {n}", 1, 1)
    if len(exprs) != n:
        raise FieldSyntaxError(f"expected {n} components, found {len(exprs)}", 1, 1)
    return FieldProgram(exprs, n, params, source)


def parse_map(source: str, n: int, params: Mapping[str, float] | None = None) -> FieldProgram:
    """Parse ``[e1, ..., em]`` in ``n`` variables with any number of components.

    Used for closed-form approximants ``R^n -> R^m``.
    """
    exprs = _Parser(source, n, params or {}).field()
    used = max(_max_var(e) for e in exprs)
    if used > n:
        raise FieldSyntaxError(f"variable x{used} exceeds dimension {n}", 1, 1)
    return FieldProgram(exprs, n, params, source)


def eval_field(prog: FieldProgram, x) -> np.ndarray:
    return prog(x)


def eval_jets(prog: FieldProgram, jets: Sequence[Jet]) -> MapJet:
    """Evaluate the program in jet arithmetic; constant components are promoted."""
    n, k = jets[0].n, jets[0].k
    vals = prog.evaluate(list(jets))
    return MapJet([v if isinstance(v, Jet) else Jet.constant(v, n, k) for v in vals])


def field_jet(prog: FieldProgram, x0, k: int) -> MapJet:
    """Order-``k`` Taylor expansion of every component about ``x0``."""
    x0 = np.asarray(x0)
    if x0.shape != (prog.n,):
        raise ValueError(f"expected base point of length {prog.n}")
    return eval_jets(prog, MapJet.identity(x0, k))
