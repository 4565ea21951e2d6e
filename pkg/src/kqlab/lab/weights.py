"""A small expression language for radial test weights.

Grammar::

    expr   := term (('+' | '-') term)*
    term   := factor (('*' | '/') factor)*
    factor := '-' factor | number | 's' | func '(' args ')' | '(' expr ')'
    func   := log | exp | min | max | tanh | sech | fs | lse
    lse    := slope ':' intercept (',' slope ':' intercept)* ';' tau

``fs(a)`` is ``a * log(1 + e^s)`` and ``lse(a1:b1, ...; tau)`` is
``tau * log sum exp((a_i s + b_i) / tau)``.
"""

from __future__ import annotations

import math
import re
from importlib import resources
from dataclasses import dataclass
from typing import Union

import numpy as np

from ..radial import Grid, GridFunction, make_grid_function

__all__ = [
    "WeightSyntaxError",
    "SlopeInferenceError",
    "Num",
    "Var",
    "Neg",
    "BinOp",
    "Call",
    "Fs",
    "Lse",
    "WeightExpr",
    "parse_weight",
    "pretty",
    "evaluate",
    "derivative",
    "simplify",
    "depends_on_s",
    "asymptotic_slopes",
    "to_grid_function",
    "shipped_corpus",
]


class WeightSyntaxError(ValueError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class SlopeInferenceError(ValueError):
    """The expression is not asymptotically affine in ``s``."""


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    pass


@dataclass(frozen=True)
class Neg:
    arg: "WeightExpr"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "WeightExpr"
    right: "WeightExpr"


@dataclass(frozen=True)
class Call:
    name: str  # log, exp, tanh, sech, min, max
    args: tuple["WeightExpr", ...]


@dataclass(frozen=True)
class Fs:
    scale: "WeightExpr"


@dataclass(frozen=True)
class Lse:
    terms: tuple[tuple[float, float], ...]
    tau: float


WeightExpr = Union[Num, Var, Neg, BinOp, Call, Fs, Lse]

_ARITY = {"log": (1, 1), "exp": (1, 1), "tanh": (1, 1), "sech": (1, 1),
          "min": (2, None), "max": (2, None), "fs": (1, 1)}
FUNCTIONS = frozenset(_ARITY) | {"lse"}

# ---------------------------------------------------------------------------
# lexer
# ---------------------------------------------------------------------------

_TOKEN = re.compile(
    r"(?P<ws>[ \t\r\n]+)"
    r"|(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<sym>[-+*/(),:;])"
)


@dataclass(frozen=True)
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list[_Tok]:
    toks: list[_Tok] = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise WeightSyntaxError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        chunk = m.group()
        if kind == "ws":
            for i, ch in enumerate(chunk):
                if ch == "\n":
                    line += 1
                    line_start = pos + i + 1
        else:
            toks.append(_Tok(kind, chunk, line, pos - line_start + 1))
        pos = m.end()
    toks.append(_Tok("eof", "", line, pos - line_start + 1))
    return toks


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.i = 0

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def fail(self, message: str, tok: _Tok | None = None):
        t = self.tok if tok is None else tok
        raise WeightSyntaxError(message, t.line, t.col)

    def take(self, text: str) -> _Tok:
        t = self.tok
        if t.text != text or t.kind not in ("sym",):
            found = "end of input" if t.kind == "eof" else repr(t.text)
            self.fail(f"expected {text!r}, found {found}")
        self.i += 1
        return t

    def parse(self) -> WeightExpr:
        e = self.expr()
        if self.tok.kind != "eof":
            self.fail(f"unexpected {self.tok.text!r}")
        return e

    def expr(self) -> WeightExpr:
        node = self.term()
        while self.tok.kind == "sym" and self.tok.text in "+-":
            op = self.tok.text
            self.i += 1
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> WeightExpr:
        node = self.factor()
        while self.tok.kind == "sym" and self.tok.text in "*/":
            op = self.tok.text
            self.i += 1
            node = BinOp(op, node, self.factor())
        return node

    def factor(self) -> WeightExpr:
        t = self.tok
        if t.kind == "sym" and t.text == "-":
            self.i += 1
            return Neg(self.factor())
        if t.kind == "num":
            self.i += 1
            return Num(float(t.text))
        if t.kind == "sym" and t.text == "(":
            self.i += 1
            e = self.expr()
            self.take(")")
            return e
        if t.kind == "name":
            if t.text == "s":
                self.i += 1
                return Var()
            if t.text not in FUNCTIONS:
                self.fail(f"unknown identifier {t.text!r}")
            self.i += 1
            self.take("(")
            if t.text == "lse":
                node = self.lse_args(t)
            else:
                args = [self.expr()]
                while self.tok.kind == "sym" and self.tok.text == ",":
                    self.i += 1
                    args.append(self.expr())
                lo, hi = _ARITY[t.text]
                if len(args) < lo or (hi is not None and len(args) > hi):
                    want = str(lo) if lo == hi else f"at least {lo}"
                    self.fail(f"{t.text} expects {want} argument(s), got {len(args)}", t)
                node = Fs(args[0]) if t.text == "fs" else Call(t.text, tuple(args))
                if isinstance(node, Fs) and depends_on_s(node.scale):
                    self.fail("fs scale must not depend on s", t)
            self.take(")")
            return node
        found = "end of input" if t.kind == "eof" else repr(t.text)
        self.fail(f"unexpected {found}")

    def signed(self) -> float:
        sign = 1.0
        while self.tok.kind == "sym" and self.tok.text in "+-":
            if self.tok.text == "-":
                sign = -sign
            self.i += 1
        if self.tok.kind != "num":
            self.fail("expected a number")
        v = float(self.tok.text)
        self.i += 1
        return sign * v

    def lse_args(self, head: _Tok) -> Lse:
        terms = []
        while True:
            a = self.signed()
            self.take(":")
            b = self.signed()
            terms.append((a, b))
            if self.tok.kind == "sym" and self.tok.text == ",":
                self.i += 1
                continue
            break
        self.take(";")
        tau_tok = self.tok
        tau = self.signed()
        if not tau > 0:
            self.fail("lse temperature must be positive", tau_tok)
        return Lse(tuple(terms), tau)


def parse_weight(text: str) -> WeightExpr:
    if not text or not text.strip():
        raise WeightSyntaxError("empty expression", 1, 1)
    return _Parser(text).parse()


# ---------------------------------------------------------------------------
# printing
# ---------------------------------------------------------------------------

def _num(v: float) -> str:
    r = repr(float(v))
    return r[:-2] if r.endswith(".0") else r


def _prec(e: WeightExpr) -> int:
    if isinstance(e, BinOp):
        return 1 if e.op in "+-" else 2
    if isinstance(e, Neg):
        return 3
    return 4


def pretty(e: WeightExpr) -> str:
    """Canonical text for an expression; reparses to the same tree."""
    if isinstance(e, Num):
        if e.value < 0 or math.copysign(1.0, e.value) < 0:
            return f"({_num(e.value)})"
        return _num(e.value)
    if isinstance(e, Var):
        return "s"
    if isinstance(e, Neg):
        inner = pretty(e.arg)
        return "-" + (f"({inner})" if _prec(e.arg) < 3 else inner)
    if isinstance(e, BinOp):
        p = _prec(e)
        left = pretty(e.left)
        if _prec(e.left) < p:
            left = f"({left})"
        right = pretty(e.right)
        if _prec(e.right) <= p:
            right = f"({right})"
        return f"{left} {e.op} {right}"
    if isinstance(e, Call):
        return f"{e.name}({', '.join(pretty(a) for a in e.args)})"
    if isinstance(e, Fs):
        return f"fs({pretty(e.scale)})"
    if isinstance(e, Lse):
        body = ", ".join(f"{_num(a)}:{_num(b)}" for a, b in e.terms)
        return f"lse({body}; {_num(e.tau)})"
    raise TypeError(f"not an expression: {e!r}")


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def _sech(x):
    ax = np.abs(x)
    return 2.0 * np.exp(-ax) / (1.0 + np.exp(-2.0 * ax))


def _lse(terms, tau, s):
    rows = np.stack([(a * s + b) / tau for a, b in terms])
    top = rows.max(axis=0)
    return tau * (top + np.log(np.exp(rows - top).sum(axis=0)))


def evaluate(e: WeightExpr, s) -> np.ndarray:
    s = np.asarray(s, dtype=np.float64)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        return _eval(e, s)


def _eval(e: WeightExpr, s: np.ndarray) -> np.ndarray:
    if isinstance(e, Num):
        return np.full_like(s, e.value)
    if isinstance(e, Var):
        return s.copy()
    if isinstance(e, Neg):
        return -_eval(e.arg, s)
    if isinstance(e, BinOp):
        a, b = _eval(e.left, s), _eval(e.right, s)
        return {"+": np.add, "-": np.subtract, "*": np.multiply, "/": np.divide}[e.op](a, b)
    if isinstance(e, Call):
        args = [_eval(a, s) for a in e.args]
        if e.name == "min":
            return np.minimum.reduce(args)
        if e.name == "max":
            return np.maximum.reduce(args)
        x = args[0]
        return {"log": np.log, "exp": np.exp, "tanh": np.tanh, "sech": _sech}[e.name](x)
    if isinstance(e, Fs):
        return _eval(e.scale, s) * np.logaddexp(0.0, s)
    if isinstance(e, Lse):
        return _lse(e.terms, e.tau, s)
    raise TypeError(f"not an expression: {e!r}")


def depends_on_s(e: WeightExpr) -> bool:
    if isinstance(e, Num):
        return False
    if isinstance(e, (Var, Fs, Lse)):
        return True
    if isinstance(e, Neg):
        return depends_on_s(e.arg)
    if isinstance(e, BinOp):
        return depends_on_s(e.left) or depends_on_s(e.right)
    return any(depends_on_s(a) for a in e.args)


def _const(e: WeightExpr) -> float:
    return float(evaluate(e, np.zeros(1))[0])


# ---------------------------------------------------------------------------
# symbolic derivative
# ---------------------------------------------------------------------------

def _logistic_expr() -> WeightExpr:
    # d/ds log(1+e^s) = 1 / (1 + exp(-s))
    return BinOp("/", Num(1.0), BinOp("+", Num(1.0), Call("exp", (Neg(Var()),))))


def _lit(v: float) -> WeightExpr:
    return Num(v) if v >= 0 else Neg(Num(-v))


def _softmax_weights(terms, tau) -> WeightExpr:
    """``sum_i a_i exp((a_i s + b_i - lse) / tau)``, the derivative of ``lse``."""
    lse = Lse(tuple(terms), tau)
    total = None
    for a, b in terms:
        arg = BinOp("/", BinOp("-", BinOp("+", BinOp("*", _lit(a), Var()), _lit(b)), lse), Num(tau))
        piece = BinOp("*", _lit(a), Call("exp", (arg,)))
        total = piece if total is None else BinOp("+", total, piece)
    return total


def derivative(e: WeightExpr) -> WeightExpr:
    """``d/ds`` of an expression, as an expression (unsimplified)."""
    if isinstance(e, Num):
        return Num(0.0)
    if isinstance(e, Var):
        return Num(1.0)
    if isinstance(e, Neg):
        return Neg(derivative(e.arg))
    if isinstance(e, BinOp):
        da, db = derivative(e.left), derivative(e.right)
        if e.op in "+-":
            return BinOp(e.op, da, db)
        if e.op == "*":
            return BinOp("+", BinOp("*", da, e.right), BinOp("*", e.left, db))
        # quotient rule
        return BinOp("/", BinOp("-", BinOp("*", da, e.right), BinOp("*", e.left, db)),
                      BinOp("*", e.right, e.right))
    if isinstance(e, Fs):
        return BinOp("*", e.scale, _logistic_expr())
    if isinstance(e, Lse):
        return _softmax_weights(e.terms, e.tau)
    if isinstance(e, Call):
        if e.name in ("min", "max"):
            raise SlopeInferenceError(f"{e.name} is not differentiable")
        x = e.args[0]
        dx = derivative(x)
        if e.name == "log":
            outer = BinOp("/", Num(1.0), x)
        elif e.name == "exp":
            outer = e
        elif e.name == "tanh":
            outer = BinOp("-", Num(1.0), BinOp("*", e, e))
        else:  # sech' = -sech * tanh
            outer = Neg(BinOp("*", e, Call("tanh", (x,))))
        return BinOp("*", outer, dx)
    raise TypeError(f"not an expression: {e!r}")


def simplify(e: WeightExpr) -> WeightExpr:
    """Fold constants and drop multiplications by 0 or 1."""
    if isinstance(e, Neg):
        a = simplify(e.arg)
        if isinstance(a, Num):
            return Num(-a.value) if a.value != 0 else Num(0.0)
        return Neg(a)
    if isinstance(e, BinOp):
        a, b = simplify(e.left), simplify(e.right)
        if isinstance(a, Num) and isinstance(b, Num):
            return Num(float(_eval(BinOp(e.op, a, b), np.zeros(1))[0]))
        if e.op == "+":
            if a == Num(0.0):
                return b
            if b == Num(0.0):
                return a
        if e.op == "-" and b == Num(0.0):
            return a
        if e.op == "-" and a == Num(0.0):
            return Neg(b)
        if e.op == "*":
            if Num(0.0) in (a, b):
                return Num(0.0)
            if a == Num(1.0):
                return b
            if b == Num(1.0):
                return a
        if e.op == "/" and b == Num(1.0):
            return a
        return BinOp(e.op, a, b)
    if isinstance(e, Call):
        return Call(e.name, tuple(simplify(a) for a in e.args))
    if isinstance(e, Fs):
        return Fs(simplify(e.scale))
    return e


# ---------------------------------------------------------------------------
# asymptotic slopes
# ---------------------------------------------------------------------------

# A tail is ("aff", slope) for asymptotically affine behaviour, or ("neg", None)
# / ("pos", None) when the expression runs off to -inf / +inf faster than linearly.
_Tail = tuple[str, Union[float, None]]
_AFF0: _Tail = ("aff", 0.0)


def _sign_at(tail: _Tail, side: int) -> int:
    """Sign of the limit on ``side`` (-1 for s -> -inf, +1 for s -> +inf); 0 if bounded."""
    kind, slope = tail
    if kind == "neg":
        return -1
    if kind == "pos":
        return 1
    return int(np.sign(side * slope))


def _super(sign: int) -> _Tail:
    return ("pos", None) if sign > 0 else ("neg", None)


def _tail(e: WeightExpr, side: int) -> _Tail:
    if isinstance(e, Num):
        return _AFF0
    if isinstance(e, Var):
        return ("aff", 1.0)
    if isinstance(e, Neg):
        kind, slope = _tail(e.arg, side)
        if kind == "aff":
            return ("aff", -slope)
        return ("neg", None) if kind == "pos" else ("pos", None)
    if isinstance(e, Fs):
        return ("aff", _const(e.scale) if side > 0 else 0.0)
    if isinstance(e, Lse):
        slopes = [a for a, _ in e.terms]
        return ("aff", max(slopes) if side > 0 else min(slopes))
    if isinstance(e, BinOp):
        return _binop_tail(e, side)
    if isinstance(e, Call):
        return _call_tail(e, side)
    raise TypeError(f"not an expression: {e!r}")


def _binop_tail(e: BinOp, side: int) -> _Tail:
    if e.op in "*/" and not depends_on_s(e.right):
        c = _const(e.right)
        return _scale(_tail(e.left, side), c if e.op == "*" else 1.0 / c)
    if e.op == "*" and not depends_on_s(e.left):
        return _scale(_tail(e.right, side), _const(e.left))
    a, b = _tail(e.left, side), _tail(e.right, side)
    if e.op in "+-":
        if e.op == "-":
            b = _scale(b, -1.0)
        if a[0] == "aff" and b[0] == "aff":
            return ("aff", a[1] + b[1])
        kinds = {a[0], b[0]} - {"aff"}
        if len(kinds) == 2:
            raise SlopeInferenceError(f"{pretty(e)} subtracts two divergent terms")
        return (kinds.pop(), None)
    if e.op == "*":
        if a == _AFF0 and b == _AFF0:
            return _AFF0
        sa, sb = _sign_at(a, side), _sign_at(b, side)
        if sa == 0 or sb == 0:
            raise SlopeInferenceError(f"product {pretty(e)} is not asymptotically affine")
        return _super(sa * sb)
    if a == _AFF0 and b == _AFF0:
        return _AFF0
    if a == _AFF0 and b[0] != "aff":
        return _AFF0  # bounded over divergent
    raise SlopeInferenceError(f"quotient {pretty(e)} is not asymptotically affine")


def _scale(tail: _Tail, c: float) -> _Tail:
    kind, slope = tail
    if kind == "aff":
        return ("aff", c * slope)
    if c == 0.0:
        return _AFF0
    return tail if c > 0 else _super(-_sign_at(tail, 1))


def _call_tail(e: Call, side: int) -> _Tail:
    tails = [_tail(a, side) for a in e.args]
    if e.name in ("min", "max"):
        pick_low = e.name == "min"
        best = tails[0]
        for t in tails[1:]:
            best = _extreme(best, t, side, pick_low)
        return best
    if e.name in ("tanh", "sech"):
        return _AFF0
    (kind, slope), = tails
    if e.name == "exp":
        if _sign_at((kind, slope), side) <= 0:
            return _AFF0
        raise SlopeInferenceError(f"{pretty(e)} grows exponentially")
    # log
    x = e.args[0]
    if isinstance(x, Call) and x.name == "exp":
        return _tail(x.args[0], side)
    if (kind, slope) == _AFF0:
        return _AFF0
    raise SlopeInferenceError(f"cannot infer slopes of {pretty(e)}")


def _extreme(a: _Tail, b: _Tail, side: int, pick_low: bool) -> _Tail:
    """Tail of ``min(a, b)`` (``pick_low``) or ``max(a, b)``."""
    if a[0] == "aff" and b[0] == "aff":
        # at s -> -inf the larger slope gives the smaller value
        low = max(a[1], b[1]) if side < 0 else min(a[1], b[1])
        high = min(a[1], b[1]) if side < 0 else max(a[1], b[1])
        return ("aff", low if pick_low else high)
    order = {"neg": 0, "aff": 1, "pos": 2}
    lo, hi = (a, b) if order[a[0]] <= order[b[0]] else (b, a)
    return lo if pick_low else hi


def asymptotic_slopes(e: WeightExpr) -> tuple[float, float]:
    """Slopes of the expression as ``s -> -inf`` and ``s -> +inf``.

    Sub-expressions may diverge faster than linearly (``-s*s`` inside
    ``exp``) as long as the whole expression ends up asymptotically affine;
    otherwise :class:`SlopeInferenceError` is raised.
    """
    out = []
    for side in (-1, 1):
        kind, slope = _tail(e, side)
        if kind != "aff":
            where = "-inf" if side < 0 else "+inf"
            raise SlopeInferenceError(f"{pretty(e)} is not asymptotically affine at s -> {where}")
        out.append(float(slope) + 0.0)
    return out[0], out[1]


def to_grid_function(e: WeightExpr, grid: Grid, slope_tol: float | None = None) -> GridFunction:
    """Sample on the grid with slopes from :func:`asymptotic_slopes`."""
    lo, hi = asymptotic_slopes(e)
    kwargs = {} if slope_tol is None else {"slope_tol": slope_tol}
    return make_grid_function(lambda s: evaluate(e, s), grid, lo, hi, **kwargs)


def shipped_corpus() -> list[str]:
    """The example weight expressions bundled with the package."""
    text = resources.files("kqlab.lab").joinpath("examples", "weights_corpus.txt").read_text("utf-8")
    return [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
