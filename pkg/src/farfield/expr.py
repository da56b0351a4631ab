"""Closed-form expression trees: text parser, evaluation, forward-mode derivatives.

Grammar (left-associative + and *, right-associative ^, ^ binds tighter
than unary minus):

    expr   := term (("+" | "-") term)*
    term   := factor (("*" | "/") factor)*
    factor := ("-")? power
    power  := atom ("^" factor)?
    atom   := number | ident | ident "(" expr ("," expr)* ")" | "(" expr ")"

Identifiers are either the constants pi and e, known function names, or free
variables.  Integer exponents are detected syntactically (a literal, possibly
negated), which makes x^2 legal for negative x while x^0.5 demands x > 0.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Expr", "Const", "Var", "Unary", "Binary", "Call",
    "ExprError", "ExprSyntaxError", "UnknownIdentifierError", "DomainError",
    "parse_expr", "to_text", "free_vars", "evaluate", "evaluate_many",
    "jacobian", "jacobian_many",
]

UNARY_FUNCS = ("sqrt", "exp", "log", "sin", "cos", "sinh", "cosh", "atan", "abs")
BINARY_OPS = ("add", "sub", "mul", "div", "pow")
CONSTANTS = {"pi": math.pi, "e": math.e}


class ExprError(ValueError):
    """Base class for expression failures."""


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, offset: int, expected: frozenset[str] = frozenset()):
        self.offset = offset
        self.expected = expected
        hint = f" (expected one of: {', '.join(sorted(expected))})" if expected else ""
        super().__init__(f"{message} at byte {offset}{hint}")


class UnknownIdentifierError(ExprError):
    def __init__(self, name: str, offset: int | None = None):
        self.name = name
        self.offset = offset
        where = f" at byte {offset}" if offset is not None else ""
        super().__init__(f"unknown identifier {name!r}{where}")


class DomainError(ExprError):
    def __init__(self, node: "Expr", message: str):
        self.node = node
        super().__init__(f"{message} in {to_text(node)!r}")


@dataclass(frozen=True)
class Expr:
    pass


@dataclass(frozen=True)
class Const(Expr):
    value: float


@dataclass(frozen=True)
class Var(Expr):
    name: str


@dataclass(frozen=True)
class Unary(Expr):
    op: str  # "neg" or a name from UNARY_FUNCS
    arg: Expr


@dataclass(frozen=True)
class Binary(Expr):
    op: str  # one of BINARY_OPS
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Call(Expr):
    name: str  # only "atan2"
    args: tuple[Expr, ...]


# ---------------------------------------------------------------------------
# tokenizer / parser

_PUNCT = ("+", "-", "*", "/", "^", "(", ")", ",")


def _byte_offset(text: str, pos: int) -> int:
    return len(text[:pos].encode("utf-8"))


class _Lexer:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def _skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def peek(self) -> tuple[str, str, int]:
        """(kind, value, char_pos); kind in {number, ident, punct, end}."""
        self._skip_ws()
        t, i = self.text, self.pos
        if i >= len(t):
            return ("end", "", i)
        c = t[i]
        if c.isdigit() or (c == "." and i + 1 < len(t) and t[i + 1].isdigit()):
            j = i
            while j < len(t) and (t[j].isdigit() or t[j] == "."):
                j += 1
            if j < len(t) and t[j] in "eE":
                k = j + 1
                if k < len(t) and t[k] in "+-":
                    k += 1
                if k < len(t) and t[k].isdigit():
                    j = k
                    while j < len(t) and t[j].isdigit():
                        j += 1
            return ("number", t[i:j], i)
        if c.isalpha() or c == "_":
            j = i
            while j < len(t) and (t[j].isalnum() or t[j] == "_"):
                j += 1
            return ("ident", t[i:j], i)
        if c in _PUNCT:
            return ("punct", c, i)
        raise ExprSyntaxError(f"unexpected character {c!r}", _byte_offset(t, i))

    def take(self) -> tuple[str, str, int]:
        tok = self.peek()
        self.pos = tok[2] + len(tok[1])
        return tok

    def expect(self, value: str):
        kind, got, pos = self.take()
        if got != value:
            raise ExprSyntaxError(
                f"unexpected token {got or 'end of input'!r}",
                _byte_offset(self.text, pos), frozenset({value}))


def parse_expr(text: str, params: tuple[str, ...] | None = None) -> Expr:
    """Parse text into an Expr.

    When params is given, free variables outside params raise
    UnknownIdentifierError.  Trailing input is an error.
    """
    lx = _Lexer(text)
    node = _parse_sum(lx)
    kind, val, pos = lx.peek()
    if kind != "end":
        raise ExprSyntaxError(f"trailing input {val!r}", _byte_offset(text, pos),
                              frozenset({"end of input"}))
    if params is not None:
        bad = free_vars(node) - set(params)
        if bad:
            raise UnknownIdentifierError(sorted(bad)[0])
    return node


def _parse_sum(lx: _Lexer) -> Expr:
    node = _parse_term(lx)
    while True:
        kind, val, _ = lx.peek()
        if kind == "punct" and val in "+-":
            lx.take()
            rhs = _parse_term(lx)
            node = Binary("add" if val == "+" else "sub", node, rhs)
        else:
            return node


def _parse_term(lx: _Lexer) -> Expr:
    node = _parse_factor(lx)
    while True:
        kind, val, _ = lx.peek()
        if kind == "punct" and val in "*/":
            lx.take()
            rhs = _parse_factor(lx)
            node = Binary("mul" if val == "*" else "div", node, rhs)
        else:
            return node


def _parse_factor(lx: _Lexer) -> Expr:
    kind, val, _ = lx.peek()
    if kind == "punct" and val == "-":
        lx.take()
        return Unary("neg", _parse_power(lx))
    return _parse_power(lx)


def _parse_power(lx: _Lexer) -> Expr:
    node = _parse_atom(lx)
    kind, val, _ = lx.peek()
    if kind == "punct" and val == "^":
        lx.take()
        return Binary("pow", node, _parse_factor(lx))
    return node


def _parse_atom(lx: _Lexer) -> Expr:
    kind, val, pos = lx.take()
    if kind == "number":
        try:
            return Const(float(val))
        except ValueError:
            raise ExprSyntaxError(f"bad number literal {val!r}",
                                  _byte_offset(lx.text, pos)) from None
    if kind == "ident":
        nxt_kind, nxt_val, _ = lx.peek()
        if nxt_kind == "punct" and nxt_val == "(":
            lx.take()
            args = [_parse_sum(lx)]
            while True:
                k2, v2, p2 = lx.take()
                if v2 == ")":
                    break
                if v2 != ",":
                    raise ExprSyntaxError(f"unexpected token {v2!r}",
                                          _byte_offset(lx.text, p2), frozenset({",", ")"}))
                args.append(_parse_sum(lx))
            if val in UNARY_FUNCS:
                if len(args) != 1:
                    raise ExprSyntaxError(f"{val} takes one argument",
                                          _byte_offset(lx.text, pos))
                return Unary(val, args[0])
            if val == "atan2":
                if len(args) != 2:
                    raise ExprSyntaxError("atan2 takes two arguments",
                                          _byte_offset(lx.text, pos))
                return Call("atan2", tuple(args))
            raise UnknownIdentifierError(val, _byte_offset(lx.text, pos))
        if val in CONSTANTS:
            return Const(CONSTANTS[val])
        return Var(val)
    if kind == "punct" and val == "(":
        node = _parse_sum(lx)
        lx.expect(")")
        return node
    raise ExprSyntaxError(f"unexpected token {val or 'end of input'!r}",
                          _byte_offset(lx.text, pos),
                          frozenset({"number", "identifier", "("}))


# ---------------------------------------------------------------------------
# printing

# precedence levels used by the printer; a child below the required level
# gets parenthesized
_LEVEL_SUM, _LEVEL_TERM, _LEVEL_FACTOR, _LEVEL_POWER, _LEVEL_ATOM = 1, 2, 3, 4, 5


def _level(e: Expr) -> int:
    if isinstance(e, (Const, Var, Call)):
        return _LEVEL_ATOM
    if isinstance(e, Unary):
        return _LEVEL_ATOM if e.op != "neg" else _LEVEL_FACTOR
    if e.op in ("add", "sub"):
        return _LEVEL_SUM
    if e.op in ("mul", "div"):
        return _LEVEL_TERM
    return _LEVEL_POWER  # pow


def _fmt(e: Expr, min_level: int) -> str:
    s = _fmt_inner(e)
    return f"({s})" if _level(e) < min_level else s


def _fmt_inner(e: Expr) -> str:
    if isinstance(e, Const):
        return repr(float(e.value))
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Unary):
        if e.op == "neg":
            return "-" + _fmt(e.arg, _LEVEL_POWER)
        return f"{e.op}({_fmt_inner(e.arg)})"
    if isinstance(e, Call):
        return f"{e.name}({', '.join(_fmt_inner(a) for a in e.args)})"
    sym = {"add": "+", "sub": "-", "mul": "*", "div": "/", "pow": "^"}[e.op]
    if e.op in ("add", "sub"):
        return f"{_fmt(e.left, _LEVEL_SUM)} {sym} {_fmt(e.right, _LEVEL_TERM)}"
    if e.op in ("mul", "div"):
        return f"{_fmt(e.left, _LEVEL_TERM)}{sym}{_fmt(e.right, _LEVEL_FACTOR)}"
    # pow: left operand must be an atom, right is a factor
    return f"{_fmt(e.left, _LEVEL_ATOM)}^{_fmt(e.right, _LEVEL_FACTOR)}"


def to_text(e: Expr) -> str:
    """Render e so that parse_expr(to_text(e)) == e.

    Holds for every tree the parser itself can produce (in particular Const
    values are non-negative; negation is the explicit "neg" node).
    """
    return _fmt_inner(e)


def free_vars(e: Expr) -> set[str]:
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, Const):
        return set()
    if isinstance(e, Unary):
        return free_vars(e.arg)
    if isinstance(e, Binary):
        return free_vars(e.left) | free_vars(e.right)
    out: set[str] = set()
    for a in e.args:
        out |= free_vars(a)
    return out


# ---------------------------------------------------------------------------
# evaluation (scalars and arrays share one code path)


def _int_exponent(e: Expr) -> int | None:
    """Syntactic integer literal exponent, else None."""
    if isinstance(e, Const) and float(e.value).is_integer() and abs(e.value) <= 1e9:
        return int(e.value)
    if isinstance(e, Unary) and e.op == "neg":
        inner = _int_exponent(e.arg)
        return None if inner is None else -inner
    return None


_state = threading.local()


def _any(mask) -> bool:
    # under _unchecked() domain violations yield nan/inf instead of raising
    if getattr(_state, "unchecked", False):
        return False
    return bool(np.any(mask))


class _unchecked:
    def __enter__(self):
        self.prev = getattr(_state, "unchecked", False)
        _state.unchecked = True
        self.err = np.errstate(all="ignore")
        self.err.__enter__()
        return self

    def __exit__(self, *exc):
        _state.unchecked = self.prev
        return self.err.__exit__(*exc)


def _eval(e: Expr, env: dict):
    if isinstance(e, Const):
        return np.float64(e.value)
    if isinstance(e, Var):
        try:
            return env[e.name]
        except KeyError:
            raise UnknownIdentifierError(e.name) from None
    if isinstance(e, Unary):
        v = _eval(e.arg, env)
        op = e.op
        if op == "neg":
            return -v
        if op == "sqrt":
            if _any(v < 0):
                raise DomainError(e, "sqrt of negative value")
            return np.sqrt(v)
        if op == "log":
            if _any(v <= 0):
                raise DomainError(e, "log of non-positive value")
            return np.log(v)
        if op == "abs":
            return np.abs(v)
        return _NP_UNARY[op](v)
    if isinstance(e, Binary):
        a = _eval(e.left, env)
        op = e.op
        if op == "pow":
            k = _int_exponent(e.right)
            if k is not None:
                if k < 0 and _any(a == 0):
                    raise DomainError(e, "zero base with negative exponent")
                return np.power(a, np.float64(k))
            b = _eval(e.right, env)
            if _any(a <= 0):
                raise DomainError(e, "non-positive base with non-integer exponent")
            return np.power(a, b)
        b = _eval(e.right, env)
        if op == "add":
            return a + b
        if op == "sub":
            return a - b
        if op == "mul":
            return a * b
        if _any(b == 0):
            raise DomainError(e, "division by zero")
        return a / b
    # Call: atan2
    y = _eval(e.args[0], env)
    x = _eval(e.args[1], env)
    return np.arctan2(y, x)


_NP_UNARY = {"exp": np.exp, "sin": np.sin, "cos": np.cos,
             "sinh": np.sinh, "cosh": np.cosh, "atan": np.arctan}


def evaluate(e: Expr, env: dict[str, float]) -> float:
    """Evaluate at a single point; raises DomainError outside the domain."""
    return float(_eval(e, {k: np.float64(v) for k, v in env.items()}))


def evaluate_many(e: Expr, env: dict[str, np.ndarray], check: bool = True) -> np.ndarray:
    """Evaluate over aligned arrays of points.  Domain checks are collective:
    any offending element raises, so NaNs never propagate silently.  With
    check=False, violations produce nan/inf entries instead (for probing
    points that may fall outside a chart's domain)."""
    if check:
        out = _eval(e, env)
    else:
        with _unchecked():
            out = _eval(e, env)
    first = next(iter(env.values()))
    return np.broadcast_to(np.asarray(out, dtype=np.float64), np.shape(first)).copy() \
        if np.shape(out) != np.shape(first) else np.asarray(out, dtype=np.float64)


# ---------------------------------------------------------------------------
# forward-mode derivatives (dual numbers over floats or aligned arrays)


class _Dual:
    __slots__ = ("v", "d")

    def __init__(self, v, d):
        self.v = v
        self.d = d


def _eval_dual(e: Expr, env: dict) -> _Dual:
    if isinstance(e, Const):
        return _Dual(np.float64(e.value), np.float64(0.0))
    if isinstance(e, Var):
        try:
            return env[e.name]
        except KeyError:
            raise UnknownIdentifierError(e.name) from None
    if isinstance(e, Unary):
        u = _eval_dual(e.arg, env)
        op = e.op
        if op == "neg":
            return _Dual(-u.v, -u.d)
        if op == "sqrt":
            if _any(u.v <= 0):
                raise DomainError(e, "sqrt derivative needs positive argument")
            r = np.sqrt(u.v)
            return _Dual(r, u.d * 0.5 / r)
        if op == "exp":
            r = np.exp(u.v)
            return _Dual(r, u.d * r)
        if op == "log":
            if _any(u.v <= 0):
                raise DomainError(e, "log of non-positive value")
            return _Dual(np.log(u.v), u.d / u.v)
        if op == "sin":
            return _Dual(np.sin(u.v), u.d * np.cos(u.v))
        if op == "cos":
            return _Dual(np.cos(u.v), -u.d * np.sin(u.v))
        if op == "sinh":
            return _Dual(np.sinh(u.v), u.d * np.cosh(u.v))
        if op == "cosh":
            return _Dual(np.cosh(u.v), u.d * np.sinh(u.v))
        if op == "atan":
            return _Dual(np.arctan(u.v), u.d / (1.0 + u.v * u.v))
        # abs: derivative undefined at 0
        if _any(u.v == 0):
            raise DomainError(e, "abs derivative undefined at zero")
        return _Dual(np.abs(u.v), u.d * np.sign(u.v))
    if isinstance(e, Binary):
        a = _eval_dual(e.left, env)
        op = e.op
        if op == "pow":
            k = _int_exponent(e.right)
            if k is not None:
                if k < 0 and _any(a.v == 0):
                    raise DomainError(e, "zero base with negative exponent")
                if k == 0:
                    return _Dual(np.power(a.v, np.float64(0)), np.float64(0.0) * a.d)
                val = np.power(a.v, np.float64(k))
                return _Dual(val, np.float64(k) * np.power(a.v, np.float64(k - 1)) * a.d)
            b = _eval_dual(e.right, env)
            if _any(a.v <= 0):
                raise DomainError(e, "non-positive base with non-integer exponent")
            val = np.power(a.v, b.v)
            return _Dual(val, val * (b.d * np.log(a.v) + b.v * a.d / a.v))
        b = _eval_dual(e.right, env)
        if op == "add":
            return _Dual(a.v + b.v, a.d + b.d)
        if op == "sub":
            return _Dual(a.v - b.v, a.d - b.d)
        if op == "mul":
            return _Dual(a.v * b.v, a.d * b.v + a.v * b.d)
        if _any(b.v == 0):
            raise DomainError(e, "division by zero")
        return _Dual(a.v / b.v, (a.d * b.v - a.v * b.d) / (b.v * b.v))
    # atan2(y, x)
    y = _eval_dual(e.args[0], env)
    x = _eval_dual(e.args[1], env)
    den = x.v * x.v + y.v * y.v
    if _any(den == 0):
        raise DomainError(e, "atan2 derivative undefined at the origin")
    return _Dual(np.arctan2(y.v, x.v), (x.v * y.d - y.v * x.d) / den)


def jacobian(components: tuple[Expr, ...], params: tuple[str, ...],
             point) -> np.ndarray:
    """Jacobian matrix (len(components) x len(params)) at one point."""
    pts = np.asarray(point, dtype=np.float64).reshape(1, -1)
    return jacobian_many(components, params, pts)[0]


def jacobian_many(components: tuple[Expr, ...], params: tuple[str, ...],
                  pts: np.ndarray, check: bool = True) -> np.ndarray:
    """Stacked Jacobians for pts of shape (N, d): result (N, m, d)."""
    pts = np.asarray(pts, dtype=np.float64)
    n, d = pts.shape
    m = len(components)
    out = np.empty((n, m, d), dtype=np.float64)
    zeros = np.zeros(n)
    ones = np.ones(n)
    ctx = _unchecked() if not check else None
    if ctx is not None:
        ctx.__enter__()
    try:
        for j in range(d):
            env = {p: _Dual(pts[:, i].copy(), ones if i == j else zeros)
                   for i, p in enumerate(params)}
            for ci, comp in enumerate(components):
                r = _eval_dual(comp, env)
                out[:, ci, j] = r.d
    finally:
        if ctx is not None:
            ctx.__exit__(None, None, None)
    return out
