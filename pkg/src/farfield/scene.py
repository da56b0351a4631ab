"""Scene descriptions for unbounded sets: parameter charts over simple regions,
a small text format, a library of built-in scenes, and seeded sampling.

A scene is either a finite union of parameter charts (map: R^d -> R^m given by
closed-form expressions over a box-with-exclusions domain) or the staircase
set, a 1-d union of horizontal segments handled by exact formulas elsewhere.

Built-in charts with unbounded domains carry a truncation hint: a callable
R -> finite parameter box guaranteed to contain every parameter that maps
into the centered ball of radius R.  Text-format scenes must use finite
domains instead.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .expr import (Expr, parse_expr, to_text, free_vars, evaluate,
                   evaluate_many, jacobian_many, ExprError)

__all__ = [
    "SceneError", "SceneParseError", "DimensionMismatchError",
    "UnknownBuiltinError", "UnboundedDomainError", "EmptyIntersectionError",
    "Box", "Ball", "BallComplement", "Intersection",
    "region_contains", "region_classify_box", "region_box",
    "Chart", "SceneMeta", "StaircaseSet", "Scene",
    "parse_scene", "builtin_scene", "builtin_library", "load_scene",
    "SampleResult", "sample_points", "sample_near", "project_to_scene",
    "collision_rate",
]

IN, STRADDLE, OUT = 1, 0, -1


class SceneError(ValueError):
    pass


class SceneParseError(SceneError):
    def __init__(self, message: str, offset: int | None = None):
        self.offset = offset
        where = f" at byte {offset}" if offset is not None else ""
        super().__init__(f"{message}{where}")


class DimensionMismatchError(SceneError):
    pass


class UnknownBuiltinError(SceneError):
    pass


class UnboundedDomainError(SceneError):
    pass


class EmptyIntersectionError(SceneError):
    pass


# ---------------------------------------------------------------------------
# regions in parameter space


@dataclass(frozen=True)
class Box:
    lo: tuple[float, ...]
    hi: tuple[float, ...]


@dataclass(frozen=True)
class Ball:
    center: tuple[float, ...]
    radius: float


@dataclass(frozen=True)
class BallComplement:
    center: tuple[float, ...]
    radius: float


@dataclass(frozen=True)
class Intersection:
    parts: tuple


Region = object


def region_contains(region, pts: np.ndarray) -> np.ndarray:
    """Vectorized membership for pts of shape (N, d)."""
    if isinstance(region, Box):
        lo = np.asarray(region.lo)
        hi = np.asarray(region.hi)
        return np.all((pts >= lo) & (pts <= hi), axis=1)
    if isinstance(region, Ball):
        d2 = np.sum((pts - np.asarray(region.center)) ** 2, axis=1)
        return d2 <= region.radius ** 2
    if isinstance(region, BallComplement):
        d2 = np.sum((pts - np.asarray(region.center)) ** 2, axis=1)
        return d2 >= region.radius ** 2
    out = np.ones(len(pts), dtype=bool)
    for p in region.parts:
        out &= region_contains(p, pts)
    return out


def _box_ball_dists(lo, hi, center):
    """(min, max) distance from the box [lo, hi] to center."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    c = np.asarray(center, dtype=float)
    nearest = np.clip(c, lo, hi)
    dmin = float(np.linalg.norm(nearest - c))
    farthest = np.where(np.abs(lo - c) > np.abs(hi - c), lo, hi)
    dmax = float(np.linalg.norm(farthest - c))
    return dmin, dmax


def region_classify_box(region, lo, hi) -> int:
    """IN if the box lies inside the region, OUT if disjoint, else STRADDLE."""
    if isinstance(region, Box):
        rl = np.asarray(region.lo)
        rh = np.asarray(region.hi)
        lo = np.asarray(lo)
        hi = np.asarray(hi)
        if np.any(lo > rh) or np.any(hi < rl):
            return OUT
        if np.all(lo >= rl) and np.all(hi <= rh):
            return IN
        return STRADDLE
    if isinstance(region, Ball):
        dmin, dmax = _box_ball_dists(lo, hi, region.center)
        if dmax <= region.radius:
            return IN
        if dmin >= region.radius:
            return OUT
        return STRADDLE
    if isinstance(region, BallComplement):
        dmin, dmax = _box_ball_dists(lo, hi, region.center)
        if dmin >= region.radius:
            return IN
        if dmax <= region.radius:
            return OUT
        return STRADDLE
    state = IN
    for p in region.parts:
        c = region_classify_box(p, lo, hi)
        if c == OUT:
            return OUT
        if c == STRADDLE:
            state = STRADDLE
    return state


def region_classify_boxes(region, los: np.ndarray, his: np.ndarray) -> np.ndarray:
    """Vectorized region_classify_box for K boxes given as (K, d) arrays."""
    if isinstance(region, Box):
        rl = np.asarray(region.lo)
        rh = np.asarray(region.hi)
        out = np.any(los > rh, axis=1) | np.any(his < rl, axis=1)
        inner = np.all(los >= rl, axis=1) & np.all(his <= rh, axis=1)
        res = np.full(len(los), STRADDLE, dtype=np.int64)
        res[inner] = IN
        res[out] = OUT
        return res
    if isinstance(region, (Ball, BallComplement)):
        c = np.asarray(region.center, dtype=float)
        nearest = np.clip(c, los, his)
        dmin = np.linalg.norm(nearest - c, axis=1)
        farthest = np.where(np.abs(los - c) > np.abs(his - c), los, his)
        dmax = np.linalg.norm(farthest - c, axis=1)
        res = np.full(len(los), STRADDLE, dtype=np.int64)
        if isinstance(region, Ball):
            res[dmax <= region.radius] = IN
            res[dmin >= region.radius] = OUT
        else:
            res[dmin >= region.radius] = IN
            res[dmax <= region.radius] = OUT
        return res
    state = np.full(len(los), IN, dtype=np.int64)
    for p in region.parts:
        c = region_classify_boxes(p, los, his)
        state = np.where(c == OUT, OUT, np.where(
            (c == STRADDLE) & (state != OUT), STRADDLE, state))
    return state


def region_box(region) -> tuple[np.ndarray, np.ndarray]:
    """Bounding box (possibly infinite) of the region."""
    if isinstance(region, Box):
        return np.asarray(region.lo, float), np.asarray(region.hi, float)
    if isinstance(region, Ball):
        c = np.asarray(region.center, float)
        return c - region.radius, c + region.radius
    if isinstance(region, BallComplement):
        d = len(region.center)
        return np.full(d, -np.inf), np.full(d, np.inf)
    lo, hi = None, None
    for p in region.parts:
        plo, phi = region_box(p)
        lo = plo if lo is None else np.maximum(lo, plo)
        hi = phi if hi is None else np.minimum(hi, phi)
    return lo, hi


# ---------------------------------------------------------------------------
# charts and scenes


@dataclass(eq=False)
class Chart:
    params: tuple[str, ...]
    mapping: tuple[Expr, ...]
    domain: Region
    weight: float = 1.0
    label: str = ""
    # truncation hint for unbounded built-ins: R -> (lo, hi) or None (empty)
    param_box_fn: Callable | None = None

    def eval_points(self, pts: np.ndarray, check: bool = True) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
        env = {p: pts[:, i] for i, p in enumerate(self.params)}
        out = np.empty((len(pts), len(self.mapping)), dtype=np.float64)
        for ci, comp in enumerate(self.mapping):
            out[:, ci] = evaluate_many(comp, env, check=check)
        return out

    def jacobians(self, pts: np.ndarray, check: bool = True) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
        return jacobian_many(self.mapping, self.params, pts, check=check)

    def area_elements(self, pts: np.ndarray, check: bool = True) -> np.ndarray:
        jac = self.jacobians(pts, check=check)
        gram = np.einsum("nmi,nmj->nij", jac, jac)
        det = np.linalg.det(gram)
        with np.errstate(invalid="ignore"):
            return np.sqrt(np.maximum(det, 0.0))

    def box_for_radius(self, radius: float):
        """Finite parameter box covering map^{-1}(B_radius(0)), or None if
        provably empty.  Raises for unbounded domains without a hint."""
        lo, hi = region_box(self.domain)
        if self.param_box_fn is not None:
            hint = self.param_box_fn(radius)
            if hint is None:
                return None
            hlo, hhi = np.asarray(hint[0], float), np.asarray(hint[1], float)
            lo, hi = np.maximum(lo, hlo), np.minimum(hi, hhi)
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise UnboundedDomainError(
                f"chart {self.label or self.params} has an unbounded domain and "
                "no truncation hint; use finite bounds")
        if np.any(lo >= hi):
            return None
        return lo, hi


@dataclass(frozen=True)
class SceneMeta:
    definable: bool = True
    minimal: bool = False  # complete minimal: monotonicity formula everywhere
    cone_vertex: tuple[float, ...] | None = None
    monotone_at: tuple[float, ...] | None = None


@dataclass(frozen=True)
class StaircaseSet:
    """Union of horizontal segments over contiguous intervals I_j with doubling
    lengths; odd j carries one segment at height 0, even j two segments at
    heights -1/2 and +1/2."""
    a1: float = 1.0

    def interval(self, j: int) -> tuple[float, float]:
        lo = self.a1 * (2.0 ** (j - 1) - 1.0)
        return lo, lo + self.a1 * 2.0 ** (j - 1)

    def heights(self, j: int) -> tuple[float, ...]:
        return (0.0,) if j % 2 == 1 else (-0.5, 0.5)

    def cumulative_length(self, x: float) -> float:
        """Total segment length with abscissa in (0, x], before any ball cut."""
        total, j = 0.0, 1
        while True:
            lo, hi = self.interval(j)
            if lo >= x:
                return total
            total += len(self.heights(j)) * (min(hi, x) - lo)
            j += 1

    def ball_length(self, r: float) -> float:
        """Exact length of the set inside the centered closed ball B_r."""
        if r <= 0:
            return 0.0
        total = self._strip_length(r, 0.0)
        if r > 0.5:
            xmax = math.sqrt(r * r - 0.25)
            total += 2.0 * self._strip_length(xmax, None)
        return total

    def _strip_length(self, xmax: float, _h) -> float:
        # length of height-0 strips (odd j) up to xmax when _h is 0.0,
        # of one +-1/2 strip (even j) when _h is None
        want_odd = _h == 0.0
        total, j = 0.0, 1
        while True:
            lo, hi = self.interval(j)
            if lo >= xmax:
                return total
            if (j % 2 == 1) == want_odd:
                total += min(hi, xmax) - lo
            j += 1

    def pieces_in_annulus(self, r_lo: float, r_hi: float):
        """(x0, x1, height) pieces whose points satisfy r_lo <= |(x, h)| <= r_hi."""
        out = []
        j = 1
        while True:
            lo, hi = self.interval(j)
            if lo > r_hi:
                return out
            for h in self.heights(j):
                if r_hi * r_hi <= h * h:
                    continue
                x1 = math.sqrt(r_hi * r_hi - h * h)
                x0 = math.sqrt(max(r_lo * r_lo - h * h, 0.0))
                a, b = max(lo, x0), min(hi, x1)
                if b > a:
                    out.append((a, b, h))
            j += 1


@dataclass(eq=False)
class Scene:
    name: str
    ambient: int
    dim: int
    charts: tuple[Chart, ...] = ()
    staircase: StaircaseSet | None = None
    overlap_policy: str = "disjoint"  # or "declared_overlap"
    meta: SceneMeta = field(default_factory=SceneMeta)
    source: str | None = None
    on_set_tol: float = 1e-6  # membership slack (enlarged by declared excisions)

    def __post_init__(self):
        if not (1 <= self.ambient <= 8):
            raise DimensionMismatchError(f"ambient dimension {self.ambient} outside 1..8")
        if not (1 <= self.dim <= 4 and self.dim <= self.ambient):
            raise DimensionMismatchError(
                f"intrinsic dimension {self.dim} outside 1..min(4, ambient)")
        if (self.staircase is None) == (not self.charts):
            raise SceneError("scene needs charts or the staircase builtin, not both")
        for ch in self.charts:
            if len(ch.mapping) != self.ambient:
                raise DimensionMismatchError(
                    f"chart maps to R^{len(ch.mapping)}, scene is ambient R^{self.ambient}")
            if len(ch.params) != self.dim:
                raise DimensionMismatchError(
                    f"chart has {len(ch.params)} parameters, intrinsic dimension is {self.dim}")
            for comp in ch.mapping:
                bad = free_vars(comp) - set(ch.params)
                if bad:
                    raise SceneError(f"expression uses unknown variable {sorted(bad)[0]!r}")
            lo, hi = region_box(ch.domain)
            if np.any(lo >= hi):
                raise SceneError("chart domain has an empty bounding box")

    def scene_hash(self) -> str:
        return hashlib.sha256(self.describe().encode("utf-8")).hexdigest()[:16]

    def describe(self) -> str:
        if self.source is not None:
            return self.source
        parts = [self.name, str(self.ambient), str(self.dim), self.overlap_policy,
                 repr(self.meta)]
        if self.staircase is not None:
            parts.append(f"staircase({self.staircase.a1!r})")
        for ch in self.charts:
            parts.append(",".join(ch.params))
            parts.extend(to_text(c) for c in ch.mapping)
            parts.append(repr(ch.domain))
            parts.append(repr(ch.weight))
        return "\n".join(parts)


# ---------------------------------------------------------------------------
# text format

_KEYWORDS = {"scene", "ambient", "dim", "chart", "params", "domain", "exclude",
             "ball", "map", "builtin", "meta", "in"}


class _SceneLexer:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def _skip(self):
        t = self.text
        while self.pos < len(t):
            if t[self.pos].isspace():
                self.pos += 1
            elif t[self.pos] == "#":
                while self.pos < len(t) and t[self.pos] != "\n":
                    self.pos += 1
            else:
                break

    def peek(self):
        self._skip()
        t, i = self.text, self.pos
        if i >= len(t):
            return ("end", "", i)
        c = t[i]
        if c == '"':
            j = t.find('"', i + 1)
            if j < 0:
                raise SceneParseError("unterminated string", i)
            return ("string", t[i + 1:j], i)
        if c.isalpha() or c == "_":
            j = i
            while j < len(t) and (t[j].isalnum() or t[j] == "_"):
                j += 1
            return ("ident", t[i:j], i)
        if c.isdigit():
            j = i
            while j < len(t) and (t[j].isalnum() or t[j] in ".+-") and not (
                    t[j] in "+-" and t[j - 1] not in "eE"):
                j += 1
            return ("number", t[i:j], i)
        return ("punct", c, i)

    def take(self):
        tok = self.peek()
        self.pos = tok[2] + (len(tok[1]) + 2 if tok[0] == "string" else len(tok[1]) or 1)
        return tok

    def expect(self, value):
        kind, got, pos = self.take()
        if got != value:
            raise SceneParseError(f"expected {value!r}, got {got!r}", pos)

    def balanced(self, open_char="(", close_char=")") -> list[str]:
        """Consume a balanced (...) group, returning top-level comma pieces."""
        self._skip()
        if self.pos >= len(self.text) or self.text[self.pos] != open_char:
            raise SceneParseError(f"expected {open_char!r}", self.pos)
        depth, start = 0, self.pos
        pieces, piece_start = [], self.pos + 1
        i = self.pos
        while i < len(self.text):
            c = self.text[i]
            if c == open_char:
                depth += 1
            elif c == close_char:
                depth -= 1
                if depth == 0:
                    pieces.append(self.text[piece_start:i])
                    self.pos = i + 1
                    return pieces
            elif c == "," and depth == 1:
                pieces.append(self.text[piece_start:i])
                piece_start = i + 1
            i += 1
        raise SceneParseError("unbalanced parentheses", start)


def _const(text: str, pos_hint: int = 0) -> float:
    s = text.strip()
    if s in ("inf", "+inf"):
        return math.inf
    if s == "-inf":
        return -math.inf
    try:
        return float(evaluate(parse_expr(s, params=()), {}))
    except ExprError as exc:
        raise SceneParseError(f"bad constant {s!r}: {exc}", pos_hint) from None


def _const_tuple(text: str) -> tuple[float, ...]:
    inner = text.strip()
    if inner.startswith("(") and inner.endswith(")"):
        inner = inner[1:-1]
    return tuple(_const(p) for p in inner.split(","))


def parse_scene(text: str) -> Scene:
    """Parse the scene text format.  See the package README for the grammar."""
    lx = _SceneLexer(text)
    kind, val, pos = lx.take()
    if val != "scene":
        raise SceneParseError("scene files start with: scene \"name\" { ... }", pos)
    kind, name, pos = lx.take()
    if kind != "string":
        raise SceneParseError("scene name must be a quoted string", pos)
    lx.expect("{")
    ambient = dim = None
    charts: list[Chart] = []
    builtin_name = None
    meta = None
    on_set_tol = 1e-6
    while True:
        kind, val, pos = lx.take()
        if val == "}":
            break
        if kind != "ident":
            raise SceneParseError(f"unexpected token {val!r}", pos)
        if val == "ambient":
            ambient = int(_const(lx.take()[1], pos))
            lx.expect(";")
        elif val == "dim":
            dim = int(_const(lx.take()[1], pos))
            lx.expect(";")
        elif val == "chart":
            charts.append(_parse_chart(lx))
        elif val == "builtin":
            kind2, bname, pos2 = lx.take()
            if kind2 != "ident":
                raise SceneParseError("builtin needs a name", pos2)
            args = ()
            if lx.peek()[1] == "(":
                args = tuple(_const(p, pos2) for p in lx.balanced())
            lx.expect(";")
            builtin_name = (bname, args)
        elif val == "meta":
            meta = _parse_meta(lx)
        else:
            raise SceneParseError(f"unexpected keyword {val!r}", pos)
    kind, val, pos = lx.peek()
    if kind != "end":
        raise SceneParseError(f"trailing input {val!r}", pos)

    if builtin_name is not None:
        if charts:
            raise SceneParseError("a scene is charts or a builtin, not both")
        base = builtin_scene(builtin_name[0], *builtin_name[1])
        return Scene(name=name or base.name, ambient=base.ambient, dim=base.dim,
                     charts=base.charts, staircase=base.staircase,
                     overlap_policy=base.overlap_policy,
                     meta=meta if meta is not None else base.meta,
                     source=text, on_set_tol=base.on_set_tol)
    if ambient is None or dim is None:
        raise SceneParseError("scene needs ambient and dim declarations")
    return Scene(name=name, ambient=ambient, dim=dim, charts=tuple(charts),
                 meta=meta if meta is not None else SceneMeta(),
                 source=text, on_set_tol=on_set_tol)


def _parse_chart(lx: _SceneLexer) -> Chart:
    lx.expect("{")
    params: tuple[str, ...] = ()
    bounds: dict[str, tuple[float, float]] = {}
    excludes: list = []
    mapping: tuple[Expr, ...] | None = None
    while True:
        kind, val, pos = lx.take()
        if val == "}":
            break
        if val == "params":
            pieces = lx.balanced()
            params = tuple(p.strip() for p in pieces)
            lx.expect(";")
        elif val == "domain":
            lx.expect("{")
            while True:
                k2, v2, p2 = lx.take()
                if v2 == "}":
                    break
                if v2 == "exclude":
                    lx.expect("ball")
                    pieces = lx.balanced()
                    if len(pieces) != 2:
                        raise SceneParseError("exclude ball((...), r)", p2)
                    center = _const_tuple(pieces[0])
                    radius = _const(pieces[1], p2)
                    excludes.append(BallComplement(center, radius))
                    lx.expect(";")
                elif k2 == "ident":
                    lx.expect("in")
                    pieces = lx.balanced()
                    if len(pieces) != 2:
                        raise SceneParseError("bounds look like: t in (lo, hi);", p2)
                    bounds[v2] = (_const(pieces[0], p2), _const(pieces[1], p2))
                    lx.expect(";")
                else:
                    raise SceneParseError(f"unexpected token {v2!r} in domain", p2)
        elif val == "map":
            pieces = lx.balanced()
            try:
                mapping = tuple(parse_expr(p) for p in pieces)
            except ExprError as exc:
                raise SceneParseError(f"bad map expression: {exc}", pos) from None
            if lx.peek()[1] == ";":
                lx.take()
        else:
            raise SceneParseError(f"unexpected token {val!r} in chart", pos)
    if not params or mapping is None:
        raise SceneParseError("chart needs params (...) and map (...)")
    missing = [p for p in params if p not in bounds]
    if missing:
        raise SceneParseError(f"no bounds for parameter {missing[0]!r}")
    for p, (lo, hi) in bounds.items():
        if not lo < hi:
            raise SceneParseError(f"empty bounds for {p!r}")
    box = Box(tuple(bounds[p][0] for p in params), tuple(bounds[p][1] for p in params))
    domain = box if not excludes else Intersection((box, *excludes))
    return Chart(params=params, mapping=mapping, domain=domain)


def _parse_meta(lx: _SceneLexer) -> SceneMeta:
    lx.expect("{")
    kw = {}
    while True:
        kind, val, pos = lx.take()
        if val == "}":
            break
        if kind != "ident":
            raise SceneParseError(f"unexpected token {val!r} in meta", pos)
        lx.expect("=")
        if val in ("definable", "minimal"):
            k2, v2, p2 = lx.take()
            if v2 not in ("true", "false"):
                raise SceneParseError(f"{val} must be true or false", p2)
            kw[val] = v2 == "true"
        elif val in ("cone_vertex", "monotone_at"):
            kw[val] = tuple(_const(p) for p in lx.balanced())
        else:
            raise SceneParseError(f"unknown meta key {val!r}", pos)
        lx.expect(";")
    return SceneMeta(**kw)


# ---------------------------------------------------------------------------
# built-in scenes


def _chart(params: str, exprs: list[str], lo, hi, box_fn=None, excludes=(),
           label: str = "") -> Chart:
    names = tuple(p.strip() for p in params.split(","))
    mapping = tuple(parse_expr(s) for s in exprs)
    box = Box(tuple(float(x) for x in lo), tuple(float(x) for x in hi))
    domain = box if not excludes else Intersection((box, *excludes))
    return Chart(params=names, mapping=mapping, domain=domain,
                 param_box_fn=box_fn, label=label)


def _sym_box(*half_widths):
    lo = tuple(-w for w in half_widths)
    hi = tuple(half_widths)
    return lo, hi


def builtin_scene(name: str, *args: float) -> Scene:
    """Construct a built-in scene by name.  Parametrized builtins:
    alpha_cone(alpha) and staircase(a1)."""
    key = name.strip().lower()
    if key == "plane":
        ch = _chart("u, v", ["u", "v", "0"], (-math.inf,) * 2, (math.inf,) * 2,
                    box_fn=lambda R: _sym_box(R, R))
        return Scene("plane", 3, 2, (ch,),
                     meta=SceneMeta(definable=True, minimal=True,
                                    cone_vertex=(0.0, 0.0, 0.0),
                                    monotone_at=(0.0, 0.0, 0.0)))
    if key == "plane_minus_ball":
        ch = _chart("u, v", ["u", "v", "0"], (-math.inf,) * 2, (math.inf,) * 2,
                    box_fn=lambda R: None if R < 1.0 else _sym_box(R, R),
                    excludes=(BallComplement((0.0, 0.0), 1.0),))
        return Scene("plane_minus_ball", 3, 2, (ch,),
                     meta=SceneMeta(definable=True, minimal=False))
    if key == "parabola":
        ch = _chart("t", ["t", "t^2"], (-math.inf,), (math.inf,),
                    box_fn=lambda R: _sym_box(min(R, math.sqrt(max(R, 0.0)))) if R > 0 else None)
        return Scene("parabola", 2, 1, (ch,), meta=SceneMeta(definable=True))
    if key == "catenoid":
        def box_fn(R):
            if R < 1.0:
                return None
            t = math.acosh(R)
            return (-t, 0.0), (t, 2.0 * math.pi)
        ch = _chart("t, s", ["cosh(t)*cos(s)", "cosh(t)*sin(s)", "t"],
                    (-math.inf, 0.0), (math.inf, 2.0 * math.pi), box_fn=box_fn)
        return Scene("catenoid", 3, 2, (ch,),
                     meta=SceneMeta(definable=True, minimal=True,
                                    monotone_at=(1.0, 0.0, 0.0)))
    if key == "upper_catenoid":
        rho2 = "sqrt(x^2 + y^2)"
        ch = _chart("x, y", ["x", "y", f"log({rho2} + sqrt(x^2 + y^2 - 1))"],
                    (-math.inf,) * 2, (math.inf,) * 2,
                    box_fn=lambda R: None if R < 2.0 else _sym_box(R, R),
                    excludes=(BallComplement((0.0, 0.0), 2.0),))
        return Scene("upper_catenoid", 3, 2, (ch,),
                     meta=SceneMeta(definable=True, minimal=False))
    if key == "alpha_cone":
        alpha = float(args[0]) if args else 1.0
        if not alpha > 0:
            raise SceneError("alpha_cone needs alpha > 0")
        sa = repr(math.sqrt(alpha))
        scale = math.sqrt(1.0 + alpha)

        def box_fn(R, _s=scale):
            if R <= 0:
                return None
            return (0.0, 0.0), (R / _s, 2.0 * math.pi)
        top = _chart("rho, phi", ["rho*cos(phi)", "rho*sin(phi)", f"{sa}*rho"],
                     (0.0, 0.0), (math.inf, 2.0 * math.pi), box_fn=box_fn, label="upper")
        bot = _chart("rho, phi", ["rho*cos(phi)", "rho*sin(phi)", f"-({sa}*rho)"],
                     (0.0, 0.0), (math.inf, 2.0 * math.pi), box_fn=box_fn, label="lower")
        return Scene(f"alpha_cone({alpha:g})", 3, 2, (top, bot),
                     meta=SceneMeta(definable=True, cone_vertex=(0.0, 0.0, 0.0)))
    if key == "helicoid":
        ch = _chart("t, s", ["t*cos(s)", "t*sin(s)", "s"],
                    (-math.inf,) * 2, (math.inf,) * 2,
                    box_fn=lambda R: _sym_box(R, R))
        return Scene("helicoid", 3, 2, (ch,),
                     meta=SceneMeta(definable=False, minimal=True,
                                    monotone_at=(0.0, 0.0, 0.0)))
    if key == "staircase":
        a1 = float(args[0]) if args else 1.0
        if not a1 > 0:
            raise SceneError("staircase needs a1 > 0")
        return Scene(f"staircase({a1:g})", 2, 1, staircase=StaircaseSet(a1),
                     meta=SceneMeta(definable=False))
    if key == "complex_parabola":
        def box_fn(R):
            if R <= 0:
                return None
            b = math.sqrt((-1.0 + math.sqrt(1.0 + 4.0 * R * R)) / 2.0)
            return _sym_box(b, b)
        ch = _chart("u, v", ["u", "v", "u^2 - v^2", "2*u*v"],
                    (-math.inf,) * 2, (math.inf,) * 2, box_fn=box_fn)
        return Scene("complex_parabola", 4, 2, (ch,),
                     meta=SceneMeta(definable=True, minimal=True,
                                    monotone_at=(0.0,) * 4))
    if key == "complex_cubic":
        def box_fn(R):
            if R <= 0:
                return None
            b = min(R, R ** (1.0 / 3.0))
            return _sym_box(b, b)
        ch = _chart("u, v", ["u", "v", "u^3 - 3*u*v^2", "3*u^2*v - v^3"],
                    (-math.inf,) * 2, (math.inf,) * 2, box_fn=box_fn)
        return Scene("complex_cubic", 4, 2, (ch,),
                     meta=SceneMeta(definable=True, minimal=True,
                                    monotone_at=(0.0,) * 4))
    if key == "cubic_graph":
        ch = _chart("x, y", ["x", "y", "(x^2 + y^2 + 1)^(1/3)"],
                    (-math.inf,) * 2, (math.inf,) * 2,
                    box_fn=lambda R: None if R < 1.0 else _sym_box(R, R))
        return Scene("cubic_graph", 3, 2, (ch,), meta=SceneMeta(definable=True))
    if key == "lawson_osserman":
        nx = "sqrt(x1^2 + x2^2 + x3^2 + x4^2)"
        exprs = ["x1", "x2", "x3", "x4",
                 f"(sqrt(5)/2)*(x1^2 + x2^2 - x3^2 - x4^2)/{nx}",
                 f"sqrt(5)*(x1*x3 + x2*x4)/{nx}",
                 f"sqrt(5)*(x2*x3 - x1*x4)/{nx}"]
        delta = 1e-3

        def box_fn(R, _d=delta):
            if R <= 1.5 * _d:
                return None
            b = 2.0 * R / 3.0
            return _sym_box(b, b, b, b)
        ch = _chart("x1, x2, x3, x4", exprs, (-math.inf,) * 4, (math.inf,) * 4,
                    box_fn=box_fn,
                    excludes=(BallComplement((0.0,) * 4, delta),))
        sc = Scene("lawson_osserman", 7, 4, (ch,),
                   meta=SceneMeta(definable=True, minimal=True,
                                  cone_vertex=(0.0,) * 7, monotone_at=(0.0,) * 7),
                   on_set_tol=3e-3)
        return sc
    raise UnknownBuiltinError(f"no builtin scene named {name!r}")


def builtin_library() -> list[Scene]:
    """Built-in scenes with default parameters."""
    return [builtin_scene(n) for n in
            ("plane", "plane_minus_ball", "parabola", "catenoid", "upper_catenoid",
             "alpha_cone", "helicoid", "staircase", "complex_parabola",
             "complex_cubic", "cubic_graph", "lawson_osserman")]


def load_scene(spec: str) -> Scene:
    """Resolve a scene argument: a builtin name like alpha_cone(3), or a path
    to a scene file."""
    s = spec.strip()
    if s.endswith(".scene") or "/" in s:
        with open(s, "r", encoding="utf-8") as fh:
            return parse_scene(fh.read())
    if "(" in s:
        name, rest = s.split("(", 1)
        if not rest.rstrip().endswith(")"):
            raise SceneError(f"bad scene spec {spec!r}")
        args = tuple(float(a) for a in rest.rstrip()[:-1].split(",") if a.strip())
        return builtin_scene(name, *args)
    return builtin_scene(s)


# ---------------------------------------------------------------------------
# sampling


@dataclass
class SampleResult:
    points: np.ndarray          # (N, m)
    params: np.ndarray | None   # (N, d); None for the staircase
    chart_index: np.ndarray     # (N,)
    requested: int
    acceptance_rate: float
    warning: str | None = None


def _rng(seed, *tags) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((int(seed) & 0xFFFFFFFF,) + tuple(
        int(t) & 0xFFFFFFFF for t in tags)))


def sample_points(scene: Scene, r_lo: float, r_hi: float, count: int,
                  seed: int = 0) -> SampleResult:
    """Seeded points on the scene with norms in [r_lo, r_hi], approximately
    uniform with respect to the intrinsic measure."""
    if not 0 <= r_lo < r_hi:
        raise SceneError("annulus needs 0 <= r_lo < r_hi")
    if scene.staircase is not None:
        return _sample_staircase(scene, r_lo, r_hi, count, seed)
    boxes = []
    for ci, ch in enumerate(scene.charts):
        box = ch.box_for_radius(r_hi)
        if box is not None:
            boxes.append((ci, ch, box))
    if not boxes:
        raise EmptyIntersectionError(
            f"{scene.name}: no chart reaches the ball of radius {r_hi:g}")

    rng = _rng(seed, 101)
    weights = []
    pilots = []
    for ci, ch, (lo, hi) in boxes:
        pil = rng.uniform(lo, hi, size=(512, len(lo)))
        ok = region_contains(ch.domain, pil)
        elem = np.zeros(len(pil))
        if np.any(ok):
            pts = ch.eval_points(pil[ok])
            norms = np.linalg.norm(pts, axis=1)
            ring = (norms >= r_lo) & (norms <= r_hi)
            e = ch.area_elements(pil[ok])
            elem_ok = np.where(ring, e, 0.0)
            elem[np.flatnonzero(ok)] = elem_ok
        vol = float(np.prod(hi - lo))
        weights.append(vol * float(np.mean(elem)))
        pilots.append(float(np.max(elem)) if np.any(elem > 0) else 0.0)
    weights = np.asarray(weights)
    if weights.sum() <= 0:
        weights = np.ones(len(boxes))
    shares = weights / weights.sum()

    all_pts, all_par, all_ci = [], [], []
    total_prop = total_acc = 0
    warning = None
    for bi, (ci, ch, (lo, hi)) in enumerate(boxes):
        need = int(round(count * shares[bi]))
        if bi == len(boxes) - 1:
            need = count - sum(len(p) for p in all_pts)
        if need <= 0:
            continue
        mmax = max(pilots[bi], 1e-300) * 1.5
        got_par: list[np.ndarray] = []
        got = 0
        crng = _rng(seed, 7, ci)
        proposals = 0
        for _round in range(64):
            batch = int(min(max(2048, 4 * (need - got) / max(total_acc / max(total_prop, 1), 1e-3)), 250_000))
            pil = crng.uniform(lo, hi, size=(batch, len(lo)))
            proposals += batch
            ok = region_contains(ch.domain, pil)
            if np.any(ok):
                sub = pil[ok]
                pts = ch.eval_points(sub)
                norms = np.linalg.norm(pts, axis=1)
                ring = (norms >= r_lo) & (norms <= r_hi)
                sub = sub[ring]
                if len(sub):
                    e = ch.area_elements(sub)
                    if float(np.max(e)) > mmax:
                        # importance cap was too low: raise it and restart
                        mmax = float(np.max(e)) * 1.5
                        got_par, got = [], 0
                        continue
                    keep = crng.uniform(0.0, mmax, size=len(sub)) < e
                    sub = sub[keep]
                    if len(sub):
                        got_par.append(sub)
                        got += len(sub)
            if got >= need:
                break
            if proposals > 200_000 and got / proposals < 1e-4:
                warning = (f"chart {ci}: acceptance rate "
                           f"{got / proposals:.2e} below 1e-4; returning {got} points")
                break
        total_prop += proposals
        total_acc += min(got, need)
        if got_par:
            par = np.concatenate(got_par)[:need]
            all_par.append(par)
            all_pts.append(ch.eval_points(par))
            all_ci.append(np.full(len(par), ci, dtype=np.int64))
    if not all_pts:
        return SampleResult(np.zeros((0, scene.ambient)), np.zeros((0, scene.dim)),
                            np.zeros(0, dtype=np.int64), count, 0.0,
                            warning or "no points accepted")
    return SampleResult(np.concatenate(all_pts), np.concatenate(all_par),
                        np.concatenate(all_ci), count,
                        total_acc / max(total_prop, 1), warning)


def _sample_staircase(scene: Scene, r_lo, r_hi, count, seed) -> SampleResult:
    pieces = scene.staircase.pieces_in_annulus(r_lo, r_hi)
    if not pieces:
        raise EmptyIntersectionError(
            f"{scene.name}: empty in the annulus [{r_lo:g}, {r_hi:g}]")
    lengths = np.asarray([b - a for a, b, _ in pieces])
    cum = np.cumsum(lengths)
    rng = _rng(seed, 11)
    u = rng.uniform(0.0, cum[-1], size=count)
    idx = np.searchsorted(cum, u, side="right")
    pts = np.empty((count, 2))
    for k in range(count):
        a, b, h = pieces[idx[k]]
        prev = cum[idx[k] - 1] if idx[k] > 0 else 0.0
        pts[k, 0] = a + (u[k] - prev)
        pts[k, 1] = h
    return SampleResult(pts, None, np.zeros(count, dtype=np.int64), count, 1.0, None)


@dataclass
class Projection:
    chart_index: int
    params: np.ndarray | None
    point: np.ndarray
    dist: float


def project_to_scene(scene: Scene, p, seed: int = 0) -> Projection:
    """Nearest scene point to p (numerically: pilot sampling plus Gauss-Newton)."""
    p = np.asarray(p, dtype=np.float64)
    if scene.staircase is not None:
        return _project_staircase(scene, p)
    best: Projection | None = None
    R = float(np.linalg.norm(p)) * 1.25 + 2.0
    for ci, ch in enumerate(scene.charts):
        box = ch.box_for_radius(R)
        if box is None:
            continue
        lo, hi = box
        rng = _rng(seed, 23, ci)
        pil = rng.uniform(lo, hi, size=(2048, len(lo)))
        pil = pil[region_contains(ch.domain, pil)]
        if not len(pil):
            continue
        pts = ch.eval_points(pil)
        d = np.linalg.norm(pts - p, axis=1)
        order = np.argsort(d, kind="stable")[:16]
        for k in order:
            u = pil[k].copy()
            for _ in range(24):
                x = ch.eval_points(u[None, :])[0]
                jac = ch.jacobians(u[None, :])[0]
                step, *_ = np.linalg.lstsq(jac, p - x, rcond=None)
                if not np.all(np.isfinite(step)):
                    break
                u_new = np.clip(u + step, lo, hi)
                if not region_contains(ch.domain, u_new[None, :])[0]:
                    # pull back toward the feasible side
                    tpar = 1.0
                    for _half in range(20):
                        tpar *= 0.5
                        u_try = np.clip(u + tpar * step, lo, hi)
                        if region_contains(ch.domain, u_try[None, :])[0]:
                            u_new = u_try
                            break
                    else:
                        break
                moved = float(np.linalg.norm(u_new - u))
                u = u_new
                if moved < 1e-14 * (1.0 + float(np.linalg.norm(u))):
                    break
            x = ch.eval_points(u[None, :])[0]
            dist = float(np.linalg.norm(x - p))
            if best is None or dist < best.dist:
                best = Projection(ci, u, x, dist)
    if best is None:
        raise EmptyIntersectionError(f"{scene.name}: nothing near {p.tolist()}")
    return best


def _project_staircase(scene: Scene, p) -> Projection:
    px, py = float(p[0]), float(p[1])
    r = math.hypot(px, py) + 1.0
    best_d, best_pt = math.inf, None
    for a, b, h in scene.staircase.pieces_in_annulus(0.0, max(r * 2.0, 4.0)):
        x = min(max(px, a), b)
        d = math.hypot(px - x, py - h)
        if d < best_d:
            best_d, best_pt = d, np.array([x, h])
    return Projection(0, None, best_pt, best_d)


def sample_near(scene: Scene, p, r_lo: float, r_hi: float, count: int,
                seed: int = 0) -> SampleResult:
    """Seeded points x on the scene with r_lo <= |x - p| <= r_hi."""
    p = np.asarray(p, dtype=np.float64)
    if scene.staircase is not None:
        res = _sample_staircase_near(scene, p, r_lo, r_hi, count, seed)
        return res
    all_pts, all_par, all_ci = [], [], []
    for ci, ch in enumerate(scene.charts):
        proj = _project_chart(scene, ch, ci, p, seed)
        if proj is None or proj.dist > r_hi:
            continue
        box = ch.box_for_radius(float(np.linalg.norm(p)) + 2.0 * r_hi + 1.0)
        if box is None:
            continue
        lo_box, hi_box = box
        jac = ch.jacobians(proj.params[None, :])[0]
        svals = np.linalg.svd(jac, compute_uv=False)
        smin = max(float(svals[-1]), 1e-9)
        half = min(2.5 * r_hi / smin, float(np.max(hi_box - lo_box)))
        rng = _rng(seed, 31, ci)
        got: list[np.ndarray] = []
        n_got = 0
        for _round in range(40):
            lo = np.maximum(proj.params - half, lo_box)
            hi = np.minimum(proj.params + half, hi_box)
            pil = rng.uniform(lo, hi, size=(4096, len(lo)))
            # where the window clipped at a domain edge, also draw from the
            # opposite edge: periodic seams put nearby points there, and the
            # ring test below discards any strays on non-periodic charts
            for a in range(len(lo)):
                spill_lo = lo_box[a] - (proj.params[a] - half)
                spill_hi = (proj.params[a] + half) - hi_box[a]
                if spill_lo > 0 and spill_hi <= 0:
                    wrap = pil[rng.random(len(pil)) < 0.5].copy()
                    wrap[:, a] = rng.uniform(
                        max(hi_box[a] - spill_lo, lo_box[a]), hi_box[a],
                        size=len(wrap))
                    pil = np.concatenate([pil, wrap])
                elif spill_hi > 0 and spill_lo <= 0:
                    wrap = pil[rng.random(len(pil)) < 0.5].copy()
                    wrap[:, a] = rng.uniform(
                        lo_box[a], min(lo_box[a] + spill_hi, hi_box[a]),
                        size=len(wrap))
                    pil = np.concatenate([pil, wrap])
            pil = pil[region_contains(ch.domain, pil)]
            if len(pil) == 0:
                half *= 1.6
                continue
            pts = ch.eval_points(pil)
            d = np.linalg.norm(pts - p, axis=1)
            ring = (d >= r_lo) & (d <= r_hi)
            if np.any(ring):
                got.append(pil[ring])
                n_got += int(ring.sum())
                if n_got >= count:
                    break
            if float(np.min(d)) > r_hi:
                half *= 0.6
            elif not np.any(d > r_lo):
                half *= 1.7
            else:
                half *= 1.15  # widen slowly to catch all directions
        if got:
            par = np.concatenate(got)
            # unbiased truncation: rounds append region by region (seam wraps
            # last), so a plain prefix would drop whole sides of the window
            par = par[rng.permutation(len(par))[:count]]
            all_par.append(par)
            all_pts.append(ch.eval_points(par))
            all_ci.append(np.full(len(par), ci, dtype=np.int64))
    if not all_pts:
        raise EmptyIntersectionError(
            f"{scene.name}: no points within [{r_lo:g}, {r_hi:g}] of {p.tolist()}")
    return SampleResult(np.concatenate(all_pts), np.concatenate(all_par),
                        np.concatenate(all_ci), count, 1.0, None)


def _sample_staircase_near(scene, p, r_lo, r_hi, count, seed):
    px, py = float(p[0]), float(p[1])
    rmax = math.hypot(px, py) + r_hi
    pieces = []
    for a, b, h in scene.staircase.pieces_in_annulus(0.0, rmax + 1.0):
        dy2 = (py - h) ** 2
        if dy2 > r_hi * r_hi:
            continue
        span = math.sqrt(r_hi * r_hi - dy2)
        aa, bb = max(a, px - span), min(b, px + span)
        if bb > aa:
            pieces.append((aa, bb, h))
    if not pieces:
        raise EmptyIntersectionError(f"{scene.name}: empty near {p.tolist()}")
    lengths = np.asarray([b - a for a, b, _ in pieces])
    cum = np.cumsum(lengths)
    rng = _rng(seed, 37)
    out = []
    for _ in range(64):
        u = rng.uniform(0.0, cum[-1], size=max(count, 256))
        idx = np.searchsorted(cum, u, side="right")
        xs = np.empty(len(u))
        hs = np.empty(len(u))
        for k in range(len(u)):
            a, b, h = pieces[idx[k]]
            prev = cum[idx[k] - 1] if idx[k] > 0 else 0.0
            xs[k] = a + (u[k] - prev)
            hs[k] = h
        d = np.hypot(xs - px, hs - py)
        ok = (d >= r_lo) & (d <= r_hi)
        if np.any(ok):
            out.append(np.column_stack([xs[ok], hs[ok]]))
        if sum(len(o) for o in out) >= count:
            break
    if not out:
        raise EmptyIntersectionError(f"{scene.name}: empty shell near {p.tolist()}")
    pts = np.concatenate(out)[:count]
    return SampleResult(pts, None, np.zeros(len(pts), dtype=np.int64),
                        count, 1.0, None)


def _project_chart(scene, ch, ci, p, seed) -> Projection | None:
    sub = Scene(scene.name, scene.ambient, scene.dim, (ch,), meta=scene.meta,
                on_set_tol=scene.on_set_tol)
    try:
        proj = project_to_scene(sub, p, seed=seed)
    except EmptyIntersectionError:
        return None
    proj.chart_index = ci
    return proj


def collision_rate(scene: Scene, seed: int = 0, count: int = 512,
                   r_lo: float = 1.0, r_hi: float = 8.0) -> float:
    """Fraction of cross-chart sample pairs closer than 1e-9 (declared-disjoint
    charts should stay below 1e-3)."""
    if len(scene.charts) < 2 or scene.overlap_policy != "disjoint":
        return 0.0
    from scipy.spatial import cKDTree
    res = sample_points(scene, r_lo, r_hi, count, seed=seed)
    hits = 0
    pairs = 0
    for ci in range(len(scene.charts)):
        a = res.points[res.chart_index == ci]
        b = res.points[res.chart_index != ci]
        if not len(a) or not len(b):
            continue
        tree = cKDTree(b)
        d, _ = tree.query(a, k=1)
        hits += int(np.sum(d < 1e-9))
        pairs += len(a)
    return hits / max(pairs, 1)
