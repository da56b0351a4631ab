"""Reference values for the built-in scenes from closed forms and 1-d
quadrature.  Everything here is independent of the cell-based measure engine;
tests freeze these numbers and the `oracle` CLI subcommand prints them.

Conventions: areas are intrinsic measures inside the centered ball of radius
r; densities divide by mu_n(dim) * r^dim.
"""

from __future__ import annotations

import math

from scipy.integrate import quad
from scipy.optimize import brentq

__all__ = ["mu_n", "oracle_names", "oracle_values", "signature"]


def mu_n(n: int) -> float:
    return math.pi ** (n / 2.0) / math.gamma(n / 2.0 + 1.0)


# --- plane -----------------------------------------------------------------

def plane_area(r: float) -> float:
    return math.pi * r * r


def plane_minus_ball_area(r: float) -> float:
    return math.pi * max(r * r - 1.0, 0.0)


# --- parabola t -> (t, t^2) -------------------------------------------------

def parabola_area(r: float) -> float:
    # |(t, t^2)| = r at t*^2 = (-1 + sqrt(1+4r^2))/2; arclength of both arcs
    t2 = (-1.0 + math.sqrt(1.0 + 4.0 * r * r)) / 2.0
    t = math.sqrt(t2)
    arc = t * math.sqrt(1.0 + 4.0 * t2) / 2.0 + math.asinh(2.0 * t) / 4.0
    return 2.0 * arc


def parabola_density(r: float) -> float:
    return parabola_area(r) / (2.0 * r)


# --- catenoid (cosh t cos s, cosh t sin s, t) --------------------------------

def catenoid_zstar(r: float) -> float:
    if r <= 1.0:
        return 0.0
    return brentq(lambda z: math.cosh(z) ** 2 + z * z - r * r, 0.0,
                  math.asinh(r) + 2.0)


def catenoid_area(r: float) -> float:
    z = catenoid_zstar(r)
    return 2.0 * math.pi * (z + math.sinh(z) * math.cosh(z))


def catenoid_density(r: float) -> float:
    return catenoid_area(r) / (math.pi * r * r)


# --- upper catenoid sheet: graph of arccosh(rho) over rho >= 2 ---------------

def upper_catenoid_rhostar(r: float) -> float:
    if r * r <= 4.0 + math.acosh(2.0) ** 2:
        return 2.0
    return brentq(lambda p: p * p + math.acosh(p) ** 2 - r * r, 2.0, r + 1.0)


def upper_catenoid_area(r: float) -> float:
    # area element rho^2 / sqrt(rho^2-1) d rho d phi; primitive
    # (rho sqrt(rho^2-1) + arccosh rho) / 2
    p = upper_catenoid_rhostar(r)
    if p <= 2.0:
        return 0.0

    def prim(x):
        return (x * math.sqrt(x * x - 1.0) + math.acosh(x)) / 2.0
    return 2.0 * math.pi * (prim(p) - prim(2.0))


def upper_catenoid_density(r: float) -> float:
    return upper_catenoid_area(r) / (math.pi * r * r)


# --- alpha cone z = +-sqrt(alpha) rho ----------------------------------------

def alpha_cone_area(r: float, alpha: float = 1.0) -> float:
    return 2.0 * math.pi * r * r / math.sqrt(1.0 + alpha)


def alpha_cone_density(alpha: float = 1.0) -> float:
    return 2.0 / math.sqrt(1.0 + alpha)


# --- helicoid (t cos s, t sin s, s) ------------------------------------------

def helicoid_area(r: float) -> float:
    val, _ = quad(lambda t: math.sqrt(1.0 + t * t)
                  * 2.0 * math.sqrt(max(r * r - t * t, 0.0)), -r, r, limit=200)
    return val


def helicoid_density(r: float) -> float:
    return helicoid_area(r) / (math.pi * r * r)


# --- staircase ----------------------------------------------------------------

def staircase_ball_length(r: float, a1: float = 1.0) -> float:
    """Length inside B_r(0): height-0 strips on odd intervals, two strips at
    heights +-1/2 on even intervals (those enter the ball for x <= sqrt(r^2-1/4))."""
    def strips(xmax: float, want_odd: bool) -> float:
        total, j = 0.0, 1
        while a1 * (2.0 ** (j - 1) - 1.0) < xmax:
            lo = a1 * (2.0 ** (j - 1) - 1.0)
            hi = lo + a1 * 2.0 ** (j - 1)
            if (j % 2 == 1) == want_odd:
                total += min(hi, xmax) - lo
            j += 1
        return total
    if r <= 0:
        return 0.0
    out = strips(r, True)
    if r > 0.5:
        out += 2.0 * strips(math.sqrt(r * r - 0.25), False)
    return out


def staircase_density(r: float, a1: float = 1.0) -> float:
    return staircase_ball_length(r, a1) / (2.0 * r)


def staircase_bands(a1: float = 1.0) -> tuple[float, float]:
    """(liminf, limsup) of the density: cumulative length at even endpoints
    a_{2k} is exactly (5/3) a_{2k}, and the density decays toward 2/3 along
    the odd intervals."""
    return (2.0 / 3.0, 5.0 / 6.0)


def staircase_cumulative(j: int, a1: float = 1.0) -> float:
    """Total segment length up to the endpoint of interval j (no ball cut)."""
    total = 0.0
    for i in range(1, j + 1):
        copies = 1 if i % 2 == 1 else 2
        total += copies * a1 * 2.0 ** (i - 1)
    return total


# --- complex graphs over C = R^2 ----------------------------------------------

def complex_parabola_area(r: float) -> float:
    # element 1 + 4 rho^2, pullback rho^2 + rho^4 <= r^2
    p2 = (-1.0 + math.sqrt(1.0 + 4.0 * r * r)) / 2.0
    return math.pi * (p2 + 2.0 * p2 * p2)


def complex_parabola_density(r: float) -> float:
    return complex_parabola_area(r) / (math.pi * r * r)


def complex_cubic_area(r: float) -> float:
    # element 1 + 9 rho^4, pullback rho^2 + rho^6 <= r^2
    p = brentq(lambda x: x * x + x ** 6 - r * r, 0.0, max(r, r ** (1.0 / 3.0)) + 1.0)
    return math.pi * (p ** 2 + 3.0 * p ** 6)


def complex_cubic_density(r: float) -> float:
    return complex_cubic_area(r) / (math.pi * r * r)


# --- cubic graph z = (x^2 + y^2 + 1)^(1/3) -------------------------------------

def _cubic_f(p: float) -> float:
    return (p * p + 1.0) ** (1.0 / 3.0)


def cubic_graph_area(r: float) -> float:
    if r * r <= 1.0:
        return 0.0
    pstar = brentq(lambda p: p * p + _cubic_f(p) ** 2 - r * r, 0.0, r)

    def elem(p):
        fp = (2.0 * p / 3.0) * (p * p + 1.0) ** (-2.0 / 3.0)
        return math.sqrt(1.0 + fp * fp) * p
    val, _ = quad(elem, 0.0, pstar, limit=200)
    return 2.0 * math.pi * val


def cubic_graph_density(r: float) -> float:
    return cubic_graph_area(r) / (math.pi * r * r)


# --- Lawson-Osserman cone graph ------------------------------------------------

def lawson_osserman_area(r: float) -> float:
    # |graph point| = (3/2)|x| and the area element is the constant 9,
    # so the pullback of B_r is the ball |x| <= 2r/3 in R^4
    return 9.0 * mu_n(4) * (2.0 * r / 3.0) ** 4


def lawson_osserman_density() -> float:
    return 16.0 / 9.0


# --- registry for the CLI and golden files -------------------------------------

_DENSITY = {
    "plane": lambda r, *a: 1.0,
    "plane_minus_ball": lambda r, *a: plane_minus_ball_area(r) / (math.pi * r * r),
    "parabola": lambda r, *a: parabola_density(r),
    "catenoid": lambda r, *a: catenoid_density(r),
    "upper_catenoid": lambda r, *a: upper_catenoid_density(r),
    "alpha_cone": lambda r, *a: alpha_cone_density(a[0] if a else 1.0),
    "helicoid": lambda r, *a: helicoid_density(r),
    "staircase": lambda r, *a: staircase_density(r, a[0] if a else 1.0),
    "complex_parabola": lambda r, *a: complex_parabola_density(r),
    "complex_cubic": lambda r, *a: complex_cubic_density(r),
    "cubic_graph": lambda r, *a: cubic_graph_density(r),
    "lawson_osserman": lambda r, *a: lawson_osserman_density(),
}

_AREA = {
    "plane": lambda r, *a: plane_area(r),
    "plane_minus_ball": lambda r, *a: plane_minus_ball_area(r),
    "parabola": lambda r, *a: parabola_area(r),
    "catenoid": lambda r, *a: catenoid_area(r),
    "upper_catenoid": lambda r, *a: upper_catenoid_area(r),
    "alpha_cone": lambda r, *a: alpha_cone_area(r, a[0] if a else 1.0),
    "helicoid": lambda r, *a: helicoid_area(r),
    "staircase": lambda r, *a: staircase_ball_length(r, a[0] if a else 1.0),
    "complex_parabola": lambda r, *a: complex_parabola_area(r),
    "complex_cubic": lambda r, *a: complex_cubic_area(r),
    "cubic_graph": lambda r, *a: cubic_graph_area(r),
    "lawson_osserman": lambda r, *a: lawson_osserman_area(r),
}


def oracle_names() -> list[str]:
    return sorted(_AREA)


def oracle_values(name: str, radii, args: tuple = ()) -> list[dict]:
    if name not in _AREA:
        raise KeyError(f"no reference formulas for {name!r}")
    out = []
    for r in radii:
        out.append({"r": float(r),
                    "area": float(_AREA[name](float(r), *args)),
                    "theta": float(_DENSITY[name](float(r), *args))})
    return out


def signature(name: str, args: tuple = ()) -> dict:
    """Limit behavior summary used by golden files."""
    limits = {
        "plane": ("converges", 1.0),
        "plane_minus_ball": ("converges", 1.0),
        "parabola": ("converges", 1.0),
        "catenoid": ("converges", 2.0),
        "upper_catenoid": ("converges", 1.0),
        "alpha_cone": ("converges", alpha_cone_density(args[0] if args else 1.0)),
        "helicoid": ("diverges", None),
        "staircase": ("no_limit", staircase_bands(args[0] if args else 1.0)),
        "complex_parabola": ("converges", 2.0),
        "complex_cubic": ("converges", 3.0),
        "cubic_graph": ("converges", 1.0),
        "lawson_osserman": ("converges", 16.0 / 9.0),
    }
    kind, value = limits[name]
    return {"name": name, "kind": kind, "value": value}
