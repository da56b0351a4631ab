"""Measure engine vs closed-form areas, error-bar honesty, determinism."""
import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.optimize import brentq

from farfield import oracles as O
from farfield.measure import BallQuery, BudgetExceededError, area, mu_ball
from farfield.scene import builtin_scene

CASES = [
    # (name, args, r, tol)
    ("plane", (), 7.0, 1e-3),
    ("plane_minus_ball", (), 3.0, 1e-3),
    ("parabola", (), 10.0, 1e-3),
    ("catenoid", (), 2.0, 1e-3),
    ("catenoid", (), 50.0, 1e-3),
    ("upper_catenoid", (), 2.5, 1e-3),
    ("upper_catenoid", (), 40.0, 1e-3),
    ("alpha_cone", (1.0,), 30.0, 1e-3),
    ("alpha_cone", (3.0,), 1.0, 1e-3),
    ("helicoid", (), 8.0, 1e-3),
    ("complex_parabola", (), 20.0, 1e-3),
    ("complex_cubic", (), 20.0, 1e-3),
    ("cubic_graph", (), 25.0, 1e-3),
    ("staircase", (1.0,), 9.0, 1e-3),
    ("lawson_osserman", (), 1.0, 5e-3),
]


@pytest.mark.parametrize("name,args,r,tol", CASES,
                         ids=[f"{n}{a if a else ''}-r{r:g}" for n, a, r, _ in CASES])
def test_area_matches_oracle_within_claimed_error(name, args, r, tol):
    scene = builtin_scene(name, *args)
    want = O.oracle_values(name, [r], args)[0]["area"]
    est = area(scene, BallQuery((0.0,) * scene.ambient, r), tol=tol, seed=0)
    assert abs(est.value - want) <= est.abs_error + 1e-12
    assert est.abs_error <= max(tol * max(want, 1.0), 5.0 * tol)


def test_empty_balls_give_zero():
    assert area(builtin_scene("catenoid"),
                BallQuery((0.0, 0.0, 0.0), 0.5)).value == 0.0
    assert area(builtin_scene("plane_minus_ball"),
                BallQuery((0.0, 0.0, 0.0), 0.5)).value == 0.0
    rim = math.sqrt(4.0 + math.acosh(2.0) ** 2)
    assert area(builtin_scene("upper_catenoid"),
                BallQuery((0.0, 0.0, 0.0), 0.9 * rim)).value == 0.0


def test_off_center_ball_against_independent_quadrature():
    # parabola length inside B_0.5((1, 1)), reference via 1-d quadrature
    p = np.array([1.0, 1.0])
    rr = 0.5

    def g(t):
        return math.hypot(t - p[0], t * t - p[1]) - rr

    t_lo = brentq(g, -2.0, 1.0)
    t_hi = brentq(g, 1.0, 3.0)
    want = quad(lambda t: math.sqrt(1.0 + 4.0 * t * t), t_lo, t_hi)[0]

    est = area(builtin_scene("parabola"), BallQuery((1.0, 1.0), rr), tol=1e-4)
    assert abs(est.value - want) <= est.abs_error + 1e-12
    assert est.value == pytest.approx(want, rel=2e-3)


def test_same_seed_reproduces_bitwise():
    scene = builtin_scene("catenoid")
    q = BallQuery((0.0, 0.0, 0.0), 3.0)
    a = area(scene, q, tol=1e-3, seed=9)
    b = area(scene, q, tol=1e-3, seed=9)
    assert a.value == b.value and a.abs_error == b.abs_error


def test_ball_query_validates():
    with pytest.raises(ValueError):
        BallQuery((0.0, 0.0), -1.0)
    with pytest.raises(ValueError):
        BallQuery((math.inf, 0.0), 1.0)


def test_budget_error_when_cells_exhausted():
    with pytest.raises(BudgetExceededError):
        area(builtin_scene("catenoid"), BallQuery((0.0, 0.0, 0.0), 40.0),
             tol=1e-9, max_cells=64)


def test_mu_ball_closed_forms():
    assert mu_ball(1) == pytest.approx(2.0, abs=1e-12)
    assert mu_ball(2) == pytest.approx(math.pi, abs=1e-12)
    assert mu_ball(3) == pytest.approx(4.0 * math.pi / 3.0, abs=1e-12)
    assert mu_ball(4) == pytest.approx(math.pi ** 2 / 2.0, abs=1e-12)
