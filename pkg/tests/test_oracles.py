"""Frozen reference values for the closed-form area formulas.

The constants below were derived independently (arc-length and area
integrals in closed form, plus one-dimensional quadrature where noted) and
pin the oracle implementations bit for bit.
"""
import math

import pytest

from farfield import oracles as O

FROZEN_AREAS = [
    # (name, args, r, area)
    ("plane", (), 1.0, math.pi),
    ("plane", (), 7.0, 49.0 * math.pi),
    ("plane_minus_ball", (), 0.5, 0.0),
    ("plane_minus_ball", (), 3.0, 8.0 * math.pi),
    ("parabola", (), 1.0, 2.0819943221151958),
    ("parabola", (), 10.0, 20.532914952037338),
    ("catenoid", (), 2.0, 20.945683542469965),
    ("catenoid", (), 50.0, 15600.729671351759),
    ("helicoid", (), 1.0, 3.496076739056121),      # quadrature
    ("helicoid", (), 8.0, 730.2343877740309),      # quadrature
    ("upper_catenoid", (), 2.5, 1.3575663691921676),
    ("upper_catenoid", (), 40.0, 4963.548817168826),
    ("alpha_cone", (1.0,), 1.0, 2.0 * math.pi / math.sqrt(2.0)),
    ("alpha_cone", (1.0,), 30.0, 1800.0 * math.pi / math.sqrt(2.0)),
    ("alpha_cone", (3.0,), 1.0, math.pi),
    ("alpha_cone", (3.0,), 30.0, 900.0 * math.pi),
    ("complex_parabola", (), 1.0, 4.34157426845412),
    ("complex_parabola", (), 20.0, 2451.9934342397514),
    ("complex_cubic", (), 1.0, 5.137585929077051),
    ("complex_cubic", (), 20.0, 3723.900528697495),
    ("cubic_graph", (), 2.0, 6.563876640950962),   # quadrature
    ("cubic_graph", (), 25.0, 1817.190703776551),  # quadrature
    ("lawson_osserman", (), 1.0, 8.772981689857206),
    ("lawson_osserman", (), 12.0, 181916.54832087905),
    ("staircase", (1.0,), 1.0, 1.0),
    ("staircase", (1.0,), 9.0, 12.972200755611428),
]


@pytest.mark.parametrize("name,args,r,want", FROZEN_AREAS,
                         ids=[f"{n}{a if a else ''}-r{r:g}"
                              for n, a, r, _ in FROZEN_AREAS])
def test_frozen_area_values(name, args, r, want):
    got = O.oracle_values(name, [r], args)[0]["area"]
    assert got == pytest.approx(want, rel=1e-12, abs=1e-12)


def test_parabola_area_closed_form_structure():
    # arc length of (t, t^2) to the ball-exit parameter, both branches
    r = 3.7
    t2 = (-1.0 + math.sqrt(1.0 + 4.0 * r * r)) / 2.0
    t = math.sqrt(t2)
    arc = t * math.sqrt(1.0 + 4.0 * t2) / 2.0 + math.asinh(2.0 * t) / 4.0
    assert O.parabola_area(r) == pytest.approx(2.0 * arc, rel=1e-14)


def test_catenoid_exit_height_solves_radius_equation():
    for r in (1.5, 4.0, 33.0):
        z = O.catenoid_zstar(r)
        assert math.cosh(z) ** 2 + z * z == pytest.approx(r * r, rel=1e-11)
        assert O.catenoid_area(r) == pytest.approx(
            2.0 * math.pi * (z + math.sinh(z) * math.cosh(z)), rel=1e-12)


def test_catenoid_area_below_waist_radius_is_zero():
    assert O.catenoid_area(0.5) == 0.0


def test_upper_catenoid_empty_until_rim_radius():
    rim = math.sqrt(4.0 + math.acosh(2.0) ** 2)
    assert O.upper_catenoid_area(rim * 0.999) == 0.0
    assert O.upper_catenoid_area(rim * 1.001) > 0.0


def test_alpha_cone_density_formula():
    for alpha in (0.5, 1.0, 2.0, 3.0):
        assert O.alpha_cone_density(alpha) == pytest.approx(
            2.0 / math.sqrt(1.0 + alpha), rel=1e-15)


def test_complex_graph_areas_are_polynomial_in_slice_radius():
    # graph area over a disc of parameter radius rho: pi(rho^2 + 2 rho^4)
    # for w^2 and pi(rho^2 + 3 rho^6) for w^3, evaluated at the ball exit
    r = 5.0
    rho2 = (-1.0 + math.sqrt(1.0 + 4.0 * r * r)) / 2.0
    assert O.complex_parabola_area(r) == pytest.approx(
        math.pi * (rho2 + 2.0 * rho2 ** 2), rel=1e-12)


def test_lawson_osserman_density_value():
    assert O.lawson_osserman_density() == pytest.approx(16.0 / 9.0, rel=1e-12)
    # area scales exactly as the fourth power for the degree-one cone
    assert O.lawson_osserman_area(6.0) == pytest.approx(
        16.0 * O.lawson_osserman_area(3.0), rel=1e-12)


def test_staircase_bands_and_cumulative_lengths():
    assert O.staircase_bands(1.0) == (pytest.approx(2.0 / 3.0),
                                      pytest.approx(5.0 / 6.0))
    assert [O.staircase_cumulative(j) for j in (1, 2, 3, 4)] == [1.0, 5.0, 9.0, 25.0]


def test_staircase_ball_length_matches_scene_helper():
    from farfield.scene import builtin_scene
    st = builtin_scene("staircase").staircase
    for r in (0.4, 1.0, 2.5, 9.0, 40.0):
        assert O.staircase_ball_length(r, 1.0) == pytest.approx(
            st.ball_length(r), rel=1e-12)


def test_mu_n_closed_forms():
    assert O.mu_n(1) == pytest.approx(2.0, abs=1e-12)
    assert O.mu_n(2) == pytest.approx(math.pi, abs=1e-12)
    assert O.mu_n(3) == pytest.approx(4.0 * math.pi / 3.0, abs=1e-12)
    assert O.mu_n(4) == pytest.approx(math.pi ** 2 / 2.0, abs=1e-12)


def test_signature_limits():
    assert O.signature("catenoid")["kind"] == "converges"
    assert O.signature("catenoid")["value"] == 2.0
    assert O.signature("helicoid")["kind"] == "diverges"
    assert O.signature("staircase", (1.0,))["kind"] == "no_limit"
    assert O.signature("alpha_cone", (3.0,))["value"] == pytest.approx(1.0)


def test_oracle_names_cover_library():
    assert set(O.oracle_names()) == {
        "plane", "plane_minus_ball", "parabola", "catenoid", "upper_catenoid",
        "alpha_cone", "helicoid", "staircase", "complex_parabola",
        "complex_cubic", "cubic_graph", "lawson_osserman"}
