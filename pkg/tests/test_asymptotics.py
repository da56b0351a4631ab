"""Density limits at infinity and at points, profiles, monotonicity."""
import math

import numpy as np
import pytest

from farfield.asymptotics import (PointNotOnSetError, check_monotonicity,
                                  density_at_infinity, density_at_point,
                                  profile)
from farfield.oracles import staircase_bands
from farfield.scene import builtin_scene


def test_parabola_density_at_infinity_converges_to_one():
    v = density_at_infinity(builtin_scene("parabola"))
    assert v.kind == "converges"
    assert v.value == pytest.approx(1.0, abs=0.01)


def test_helicoid_diverges_even_on_a_short_grid():
    v = density_at_infinity(builtin_scene("helicoid"), r_lo=10.0, r_hi=1000.0,
                            k=10)
    assert v.kind == "diverges"


def test_staircase_has_no_limit_with_separated_bands():
    v = density_at_infinity(builtin_scene("staircase"))
    assert v.kind == "no_limit"
    lo_band, hi_band = v.liminf_band, v.limsup_band
    assert lo_band.hi < hi_band.lo
    want_lo, want_hi = staircase_bands(1.0)
    assert lo_band.lo <= want_lo <= lo_band.hi or \
        abs((lo_band.lo + lo_band.hi) / 2.0 - want_lo) < 0.02 * want_lo
    assert hi_band.lo <= want_hi <= hi_band.hi or \
        abs((hi_band.lo + hi_band.hi) / 2.0 - want_hi) < 0.02 * want_hi


@pytest.mark.parametrize("name,p,want", [
    ("plane", (0.0, 0.0, 0.0), 1.0),
    ("catenoid", (1.0, 0.0, 0.0), 1.0),
    ("parabola", (0.0, 0.0), 1.0),
    ("alpha_cone", (0.0, 0.0, 0.0), math.sqrt(2.0)),
])
def test_density_at_point(name, p, want):
    v = density_at_point(builtin_scene(name), np.array(p))
    assert v.kind == "converges"
    assert v.value == pytest.approx(want, abs=0.01)


def test_density_at_point_rejects_points_off_the_set():
    with pytest.raises(PointNotOnSetError):
        density_at_point(builtin_scene("catenoid"), np.array([0.0, 0.0, 0.0]))


def test_profile_shape_and_radii():
    prof = profile(builtin_scene("parabola"), np.zeros(2), 1.0, 100.0, k=7)
    assert prof.radii.shape == prof.theta.shape == prof.err.shape == (7,)
    assert prof.radii[0] == pytest.approx(1.0)
    assert prof.radii[-1] == pytest.approx(100.0)
    assert np.all(np.diff(np.log(prof.radii)) > 0)
    assert np.all(prof.err >= 0)


def test_profile_of_a_cone_is_constant():
    prof = profile(builtin_scene("alpha_cone", 3.0), np.zeros(3), 0.5, 64.0, k=9)
    assert np.all(np.abs(prof.theta - 1.0) <= 3.0 * prof.err + 1e-6)


def test_monotonicity_plane_is_constant_and_ge_one():
    rep = check_monotonicity(builtin_scene("plane"), np.zeros(3),
                             r_lo=0.5, r_hi=64.0, k=9)
    assert rep.nondecreasing and rep.constant and rep.ge_one
    assert rep.cone_consistent


def test_monotonicity_parabola_profile_decreases():
    rep = check_monotonicity(builtin_scene("parabola"), np.zeros(2))
    assert not rep.nondecreasing
    assert rep.max_violation > 0


def test_monotonicity_rim_point_density_below_one():
    scene = builtin_scene("plane_minus_ball")
    rep = check_monotonicity(scene, np.array([1.0, 0.0, 0.0]),
                             r_lo=0.25, r_hi=32.0, k=9)
    assert not rep.ge_one


def test_seed_determinism_of_verdicts():
    a = density_at_infinity(builtin_scene("parabola"), seed=4)
    b = density_at_infinity(builtin_scene("parabola"), seed=4)
    assert a.value == b.value and a.err == b.err
