"""Conical shells, sheet counts, and the density bookkeeping check."""

import numpy as np
import pytest

from farfield.scene import builtin_scene
from farfield.cones import tangent_cone_infinity
from farfield.multiplicity import (
    ConicalShell,
    EmptyShellError,
    degree_density_check,
    kr_check,
    relative_multiplicity,
    simple_directions,
)


class TestConicalShell:
    def test_normalizes_direction(self):
        sh = ConicalShell((3.0, 4.0, 0.0), 0.1, 10.0)
        assert np.allclose(sh.direction, [0.6, 0.8, 0.0])

    def test_contains_on_axis(self):
        sh = ConicalShell((1.0, 0.0), 0.1, 10.0)
        pts = np.array([[50.0, 0.0], [5.0, 0.0], [-50.0, 0.0]])
        assert sh.contains(pts).tolist() == [True, False, False]

    def test_contains_angular_cut(self):
        sh = ConicalShell((1.0, 0.0), 0.1, 10.0)
        # perpendicular offset just inside / outside eta * t
        pts = np.array([[100.0, 9.0], [100.0, 11.0]])
        assert sh.contains(pts).tolist() == [True, False]

    def test_eta_range_validated(self):
        with pytest.raises(ValueError):
            ConicalShell((1.0, 0.0), 0.7, 10.0)
        with pytest.raises(ValueError):
            ConicalShell((1.0, 0.0), -0.1, 10.0)

    def test_zero_direction_rejected(self):
        with pytest.raises(ValueError):
            ConicalShell((0.0, 0.0), 0.1, 10.0)


class TestRelativeMultiplicity:
    def test_plane_single_sheet(self):
        rep = relative_multiplicity(builtin_scene("plane"), (1.0, 0.0, 0.0))
        assert rep.k == 1
        assert rep.stable
        bands = [b for b, _ in rep.clusters_per_radius]
        assert bands == [rep.R_used, 2 * rep.R_used, 4 * rep.R_used]

    def test_catenoid_two_sheets(self):
        rep = relative_multiplicity(builtin_scene("catenoid"), (1.0, 0.0, 0.0),
                                    eta=0.1, R=100.0)
        assert rep.k == 2
        assert rep.stable
        assert rep.R_used == 100.0

    def test_parabola_two_arms(self):
        rep = relative_multiplicity(builtin_scene("parabola"), (0.0, 1.0))
        assert rep.k == 2
        assert rep.stable

    def test_off_cone_direction_raises(self):
        with pytest.raises(EmptyShellError):
            relative_multiplicity(builtin_scene("plane"), (0.0, 0.0, 1.0))

    def test_branches_entering_slowly_push_R_out(self):
        # both branches sit ~R^(-1/2) from the limit ray, so the base band
        # stays marginal until R grows past the aperture scale
        sc = builtin_scene("complex_parabola")
        cone = tangent_cone_infinity(sc, seed=0)
        v = simple_directions(sc, cone, count=5, seed=0)[1]
        rep = relative_multiplicity(sc, v, seed=0)
        assert rep.k == 2
        assert rep.stable
        assert rep.R_used > rep.R_requested


class TestSimpleDirections:
    def test_unit_norm_and_count(self):
        sc = builtin_scene("complex_parabola")
        dirs = simple_directions(sc, count=5, seed=0)
        assert dirs.shape == (5, 4)
        assert np.allclose(np.linalg.norm(dirs, axis=1), 1.0, atol=1e-9)

    def test_spread(self):
        sc = builtin_scene("complex_parabola")
        dirs = simple_directions(sc, count=5, seed=0)
        d = np.linalg.norm(dirs[:, None, :] - dirs[None, :, :], axis=2)
        np.fill_diagonal(d, np.inf)
        assert d.min() > 0.5

    def test_deterministic(self):
        sc = builtin_scene("complex_parabola")
        a = simple_directions(sc, count=5, seed=3)
        b = simple_directions(sc, count=5, seed=3)
        assert np.array_equal(a, b)


class TestKRCheck:
    def test_parabola_books_balance(self):
        rep = kr_check(builtin_scene("parabola"))
        assert rep.agree
        assert rep.lhs.kind == "converges"
        assert len(rep.components) == 1
        comp = rep.components[0]
        assert comp.k == 2
        assert comp.cone_slice_measure == pytest.approx(1.0, abs=1e-9)
        assert rep.rhs == pytest.approx(1.0, abs=0.02)
        assert abs(rep.lhs.value - rep.rhs) <= 3.0 * rep.combined_error

    def test_high_dim_not_implemented(self):
        with pytest.raises(NotImplementedError):
            kr_check(builtin_scene("lawson_osserman"))


class TestDegreeDensity:
    def test_complex_parabola_degree_two(self):
        out = degree_density_check(builtin_scene("complex_parabola"), 2)
        assert out["matches_degree"]
        assert out["declared_degree"] == 2
        assert out["theta_inf"].kind == "converges"
        assert out["theta_inf"].value == pytest.approx(2.0, abs=0.04)

    def test_wrong_degree_rejected(self):
        out = degree_density_check(builtin_scene("complex_parabola"), 3)
        assert not out["matches_degree"]
