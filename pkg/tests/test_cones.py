"""Blow-up clouds, tangent cones at infinity and at points, normal sets."""
import math

import numpy as np
import pytest

from farfield.cones import (InsufficientDirectionsError, blowup_cloud,
                            blowup_cloud_at_point, normal_set_infinity,
                            tangent_cone_at_point, tangent_cone_infinity)
from farfield.scene import builtin_scene


def test_blowup_reconstruct_inverts_exactly():
    scene = builtin_scene("catenoid")
    cloud = blowup_cloud(scene, (1e2, 1e3, 1e4), 128, seed=3)
    for bp in cloud[:64]:
        x = bp.reconstruct()
        assert np.linalg.norm(bp.direction - x / np.linalg.norm(x)) <= 1e-12
        assert abs(1.0 / np.linalg.norm(x) - bp.scale) <= 1e-12 * bp.scale


def test_blowup_at_point_reconstruct_inverts_exactly():
    scene = builtin_scene("catenoid")
    p = np.array([1.0, 0.0, 0.0])
    cloud = blowup_cloud_at_point(scene, p, (0.1, 0.03, 0.01), 128, seed=3)
    for bp in cloud[:64]:
        x = bp.reconstruct(p)
        v = x - p
        assert np.linalg.norm(bp.direction * np.linalg.norm(v) - v) <= 1e-12
        assert abs(np.linalg.norm(v) - bp.scale) <= 1e-12 * max(bp.scale, 1e-300)


def test_blowup_directions_are_unit():
    cloud = blowup_cloud(builtin_scene("parabola"), (1e2, 1e3, 1e4), 128, seed=1)
    dirs = np.array([bp.direction for bp in cloud])
    assert np.allclose(np.linalg.norm(dirs, axis=1), 1.0, atol=1e-12)


def test_catenoid_cone_at_infinity_is_horizontal_plane():
    est = tangent_cone_infinity(builtin_scene("catenoid"))
    assert est.is_linear_subspace
    assert est.two_sided
    assert est.fitted_subspace.dim == 2
    assert est.max_residual <= 1e-2
    # basis vectors have no vertical component
    assert np.max(np.abs(est.fitted_subspace.basis[2, :])) < 1e-3


def test_parabola_cone_at_infinity_is_one_sided_ray():
    est = tangent_cone_infinity(builtin_scene("parabola"))
    assert not est.is_linear_subspace
    assert not est.two_sided
    mean_dir = np.mean(est.directions, axis=0)
    assert mean_dir[1] > 0.99  # escapes along +y


def test_alpha_cone_at_infinity_is_not_linear():
    for alpha in (1.0, 3.0):
        est = tangent_cone_infinity(builtin_scene("alpha_cone", alpha))
        assert not est.is_linear_subspace


@pytest.mark.parametrize("name,p,dim", [
    ("plane", (0.0, 0.0, 0.0), 2),
    ("catenoid", (1.0, 0.0, 0.0), 2),
    ("parabola", (0.0, 0.0), 1),
])
def test_smooth_points_have_flat_tangent_cones(name, p, dim):
    est = tangent_cone_at_point(builtin_scene(name), np.array(p))
    assert est.is_linear_subspace
    assert est.fitted_subspace.dim == dim


def test_cone_vertex_is_not_flat():
    for alpha in (1.0, 3.0):
        est = tangent_cone_at_point(builtin_scene("alpha_cone", alpha),
                                    np.zeros(3))
        assert not est.is_linear_subspace


def test_catenoid_point_cone_spans_tangent_plane():
    # at (1, 0, 0) the tangent plane is spanned by e_z and e_y
    est = tangent_cone_at_point(builtin_scene("catenoid"),
                                np.array([1.0, 0.0, 0.0]))
    basis = est.fitted_subspace.basis
    normal = np.array([1.0, 0.0, 0.0])
    assert np.max(np.abs(normal @ basis)) < 0.05


def test_insufficient_directions_raises():
    with pytest.raises(InsufficientDirectionsError):
        tangent_cone_infinity(builtin_scene("catenoid"), per_level=8)


def test_cone_estimate_is_seed_deterministic():
    a = tangent_cone_infinity(builtin_scene("catenoid"), seed=5)
    b = tangent_cone_infinity(builtin_scene("catenoid"), seed=5)
    assert a.directions.tobytes() == b.directions.tobytes()
    assert a.max_residual == b.max_residual


def test_normal_set_single_plane_cases():
    for name in ("plane", "catenoid", "cubic_graph"):
        est = normal_set_infinity(builtin_scene(name))
        assert est.is_single_plane, name
        # the limiting tangent plane is horizontal
        assert np.max(np.abs(est.plane.basis[2, :])) < 0.05


def test_normal_set_lawson_osserman_is_not_single():
    est = normal_set_infinity(builtin_scene("lawson_osserman"))
    assert not est.is_single_plane
    assert est.max_pairwise_angle > 0.5
