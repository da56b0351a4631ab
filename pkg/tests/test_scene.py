"""Scene text format, builtin library, sampling, and projection tests."""
import math

import numpy as np
import pytest

from farfield.scene import (DimensionMismatchError, SceneParseError, SceneError,
                            UnknownBuiltinError, builtin_library, builtin_scene,
                            load_scene, parse_scene, project_to_scene,
                            sample_near, sample_points)

TILTED_PLANE = """
scene "tilted plane" {
  ambient 3;
  dim 2;
  chart {
    params (u, v);
    domain {
      u in (-100, 100);
      v in (-100, 100);
    }
    map (u, v, u/2);
  }
  meta { definable = true; minimal = true; monotone_at = (0, 0, 0); }
}
"""


def test_builtin_library_names_and_dims():
    lib = builtin_library()
    assert [s.name for s in lib] == [
        "plane", "plane_minus_ball", "parabola", "catenoid", "upper_catenoid",
        "alpha_cone(1)", "helicoid", "staircase(1)", "complex_parabola",
        "complex_cubic", "cubic_graph", "lawson_osserman"]
    for s in lib:
        assert 1 <= s.dim <= 4 and s.dim <= s.ambient <= 8


def test_parse_scene_roundtrip_fields():
    s = parse_scene(TILTED_PLANE)
    assert s.name == "tilted plane"
    assert s.ambient == 3 and s.dim == 2
    assert s.meta.minimal and s.meta.monotone_at == (0.0, 0.0, 0.0)
    pts = sample_points(s, 2.0, 4.0, 256, seed=1).points
    assert np.allclose(pts[:, 2], pts[:, 0] / 2.0, atol=1e-12)


def test_parse_scene_builtin_reference():
    s = parse_scene('scene "c" { builtin alpha_cone(3); }')
    assert s.name == "c"
    assert len(s.charts) == 2


def test_parse_error_carries_offset():
    bad = 'scene "x" { ambient 3; dim 2; chart { params (t); '
    with pytest.raises(SceneParseError) as exc:
        parse_scene(bad)
    assert exc.value.offset is not None


def test_bad_map_expression_rejected():
    bad = ('scene "x" { ambient 2; dim 1; chart { params (t); '
           'domain { t in (0, 1); } map (t, frob(t)); } }')
    with pytest.raises(SceneParseError):
        parse_scene(bad)


def test_chart_arity_must_match_ambient():
    bad = ('scene "x" { ambient 3; dim 1; chart { params (t); '
           'domain { t in (0, 1); } map (t, t); } }')
    with pytest.raises(DimensionMismatchError):
        parse_scene(bad)


def test_unknown_builtin_rejected():
    with pytest.raises(UnknownBuiltinError):
        builtin_scene("klein_bottle")


def test_load_scene_parses_parameterized_names():
    s = load_scene("alpha_cone(3)")
    assert s.name == "alpha_cone(3)"
    s = load_scene(" staircase(2) ")
    assert s.staircase is not None and s.staircase.a1 == 2.0


def test_load_scene_reads_files(tmp_path):
    p = tmp_path / "tilted.scene"
    p.write_text(TILTED_PLANE)
    s = load_scene(str(p))
    assert s.name == "tilted plane"


def test_sample_points_respects_annulus():
    for name in ("catenoid", "parabola", "staircase", "lawson_osserman"):
        s = builtin_scene(name)
        res = sample_points(s, 10.0, 20.0, 512, seed=3)
        norms = np.linalg.norm(res.points, axis=1)
        assert len(res.points) >= 256
        assert norms.min() >= 10.0 - 1e-9 and norms.max() <= 20.0 + 1e-9


def test_sample_points_seed_reproducible_bitwise():
    s = builtin_scene("catenoid")
    a = sample_points(s, 5.0, 9.0, 256, seed=11).points
    b = sample_points(s, 5.0, 9.0, 256, seed=11).points
    c = sample_points(s, 5.0, 9.0, 256, seed=12).points
    assert a.tobytes() == b.tobytes()
    assert a.tobytes() != c.tobytes()


def test_sample_near_stays_in_window():
    s = builtin_scene("catenoid")
    p = np.array([1.0, 0.0, 0.0])
    res = sample_near(s, p, 0.05, 0.2, 128, seed=5)
    d = np.linalg.norm(res.points - p, axis=1)
    assert len(d) >= 32
    assert d.min() >= 0.05 - 1e-9 and d.max() <= 0.2 + 1e-9


def test_sample_near_crosses_periodic_seam():
    # the seam at s=0 must not leave a one-sided hole around (1, 0, 0)
    s = builtin_scene("catenoid")
    res = sample_near(s, np.array([1.0, 0.0, 0.0]), 0.01, 0.05, 256, seed=2)
    assert (res.points[:, 1] > 0).any() and (res.points[:, 1] < 0).any()


def test_project_to_scene_finds_nearest_point():
    s = builtin_scene("catenoid")
    pr = project_to_scene(s, np.array([0.0, 0.0, 0.0]))
    # nearest catenoid point to the axis lies on the waist circle
    assert abs(np.linalg.norm(pr.point[:2]) - 1.0) < 1e-3
    assert abs(pr.point[2]) < 1e-3
    assert pr.dist == pytest.approx(1.0, abs=1e-3)


def test_scene_hash_tracks_source():
    a = parse_scene(TILTED_PLANE)
    b = parse_scene(TILTED_PLANE)
    c = parse_scene(TILTED_PLANE.replace("u/2", "u/3"))
    assert a.scene_hash() == b.scene_hash()
    assert a.scene_hash() != c.scene_hash()


def test_staircase_geometry_helpers():
    st = builtin_scene("staircase").staircase
    assert st.interval(1) == (0.0, 1.0)
    assert st.interval(2) == (1.0, 3.0)
    assert st.heights(1) == (0.0,)
    assert st.heights(2) == (-0.5, 0.5)
    assert st.ball_length(0.25) == pytest.approx(0.25)
