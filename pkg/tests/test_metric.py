"""Inner-metric graphs and the normal embedding verdict at infinity."""

import math

import numpy as np
import pytest

from farfield.scene import builtin_scene
from farfield.metric import build_neighbor_graph, inner_distance, lne_at_infinity


@pytest.fixture(scope="module")
def catenoid_graph():
    return build_neighbor_graph(builtin_scene("catenoid"), outer=50.0, seed=0)


class TestNeighborGraph:
    def test_shape_and_bounds(self, catenoid_graph):
        g = catenoid_graph
        assert g.vertices.shape[1] == 3
        assert g.edges.shape[1] == 2
        assert len(g.weights) == len(g.edges)
        r = np.linalg.norm(g.vertices, axis=1)
        assert r.max() <= g.outer + 1e-9
        assert r.min() >= g.floor - 1e-9

    def test_weights_are_euclidean_lengths(self, catenoid_graph):
        g = catenoid_graph
        i, j = g.edges[:, 0], g.edges[:, 1]
        lens = np.linalg.norm(g.vertices[i] - g.vertices[j], axis=1)
        assert np.allclose(lens, g.weights, rtol=0, atol=1e-12)

    def test_periodic_seam_is_stitched(self, catenoid_graph):
        # the angular parameter wraps; edges must cross s=0 == s=2pi
        g = catenoid_graph
        s = g.params[:, 1]
        i, j = g.edges[:, 0], g.edges[:, 1]
        wrap = (np.minimum(s[i], s[j]) < 0.3) & \
               (np.maximum(s[i], s[j]) > 2 * math.pi - 0.3)
        assert wrap.sum() > 0

    def test_deterministic(self):
        sc = builtin_scene("catenoid")
        a = build_neighbor_graph(sc, outer=30.0, seed=7)
        b = build_neighbor_graph(sc, outer=30.0, seed=7)
        assert np.array_equal(a.vertices, b.vertices)
        assert np.array_equal(a.edges, b.edges)

    def test_unparameterized_scene_rejected(self):
        with pytest.raises(ValueError):
            build_neighbor_graph(builtin_scene("staircase"), outer=50.0)


class TestInnerDistance:
    def test_dominates_euclidean(self, catenoid_graph):
        g = catenoid_graph
        d = inner_distance(g, [0])[0]
        e = np.linalg.norm(g.vertices - g.vertices[0], axis=1)
        fin = np.isfinite(d)
        assert fin.all()
        assert np.all(d - e >= -1e-12)

    def test_triangle_inequality(self, catenoid_graph):
        g = catenoid_graph
        k = 1234
        d0 = inner_distance(g, [0])[0]
        dk = inner_distance(g, [k])[0]
        assert np.all(d0 <= d0[k] + dk + 1e-9)

    def test_multi_source_shape(self, catenoid_graph):
        d = inner_distance(catenoid_graph, [0, 1, 2])
        assert d.shape == (3, catenoid_graph.vertices.shape[0])


class TestLNEVerdicts:
    def test_plane_is_lne(self):
        rep = lne_at_infinity(builtin_scene("plane"), seed=0)
        assert rep.verdict == "lne"
        assert rep.C_bound is not None
        assert rep.C_bound <= math.pi * 1.1

    def test_punctured_plane_is_lne(self):
        rep = lne_at_infinity(builtin_scene("plane_minus_ball"), seed=0)
        assert rep.verdict == "lne"
        assert rep.C_bound <= math.pi * 1.1

    def test_catenoid_is_not_lne(self):
        rep = lne_at_infinity(builtin_scene("catenoid"), seed=0)
        assert rep.verdict == "not_lne"
        assert rep.C_bound is None
        assert all(g >= 1.5 for g in rep.growth)
        # the defect is between the two ends: witnesses straddle z=0
        w = rep.witnesses[-1]
        assert w.x[2] * w.y[2] < 0
        assert w.ratio > 10.0
        assert w.graph_dist >= w.euclid_dist

    def test_witness_ratio_consistent(self):
        rep = lne_at_infinity(builtin_scene("catenoid"), seed=1)
        assert rep.verdict == "not_lne"
        for w in rep.witnesses:
            assert w.ratio == pytest.approx(w.graph_dist / w.euclid_dist,
                                            rel=1e-9)
