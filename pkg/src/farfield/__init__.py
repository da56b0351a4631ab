"""Numerical geometry of unbounded sets: densities at infinity and at points,
tangent cones, relative multiplicities, and metric regularity checks for
scenes described by parameter charts."""

__version__ = "0.1.0"

from .expr import parse_expr, evaluate, jacobian, to_text, ExprError
from .scene import (Scene, Chart, SceneMeta, parse_scene, builtin_scene,
                    builtin_library, load_scene, sample_points, sample_near,
                    project_to_scene, SceneError, EmptyIntersectionError)
from .measure import BallQuery, MeasureEstimate, area, mu_ball
from .asymptotics import (LimitVerdict, DensityProfile, MonotonicityReport,
                          density_at_infinity, density_at_point, profile,
                          check_monotonicity, PointNotOnSetError)
from .cones import (BlowupPoint, Subspace, ConeEstimate, PlaneLimitEstimate,
                    InsufficientDirectionsError, blowup_cloud,
                    blowup_cloud_at_point, tangent_cone_infinity,
                    tangent_cone_at_point, normal_set_infinity)
from .multiplicity import (ConicalShell, MultiplicityReport, KRComponent,
                           KRReport, EmptyShellError, relative_multiplicity,
                           simple_directions, kr_check, degree_density_check)
from .metric import (NeighborGraph, Witness, LNEReport, build_neighbor_graph,
                     inner_distance, lne_at_infinity)
from .classify import (Classification, MonotoneEvidence, MoserGraphReport,
                       classify, moser_graph_check, evidence_point)

__all__ = [
    "__version__",
    "parse_expr", "evaluate", "jacobian", "to_text", "ExprError",
    "Scene", "Chart", "SceneMeta", "parse_scene", "builtin_scene",
    "builtin_library", "load_scene", "sample_points", "sample_near",
    "project_to_scene", "SceneError", "EmptyIntersectionError",
    "BallQuery", "MeasureEstimate", "area", "mu_ball",
    "LimitVerdict", "DensityProfile", "MonotonicityReport",
    "density_at_infinity", "density_at_point", "profile",
    "check_monotonicity", "PointNotOnSetError",
    "BlowupPoint", "Subspace", "ConeEstimate", "PlaneLimitEstimate",
    "InsufficientDirectionsError", "blowup_cloud", "blowup_cloud_at_point",
    "tangent_cone_infinity", "tangent_cone_at_point", "normal_set_infinity",
    "ConicalShell", "MultiplicityReport", "KRComponent", "KRReport",
    "EmptyShellError", "relative_multiplicity", "simple_directions",
    "kr_check", "degree_density_check",
    "NeighborGraph", "Witness", "LNEReport", "build_neighbor_graph",
    "inner_distance", "lne_at_infinity",
    "Classification", "MonotoneEvidence", "MoserGraphReport",
    "classify", "moser_graph_check", "evidence_point",
]
