"""Bernstein-type classification of unbounded scenes.

The affine verdict needs two pieces of evidence: the density at infinity
converges to 1, and the scene carries monotonicity evidence (either a
declared base point or a numeric profile check).  Everything else collected
here (cone at infinity, limiting tangent planes, LNE, the multiplicity
decomposition) is reported alongside so a failed hypothesis can be named.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .scene import Scene, sample_points, project_to_scene, SceneError
from .expr import Var
from .asymptotics import (LimitVerdict, MonotonicityReport, density_at_infinity,
                          density_at_point, check_monotonicity)
from .cones import (ConeEstimate, PlaneLimitEstimate, InsufficientDirectionsError,
                    tangent_cone_infinity, tangent_cone_at_point,
                    normal_set_infinity)
from .multiplicity import KRReport, kr_check
from .metric import LNEReport, lne_at_infinity

DEFAULT_TOL = 0.05
POINT_TOL = 0.05        # |theta(p) - 1| below this triggers the smooth-point check
FAR_ANNULUS = (1.0e4, 2.0e4)


@dataclass(frozen=True)
class MonotoneEvidence:
    """Why we do (or do not) believe the monotonicity formula holds."""
    source: str                                # "declared" | "numeric"
    point: np.ndarray
    passed: bool
    report: Optional[MonotonicityReport]
    point_density: Optional[LimitVerdict]
    point_cone: Optional[ConeEstimate]
    detail: Optional[str]


@dataclass(frozen=True)
class MoserGraphReport:
    sup_gradient: tuple                        # sampled sup ||Du|| per annulus
    bounded_derivative: bool
    normal_single_plane: bool
    monotone_declared: bool
    implies_affine: bool


@dataclass(frozen=True)
class Classification:
    scene: str
    verdict: str                               # affine_subspace | not_affine | inconclusive
    failed: tuple = ()
    missing: tuple = ()
    theta_inf: Optional[LimitVerdict] = None
    monotone: Optional[MonotoneEvidence] = None
    cone: Optional[ConeEstimate] = None
    normal_planes: Optional[PlaneLimitEstimate] = None
    lne: Optional[LNEReport] = None
    kr: Optional[KRReport] = None
    basis: Optional[np.ndarray] = None         # (dim, ambient) rows when affine
    residual: Optional[float] = None
    route_consistent: Optional[bool] = None    # LNE + linear cone, on affine verdicts
    definable: bool = True
    note: str = ""


def evidence_point(scene: Scene, seed: int = 0) -> np.ndarray:
    """Base point for monotonicity evidence: the declared one if any, else the
    cone vertex, else the scene point nearest the origin."""
    if scene.meta.monotone_at is not None:
        return np.asarray(scene.meta.monotone_at, dtype=float)
    if scene.meta.cone_vertex is not None:
        return np.asarray(scene.meta.cone_vertex, dtype=float)
    return project_to_scene(scene, np.zeros(scene.ambient), seed=seed).point


def _monotone_evidence(scene: Scene, tol: float, seed: int) -> MonotoneEvidence:
    p = evidence_point(scene, seed=seed)
    if scene.meta.monotone_at is not None:
        return MonotoneEvidence("declared", p, True, None, None, None,
                                "monotonicity formula asserted by scene metadata")
    rep = check_monotonicity(scene, p, seed=seed)
    if not rep.nondecreasing:
        return MonotoneEvidence(
            "numeric", p, False, rep, None, None,
            f"theta(r) decreases along the profile (violation {rep.max_violation:.3g})")
    if not rep.ge_one:
        return MonotoneEvidence(
            "numeric", p, False, rep, None, None,
            "theta < 1 on small balls at the evidence point")
    if not rep.cone_consistent:
        return MonotoneEvidence(
            "numeric", p, False, rep, None, None,
            "profile not constant at the declared cone vertex")
    # profile alone cannot distinguish a singular point of density 1; cross
    # check that density 1 at the base point comes with a flat tangent cone
    dp = density_at_point(scene, p, seed=seed)
    cone_p = None
    if dp.kind == "converges" and abs(dp.value - 1.0) <= POINT_TOL + dp.err:
        cone_p = tangent_cone_at_point(scene, p, seed=seed)
        flat = cone_p.is_linear_subspace and cone_p.fitted_subspace is not None \
            and cone_p.fitted_subspace.dim == scene.dim
        if not flat:
            return MonotoneEvidence(
                "numeric", p, False, rep, dp, cone_p,
                "density 1 at the evidence point but its tangent cone is not a plane")
    return MonotoneEvidence("numeric", p, True, rep, dp, cone_p,
                            "profile nondecreasing, >= 1, vertex-consistent")


def _theta_failures(theta: LimitVerdict, tol: float):
    if theta.kind == "diverges":
        why = f" ({theta.reason})" if theta.reason else ""
        return [f"density at infinity diverges{why}"], []
    if theta.kind == "no_limit":
        return ["density at infinity has no limit (liminf < limsup)"], []
    if theta.kind == "inconclusive":
        return [], ["density at infinity inconclusive"]
    if abs(theta.value - 1.0) > tol + theta.err:
        return [f"density at infinity = {theta.value:.4g} != 1"], []
    return [], []


def _affine_fit(scene: Scene, seed: int):
    """Total least squares subspace on far samples; max relative residual."""
    res = sample_points(scene, FAR_ANNULUS[0], FAR_ANNULUS[1], 4096, seed=seed)
    pts = res.points
    mean = pts.mean(axis=0)
    _, _, vt = np.linalg.svd(pts - mean, full_matrices=False)
    basis = vt[:scene.dim]
    perp = (pts - mean) - (pts - mean) @ basis.T @ basis
    scale = np.maximum(1.0, np.linalg.norm(pts, axis=1))
    resid = float(np.max(np.linalg.norm(perp, axis=1) / scale))
    return basis, resid


def classify(scene: Scene, tol: float = DEFAULT_TOL, seed: int = 0,
             deep: bool = False) -> Classification:
    """Affine / not-affine / inconclusive verdict with named hypotheses.

    deep additionally gathers LNE, limiting tangent planes, and (in ambient
    dimension <= 2 per component machinery) the multiplicity decomposition,
    so that every violated hypothesis shows up in the failed list.
    """
    failed: list[str] = []
    missing: list[str] = []
    theta = density_at_infinity(scene, seed=seed)
    f, m = _theta_failures(theta, tol)
    failed += f
    missing += m
    theta_one = theta.kind == "converges" and abs(theta.value - 1.0) <= tol + theta.err

    mono = _monotone_evidence(scene, tol, seed)
    if not mono.passed:
        failed.append(f"monotonicity: {mono.detail}")

    cone = None
    try:
        cone = tangent_cone_infinity(scene, seed=seed)
    except (InsufficientDirectionsError, SceneError) as exc:
        missing.append(f"cone at infinity unavailable ({exc})")

    lne = kr = planes = None
    if deep:
        try:
            lne = lne_at_infinity(scene, seed=seed)
        except (ValueError, SceneError):
            missing.append("inner metric unavailable")
        try:
            planes = normal_set_infinity(scene, seed=seed)
        except (ValueError, SceneError):
            missing.append("limiting tangent planes unavailable")
        if scene.dim <= 2 and cone is not None:
            try:
                kr = kr_check(scene, seed=seed, cone=cone, lhs=theta)
            except (NotImplementedError, ValueError, SceneError):
                missing.append("multiplicity decomposition unavailable")
        if lne is not None and lne.verdict == "not_lne":
            failed.append("not LNE at infinity")
        if cone is not None and not cone.is_linear_subspace:
            failed.append("tangent cone at infinity is not a linear subspace")
        if kr is not None:
            ks = sorted({c.k for c in kr.components})
            if any(k > 1 for k in ks):
                failed.append(f"relative multiplicity k={max(ks)} > 1")

    basis = resid = route = None
    if theta_one and mono.passed:
        verdict = "affine_subspace"
        basis, resid = _affine_fit(scene, seed)
        if lne is None:
            try:
                lne = lne_at_infinity(scene, seed=seed)
            except (ValueError, SceneError):
                missing.append("inner metric unavailable")
        route = bool(lne is not None and lne.verdict == "lne"
                     and cone is not None and cone.is_linear_subspace)
        note = "numerically consistent with affine; definability and " \
               "completeness are asserted metadata, not verified"
        if not route:
            note += "; warning: LNE/linear-cone route disagrees"
    elif failed:
        verdict = "not_affine"
        note = "violates: " + "; ".join(failed)
    else:
        verdict = "inconclusive"
        note = "unresolved: " + "; ".join(missing)
    if not scene.meta.definable:
        note += "; scene declared non-definable"

    return Classification(scene=scene.name, verdict=verdict,
                          failed=tuple(failed), missing=tuple(missing),
                          theta_inf=theta, monotone=mono, cone=cone,
                          normal_planes=planes, lne=lne, kr=kr,
                          basis=basis, residual=resid, route_consistent=route,
                          definable=scene.meta.definable, note=note)


def _is_graph(scene: Scene) -> bool:
    if len(scene.charts) != 1 or scene.staircase is not None:
        return False
    ch = scene.charts[0]
    return all(isinstance(e, Var) and e.name == ch.params[i]
               for i, e in enumerate(ch.mapping[:scene.dim]))


def moser_graph_check(scene: Scene, tol: float = 0.1, seed: int = 0,
                      levels=(1.0e1, 1.0e2, 1.0e3, 1.0e4)) -> MoserGraphReport:
    """Bounded-slope route for graphs: sup ||Du|| stable across annuli, a
    single limiting tangent plane, and declared monotonicity together imply
    the affine verdict."""
    if not _is_graph(scene):
        raise SceneError(f"scene {scene.name!r} is not presented as a graph")
    ch = scene.charts[0]
    sups = []
    for li, R in enumerate(levels):
        res = sample_points(scene, R, 2.0 * R, 1024, seed=seed + 17 * li)
        J = ch.jacobians(res.params, check=False)
        du = J[:, scene.dim:, :]
        sups.append(float(np.max(np.linalg.svd(du, compute_uv=False))))
    bounded = sups[-1] <= (1.0 + tol) * max(sups[:-1])
    planes = normal_set_infinity(scene, seed=seed)
    declared = scene.meta.monotone_at is not None
    return MoserGraphReport(sup_gradient=tuple(sups),
                            bounded_derivative=bounded,
                            normal_single_plane=planes.is_single_plane,
                            monotone_declared=declared,
                            implies_affine=bool(bounded and planes.is_single_plane
                                                and declared))
