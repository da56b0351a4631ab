"""Spherical blow-ups and tangent cone estimation.

At infinity the blow-up sends x to (x/|x|, 1/|x|); directions sampled from
annuli [R, 2R] at increasing R are clustered on the sphere, each cluster's
center is extrapolated in 1/R, and the extrapolated directions are fitted
with a minimal linear subspace by total least squares.  The same pipeline
runs on shrinking annuli for tangent cones at a point.  normal_set_infinity
tracks limits of tangent n-planes instead of limits of points, with the
Grassmannian metric (largest principal angle).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .scene import Scene, sample_points, sample_near, project_to_scene

__all__ = [
    "BlowupPoint", "Subspace", "ConeEstimate", "PlaneLimitEstimate",
    "InsufficientDirectionsError", "blowup_cloud", "blowup_cloud_at_point",
    "tangent_cone_infinity", "tangent_cone_at_point", "normal_set_infinity",
]

LEVELS_INFINITY = (1e2, 1e3, 1e4, 1e5)
LEVELS_POINT = (1e-1, 3e-2, 1e-2, 3e-3)
LEVELS_NORMAL = (1e3, 1e4, 1e5, 1e6)


class InsufficientDirectionsError(RuntimeError):
    pass


@dataclass(frozen=True)
class BlowupPoint:
    direction: np.ndarray    # unit vector on S^{m-1}
    scale: float             # 1/|x| at infinity, |x - p| at a point
    source: np.ndarray       # the sample x itself

    def reconstruct(self, p: Optional[np.ndarray] = None) -> np.ndarray:
        """Invert the blow-up map."""
        if p is None:
            return self.direction / self.scale
        return p + self.scale * self.direction


@dataclass(frozen=True)
class Subspace:
    dim: int
    basis: np.ndarray        # (m, dim), orthonormal columns

    def project(self, v: np.ndarray) -> np.ndarray:
        return (v @ self.basis) @ self.basis.T


@dataclass(frozen=True)
class ConeEstimate:
    directions: np.ndarray               # (N, m) unit rows, the estimated link
    fitted_subspace: Optional[Subspace]
    max_residual: float
    is_linear_subspace: bool
    two_sided: bool
    levels: tuple
    level_counts: tuple
    extrapolation_residual: float
    antipodal_gap: float = 0.0


@dataclass(frozen=True)
class PlaneLimitEstimate:
    frames: np.ndarray                   # (N, m, n) top-level tangent frames
    max_pairwise_angle: float
    is_single_plane: bool
    plane: Optional[Subspace]
    extrapolation_residual: float
    skipped_singular: int
    levels: tuple


def blowup_cloud(scene: Scene, R_levels, per_level: int,
                 seed: int = 0) -> list[BlowupPoint]:
    """Blow-up points from annuli [R, 2R] for each level R."""
    R_levels = [float(R) for R in R_levels]
    if len(R_levels) < 3 or any(b <= a for a, b in zip(R_levels, R_levels[1:])):
        raise ValueError("need >= 3 strictly increasing levels")
    out = []
    for li, R in enumerate(R_levels):
        res = sample_points(scene, R, 2.0 * R, per_level, seed=seed + 7 * li)
        norms = np.linalg.norm(res.points, axis=1)
        for x, nr in zip(res.points, norms):
            out.append(BlowupPoint(x / nr, 1.0 / nr, x))
    return out


def blowup_cloud_at_point(scene: Scene, p, r_levels, per_level: int,
                          seed: int = 0) -> list[BlowupPoint]:
    """Blow-up at p from annuli [r, 2r] for each (decreasing) level r."""
    p = np.asarray(p, dtype=float)
    out = []
    for li, r in enumerate(r_levels):
        res = sample_near(scene, p, float(r), 2.0 * float(r), per_level,
                          seed=seed + 7 * li)
        diff = res.points - p
        norms = np.linalg.norm(diff, axis=1)
        keep = norms > 0
        for x, v, nr in zip(res.points[keep], diff[keep], norms[keep]):
            out.append(BlowupPoint(v / nr, nr, x))
    return out


def _greedy_net(dirs: np.ndarray, eps: float) -> np.ndarray:
    """Greedy eps-net (chordal metric) over unit rows; deterministic order."""
    centers: list[int] = []
    eps2 = eps * eps
    for i in range(len(dirs)):
        u = dirs[i]
        if centers:
            d2 = np.sum((dirs[centers] - u) ** 2, axis=1)
            if np.min(d2) <= eps2:
                continue
        centers.append(i)
    return dirs[centers].copy()


def _extrapolate_clusters(level_dirs: list[np.ndarray], scales: np.ndarray,
                          eps: float) -> tuple[np.ndarray, float]:
    """Anchor clusters at the last (closest-to-limit) level, assign every
    level's directions to the nearest anchor, and extrapolate the per-level
    Voronoi means linearly in the scale.  Returns (directions, residual)."""
    anchors = _greedy_net(level_dirs[-1], eps)
    L = len(level_dirs)
    K = len(anchors)
    means = np.full((L, K, anchors.shape[1]), np.nan)
    for li, dirs in enumerate(level_dirs):
        owner = np.argmax(dirs @ anchors.T, axis=1)
        for k in range(K):
            sel = owner == k
            if np.count_nonzero(sel) >= 2:
                v = dirs[sel].mean(axis=0)
                nv = np.linalg.norm(v)
                if nv > 0:
                    means[li, k] = v / nv
    # clusters too sparse to extrapolate are dropped rather than guessed
    kept: list[np.ndarray] = []
    resid = 0.0
    A = np.column_stack([np.ones(L), scales])
    for k in range(K):
        ok = np.isfinite(means[:, k, 0])
        if np.count_nonzero(ok) < 3:
            continue
        coef, *_ = np.linalg.lstsq(A[ok], means[ok, k], rcond=None)
        u = coef[0]
        nu = np.linalg.norm(u)
        if nu == 0:
            continue
        kept.append(u / nu)
        fit = A[ok] @ coef
        resid = max(resid, float(np.max(np.linalg.norm(fit - means[ok, k],
                                                       axis=1))))
    if not kept:
        raise InsufficientDirectionsError(
            "no direction cluster persisted across enough levels")
    return np.stack(kept), resid


def _tls_min_subspace(dirs: np.ndarray, tol: float) -> tuple[Subspace, float]:
    """Smallest-dimension subspace whose worst direction residual is <= tol
    (falls back to the full span)."""
    m = dirs.shape[1]
    _, _, vt = np.linalg.svd(dirs, full_matrices=True)
    for d in range(1, m + 1):
        basis = vt[:d].T
        resid = float(np.max(np.linalg.norm(dirs - (dirs @ basis) @ basis.T,
                                            axis=1)))
        if resid <= tol or d == m:
            return Subspace(d, basis), resid
    raise AssertionError("unreachable")


def _antipodal_gap(dirs: np.ndarray) -> float:
    """Worst-case distance from -u to the direction set."""
    d2 = np.sum((dirs[:, None, :] + dirs[None, :, :]) ** 2, axis=2)
    return float(np.max(np.sqrt(np.min(d2, axis=1))))


def _cone_from_cloud(cloud: list[BlowupPoint], n: int, m: int, tol: float,
                     levels: tuple, level_scales) -> ConeEstimate:
    # assign each sample to the nearest level in log-scale; order levels by
    # decreasing scale so the last entry is nearest the limit
    level_scales = np.asarray(level_scales, dtype=float)
    order = np.argsort(level_scales)[::-1]
    logs = np.log(level_scales[order])
    all_dirs = np.stack([bp.direction for bp in cloud])
    all_scales = np.array([bp.scale for bp in cloud])
    owner = np.argmin(np.abs(np.log(all_scales)[:, None] - logs[None, :]),
                      axis=1)
    level_dirs = [all_dirs[owner == li] for li in range(len(logs))]
    counts = tuple(len(d) for d in level_dirs)
    if any(c < 8 * n for c in counts):
        raise InsufficientDirectionsError(
            f"level direction counts {counts} below 8*n = {8 * n}")
    scales = np.array([float(np.mean(all_scales[owner == li]))
                       for li in range(len(logs))])
    eps = 0.5 * tol
    dirs, extrap_resid = _extrapolate_clusters(level_dirs, scales, eps)
    sub, tls_resid = _tls_min_subspace(dirs, max(tol, extrap_resid))
    max_residual = tls_resid + extrap_resid
    # with finitely many sampled directions, symmetry below the sampling
    # resolution is not certifiable
    nn_gap = _nearest_gap(dirs)
    antip_tol = max(tol, 3.0 * nn_gap)
    antip = _antipodal_gap(dirs)
    two_sided = bool(antip <= antip_tol)
    is_linear = bool(sub.dim == n and max_residual <= tol and two_sided)
    return ConeEstimate(directions=dirs, fitted_subspace=sub,
                        max_residual=max_residual,
                        is_linear_subspace=is_linear, two_sided=two_sided,
                        levels=levels, level_counts=counts,
                        extrapolation_residual=extrap_resid,
                        antipodal_gap=antip)


def _nearest_gap(dirs: np.ndarray) -> float:
    if len(dirs) < 2:
        return 0.0
    d2 = np.sum((dirs[:, None, :] - dirs[None, :, :]) ** 2, axis=2)
    np.fill_diagonal(d2, np.inf)
    return float(np.median(np.sqrt(np.min(d2, axis=1))))


def tangent_cone_infinity(scene: Scene, tol: float = 2e-2, seed: int = 0,
                          R_levels=None, per_level: int = 4096) -> ConeEstimate:
    R_levels = tuple(R_levels) if R_levels is not None else LEVELS_INFINITY
    cloud = blowup_cloud(scene, R_levels, per_level, seed=seed)
    level_scales = [1.0 / (R * np.sqrt(2.0)) for R in R_levels]
    return _cone_from_cloud(cloud, scene.dim, scene.ambient, tol,
                            tuple(R_levels), level_scales)


def tangent_cone_at_point(scene: Scene, p, tol: float = 2e-2, seed: int = 0,
                          r_levels=None, per_level: int = 4096) -> ConeEstimate:
    p = np.asarray(p, dtype=float)
    proj = project_to_scene(scene, p, seed=seed)
    slack = max(scene.on_set_tol, 1e-9 * (1.0 + float(np.linalg.norm(p))))
    if proj.dist > slack:
        raise ValueError(f"point at distance {proj.dist:.3g} from the set")
    r_levels = tuple(r_levels) if r_levels is not None else LEVELS_POINT
    scaled = tuple(r * (1.0 + float(np.linalg.norm(p))) for r in r_levels)
    cloud = blowup_cloud_at_point(scene, p, scaled, per_level, seed=seed)
    level_scales = [r * np.sqrt(2.0) for r in scaled]
    return _cone_from_cloud(cloud, scene.dim, scene.ambient, tol, scaled,
                            level_scales)


# --- limits of tangent planes ------------------------------------------------


def _frames(scene: Scene, res) -> tuple[np.ndarray, int]:
    """Orthonormal tangent n-frames at sampled points; singular Jacobians
    are skipped."""
    if res.params is None:
        raise InsufficientDirectionsError(
            "scene has no charts to take tangent frames from")
    frames = []
    skipped = 0
    for ci in np.unique(res.chart_index):
        ch = scene.charts[ci]
        sel = res.chart_index == ci
        J = ch.jacobians(res.params[sel][:, :len(ch.params)], check=False)
        for k in range(len(J)):
            Jk = J[k]
            if not np.all(np.isfinite(Jk)):
                skipped += 1
                continue
            q, r = np.linalg.qr(Jk)
            if np.min(np.abs(np.diag(r))) < 1e-10 * np.max(np.abs(np.diag(r))):
                skipped += 1
                continue
            frames.append(q)
    if not frames:
        raise InsufficientDirectionsError("no nonsingular tangent frames")
    return np.stack(frames), skipped


def _principal_angle(q1: np.ndarray, q2: np.ndarray) -> float:
    s = np.linalg.svd(q1.T @ q2, compute_uv=False)
    return float(np.arccos(np.clip(np.min(s), -1.0, 1.0)))


def normal_set_infinity(scene: Scene, R_levels=None, per_level: int = 512,
                        seed: int = 0, tol: float = 2e-2) -> PlaneLimitEstimate:
    """Cluster limits of tangent planes T_x X as |x| grows."""
    R_levels = tuple(R_levels) if R_levels is not None else LEVELS_NORMAL
    n = scene.dim
    projs = []          # mean projector per level
    skipped = 0
    top_frames = None
    for li, R in enumerate(R_levels):
        res = sample_points(scene, R, 2.0 * R, per_level, seed=seed + 11 * li)
        frames, sk = _frames(scene, res)
        skipped += sk
        projs.append(np.einsum("kmi,kni->kmn", frames, frames).mean(axis=0))
        if li == len(R_levels) - 1:
            top_frames = frames
    # pairwise spread at the top level (subsample to keep it quadratic-small)
    step = max(1, len(top_frames) // 48)
    sub = top_frames[::step]
    max_angle = 0.0
    for i in range(len(sub)):
        for j in range(i + 1, len(sub)):
            max_angle = max(max_angle, _principal_angle(sub[i], sub[j]))
    # extrapolate the mean projector in 1/R and read its top eigenvectors
    scales = 1.0 / np.asarray(R_levels, dtype=float)
    A = np.column_stack([np.ones(len(scales)), scales])
    P = np.stack(projs)
    coef, *_ = np.linalg.lstsq(A, P.reshape(len(scales), -1), rcond=None)
    P_inf = coef[0].reshape(scene.ambient, scene.ambient)
    P_inf = 0.5 * (P_inf + P_inf.T)
    fit_resid = float(np.max(np.abs(A @ coef - P.reshape(len(scales), -1))))
    w, v = np.linalg.eigh(P_inf)
    basis = v[:, np.argsort(w)[::-1][:n]]
    # eigenvalue separation: a genuine single plane has n eigenvalues near 1
    eig_sorted = np.sort(w)[::-1]
    eig_gap = float(1.0 - eig_sorted[n - 1]) + float(eig_sorted[n]
                                                     if len(w) > n else 0.0)
    single = bool(max_angle <= tol and eig_gap <= tol and fit_resid <= 0.25)
    return PlaneLimitEstimate(frames=top_frames, max_pairwise_angle=max_angle,
                              is_single_plane=single,
                              plane=Subspace(n, basis) if single else None,
                              extrapolation_residual=fit_resid,
                              skipped_singular=skipped,
                              levels=tuple(R_levels))
