"""Density profiles r -> theta(X, p, r) and limit verdicts.

theta(X, p, r) = measure(X cap B_r(p)) / (mu_n r^n).  A profile samples theta
on a log-spaced grid; verdict fitting never assumes a limit exists.  Order of
tests: divergence (growth across the top decade), oscillation (alternating
local extrema separated beyond error), convergence (tail spread inside the
fitted band), otherwise inconclusive with a reason.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import IO, Optional, Union

import numpy as np

from .measure import BallQuery, area, mu_ball
from .scene import Scene, project_to_scene

__all__ = [
    "Band", "DensityProfile", "LimitVerdict", "MonotonicityReport",
    "PointNotOnSetError", "profile", "density_at_infinity",
    "density_at_point", "check_monotonicity",
]

CONVERGENCE_FACTOR = 3.0    # tail spread allowance: 3 * (tail err + fit resid)
SEPARATION_FACTOR = 5.0     # no_limit: band gap must exceed 5 * max tail err
DIVERGENCE_RATIO = 4.0      # diverges: growth factor across the top decade
MIN_SLOPE = 0.1             # and the log-log slope must clear this


class PointNotOnSetError(ValueError):
    pass


@dataclass(frozen=True)
class Band:
    lo: float
    hi: float

    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def mid(self) -> float:
        return 0.5 * (self.lo + self.hi)


@dataclass(frozen=True)
class DensityProfile:
    center: np.ndarray
    radii: np.ndarray
    theta: np.ndarray
    err: np.ndarray
    n: int

    def to_csv(self, dest: Union[str, IO[str]]) -> None:
        if isinstance(dest, (str, os.PathLike)):
            with open(dest, "w") as fh:
                self.to_csv(fh)
            return
        dest.write("r,theta,err\n")
        for r, t, e in zip(self.radii, self.theta, self.err):
            dest.write(f"{r:.17g},{t:.17g},{e:.17g}\n")


@dataclass(frozen=True)
class LimitVerdict:
    kind: str                           # converges | diverges | no_limit | inconclusive
    value: Optional[float] = None
    err: Optional[float] = None
    rate: Optional[float] = None        # log-log slope when diverging
    liminf_band: Optional[Band] = None
    limsup_band: Optional[Band] = None
    reason: Optional[str] = None
    profile: Optional[DensityProfile] = None
    thresholds: dict = field(default_factory=dict)


@dataclass(frozen=True)
class MonotonicityReport:
    nondecreasing: bool
    max_violation: float
    constant: bool
    cone_consistent: bool
    ge_one: bool
    profile: DensityProfile


def profile(scene: Scene, center, r_lo: float, r_hi: float, k: int = 24,
            tol: float = 1e-3, *, seed: int = 0,
            threads: Optional[int] = None) -> DensityProfile:
    """Densities on a log-spaced radius grid; radii run concurrently but the
    result order (and every bit of it) is fixed by the grid and the seed."""
    center = np.asarray(center, dtype=float).reshape(-1)
    if center.shape[0] != scene.ambient:
        raise ValueError(f"center has dimension {center.shape[0]}, "
                         f"scene is ambient {scene.ambient}")
    if not (0.0 < r_lo < r_hi) or k < 2:
        raise ValueError("need 0 < r_lo < r_hi and k >= 2")
    radii = np.geomspace(r_lo, r_hi, k)

    def one(r: float):
        est = area(scene, BallQuery(center, float(r)), tol=tol,
                   seed=seed, threads=1)
        return est.value, est.abs_error

    nw = threads if threads is not None else min(os.cpu_count() or 1, 8)
    if nw > 1 and scene.staircase is None:
        with ThreadPoolExecutor(max_workers=nw) as pool:
            results = list(pool.map(one, radii))
    else:
        results = [one(r) for r in radii]

    mu = mu_ball(scene.dim)
    scale = mu * radii ** scene.dim
    theta = np.array([v for v, _ in results]) / scale
    err = np.array([e for _, e in results]) / scale
    return DensityProfile(center=center, radii=radii, theta=theta,
                          err=err, n=scene.dim)


def _fit_affine(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    """Least squares y = a + c*x; returns (a, c, max |residual|)."""
    A = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    return float(coef[0]), float(coef[1]), float(np.max(np.abs(resid)))


def _local_extrema(theta: np.ndarray) -> tuple[list[int], list[int]]:
    maxima, minima = [], []
    for i in range(1, len(theta) - 1):
        if theta[i] > theta[i - 1] and theta[i] > theta[i + 1]:
            maxima.append(i)
        elif theta[i] < theta[i - 1] and theta[i] < theta[i + 1]:
            minima.append(i)
    return maxima, minima


def _verdict(theta: np.ndarray, err: np.ndarray, x: np.ndarray,
             prof: DensityProfile, thresholds: dict) -> LimitVerdict:
    """Classify a profile.  Arrays are oriented with the index increasing
    toward the limit: x is the fit abscissa (1/r at infinity, r at a point)
    and decreases to 0 along the array.  Convergence fits theta = a + c*x on
    the longest suffix whose spread stays inside 3*(tail err + fit residual);
    the suffix must keep >= 6 points and span a factor >= sqrt(10) in x.
    """
    finite = np.isfinite(theta) & np.isfinite(err)
    if finite.sum() < 6:
        return LimitVerdict(kind="inconclusive",
                            reason="fewer than 6 finite density values",
                            profile=prof, thresholds=thresholds)

    # divergence: growth toward the limit across the last decade of x
    decade = x <= 10.0000001 * x[-1]
    if decade.sum() >= 3 and np.all(theta[decade] > 0):
        ratio = float(theta[-1] / theta[decade][0])
        slope_x = float(np.polyfit(np.log(x[decade]),
                                   np.log(theta[decade]), 1)[0])
        thresholds["last_decade_ratio"] = ratio
        thresholds["loglog_rate"] = -slope_x
        if ratio >= DIVERGENCE_RATIO and -slope_x > MIN_SLOPE:
            return LimitVerdict(kind="diverges", rate=-slope_x, profile=prof,
                                thresholds=thresholds)

    # oscillation on the default tail: alternating extrema separated beyond
    # error
    tail = slice(len(theta) // 2, len(theta))
    t_theta, t_err = theta[tail], err[tail]
    max_err = float(np.max(t_err))
    maxima, minima = _local_extrema(t_theta)
    if len(maxima) + len(minima) >= 3 and maxima and minima:
        hi_vals = t_theta[maxima]
        lo_vals = t_theta[minima]
        limsup_band = Band(float(hi_vals.min() - max_err),
                           float(hi_vals.max() + max_err))
        liminf_band = Band(float(lo_vals.min() - max_err),
                           float(lo_vals.max() + max_err))
        gap = limsup_band.lo - liminf_band.hi
        thresholds["oscillation_gap"] = gap
        thresholds["separation_needed"] = SEPARATION_FACTOR * max_err
        if gap > SEPARATION_FACTOR * max_err:
            return LimitVerdict(kind="no_limit", liminf_band=liminf_band,
                                limsup_band=limsup_band, profile=prof,
                                thresholds=thresholds)

    # convergence on the largest feasible tail
    best_reason = None
    for start in range(0, len(theta) - 5):
        if x[start] < math.sqrt(10.0) * x[-1] and start > 0:
            break
        sub = slice(start, len(theta))
        a, c, resid = _fit_affine(x[sub], theta[sub])
        spread = float(theta[sub].max() - theta[sub].min())
        sub_err = float(np.max(err[sub]))
        band = CONVERGENCE_FACTOR * (sub_err + resid)
        if best_reason is None:
            thresholds["tail_spread"] = spread
            thresholds["convergence_band"] = band
            best_reason = (f"tail spread {spread:.3g} exceeds error band "
                           f"{band:.3g} without divergence or oscillation")
        if spread <= band:
            thresholds["tail_start_index"] = start
            thresholds["tail_spread"] = spread
            thresholds["convergence_band"] = band
            return LimitVerdict(kind="converges", value=a,
                                err=sub_err + resid + abs(c * x[-1]),
                                profile=prof, thresholds=thresholds)

    return LimitVerdict(kind="inconclusive", reason=best_reason,
                        profile=prof, thresholds=thresholds)


def _grid_defaults(scene: Scene) -> tuple[float, float, int, float]:
    if scene.staircase is not None:
        # closed-form measure is free; resolve the oscillation finely
        return 1e2, 1e5, 257, 1e-3
    if scene.dim >= 3:
        # high-dimensional cells are costly; shorter, looser grid
        return 1e1, 1e3, 12, 5e-3
    return 1e1, 1e4, 24, 1e-3


def density_at_infinity(scene: Scene, tol: float = 1e-2, *, seed: int = 0,
                        r_lo: Optional[float] = None,
                        r_hi: Optional[float] = None,
                        k: Optional[int] = None,
                        measure_tol: Optional[float] = None,
                        threads: Optional[int] = None) -> LimitVerdict:
    d_lo, d_hi, d_k, d_tol = _grid_defaults(scene)
    r_lo = d_lo if r_lo is None else r_lo
    r_hi = d_hi if r_hi is None else r_hi
    k = d_k if k is None else k
    measure_tol = d_tol if measure_tol is None else measure_tol

    prof = profile(scene, np.zeros(scene.ambient), r_lo, r_hi, k=k,
                   tol=measure_tol, seed=seed, threads=threads)
    thresholds = {"tol": tol, "measure_tol": measure_tol,
                  "grid": [r_lo, r_hi, k]}
    return _verdict(prof.theta, prof.err, 1.0 / prof.radii, prof, thresholds)


def density_at_point(scene: Scene, p, tol: float = 1e-2, *, seed: int = 0,
                     r_lo: float = 2e-2, r_hi: float = 1.0,
                     k: int = 16, measure_tol: Optional[float] = None,
                     threads: Optional[int] = None) -> LimitVerdict:
    """Density limit as r -> 0 at a point of the set (membership is checked
    by projection)."""
    p = np.asarray(p, dtype=float).reshape(-1)
    proj = project_to_scene(scene, p, seed=seed)
    slack = max(scene.on_set_tol, 1e-9 * (1.0 + float(np.linalg.norm(p))))
    if proj.dist > slack:
        raise PointNotOnSetError(
            f"point at distance {proj.dist:.3g} from the set (tol {slack:.3g})")

    measure_tol = (5e-3 if scene.dim >= 3 else 1e-3) \
        if measure_tol is None else measure_tol
    prof = profile(scene, p, r_lo, r_hi, k=k, tol=measure_tol, seed=seed,
                   threads=threads)
    # reverse so the array index increases toward the r -> 0 limit
    thresholds = {"tol": tol, "measure_tol": measure_tol,
                  "grid": [r_lo, r_hi, k]}
    out = _verdict(prof.theta[::-1], prof.err[::-1], prof.radii[::-1],
                   prof, thresholds)
    return out


def check_monotonicity(scene: Scene, p, *, r_lo: float = 0.25,
                       r_hi: float = 256.0, k: int = 21, seed: int = 0,
                       measure_tol: Optional[float] = None,
                       threads: Optional[int] = None) -> MonotonicityReport:
    """Is r -> theta(X, p, r) nondecreasing / constant over the sampled range?

    p need not lie on the set (the profile is then 0 until r reaches the
    distance to the set, which cannot break monotonicity).  constant uses the
    whole-grid spread against 3x the worst error bar; cone_consistent checks
    constancy only when p is the declared cone vertex, and holds vacuously
    elsewhere.  ge_one tests theta >= 1 on radii where the ball actually
    meets the set.
    """
    p = np.asarray(p, dtype=float).reshape(-1)
    measure_tol = (5e-3 if scene.dim >= 3 else 1e-3) \
        if measure_tol is None else measure_tol
    prof = profile(scene, p, r_lo, r_hi, k=k, tol=measure_tol, seed=seed,
                   threads=threads)
    theta, err = prof.theta, prof.err

    drops = theta[:-1] - theta[1:] - (err[:-1] + err[1:])
    max_violation = float(max(0.0, np.max(drops))) if len(theta) > 1 else 0.0
    nondecreasing = max_violation == 0.0

    spread = float(theta.max() - theta.min())
    constant = spread <= 3.0 * float(err.max())

    cone_consistent = True
    if scene.meta.cone_vertex is not None:
        vertex = np.asarray(scene.meta.cone_vertex, dtype=float)
        if np.linalg.norm(p - vertex) <= 1e-9 * (1.0 + np.linalg.norm(p)):
            cone_consistent = constant

    occupied = theta > 10.0 * err + 1e-12
    ge_one = bool(np.all(theta[occupied] >= 1.0 - 3.0 * err[occupied])) \
        if occupied.any() else False

    return MonotonicityReport(nondecreasing=nondecreasing,
                              max_violation=max_violation, constant=constant,
                              cone_consistent=cone_consistent, ge_one=ge_one,
                              profile=prof)
