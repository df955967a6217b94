"""Homography auto-calibration against a satellite reference.

Two estimators live here.  The first recovers the perspective-to-BEV
homography from noisy point correspondences by consensus voting with an
adaptive iteration budget and a final least-squares refit on the winning
inlier set.  The second estimates polynomial radial-distortion
coefficients by straightening observed vehicle trajectories: candidate
coefficients are scored by how well the undistorted points fit straight
lines, and a (1+lambda) evolution strategy searches the coefficient plane.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import (
    DegenerateConfiguration,
    DegeneratePoints,
    InsufficientMatches,
    InsufficientTrajectories,
    InvalidProbability,
    NoConsensus,
)
from .geometry import (
    BEV,
    PERSPECTIVE,
    Homography,
    PixelPoint,
    apply_many,
    estimate_dlt_xy,
)
from .imaging import DistortionParams, undistort_xy


@dataclass(frozen=True)
class Correspondence:
    """A putative camera-pixel / satellite-pixel match."""

    cam: PixelPoint
    sat: PixelPoint

    def __post_init__(self):
        if self.cam.frame != PERSPECTIVE or self.sat.frame != BEV:
            raise ValueError("correspondence must pair a perspective point "
                             "with a bev point")


@dataclass(frozen=True)
class RansacParams:
    tau_z: float = 3.0
    rho: float = 0.99
    gamma: int = 4
    max_iter: int = 10000

    def __post_init__(self):
        if self.tau_z <= 0:
            raise ValueError(f"tau_z must be > 0, got {self.tau_z}")
        if not 0.0 < self.rho < 1.0:
            raise InvalidProbability(f"rho must be in (0, 1), got {self.rho}")
        if self.gamma != 4:
            raise ValueError("sample size is fixed at 4 for homographies")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass
class RansacResult:
    h: Homography
    inlier_mask: np.ndarray
    votes: int
    iterations_run: int
    # votes recorded per executed iteration, for auditing optimality
    vote_history: list[int] = field(default_factory=list)


def ransac_iterations(rho: float, epsilon: float, gamma: int = 4) -> int:
    """Iterations needed to sample one all-inlier draw with probability rho.

    ceil(log(1 - rho) / log(1 - epsilon**gamma)); 1 when epsilon = 1.
    """
    if not 0.0 < rho < 1.0:
        raise InvalidProbability(f"rho must be in (0, 1), got {rho}")
    if not 0.0 < epsilon <= 1.0:
        raise InvalidProbability(f"epsilon must be in (0, 1], got {epsilon}")
    if epsilon == 1.0:
        return 1
    denom = math.log1p(-epsilon ** gamma)
    return int(math.ceil(math.log1p(-rho) / denom))


def ransac_homography(matches: Sequence[Correspondence],
                      params: RansacParams = RansacParams(),
                      rng_seed: int = 0) -> RansacResult:
    """Consensus-vote a homography out of outlier-ridden correspondences.

    Each iteration samples 4 distinct pairs, fits an exact homography and
    counts matches whose satellite-side reprojection error is below tau_z.
    The budget shrinks adaptively: whenever a better model appears, the
    required iteration count is recomputed from its inlier ratio.  The
    winner is refit on its full inlier set unless the refit would lose
    inliers, in which case the voted model is kept.
    """
    n = len(matches)
    if n < 4:
        raise InsufficientMatches(f"need at least 4 matches, got {n}")
    cam_xy = np.array([[m.cam.x, m.cam.y] for m in matches])
    sat_xy = np.array([[m.sat.x, m.sat.y] for m in matches])

    rng = np.random.default_rng(rng_seed)
    tau2 = params.tau_z ** 2

    def vote(h: Homography) -> np.ndarray:
        proj = apply_many(h, cam_xy)
        err2 = np.sum((proj - sat_xy) ** 2, axis=1)
        return err2 < tau2

    best_h = None
    best_mask = None
    best_votes = 0
    budget = params.max_iter
    history: list[int] = []
    i = 0
    while i < budget:
        idx = rng.choice(n, size=4, replace=False)
        try:
            g = estimate_dlt_xy(cam_xy[idx], sat_xy[idx])
        except DegenerateConfiguration:
            history.append(0)
            i += 1
            continue
        h = Homography(g, source=PERSPECTIVE, target=BEV)
        mask = vote(h)
        votes = int(mask.sum())
        history.append(votes)
        if votes > best_votes:
            best_h, best_mask, best_votes = h, mask, votes
            eps = best_votes / n
            budget = min(params.max_iter, ransac_iterations(
                params.rho, eps, params.gamma))
        i += 1

    if best_votes < 4:
        raise NoConsensus(
            f"best consensus has {best_votes} votes, need at least 4")

    try:
        g = estimate_dlt_xy(cam_xy[best_mask], sat_xy[best_mask])
        refit = Homography(g, source=PERSPECTIVE, target=BEV)
        refit_mask = vote(refit)
        refit_votes = int(refit_mask.sum())
    except DegenerateConfiguration:
        refit_votes = -1
    if refit_votes >= best_votes:
        best_h, best_mask, best_votes = refit, refit_mask, refit_votes

    return RansacResult(h=best_h, inlier_mask=best_mask, votes=best_votes,
                        iterations_run=i, vote_history=history)


# --- trajectory line fitting ------------------------------------------------

@dataclass(frozen=True)
class TrajectoryLine:
    """A line a*x + b*y + c = 0 with unit normal (a, b)."""

    a: float
    b: float
    c: float

    def __post_init__(self):
        if abs(self.a * self.a + self.b * self.b - 1.0) > 1e-9:
            raise ValueError("line normal must be unit length")

    def distance(self, p: PixelPoint) -> float:
        return abs(self.a * p.x + self.b * p.y + self.c)

    def residual(self, points: Sequence[PixelPoint]) -> float:
        return float(sum((self.a * p.x + self.b * p.y + self.c) ** 2
                         for p in points))


def _scatter(xy: np.ndarray) -> tuple[np.ndarray, float, float, float]:
    centroid = xy.mean(axis=0)
    d = xy - centroid
    sxx = float(np.dot(d[:, 0], d[:, 0]))
    syy = float(np.dot(d[:, 1], d[:, 1]))
    sxy = float(np.dot(d[:, 0], d[:, 1]))
    return centroid, sxx, sxy, syy


def _min_scatter_eig(sxx: float, sxy: float, syy: float) -> float:
    tr = sxx + syy
    disc = math.sqrt((sxx - syy) ** 2 + 4.0 * sxy * sxy)
    return 0.5 * (tr - disc)


def fit_line_tls(points: Sequence[PixelPoint]) -> TrajectoryLine:
    """Total-least-squares line: orthogonal regression through the centroid.

    The normal is the eigenvector of the smallest eigenvalue of the 2x2
    coordinate scatter; the squared residual sum equals that eigenvalue.
    Sign convention: a > 0, or b > 0 when a = 0.
    """
    if len(points) < 2:
        raise DegeneratePoints(f"need at least 2 points, got {len(points)}")
    xy = np.array([[p.x, p.y] for p in points], dtype=np.float64)
    centroid, sxx, sxy, syy = _scatter(xy)
    if max(np.max(np.abs(xy - centroid)), 0.0) < 1e-12:
        raise DegeneratePoints("all points coincide")
    lam = _min_scatter_eig(sxx, sxy, syy)
    # eigenvector of the 2x2 scatter for lam, picking the better-conditioned
    # of the two analytic forms; isotropic scatter falls back to (1, 0)
    v1 = (-sxy, sxx - lam)
    v2 = (syy - lam, -sxy)
    v = v1 if math.hypot(*v1) >= math.hypot(*v2) else v2
    norm = math.hypot(*v)
    if norm < 1e-12:
        v, norm = (1.0, 0.0), 1.0
    a, b = v[0] / norm, v[1] / norm
    if a < 0 or (a == 0 and b < 0):
        a, b = -a, -b
    c = -(a * centroid[0] + b * centroid[1])
    return TrajectoryLine(a, b, c)


# --- evolution-strategy minimizer -------------------------------------------

@dataclass
class EsResult:
    x: np.ndarray
    fx: float
    # best objective value after each generation, index 0 = initial parent
    history: list[float]
    generations: int


def es_minimize(objective: Callable[[np.ndarray], float],
                x0: Sequence[float],
                rng: np.random.Generator,
                lambda_: int = 8,
                sigma0: float = 0.05,
                max_generations: int = 200,
                rel_tol: float = 1e-9,
                patience: int = 20) -> EsResult:
    """Elitist (1+lambda) evolution strategy with multiplicative step control.

    Each generation draws lambda isotropic Gaussian offspring around the
    parent; the parent is replaced only by a strictly better offspring, so
    the best objective value never increases.  The step size grows by 1.5
    on success and shrinks by 0.82 on failure.  Terminates after
    max_generations, or earlier once the relative improvement has stayed
    below rel_tol for `patience` consecutive generations.
    """
    parent = np.asarray(x0, dtype=np.float64)
    f_parent = float(objective(parent))
    sigma = float(sigma0)
    history = [f_parent]
    stalled = 0
    gen = 0
    for gen in range(1, max_generations + 1):
        offspring = parent + sigma * rng.standard_normal((lambda_, parent.size))
        scores = np.array([objective(o) for o in offspring])
        j = int(np.argmin(scores))
        if scores[j] < f_parent:
            improvement = (f_parent - scores[j]) / max(abs(f_parent), 1e-300)
            parent = offspring[j].copy()
            f_parent = float(scores[j])
            sigma *= 1.5
            stalled = stalled + 1 if improvement < rel_tol else 0
        else:
            sigma *= 0.82
            stalled += 1
        history.append(f_parent)
        if stalled >= patience:
            break
    return EsResult(x=parent, fx=f_parent, history=history, generations=gen)


def straightness_objective(trajectories: Sequence[np.ndarray],
                           image_size: tuple[int, int]
                           ) -> Callable[[np.ndarray], float]:
    """Score (k1, k2) by how straight the undistorted trajectories are.

    For each trajectory the score contribution is the minimum over lines of
    the squared point-line residual sum, i.e. the smallest eigenvalue of
    the undistorted coordinate scatter; contributions are summed.
    """
    stacked = np.vstack(trajectories)
    bounds = np.cumsum([0] + [len(t) for t in trajectories])

    def objective(k: np.ndarray) -> float:
        params = DistortionParams.centered((float(k[0]), float(k[1])),
                                           image_size)
        und = undistort_xy(stacked, params)
        total = 0.0
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            _, sxx, sxy, syy = _scatter(und[lo:hi])
            total += _min_scatter_eig(sxx, sxy, syy)
        return total

    return objective


def fit_distortion_es(trajectories: Sequence[Sequence[PixelPoint]],
                      image_size: tuple[int, int],
                      seed: int = 0) -> DistortionParams:
    """Estimate radial-distortion coefficients from vehicle trajectories.

    Vehicles travel in straight lines in the undistorted image, so the
    coefficient pair that lets all trajectories be straightened at once is
    the lens model.  Starts from (0, 0); the returned center is the image
    center.
    """
    arrays = [np.array([[p.x, p.y] for p in t], dtype=np.float64)
              for t in trajectories if len(t) >= 5]
    if not arrays:
        raise InsufficientTrajectories(
            "need at least one trajectory with >= 5 points")
    objective = straightness_objective(arrays, image_size)
    rng = np.random.default_rng(seed)
    result = es_minimize(objective, (0.0, 0.0), rng)
    return DistortionParams.centered((float(result.x[0]), float(result.x[1])),
                                     image_size)
