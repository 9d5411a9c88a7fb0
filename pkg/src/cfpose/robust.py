"""Robustness layers: RANSAC over point subsets and occlusion handling
via grayscale cluster pairing.

Because correspondences are unknown, the per-point residual of a first-set
point is its nearest-neighbor distance, after mapping, to the second
set's representation (raw points, unit bearings, or the theta-dependent
epipolar image). RANSAC hypotheses are full solves on random subsets of
both sets, scored by how many points of both sets the resulting pose
explains within a threshold.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .exceptions import CfposeError, NoConsensusError
from .geometry import (
    CorrespondenceModel,
    ModelKind,
    PointSet,
    map_points_masked,
    map_q_points_masked,
    unit_bearings,
)
from .solver import Estimate, Problem, SolverConfig, solve


@dataclass(frozen=True)
class RansacConfig:
    subset_fraction: float = 0.5
    hypotheses: int = 50
    threshold: float | None = None  # None: median + 3*MAD of initial-fit residuals
    min_inlier_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.subset_fraction <= 1.0):
            raise ValueError("subset_fraction must be in (0, 1]")
        if self.hypotheses < 1:
            raise ValueError("hypotheses must be >= 1")
        if self.threshold is not None and not (self.threshold > 0.0):
            raise ValueError("threshold must be positive")


def _q_representation(model: CorrespondenceModel, set_q: PointSet, theta):
    if model.kind == ModelKind.RIGID_3D:
        return set_q.points, np.ones(len(set_q), dtype=bool)
    if model.kind == ModelKind.EPIPOLAR_2D_2D:
        return map_q_points_masked(model, set_q.points, theta)
    return unit_bearings(set_q).points, np.ones(len(set_q), dtype=bool)


def _residuals_both(theta, set_p, set_q, model):
    """Nearest-neighbor residuals for every point of both sets; degenerate
    points get +inf."""
    mapped, ok_p = map_points_masked(model, set_p.points, theta)
    q_rep, ok_q = _q_representation(model, set_q, theta)
    res_p = np.full(len(set_p), np.inf)
    res_q = np.full(len(set_q), np.inf)
    if ok_q.any() and ok_p.any():
        tree_q = cKDTree(q_rep[ok_q])
        res_p[ok_p] = tree_q.query(mapped[ok_p], k=1)[0]
        tree_p = cKDTree(mapped[ok_p])
        res_q[ok_q] = tree_p.query(q_rep[ok_q], k=1)[0]
    return res_p, res_q


def per_point_residual(theta, set_p: PointSet, set_q: PointSet, model: CorrespondenceModel):
    """Distance from each mapped first-set point to its nearest second-set
    representative. Degenerate points get +inf."""
    return _residuals_both(theta, set_p, set_q, model)[0]


def _mad_threshold(res: np.ndarray) -> float:
    """Scale-free consensus band from the initial fit's residuals.

    med + 3*MAD alone underestimates the band when the initial fit is
    biased by contamination (the true points then spread far beyond three
    MADs and would be clipped), so the 95th percentile acts as a guard:
    it keeps the true-point spread while still cutting small concentrated
    contamination, which sits in the top tail. The absolute floor keeps
    exact-data runs from rejecting everything: at the solver's gradient
    tolerance the estimate sits ~1e-8 off the optimum, so per-point
    residuals of exact data land around there, far below any real noise.
    """
    finite = res[np.isfinite(res)]
    if finite.size == 0:
        return np.inf
    med = float(np.median(finite))
    mad = float(np.median(np.abs(finite - med)))
    q95 = float(np.percentile(finite, 95.0))
    return max(med + 3.0 * mad, q95, 1e-6)


def ransac_solve(
    problem: Problem,
    theta0,
    ransac_cfg: RansacConfig | None = None,
    solver_cfg: SolverConfig | None = None,
) -> tuple[Estimate, np.ndarray, np.ndarray]:
    """Estimate with hypothesis-and-consensus outlier rejection.

    Fits on random subsets of both sets, keeps the hypothesis that
    explains the most points of either set within the threshold, then
    refits on the union of that hypothesis's inliers. Returns the refit
    estimate plus boolean inlier masks aligned with the point sets the
    problem was built from.
    """
    cfg = ransac_cfg or RansacConfig()
    scfg = solver_cfg or SolverConfig()
    model, basis = problem.model, problem.basis
    set_p, set_q = problem.set_p, problem.set_q
    m, n = len(set_p), len(set_q)

    est_init = solve(problem, theta0, scfg)
    res_p0, res_q0 = _residuals_both(est_init.theta, set_p, set_q, model)
    tau = cfg.threshold if cfg.threshold is not None else _mad_threshold(
        np.concatenate([res_p0, res_q0])
    )

    size_p = min(m, max(3, round(cfg.subset_fraction * m)))
    size_q = min(n, max(3, round(cfg.subset_fraction * n)))

    # the full-set fit competes as candidate -1: subset fits carry a
    # sampling gap between the two (independently drawn) subsets, so on
    # clean data the full fit explains strictly more points
    mask_p0, mask_q0 = res_p0 <= tau, res_q0 <= tau
    count0 = int(mask_p0.sum()) + int(mask_q0.sum())
    best = ((-count0, est_init.objective, -1), est_init, mask_p0, mask_q0)
    for h in range(cfg.hypotheses):
        rng = np.random.default_rng([cfg.seed, h])
        idx_p = np.sort(rng.choice(m, size=size_p, replace=False))
        idx_q = np.sort(rng.choice(n, size=size_q, replace=False))
        try:
            sub = Problem(model, set_p.take(idx_p), set_q.take(idx_q), basis,
                          normalize=problem.normalize)
            est_h = solve(sub, est_init.theta, scfg)
        except CfposeError:
            continue  # unusable subset (degenerate or non-finite); skip hypothesis
        res_p, res_q = _residuals_both(est_h.theta, set_p, set_q, model)
        mask_p, mask_q = res_p <= tau, res_q <= tau
        count = int(mask_p.sum()) + int(mask_q.sum())
        key = (-count, est_h.objective, h)
        if best is None or key < best[0]:
            best = (key, est_h, mask_p, mask_q)

    required = int(np.ceil(cfg.min_inlier_fraction * (m + n)))
    if -best[0][0] < required:
        got = -best[0][0]
        raise NoConsensusError(
            f"best hypothesis explains {got}/{m + n} points, need {required}",
            best_count=got,
            required=required,
        )
    _, est_best, mask_p, mask_q = best

    refit = Problem(
        model,
        set_p.take(np.nonzero(mask_p)[0]),
        set_q.take(np.nonzero(mask_q)[0]),
        basis,
        normalize=problem.normalize,
    )
    # start from whichever known estimate already scores better on the
    # inlier sets; LM only ever improves from there
    start = est_best.theta
    if refit.objective(est_init.theta) < refit.objective(est_best.theta):
        start = est_init.theta
    est_final = solve(refit, start, scfg)

    # map masks from the problem's canonical order back to input order
    out_p = np.empty(m, dtype=bool)
    out_q = np.empty(n, dtype=bool)
    out_p[problem.order_p] = mask_p
    out_q[problem.order_q] = mask_q
    return est_final, out_p, out_q


@dataclass(frozen=True)
class GrayCluster:
    """Indices of the member points plus their mean gray value."""

    indices: np.ndarray
    mean: float

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.intp).reshape(-1)
        if idx.size == 0:
            raise ValueError("cluster must be nonempty")
        object.__setattr__(self, "indices", idx)


def kmeans_gray(grays, n_clusters: int, seed: int = 0) -> list[GrayCluster]:
    """1-D k-means (k-means++ seeding, Lloyd iterations) over gray values.

    The input is sorted internally, so the returned partition depends only
    on the multiset of values, not their order. Clusters come back sorted
    by mean; an emptied cluster is reseeded to the point farthest from its
    current center.
    """
    g = np.asarray(grays, dtype=np.float64).reshape(-1)
    if n_clusters < 1 or g.size < n_clusters:
        raise ValueError("need n_clusters >= 1 and at least that many values")
    order = np.argsort(g, kind="stable")
    vals = g[order]
    rng = np.random.default_rng(seed)

    # k-means++ on the sorted values
    centers = [vals[rng.integers(vals.size)]]
    for _ in range(1, n_clusters):
        d2 = np.min(np.abs(vals[:, None] - np.asarray(centers)[None, :]) ** 2, axis=1)
        total = d2.sum()
        if total <= 0.0:
            centers.append(vals[rng.integers(vals.size)])
            continue
        centers.append(vals[rng.choice(vals.size, p=d2 / total)])
    centers = np.asarray(centers)

    assign = np.zeros(vals.size, dtype=np.intp)
    for _ in range(100):
        dist = np.abs(vals[:, None] - centers[None, :])
        assign = np.argmin(dist, axis=1)
        new_centers = centers.copy()
        for c in range(n_clusters):
            members = vals[assign == c]
            if members.size:
                new_centers[c] = members.mean()
            else:
                far = np.argmax(np.abs(vals - centers[assign]))
                new_centers[c] = vals[far]
        shift = np.max(np.abs(new_centers - centers))
        centers = new_centers
        if shift < 1e-9:
            break

    dist = np.abs(vals[:, None] - centers[None, :])
    assign = np.argmin(dist, axis=1)
    clusters = []
    for c in range(n_clusters):
        members = np.nonzero(assign == c)[0]
        if members.size == 0:
            continue
        original = np.sort(order[members])
        clusters.append(GrayCluster(indices=original, mean=float(vals[members].mean())))
    clusters.sort(key=lambda cl: cl.mean)
    return clusters


@dataclass(frozen=True)
class ClusterPairing:
    """Greedy one-to-one pairing of clusters by ascending gray-mean distance."""

    pairs: tuple  # ((p_index, q_index), ...)
    distances: tuple

    def __len__(self):
        return len(self.pairs)


def pair_clusters(sp: list[GrayCluster], sq: list[GrayCluster], keep: int) -> ClusterPairing:
    """Match clusters one-to-one on |mean_P - mean_Q|, smallest first, and
    return the first ``keep`` pairs. One-to-one matching stops a single
    cluster from absorbing everything."""
    if keep < 0 or keep > min(len(sp), len(sq)):
        raise ValueError("keep must be in [0, min(len(sp), len(sq))]")
    cand = sorted(
        ((abs(a.mean - b.mean), i, j) for i, a in enumerate(sp) for j, b in enumerate(sq)),
    )
    used_p, used_q = set(), set()
    pairs, dists = [], []
    for d, i, j in cand:
        if len(pairs) == keep:
            break
        if i in used_p or j in used_q:
            continue
        used_p.add(i)
        used_q.add(j)
        pairs.append((i, j))
        dists.append(d)
    return ClusterPairing(pairs=tuple(pairs), distances=tuple(dists))


def occlusion_filter(
    set_p: PointSet,
    set_q: PointSet,
    n_clusters: int = 8,
    keep: int | None = None,
    seed: int = 0,
) -> tuple[PointSet, PointSet, ClusterPairing]:
    """Keep only the points whose gray clusters pair up across the two sets.

    Both sets need gray values. Defaults to dropping the single worst
    cluster pair (keep = n_clusters - 1); occluders with distinct gray
    collect in clusters that pair badly and fall off the kept list.
    """
    if set_p.gray is None or set_q.gray is None:
        raise ValueError("occlusion filtering needs gray values on both sets")
    sp = kmeans_gray(set_p.gray, n_clusters, seed)
    sq = kmeans_gray(set_q.gray, n_clusters, seed)
    if keep is None:
        keep = max(1, min(len(sp), len(sq)) - 1)
    pairing = pair_clusters(sp, sq, keep)
    # keep only the overlap of each pair's gray ranges: the two clusterings
    # place band edges independently, and points whose band exists on one
    # side only would enter the estimation as pure mismatch
    sel_p, sel_q = [], []
    for i, j in pairing.pairs:
        gp = set_p.gray[sp[i].indices]
        gq = set_q.gray[sq[j].indices]
        lo = max(gp.min(), gq.min())
        hi = min(gp.max(), gq.max())
        if lo > hi:
            continue
        sel_p.append(sp[i].indices[(gp >= lo) & (gp <= hi)])
        sel_q.append(sq[j].indices[(gq >= lo) & (gq <= hi)])
    if not sel_p or all(len(s) == 0 for s in sel_p):
        raise ValueError("cluster pairing left no overlapping gray bands")
    idx_p = np.sort(np.concatenate(sel_p))
    idx_q = np.sort(np.concatenate(sel_q))
    return set_p.take(idx_p), set_q.take(idx_q), pairing
