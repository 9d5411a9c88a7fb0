"""Synthetic scene and trial generation.

A scene is a smooth closed curve observed from two camera poses. The
first view's points and the reprojected second view's points are returned
as unordered sets, plus an oracle permutation (test-only ground truth for
which second-view point each first-view point maps to). Everything is
bit-reproducible from the seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .exceptions import GenerationError
from .geometry import (
    CorrespondenceModel,
    ModelKind,
    PointSet,
    PoseParams,
    rotation_from_euler,
)

DEFAULT_N_POINTS = 3142


def _curve_limacon3(t, a=0.28, b=0.07):
    r = a + b * np.cos(3.0 * t)
    return np.stack([r * np.cos(t), r * np.sin(t)], axis=1)


def _curve_limacon(t, a=0.36, b=0.07, c=0.06, d=0.05):
    # asymmetric perturbed limacon: the extra low-order harmonics kill the
    # 3-fold rotational symmetry of a + b*cos(3t), which otherwise creates
    # spurious 120-degree pose aliases for order-free objectives
    r = a + b * np.cos(3.0 * t) + c * np.sin(t) + d * np.cos(2.0 * t)
    return np.stack([r * np.cos(t), r * np.sin(t)], axis=1)


def _curve_circle(t, a=0.3):
    return np.stack([a * np.cos(t), a * np.sin(t)], axis=1)


def _curve_lissajous(t, a=0.3, b=0.22):
    return np.stack([a * np.sin(2.0 * t + 0.4), b * np.sin(3.0 * t)], axis=1)


def _curve_blob(t, a=0.27):
    # generic Fourier mix with no rotational or reflection symmetry;
    # preferred for 2D-2D scenes where set symmetries alias the pose
    r = a * (1.0 + 0.25 * np.sin(t) + 0.15 * np.cos(2.0 * t) + 0.1 * np.sin(3.0 * t + 0.8))
    return np.stack([r * np.cos(t), r * np.sin(t)], axis=1)


def _curve_blob_wide(t):
    # wide-angle variant; 2D-2D pose is weakly observable through a
    # narrow field of view, so those scenes use this by default
    return _curve_blob(t, a=0.7)


CURVES = {
    "limacon": _curve_limacon,
    "limacon3": _curve_limacon3,
    "circle": _curve_circle,
    "lissajous": _curve_lissajous,
    "blob": _curve_blob,
    "blob_wide": _curve_blob_wide,
}


@dataclass(frozen=True)
class SceneConfig:
    """Camera, curve and ground-truth pose for one synthetic scene."""

    theta_star: PoseParams
    n_points: int = DEFAULT_N_POINTS
    curve: str = "limacon"
    focal_length: float = 800.0
    depth: float = 1.0
    depth_relief: float = 0.35  # relative depth variation for epipolar scenes
    seed: int = 0
    gray_profile: str | None = None  # None or "ramp"

    def __post_init__(self):
        if self.focal_length <= 0 or self.depth <= 0:
            raise ValueError("focal_length and depth must be positive")
        if not (0.0 <= self.depth_relief < 1.0):
            raise ValueError("depth_relief must lie in [0, 1)")
        if self.n_points < 6:
            raise ValueError("need at least 6 points")
        if self.curve not in CURVES:
            raise ValueError(f"unknown curve {self.curve!r}; known: {sorted(CURVES)}")


@dataclass(frozen=True)
class NoiseConfig:
    """Per-trial corruption knobs; all scales are nonnegative."""

    b_p: float = 0.0  # coordinate noise scale in the second view
    b_i: float = 0.0  # initial-condition perturbation scale
    b_m: float = math.inf  # mismatch keep threshold (inf keeps everything)
    outlier_count: int = 0
    outlier_box: tuple = (-0.6, -0.4, 0.05, 0.05)  # x0, y0, width, height

    def __post_init__(self):
        if self.b_p < 0 or self.b_i < 0 or self.b_m < 0 or self.outlier_count < 0:
            raise ValueError("noise scales must be nonnegative")


@dataclass(frozen=True)
class OraclePermutation:
    """Test-only ground truth: perm[k] is the index in the clean second set
    of the point generated from first-set point k."""

    perm: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.perm, dtype=np.intp).reshape(-1)
        if np.unique(p).size != p.size:
            raise ValueError("oracle permutation must be a bijection")
        object.__setattr__(self, "perm", p)


def random_theta(rng, kind: ModelKind = ModelKind.BEARING_3D_2D, scale: float = 0.2) -> PoseParams:
    """Moderate random ground-truth pose, uniform in [-scale, scale] per entry.

    The epipolar translation direction is drawn on the sphere away from
    the poles (elevation limited) so its chart stays well-conditioned.
    """
    angles = rng.uniform(-scale, scale, size=3)
    if kind == ModelKind.EPIPOLAR_2D_2D:
        az = rng.uniform(-math.pi, math.pi)
        el = rng.uniform(-1.0, 1.0)
        return PoseParams.from_vector(np.concatenate([angles, [az, el]]))
    t = rng.uniform(-scale, scale, size=3)
    return PoseParams.from_vector(np.concatenate([angles, t]))


def _gray_values(profile, t):
    if profile is None:
        return None
    if profile == "ramp":
        # monotone in curve parameter: gray encodes position along the curve
        return 0.35 + 0.3 * (t / (2.0 * math.pi))
    raise ValueError(f"unknown gray profile {profile!r}")


def gen_scene(
    config: SceneConfig, kind: ModelKind = ModelKind.BEARING_3D_2D
) -> tuple[PointSet, PointSet, OraclePermutation]:
    """Generate (first set, clean second set, oracle permutation).

    First-view 2D points are homogeneous [u, v, 1] normalized coordinates
    of the curve; for the rigid model they are lifted to 3D with the scene
    depth. The second set is the mapped/reprojected version under the
    ground-truth pose, randomly shuffled. Points that land behind the
    second camera are dropped along with their partners; more than 1%
    of them is an error.
    """
    rng = np.random.default_rng(config.seed)
    t = np.linspace(0.0, 2.0 * math.pi, config.n_points, endpoint=False)
    uv = CURVES[config.curve](t)
    gray = _gray_values(config.gray_profile, t)
    hom = np.hstack([uv, np.ones((uv.shape[0], 1))])
    theta = config.theta_star
    R = rotation_from_euler(theta.angles)

    if kind == ModelKind.RIGID_3D:
        pts_p = config.depth * hom
        mapped = pts_p @ R.T + theta.translation
        p_set = PointSet.from_3d(pts_p, gray)
        q_pts, keep = mapped, np.ones(len(pts_p), dtype=bool)
        q_dim = 3
    else:
        if kind == ModelKind.EPIPOLAR_2D_2D:
            # non-planar depth profile: planar scenes leave the epipolar
            # geometry underdetermined (homography-induced ambiguity)
            lam = config.depth * (1.0 + config.depth_relief * np.sin(2.0 * t + 0.7))
            world = lam[:, None] * hom
            mapped = world @ R.T + theta.unit_translation()
        elif kind == ModelKind.HOMOGRAPHY_2D_2D:
            world = config.depth * hom
            mapped = world @ R.T + theta.translation
        else:  # bearing: first view enters the model as its homogeneous rows
            mapped = hom @ R.T + theta.translation
        keep = mapped[:, 2] > 1e-9
        dropped = np.count_nonzero(~keep)
        if dropped > 0.01 * len(hom):
            raise GenerationError(
                f"{dropped}/{len(hom)} points project behind the second camera"
            )
        p_set = PointSet.from_image_points(
            hom[keep], None if gray is None else gray[keep]
        )
        q_pts = mapped[keep] / mapped[keep, 2][:, None]
        q_dim = 2

    n_kept = q_pts.shape[0]
    shuffle = rng.permutation(n_kept)
    # shuffle[j] = source row of q position j  =>  perm[k] = position of k
    perm = np.empty(n_kept, dtype=np.intp)
    perm[shuffle] = np.arange(n_kept)
    q_gray = None
    if gray is not None:
        q_gray = gray[keep][shuffle]
    q_set = PointSet(q_dim, q_pts[shuffle], q_gray)
    return p_set, q_set, OraclePermutation(perm=perm)


def model_for(kind: ModelKind, config: SceneConfig) -> CorrespondenceModel:
    """The correspondence model matching scenes from :func:`gen_scene`."""
    if kind == ModelKind.HOMOGRAPHY_2D_2D:
        # generated curve lies in the plane z = depth of the first camera
        return CorrespondenceModel(
            kind, plane_normal=np.array([0.0, 0.0, 1.0]), plane_offset=config.depth
        )
    return CorrespondenceModel(kind)


def perturb(q: PointSet, noise: NoiseConfig, seed: int) -> PointSet:
    """Add iid normal noise, scale b_p, to the non-homogeneous coordinates."""
    if noise.b_p == 0.0:
        return q
    rng = np.random.default_rng(seed)
    pts = q.points.copy()
    cols = 2 if q.dim == 2 else 3
    pts[:, :cols] += noise.b_p * rng.standard_normal((len(q), cols))
    return PointSet(q.dim, pts, q.gray)


def subsample_mismatch(q: PointSet, b_m: float, seed: int) -> tuple[PointSet, np.ndarray]:
    """Keep each point independently when |randn()| <= b_m.

    The expected keep probability is erf(b_m / sqrt(2)). Returns the
    surviving set and the kept indices.
    """
    if math.isinf(b_m):
        return q, np.arange(len(q))
    rng = np.random.default_rng(seed)
    keep = np.abs(rng.standard_normal(len(q))) <= b_m
    idx = np.nonzero(keep)[0]
    if idx.size == 0:
        raise GenerationError(f"subsampling with b_m={b_m} removed every point")
    return q.take(idx), idx


def inject_outliers(
    q: PointSet, count: int, box: tuple, seed: int, gray: float | None = None
) -> tuple[PointSet, np.ndarray]:
    """Append uniform outliers inside box = (x0, y0, width, height).

    Returns the augmented set and a boolean mask flagging the injected rows.
    """
    labels = np.zeros(len(q) + count, dtype=bool)
    if count == 0:
        return q, labels
    rng = np.random.default_rng(seed)
    x0, y0, w, h = box
    pts = np.ones((count, 3))
    pts[:, 0] = x0 + w * rng.random(count)
    pts[:, 1] = y0 + h * rng.random(count)
    if q.dim == 3:
        raise ValueError("outlier injection targets homogeneous 2D sets")
    labels[len(q):] = True
    new_gray = None
    if q.gray is not None:
        fill = q.gray.mean() if gray is None else gray
        new_gray = np.concatenate([q.gray, np.full(count, fill)])
    return PointSet(2, np.vstack([q.points, pts]), new_gray), labels


def gen_occlusion_scene(
    config: SceneConfig,
    occluded_fraction: float = 0.2,
    occluder_gray: float = 0.95,
    seed: int | None = None,
) -> tuple[PointSet, PointSet, dict]:
    """Bearing scene where an arc of the second view is hidden and replaced
    by occluder points of distinct gray value.

    The first view sees the whole pattern (ramp gray profile). In the
    second view a contiguous parameter arc is removed and the same number
    of occluder points appears as a compact blob elsewhere in the image.
    """
    if not (0.0 < occluded_fraction < 0.5):
        raise ValueError("occluded_fraction must be in (0, 0.5)")
    cfg = replace(config, gray_profile="ramp")
    p_set, q_clean, oracle = gen_scene(cfg, ModelKind.BEARING_3D_2D)
    rng = np.random.default_rng(cfg.seed if seed is None else seed)

    n = len(q_clean)
    n_occ = int(round(occluded_fraction * n))
    # hide a contiguous arc of the curve parameter (= contiguous gray band)
    start = rng.integers(n)
    gray = q_clean.gray
    g_sorted = np.sort(gray)
    lo = g_sorted[start % n]
    band = np.sort(np.argsort(np.abs(gray - lo))[:n_occ])
    visible = np.setdiff1d(np.arange(n), band)

    q_vis = q_clean.take(visible)
    # occluder blob: compact cluster inside the field of view, away from center
    cx, cy = rng.uniform(0.15, 0.3), rng.uniform(-0.3, -0.15)
    blob = np.ones((n_occ, 3))
    blob[:, 0] = cx + 0.02 * rng.standard_normal(n_occ)
    blob[:, 1] = cy + 0.02 * rng.standard_normal(n_occ)
    blob_gray = occluder_gray + 0.01 * rng.standard_normal(n_occ)
    q_pts = np.vstack([q_vis.points, blob])
    q_gray = np.concatenate([q_vis.gray, blob_gray])
    q_set = PointSet(2, q_pts, q_gray)
    meta = {"occluded_q_indices": band, "n_occluders": n_occ}
    return p_set, q_set, meta
