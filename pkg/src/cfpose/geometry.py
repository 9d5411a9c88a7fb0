"""Pose parameterizations and the point-mapping models.

Conventions used throughout the package:

- Euler angles are intrinsic Z-Y-X: ``R = Rz(yaw) @ Ry(pitch) @ Rx(roll)``.
- 2D image points are carried as homogeneous 3-vectors ``[u, v, 1]`` in
  normalized image coordinates (pixel coordinates divided by the focal
  length), so every model output lives in R^3.
- The epipolar translation is parameterized on the unit sphere by an
  (azimuth, elevation) pair, which keeps ``|T| = 1`` exact by construction.
- Directions whose norm falls below ``DEGENERACY_EPS`` before normalization
  raise :class:`DegenerateDirectionError`.

All functions here are pure and safe to call concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .exceptions import DegenerateDirectionError

# ~100x double-precision epsilon at unit magnitude.
DEGENERACY_EPS = 1e-12


class ModelKind(str, Enum):
    """Which mapping relates the two point sets."""

    RIGID_3D = "rigid"
    BEARING_3D_2D = "bearing"
    EPIPOLAR_2D_2D = "epipolar"
    HOMOGRAPHY_2D_2D = "homography"


def _wrap_angle(a: float) -> float:
    """Wrap into (-pi, pi]."""
    a = float(a)
    w = math.fmod(a + math.pi, 2.0 * math.pi)
    if w <= 0.0:
        w += 2.0 * math.pi
    return w - math.pi


@dataclass(frozen=True)
class EulerAngles:
    """Intrinsic Z-Y-X Euler angles, radians, each wrapped into (-pi, pi]."""

    yaw: float
    pitch: float
    roll: float

    def __post_init__(self):
        for name in ("yaw", "pitch", "roll"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValueError(f"{name} must be finite, got {v!r}")
            object.__setattr__(self, name, _wrap_angle(v))

    def as_array(self) -> np.ndarray:
        return np.array([self.yaw, self.pitch, self.roll], dtype=np.float64)


@dataclass(frozen=True)
class PoseParams:
    """The decision variable theta: Euler angles plus a translation block.

    ``translation`` has length 3 for the rigid, bearing and homography
    models (scene units, or depth-scaled units for the bearing model).
    For the epipolar model it has length 2 and holds (azimuth, elevation)
    of the unit translation direction.
    """

    angles: EulerAngles
    translation: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.translation, dtype=np.float64).reshape(-1)
        if t.size not in (2, 3):
            raise ValueError("translation must have 2 (epipolar) or 3 entries")
        if not np.all(np.isfinite(t)):
            raise ValueError("translation must be finite")
        object.__setattr__(self, "translation", t)

    @property
    def dim(self) -> int:
        return 3 + self.translation.size

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.angles.as_array(), self.translation])

    @classmethod
    def from_vector(cls, vec) -> "PoseParams":
        v = np.asarray(vec, dtype=np.float64).reshape(-1)
        if v.size not in (5, 6):
            raise ValueError("theta vector must have 5 or 6 entries")
        return cls(EulerAngles(v[0], v[1], v[2]), v[3:])

    @classmethod
    def identity(cls, kind: ModelKind = ModelKind.RIGID_3D) -> "PoseParams":
        n = 2 if kind == ModelKind.EPIPOLAR_2D_2D else 3
        return cls(EulerAngles(0.0, 0.0, 0.0), np.zeros(n))

    def unit_translation(self) -> np.ndarray:
        """Reconstruct the unit 3-vector T for the epipolar parameterization."""
        if self.translation.size != 2:
            raise ValueError("unit_translation applies to the 2-entry form")
        return unit_translation(self.translation[0], self.translation[1])


@dataclass(frozen=True)
class CorrespondenceModel:
    """A model kind plus the extra plane data the homography case needs."""

    kind: ModelKind
    plane_normal: np.ndarray | None = None
    plane_offset: float | None = None

    def __post_init__(self):
        kind = ModelKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind == ModelKind.HOMOGRAPHY_2D_2D:
            if self.plane_normal is None or self.plane_offset is None:
                raise ValueError("homography model requires plane_normal and plane_offset")
            n = np.asarray(self.plane_normal, dtype=np.float64).reshape(3)
            if abs(np.linalg.norm(n) - 1.0) > 1e-9:
                raise ValueError("plane_normal must be a unit vector")
            d = float(self.plane_offset)
            if d == 0.0 or not math.isfinite(d):
                raise ValueError("plane_offset must be finite and nonzero")
            object.__setattr__(self, "plane_normal", n)
            object.__setattr__(self, "plane_offset", d)
        elif self.plane_normal is not None or self.plane_offset is not None:
            raise ValueError(f"plane data only applies to the homography model, not {kind}")

    @property
    def theta_dim(self) -> int:
        return 5 if self.kind == ModelKind.EPIPOLAR_2D_2D else 6


@dataclass(frozen=True)
class PointSet:
    """An unordered collection of points; storage order carries no meaning.

    Points are always stored as (N, 3) float64 rows. ``dim == 2`` marks
    homogeneous image points ``[u, v, 1]``; ``dim == 3`` marks free
    3-vectors (world points or unit bearings). ``gray`` is an optional
    per-point scalar intensity.
    """

    dim: int
    points: np.ndarray
    gray: np.ndarray | None = None

    def __post_init__(self):
        pts = np.ascontiguousarray(np.asarray(self.points, dtype=np.float64))
        if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] == 0:
            raise ValueError("points must be a nonempty (N, 3) array")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points must be finite")
        if self.dim not in (2, 3):
            raise ValueError("dim must be 2 or 3")
        if self.dim == 2 and not np.allclose(pts[:, 2], 1.0, atol=1e-12):
            raise ValueError("2D points must be homogeneous with third entry 1")
        object.__setattr__(self, "points", pts)
        if self.gray is not None:
            g = np.ascontiguousarray(np.asarray(self.gray, dtype=np.float64)).reshape(-1)
            if g.size != pts.shape[0]:
                raise ValueError("gray must have one value per point")
            if not np.all(np.isfinite(g)):
                raise ValueError("gray values must be finite")
            object.__setattr__(self, "gray", g)

    def __len__(self) -> int:
        return self.points.shape[0]

    @classmethod
    def from_image_points(cls, uv, gray=None) -> "PointSet":
        """Build a dim-2 set from (N, 2) normalized coordinates or (N, 3) homogeneous rows."""
        arr = np.asarray(uv, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError("expected a 2-D array of image points")
        if arr.shape[1] == 2:
            arr = np.hstack([arr, np.ones((arr.shape[0], 1))])
        return cls(dim=2, points=arr, gray=gray)

    @classmethod
    def from_3d(cls, pts, gray=None) -> "PointSet":
        return cls(dim=3, points=pts, gray=gray)

    def take(self, indices) -> "PointSet":
        idx = np.asarray(indices)
        gray = None if self.gray is None else self.gray[idx]
        return PointSet(self.dim, self.points[idx], gray)


def skew(v) -> np.ndarray:
    """Skew-symmetric matrix [v]_x with [v]_x @ w = v x w."""
    x, y, z = np.asarray(v, dtype=np.float64).reshape(3)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def rotation_from_euler(angles: EulerAngles) -> np.ndarray:
    """Rotation matrix for intrinsic Z-Y-X angles (yaw about z, then pitch, then roll)."""
    cy, sy = math.cos(angles.yaw), math.sin(angles.yaw)
    cp, sp = math.cos(angles.pitch), math.sin(angles.pitch)
    cr, sr = math.cos(angles.roll), math.sin(angles.roll)
    return np.array(
        [
            [cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr],
            [sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr],
            [-sp, cp * sr, cp * cr],
        ]
    )


def euler_from_rotation(R) -> EulerAngles:
    """Inverse of :func:`rotation_from_euler`; yaw is set to 0 on the gimbal set."""
    R = np.asarray(R, dtype=np.float64)
    sy = math.hypot(R[0, 0], R[1, 0])
    if sy > 1e-9:
        yaw = math.atan2(R[1, 0], R[0, 0])
        pitch = math.atan2(-R[2, 0], sy)
        roll = math.atan2(R[2, 1], R[2, 2])
    else:
        yaw = 0.0
        pitch = math.atan2(-R[2, 0], sy)
        roll = math.atan2(-R[1, 2], R[1, 1])
    return EulerAngles(yaw, pitch, roll)


def rotation_derivatives(angles: EulerAngles) -> list[np.ndarray]:
    """dR/dyaw, dR/dpitch, dR/droll for the Z-Y-X product."""
    cy, sy = math.cos(angles.yaw), math.sin(angles.yaw)
    cp, sp = math.cos(angles.pitch), math.sin(angles.pitch)
    cr, sr = math.cos(angles.roll), math.sin(angles.roll)
    Rz = np.array([[cy, -sy, 0.0], [sy, cy, 0.0], [0.0, 0.0, 1.0]])
    Ry = np.array([[cp, 0.0, sp], [0.0, 1.0, 0.0], [-sp, 0.0, cp]])
    Rx = np.array([[1.0, 0.0, 0.0], [0.0, cr, -sr], [0.0, sr, cr]])
    dRz = np.array([[-sy, -cy, 0.0], [cy, -sy, 0.0], [0.0, 0.0, 0.0]])
    dRy = np.array([[-sp, 0.0, cp], [0.0, 0.0, 0.0], [-cp, 0.0, -sp]])
    dRx = np.array([[0.0, 0.0, 0.0], [0.0, -sr, -cr], [0.0, cr, -sr]])
    return [dRz @ Ry @ Rx, Rz @ dRy @ Rx, Rz @ Ry @ dRx]


def unit_translation(azimuth: float, elevation: float) -> np.ndarray:
    ce = math.cos(elevation)
    return np.array(
        [ce * math.cos(azimuth), ce * math.sin(azimuth), math.sin(elevation)]
    )


def unit_translation_derivatives(azimuth: float, elevation: float) -> tuple[np.ndarray, np.ndarray]:
    """(dT/dazimuth, dT/delevation) for the spherical parameterization."""
    ca, sa = math.cos(azimuth), math.sin(azimuth)
    ce, se = math.cos(elevation), math.sin(elevation)
    d_az = np.array([-ce * sa, ce * ca, 0.0])
    d_el = np.array([-se * ca, -se * sa, ce])
    return d_az, d_el


def unit_bearings(ps: PointSet) -> PointSet:
    """Normalize every point to a unit 3-vector (a bearing set, dim 3)."""
    norms = np.linalg.norm(ps.points, axis=1)
    bad = np.nonzero(norms < DEGENERACY_EPS)[0]
    if bad.size:
        raise DegenerateDirectionError(
            f"point {bad[0]} has near-zero norm", index=int(bad[0])
        )
    return PointSet(3, ps.points / norms[:, None], ps.gray)


def _check_degenerate(norms: np.ndarray, context: str):
    small = np.nonzero(norms < DEGENERACY_EPS)[0]
    if small.size:
        raise DegenerateDirectionError(
            f"{context}: direction for point {small[0]} has norm "
            f"{norms[small[0]]:.3e} below {DEGENERACY_EPS:g}",
            index=int(small[0]),
        )


def _raw_directions(model: CorrespondenceModel, pts: np.ndarray, theta: PoseParams) -> np.ndarray:
    """Pre-normalization mapped vectors, one row per point."""
    R = rotation_from_euler(theta.angles)
    kind = model.kind
    if kind == ModelKind.RIGID_3D:
        return pts @ R.T + theta.translation
    if kind == ModelKind.BEARING_3D_2D:
        return pts @ R.T + theta.translation
    if kind == ModelKind.EPIPOLAR_2D_2D:
        T = theta.unit_translation()
        return np.cross(T, pts @ R.T)
    if kind == ModelKind.HOMOGRAPHY_2D_2D:
        A = R + np.outer(theta.translation, model.plane_normal) / model.plane_offset
        return pts @ A.T
    raise ValueError(f"unknown model kind {kind!r}")


def map_points(model: CorrespondenceModel, pts, theta: PoseParams) -> np.ndarray:
    """Apply h(., theta) to an (N, 3) array of points.

    Rigid output is R p + T; every other kind returns unit 3-vectors.
    """
    pts = np.asarray(pts, dtype=np.float64).reshape(-1, 3)
    raw = _raw_directions(model, pts, theta)
    if model.kind == ModelKind.RIGID_3D:
        return raw
    norms = np.linalg.norm(raw, axis=1)
    _check_degenerate(norms, "map_points")
    return raw / norms[:, None]


def map_q_points(model: CorrespondenceModel, pts, theta: PoseParams) -> np.ndarray:
    """Apply g(., theta): identity except for the epipolar model."""
    pts = np.asarray(pts, dtype=np.float64).reshape(-1, 3)
    if model.kind != ModelKind.EPIPOLAR_2D_2D:
        return pts.copy()
    T = theta.unit_translation()
    raw = np.cross(T, pts)
    norms = np.linalg.norm(raw, axis=1)
    _check_degenerate(norms, "map_q_points")
    return raw / norms[:, None]


def map_points_masked(
    model: CorrespondenceModel, pts, theta: PoseParams
) -> tuple[np.ndarray, np.ndarray]:
    """Like :func:`map_points` but flags degenerate rows instead of raising.

    Returns (mapped, valid) where invalid rows hold zeros.
    """
    pts = np.asarray(pts, dtype=np.float64).reshape(-1, 3)
    raw = _raw_directions(model, pts, theta)
    if model.kind == ModelKind.RIGID_3D:
        return raw, np.ones(pts.shape[0], dtype=bool)
    norms = np.linalg.norm(raw, axis=1)
    valid = norms >= DEGENERACY_EPS
    out = np.zeros_like(raw)
    out[valid] = raw[valid] / norms[valid, None]
    return out, valid


def map_q_points_masked(
    model: CorrespondenceModel, pts, theta: PoseParams
) -> tuple[np.ndarray, np.ndarray]:
    """Like :func:`map_q_points` but flags degenerate rows instead of raising."""
    pts = np.asarray(pts, dtype=np.float64).reshape(-1, 3)
    if model.kind != ModelKind.EPIPOLAR_2D_2D:
        return pts.copy(), np.ones(pts.shape[0], dtype=bool)
    T = theta.unit_translation()
    raw = np.cross(T, pts)
    norms = np.linalg.norm(raw, axis=1)
    valid = norms >= DEGENERACY_EPS
    out = np.zeros_like(raw)
    out[valid] = raw[valid] / norms[valid, None]
    return out, valid


def apply_model(model: CorrespondenceModel, p, theta: PoseParams) -> np.ndarray:
    """h(p, theta) for a single point."""
    return map_points(model, np.asarray(p, dtype=np.float64).reshape(1, 3), theta)[0]


def apply_q_model(model: CorrespondenceModel, q, theta: PoseParams) -> np.ndarray:
    """g(q, theta) for a single point (identity unless epipolar)."""
    return map_q_points(model, np.asarray(q, dtype=np.float64).reshape(1, 3), theta)[0]


def _normalize_with_derivs(raw: np.ndarray, draw: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Unit-normalize rows of raw, with the matching derivative chain.

    draw has shape (n_params, N, 3); returns (H, dH) with the same layout.
    """
    norms = np.linalg.norm(raw, axis=1)
    _check_degenerate(norms, "map_points")
    H = raw / norms[:, None]
    inner = np.einsum("nk,jnk->jn", H, draw)
    dH = (draw - H[None, :, :] * inner[:, :, None]) / norms[None, :, None]
    return H, dH


def map_points_with_derivs(
    model: CorrespondenceModel, pts, theta: PoseParams
) -> tuple[np.ndarray, np.ndarray]:
    """h(p, theta) plus dh/dtheta for every point.

    Returns (H, dH) with H of shape (N, 3) and dH of shape (dim_theta, N, 3).
    """
    pts = np.asarray(pts, dtype=np.float64).reshape(-1, 3)
    n = pts.shape[0]
    R = rotation_from_euler(theta.angles)
    dRs = rotation_derivatives(theta.angles)
    kind = model.kind

    if kind in (ModelKind.RIGID_3D, ModelKind.BEARING_3D_2D):
        raw = pts @ R.T + theta.translation
        draw = np.empty((6, n, 3))
        for j in range(3):
            draw[j] = pts @ dRs[j].T
        for j in range(3):
            e = np.zeros(3)
            e[j] = 1.0
            draw[3 + j] = np.broadcast_to(e, (n, 3))
        if kind == ModelKind.RIGID_3D:
            return raw, draw
        return _normalize_with_derivs(raw, draw)

    if kind == ModelKind.HOMOGRAPHY_2D_2D:
        nvec, d = model.plane_normal, model.plane_offset
        A = R + np.outer(theta.translation, nvec) / d
        raw = pts @ A.T
        scale = (pts @ nvec) / d
        draw = np.empty((6, n, 3))
        for j in range(3):
            draw[j] = pts @ dRs[j].T
        for j in range(3):
            col = np.zeros((n, 3))
            col[:, j] = scale
            draw[3 + j] = col
        return _normalize_with_derivs(raw, draw)

    if kind == ModelKind.EPIPOLAR_2D_2D:
        az, el = theta.translation
        T = unit_translation(az, el)
        dT_az, dT_el = unit_translation_derivatives(az, el)
        RP = pts @ R.T
        raw = np.cross(T, RP)
        draw = np.empty((5, n, 3))
        for j in range(3):
            draw[j] = np.cross(T, pts @ dRs[j].T)
        draw[3] = np.cross(dT_az, RP)
        draw[4] = np.cross(dT_el, RP)
        return _normalize_with_derivs(raw, draw)

    raise ValueError(f"unknown model kind {kind!r}")


def map_q_points_with_derivs(
    model: CorrespondenceModel, pts, theta: PoseParams
) -> tuple[np.ndarray, np.ndarray]:
    """g(q, theta) plus dg/dtheta (zero except for the epipolar model)."""
    pts = np.asarray(pts, dtype=np.float64).reshape(-1, 3)
    n = pts.shape[0]
    if model.kind != ModelKind.EPIPOLAR_2D_2D:
        return pts.copy(), np.zeros((model.theta_dim, n, 3))
    az, el = theta.translation
    T = unit_translation(az, el)
    dT_az, dT_el = unit_translation_derivatives(az, el)
    raw = np.cross(T, pts)
    draw = np.zeros((5, n, 3))
    draw[3] = np.cross(dT_az, pts)
    draw[4] = np.cross(dT_el, pts)
    return _normalize_with_derivs(raw, draw)
