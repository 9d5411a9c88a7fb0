"""Input validation helpers shared by the estimator facade and the CLI."""

from __future__ import annotations

import numpy as np

from .geometry import ModelKind, PointSet, PoseParams


def check_points_array(X, name: str = "X") -> np.ndarray:
    """Coerce to a finite (N, 2) or (N, 3) float64 array."""
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] not in (2, 3) or arr.shape[0] == 0:
        raise ValueError(f"{name} must be a nonempty (N, 2) or (N, 3) array")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def as_pointset(X, dim: int, gray=None, name: str = "X") -> PointSet:
    """Build a PointSet of the requested semantic dimension.

    (N, 2) inputs are homogenized. For dim == 2, (N, 3) inputs must
    already be homogeneous.
    """
    if isinstance(X, PointSet):
        return X
    arr = check_points_array(X, name)
    if dim == 2:
        if arr.shape[1] == 2:
            return PointSet.from_image_points(arr, gray)
        return PointSet(2, arr, gray)
    if arr.shape[1] != 3:
        raise ValueError(f"{name} must have 3 columns for a 3D set")
    return PointSet(3, arr, gray)


def as_first_set(X, kind: ModelKind, gray=None, name: str = "X") -> PointSet:
    """First-set coercion. The bearing model accepts either homogeneous
    image rows or free 3D points; the 2D-2D models need homogeneous rows."""
    if isinstance(X, PointSet):
        return X
    if kind == ModelKind.RIGID_3D:
        return as_pointset(X, 3, gray, name)
    arr = check_points_array(X, name)
    if kind == ModelKind.BEARING_3D_2D and arr.shape[1] == 3 and not np.allclose(
        arr[:, 2], 1.0, atol=1e-12
    ):
        return PointSet(3, arr, gray)
    return as_pointset(arr, 2, gray, name)


def as_second_set(X, kind: ModelKind, gray=None, name: str = "Y") -> PointSet:
    """Second-set coercion. The bearing model accepts image rows or
    already-unit bearings; rigid needs 3D points; 2D-2D needs image rows."""
    if isinstance(X, PointSet):
        return X
    if kind == ModelKind.RIGID_3D:
        return as_pointset(X, 3, gray, name)
    arr = check_points_array(X, name)
    if kind == ModelKind.BEARING_3D_2D and arr.shape[1] == 3 and not np.allclose(
        arr[:, 2], 1.0, atol=1e-12
    ):
        return PointSet(3, arr, gray)
    return as_pointset(arr, 2, gray, name)


def as_pose(theta, kind: ModelKind, name: str = "theta0") -> PoseParams:
    if isinstance(theta, PoseParams):
        pose = theta
    else:
        pose = PoseParams.from_vector(theta)
    want = 5 if kind == ModelKind.EPIPOLAR_2D_2D else 6
    if pose.dim != want:
        raise ValueError(f"{name} has {pose.dim} parameters, {kind.value} needs {want}")
    return pose
