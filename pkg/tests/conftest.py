"""Shared helpers: independent oracles and scene shortcuts for the tests."""

import numpy as np
import pytest

from cfpose import (
    CorrespondenceModel,
    ModelKind,
    SceneConfig,
    default_basis_18,
    gen_scene,
    random_theta,
)
from cfpose.solver import Problem


def kabsch_fit(A, B):
    """Closed-form rigid fit A -> B with known correspondences (SVD).

    Kept independent of the package so it can serve as an oracle.
    """
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    cA, cB = A.mean(axis=0), B.mean(axis=0)
    U, _, Vt = np.linalg.svd((A - cA).T @ (B - cB))
    R = Vt.T @ U.T
    if np.linalg.det(R) < 0:
        Vt[-1, :] *= -1
        R = Vt.T @ U.T
    return R, cB - R @ cA


def bearing_problem(seed=0, n_points=300, theta_scale=0.2):
    """A small exact bearing scene plus its problem and ground truth."""
    rng = np.random.default_rng(seed)
    theta = random_theta(rng, ModelKind.BEARING_3D_2D, scale=theta_scale)
    cfg = SceneConfig(theta_star=theta, n_points=n_points, seed=seed + 1)
    p_set, q_set, oracle = gen_scene(cfg, ModelKind.BEARING_3D_2D)
    problem = Problem(
        CorrespondenceModel(ModelKind.BEARING_3D_2D), p_set, q_set, default_basis_18()
    )
    return problem, theta, p_set, q_set, oracle


def rigid_problem(seed=0, n_points=40, theta_scale=0.3):
    rng = np.random.default_rng(seed)
    theta = random_theta(rng, ModelKind.RIGID_3D, scale=theta_scale)
    cfg = SceneConfig(theta_star=theta, n_points=n_points, seed=seed + 1)
    p_set, q_set, oracle = gen_scene(cfg, ModelKind.RIGID_3D)
    problem = Problem(
        CorrespondenceModel(ModelKind.RIGID_3D), p_set, q_set, default_basis_18()
    )
    return problem, theta, p_set, q_set, oracle


def write_ppm(path, raster):
    """Minimal independent P6 writer (no imaging library involved)."""
    raster = np.asarray(raster, dtype=np.uint8)
    h, w = raster.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode())
        fh.write(raster.tobytes())


@pytest.fixture
def tiny_scene():
    return bearing_problem(seed=3, n_points=120)
