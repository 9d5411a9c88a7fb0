"""Scikit-learn style facade over the correspondence-free solver.

The estimator treats the two point sets like (X, Y) in a paired-data
problem: ``fit(X, Y)`` recovers the pose relating them, ``predict(X)``
maps points through the fitted pose, and the usual ``get_params`` /
``set_params`` / ``clone`` machinery works, so the estimator composes
with the wider ecosystem.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .features import get_basis
from .geometry import CorrespondenceModel, ModelKind, map_points, rotation_from_euler
from .robust import RansacConfig, occlusion_filter, ransac_solve
from .solver import Problem, SolverConfig, solve
from .validation import as_first_set, as_pose, as_second_set


class CorrespondenceFreePoseEstimator(BaseEstimator):
    """Relative pose from two unordered point sets, no correspondences.

    Parameters
    ----------
    model : str, default="bearing"
        One of "rigid", "bearing", "epipolar", "homography".
    basis : str, default="paper18"
        Name of the feature basis, or a FeatureBasis instance.
    normalize : bool or None, default=None
        Center/scale the observation side before aggregation. None keeps
        the per-model default (on for "bearing", off otherwise).
    plane_normal, plane_offset : array-like, float
        Plane data, required for the homography model.
    theta0 : array-like or None
        Initial pose vector; zeros when omitted.
    multistart : int, default=0
        Extra randomized restarts around theta0; best objective wins.
    ransac : bool, default=False
        Use subset-consensus outlier rejection.
    ransac_hypotheses, ransac_fraction, ransac_threshold
        RANSAC knobs; see :class:`RansacConfig`.
    occlusion_clusters : int or None
        When set, pre-filter both sets by gray-cluster pairing with this
        many k-means clusters per side.
    occlusion_keep : int or None
        Number of cluster pairs to keep (default: clusters - 1).
    max_iters, gradient_tol, step_tol, jacobian : solver settings.
    random_state : int, default=0
        Seed for multistart and RANSAC subsets.

    Attributes
    ----------
    theta_ : ndarray of shape (5,) or (6,)
        Estimated pose vector (Euler angles + translation block).
    rotation_ : ndarray of shape (3, 3)
    translation_ : ndarray
        Translation block (unit direction vector for "epipolar").
    estimate_ : Estimate
        Full solver output.
    inlier_mask_p_, inlier_mask_q_ : ndarray of bool or None
        Set when ransac=True, aligned with the fitted inputs.
    """

    def __init__(
        self,
        model="bearing",
        basis="paper18",
        normalize=None,
        plane_normal=None,
        plane_offset=None,
        theta0=None,
        multistart=0,
        ransac=False,
        ransac_hypotheses=50,
        ransac_fraction=0.5,
        ransac_threshold=None,
        occlusion_clusters=None,
        occlusion_keep=None,
        max_iters=200,
        gradient_tol=1e-10,
        step_tol=1e-12,
        jacobian="analytic",
        random_state=0,
    ):
        self.model = model
        self.basis = basis
        self.normalize = normalize
        self.plane_normal = plane_normal
        self.plane_offset = plane_offset
        self.theta0 = theta0
        self.multistart = multistart
        self.ransac = ransac
        self.ransac_hypotheses = ransac_hypotheses
        self.ransac_fraction = ransac_fraction
        self.ransac_threshold = ransac_threshold
        self.occlusion_clusters = occlusion_clusters
        self.occlusion_keep = occlusion_keep
        self.max_iters = max_iters
        self.gradient_tol = gradient_tol
        self.step_tol = step_tol
        self.jacobian = jacobian
        self.random_state = random_state

    def _correspondence_model(self) -> CorrespondenceModel:
        kind = ModelKind(self.model)
        if kind == ModelKind.HOMOGRAPHY_2D_2D:
            return CorrespondenceModel(kind, plane_normal=self.plane_normal,
                                       plane_offset=self.plane_offset)
        return CorrespondenceModel(kind)

    def _basis(self):
        return get_basis(self.basis) if isinstance(self.basis, str) else self.basis

    def _solver_config(self) -> SolverConfig:
        return SolverConfig(
            max_iters=self.max_iters,
            gradient_tol=self.gradient_tol,
            step_tol=self.step_tol,
            jacobian_mode=self.jacobian,
        )

    def build_problem(self, X, Y, gray_x=None, gray_y=None) -> Problem:
        model = self._correspondence_model()
        set_p = as_first_set(X, model.kind, gray=gray_x)
        set_q = as_second_set(Y, model.kind, gray=gray_y)
        if self.occlusion_clusters:
            set_p, set_q, _ = occlusion_filter(
                set_p, set_q, n_clusters=self.occlusion_clusters,
                keep=self.occlusion_keep, seed=self.random_state,
            )
        return Problem(model, set_p, set_q, self._basis(), normalize=self.normalize)

    def fit(self, X, Y, gray_x=None, gray_y=None):
        """Estimate the pose mapping set X onto set Y.

        X and Y are (N, 2) or (N, 3) arrays or PointSet instances; their
        lengths may differ and their row orders carry no meaning.
        """
        problem = self.build_problem(X, Y, gray_x, gray_y)
        kind = problem.model.kind
        if self.theta0 is None:
            theta0 = np.zeros(problem.theta_dim)
        else:
            theta0 = as_pose(self.theta0, kind).as_vector()

        starts = [theta0]
        if self.multistart:
            rng = np.random.default_rng(self.random_state)
            for _ in range(int(self.multistart)):
                starts.append(theta0 + 0.2 * rng.standard_normal(problem.theta_dim))

        scfg = self._solver_config()
        self.inlier_mask_p_ = None
        self.inlier_mask_q_ = None
        best = None
        for start in starts:
            if self.ransac:
                rcfg = RansacConfig(
                    subset_fraction=self.ransac_fraction,
                    hypotheses=self.ransac_hypotheses,
                    threshold=self.ransac_threshold,
                    seed=self.random_state,
                )
                est, mask_p, mask_q = ransac_solve(problem, start, rcfg, scfg)
                cand = (est.objective, est, mask_p, mask_q)
            else:
                est = solve(problem, start, scfg)
                cand = (est.objective, est, None, None)
            if best is None or cand[0] < best[0]:
                best = cand

        _, est, mask_p, mask_q = best
        self.estimate_ = est
        self.theta_ = est.theta.as_vector()
        self.rotation_ = rotation_from_euler(est.theta.angles)
        if kind == ModelKind.EPIPOLAR_2D_2D:
            self.translation_ = est.theta.unit_translation()
        else:
            self.translation_ = est.theta.translation.copy()
        self.inlier_mask_p_ = mask_p
        self.inlier_mask_q_ = mask_q
        self.n_iter_ = est.iterations
        self.objective_ = est.objective
        return self

    def _check_fitted(self):
        if not hasattr(self, "estimate_"):
            raise NotFittedError("call fit before predict/score")

    def predict(self, X):
        """Map points through the fitted pose (h(x, theta_hat))."""
        self._check_fitted()
        model = self._correspondence_model()
        set_p = as_first_set(X, model.kind)
        return map_points(model, set_p.points, self.estimate_.theta)

    def score(self, X, Y):
        """Negative squared residual norm of the fitted pose on (X, Y)."""
        self._check_fitted()
        problem = self.build_problem(X, Y)
        return -problem.objective(self.estimate_.theta)
