"""Least-squares pose recovery from aggregate feature residuals.

The residual is r(theta) = F_p(theta) - F_q, the difference between the
aggregate feature vectors of the mapped first set and of the second set.
For the epipolar model both sides depend on theta, so F_q is recomputed
per evaluation instead of being cached.

Minimization is damped Gauss-Newton (Levenberg-Marquardt) with
multiplicative damping. The generic core :func:`levenberg_marquardt`
works on any residual callable; :func:`solve` wires it to a
:class:`Problem`.

Determinism: a Problem canonicalizes the storage order of both point
sets at construction (lexicographic sort), so every downstream quantity,
and therefore the solve output, is bit-identical under any permutation
of the inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import DegenerateDirectionError, NonFiniteError
from .features import (
    FeatureBasis,
    NormalizationStats,
    aggregate,
    compute_stats,
)
from .geometry import (
    CorrespondenceModel,
    ModelKind,
    PointSet,
    PoseParams,
    map_points_with_derivs,
    map_q_points_with_derivs,
    unit_bearings,
)

JACOBIAN_MODES = ("analytic", "forward-diff", "central-diff")


@dataclass(frozen=True)
class SolverConfig:
    max_iters: int = 200
    gradient_tol: float = 1e-10
    step_tol: float = 1e-12
    init_damping: float = 1e-3
    damping_up: float = 10.0
    damping_down: float = 0.1
    jacobian_mode: str = "analytic"

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        for name in ("gradient_tol", "step_tol", "init_damping"):
            if not (getattr(self, name) > 0.0):
                raise ValueError(f"{name} must be positive")
        if not (self.damping_up > 1.0 and 0.0 < self.damping_down < 1.0):
            raise ValueError("damping factors must satisfy up > 1 and 0 < down < 1")
        if self.jacobian_mode not in JACOBIAN_MODES:
            raise ValueError(f"jacobian_mode must be one of {JACOBIAN_MODES}")


@dataclass(frozen=True)
class Estimate:
    """Solver output: best parameters found plus convergence bookkeeping."""

    theta: PoseParams
    objective: float
    iterations: int
    reason: str  # gradient | step | max_iters | stalled
    residual: np.ndarray
    trace: np.ndarray = field(default_factory=lambda: np.empty(0))


@dataclass(frozen=True)
class LMResult:
    x: np.ndarray
    objective: float
    residual: np.ndarray
    iterations: int
    reason: str
    trace: np.ndarray


def levenberg_marquardt(residual_fn, x0, config: SolverConfig = SolverConfig(), jacobian_fn=None):
    """Minimize |residual_fn(x)|^2 from x0.

    residual_fn maps an (n,) vector to an (m,) residual. jacobian_fn, if
    given, returns the (m, n) Jacobian; otherwise forward differences are
    used. Raises NonFiniteError when the objective is NaN/Inf at a point
    the solver has accepted; trial steps that go non-finite or degenerate
    are simply rejected.
    """
    x = np.asarray(x0, dtype=np.float64).reshape(-1).copy()

    if jacobian_fn is None:
        def jacobian_fn(v, _h=1e-8):
            r0 = residual_fn(v)
            J = np.empty((r0.size, v.size))
            for j in range(v.size):
                step = np.zeros_like(v)
                step[j] = _h
                J[:, j] = (residual_fn(v + step) - r0) / _h
            return J

    r = np.asarray(residual_fn(x), dtype=np.float64).reshape(-1)
    cost = float(r @ r)
    if not np.isfinite(cost):
        raise NonFiniteError("objective is not finite at the initial point", last_theta=x)

    lam = config.init_damping
    trace = [cost]
    reason = "max_iters"
    iterations = 0

    for it in range(1, config.max_iters + 1):
        iterations = it
        J = np.asarray(jacobian_fn(x), dtype=np.float64)
        g = J.T @ r
        if not np.all(np.isfinite(g)):
            raise NonFiniteError("gradient is not finite", last_theta=x)
        if np.max(np.abs(g)) < config.gradient_tol:
            reason = "gradient"
            break
        JtJ = J.T @ J
        # Marquardt-Fletcher scaling: damp along diag(JtJ) so badly scaled
        # parameter blocks do not stall the step
        diag = np.diag(JtJ).copy()
        diag[diag < 1e-12] = 1e-12

        # inner loop: inflate damping until a strictly improving step appears
        accepted = False
        delta = None
        while lam < 1e14:
            try:
                delta = np.linalg.solve(JtJ + lam * np.diag(diag), -g)
            except np.linalg.LinAlgError:
                lam *= config.damping_up
                continue
            x_new = x + delta
            try:
                r_new = np.asarray(residual_fn(x_new), dtype=np.float64).reshape(-1)
            except DegenerateDirectionError:
                lam *= config.damping_up
                continue
            cost_new = float(r_new @ r_new)
            if np.isfinite(cost_new) and cost_new < cost:
                x, r, cost = x_new, r_new, cost_new
                lam = max(lam * config.damping_down, 1e-15)
                accepted = True
                trace.append(cost)
                break
            lam *= config.damping_up
        if not accepted:
            reason = "stalled"
            break
        if float(np.linalg.norm(delta)) < config.step_tol:
            reason = "step"
            break

    return LMResult(
        x=x,
        objective=cost,
        residual=r,
        iterations=iterations,
        reason=reason,
        trace=np.asarray(trace),
    )


def _q_side_bearings(model: CorrespondenceModel, set_q: PointSet) -> PointSet:
    """The theta-independent representation of the second set."""
    if model.kind == ModelKind.RIGID_3D:
        return set_q
    if model.kind in (ModelKind.BEARING_3D_2D, ModelKind.HOMOGRAPHY_2D_2D):
        return unit_bearings(set_q)
    raise ValueError("epipolar second side depends on theta")


def _canonical_order(ps: PointSet) -> tuple[PointSet, np.ndarray]:
    """Lexicographic point order; makes downstream numerics independent of
    input permutation. The +0.0 normalizes any -0.0 entries first."""
    pts = ps.points + 0.0
    keys = [pts[:, 2], pts[:, 1], pts[:, 0]]
    if ps.gray is not None:
        keys.insert(0, ps.gray + 0.0)
    order = np.lexsort(keys)
    gray = None if ps.gray is None else (ps.gray + 0.0)[order]
    return PointSet(ps.dim, pts[order], gray), order


class Problem:
    """An estimation instance: model, two point sets, basis, normalization.

    normalize=None applies the model default (on for the bearing model,
    off otherwise). Normalization stats always come from the second set
    and are shared with the mapped side. The epipolar model cannot be
    normalized because its second side is theta-dependent.
    """

    def __init__(
        self,
        model: CorrespondenceModel,
        set_p: PointSet,
        set_q: PointSet,
        basis: FeatureBasis,
        normalize: bool | None = None,
    ):
        self.model = model
        self.basis = basis
        if basis.size < model.theta_dim:
            raise ValueError(
                f"basis produces {basis.size} aggregate features but theta has "
                f"{model.theta_dim}; need at least as many features as parameters"
            )
        self._validate_dims(model, set_p, set_q)
        # order_p/order_q satisfy set_p.points[i] == input.points[order_p[i]],
        # so callers can map per-point results back to their own ordering.
        self.set_p, self.order_p = _canonical_order(set_p)
        self.set_q, self.order_q = _canonical_order(set_q)
        self.q_depends_on_theta = model.kind == ModelKind.EPIPOLAR_2D_2D

        if normalize is None:
            normalize = model.kind == ModelKind.BEARING_3D_2D
        if normalize and self.q_depends_on_theta:
            raise ValueError("normalization is not available for the epipolar model")
        self.normalize = bool(normalize)

        self.stats: NormalizationStats | None = None
        self._fq: np.ndarray | None = None
        if not self.q_depends_on_theta:
            q_rep = _q_side_bearings(model, self.set_q)
            if self.normalize:
                self.stats = compute_stats(q_rep.points)
                q_rep = PointSet(3, self.stats.apply(q_rep.points), q_rep.gray)
            self._fq = aggregate(q_rep, basis).values

    @staticmethod
    def _validate_dims(model, set_p, set_q):
        kind = model.kind
        if kind == ModelKind.RIGID_3D and (set_p.dim != 3 or set_q.dim != 3):
            raise ValueError("rigid model needs 3D point sets on both sides")
        if kind in (ModelKind.EPIPOLAR_2D_2D, ModelKind.HOMOGRAPHY_2D_2D):
            if set_p.dim != 2 or set_q.dim != 2:
                raise ValueError(f"{kind.value} model needs homogeneous 2D sets")
        if kind == ModelKind.BEARING_3D_2D and set_q.dim not in (2, 3):
            raise ValueError("bearing model second set must be image points or bearings")

    @property
    def theta_dim(self) -> int:
        return self.model.theta_dim

    def _as_pose(self, theta) -> PoseParams:
        if isinstance(theta, PoseParams):
            if theta.dim != self.theta_dim:
                raise ValueError(f"theta has dim {theta.dim}, model needs {self.theta_dim}")
            return theta
        vec = np.asarray(theta, dtype=np.float64).reshape(-1)
        if vec.size != self.theta_dim:
            raise ValueError(f"theta has dim {vec.size}, model needs {self.theta_dim}")
        return PoseParams.from_vector(vec)

    def _fp_values(self, pose: PoseParams) -> np.ndarray:
        from .features import aggregate_mapped

        return aggregate_mapped(self.set_p, self.model, pose, self.basis, self.stats).values

    def _fq_values(self, pose: PoseParams) -> np.ndarray:
        if self._fq is not None:
            return self._fq
        from .features import _exact_means
        from .geometry import map_q_points

        mapped = map_q_points(self.model, self.set_q.points, pose)
        feat = self.basis.values(mapped.T)
        return _exact_means(feat).reshape(-1)

    def residual(self, theta) -> np.ndarray:
        """F_p(theta) - F_q, a vector of length basis.size."""
        pose = self._as_pose(theta)
        try:
            return self._fp_values(pose) - self._fq_values(pose)
        except DegenerateDirectionError as exc:
            raise DegenerateDirectionError(
                f"{exc} (at theta {np.array2string(pose.as_vector(), precision=4)})",
                index=exc.index,
            ) from exc

    def objective(self, theta) -> float:
        r = self.residual(theta)
        return float(r @ r)

    def _side_jacobian(self, pts, pose, stats, mapper) -> np.ndarray:
        mapped, dmapped = mapper(self.model, pts, pose)
        scale = 1.0
        if stats is not None:
            mapped = stats.apply(mapped)
            scale = 1.0 / (2.0 * stats.sigma)
        dvals = self.basis.derivs(mapped.T)  # (F, 3, N)
        n = pts.shape[0]
        # J[(i, c), j] = mean_k f_i'(y_kc) * dy_j[k, c]
        J = np.einsum("fcn,jnc->fcj", dvals, dmapped) * (scale / n)
        return J.reshape(-1, dmapped.shape[0])

    def jacobian_analytic(self, theta) -> np.ndarray:
        pose = self._as_pose(theta)
        J = self._side_jacobian(self.set_p.points, pose, self.stats, map_points_with_derivs)
        if self.q_depends_on_theta:
            Jq = self._side_jacobian(self.set_q.points, pose, None, map_q_points_with_derivs)
            J = J - Jq
        return J

    def jacobian_fd(self, theta, central: bool = True) -> np.ndarray:
        vec = self._as_pose(theta).as_vector()
        h = 1e-6 if central else 1e-8
        cols = []
        r0 = None if central else self.residual(vec)
        for j in range(vec.size):
            step = np.zeros_like(vec)
            step[j] = h
            if central:
                cols.append((self.residual(vec + step) - self.residual(vec - step)) / (2 * h))
            else:
                cols.append((self.residual(vec + step) - r0) / h)
        return np.stack(cols, axis=1)

    def jacobian(self, theta, mode: str = "analytic") -> np.ndarray:
        if mode == "analytic":
            return self.jacobian_analytic(theta)
        if mode == "central-diff":
            return self.jacobian_fd(theta, central=True)
        if mode == "forward-diff":
            return self.jacobian_fd(theta, central=False)
        raise ValueError(f"jacobian mode must be one of {JACOBIAN_MODES}")


def residual(problem: Problem, theta) -> np.ndarray:
    return problem.residual(theta)


def jacobian(problem: Problem, theta, mode: str = "analytic") -> np.ndarray:
    return problem.jacobian(theta, mode)


def solve(problem: Problem, theta0, config: SolverConfig | None = None) -> Estimate:
    """Minimize the aggregate-feature residual from the given start.

    Deterministic given theta0; the sequence of accepted objective values
    (Estimate.trace) is non-increasing.
    """
    cfg = config or SolverConfig()
    pose0 = problem._as_pose(theta0)
    jac = None
    if cfg.jacobian_mode == "analytic":
        jac = problem.jacobian_analytic
    elif cfg.jacobian_mode == "central-diff":
        jac = lambda v: problem.jacobian_fd(v, central=True)  # noqa: E731
    res = levenberg_marquardt(problem.residual, pose0.as_vector(), cfg, jacobian_fn=jac)
    return Estimate(
        theta=PoseParams.from_vector(res.x),
        objective=res.objective,
        iterations=res.iterations,
        reason=res.reason,
        residual=res.residual,
        trace=res.trace,
    )
