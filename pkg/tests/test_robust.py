import numpy as np
import pytest

from cfpose import (
    CorrespondenceModel,
    ModelKind,
    NoConsensusError,
    PointSet,
    RansacConfig,
    SceneConfig,
    default_basis_18,
    gen_occlusion_scene,
    kmeans_gray,
    occlusion_filter,
    pair_clusters,
    per_point_residual,
    random_theta,
    ransac_solve,
    solve,
)
from cfpose.robust import GrayCluster
from cfpose.solver import Problem, SolverConfig
from conftest import rigid_problem

FAST = SolverConfig(init_damping=1.0, damping_down=0.3, max_iters=300)


class TestPerPointResidual:
    def test_exact_data_gives_zeros(self):
        problem, theta, p_set, q_set, _ = rigid_problem(seed=1)
        res = per_point_residual(theta, p_set, q_set, problem.model)
        assert np.all(res < 1e-10)

    def test_far_q_outlier_does_not_raise_p_residuals(self):
        problem, theta, p_set, q_set, _ = rigid_problem(seed=2)
        res_before = per_point_residual(theta, p_set, q_set, problem.model)
        augmented = PointSet(3, np.vstack([q_set.points, [[50.0, 50.0, 50.0]]]))
        res_after = per_point_residual(theta, p_set, augmented, problem.model)
        assert np.all(res_after <= res_before + 1e-15)

    def test_p_outlier_residual_matches_brute_force(self):
        problem, theta, p_set, q_set, _ = rigid_problem(seed=3)
        outlier = np.array([[10.0, -10.0, 5.0]])
        p_aug = PointSet(3, np.vstack([p_set.points, outlier]))
        res = per_point_residual(theta, p_aug, q_set, problem.model)
        from cfpose.geometry import map_points

        mapped = map_points(problem.model, outlier, theta)[0]
        brute = np.min(np.linalg.norm(q_set.points - mapped, axis=1))
        assert res[-1] == pytest.approx(brute, rel=1e-12)


class TestRansac:
    def test_clean_data_keeps_everything(self):
        problem, theta, *_ = rigid_problem(seed=4, n_points=60)
        rng = np.random.default_rng(0)
        theta0 = theta.as_vector() + 0.05 * rng.standard_normal(6)
        plain = solve(problem, theta0, FAST)
        est, mask_p, mask_q = ransac_solve(
            problem, theta0, RansacConfig(hypotheses=5, seed=1), FAST
        )
        assert mask_p.all() and mask_q.all()
        assert np.linalg.norm(est.theta.as_vector() - plain.theta.as_vector()) < 1e-8

    def test_config_validation(self):
        with pytest.raises(ValueError):
            RansacConfig(hypotheses=0)
        with pytest.raises(ValueError):
            RansacConfig(subset_fraction=0.0)
        with pytest.raises(ValueError):
            RansacConfig(threshold=-1.0)

    def test_no_consensus_raised_for_impossible_threshold(self):
        problem, theta, *_ = rigid_problem(seed=5, n_points=30)
        cfg = RansacConfig(hypotheses=3, threshold=1e-15, seed=0)
        with pytest.raises(NoConsensusError):
            ransac_solve(problem, theta.as_vector() + 0.3, cfg, FAST)

    def test_refit_objective_beats_plain_estimate_on_inlier_sets(self):
        problem, theta, p_set, q_set, _ = rigid_problem(seed=7, n_points=50)
        bad = np.array([[8.0, -9.0, 7.0], [8.1, -9.1, 7.1]])
        q_aug = PointSet(3, np.vstack([q_set.points, bad]))
        prob = Problem(problem.model, p_set, q_aug, problem.basis)
        rng = np.random.default_rng(3)
        theta0 = theta.as_vector() + 0.05 * rng.standard_normal(6)
        plain = solve(prob, theta0, FAST)
        est, mask_p, mask_q = ransac_solve(
            prob, theta0, RansacConfig(hypotheses=4, seed=4), FAST)
        inlier_problem = Problem(
            prob.model,
            PointSet(3, p_set.points[mask_p]),
            PointSet(3, q_aug.points[mask_q]),
            prob.basis,
        )
        assert est.objective <= inlier_problem.objective(plain.theta) + 1e-18

    def test_masks_align_with_input_order(self):
        # inject one far outlier at a known input position and check the
        # returned mask flags exactly that row
        problem, theta, p_set, q_set, _ = rigid_problem(seed=6, n_points=50)
        bad = np.array([[30.0, 31.0, -20.0]])
        q_aug = PointSet(3, np.vstack([q_set.points[:25], bad, q_set.points[25:]]))
        prob = Problem(problem.model, p_set, q_aug, problem.basis)
        rng = np.random.default_rng(1)
        est, mask_p, mask_q = ransac_solve(
            prob, theta.as_vector() + 0.05 * rng.standard_normal(6),
            RansacConfig(hypotheses=5, seed=2), FAST,
        )
        assert not mask_q[25]
        assert mask_q.sum() == len(q_aug) - 1
        assert mask_p.all()


class TestKmeansGray:
    def test_two_separated_clusters(self):
        clusters = kmeans_gray([0.0, 0.0, 0.0, 1.0, 1.0, 1.0], 2, seed=0)
        assert len(clusters) == 2
        assert clusters[0].mean == pytest.approx(0.0)
        assert clusters[1].mean == pytest.approx(1.0)
        assert sorted(clusters[0].indices) == [0, 1, 2]
        assert sorted(clusters[1].indices) == [3, 4, 5]

    def test_single_cluster_is_global_mean(self):
        g = [0.1, 0.4, 0.7]
        clusters = kmeans_gray(g, 1, seed=0)
        assert len(clusters) == 1
        assert clusters[0].mean == pytest.approx(np.mean(g))

    def test_partition_is_locally_optimal(self):
        rng = np.random.default_rng(7)
        g = rng.random(60)
        clusters = kmeans_gray(g, 3, seed=1)
        assign = np.empty(60, dtype=int)
        for c, cl in enumerate(clusters):
            assign[cl.indices] = c
        means = np.array([cl.mean for cl in clusters])

        def wcss(a):
            return sum(
                np.sum((g[a == c] - g[a == c].mean()) ** 2) for c in range(3) if (a == c).any()
            )

        base = wcss(assign)
        for i in range(60):
            for c in range(3):
                if c == assign[i]:
                    continue
                trial = assign.copy()
                trial[i] = c
                assert wcss(trial) >= base - 1e-9

    def test_deterministic_and_order_insensitive(self):
        rng = np.random.default_rng(8)
        g = rng.random(40)
        a = kmeans_gray(g, 4, seed=3)
        b = kmeans_gray(g, 4, seed=3)
        perm = rng.permutation(40)
        c = kmeans_gray(g[perm], 4, seed=3)
        assert [cl.mean for cl in a] == [cl.mean for cl in b]
        # same partition of values, up to the permutation of point indices
        for cl_a, cl_c in zip(a, c):
            np.testing.assert_allclose(
                np.sort(g[cl_a.indices]), np.sort(g[perm][cl_c.indices]), atol=0
            )

    def test_preconditions(self):
        with pytest.raises(ValueError):
            kmeans_gray([0.1, 0.2], 3, seed=0)
        with pytest.raises(ValueError):
            kmeans_gray([0.1, 0.2], 0, seed=0)


class TestPairClusters:
    def _clusters(self, means):
        return [GrayCluster(indices=np.array([i]), mean=m) for i, m in enumerate(means)]

    def test_identical_distributions_pair_at_zero_distance(self):
        sp = self._clusters([0.1, 0.5, 0.9])
        sq = self._clusters([0.1, 0.5, 0.9])
        pairing = pair_clusters(sp, sq, keep=3)
        assert all(d == 0.0 for d in pairing.distances)
        assert sorted(pairing.pairs) == [(0, 0), (1, 1), (2, 2)]

    def test_keep_zero_gives_empty_pairing(self):
        sp = self._clusters([0.1])
        assert len(pair_clusters(sp, sp, keep=0)) == 0

    def test_one_to_one_greedy(self):
        sp = self._clusters([0.0, 0.2])
        sq = self._clusters([0.05, 1.0])
        pairing = pair_clusters(sp, sq, keep=2)
        # cluster q0 pairs with p0 (distance 0.05); p1 must take q1
        assert pairing.pairs == ((0, 0), (1, 1))

    def test_keep_bounds_checked(self):
        sp = self._clusters([0.1])
        with pytest.raises(ValueError):
            pair_clusters(sp, sp, keep=2)


class TestOcclusionPipeline:
    def test_occluder_cluster_is_excluded(self):
        rng = np.random.default_rng(10)
        theta = random_theta(rng, ModelKind.BEARING_3D_2D)
        cfg = SceneConfig(theta_star=theta, n_points=800, seed=11)
        p_set, q_set, meta = gen_occlusion_scene(cfg, occluded_fraction=0.2, seed=12)
        sub_p, sub_q, pairing = occlusion_filter(p_set, q_set, n_clusters=8, keep=6, seed=13)
        assert np.all(sub_q.gray < 0.85)  # occluders live near 0.95
        assert len(sub_q) < len(q_set)

    def test_estimation_succeeds_after_filtering(self):
        rng = np.random.default_rng(14)
        theta = random_theta(rng, ModelKind.BEARING_3D_2D)
        cfg = SceneConfig(theta_star=theta, n_points=800, seed=15)
        p_set, q_set, _ = gen_occlusion_scene(cfg, occluded_fraction=0.2, seed=16)
        sub_p, sub_q, _ = occlusion_filter(p_set, q_set, n_clusters=8, keep=6, seed=17)
        problem = Problem(CorrespondenceModel(ModelKind.BEARING_3D_2D), sub_p, sub_q,
                          default_basis_18())
        est = solve(problem, theta.as_vector() + 0.1 * rng.standard_normal(6), FAST)
        assert np.linalg.norm(est.theta.as_vector() - theta.as_vector()) <= 0.1

    def test_gray_required(self):
        problem, theta, p_set, q_set, _ = rigid_problem(seed=18)
        with pytest.raises(ValueError, match="gray"):
            occlusion_filter(p_set, q_set)
