import math

import numpy as np
import pytest

from cfpose import (
    GenerationError,
    ModelKind,
    NoiseConfig,
    PoseParams,
    SceneConfig,
    gen_occlusion_scene,
    gen_scene,
    inject_outliers,
    model_for,
    perturb,
    random_theta,
    subsample_mismatch,
)
from cfpose.geometry import map_points
from cfpose.simgen import CURVES, DEFAULT_N_POINTS


class TestGenScene:
    def test_identity_pose_gives_a_shuffle_of_p(self):
        cfg = SceneConfig(theta_star=PoseParams.identity(), n_points=50, seed=1)
        p, q, oracle = gen_scene(cfg, ModelKind.BEARING_3D_2D)
        np.testing.assert_allclose(q.points[oracle.perm], p.points, atol=1e-12)
        assert not np.array_equal(q.points, p.points)  # actually shuffled

    @pytest.mark.parametrize("kind", list(ModelKind))
    def test_mapping_relation_holds_per_true_pair(self, kind):
        rng = np.random.default_rng(2)
        theta = random_theta(rng, kind)
        cfg = SceneConfig(theta_star=theta, n_points=64, seed=3, depth=2.5,
                          curve="blob_wide" if kind == ModelKind.EPIPOLAR_2D_2D else "limacon")
        p, q, oracle = gen_scene(cfg, kind)
        model = model_for(kind, cfg)
        mapped = map_points(model, p.points, theta)
        partners = q.points[oracle.perm]
        if kind == ModelKind.RIGID_3D:
            np.testing.assert_allclose(mapped, partners, atol=1e-12)
        else:
            units = partners / np.linalg.norm(partners, axis=1)[:, None]
            if kind == ModelKind.EPIPOLAR_2D_2D:
                # h matches the g-image of the partner, not the partner itself
                from cfpose.geometry import map_q_points

                units = map_q_points(model, partners, theta)
            np.testing.assert_allclose(mapped, units, atol=1e-12)

    def test_default_point_count_is_3142(self):
        assert DEFAULT_N_POINTS == 3142
        assert SceneConfig(theta_star=PoseParams.identity()).n_points == 3142

    def test_deterministic_given_seed(self):
        rng = np.random.default_rng(4)
        theta = random_theta(rng, ModelKind.BEARING_3D_2D)
        cfg = SceneConfig(theta_star=theta, n_points=100, seed=5)
        p1, q1, o1 = gen_scene(cfg, ModelKind.BEARING_3D_2D)
        p2, q2, o2 = gen_scene(cfg, ModelKind.BEARING_3D_2D)
        assert p1.points.tobytes() == p2.points.tobytes()
        assert q1.points.tobytes() == q2.points.tobytes()
        assert o1.perm.tobytes() == o2.perm.tobytes()

    def test_behind_camera_rejected(self):
        theta = PoseParams(
            angles=PoseParams.identity().angles, translation=np.array([0.0, 0.0, -1.5])
        )
        cfg = SceneConfig(theta_star=theta, n_points=60, seed=6)
        with pytest.raises(GenerationError):
            gen_scene(cfg, ModelKind.BEARING_3D_2D)

    def test_unknown_curve_rejected(self):
        with pytest.raises(ValueError):
            SceneConfig(theta_star=PoseParams.identity(), curve="spiral")

    def test_available_curves(self):
        assert {"limacon", "limacon3", "circle", "lissajous", "blob", "blob_wide"} <= set(CURVES)


class TestPerturb:
    def test_zero_noise_is_identity(self):
        cfg = SceneConfig(theta_star=PoseParams.identity(), n_points=40, seed=7)
        _, q, _ = gen_scene(cfg, ModelKind.BEARING_3D_2D)
        out = perturb(q, NoiseConfig(b_p=0.0), seed=8)
        assert out is q

    def test_noise_variance_matches_scale(self):
        rng = np.random.default_rng(9)
        theta = random_theta(rng, ModelKind.BEARING_3D_2D)
        cfg = SceneConfig(theta_star=theta, n_points=3142, seed=10)
        _, q, _ = gen_scene(cfg, ModelKind.BEARING_3D_2D)
        b_p = 0.02
        out = perturb(q, NoiseConfig(b_p=b_p), seed=11)
        delta = (out.points - q.points)[:, :2].ravel()
        assert delta.var() == pytest.approx(b_p ** 2, rel=0.1)

    def test_homogeneous_coordinate_untouched(self):
        cfg = SceneConfig(theta_star=PoseParams.identity(), n_points=40, seed=12)
        _, q, _ = gen_scene(cfg, ModelKind.BEARING_3D_2D)
        out = perturb(q, NoiseConfig(b_p=0.5), seed=13)
        np.testing.assert_array_equal(out.points[:, 2], 1.0)


class TestSubsampleMismatch:
    def test_infinite_threshold_keeps_all(self):
        cfg = SceneConfig(theta_star=PoseParams.identity(), n_points=40, seed=14)
        _, q, _ = gen_scene(cfg, ModelKind.BEARING_3D_2D)
        out, idx = subsample_mismatch(q, math.inf, seed=15)
        assert len(out) == len(q) and len(idx) == len(q)

    @pytest.mark.parametrize("b_m,recorded_count", [(0.5, 1239), (1.0, 2149), (1.5, 2734)])
    def test_survivor_counts_in_binomial_band(self, b_m, recorded_count):
        # keep probability is erf(b_m / sqrt(2)); our draw and previously
        # recorded survivor counts for this protocol sit within 3 sigma of N*p
        cfg = SceneConfig(theta_star=PoseParams.identity(), n_points=3142, seed=16)
        _, q, _ = gen_scene(cfg, ModelKind.BEARING_3D_2D)
        p_keep = math.erf(b_m / math.sqrt(2.0))
        mean = 3142 * p_keep
        sigma = math.sqrt(3142 * p_keep * (1 - p_keep))
        out, _ = subsample_mismatch(q, b_m, seed=17)
        assert abs(len(out) - mean) <= 3 * sigma
        assert abs(recorded_count - mean) <= 3 * sigma

    def test_all_removed_is_an_error(self):
        cfg = SceneConfig(theta_star=PoseParams.identity(), n_points=40, seed=18)
        _, q, _ = gen_scene(cfg, ModelKind.BEARING_3D_2D)
        with pytest.raises(GenerationError):
            subsample_mismatch(q, 0.0, seed=19)


class TestInjectOutliers:
    def test_zero_count_is_identity(self):
        cfg = SceneConfig(theta_star=PoseParams.identity(), n_points=40, seed=20)
        _, q, _ = gen_scene(cfg, ModelKind.BEARING_3D_2D)
        out, labels = inject_outliers(q, 0, (-0.6, -0.4, 0.05, 0.05), seed=21)
        assert out is q and not labels.any()

    def test_stock_outlier_box(self):
        cfg = SceneConfig(theta_star=PoseParams.identity(), n_points=200, seed=22)
        _, q, _ = gen_scene(cfg, ModelKind.BEARING_3D_2D)
        box = (-0.6, -0.4, 0.05, 0.05)
        out, labels = inject_outliers(q, 150, box, seed=23)
        assert labels.sum() == 150 and len(out) == len(q) + 150
        injected = out.points[labels]
        assert np.all(injected[:, 0] >= -0.6) and np.all(injected[:, 0] <= -0.55)
        assert np.all(injected[:, 1] >= -0.4) and np.all(injected[:, 1] <= -0.35)
        np.testing.assert_array_equal(injected[:, 2], 1.0)

    def test_labels_cover_only_appended_rows(self):
        cfg = SceneConfig(theta_star=PoseParams.identity(), n_points=30, seed=24)
        _, q, _ = gen_scene(cfg, ModelKind.BEARING_3D_2D)
        out, labels = inject_outliers(q, 5, (-0.6, -0.4, 0.05, 0.05), seed=25)
        assert not labels[: len(q)].any() and labels[len(q):].all()


class TestOcclusionScene:
    def test_counts_and_gray_separation(self):
        rng = np.random.default_rng(26)
        theta = random_theta(rng, ModelKind.BEARING_3D_2D)
        cfg = SceneConfig(theta_star=theta, n_points=1000, seed=27)
        p, q, meta = gen_occlusion_scene(cfg, occluded_fraction=0.2, seed=28)
        assert meta["n_occluders"] == 200
        assert len(q) == 1000  # 800 visible + 200 occluders
        assert (q.gray > 0.85).sum() == 200
        assert p.gray is not None and np.all(p.gray <= 0.66)
