import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cfpose import (
    PointSet,
    ZeroSpreadError,
    aggregate,
    aggregate_mapped,
    basis_from_json,
    basis_to_json,
    default_basis_18,
    get_basis,
    normalize_bearing_set,
)
from cfpose.features import CallableFeature, FeatureBasis, Term, TermFeature, compute_stats
from conftest import bearing_problem


class TestStockBasis:
    def test_has_six_templates_and_size_18(self):
        b = default_basis_18()
        assert len(b.functions) == 6
        assert b.size == 18

    def test_published_values_at_zero(self):
        b = default_basis_18()
        # all terms of the first template vanish at 0
        assert b.functions[0](0.0) == pytest.approx(0.0, abs=1e-15)
        # constant cosine term of the second template
        assert b.functions[1](0.0) == pytest.approx(1.286, abs=1e-15)

    def test_third_template_at_one(self):
        # -0.7620*1 - 1.288*sin^2(pi) + 0.1921*cos(pi) = -0.9541
        b = default_basis_18()
        assert b.functions[2](1.0) == pytest.approx(-0.9541, abs=1e-12)

    def test_derivatives_match_central_differences(self):
        b = default_basis_18()
        x = np.linspace(-3.0, 3.0, 601)
        h = 1e-6
        for f in b.functions:
            fd = (f(x + h) - f(x - h)) / (2 * h)
            an = f.deriv(x)
            np.testing.assert_allclose(an, fd, atol=1e-6 * (1 + np.abs(an).max()))

    def test_registry_lookup(self):
        assert get_basis("paper18").name == "paper18"
        with pytest.raises(KeyError):
            get_basis("nope")


class TestBasisJson:
    def test_roundtrip(self):
        b = default_basis_18()
        doc = basis_to_json(b)
        b2 = basis_from_json(json.dumps(doc))
        x = np.linspace(-2, 2, 41)
        for f, g in zip(b.functions, b2.functions):
            np.testing.assert_array_equal(f(x), g(x))

    def test_unknown_term_kind_rejected(self):
        with pytest.raises(ValueError):
            Term("exp", 1.0)

    def test_callable_feature_pair(self):
        f = CallableFeature(lambda x: x ** 3, lambda x: 3 * x ** 2)
        assert f(2.0) == 8.0
        assert f.deriv(2.0) == 12.0


class TestNormalization:
    def test_antipodal_pair_centers_to_zero(self):
        ps = PointSet(3, np.array([[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]]))
        out, stats = normalize_bearing_set(ps)
        np.testing.assert_allclose(out.points.mean(axis=0), 0.0, atol=1e-12)

    def test_mean_is_zero_for_random_sets(self):
        rng = np.random.default_rng(0)
        raw = rng.standard_normal((200, 3))
        out, stats = normalize_bearing_set(PointSet(3, raw))
        np.testing.assert_allclose(out.points.mean(axis=0), 0.0, atol=1e-12)
        assert stats.sigma > 0

    def test_sigma_uses_n_minus_one_norm_form(self):
        rng = np.random.default_rng(1)
        raw = rng.standard_normal((50, 3))
        bearings = raw / np.linalg.norm(raw, axis=1)[:, None]
        mu = bearings.mean(axis=0)
        sigma = math.sqrt(np.sum(np.linalg.norm(bearings - mu, axis=1) ** 2) / 49)
        _, stats = normalize_bearing_set(PointSet(3, raw))
        assert stats.sigma == pytest.approx(sigma, rel=1e-12)
        np.testing.assert_allclose(stats.mean, mu, atol=1e-12)

    def test_identical_points_raise_zero_spread(self):
        ps = PointSet(3, np.tile([0.0, 0.0, 1.0], (5, 1)))
        with pytest.raises(ZeroSpreadError):
            normalize_bearing_set(ps)

    def test_compute_stats_needs_two_points(self):
        with pytest.raises(ValueError):
            compute_stats(np.ones((1, 3)))


def _identity_basis():
    return FeatureBasis((TermFeature([Term("x", 1.0)]),), name="identity")


class TestAggregate:
    def test_motivating_sets_share_their_mean(self):
        # scalar sets {1,2,3,4} and {2,3,1,4}: identical sums regardless of order
        p = PointSet(3, np.array([[v, 0.0, 0.0] for v in (1.0, 2.0, 3.0, 4.0)]))
        q = PointSet(3, np.array([[v, 0.0, 0.0] for v in (2.0, 3.0, 1.0, 4.0)]))
        b = _identity_basis()
        assert aggregate(p, b).values[0] == pytest.approx(2.5, abs=0)
        assert aggregate(q, b).values[0] == pytest.approx(2.5, abs=0)

    def test_singleton_set_evaluates_directly(self):
        ps = PointSet(3, np.array([[0.3, -0.4, 0.9]]))
        b = default_basis_18()
        vals = aggregate(ps, b).values
        for i, f in enumerate(b.functions):
            for c in range(3):
                assert vals[i * 3 + c] == pytest.approx(float(f(ps.points[0, c])), abs=1e-15)

    @given(st.integers(0, 2 ** 32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_permutation_invariance_is_exact(self, seed):
        rng = np.random.default_rng(seed)
        pts = rng.standard_normal((rng.integers(2, 60), 3))
        ps = PointSet(3, pts)
        shuffled = PointSet(3, pts[rng.permutation(len(pts))])
        b = default_basis_18()
        assert aggregate(ps, b).values.tobytes() == aggregate(shuffled, b).values.tobytes()

    def test_duplication_invariance_is_exact(self):
        rng = np.random.default_rng(9)
        pts = rng.standard_normal((41, 3))
        b = default_basis_18()
        a1 = aggregate(PointSet(3, pts), b).values
        a2 = aggregate(PointSet(3, np.vstack([pts, pts])), b).values
        assert a1.tobytes() == a2.tobytes()

    def test_layout_is_template_major(self):
        ps = PointSet(3, np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]))
        b = _identity_basis()
        np.testing.assert_allclose(aggregate(ps, b).values, [2.5, 3.5, 4.5], atol=1e-15)


class TestAggregateMapped:
    def test_matches_q_side_at_true_pose(self, tiny_scene):
        problem, theta, p_set, q_set, _ = tiny_scene
        fp = aggregate_mapped(problem.set_p, problem.model, theta, problem.basis,
                              problem.stats).values
        np.testing.assert_allclose(fp, problem._fq, atol=1e-10)

    def test_duplicated_first_set_gives_identical_aggregate(self, tiny_scene):
        problem, theta, p_set, _, _ = tiny_scene
        doubled = PointSet(p_set.dim, np.vstack([p_set.points, p_set.points]))
        a1 = aggregate_mapped(p_set, problem.model, theta, problem.basis, problem.stats)
        a2 = aggregate_mapped(doubled, problem.model, theta, problem.basis, problem.stats)
        assert a1.values.tobytes() == a2.values.tobytes()

    def test_half_subsample_error_scales_with_sampling_noise(self):
        # mean over a random half-subsample differs from the full mean by
        # roughly sigma/sqrt(N/2); allow a generous band around it
        problem, theta, p_set, _, _ = bearing_problem(seed=11, n_points=3142)
        b = problem.basis
        full = aggregate_mapped(p_set, problem.model, theta, b, problem.stats).values
        rng = np.random.default_rng(2)
        n = len(p_set)
        gaps = []
        for _ in range(20):
            idx = rng.choice(n, size=n // 2, replace=False)
            half = aggregate_mapped(p_set.take(np.sort(idx)), problem.model, theta, b,
                                    problem.stats).values
            gaps.append(np.linalg.norm(half - full))
        typical = np.median(gaps)
        assert 1e-4 < typical < 0.2  # nonzero but O(1/sqrt(N)) small


class TestMeanDifferenceScaling:
    def test_covariance_of_mean_difference(self):
        # iid uniform[0,1] per component, f(x) = x: the difference of an
        # M-sample mean and an independent N-sample mean has variance
        # (1/M + 1/N) * 1/12 per component
        rng = np.random.default_rng(42)
        m, n, draws = 150, 600, 1000
        diffs = np.empty((draws, 3))
        for k in range(draws):
            a = rng.random((m, 3)).mean(axis=0)
            b = rng.random((n, 3)).mean(axis=0)
            diffs[k] = a - b
        expected = (1.0 / m + 1.0 / n) / 12.0
        ratios = diffs.var(axis=0, ddof=1) / expected
        assert np.all(ratios > 0.8) and np.all(ratios < 1.2)
