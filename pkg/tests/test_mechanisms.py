import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from mspafl.errors import InvalidSpecError
from mspafl.mechanisms import NoiseSpec, clip, perturb


class TestClip:
    def test_inside_ball_unchanged(self):
        v = np.array([0.3, 0.4])
        out = clip(v, 1.0)
        assert np.array_equal(out, v)

    def test_rescales_to_threshold(self):
        out = clip(np.array([3.0, 4.0]), 1.0)
        assert out == pytest.approx([0.6, 0.8])

    def test_rescale_factor(self):
        out = clip(np.array([3.0, 4.0]), 2.0)
        assert out == pytest.approx([1.2, 1.6])

    def test_threshold_must_be_positive(self):
        with pytest.raises(InvalidSpecError):
            clip(np.array([1.0]), 0.0)

    vectors = hnp.arrays(
        np.float64,
        st.integers(1, 8),
        elements=st.floats(-1e6, 1e6, allow_nan=False),
    )

    @given(v=vectors, threshold=st.floats(1e-3, 1e3))
    @settings(max_examples=200, deadline=None)
    def test_norm_bound_and_idempotence(self, v, threshold):
        out = clip(v, threshold)
        assert np.linalg.norm(out) <= threshold * (1 + 1e-12)
        again = clip(out, threshold)
        assert again == pytest.approx(out, rel=1e-12, abs=1e-300)
        if np.linalg.norm(v) <= threshold:
            assert np.array_equal(out, v)

    @given(v=vectors, threshold=st.floats(1e-3, 1e3), alpha=st.floats(1e-3, 1e3))
    @settings(max_examples=200, deadline=None)
    def test_positive_homogeneity(self, v, threshold, alpha):
        joint = clip(alpha * v, alpha * threshold)
        scaled = alpha * clip(v, threshold)
        assert joint == pytest.approx(scaled, rel=1e-9, abs=1e-9)


class TestPerturb:
    def test_zero_variance_sentinel_is_exact(self):
        v = np.array([1.0, -2.0, 3.5])
        out = perturb(v, NoiseSpec(0.0, 3, (0, 0)), seed=7)
        assert np.array_equal(out, v)

    def test_deterministic_per_stream(self):
        v = np.zeros(4)
        spec = NoiseSpec(2.0, 4, (3, 9))
        a = perturb(v, spec, seed=42)
        b = perturb(v, spec, seed=42)
        assert np.array_equal(a, b)

    def test_distinct_streams_differ(self):
        v = np.zeros(4)
        a = perturb(v, NoiseSpec(2.0, 4, (3, 9)), seed=42)
        b = perturb(v, NoiseSpec(2.0, 4, (3, 10)), seed=42)
        c = perturb(v, NoiseSpec(2.0, 4, (4, 9)), seed=42)
        d = perturb(v, NoiseSpec(2.0, 4, (3, 9)), seed=43)
        assert not np.array_equal(a, b)
        assert not np.array_equal(a, c)
        assert not np.array_equal(a, d)

    def test_dimension_mismatch(self):
        with pytest.raises(InvalidSpecError):
            perturb(np.zeros(3), NoiseSpec(1.0, 4, (0, 0)), seed=0)

    def test_empirical_moments(self):
        draws = 10**5
        sigma_sq = 4.0
        samples = np.concatenate(
            [
                perturb(np.zeros(100), NoiseSpec(sigma_sq, 100, (0, r)), seed=11)
                for r in range(draws // 100)
            ]
        )
        se_mean = 4.0 * (2.0 / np.sqrt(draws))
        assert abs(samples.mean()) <= se_mean
        assert samples.var() == pytest.approx(sigma_sq, rel=0.05)

    def test_independent_streams_uncorrelated(self):
        # correlation between two (client, round) streams stays at noise level
        a = perturb(np.zeros(5000), NoiseSpec(1.0, 5000, (1, 0)), seed=5)
        b = perturb(np.zeros(5000), NoiseSpec(1.0, 5000, (2, 0)), seed=5)
        corr = np.corrcoef(a, b)[0, 1]
        assert abs(corr) < 0.05
