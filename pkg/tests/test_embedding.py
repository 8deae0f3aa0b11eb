import mpmath
import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from simdistill.embedding import (
    DEFAULT_TAU,
    EmbeddingBatch,
    SimilarityDistribution,
    cosine_scores,
    kl_divergence,
    l2_normalize,
    softmax_temperature,
)
from simdistill.errors import DimensionMismatch, LengthMismatch, NonPositiveTemperature, ZeroNormRow

mpmath.mp.dps = 50

finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)
score_vectors = arrays(np.float64, st.integers(1, 40), elements=finite)
taus = st.floats(1e-3, 10.0)


def mp_softmax(scores, tau):
    e = [mpmath.exp(mpmath.mpf(float(s)) / mpmath.mpf(tau)) for s in scores]
    z = mpmath.fsum(e)
    return [x / z for x in e]


def mp_kl(p, q):
    return mpmath.fsum(
        mpmath.mpf(float(a)) * mpmath.log(mpmath.mpf(float(a)) / mpmath.mpf(float(b))) for a, b in zip(p, q) if a > 0
    )


class TestL2Normalize:
    def test_three_four_five(self):
        out = l2_normalize(np.array([[3.0, 4.0]]))
        np.testing.assert_allclose(out.data, [[0.6, 0.8]], rtol=0, atol=1e-15)
        assert out.normalized

    def test_already_unit(self):
        np.testing.assert_array_equal(l2_normalize(np.array([[0.0, 0.0, 1.0]])).data, [[0, 0, 1]])

    def test_random_batch_against_mp_norms(self, rng):
        x = rng.normal(size=(5, 8))
        out = l2_normalize(x).data
        for row_in, row_out in zip(x, out):
            norm = mpmath.sqrt(mpmath.fsum(mpmath.mpf(float(v)) ** 2 for v in row_in))
            expected = [float(mpmath.mpf(float(v)) / norm) for v in row_in]
            np.testing.assert_allclose(row_out, expected, rtol=1e-15, atol=1e-16)
        np.testing.assert_allclose(np.linalg.norm(out, axis=1), 1.0, atol=1e-15)

    def test_input_unmodified(self, rng):
        x = rng.normal(size=(3, 4))
        before = x.copy()
        l2_normalize(x)
        np.testing.assert_array_equal(x, before)

    def test_zero_row(self):
        with pytest.raises(ZeroNormRow):
            l2_normalize(np.array([[1.0, 0.0], [0.0, 0.0]]))

    @given(arrays(np.float64, (4, 6), elements=st.floats(-1e3, 1e3)).filter(
        lambda a: np.all(np.linalg.norm(a, axis=1) > 1e-6)))
    def test_idempotent(self, x):
        once = l2_normalize(x)
        np.testing.assert_allclose(l2_normalize(once).data, once.data, atol=1e-12)


class TestEmbeddingBatch:
    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            EmbeddingBatch(np.array([[1.0, np.nan]]))

    def test_normalized_flag_checked(self):
        with pytest.raises(ValueError):
            EmbeddingBatch(np.array([[1.0, 1.0]]), normalized=True)

    def test_read_only(self, rng):
        b = EmbeddingBatch(rng.normal(size=(2, 3)))
        with pytest.raises(ValueError):
            b.data[0, 0] = 1.0
        assert b.dim == 3 and len(b) == 2


class TestCosineScores:
    def test_self_and_antipodal(self, rng):
        u = rng.normal(size=5)
        u /= np.linalg.norm(u)
        assert cosine_scores(u, u[None]) == pytest.approx([1.0])
        assert cosine_scores(u, -u[None]) == pytest.approx([-1.0])

    def test_orthogonal_and_45(self):
        s = np.sqrt(2) / 2
        np.testing.assert_allclose(cosine_scores([1.0, 0.0], [[0.0, 1.0], [s, s]]), [0.0, s])

    def test_dim_mismatch(self):
        with pytest.raises(DimensionMismatch):
            cosine_scores([1.0, 0.0], [[1.0, 0.0, 0.0]])


class TestSoftmax:
    @pytest.mark.parametrize("c", [-3.0, 0.0, 0.7])
    @pytest.mark.parametrize("tau", [0.04, 1.0, 5.0])
    def test_uniform(self, c, tau):
        np.testing.assert_allclose(softmax_temperature([c, c, c], tau).probs, [1 / 3] * 3, atol=1e-15)

    def test_near_one_hot_default_tau(self):
        assert DEFAULT_TAU == 0.04
        p = softmax_temperature([1.0, 0.0], 0.04).probs
        ref = mp_softmax([1.0, 0.0], 0.04)
        # exp(-25) / (1 + exp(-25))
        assert p[1] < 1e-10
        assert p[1] == pytest.approx(float(ref[1]), rel=1e-12)
        assert p[0] == pytest.approx(float(ref[0]), rel=1e-15)

    def test_no_overflow(self):
        p = softmax_temperature([1000.0, 999.0], 0.01).probs
        assert np.all(np.isfinite(p))

    @pytest.mark.parametrize("tau", [0.0, -1.0])
    def test_non_positive_tau(self, tau):
        with pytest.raises(NonPositiveTemperature):
            softmax_temperature([0.0, 1.0], tau)

    @given(score_vectors, taus, finite)
    def test_shift_invariance(self, s, tau, shift):
        a = softmax_temperature(s, tau).probs
        b = softmax_temperature(s + shift, tau).probs
        np.testing.assert_allclose(a, b, atol=1e-9)

    @given(score_vectors.filter(lambda s: np.ptp(s) > 1e-3), st.floats(0.05, 5.0), st.floats(1.1, 4.0))
    def test_sharpening(self, s, tau, ratio):
        # the max probability rounds to 1.0 long before the rest of the mass
        # vanishes, so compare the mass off the maximal entries instead
        gap = s.max() - s[s < s.max()].max()
        assume(gap * ratio / tau < 600)
        # a gap below float resolution leaves both temperatures identical
        assume(gap / tau > 1e-9)
        off_max = s < s.max()
        sharp = softmax_temperature(s, tau / ratio).probs[off_max].sum()
        soft = softmax_temperature(s, tau).probs[off_max].sum()
        assert sharp < soft

    def test_matches_mp_oracle(self, rng):
        for _ in range(20):
            s = rng.uniform(-1, 1, size=12)
            tau = float(rng.uniform(0.02, 2.0))
            np.testing.assert_allclose(
                softmax_temperature(s, tau).probs, [float(v) for v in mp_softmax(s, tau)], rtol=1e-12
            )


class TestKL:
    def test_identity(self, rng):
        p = SimilarityDistribution(rng.dirichlet(np.ones(7)))
        assert kl_divergence(p, p) == 0.0

    def test_closed_form(self):
        assert kl_divergence([1.0, 0.0], [0.5, 0.5]) == pytest.approx(np.log(2), rel=1e-15)

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            kl_divergence([1.0], [0.5, 0.5])

    def test_against_mp_oracle(self, rng):
        for _ in range(50):
            n = int(rng.integers(2, 30))
            p, q = rng.dirichlet(np.ones(n)), rng.dirichlet(np.ones(n))
            assert kl_divergence(p, q) == pytest.approx(float(mp_kl(p, q)), rel=1e-11, abs=1e-15)

    @given(score_vectors, score_vectors, taus)
    def test_non_negative(self, a, b, tau):
        n = min(a.size, b.size)
        p = softmax_temperature(a[:n], tau)
        q = softmax_temperature(b[:n], tau)
        assert kl_divergence(p, q) >= -1e-12


class TestSimilarityDistribution:
    def test_rejects_non_probability(self):
        with pytest.raises(ValueError):
            SimilarityDistribution([0.5, 0.6])
