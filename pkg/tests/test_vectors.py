import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from modalign.errors import DimensionMismatch, EmptyKeys, ZeroVector
from modalign.vectors import (
    EmbeddingMatrix,
    ScoredIndex,
    cosine,
    normalize,
    similarity_matrix,
    top_k,
)

finite_floats = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False, allow_infinity=False)


def nonzero_vectors(min_dim=1, max_dim=16):
    return (
        st.integers(min_value=min_dim, max_value=max_dim)
        .flatmap(lambda d: arrays(np.float64, (d,), elements=finite_floats))
        .filter(lambda v: np.linalg.norm(v) > 1e-6)
    )


class TestNormalize:
    def test_three_four_five_triangle(self):
        assert np.allclose(normalize([3.0, 4.0]), [0.6, 0.8], atol=1e-12)

    def test_already_unit(self):
        assert np.allclose(normalize([1.0, 0.0, 0.0]), [1.0, 0.0, 0.0], atol=0)

    def test_zero_vector_rejected(self):
        with pytest.raises(ZeroVector):
            normalize([0.0, 0.0])

    def test_result_is_unit_norm(self):
        v = normalize([1.0, 2.0, 3.0, 4.0])
        assert abs(np.linalg.norm(v) - 1.0) < 1e-6

    def test_direction_preserved(self):
        v = np.array([2.0, -5.0, 1.0])
        unit = normalize(v)
        scale = np.linalg.norm(v)
        assert np.allclose(unit * scale, v, rtol=1e-12)

    @given(nonzero_vectors())
    def test_idempotent(self, v):
        once = normalize(v)
        twice = normalize(once)
        assert np.abs(twice - once).max() < 1e-12

    def test_rejects_nan(self):
        with pytest.raises(ValueError):
            normalize([np.nan, 1.0])


class TestCosine:
    def test_identical_direction(self):
        assert cosine([1.0, 0.0], [1.0, 0.0]) == 1.0

    def test_orthogonal(self):
        assert cosine([1.0, 0.0], [0.0, 1.0]) == 0.0

    def test_forty_five_degrees(self):
        # hand arithmetic: (1*1 + 1*0) / (sqrt(2) * 1) = sqrt(2)/2
        assert cosine([1.0, 1.0], [1.0, 0.0]) == pytest.approx(
            0.7071067811865475, abs=1e-15
        )

    def test_dim_mismatch(self):
        with pytest.raises(DimensionMismatch):
            cosine([1.0, 0.0], [1.0, 0.0, 0.0])

    def test_zero_vector(self):
        with pytest.raises(ZeroVector):
            cosine([0.0, 0.0], [1.0, 0.0])

    @given(nonzero_vectors(min_dim=4, max_dim=4), nonzero_vectors(min_dim=4, max_dim=4))
    def test_symmetry_exact(self, a, b):
        assert cosine(a, b) == cosine(b, a)

    @given(
        nonzero_vectors(min_dim=3, max_dim=3),
        nonzero_vectors(min_dim=3, max_dim=3),
        st.floats(min_value=1e-6, max_value=1e6, allow_nan=False),
    )
    def test_scale_invariance(self, a, b, c):
        assert abs(cosine(c * a, b) - cosine(a, b)) < 1e-9

    def test_clamped_to_range(self):
        v = np.full(64, 0.125)
        assert -1.0 <= cosine(v, v) <= 1.0
        assert -1.0 <= cosine(v, -v) <= 1.0


class TestSimilarityMatrix:
    def test_self_similarity(self):
        m = np.array([[0.3, 0.4, 0.5]])
        assert similarity_matrix(m, m) == pytest.approx(np.array([[1.0]]), abs=1e-12)

    def test_identity_basis(self):
        basis = np.eye(4)
        assert np.allclose(similarity_matrix(basis, basis), np.eye(4), atol=0)

    def test_matches_scalar_oracle(self):
        # oracle: per-pair scalar cosine in a double loop
        rng = np.random.default_rng(7)
        queries = rng.standard_normal((32, 8))
        keys = rng.standard_normal((64, 8))
        got = similarity_matrix(queries, keys)
        for i in range(32):
            for j in range(64):
                assert abs(got[i, j] - cosine(queries[i], keys[j])) <= 1e-6

    def test_dim_mismatch(self):
        with pytest.raises(DimensionMismatch):
            similarity_matrix(np.ones((2, 3)), np.ones((2, 4)))

    def test_zero_row_rejected(self):
        keys = np.array([[1.0, 0.0], [0.0, 0.0]])
        with pytest.raises(ZeroVector):
            similarity_matrix(np.ones((1, 2)), keys)

    @settings(deadline=None, max_examples=30)
    @given(
        st.integers(min_value=1, max_value=10),
        st.integers(min_value=1, max_value=10),
        st.integers(min_value=1, max_value=8),
        st.integers(min_value=0, max_value=2**32 - 1),
    )
    def test_property_agrees_with_scalar(self, nq, nk, dim, seed):
        rng = np.random.default_rng(seed)
        queries = rng.standard_normal((nq, dim)) + 0.1
        keys = rng.standard_normal((nk, dim)) + 0.1
        got = similarity_matrix(queries, keys)
        for i in range(nq):
            for j in range(nk):
                assert abs(got[i, j] - cosine(queries[i], keys[j])) <= 1e-6


def brute_force_ranking(query, keys):
    """Independent oracle: full scan + stable sort by (-score, index)."""
    scores = [cosine(query, keys[i]) for i in range(len(keys))]
    order = sorted(range(len(keys)), key=lambda i: (-scores[i], i))
    return [(i, scores[i]) for i in order]


class TestTopK:
    def test_exact_copy_wins(self):
        rng = np.random.default_rng(0)
        keys = rng.standard_normal((20, 6))
        query = keys[13].copy()
        (best,) = top_k(query, keys, 1)
        assert best.index == 13
        assert best.score == pytest.approx(1.0, abs=1e-12)

    def test_k_at_least_rows_returns_all_sorted(self):
        keys = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
        result = top_k([1.0, 0.0], keys, 10)
        assert [s.index for s in result] == [0, 2, 1]
        scores = [s.score for s in result]
        assert scores == sorted(scores, reverse=True)

    def test_matches_full_sort_oracle(self):
        rng = np.random.default_rng(42)
        keys = rng.standard_normal((1000, 16))
        query = rng.standard_normal(16)
        expected = brute_force_ranking(query, keys)[:50]
        got = top_k(query, keys, 50)
        assert [s.index for s in got] == [i for i, _ in expected]

    def test_tie_break_ascending_index(self):
        # duplicate rows produce identical scores; earlier row must win
        keys = np.array([[0.0, 1.0], [1.0, 1.0], [1.0, 1.0], [1.0, 0.0]])
        result = top_k([1.0, 1.0], keys, 3)
        assert [s.index for s in result] == [1, 2, 0]

    def test_empty_keys(self):
        with pytest.raises(EmptyKeys):
            top_k([1.0, 0.0], np.zeros((0, 2)), 1)

    def test_dim_mismatch(self):
        with pytest.raises(DimensionMismatch):
            top_k([1.0, 0.0, 0.0], np.ones((3, 2)), 1)

    def test_k_must_be_positive(self):
        with pytest.raises(ValueError):
            top_k([1.0, 0.0], np.ones((3, 2)), 0)

    def test_accepts_embedding_matrix(self):
        m = EmbeddingMatrix(np.eye(3), ["a", "b", "c"])
        result = top_k([0.0, 1.0, 0.0], m, 2)
        assert result[0] == ScoredIndex(1, 1.0)

    @settings(deadline=None, max_examples=25)
    @given(
        st.integers(min_value=1, max_value=40),
        st.integers(min_value=1, max_value=50),
        st.integers(min_value=0, max_value=2**32 - 1),
    )
    def test_property_equals_oracle(self, k, rows, seed):
        rng = np.random.default_rng(seed)
        keys = rng.standard_normal((rows, 5))
        query = rng.standard_normal(5)
        expected = brute_force_ranking(query, keys)[: min(k, rows)]
        got = top_k(query, keys, k)
        assert [s.index for s in got] == [i for i, _ in expected]


class TestEmbeddingMatrix:
    def test_label_length_checked(self):
        with pytest.raises(ValueError):
            EmbeddingMatrix(np.ones((3, 2)), ["only", "two"])

    def test_rejects_non_finite(self):
        bad = np.ones((2, 2))
        bad[1, 1] = np.inf
        with pytest.raises(ValueError):
            EmbeddingMatrix(bad)

    def test_rejects_1d(self):
        with pytest.raises(ValueError):
            EmbeddingMatrix(np.ones(4))

    def test_shape_accessors(self):
        m = EmbeddingMatrix(np.ones((5, 3)))
        assert (m.rows, m.dim) == (5, 3)
