import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reviewkit.embedding import EmbeddingVector, cosine, embed_text, normalized_mean, tokenize
from reviewkit.errors import DimensionError


class TestEmbed:
    def test_deterministic(self):
        a = embed_text("for x in xs: total += x")
        b = embed_text("for x in xs: total += x")
        assert a == b

    def test_empty_text_is_flagged_zero_vector(self):
        v = embed_text("")
        assert v.empty
        assert all(x == 0.0 for x in v.values)

    def test_punctuation_only_is_empty(self):
        assert embed_text("!!! ---").empty

    def test_unit_norm(self):
        v = embed_text("def f(xs): return xs")
        assert math.isclose(math.sqrt(sum(x * x for x in v.values)), 1.0)

    def test_order_insensitive(self):
        assert embed_text("a b c").values == embed_text("c b a").values

    def test_dim_parameter(self):
        assert embed_text("abc", dim=64).dim == 64

    def test_similar_code_scores_higher_than_unrelated(self):
        loop_a = embed_text("for x in xs")
        loop_b = embed_text("for y in ys")
        other = embed_text("class A: pass")
        assert cosine(loop_a, loop_b) > cosine(loop_a, other)


class TestCosine:
    def test_self_similarity_is_one(self):
        v = embed_text("some tokens here")
        assert math.isclose(cosine(v, v), 1.0)

    def test_zero_vector_convention(self):
        v = embed_text("tokens")
        zero = embed_text("")
        assert cosine(v, zero) == 0.0
        assert cosine(zero, zero) == 0.0

    def test_orthonormal_basis_vectors(self):
        e1 = EmbeddingVector((1.0, 0.0, 0.0))
        e2 = EmbeddingVector((0.0, 1.0, 0.0))
        assert cosine(e1, e2) == 0.0

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            cosine(EmbeddingVector((1.0,)), EmbeddingVector((1.0, 0.0)))

    @given(st.text(alphabet="abcxyz _", max_size=50),
           st.text(alphabet="abcxyz _", max_size=50))
    @settings(max_examples=100)
    def test_range_property(self, a, b):
        value = cosine(embed_text(a), embed_text(b))
        assert -1.0 <= value <= 1.0


class TestNormalizedMean:
    def test_single_vector_is_itself(self):
        v = embed_text("alpha beta")
        assert normalized_mean([v]).values == pytest.approx(v.values)

    def test_mean_is_unit_norm(self):
        m = normalized_mean([embed_text("a b"), embed_text("c d")])
        assert math.isclose(math.sqrt(sum(x * x for x in m.values)), 1.0)


def test_tokenize_splits_on_non_alphanumerics():
    assert tokenize("new_list+=num") == ["new_list", "num"]
    assert tokenize("range(len(xs)-1)") == ["range", "len", "xs", "1"]
