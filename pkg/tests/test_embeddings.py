"""Embedding stores, the two container formats, and pooling operations."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from clirkit.embeddings import (ContextSet, EmbeddingStore, aoc_embed,
                                first_subword, load_embeddings_text,
                                pool_subwords, read_embeddings,
                                read_embeddings_binary, semb_embed,
                                write_embeddings_binary,
                                write_embeddings_text)

TEXT_SAMPLE = ("2 3\n"
               "cat 0.100000 0.200000 0.300000\n"
               "dog 1.000000 0.000000 -1.000000\n")


def small_store():
    rng = np.random.default_rng(7)
    vocab = [f"tok{i}" for i in range(5)]
    return EmbeddingStore(vocab, rng.normal(size=(5, 4)).astype(np.float32))


class TestStore:
    def test_lookup_and_membership(self):
        store = EmbeddingStore(["a", "b"], np.eye(2))
        assert "a" in store and "c" not in store
        assert np.array_equal(store.vector("b"), [0.0, 1.0])
        assert store.get("c") is None
        assert store.dim == 2 and len(store) == 2

    def test_matrix_is_read_only(self):
        store = EmbeddingStore(["a"], np.ones((1, 2)))
        with pytest.raises(ValueError):
            store.matrix[0, 0] = 5.0

    def test_vocab_matrix_mismatch_rejected(self):
        with pytest.raises(ValueError, match="2 tokens but 1 matrix rows"):
            EmbeddingStore(["a", "b"], np.ones((1, 2)))

    def test_duplicate_tokens_rejected(self):
        with pytest.raises(ValueError, match="duplicate"):
            EmbeddingStore(["a", "a"], np.ones((2, 2)))

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError, match="non-finite"):
            EmbeddingStore(["a"], np.array([[np.nan, 0.0]]))

    def test_one_dim_matrix_rejected(self):
        with pytest.raises(ValueError, match="2-D"):
            EmbeddingStore(["a"], np.ones(3))


class TestTextFormat:
    def test_load_sample(self, tmp_path):
        path = tmp_path / "v.txt"
        path.write_text(TEXT_SAMPLE, encoding="utf-8")
        store = load_embeddings_text(str(path))
        assert store.vocab_order == ("cat", "dog")
        assert store.vector("cat") == pytest.approx([0.1, 0.2, 0.3])

    def test_limit_caps_entries(self, tmp_path):
        path = tmp_path / "v.txt"
        path.write_text(TEXT_SAMPLE, encoding="utf-8")
        store = load_embeddings_text(str(path), limit=1)
        assert store.vocab_order == ("cat",)

    def test_wrong_value_count_names_line(self, tmp_path):
        path = tmp_path / "v.txt"
        path.write_text("2 3\ncat 0.1 0.2 0.3\ndog 1.0 2.0\n",
                        encoding="utf-8")
        with pytest.raises(ValueError,
                           match=r"line 3: expected 3 values, got 2"):
            load_embeddings_text(str(path))

    def test_malformed_header(self, tmp_path):
        path = tmp_path / "v.txt"
        path.write_text("not a header\n", encoding="utf-8")
        with pytest.raises(ValueError, match="line 1"):
            load_embeddings_text(str(path))

    def test_round_trip_keeps_six_decimals(self, tmp_path):
        store = small_store()
        path = tmp_path / "v.txt"
        write_embeddings_text(store, str(path))
        back = load_embeddings_text(str(path))
        assert back.vocab_order == store.vocab_order
        assert np.allclose(back.matrix, store.matrix, atol=1e-6)

    def test_rewrite_is_byte_identical(self, tmp_path):
        """Six-decimal text output is a fixed point of load-then-write."""
        first = tmp_path / "a.txt"
        second = tmp_path / "b.txt"
        write_embeddings_text(small_store(), str(first))
        write_embeddings_text(load_embeddings_text(str(first)), str(second))
        assert first.read_bytes() == second.read_bytes()


class TestBinaryFormat:
    def test_round_trip_bit_exact(self, tmp_path):
        store = small_store()
        path = tmp_path / "v.emb"
        write_embeddings_binary(store, str(path))
        back = read_embeddings_binary(str(path))
        assert back.vocab_order == store.vocab_order
        assert np.array_equal(back.matrix, store.matrix)

    def test_empty_store_keeps_dim(self, tmp_path):
        path = tmp_path / "v.emb"
        write_embeddings_binary(
            EmbeddingStore([], np.zeros((0, 4), dtype=np.float32)), str(path))
        back = read_embeddings_binary(str(path))
        assert len(back) == 0 and back.dim == 4

    def test_non_ascii_tokens_survive(self, tmp_path):
        store = EmbeddingStore(["čaj", "смысл"],
                               np.ones((2, 2), dtype=np.float32))
        path = tmp_path / "v.emb"
        write_embeddings_binary(store, str(path))
        assert read_embeddings_binary(str(path)).vocab_order == store.vocab_order

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "v.emb"
        path.write_bytes(b"NOPE" + b"\x00" * 16)
        with pytest.raises(ValueError, match="bad magic at offset 0"):
            read_embeddings_binary(str(path))

    def test_truncation_reports_offset(self, tmp_path):
        store = small_store()
        path = tmp_path / "v.emb"
        write_embeddings_binary(store, str(path))
        blob = path.read_bytes()
        path.write_bytes(blob[:-3])
        with pytest.raises(ValueError, match="truncated at offset"):
            read_embeddings_binary(str(path))

    def test_trailing_bytes_rejected(self, tmp_path):
        store = small_store()
        path = tmp_path / "v.emb"
        write_embeddings_binary(store, str(path))
        path.write_bytes(path.read_bytes() + b"xx")
        with pytest.raises(ValueError, match="trailing bytes"):
            read_embeddings_binary(str(path))

    def test_overlong_token_rejected_on_write(self, tmp_path):
        store = EmbeddingStore(["x" * 70000], np.ones((1, 2)))
        with pytest.raises(ValueError, match="token too long"):
            write_embeddings_binary(store, str(tmp_path / "v.emb"))


class TestFormatSniffing:
    def test_reads_either_container(self, tmp_path):
        store = small_store()
        binary = tmp_path / "v.emb"
        text = tmp_path / "v.txt"
        write_embeddings_binary(store, str(binary))
        write_embeddings_text(store, str(text))
        assert read_embeddings(str(binary)).vocab_order == store.vocab_order
        assert read_embeddings(str(text)).vocab_order == store.vocab_order

    def test_limit_applies_to_binary_too(self, tmp_path):
        path = tmp_path / "v.emb"
        write_embeddings_binary(small_store(), str(path))
        assert len(read_embeddings(str(path), limit=2)) == 2


finite_vectors = st.lists(
    st.lists(st.floats(-10, 10, allow_nan=False), min_size=3, max_size=3),
    min_size=1, max_size=8)


class TestPooling:
    def test_mean_pooling(self):
        assert pool_subwords([[1.0, 2.0], [3.0, 4.0]]) == pytest.approx(
            [2.0, 3.0])

    def test_single_subword_is_identity(self):
        assert pool_subwords([[5.0, -1.0]]) == pytest.approx([5.0, -1.0])

    def test_empty_group_rejected(self):
        with pytest.raises(ValueError, match="non-empty"):
            pool_subwords([])

    @given(finite_vectors, st.randoms(use_true_random=False))
    def test_permutation_invariance(self, group, rand):
        shuffled = list(group)
        rand.shuffle(shuffled)
        assert np.allclose(pool_subwords(group), pool_subwords(shuffled),
                           atol=1e-9)

    @given(finite_vectors, st.floats(-5, 5, allow_nan=False))
    def test_scale_equivariance(self, group, c):
        scaled = [[c * x for x in vec] for vec in group]
        assert np.allclose(pool_subwords(scaled), c * pool_subwords(group),
                           atol=1e-7)

    def test_first_subword_selection(self):
        assert first_subword([[1.0, 2.0], [3.0, 4.0]]) == pytest.approx(
            [1.0, 2.0])


class TestContextAveraging:
    def test_mean_of_contexts(self):
        ctx = ContextSet("t", [np.array([0.0, 0.0]), np.array([2.0, 4.0])])
        assert aoc_embed(ctx, fallback=[9.0, 9.0]) == pytest.approx(
            [1.0, 2.0])

    def test_no_contexts_falls_back(self):
        ctx = ContextSet("t", [])
        out = aoc_embed(ctx, fallback=[9.0, -9.0])
        assert out == pytest.approx([9.0, -9.0])

    def test_cap_keeps_first_sixty(self):
        vectors = [np.full(2, 1.0)] * 60 + [np.full(2, 100.0)] * 40
        ctx = ContextSet("t", vectors)
        assert len(ctx.context_vectors) == 60
        assert aoc_embed(ctx, fallback=[0.0, 0.0]) == pytest.approx(
            [1.0, 1.0])

    def test_cap_must_be_positive(self):
        with pytest.raises(ValueError, match="cap"):
            ContextSet("t", [], cap=0)


class TestSequenceEmbedding:
    def test_weighted_sum_plus_specials(self):
        groups = [[[1.0, 0.0]], [[0.0, 1.0]]]
        out = semb_embed(groups, [1.0, 3.0],
                         special_tokens=([1.0, 1.0], [1.0, 1.0]))
        assert out == pytest.approx([5.0, 7.0])

    def test_multi_subword_terms_use_first(self):
        groups = [[[2.0, 0.0], [100.0, 100.0]]]
        out = semb_embed(groups, [1.0],
                         special_tokens=([0.0, 0.0], [0.0, 0.0]))
        assert out == pytest.approx([2.0, 0.0])

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError, match="1 idf weights"):
            semb_embed([[[1.0]], [[2.0]]], [1.0],
                       special_tokens=([0.0], [0.0]))

    def test_empty_terms_rejected(self):
        with pytest.raises(ValueError, match="at least one term"):
            semb_embed([], [], special_tokens=([0.0], [0.0]))

    @given(st.floats(0.1, 4.0))
    def test_homogeneous_in_idf_weights(self, c):
        groups = [[[1.0, 2.0]], [[3.0, -1.0]]]
        specials = ([0.5, 0.5], [-0.5, 1.5])
        base = semb_embed(groups, [1.0, 2.0], specials)
        scaled = semb_embed(groups, [c, 2.0 * c], specials)
        assert np.allclose(scaled, c * base, atol=1e-9)
