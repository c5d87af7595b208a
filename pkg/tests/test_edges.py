import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from textgnn.data import Document
from textgnn.edges import (EdgeStats, build_edge_vocabulary, compute_pmi_table, corpus_graph_edge_count,
                           count_edge_pairs, pmi_edge_vocabulary)
from textgnn.errors import ConfigError

from oracles import brute_force_pmi, enumerate_pairs

A, B, C = 0, 1, 2


def docs_of(*token_lists):
    return [Document(0, tuple(t)) for t in token_lists]


doc_lists = st.lists(st.lists(st.integers(0, 5), min_size=1, max_size=15), min_size=1, max_size=6)


class TestCountEdgePairs:
    def test_two_tokens(self):
        stats = count_edge_pairs(docs_of([A, B]), p=1, num_words=3)
        assert stats.as_dict() == {(A, A): 1, (B, A): 1, (A, B): 1, (B, B): 1}

    def test_single_token_clamps(self):
        stats = count_edge_pairs(docs_of([A]), p=3, num_words=3)
        assert stats.as_dict() == {(A, A): 1}

    def test_repeated_word(self):
        # position enumeration: (a,b) from 1->2 and 3->2, (a,a) self at 1 and 3
        stats = count_edge_pairs(docs_of([A, B, A]), p=1, num_words=3)
        assert stats.as_dict() == {(A, B): 2, (B, A): 2, (A, A): 2, (B, B): 1}
        assert stats[(A, B)] == 2

    def test_rejects_bad_window(self):
        with pytest.raises(ConfigError):
            count_edge_pairs(docs_of([A]), p=0, num_words=1)

    @given(doc_lists, st.integers(1, 6))
    @settings(max_examples=60, deadline=None)
    def test_matches_enumeration(self, token_lists, p):
        docs = docs_of(*token_lists)
        stats = count_edge_pairs(docs, p, num_words=6)
        assert stats.as_dict() == enumerate_pairs(docs, p)

    @given(doc_lists, st.integers(1, 6))
    @settings(max_examples=60, deadline=None)
    def test_total_count_conservation(self, token_lists, p):
        stats = count_edge_pairs(docs_of(*token_lists), p, num_words=6)
        expected = sum(min(i + p, len(t) - 1) - max(i - p, 0) + 1
                       for t in token_lists for i in range(len(t)))
        assert stats.total() == expected


class TestEdgeVocabulary:
    def _stats(self, mapping, num_words=3):
        keys = np.array(sorted(a * num_words + n for a, n in mapping), dtype=np.int64)
        counts = np.array([mapping[divmod(int(k), num_words)] for k in keys])
        return EdgeStats(keys, counts, num_words, p=1)

    def test_threshold(self):
        vocab = build_edge_vocabulary(self._stats({(A, B): 3, (B, C): 1}), k=2)
        assert vocab.size == 2
        assert vocab.lookup(A, B) != vocab.public_index
        assert vocab.lookup(B, C) == vocab.public_index

    def test_k_one_names_every_observed_pair(self):
        vocab = build_edge_vocabulary(self._stats({(A, B): 3, (B, C): 1}), k=1)
        assert vocab.size == 3
        assert vocab.lookup(B, C) != vocab.public_index
        assert vocab.lookup(C, A) == vocab.public_index

    def test_huge_k_leaves_only_public(self):
        vocab = build_edge_vocabulary(self._stats({(A, B): 3}), k=10**9)
        assert vocab.size == 1
        assert vocab.lookup(A, B) == vocab.public_index == 0

    @given(doc_lists, st.integers(1, 4), st.integers(1, 4))
    @settings(max_examples=40, deadline=None)
    def test_lookup_is_total_and_dense(self, token_lists, p, k):
        vocab = build_edge_vocabulary(count_edge_pairs(docs_of(*token_lists), p, 6), k)
        src, dst = np.meshgrid(np.arange(6), np.arange(6))
        idx = vocab.resolve(src.ravel(), dst.ravel())
        assert idx.min() >= 0 and idx.max() < vocab.size
        assert sorted(set(vocab.indices.tolist()) | {vocab.public_index}) == list(range(vocab.size))


class TestPmi:
    def test_single_window_pmi_is_zero_and_dropped(self):
        table = compute_pmi_table(docs_of([A, B]), window=20)
        assert len(table) == 0

    def test_two_docs(self):
        table = compute_pmi_table(docs_of([A, B], [A, C]), window=20)
        # N=2, N(a)=2, N(b)=1: PMI(a,b) = log((1/2) / (1 * 1/2)) = 0, dropped; (b,c) never co-occur
        assert table.get(A, B) is None
        assert table.get(B, C) is None

    # fixed toy corpus: short documents (one window each) and long ones that slide
    TOY = [
        [0, 1, 2, 3, 4, 5, 6, 7],
        [0, 1, 0, 1, 8, 9],
        [2, 3, 2, 3, 4],
        [5, 6, 7, 8, 9, 5, 6, 7, 8, 9, 0, 0],
        [1, 9],
    ]

    @pytest.mark.parametrize("window", [2, 3, 5, 20])
    def test_toy_corpus_equals_window_enumeration(self, window):
        docs = docs_of(*self.TOY)
        assert compute_pmi_table(docs, window, num_words=10).as_dict() == brute_force_pmi(docs, window)

    @given(doc_lists, st.integers(2, 6))
    @settings(max_examples=40, deadline=None)
    def test_symmetric_positive_order_free(self, token_lists, window):
        table = compute_pmi_table(docs_of(*token_lists), window, num_words=6).as_dict()
        for (a, b), v in table.items():
            assert v > 0 and a != b
            assert table[(b, a)] == v
        reordered = compute_pmi_table(docs_of(*reversed(token_lists)), window, num_words=6).as_dict()
        assert reordered.keys() == table.keys()
        assert all(reordered[key] == pytest.approx(table[key], rel=1e-12) for key in table)

    def test_rejects_small_window(self):
        with pytest.raises(ConfigError):
            compute_pmi_table(docs_of([A]), window=1)

    def test_pmi_edge_vocabulary(self):
        table = compute_pmi_table(docs_of(*self.TOY), window=3, num_words=10)
        vocab, weights = pmi_edge_vocabulary(table, p=2)
        assert len(weights) == vocab.size
        for (a, b), v in table.as_dict().items():
            assert weights[vocab.lookup(a, b)] == v
        assert weights[vocab.lookup(4, 4)] == 1.0
        absent = next((a, b) for a in range(10) for b in range(10) if a != b and table.get(a, b) is None)
        assert vocab.lookup(*absent) == vocab.public_index
        assert weights[vocab.public_index] == 0.0


def test_corpus_graph_edge_count():
    docs = docs_of([A, B, A], [B, C])
    counts = corpus_graph_edge_count(docs, num_words=3, window=20)
    # PMI: N=2, N(a)=1, N(b)=2, N(c)=1 -> PMI(a,b)=PMI(b,c)=0, PMI(a,c) undefined -> no word edges
    assert counts["word_word"] == 0
    assert counts["doc_word"] == 2 * (2 + 2)
    assert counts["total"] == 8
