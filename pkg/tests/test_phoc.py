import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from phocconf import _kernels
from phocconf.phoc import (
    PhocConfig, build_phoc, build_phoc_matrix, normalize_transcription, phoc_dimension,
)

from oracles import phoc_bruteforce


class TestNormalize:
    @pytest.mark.parametrize("raw, expected", [("The", "the"), ("a-b1", "ab1"), ("", ""), ("!!", "")])
    def test_examples(self, raw, expected):
        assert normalize_transcription(raw, PhocConfig()) == expected


class TestDimension:
    def test_default_is_540(self):
        assert phoc_dimension(PhocConfig()) == 540

    @pytest.mark.parametrize("alphabet, levels, dim", [("ab", (1, 2), 6), ("a", (1,), 1)])
    def test_small(self, alphabet, levels, dim):
        assert phoc_dimension(PhocConfig(tuple(alphabet), levels)) == dim

    def test_duplicate_alphabet_rejected(self):
        with pytest.raises(ValueError):
            PhocConfig(("a", "a"), (1,))


class TestBuildPhoc:
    def test_two_chars(self):
        cfg = PhocConfig(("a", "b"), (1, 2))
        assert build_phoc("ab", cfg).tolist() == [1, 1, 1, 0, 0, 1]

    def test_half_overlap_counts(self):
        cfg = PhocConfig(("a",), (1, 2))
        assert build_phoc("a", cfg).tolist() == [1, 1, 1]

    def test_level_one_is_char_set(self):
        assert build_phoc("a", PhocConfig(("a", "b"), (1,))).tolist() == [1, 0]

    def test_repeated_chars_or_regions(self):
        cfg = PhocConfig(("a", "b"), (1, 2))
        assert build_phoc("aa", cfg).tolist() == [1, 0, 1, 0, 1, 0]

    def test_empty_word(self):
        with pytest.raises(ValueError, match="empty transcription"):
            build_phoc("", PhocConfig())

    def test_unnormalized_word(self):
        with pytest.raises(ValueError):
            build_phoc("A", PhocConfig())

    def test_oracle_random_words(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            size = int(rng.integers(1, 6))
            alphabet = tuple("abcdefgh"[:size])
            levels = tuple(sorted(set(int(L) for L in rng.integers(1, 9, size=rng.integers(1, 5)))))
            word = "".join(rng.choice(list(alphabet), size=int(rng.integers(1, 11))))
            cfg = PhocConfig(alphabet, levels)
            np.testing.assert_array_equal(build_phoc(word, cfg), phoc_bruteforce(word, alphabet, levels))

    @settings(max_examples=60, deadline=None)
    @given(word=st.text(alphabet="abc", min_size=1, max_size=12),
           levels=st.lists(st.integers(1, 9), min_size=1, max_size=4, unique=True))
    def test_kernels_agree_and_length(self, word, levels):
        cfg = PhocConfig(("a", "b", "c"), tuple(levels))
        idx = np.array([cfg.index(c) for c in word], dtype=np.int64)
        lv = np.array(levels, dtype=np.int64)
        a = _kernels.phoc_bits_numpy(idx, lv, 3, 0.5)
        b = _kernels.phoc_bits_numba(idx, lv, 3, 0.5)
        np.testing.assert_array_equal(a, b)
        assert len(a) == phoc_dimension(cfg)
        # level-1 block (when present) is exactly the character set
        if 1 in levels:
            off = 3 * sum(levels[: levels.index(1)])
            assert a[off:off + 3].tolist() == [int(c in word) for c in "abc"]

    def test_matrix_rows(self):
        cfg = PhocConfig()
        m = build_phoc_matrix(["ab", "cd"], cfg)
        assert m.shape == (2, 540)
        np.testing.assert_array_equal(m[1], build_phoc("cd", cfg))

    def test_strict_threshold(self):
        # with a threshold above one half the tie no longer activates both halves
        cfg = PhocConfig(("a",), (2,), overlap_threshold=0.75)
        assert build_phoc("a", cfg).tolist() == [0, 0]
