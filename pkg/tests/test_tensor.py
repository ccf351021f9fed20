import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tncsim import DenseTensor, Index, classify_permutation, permute, project
from tncsim.errors import InvalidPermutationError, TensorError

from oracles import permute_oracle


def idx(labels, dim=2):
    return tuple(Index(l, dim) for l in labels)


def rand_tensor(indices, seed=0, precision="double"):
    rng = np.random.default_rng(seed)
    size = int(np.prod([ix.dim for ix in indices])) or 1
    data = rng.standard_normal(size) + 1j * rng.standard_normal(size)
    return DenseTensor(indices, data, precision=precision)


class TestIndexAndTensor:
    def test_index_dim_validation(self):
        with pytest.raises(TensorError):
            Index("a", 0)

    def test_data_length_checked(self):
        with pytest.raises(TensorError):
            DenseTensor(idx("ab"), [1, 2, 3])

    def test_duplicate_labels_rejected(self):
        with pytest.raises(TensorError):
            DenseTensor((Index("a"), Index("a")), [1, 2, 3, 4])

    def test_byte_size(self):
        t = rand_tensor(idx("abc"), precision="single")
        assert t.nbytes == 8 * 8
        assert t.astype("double").nbytes == 16 * 8

    def test_scalar_value(self):
        t = DenseTensor((), [3 + 4j])
        assert t.value() == 3 + 4j
        with pytest.raises(TensorError):
            rand_tensor(idx("a")).value()


class TestClassify:
    def test_identity_rank5(self):
        order = idx("abcde")
        p = classify_permutation(order, order)
        assert (p.offset, p.stride, p.case_class) == (1, 5, "contiguous")

    def test_displaced_tail_offset2_stride1(self):
        # relocate one of the last three source indices so only the final
        # target index is source-contiguous, one trailing index displaced
        src = idx("fghij")
        tgt = idx("fghji")
        p = classify_permutation(src, tgt)
        assert (p.offset, p.stride) == (2, 1)

    def test_rotation_offset2_stride3(self):
        src = idx("abcd")
        tgt = idx("dabc")
        p = classify_permutation(src, tgt)
        assert (p.offset, p.stride) == (2, 3)

    def test_full_reversal_stride1(self):
        for rank in range(2, 7):
            src = idx("abcdefg"[:rank])
            p = classify_permutation(src, src[::-1])
            assert p.stride == 1

    def test_bucket_cases(self):
        cases = [
            ("abcd", "acbd", "[2,1]"),
            ("abcd", "bacd", "[4,1]"),
            ("abcd", "adbc", "[4,2]"),
            ("abcde", "bacde", "[>=8,1]"),
            ("abcde", "aebcd", "[>=8,2]"),
            ("abcdef", "defabc", "[>=8,4]"),
        ]
        for src, tgt, want in cases:
            p = classify_permutation(idx(src), idx(tgt))
            assert p.case_class == want, (src, tgt, p)

    def test_scalar_fallback_bucket(self):
        # offset 3 is outside the vectorizable taxonomy
        p = classify_permutation(idx("abcd"), idx("acdb"))
        assert p.offset == 3
        assert p.case_class == "scalar-fallback"

    def test_mismatched_sets_rejected(self):
        with pytest.raises(InvalidPermutationError):
            classify_permutation(idx("ab"), idx("ac"))
        with pytest.raises(InvalidPermutationError):
            classify_permutation(idx("ab", 2), idx("ab", 3))

    @given(st.integers(1, 7), st.randoms(use_true_random=False))
    @settings(max_examples=60, deadline=None)
    def test_offset_stride_ranges(self, rank, rnd):
        src = list(idx("abcdefgh"[:rank]))
        tgt = list(src)
        rnd.shuffle(tgt)
        p = classify_permutation(src, tgt)
        assert 1 <= p.offset <= rank
        assert 1 <= p.stride <= rank
        if tuple(tgt) == tuple(src):
            assert (p.stride, p.offset) == (rank, 1)


class TestPermute:
    def test_identity_bitwise(self):
        t = rand_tensor(idx("abc"), seed=1)
        out = permute(t, t.indices)
        assert np.array_equal(out.data, t.data)
        assert out.data is not t.data

    def test_rank2_transpose(self):
        a, b = idx("ab")
        t = DenseTensor((a, b), [1, 2, 3, 4])
        out = permute(t, (b, a))
        assert out.data.real.tolist() == [1, 3, 2, 4]

    def test_random_rank6_matches_oracle(self):
        t = rand_tensor(idx("abcdef"), seed=7)
        rng = np.random.default_rng(3)
        for trial in range(10):
            order = list(t.indices)
            rng.shuffle(order)
            got = permute(t, order)
            want = permute_oracle(t, order)
            assert np.array_equal(got.data, want)

    def test_mixed_dims_matches_oracle(self):
        indices = (Index("a", 3), Index("b", 2), Index("c", 4), Index("d", 2))
        t = rand_tensor(indices, seed=11)
        rng = np.random.default_rng(5)
        for trial in range(8):
            order = list(indices)
            rng.shuffle(order)
            got = permute(t, order)
            assert np.array_equal(got.data, permute_oracle(t, order))

    @given(st.integers(1, 8), st.integers(0, 10**6), st.randoms(use_true_random=False))
    @settings(max_examples=40, deadline=None)
    def test_round_trip_exact(self, rank, seed, rnd):
        t = rand_tensor(idx("abcdefgh"[:rank]), seed=seed)
        order = list(t.indices)
        rnd.shuffle(order)
        there = permute(t, order)
        back = permute(there, t.indices)
        assert np.array_equal(back.data, t.data)

    def test_offset1_pairs_move_whole(self):
        # offset == 1 keeps the trailing index in place: interleaved (re, im)
        # pairs of the last axis move as unbroken chunks
        t = rand_tensor(idx("abc"), seed=2)
        p = classify_permutation(t.indices, idx("bac"))
        assert p.offset == 1 and p.src_step == 1


class TestProject:
    def test_project_drops_index(self):
        t = rand_tensor(idx("abc"), seed=4)
        p0 = project(t, {"b": 0})
        p1 = project(t, {"b": 1})
        assert p0.labels == ("a", "c")
        full = t.data.reshape(2, 2, 2)
        assert np.array_equal(p0.data, full[:, 0, :].reshape(-1))
        assert np.array_equal(p1.data, full[:, 1, :].reshape(-1))

    def test_project_no_hit_returns_same(self):
        t = rand_tensor(idx("ab"))
        assert project(t, {"z": 1}) is t


class TestExchangeFormats:
    def test_json_round_trip(self):
        t = rand_tensor(idx("abc"), seed=9)
        back = DenseTensor.from_json(t.to_json())
        assert back.labels == t.labels
        assert np.allclose(back.data, t.data)

    def test_binary_round_trip_both_precisions(self):
        for precision in ("single", "double"):
            t = rand_tensor((Index("a", 3), Index("bb", 2)), seed=5, precision=precision)
            back = DenseTensor.from_bytes(t.to_bytes())
            assert back.indices == t.indices
            assert back.precision == precision
            assert np.array_equal(back.data, t.data)
