import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from meshgen.mesh import QuantizedMesh
from meshgen.sequences import (FACE_INDEX_OFFSET, FACE_NEW, FACE_STOP,
                               VERTEX_STOP, FaceMaskState, SequenceError,
                               VertexMaskState, decode_faces, decode_vertices,
                               encode_faces, encode_vertices, face_mask,
                               vertex_mask)

from conftest import random_quantized


class TestVertexCodec:
    def test_encode_layout(self):
        q = QuantizedMesh([(0, 0, 0), (0, 0, 1), (0, 1, 0)],
                          [(0, 1, 2)], bits=8)
        toks = encode_vertices(q)
        # value v becomes token v + 1 (0 is the stop token); z, y, x order
        assert toks == [1, 1, 1, 1, 1, 2, 1, 2, 1, VERTEX_STOP]

    def test_roundtrip(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            q = random_quantized(rng)
            assert decode_vertices(encode_vertices(q), q.bits) == q.vertices

    @pytest.mark.parametrize("tokens,code", [
        ([1, 1, 1], "missing_stop"),
        ([1, 1, 1, 1, 1, 2, 1, 2, 1, 1, 0], "stop_mid_vertex"),
        ([0], "empty"),
        ([1, 1, 257, 1, 1, 2, 1, 2, 1, 0], "token_range"),
        ([2, 1, 1, 1, 1, 1, 2, 2, 2, 0], "z_decreased"),
        ([1, 2, 1, 1, 1, 2, 2, 2, 2, 0], "y_decreased"),
        ([1, 1, 1, 1, 1, 1, 2, 2, 2, 0], "x_not_increasing"),
        ([1, 1, 1, 1, 1, 2, 0], "too_few_vertices"),
    ])
    def test_error_codes(self, tokens, code):
        with pytest.raises(SequenceError) as ei:
            decode_vertices(tokens, 8)
        assert ei.value.code == code


class TestFaceCodec:
    def test_encode_layout(self):
        q = QuantizedMesh([(0, 0, 0), (0, 0, 1), (0, 1, 0), (1, 0, 0)],
                          [(0, 1, 2), (0, 2, 3)], bits=8)
        toks = encode_faces(q)
        # index i becomes token i + 2; faces separated by the new-face token
        assert toks == [2, 3, 4, FACE_NEW, 2, 4, 5, FACE_STOP]

    def test_roundtrip(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            q = random_quantized(rng)
            out = decode_faces(encode_faces(q), q.num_vertices)
            assert [tuple(f) for f in out] == [tuple(f) for f in q.faces]

    @pytest.mark.parametrize("tokens,n,code", [
        ([2, 3, 4], 3, "missing_stop"),
        ([2, 3, 4, 0, 0], 3, "interior_stop"),
        ([2, 3, 9, 0], 3, "unknown_index"),
        ([2, 3, 3, 4, 0], 3, "duplicate_index"),
        ([2, 3, 0], 3, "short_face"),
        ([3, 2, 4, 0], 3, "rotation"),
        ([2, 3, 4, 1, 2, 3, 4, 0], 3, "face_order"),
        ([2, 3, 4, 0], 4, "unreferenced"),
        ([2, 3, 4, 1, 1, 2, 4, 5, 0], 4, "empty_face"),
        ([2, 3, 4, 1, 0], 3, "trailing_new_face"),
        ([0], 3, "empty"),
    ])
    def test_error_codes(self, tokens, n, code):
        with pytest.raises(SequenceError) as ei:
            decode_faces(tokens, n)
        assert ei.value.code == code


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 8))
def test_roundtrip_property(seed, bits):
    q = random_quantized(np.random.default_rng(seed), bits=bits)
    assert decode_vertices(encode_vertices(q), bits) == q.vertices
    out = decode_faces(encode_faces(q), q.num_vertices)
    assert [tuple(f) for f in out] == [tuple(f) for f in q.faces]


class TestVertexMask:
    def test_ground_truth_never_masked(self):
        rng = np.random.default_rng(2)
        for _ in range(30):
            q = random_quantized(rng)
            st_ = VertexMaskState(q.bits)
            for t in encode_vertices(q):
                assert st_.allowed()[t]
                st_.push(t)

    def test_stop_requires_three_vertices(self):
        st_ = VertexMaskState(4)
        for t in [1, 1, 1, 1, 1, 2]:  # two vertices
            st_.push(t)
        assert not st_.allowed()[VERTEX_STOP]
        for t in [1, 1, 3]:
            st_.push(t)
        assert st_.allowed()[VERTEX_STOP]

    def test_stop_not_allowed_mid_vertex(self):
        st_ = VertexMaskState(4)
        for t in [1, 1, 1, 1, 1, 2, 1, 1, 3, 5]:
            st_.push(t)
        assert not st_.allowed()[VERTEX_STOP]

    def test_monotonicity_enforced(self):
        st_ = VertexMaskState(4)
        for t in [5, 5, 5]:
            st_.push(t)
        a = st_.allowed()
        assert not a[1:5].any() and a[5:17].all()  # z may not decrease

    def test_strict_increase_on_full_tie(self):
        st_ = VertexMaskState(4)
        for t in [5, 5, 5, 5, 5]:
            st_.push(t)
        a = st_.allowed()
        assert not a[5]  # x must strictly increase when (z, y) are tied
        assert a[6:17].all()

    def test_rejects_disallowed_push(self):
        st_ = VertexMaskState(4)
        st_.push(5)
        with pytest.raises(SequenceError):
            st_.push(VERTEX_STOP)


class TestFaceMask:
    def test_ground_truth_never_masked(self):
        rng = np.random.default_rng(3)
        for _ in range(30):
            q = random_quantized(rng)
            st_ = FaceMaskState(q.num_vertices)
            for t in encode_faces(q):
                assert st_.allowed()[t]
                st_.push(t)

    def test_first_face_starts_at_zero(self):
        a = face_mask([], 5)
        assert a[FACE_INDEX_OFFSET + 0]
        assert not a[FACE_INDEX_OFFSET + 1:].any()
        assert not a[FACE_STOP] and not a[FACE_NEW]

    def test_first_index_bounded_by_min_unreferenced(self):
        # after face (0,1,2) with n=5, next face may start at 0..3 (3 = min unref)
        st_ = FaceMaskState(5)
        for t in [2, 3, 4, FACE_NEW]:
            st_.push(t)
        a = st_.allowed()
        starts = {i for i in range(5) if a[FACE_INDEX_OFFSET + i]}
        assert starts == {0, 1, 2, 3}

    def test_within_face_greater_than_first_and_unique(self):
        st_ = FaceMaskState(6)
        for t in [2, 4, 5, FACE_NEW,  # face (0, 2, 3)
                  FACE_INDEX_OFFSET + 1, FACE_INDEX_OFFSET + 3]:
            st_.push(t)
        a = st_.allowed()
        allowed_idx = {i for i in range(6) if a[FACE_INDEX_OFFSET + i]}
        assert allowed_idx == {2, 4, 5}  # > 1, not the used 3

    def test_close_needs_three_indices(self):
        st_ = FaceMaskState(4)
        st_.push(FACE_INDEX_OFFSET)
        st_.push(FACE_INDEX_OFFSET + 1)
        a = st_.allowed()
        assert not a[FACE_NEW] and not a[FACE_STOP]

    def test_stop_needs_full_coverage(self):
        st_ = FaceMaskState(4)
        for t in [2, 3, 4]:
            st_.push(t)
        a = st_.allowed()
        assert a[FACE_NEW] and not a[FACE_STOP]  # vertex 3 unreferenced

    def test_lexicographic_tie_blocks_duplicates_and_prefixes(self):
        # previous face (0,1,2,3); a tied continuation may not emit
        # (0,1,2) (prefix) or (0,1,2,3) (duplicate), and at the tie the next
        # index must be >= the previous face's index at that position.
        n = 6
        st_ = FaceMaskState(n)
        for t in [2, 3, 4, 5, FACE_NEW, 2, 3]:
            st_.push(t)
        a = st_.allowed()
        assert not a[FACE_INDEX_OFFSET + 1]  # used in current face
        assert a[FACE_INDEX_OFFSET + 2]      # staying tied is fine
        st_.push(FACE_INDEX_OFFSET + 2)      # now (0,1,2), tied with prefix
        a = st_.allowed()
        assert not a[FACE_NEW] and not a[FACE_STOP]  # would be a prefix
        st_.push(FACE_INDEX_OFFSET + 3)      # (0,1,2,3): equal to previous
        a = st_.allowed()
        assert not a[FACE_NEW] and not a[FACE_STOP]  # duplicate
        st_.push(FACE_INDEX_OFFSET + 4)      # (0,1,2,3,4) > previous: ok
        assert st_.allowed()[FACE_NEW]

    def test_requires_three_vertices(self):
        with pytest.raises(ValueError):
            FaceMaskState(2)


def _random_mask_walk(mask_state, stop_token, rng, budget):
    toks = []
    for _ in range(budget):
        a = mask_state.allowed()
        choices = np.flatnonzero(a)
        if len(choices) == 0:
            return toks, False  # dead end: prefix locally valid but stuck
        t = int(rng.choice(choices))
        mask_state.push(t)
        toks.append(t)
        if t == stop_token:
            return toks, True
    return toks, False


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_mask_accepted_vertex_walks_decode(seed):
    rng = np.random.default_rng(seed)
    toks, done = _random_mask_walk(VertexMaskState(3), VERTEX_STOP, rng, 200)
    if done:
        decode_vertices(toks, 3)  # must not raise


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(3, 8))
def test_mask_accepted_face_walks_decode(seed, n):
    rng = np.random.default_rng(seed)
    toks, done = _random_mask_walk(FaceMaskState(n), FACE_STOP, rng, 400)
    if done:
        decode_faces(toks, n)  # must not raise
