"""Token sequences for vertices and faces, plus next-token validity masks.

Vertex alphabet (size 2**bits + 1):
    0           stop
    t in [1, 2**bits]   quantized coordinate value t - 1

Face alphabet (size n_vertices + 2):
    0           stop
    1           new-face separator
    t >= 2      vertex index t - 2

The masks are exact: a complete token sequence is accepted token-by-token
by the mask iff it decodes to a valid canonical mesh component.  Beyond
the basic monotonicity/uniqueness rules this requires tracking the
lexicographic tie between the face being built and the previous face, so
that the emitted face list is strictly increasing.
"""

from __future__ import annotations

import numpy as np

from .mesh import QuantizedMesh

VERTEX_STOP = 0
FACE_STOP = 0
FACE_NEW = 1
FACE_INDEX_OFFSET = 2


class SequenceError(ValueError):
    """A token sequence violating the encoding grammar.

    ``code`` is a stable machine-readable identifier for the violation.
    """

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


# ---------------------------------------------------------------------------
# encoding / decoding


def encode_vertices(qmesh: QuantizedMesh) -> list[int]:
    toks = []
    for z, y, x in qmesh.vertices:
        toks.extend((z + 1, y + 1, x + 1))
    toks.append(VERTEX_STOP)
    return toks


def decode_vertices(tokens, bits: int) -> list[tuple[int, int, int]]:
    """Inverse of encode_vertices; validates every sequence invariant."""
    hi = 1 << bits
    tokens = [int(t) for t in tokens]
    if not tokens or tokens[-1] != VERTEX_STOP:
        raise SequenceError("missing_stop", "sequence must end with the stop token")
    body = tokens[:-1]
    if VERTEX_STOP in body:
        pos = body.index(VERTEX_STOP)
        raise SequenceError("stop_mid_vertex" if pos % 3 else "early_stop",
                            f"stop token at interior position {pos}")
    if len(body) % 3 != 0:
        raise SequenceError("stop_mid_vertex",
                            f"stop after {len(body)} tokens (not a multiple of 3)")
    if not body:
        raise SequenceError("empty", "empty vertex sequence")
    for t in body:
        if not (1 <= t <= hi):
            raise SequenceError("token_range", f"token {t} outside [1, {hi}]")
    triples = [(body[i] - 1, body[i + 1] - 1, body[i + 2] - 1)
               for i in range(0, len(body), 3)]
    if len(triples) < 3:
        raise SequenceError("too_few_vertices",
                            f"{len(triples)} vertices cannot support a face")
    for (z0, y0, x0), (z1, y1, x1) in zip(triples, triples[1:]):
        if z1 < z0:
            raise SequenceError("z_decreased", f"z decreased: {z1} < {z0}")
        if z1 == z0:
            if y1 < y0:
                raise SequenceError("y_decreased", f"y decreased at equal z")
            if y1 == y0 and x1 <= x0:
                raise SequenceError("x_not_increasing",
                                    f"x not increasing at equal (z, y)")
    return triples


def encode_faces(qmesh: QuantizedMesh) -> list[int]:
    toks = []
    for fi, f in enumerate(qmesh.faces):
        if fi:
            toks.append(FACE_NEW)
        toks.extend(i + FACE_INDEX_OFFSET for i in f)
    toks.append(FACE_STOP)
    return toks


def decode_faces(tokens, n_vertices: int) -> list[tuple[int, ...]]:
    """Inverse of encode_faces; validates every FaceSequence invariant."""
    tokens = [int(t) for t in tokens]
    if not tokens or tokens[-1] != FACE_STOP:
        raise SequenceError("missing_stop", "sequence must end with the stop token")
    body = tokens[:-1]
    if FACE_STOP in body:
        raise SequenceError("interior_stop", "stop token before sequence end")
    faces: list[tuple[int, ...]] = []
    cur: list[int] = []
    for t in body:
        if t == FACE_NEW:
            if not cur:
                raise SequenceError("empty_face", "new-face token with empty face")
            faces.append(tuple(cur))
            cur = []
        else:
            i = t - FACE_INDEX_OFFSET
            if not (0 <= i < n_vertices):
                raise SequenceError("unknown_index",
                                    f"vertex index {i} out of range [0, {n_vertices})")
            cur.append(i)
    if not cur:
        raise SequenceError("trailing_new_face" if body else "empty",
                            "no face before the stop token")
    faces.append(tuple(cur))
    referenced: set[int] = set()
    for f in faces:
        if len(f) < 3:
            raise SequenceError("short_face", f"face {f} has fewer than 3 indices")
        if len(set(f)) != len(f):
            raise SequenceError("duplicate_index", f"face {f} repeats an index")
        if f[0] != min(f):
            raise SequenceError("rotation", f"face {f} does not start at its minimum")
        referenced.update(f)
    for a, b in zip(faces, faces[1:]):
        if not a < b:
            raise SequenceError("face_order", f"faces out of order: {a} !< {b}")
    if referenced != set(range(n_vertices)):
        missing = sorted(set(range(n_vertices)) - referenced)
        raise SequenceError("unreferenced",
                            f"vertex {missing[0]} unreferenced"
                            + (f" (and {len(missing) - 1} more)" if len(missing) > 1 else ""))
    return faces


# ---------------------------------------------------------------------------
# masks


class VertexMaskState:
    """Incremental validity mask over the vertex alphabet.

    push() accepts tokens one at a time; allowed() returns a boolean vector
    of size 2**bits + 1 for the next position.
    """

    def __init__(self, bits: int):
        self.bits = bits
        self.size = (1 << bits) + 1
        self.pos = 0
        self.prev: tuple[int, int, int] | None = None  # last complete vertex
        self.cur: list[int] = []
        self.done = False

    def allowed(self) -> np.ndarray:
        if self.done:
            raise SequenceError("after_stop", "sequence already stopped")
        hi = 1 << self.bits
        mask = np.zeros(self.size, dtype=bool)
        stage = self.pos % 3
        if stage == 0 and self.pos >= 9:  # no face can use fewer than 3 vertices
            mask[VERTEX_STOP] = True
        lo_val = 0
        strict = False
        if self.prev is not None:
            pz, py, px = self.prev
            if stage == 0:
                lo_val = pz
            elif stage == 1 and self.cur[0] == pz:
                lo_val = py
            elif stage == 2 and self.cur[0] == pz and self.cur[1] == py:
                lo_val = px
                strict = True
        start = lo_val + 1 if strict else lo_val
        mask[1 + start:1 + hi] = True
        return mask

    def push(self, token: int) -> None:
        token = int(token)
        if not self.allowed()[token]:
            raise SequenceError("masked_token",
                                f"token {token} not allowed at position {self.pos}")
        if token == VERTEX_STOP:
            self.done = True
            return
        self.cur.append(token - 1)
        self.pos += 1
        if len(self.cur) == 3:
            self.prev = tuple(self.cur)
            self.cur = []


def vertex_mask(prefix, bits: int) -> np.ndarray:
    st = VertexMaskState(bits)
    for t in prefix:
        st.push(t)
    return st.allowed()


class FaceMaskState:
    """Incremental validity mask over the face alphabet for a fixed N_V.

    Tracks, in O(1) amortized per token: the previous face, the face under
    construction and its member set, the referenced-vertex set with a
    min-unreferenced pointer, and whether the current face is still
    lexicographically tied with the previous face.
    """

    def __init__(self, n_vertices: int):
        if n_vertices < 3:
            raise ValueError(f"need at least 3 vertices, got {n_vertices}")
        self.n = n_vertices
        self.size = n_vertices + 2
        self.prev: list[int] | None = None
        self.cur: list[int] = []
        self.cur_set: set[int] = set()
        self.referenced = np.zeros(n_vertices, dtype=bool)
        self.min_unref = 0
        self.tied = False  # cur == prev[:len(cur)]
        self.done = False

    def _advance_min_unref(self) -> None:
        while self.min_unref < self.n and self.referenced[self.min_unref]:
            self.min_unref += 1

    def _closable(self) -> bool:
        # ending the current face here keeps the face list strictly increasing
        if len(self.cur) < 3:
            return False
        if self.tied and len(self.cur) <= len(self.prev):
            return False  # would emit a duplicate or a lexicographic prefix
        return True

    def allowed(self) -> np.ndarray:
        if self.done:
            raise SequenceError("after_stop", "sequence already stopped")
        mask = np.zeros(self.size, dtype=bool)
        if not self.cur:
            # first slot of a face
            lo = self.prev[0] if self.prev is not None else 0
            hi = self.min_unref  # inclusive; == n when all referenced
            for i in range(lo, min(hi, self.n - 1) + 1):
                mask[i + FACE_INDEX_OFFSET] = True
            return mask
        m = len(self.cur)
        first = self.cur[0]
        tie_lo = None
        if self.tied and m < len(self.prev):
            tie_lo = self.prev[m]
        for i in range(first + 1, self.n):
            if i in self.cur_set:
                continue
            if tie_lo is not None and i < tie_lo:
                continue
            mask[i + FACE_INDEX_OFFSET] = True
        if self._closable():
            mask[FACE_NEW] = True
            if self.min_unref >= self.n:
                mask[FACE_STOP] = True
        return mask

    def push(self, token: int) -> None:
        token = int(token)
        if not self.allowed()[token]:
            raise SequenceError("masked_token", f"face token {token} not allowed")
        if token == FACE_STOP:
            self.done = True
            return
        if token == FACE_NEW:
            self.prev = self.cur
            self.cur = []
            self.cur_set = set()
            self.tied = True
            return
        i = token - FACE_INDEX_OFFSET
        if self.tied:
            m = len(self.cur)
            if m >= len(self.prev) or i != self.prev[m]:
                self.tied = False
        self.cur.append(i)
        self.cur_set.add(i)
        if not self.referenced[i]:
            self.referenced[i] = True
            self._advance_min_unref()


def face_mask(prefix, n_vertices: int) -> np.ndarray:
    st = FaceMaskState(n_vertices)
    for t in prefix:
        st.push(t)
    return st.allowed()
