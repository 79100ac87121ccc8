"""Containment-difference scoring kernels over packed profile panels.

The score of a reference word r against a query word q is
popcount((r XOR q) AND r), the number of minor-allele bits present in r but
absent from q. Panel comparison is the overloaded matrix product C = A B with
multiply/add replaced by XOR-AND-popcount/integer-add: A holds reference rows,
B query rows, and C[i, j] the profile score.

Two panel kernels are provided. compare_naive is the single-threaded
reference implementation and the correctness oracle. compare_blocked computes
the same matrix with cache-sized output tiles distributed over a worker pool,
the query panel transposed for unit-stride access, and a fixed number of
output cells accumulated per inner step so each reference word load is reused.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numba import njit, types
from numba.extending import intrinsic

from .codec import PackedProfile, word_dtype, words_per_profile, WORD_WIDTHS
from .errors import CorruptProfileError, PanelMismatchError

TILE_SIZES = (16, 32, 64)
DEFAULT_TILE_SIZE = 64
DEFAULT_CELLS_PER_TASK = 16


def score_word(r: int, q: int) -> int:
    """popcount((r XOR q) AND r): minor-allele bits of r missing from q."""
    return ((r ^ q) & r).bit_count()


def popcount_reference(w: int) -> int:
    """Shift-and-test popcount, independent of any hardware or SWAR path."""
    if w < 0:
        raise ValueError("popcount is defined for unsigned words")
    count = 0
    while w:
        count += w & 1
        w >>= 1
    return count


def score_profiles(r: PackedProfile, q: PackedProfile) -> int:
    """Word-wise score summed over a profile pair, word 0 to N_W - 1."""
    if r.n_words != q.n_words or r.word_width != q.word_width:
        raise PanelMismatchError(
            f"profiles {r.id!r} and {q.id!r} differ in shape: "
            f"{r.n_words}x{r.word_width} vs {q.n_words}x{q.word_width}"
        )
    total = 0
    for rw, qw in zip(r.words, q.words):
        total += score_word(rw, qw)
    return total


def _check_padding(words: np.ndarray, bit_length: int, word_width: int) -> None:
    tail = bit_length % word_width
    if tail and words.size and (words[:, -1] & ((1 << (word_width - tail)) - 1)).any():
        raise CorruptProfileError(f"nonzero padding past bit {bit_length}")


@dataclass(frozen=True)
class Panel:
    """Dense row-major collection of equally sized packed profiles."""

    ids: tuple[str, ...]
    words: np.ndarray
    bit_length: int

    def __post_init__(self):
        words = np.ascontiguousarray(self.words)
        if words.ndim != 2:
            raise ValueError("panel words must be a 2-D array (rows x words)")
        if words.dtype not in (np.dtype(np.uint32), np.dtype(np.uint64)):
            raise ValueError(f"panel dtype must be uint32 or uint64, got {words.dtype}")
        ids = tuple(self.ids)
        if len(ids) != words.shape[0]:
            raise ValueError(f"{len(ids)} ids for {words.shape[0]} profile rows")
        width = words.dtype.itemsize * 8
        if self.bit_length <= 0:
            raise ValueError("panel bit length must be positive")
        if words.shape[1] != words_per_profile(self.bit_length, width):
            raise ValueError(
                f"expected {words_per_profile(self.bit_length, width)} words for "
                f"{self.bit_length} bits at width {width}, got {words.shape[1]}"
            )
        _check_padding(words, self.bit_length, width)
        words.setflags(write=False)
        object.__setattr__(self, "words", words)
        object.__setattr__(self, "ids", ids)

    @property
    def n_profiles(self) -> int:
        return self.words.shape[0]

    @property
    def n_words(self) -> int:
        return self.words.shape[1]

    @property
    def word_width(self) -> int:
        return self.words.dtype.itemsize * 8

    @classmethod
    def from_profiles(
        cls, profiles: "list[PackedProfile] | tuple[PackedProfile, ...]", bit_length: int
    ) -> "Panel":
        if not profiles:
            raise ValueError("cannot infer panel shape from zero profiles")
        width = profiles[0].word_width
        n_words = profiles[0].n_words
        for p in profiles:
            if p.word_width != width or p.n_words != n_words:
                raise PanelMismatchError(
                    f"profile {p.id!r} has shape {p.n_words}x{p.word_width}, "
                    f"panel is {n_words}x{width}"
                )
        arr = np.array([p.words for p in profiles], dtype=word_dtype(width))
        return cls(tuple(p.id for p in profiles), arr, bit_length)

    def profile(self, index: int) -> PackedProfile:
        row = self.words[index]
        return PackedProfile(self.ids[index], tuple(int(w) for w in row), self.word_width)


@dataclass(frozen=True)
class QueryLayout:
    """Query panel relaid word-index-major so a tile of query words is contiguous."""

    ids: tuple[str, ...]
    words: np.ndarray  # shape (n_words, n_queries)
    bit_length: int

    def __post_init__(self):
        words = np.ascontiguousarray(self.words)
        if words.ndim != 2:
            raise ValueError("query layout words must be 2-D (words x queries)")
        words.setflags(write=False)
        object.__setattr__(self, "words", words)
        object.__setattr__(self, "ids", tuple(self.ids))

    @property
    def n_queries(self) -> int:
        return self.words.shape[1]

    @property
    def n_words(self) -> int:
        return self.words.shape[0]

    @property
    def word_width(self) -> int:
        return self.words.dtype.itemsize * 8


def relayout_queries(queries: Panel) -> QueryLayout:
    """Lossless column-major relayout of a query panel."""
    return QueryLayout(queries.ids, np.ascontiguousarray(queries.words.T), queries.bit_length)


def restore_queries(layout: QueryLayout) -> Panel:
    """Inverse of relayout_queries."""
    return Panel(layout.ids, np.ascontiguousarray(layout.words.T), layout.bit_length)


@dataclass(frozen=True)
class ScoreMatrix:
    """Dense N_R x N_Q matrix of non-negative integer scores."""

    ref_ids: tuple[str, ...]
    query_ids: tuple[str, ...]
    scores: np.ndarray

    def __post_init__(self):
        scores = np.ascontiguousarray(self.scores, dtype=np.uint32)
        if scores.shape != (len(self.ref_ids), len(self.query_ids)):
            raise ValueError(
                f"score shape {scores.shape} does not match "
                f"{len(self.ref_ids)} refs x {len(self.query_ids)} queries"
            )
        scores.setflags(write=False)
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "ref_ids", tuple(self.ref_ids))
        object.__setattr__(self, "query_ids", tuple(self.query_ids))

    @property
    def shape(self) -> tuple[int, int]:
        return self.scores.shape


@dataclass(frozen=True)
class TileConfig:
    """Blocked-kernel shape: output tile edge and cells accumulated per step."""

    block_size: int = DEFAULT_TILE_SIZE
    cells_per_task: int = DEFAULT_CELLS_PER_TASK

    def __post_init__(self):
        if self.block_size not in TILE_SIZES:
            raise ValueError(f"tile size must be one of {TILE_SIZES}, got {self.block_size}")
        if self.cells_per_task < 1:
            raise ValueError("cells_per_task must be at least 1")


@intrinsic
def _hw_popcount(typingctx, value):
    """Hardware population count (llvm.ctpop) of a uint64."""
    if value != types.uint64:
        raise TypeError("popcount operand must be uint64")
    sig = types.uint64(value)

    def codegen(context, builder, signature, args):
        (val,) = args
        return builder.ctpop(val)

    return sig, codegen


@njit(cache=True, nogil=True)
def _naive_kernel(refs, queries, out):
    n_refs, n_words = refs.shape
    n_queries = queries.shape[0]
    for i in range(n_refs):
        for j in range(n_queries):
            total = np.uint32(0)
            for k in range(n_words):
                r = np.uint64(refs[i, k])
                q = np.uint64(queries[j, k])
                total += np.uint32(_hw_popcount((r ^ q) & r))
            out[i, j] = total


@njit(cache=True, nogil=True)
def _blocked_worker(refs, queries_t, out, block, cells, worker, n_workers):
    n_refs, n_words = refs.shape
    n_queries = queries_t.shape[1]
    tiles_i = (n_refs + block - 1) // block
    tiles_j = (n_queries + block - 1) // block
    # one tile's query words, staged per worker; the shared-memory analog
    scratch = np.empty((block, n_words), dtype=queries_t.dtype)
    for t in range(worker, tiles_i * tiles_j, n_workers):
        ti = t // tiles_j
        tj = t - ti * tiles_j
        i0 = ti * block
        i1 = min(i0 + block, n_refs)
        j0 = tj * block
        j1 = min(j0 + block, n_queries)
        width = j1 - j0
        for k in range(n_words):
            for j in range(width):
                scratch[j, k] = queries_t[k, j0 + j]
        for i in range(i0, i1):
            jb = 0
            while jb < width:
                # a group of output cells sharing this reference row
                n_cells = min(cells, width - jb)
                for c in range(n_cells):
                    total = np.uint32(0)
                    for k in range(n_words):
                        r = np.uint64(refs[i, k])
                        q = np.uint64(scratch[jb + c, k])
                        total += np.uint32(_hw_popcount((r ^ q) & r))
                    out[i, j0 + jb + c] = total
                jb += n_cells


def _check_panels(ref_bits: int, ref_width: int, query_bits: int, query_width: int) -> None:
    if ref_bits != query_bits:
        raise PanelMismatchError(
            f"panel bit lengths differ: refs {ref_bits}, queries {query_bits}"
        )
    if ref_width != query_width:
        raise PanelMismatchError(
            f"panel word widths differ: refs {ref_width}, queries {query_width}"
        )


def compare_naive(refs: Panel, queries: Panel) -> ScoreMatrix:
    """Single-threaded reference comparison: the oracle for all other kernels.

    Performs exactly N_R * N_Q * N_W word-score evaluations.
    """
    _check_panels(refs.bit_length, refs.word_width, queries.bit_length, queries.word_width)
    out = np.zeros((refs.n_profiles, queries.n_profiles), dtype=np.uint32)
    if out.size:
        _naive_kernel(refs.words, queries.words, out)
    return ScoreMatrix(refs.ids, queries.ids, out)


def compare_blocked(
    refs: Panel,
    queries: QueryLayout,
    tile: TileConfig | None = None,
    parallelism: int = 1,
) -> ScoreMatrix:
    """Blocked parallel comparison, bit-identical to compare_naive.

    The output is split into block_size x block_size tiles assigned to
    workers in row-major tile order; tiles are disjoint across workers, so
    the result is complete once every worker returns.
    """
    tile = tile or TileConfig()
    if parallelism < 1:
        raise ValueError("parallelism must be at least 1")
    _check_panels(refs.bit_length, refs.word_width, queries.bit_length, queries.word_width)
    out = np.zeros((refs.n_profiles, queries.n_queries), dtype=np.uint32)
    if out.size:
        run_blocked_kernel(refs.words, queries.words, out, tile, parallelism)
    return ScoreMatrix(refs.ids, queries.ids, out)


def run_blocked_kernel(
    ref_words: np.ndarray,
    query_layout_words: np.ndarray,
    out: np.ndarray,
    tile: TileConfig,
    parallelism: int,
) -> None:
    """Dispatch the blocked kernel over raw arrays (refs row-major, queries transposed)."""
    if out.size == 0:
        return
    if parallelism == 1:
        _blocked_worker(
            ref_words, query_layout_words, out, tile.block_size, tile.cells_per_task, 0, 1
        )
        return
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        futures = [
            pool.submit(
                _blocked_worker,
                ref_words,
                query_layout_words,
                out,
                tile.block_size,
                tile.cells_per_task,
                worker,
                parallelism,
            )
            for worker in range(parallelism)
        ]
        for future in futures:
            future.result()


def run_naive_kernel(ref_words: np.ndarray, query_words: np.ndarray, out: np.ndarray) -> None:
    """Dispatch the naive kernel over raw row-major arrays."""
    if out.size:
        _naive_kernel(ref_words, query_words, out)
