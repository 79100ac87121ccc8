"""Memory-budgeted batch planning and a double-buffered load/compute/drain pipeline.

A comparison too large for the configured memory region is split over the
reference rows: the query panel stays resident for the whole job while the
references stream through in maximal equal-size chunks. Each batch passes
through three stages, stage-in (copy references into a staging buffer),
compute (kernel over the staged buffers), and stage-out (copy the score chunk
to the sink). With overlap enabled, the drain of batch k runs concurrently
with the load of batch k+1 on separate lanes; a batch's own compute never
overlaps its own transfers, and at most two batches hold buffers at any time.
"""

from __future__ import annotations

import re
import time
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import InfeasiblePlanError, PanelMismatchError, PipelineAbortError
from .kernel import Panel, ScoreMatrix, TileConfig, run_blocked_kernel, run_naive_kernel

SCORE_CELL_BYTES = 4  # score cells are 4-byte unsigned on every wire format

KERNELS = ("blocked", "naive")
BUFFER_MODES = ("reusable", "fresh")

_BUDGET_RE = re.compile(r"^\s*(\d+)\s*([kKMG]?)\s*$")
_SUFFIX_BYTES = {"": 1, "k": 1024, "K": 1024, "M": 1024**2, "G": 1024**3}


@dataclass(frozen=True)
class MemoryBudget:
    """Byte capacity of the staging region holding one batch's inputs and output."""

    bytes_total: int

    def __post_init__(self):
        if self.bytes_total <= 0:
            raise ValueError("memory budget must be positive")

    @classmethod
    def parse(cls, text: str) -> "MemoryBudget":
        """Parse a byte count with an optional k/M/G suffix (powers of 1024)."""
        m = _BUDGET_RE.match(text)
        if not m:
            raise ValueError(f"cannot parse memory budget {text!r}")
        return cls(int(m.group(1)) * _SUFFIX_BYTES[m.group(2)])


@dataclass(frozen=True)
class BatchPlan:
    """Partition of the reference rows into budget-respecting contiguous chunks."""

    n_refs: int
    n_queries: int
    n_words: int
    word_width: int
    ranges: tuple[tuple[int, int], ...]
    budget: "MemoryBudget | None" = None

    def __post_init__(self):
        expected_start = 0
        sizes = []
        for start, stop in self.ranges:
            if start != expected_start or stop <= start:
                raise ValueError(f"batch ranges must be contiguous, got {self.ranges}")
            expected_start = stop
            sizes.append(stop - start)
        if expected_start != self.n_refs:
            raise ValueError(f"batch ranges cover [0, {expected_start}), need [0, {self.n_refs})")
        if sizes[:-1] and len(set(sizes[:-1])) != 1:
            raise ValueError("all batches except the last must have equal size")
        if self.budget is not None:
            for size in sizes:
                if self.query_bytes + size * self.row_bytes > self.budget.bytes_total:
                    raise ValueError(f"batch of {size} rows exceeds the memory budget")

    @property
    def word_bytes(self) -> int:
        return self.word_width // 8

    @property
    def query_bytes(self) -> int:
        return self.n_queries * self.n_words * self.word_bytes

    @property
    def row_bytes(self) -> int:
        """Bytes one reference row adds to a batch: its words plus its output row."""
        return self.n_words * self.word_bytes + self.n_queries * SCORE_CELL_BYTES

    @property
    def batch_bytes(self) -> tuple[int, ...]:
        return tuple(self.query_bytes + (e - s) * self.row_bytes for s, e in self.ranges)

    @property
    def n_batches(self) -> int:
        return len(self.ranges)

    @property
    def max_rows(self) -> int:
        return max((e - s for s, e in self.ranges), default=0)


def plan_batches(
    n_refs: int,
    n_queries: int,
    n_words: int,
    word_width: int,
    budget: "MemoryBudget | None" = None,
) -> BatchPlan:
    """Maximal equal-size chunking of the reference rows under the budget.

    The query panel is resident across all batches, so each batch must hold
    the whole query panel, its reference chunk, and its output chunk. Raises
    InfeasiblePlanError naming the minimum feasible budget when even a single
    reference row does not fit.
    """
    if n_refs < 0 or n_queries < 0 or n_words <= 0:
        raise ValueError("panel dimensions must be non-negative (words positive)")
    word_bytes = word_width // 8
    query_bytes = n_queries * n_words * word_bytes
    row_bytes = n_words * word_bytes + n_queries * SCORE_CELL_BYTES
    if budget is None:
        rows = max(n_refs, 1)
    else:
        rows = (budget.bytes_total - query_bytes) // row_bytes
        if rows < 1:
            minimum = query_bytes + row_bytes
            raise InfeasiblePlanError(
                f"budget of {budget.bytes_total} bytes cannot hold the query panel "
                f"plus one reference row; minimum feasible budget is {minimum} bytes",
                min_feasible_bytes=minimum,
            )
        rows = min(rows, n_refs) if n_refs else rows
    ranges = tuple((s, min(s + rows, n_refs)) for s in range(0, n_refs, rows))
    return BatchPlan(n_refs, n_queries, n_words, word_width, ranges, budget)


class StagingBuffers:
    """Staging allocation policy.

    In reusable mode each buffer role is allocated once per job and recycled
    across batches; in fresh mode every request allocates. Results never
    depend on the mode, only the allocation accounting does.
    """

    def __init__(self, mode: str = "reusable"):
        if mode not in BUFFER_MODES:
            raise ValueError(f"buffer mode must be one of {BUFFER_MODES}, got {mode!r}")
        self.mode = mode
        self.alloc_events: Counter = Counter()
        self._cache: dict[str, np.ndarray] = {}

    def get(self, role: str, shape: tuple[int, ...], dtype) -> np.ndarray:
        if self.mode == "reusable":
            buf = self._cache.get(role)
            if buf is None:
                buf = np.empty(shape, dtype)
                self._cache[role] = buf
                self.alloc_events[role] += 1
            elif buf.shape != tuple(shape) or buf.dtype != np.dtype(dtype):
                raise ValueError(f"staging buffer {role!r} requested with a new shape mid-job")
            return buf
        self.alloc_events[role] += 1
        return np.empty(shape, dtype)


@dataclass(frozen=True)
class BatchTiming:
    index: int
    rows: int
    stage_in_s: float
    compute_s: float
    stage_out_s: float


@dataclass
class TimingLedger:
    """Per-batch wall-clock accounting for the three pipeline phases."""

    batches: list[BatchTiming] = field(default_factory=list)
    wall_s: float = 0.0
    alloc_events: dict[str, int] = field(default_factory=dict)

    @property
    def stage_in_total_s(self) -> float:
        return sum(b.stage_in_s for b in self.batches)

    @property
    def compute_total_s(self) -> float:
        return sum(b.compute_s for b in self.batches)

    @property
    def stage_out_total_s(self) -> float:
        return sum(b.stage_out_s for b in self.batches)


@dataclass(frozen=True)
class PipelineConfig:
    """Kernel and pipeline knobs for one comparison job."""

    kernel: str = "blocked"
    tile: TileConfig = field(default_factory=TileConfig)
    workers: int = 1
    overlap: bool = True
    buffers: str = "reusable"

    def __post_init__(self):
        if self.kernel not in KERNELS:
            raise ValueError(f"kernel must be one of {KERNELS}, got {self.kernel!r}")
        if self.buffers not in BUFFER_MODES:
            raise ValueError(f"buffers must be one of {BUFFER_MODES}, got {self.buffers!r}")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")


class BlockedExecutor:
    """Runs the blocked kernel; expects the staged query panel transposed."""

    wants_transposed = True

    def __init__(self, tile: TileConfig | None = None, workers: int = 1):
        self.tile = tile or TileConfig()
        self.workers = workers

    def run(self, ref_words: np.ndarray, query_words: np.ndarray, out: np.ndarray) -> None:
        run_blocked_kernel(ref_words, query_words, out, self.tile, self.workers)


class NaiveExecutor:
    """Runs the single-threaded reference kernel on row-major panels."""

    wants_transposed = False

    def run(self, ref_words: np.ndarray, query_words: np.ndarray, out: np.ndarray) -> None:
        run_naive_kernel(ref_words, query_words, out)


def make_executor(config: PipelineConfig):
    if config.kernel == "naive":
        return NaiveExecutor()
    return BlockedExecutor(config.tile, config.workers)


class ArraySource:
    """Serves reference rows from an in-memory panel."""

    def __init__(self, panel: Panel):
        self.ids = panel.ids
        self._words = panel.words

    def rows(self, start: int, stop: int) -> np.ndarray:
        return self._words[start:stop]


class ArraySink:
    """Assembles score chunks into one dense in-memory matrix."""

    def __init__(self, n_refs: int, n_queries: int):
        self.scores = np.zeros((n_refs, n_queries), dtype=np.uint32)

    def put(self, start_row: int, chunk: np.ndarray) -> None:
        self.scores[start_row : start_row + chunk.shape[0]] = chunk


def run_pipeline(
    plan: BatchPlan,
    refs,
    queries: Panel,
    config: PipelineConfig | None = None,
    sink=None,
    executor=None,
):
    """Execute a batch plan through the staged pipeline.

    refs may be a Panel or any source with rows(start, stop). Score chunks
    are delivered to the sink in batch order; when sink is None an in-memory
    matrix is assembled and returned. Returns (ScoreMatrix | None, ledger).
    """
    config = config or PipelineConfig()
    executor = executor or make_executor(config)
    source = refs if hasattr(refs, "rows") else ArraySource(refs)

    if queries.n_profiles != plan.n_queries or queries.n_words != plan.n_words:
        raise ValueError(
            f"plan was built for {plan.n_queries} queries x {plan.n_words} words, "
            f"got {queries.n_profiles} x {queries.n_words}"
        )
    if queries.word_width != plan.word_width:
        raise ValueError(f"plan word width {plan.word_width} != panel {queries.word_width}")
    if isinstance(refs, Panel):
        if refs.n_profiles != plan.n_refs:
            raise ValueError(
                f"plan covers {plan.n_refs} reference rows, panel has {refs.n_profiles}"
            )
        if refs.bit_length != queries.bit_length or refs.word_width != queries.word_width:
            raise PanelMismatchError(
                f"reference panel is {refs.bit_length} bits x {refs.word_width}-bit words, "
                f"queries are {queries.bit_length} x {queries.word_width}"
            )
    if plan.budget is not None:
        for size in plan.batch_bytes:
            if size > plan.budget.bytes_total:
                raise ValueError("batch exceeds budget at execution time")

    own_sink = sink is None
    if own_sink:
        sink = ArraySink(plan.n_refs, plan.n_queries)

    buffers = StagingBuffers(config.buffers)
    ledger = TimingLedger()
    wall_start = time.perf_counter()

    dtype = queries.words.dtype
    n_words = plan.n_words
    n_queries = plan.n_queries
    max_rows = plan.max_rows
    query_shape = (n_words, n_queries) if executor.wants_transposed else (n_queries, n_words)
    query_buf = np.empty((0, 0), dtype=dtype)

    def stage_in(k: int):
        t0 = time.perf_counter()
        nonlocal query_buf
        if k == 0:
            # the resident query panel transfers once, with the first batch
            query_buf = buffers.get("queries", query_shape, dtype)
            np.copyto(
                query_buf,
                queries.words.T if executor.wants_transposed else queries.words,
            )
        start, stop = plan.ranges[k]
        rows = stop - start
        chunk = source.rows(start, stop)
        if chunk.shape != (rows, n_words):
            raise ValueError(f"source returned shape {chunk.shape} for rows [{start}, {stop})")
        ref_buf = buffers.get(f"refs[{k % 2}]", (max_rows, n_words), dtype)[:rows]
        np.copyto(ref_buf, chunk)
        return time.perf_counter() - t0, ref_buf

    def compute(k: int, ref_buf: np.ndarray):
        rows = ref_buf.shape[0]
        out_buf = buffers.get(f"out[{k % 2}]", (max_rows, n_queries), np.uint32)[:rows]
        t0 = time.perf_counter()
        executor.run(ref_buf, query_buf, out_buf)
        return time.perf_counter() - t0, out_buf

    def stage_out(k: int, out_buf: np.ndarray):
        t0 = time.perf_counter()
        sink.put(plan.ranges[k][0], out_buf)
        return time.perf_counter() - t0

    timings: dict[int, tuple[float, float, float]] = {}

    if not config.overlap:
        for k in range(plan.n_batches):
            try:
                in_s, ref_buf = stage_in(k)
            except Exception as exc:
                ledger.wall_s = time.perf_counter() - wall_start
                raise PipelineAbortError(
                    f"stage-in failed at batch {k}: {exc}", completed_batches=k
                ) from exc
            compute_s, out_buf = compute(k, ref_buf)
            out_s = stage_out(k, out_buf)
            timings[k] = (in_s, compute_s, out_s)
    else:
        load_lane = ThreadPoolExecutor(1, thread_name_prefix="stage-in")
        drain_lane = ThreadPoolExecutor(1, thread_name_prefix="stage-out")
        in_futures: dict[int, object] = {}
        out_futures: dict[int, object] = {}
        compute_times: dict[int, tuple[float, float]] = {}
        try:
            if plan.n_batches:
                in_futures[0] = load_lane.submit(stage_in, 0)
            for k in range(plan.n_batches):
                try:
                    in_s, ref_buf = in_futures.pop(k).result()
                except Exception as exc:
                    drain_lane.shutdown(wait=True)
                    completed = sum(
                        1 for f in out_futures.values() if f.done() and f.exception() is None
                    )
                    ledger.wall_s = time.perf_counter() - wall_start
                    raise PipelineAbortError(
                        f"stage-in failed at batch {k}: {exc}", completed_batches=completed
                    ) from exc
                if k >= 2:
                    # the out slot for this batch is freed by the drain two back
                    out_futures[k - 2].result()
                compute_s, out_buf = compute(k, ref_buf)
                compute_times[k] = (in_s, compute_s)
                # drain batch k while batch k+1 loads on the other lane
                out_futures[k] = drain_lane.submit(stage_out, k, out_buf)
                if k + 1 < plan.n_batches:
                    in_futures[k + 1] = load_lane.submit(stage_in, k + 1)
            for k in range(plan.n_batches):
                in_s, compute_s = compute_times[k]
                timings[k] = (in_s, compute_s, out_futures[k].result())
        finally:
            load_lane.shutdown(wait=True)
            drain_lane.shutdown(wait=True)

    for k in sorted(timings):
        start, stop = plan.ranges[k]
        in_s, compute_s, out_s = timings[k]
        ledger.batches.append(BatchTiming(k, stop - start, in_s, compute_s, out_s))
    ledger.wall_s = time.perf_counter() - wall_start
    ledger.alloc_events = dict(buffers.alloc_events)

    if not own_sink:
        return None, ledger
    ref_ids = getattr(source, "ids", None)
    if ref_ids is None or len(ref_ids) != plan.n_refs:
        ref_ids = tuple(f"r{i}" for i in range(plan.n_refs))
    return ScoreMatrix(tuple(ref_ids), queries.ids, sink.scores), ledger
