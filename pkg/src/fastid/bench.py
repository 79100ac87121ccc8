"""Reproducible measurement harness over synthetic panels.

Every run draws its panels from one seed, times the three pipeline phases,
and reports per-phase medians plus a checksum of the score matrix. Score
checksums are seed-deterministic; timings are explicitly not. Sweeps emit
long-form rows (one per phase) suitable for external plotting.
"""

from __future__ import annotations

import hashlib
import statistics
from dataclasses import dataclass

import numpy as np

from .kernel import Panel
from .scheduler import MemoryBudget, PipelineConfig, plan_batches, run_pipeline

SWEEP_COLUMNS = (
    "n_refs",
    "n_queries",
    "n_words",
    "kernel",
    "tile",
    "workers",
    "phase",
    "median_ms",
    "seed",
    "checksum",
    "compute_stage_ratio",
)
PHASES = ("stage_in", "compute", "stage_out")

DEFAULT_MAX_BYTES = 2 * 1024**3  # refuse jobs whose working set cannot fit comfortably

_REF_STREAM = 0
_QUERY_STREAM = 1


def synth_panel(
    n_rows: int,
    n_words: int,
    word_width: int = 64,
    seed: int = 0,
    stream: int = _REF_STREAM,
    prefix: str = "p",
) -> Panel:
    """Random panel drawn deterministically from (seed, shape, stream)."""
    rng = np.random.default_rng([seed, stream, n_rows, n_words, word_width])
    dtype = np.uint32 if word_width == 32 else np.uint64
    words = rng.integers(0, 2**word_width, size=(n_rows, n_words), dtype=dtype)
    ids = tuple(f"{prefix}{i}" for i in range(n_rows))
    return Panel(ids, words, n_words * word_width)


def score_checksum(scores: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(scores, dtype="<u4").tobytes()).hexdigest()[:16]


def job_bytes(n_refs: int, n_queries: int, n_words: int, word_width: int) -> int:
    """Rough working-set estimate: panels, staged copies, and the score matrix."""
    word_bytes = word_width // 8
    refs = n_refs * n_words * word_bytes
    queries = n_queries * n_words * word_bytes
    scores = n_refs * n_queries * 4
    return 2 * refs + 2 * queries + 3 * scores


@dataclass(frozen=True)
class MeasureResult:
    n_refs: int
    n_queries: int
    n_words: int
    kernel: str
    tile: int
    workers: int
    seed: int
    reps: int
    stage_in_ms: float
    compute_ms: float
    stage_out_ms: float
    checksum: str

    @property
    def compute_stage_ratio(self) -> float:
        stage = self.stage_in_ms + self.stage_out_ms
        return self.compute_ms / stage if stage > 0 else float("inf")

    @property
    def comparisons_per_s(self) -> float:
        return self.n_refs * self.n_queries / (self.compute_ms / 1e3) if self.compute_ms else 0.0

    def phase_ms(self, phase: str) -> float:
        return {
            "stage_in": self.stage_in_ms,
            "compute": self.compute_ms,
            "stage_out": self.stage_out_ms,
        }[phase]


def measure(
    n_refs: int,
    n_queries: int,
    n_words: int,
    config: PipelineConfig,
    *,
    word_width: int = 64,
    seed: int = 0,
    reps: int = 3,
    warmup: int = 1,
    budget: "MemoryBudget | None" = None,
    max_bytes: int = DEFAULT_MAX_BYTES,
) -> "MeasureResult | None":
    """Median phase timings over reps runs of one configuration.

    Runs warmup uncounted iterations first so jit compilation and cold caches
    stay out of the medians. Returns None when the estimated working set
    exceeds max_bytes. Raises if the score checksum changes between
    repetitions (determinism violation).
    """
    if job_bytes(n_refs, n_queries, n_words, word_width) > max_bytes:
        return None
    refs = synth_panel(n_refs, n_words, word_width, seed, _REF_STREAM, "r")
    queries = synth_panel(n_queries, n_words, word_width, seed, _QUERY_STREAM, "q")
    plan = plan_batches(n_refs, n_queries, n_words, word_width, budget)
    per_phase: dict[str, list[float]] = {p: [] for p in PHASES}
    checksum = None
    for _ in range(max(warmup, 0)):
        run_pipeline(plan, refs, queries, config)
    for _ in range(max(reps, 1)):
        matrix, ledger = run_pipeline(plan, refs, queries, config)
        per_phase["stage_in"].append(ledger.stage_in_total_s * 1e3)
        per_phase["compute"].append(ledger.compute_total_s * 1e3)
        per_phase["stage_out"].append(ledger.stage_out_total_s * 1e3)
        digest = score_checksum(matrix.scores)
        if checksum is None:
            checksum = digest
        elif digest != checksum:
            raise AssertionError(
                f"score checksum changed between repetitions: {checksum} vs {digest}"
            )
    return MeasureResult(
        n_refs,
        n_queries,
        n_words,
        config.kernel,
        config.tile.block_size,
        config.workers,
        seed,
        max(reps, 1),
        statistics.median(per_phase["stage_in"]),
        statistics.median(per_phase["compute"]),
        statistics.median(per_phase["stage_out"]),
        checksum,
    )


def _row(result: MeasureResult, phase: str, median_ms, ratio) -> dict:
    return {
        "n_refs": result.n_refs,
        "n_queries": result.n_queries,
        "n_words": result.n_words,
        "kernel": result.kernel,
        "tile": result.tile,
        "workers": result.workers,
        "phase": phase,
        "median_ms": median_ms,
        "seed": result.seed,
        "checksum": result.checksum,
        "compute_stage_ratio": ratio,
    }


def sweep(
    sizes,
    configs,
    *,
    word_width: int = 64,
    seed: int = 0,
    reps: int = 3,
    warmup: int = 1,
    budget: "MemoryBudget | None" = None,
    max_bytes: int = DEFAULT_MAX_BYTES,
) -> list[dict]:
    """Long-form rows for each (size, config, phase), one configuration at a time."""
    rows = []
    for n_refs, n_queries, n_words in sizes:
        for config in configs:
            result = measure(
                n_refs,
                n_queries,
                n_words,
                config,
                word_width=word_width,
                seed=seed,
                reps=reps,
                warmup=warmup,
                budget=budget,
                max_bytes=max_bytes,
            )
            if result is None:
                skipped = MeasureResult(
                    n_refs, n_queries, n_words, config.kernel, config.tile.block_size,
                    config.workers, seed, 0, 0.0, 0.0, 0.0, "",
                )
                rows.append(_row(skipped, "infeasible", "", ""))
                continue
            ratio = f"{result.compute_stage_ratio:.6g}"
            for phase in PHASES:
                rows.append(_row(result, phase, f"{result.phase_ms(phase):.6f}", ratio))
    return rows


def rows_to_csv(rows, fh) -> None:
    fh.write(",".join(SWEEP_COLUMNS) + "\n")
    for row in rows:
        fh.write(",".join(str(row[c]) for c in SWEEP_COLUMNS) + "\n")
