"""Bit-packed identity profile comparison via overloaded XOR/AND/popcount matrix multiply."""

from .codec import (
    PackedProfile,
    ProfileBits,
    encode_genotype,
    format_hex,
    format_hex_line,
    pack,
    parse_hex_line,
    unpack,
)
from .errors import (
    CodecError,
    CorruptProfileError,
    FastIdError,
    InfeasiblePlanError,
    PanelFormatError,
    PanelMismatchError,
    PipelineAbortError,
)
from .kernel import (
    Panel,
    QueryLayout,
    ScoreMatrix,
    TileConfig,
    compare_blocked,
    compare_naive,
    popcount_reference,
    relayout_queries,
    restore_queries,
    score_profiles,
    score_word,
)
from .scheduler import (
    BatchPlan,
    MemoryBudget,
    PipelineConfig,
    StagingBuffers,
    TimingLedger,
    plan_batches,
    run_pipeline,
)

__version__ = "0.1.0"

__all__ = [
    "BatchPlan",
    "CodecError",
    "CorruptProfileError",
    "FastIdError",
    "InfeasiblePlanError",
    "MemoryBudget",
    "PackedProfile",
    "Panel",
    "PanelFormatError",
    "PanelMismatchError",
    "PipelineAbortError",
    "PipelineConfig",
    "ProfileBits",
    "QueryLayout",
    "ScoreMatrix",
    "StagingBuffers",
    "TileConfig",
    "TimingLedger",
    "compare_blocked",
    "compare_naive",
    "encode_genotype",
    "format_hex",
    "format_hex_line",
    "pack",
    "parse_hex_line",
    "plan_batches",
    "popcount_reference",
    "relayout_queries",
    "restore_queries",
    "run_pipeline",
    "score_profiles",
    "score_word",
    "unpack",
]
