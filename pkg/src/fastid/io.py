"""Readers and writers for panel files, score matrices, and timing ledgers.

Panel files are UTF-8 text: a required `#bits=<L>` header, `#` comments, and
one `<id><TAB><hex>` profile per line. The hex field is a pure bit string
(leftmost digit = most significant nibble of word 0), so a file written with
one word width loads identically under another; missing trailing padding is
zero-extended and surplus padding must be zero.

Score matrices have two formats. CSV: a header row of query ids behind a
leading `ref_id` cell, then one row per reference. Packed binary: magic
"FIDM", a version byte, N_R and N_Q as 8-byte little-endian counts, then
N_R x N_Q cells as 4-byte little-endian unsigned integers in row-major order.
Both writers are deterministic byte-for-byte.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np

from .codec import word_dtype, words_per_profile, DEFAULT_WORD_WIDTH
from .errors import CorruptProfileError, PanelFormatError
from .kernel import Panel, ScoreMatrix
from .scheduler import TimingLedger

MAGIC = b"FIDM"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sBQQ")

LEDGER_COLUMNS = ("batch_index", "rows", "stage_in_ms", "compute_ms", "stage_out_ms")

_HEX_DIGITS = frozenset("0123456789abcdefABCDEF")


def _validate_id(ident: str, lineno: int) -> None:
    if not ident:
        raise PanelFormatError(f"line {lineno}: empty profile id")
    if "," in ident:
        raise PanelFormatError(f"line {lineno}: id {ident!r} contains a CSV separator")


def load_panel(path, word_width: int = DEFAULT_WORD_WIDTH) -> Panel:
    """Read a panel file into memory, validating format and padding per line."""
    dtype = word_dtype(word_width)
    digits_per_word = word_width // 4
    bit_length = None
    hex_digits = None
    seen: set[str] = set()
    ids: list[str] = []
    rows: list[tuple[int, ...]] = []
    n_words = 0
    target_digits = 0

    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.rstrip("\r\n")
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if body.startswith("bits="):
                    if bit_length is not None:
                        raise PanelFormatError(f"line {lineno}: duplicate #bits header")
                    try:
                        bit_length = int(body[5:])
                    except ValueError:
                        raise PanelFormatError(f"line {lineno}: bad header {line!r}") from None
                    if bit_length <= 0:
                        raise PanelFormatError(f"line {lineno}: bit length must be positive")
                    n_words = words_per_profile(bit_length, word_width)
                    target_digits = n_words * digits_per_word
                continue
            if bit_length is None:
                raise PanelFormatError(f"line {lineno}: profile before the #bits=<L> header")
            fields = line.split("\t")
            if len(fields) != 2:
                raise PanelFormatError(f"line {lineno}: expected '<id><TAB><hex>'")
            ident, hexstr = fields
            _validate_id(ident, lineno)
            if ident in seen:
                raise PanelFormatError(f"line {lineno}: duplicate id {ident!r}")
            seen.add(ident)
            bad = set(hexstr) - _HEX_DIGITS
            if bad:
                raise PanelFormatError(
                    f"line {lineno}: invalid hex characters {sorted(bad)} in {ident!r}"
                )
            if hex_digits is None:
                hex_digits = len(hexstr)
                if 4 * hex_digits < bit_length:
                    raise PanelFormatError(
                        f"line {lineno}: {4 * hex_digits} bits of hex cannot hold "
                        f"{bit_length} panel bits"
                    )
            elif len(hexstr) != hex_digits:
                raise PanelFormatError(
                    f"line {lineno}: hex length {len(hexstr)} differs from "
                    f"{hex_digits} on earlier lines"
                )
            if len(hexstr) > target_digits:
                surplus = hexstr[target_digits:]
                if surplus.strip("0"):
                    raise CorruptProfileError(
                        f"line {lineno}: nonzero padding past bit {bit_length} in {ident!r}"
                    )
                hexstr = hexstr[:target_digits]
            elif len(hexstr) < target_digits:
                hexstr = hexstr + "0" * (target_digits - len(hexstr))
            words = tuple(
                int(hexstr[i : i + digits_per_word], 16)
                for i in range(0, target_digits, digits_per_word)
            )
            tail = bit_length % word_width
            if tail and words[-1] & ((1 << (word_width - tail)) - 1):
                raise CorruptProfileError(
                    f"line {lineno}: nonzero padding past bit {bit_length} in {ident!r}"
                )
            ids.append(ident)
            rows.append(words)

    if bit_length is None:
        raise PanelFormatError(f"{path}: missing #bits=<L> header")
    words_arr = np.array(rows, dtype=dtype) if rows else np.zeros((0, n_words), dtype=dtype)
    return Panel(tuple(ids), words_arr, bit_length)


def save_panel(panel: Panel, path) -> None:
    """Write a panel in the text format load_panel reads, uppercase hex."""
    digits = panel.word_width // 4
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"#bits={panel.bit_length}\n")
        for ident, row in zip(panel.ids, panel.words):
            _validate_id(ident, 0)
            fh.write(ident)
            fh.write("\t")
            fh.write("".join(f"{int(w):0{digits}X}" for w in row))
            fh.write("\n")


@dataclass(frozen=True)
class ScoreOutput:
    """Destination and format for a score matrix."""

    path: "str | os.PathLike"
    format: str = "csv"
    include_ids: bool = True

    def __post_init__(self):
        if self.format not in ("csv", "binary"):
            raise ValueError(f"format must be 'csv' or 'binary', got {self.format!r}")


def _csv_data_rows(ref_ids, scores, include_ids):
    for i in range(scores.shape[0]):
        cells = ",".join(str(int(v)) for v in scores[i])
        yield (f"{ref_ids[i]},{cells}\n") if include_ids else (cells + "\n")


def write_scores(matrix: ScoreMatrix, out: ScoreOutput) -> None:
    """Write a whole score matrix in the requested format."""
    if out.format == "csv":
        with open(out.path, "w", encoding="utf-8", newline="\n") as fh:
            if out.include_ids:
                fh.write("ref_id," + ",".join(matrix.query_ids) + "\n")
            fh.writelines(_csv_data_rows(matrix.ref_ids, matrix.scores, out.include_ids))
        return
    with open(out.path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, *matrix.shape))
        fh.write(np.ascontiguousarray(matrix.scores, dtype="<u4").tobytes())


def read_scores_csv(path, include_ids: bool = True) -> ScoreMatrix:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [line.rstrip("\n") for line in fh if line.strip()]
    if include_ids:
        if not lines:
            raise PanelFormatError(f"{path}: empty score CSV")
        header = lines[0].split(",")
        if header[:1] != ["ref_id"]:
            raise PanelFormatError(f"{path}: expected 'ref_id' header cell")
        query_ids = tuple(header[1:])
        ref_ids = []
        data = []
        for line in lines[1:]:
            cells = line.split(",")
            ref_ids.append(cells[0])
            data.append([int(v) for v in cells[1:]])
        scores = np.array(data, dtype=np.uint32) if data else np.zeros((0, len(query_ids)), np.uint32)
        return ScoreMatrix(tuple(ref_ids), query_ids, scores)
    data = [[int(v) for v in line.split(",")] for line in lines]
    scores = np.array(data, dtype=np.uint32)
    return ScoreMatrix(
        tuple(f"r{i}" for i in range(scores.shape[0])),
        tuple(f"q{j}" for j in range(scores.shape[1])),
        scores,
    )


def read_scores_binary(path) -> ScoreMatrix:
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) != _HEADER.size:
            raise PanelFormatError(f"{path}: truncated score header")
        magic, version, n_refs, n_queries = _HEADER.unpack(head)
        if magic != MAGIC:
            raise PanelFormatError(f"{path}: bad magic {magic!r}")
        if version != FORMAT_VERSION:
            raise PanelFormatError(f"{path}: unsupported version {version}")
        payload = fh.read()
    expected = n_refs * n_queries * 4
    if len(payload) != expected:
        raise PanelFormatError(f"{path}: expected {expected} score bytes, got {len(payload)}")
    scores = np.frombuffer(payload, dtype="<u4").reshape(n_refs, n_queries)
    return ScoreMatrix(
        tuple(f"r{i}" for i in range(n_refs)),
        tuple(f"q{j}" for j in range(n_queries)),
        scores.astype(np.uint32),
    )


class _FileSink:
    """Streaming score writer; removes the partial file if the job aborts."""

    def __init__(self, path):
        self.path = path
        self._fh = None

    def __enter__(self):
        self._open()
        return self

    def __exit__(self, exc_type, exc, tb):
        if self._fh is not None:
            self._fh.close()
            self._fh = None
        if exc_type is not None and os.path.exists(self.path):
            os.unlink(self.path)
        return False


class BinaryScoreSink(_FileSink):
    def __init__(self, path, n_refs: int, n_queries: int):
        super().__init__(path)
        self.n_refs = n_refs
        self.n_queries = n_queries

    def _open(self):
        self._fh = open(self.path, "wb")
        self._fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, self.n_refs, self.n_queries))

    def put(self, start_row: int, chunk: np.ndarray) -> None:
        self._fh.write(np.ascontiguousarray(chunk, dtype="<u4").tobytes())


class CsvScoreSink(_FileSink):
    def __init__(self, path, ref_ids, query_ids, include_ids: bool = True):
        super().__init__(path)
        self.ref_ids = tuple(ref_ids)
        self.query_ids = tuple(query_ids)
        self.include_ids = include_ids

    def _open(self):
        self._fh = open(self.path, "w", encoding="utf-8", newline="\n")
        if self.include_ids:
            self._fh.write("ref_id," + ",".join(self.query_ids) + "\n")

    def put(self, start_row: int, chunk: np.ndarray) -> None:
        ids = self.ref_ids[start_row : start_row + chunk.shape[0]]
        self._fh.writelines(_csv_data_rows(ids, chunk, self.include_ids))


def open_score_sink(out: ScoreOutput, ref_ids, query_ids):
    """Streaming sink for the requested output format."""
    if out.format == "binary":
        return BinaryScoreSink(out.path, len(ref_ids), len(query_ids))
    return CsvScoreSink(out.path, ref_ids, query_ids, out.include_ids)


def write_ledger(ledger: TimingLedger, path) -> None:
    """Per-batch phase timings as CSV, durations in milliseconds."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(LEDGER_COLUMNS) + "\n")
        for b in ledger.batches:
            fh.write(
                f"{b.index},{b.rows},{b.stage_in_s * 1e3:.3f},"
                f"{b.compute_s * 1e3:.3f},{b.stage_out_s * 1e3:.3f}\n"
            )
