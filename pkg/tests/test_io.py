import numpy as np
import pytest

from fastid.errors import CorruptProfileError, PanelFormatError, PipelineAbortError
from fastid.io import (
    BinaryScoreSink,
    CsvScoreSink,
    LEDGER_COLUMNS,
    ScoreOutput,
    load_panel,
    open_score_sink,
    read_scores_binary,
    read_scores_csv,
    save_panel,
    write_ledger,
    write_scores,
)
from fastid.kernel import Panel, ScoreMatrix
from fastid.scheduler import BatchTiming, TimingLedger

from conftest import rand_panel

WORKED_EXAMPLE = "#bits=32\nS1\t06001440\n"


def write_text(path, text):
    path.write_text(text, encoding="utf-8")
    return path


class TestLoadPanel:
    def test_worked_example_file(self, tmp_path):
        panel = load_panel(write_text(tmp_path / "p.panel", WORKED_EXAMPLE), 32)
        assert panel.n_profiles == 1
        assert panel.bit_length == 32
        assert panel.ids == ("S1",)
        assert int(panel.words[0, 0]) == 100668480

    def test_empty_body_with_header(self, tmp_path):
        panel = load_panel(write_text(tmp_path / "p.panel", "#bits=64\n"), 64)
        assert panel.n_profiles == 0
        assert panel.bit_length == 64

    def test_ids_in_file_order(self, tmp_path):
        text = "#bits=8\nba\t00\nc\tFF\nab\t0F\n"
        panel = load_panel(write_text(tmp_path / "p.panel", text), 32)
        assert panel.ids == ("ba", "c", "ab")

    def test_comments_ignored(self, tmp_path):
        text = "# comment\n#bits=8\n# another\nx\tA5\n"
        panel = load_panel(write_text(tmp_path / "p.panel", text), 32)
        assert panel.ids == ("x",)

    def test_missing_header(self, tmp_path):
        with pytest.raises(PanelFormatError, match="header"):
            load_panel(write_text(tmp_path / "p.panel", "S1\t06001440\n"), 32)

    def test_profile_before_header(self, tmp_path):
        with pytest.raises(PanelFormatError, match="before"):
            load_panel(write_text(tmp_path / "p.panel", "S1\t00\n#bits=8\n"), 32)

    def test_duplicate_id(self, tmp_path):
        text = "#bits=8\na\t00\na\tFF\n"
        with pytest.raises(PanelFormatError, match="duplicate id"):
            load_panel(write_text(tmp_path / "p.panel", text), 32)

    def test_length_mismatch_names_line(self, tmp_path):
        text = "#bits=8\na\t00\nb\t0000\n"
        with pytest.raises(PanelFormatError, match="line 3"):
            load_panel(write_text(tmp_path / "p.panel", text), 32)

    def test_nonzero_padding_in_last_word(self, tmp_path):
        # L=4, so the low nibble of the hex byte is padding and must be zero
        text = "#bits=4\na\t01\n"
        with pytest.raises(CorruptProfileError, match="line 2"):
            load_panel(write_text(tmp_path / "p.panel", text), 32)

    def test_nonzero_padding_beyond_word_capacity(self, tmp_path):
        # 16 hex digits hold 64 bits; at B=32 and L=32 the last 8 must be zero
        text = "#bits=32\na\t0600144000000001\n"
        with pytest.raises(CorruptProfileError, match="line 2"):
            load_panel(write_text(tmp_path / "p.panel", text), 32)

    def test_id_with_comma_rejected(self, tmp_path):
        text = "#bits=8\na,b\t00\n"
        with pytest.raises(PanelFormatError, match="separator"):
            load_panel(write_text(tmp_path / "p.panel", text), 32)

    def test_bad_hex_characters(self, tmp_path):
        text = "#bits=8\na\tZZ\n"
        with pytest.raises(PanelFormatError, match="hex"):
            load_panel(write_text(tmp_path / "p.panel", text), 32)

    def test_hex_too_short_for_bits(self, tmp_path):
        text = "#bits=64\na\t00\n"
        with pytest.raises(PanelFormatError, match="cannot hold"):
            load_panel(write_text(tmp_path / "p.panel", text), 32)

    def test_width_agnostic_loading(self, tmp_path):
        # a file written with 32-bit words loads identically under 64-bit words
        path = write_text(tmp_path / "p.panel", "#bits=40\na\t06001440FF000000\n")
        at32 = load_panel(path, 32)
        at64 = load_panel(path, 64)
        assert at32.words.shape == (1, 2)
        assert at64.words.shape == (1, 1)
        assert int(at64.words[0, 0]) == (int(at32.words[0, 0]) << 32) | int(at32.words[0, 1])

    def test_short_hex_zero_extended(self, tmp_path):
        # 8 hex digits = 32 bits loaded into one 64-bit word, high-aligned
        path = write_text(tmp_path / "p.panel", "#bits=32\na\t06001440\n")
        panel = load_panel(path, 64)
        assert int(panel.words[0, 0]) == 0x06001440 << 32


class TestSavePanel:
    @pytest.mark.parametrize("width", [32, 64])
    def test_round_trip(self, rng, tmp_path, width):
        panel = rand_panel(rng, 7, 3, width, bit_length=3 * width - 5, prefix="s")
        path = tmp_path / "p.panel"
        save_panel(panel, path)
        back = load_panel(path, width)
        assert back.ids == panel.ids
        assert back.bit_length == panel.bit_length
        assert np.array_equal(back.words, panel.words)

    def test_deterministic_bytes(self, rng, tmp_path):
        panel = rand_panel(rng, 4, 2, prefix="d")
        save_panel(panel, tmp_path / "a.panel")
        save_panel(panel, tmp_path / "b.panel")
        assert (tmp_path / "a.panel").read_bytes() == (tmp_path / "b.panel").read_bytes()

    def test_cross_width_round_trip(self, rng, tmp_path):
        panel64 = rand_panel(rng, 5, 2, 64, bit_length=100, prefix="x")
        path = tmp_path / "p.panel"
        save_panel(panel64, path)
        panel32 = load_panel(path, 32)
        save_panel(panel32, tmp_path / "q.panel")
        again = load_panel(tmp_path / "q.panel", 64)
        assert np.array_equal(again.words, panel64.words)


def _matrix(rng, n, m):
    scores = rng.integers(0, 2**20, size=(n, m), dtype=np.uint32)
    return ScoreMatrix(
        tuple(f"r{i}" for i in range(n)), tuple(f"q{j}" for j in range(m)), scores
    )


class TestScoreFormats:
    def test_csv_one_by_one_zero(self, tmp_path):
        matrix = ScoreMatrix(("r0",), ("q0",), np.zeros((1, 1), dtype=np.uint32))
        path = tmp_path / "s.csv"
        write_scores(matrix, ScoreOutput(path, "csv"))
        assert path.read_text() == "ref_id,q0\nr0,0\n"

    def test_csv_round_trip(self, rng, tmp_path):
        matrix = _matrix(rng, 5, 3)
        path = tmp_path / "s.csv"
        write_scores(matrix, ScoreOutput(path, "csv"))
        back = read_scores_csv(path)
        assert back.ref_ids == matrix.ref_ids
        assert back.query_ids == matrix.query_ids
        assert np.array_equal(back.scores, matrix.scores)

    def test_csv_without_ids(self, rng, tmp_path):
        matrix = _matrix(rng, 2, 2)
        path = tmp_path / "s.csv"
        write_scores(matrix, ScoreOutput(path, "csv", include_ids=False))
        text = path.read_text()
        assert "ref_id" not in text
        back = read_scores_csv(path, include_ids=False)
        assert np.array_equal(back.scores, matrix.scores)

    def test_binary_round_trip(self, rng, tmp_path):
        for n, m in [(1, 1), (2, 3), (7, 5)]:
            matrix = _matrix(rng, n, m)
            path = tmp_path / f"s{n}x{m}.bin"
            write_scores(matrix, ScoreOutput(path, "binary"))
            back = read_scores_binary(path)
            assert np.array_equal(back.scores, matrix.scores)

    def test_binary_cell_order_row_major(self, tmp_path):
        scores = np.arange(6, dtype=np.uint32).reshape(2, 3)
        matrix = ScoreMatrix(("a", "b"), ("x", "y", "z"), scores)
        path = tmp_path / "s.bin"
        write_scores(matrix, ScoreOutput(path, "binary"))
        raw = path.read_bytes()
        assert raw[:4] == b"FIDM"
        assert raw[4] == 1
        assert int.from_bytes(raw[5:13], "little") == 2
        assert int.from_bytes(raw[13:21], "little") == 3
        cells = [int.from_bytes(raw[21 + 4 * i : 25 + 4 * i], "little") for i in range(6)]
        assert cells == [0, 1, 2, 3, 4, 5]

    def test_writers_deterministic(self, rng, tmp_path):
        matrix = _matrix(rng, 3, 4)
        for fmt in ("csv", "binary"):
            a, b = tmp_path / f"a.{fmt}", tmp_path / f"b.{fmt}"
            write_scores(matrix, ScoreOutput(a, fmt))
            write_scores(matrix, ScoreOutput(b, fmt))
            assert a.read_bytes() == b.read_bytes()

    def test_bad_format_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            ScoreOutput(tmp_path / "x", "json")

    def test_binary_reader_validates(self, tmp_path):
        path = tmp_path / "s.bin"
        path.write_bytes(b"NOPE" + bytes(17))
        with pytest.raises(PanelFormatError, match="magic"):
            read_scores_binary(path)
        path.write_bytes(b"FIDM\x09" + (0).to_bytes(8, "little") * 2)
        with pytest.raises(PanelFormatError, match="version"):
            read_scores_binary(path)
        path.write_bytes(b"FIDM\x01" + (2).to_bytes(8, "little") * 2 + bytes(4))
        with pytest.raises(PanelFormatError, match="bytes"):
            read_scores_binary(path)


class TestStreamingSinks:
    def test_binary_sink_matches_whole_write(self, rng, tmp_path):
        matrix = _matrix(rng, 6, 4)
        whole = tmp_path / "whole.bin"
        write_scores(matrix, ScoreOutput(whole, "binary"))
        chunked = tmp_path / "chunked.bin"
        with BinaryScoreSink(chunked, 6, 4) as sink:
            sink.put(0, matrix.scores[:2])
            sink.put(2, matrix.scores[2:5])
            sink.put(5, matrix.scores[5:])
        assert whole.read_bytes() == chunked.read_bytes()

    def test_csv_sink_matches_whole_write(self, rng, tmp_path):
        matrix = _matrix(rng, 5, 2)
        whole = tmp_path / "whole.csv"
        write_scores(matrix, ScoreOutput(whole, "csv"))
        chunked = tmp_path / "chunked.csv"
        with CsvScoreSink(chunked, matrix.ref_ids, matrix.query_ids) as sink:
            sink.put(0, matrix.scores[:3])
            sink.put(3, matrix.scores[3:])
        assert whole.read_bytes() == chunked.read_bytes()

    def test_open_score_sink_dispatch(self, rng, tmp_path):
        matrix = _matrix(rng, 2, 2)
        for fmt, reader in (("csv", read_scores_csv), ("binary", read_scores_binary)):
            path = tmp_path / f"s.{fmt}"
            with open_score_sink(ScoreOutput(path, fmt), matrix.ref_ids, matrix.query_ids) as s:
                s.put(0, matrix.scores)
            assert np.array_equal(reader(path).scores, matrix.scores)

    def test_partial_file_removed_on_abort(self, rng, tmp_path):
        matrix = _matrix(rng, 4, 2)
        path = tmp_path / "partial.bin"
        with pytest.raises(PipelineAbortError):
            with BinaryScoreSink(path, 4, 2) as sink:
                sink.put(0, matrix.scores[:2])
                raise PipelineAbortError("source died", completed_batches=1)
        assert not path.exists()


class TestLedgerCsv:
    def test_schema_and_values(self, tmp_path):
        ledger = TimingLedger(
            batches=[
                BatchTiming(0, 32, 0.001, 0.25, 0.0005),
                BatchTiming(1, 32, 0.002, 0.26, 0.0007),
            ]
        )
        path = tmp_path / "ledger.csv"
        write_ledger(ledger, path)
        lines = path.read_text().splitlines()
        assert lines[0] == ",".join(LEDGER_COLUMNS)
        assert lines[1] == "0,32,1.000,250.000,0.500"
        assert lines[2] == "1,32,2.000,260.000,0.700"
