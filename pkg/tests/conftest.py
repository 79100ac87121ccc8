"""Shared test oracles: per-bit reimplementations independent of the package's fast paths."""

import re

import numpy as np
import pytest

from fastid.kernel import Panel

ACCEPTANCE_TITLES = {
    1: "worked hex example fidelity (06001440)",
    2: "oracle equivalence sweep (blocked == naive)",
    3: "algebraic identity (xor-and form == and-not form)",
    4: "invariant suite (self-zero, zero-query, bound, monotone)",
    5: "batch composition byte-identity under budget",
    6: "linear compute scaling in reference count",
    7: "blocked kernel speedup over naive",
    8: "format golden files (csv + binary)",
}

_acceptance_outcomes: dict[int, list[str]] = {}


def pytest_runtest_logreport(report):
    if report.when != "call":
        return
    match = re.search(r"test_acceptance\.py::.*criterion_0*(\d+)", report.nodeid)
    if match:
        _acceptance_outcomes.setdefault(int(match.group(1)), []).append(report.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_outcomes:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for number in sorted(_acceptance_outcomes):
        outcomes = _acceptance_outcomes[number]
        status = "PASS" if all(o == "passed" for o in outcomes) else "FAIL"
        title = ACCEPTANCE_TITLES.get(number, "")
        terminalreporter.write_line(f"criterion {number}: {status} - {title}")


def bitloop_popcount(w: int) -> int:
    """Count set bits by testing every position of the Python int."""
    return sum((w >> i) & 1 for i in range(max(w.bit_length(), 1)))


def bitloop_score_word(r: int, q: int, width: int) -> int:
    """Per-bit score: positions where r has a 1 and q does not."""
    return sum(((r >> i) & 1) & (((q >> i) & 1) ^ 1) for i in range(width))


def bitloop_score_rows(r_words, q_words, width: int) -> int:
    return sum(bitloop_score_word(int(r), int(q), width) for r, q in zip(r_words, q_words))


def compare_bitloop(refs: Panel, queries: Panel) -> np.ndarray:
    """Per-bit, pure-Python panel comparison for small panels."""
    width = refs.word_width
    out = np.zeros((refs.n_profiles, queries.n_profiles), dtype=np.uint32)
    for i in range(refs.n_profiles):
        for j in range(queries.n_profiles):
            out[i, j] = bitloop_score_rows(refs.words[i], queries.words[j], width)
    return out


def naive_pack_words(bits, word_width: int) -> list[int]:
    """Shift-or packer: bit i lands in word i // B at position B - 1 - (i % B)."""
    n_words = -(-len(bits) // word_width)
    words = [0] * n_words
    for i, b in enumerate(bits):
        if b:
            words[i // word_width] |= 1 << (word_width - 1 - (i % word_width))
    return words


def rand_panel(rng, n_rows, n_words, word_width=64, bit_length=None, prefix="p"):
    """Random panel with valid zero padding."""
    bit_length = bit_length or n_words * word_width
    dtype = np.uint32 if word_width == 32 else np.uint64
    words = rng.integers(0, 2**word_width, size=(n_rows, n_words), dtype=dtype)
    tail = bit_length % word_width
    if tail and n_words:
        words[:, -1] &= dtype((2**word_width - 1) ^ ((1 << (word_width - tail)) - 1))
    ids = tuple(f"{prefix}{i}" for i in range(n_rows))
    return Panel(ids, words, bit_length)


@pytest.fixture
def rng():
    return np.random.default_rng(20260809)
