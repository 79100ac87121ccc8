"""Bit-exact conversion between genotype codes, bit vectors, packed words, and hex text.

Layout convention: bit i of a profile lives in word i // B at bit position
B - 1 - (i % B), so the bit string written left to right reads as the
big-endian binary of the word sequence. A 32-bit profile written as
``0000 0110 0000 0000 0001 0100 0100 0000`` is the single word 0x06001440.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import CodecError, CorruptProfileError

WORD_WIDTHS = (32, 64)
DEFAULT_WORD_WIDTH = 64

# Two bits per diploid genotype, one per allele slot, set iff the slot is minor.
GENOTYPE_BITS = {
    "MM": (0, 0),
    "Mm": (0, 1),
    "mM": (1, 0),
    "mm": (1, 1),
}

_HEX_DIGITS = frozenset("0123456789abcdefABCDEF")


def word_dtype(word_width: int) -> np.dtype:
    if word_width == 32:
        return np.dtype(np.uint32)
    if word_width == 64:
        return np.dtype(np.uint64)
    raise CodecError(f"unsupported word width {word_width}, expected one of {WORD_WIDTHS}")


def words_per_profile(bit_length: int, word_width: int) -> int:
    """Number of words needed to hold bit_length bits: ceil(L / B)."""
    return -(-bit_length // word_width)


@dataclass(frozen=True)
class ProfileBits:
    """One profile as an ordered sequence of 0/1 values plus an identifier."""

    id: str
    bits: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(self.bits, dtype=np.uint8)
        if arr.ndim != 1 or arr.size == 0:
            raise CodecError("profile bits must be a non-empty 1-D sequence")
        if arr.max(initial=0) > 1:
            raise CodecError("profile bits must contain only 0 and 1")
        arr.setflags(write=False)
        object.__setattr__(self, "bits", arr)

    @property
    def bit_length(self) -> int:
        return int(self.bits.size)

    def __len__(self) -> int:
        return self.bit_length

    def __eq__(self, other) -> bool:
        if not isinstance(other, ProfileBits):
            return NotImplemented
        return self.id == other.id and np.array_equal(self.bits, other.bits)


@dataclass(frozen=True)
class PackedProfile:
    """One profile as fixed-width unsigned words, zero-padded past the last bit."""

    id: str
    words: tuple[int, ...]
    word_width: int = DEFAULT_WORD_WIDTH

    def __post_init__(self):
        if self.word_width not in WORD_WIDTHS:
            raise CodecError(
                f"unsupported word width {self.word_width}, expected one of {WORD_WIDTHS}"
            )
        words = tuple(int(w) for w in self.words)
        limit = 1 << self.word_width
        for w in words:
            if not 0 <= w < limit:
                raise CodecError(f"word {w:#x} does not fit in {self.word_width} bits")
        object.__setattr__(self, "words", words)

    @property
    def n_words(self) -> int:
        return len(self.words)


def encode_genotype(genotypes: Sequence[str], profile_id: str = "") -> ProfileBits:
    """Encode diploid genotype codes (MM, Mm, mM, mm) into minor-allele bits.

    Each genotype contributes two consecutive bits, first allele slot first,
    with a bit set iff that slot carries the minor allele.
    """
    if len(genotypes) == 0:
        raise CodecError("genotype sequence is empty")
    bits = np.empty(2 * len(genotypes), dtype=np.uint8)
    for i, code in enumerate(genotypes):
        try:
            first, second = GENOTYPE_BITS[code]
        except (KeyError, TypeError):
            raise CodecError(f"unknown genotype code {code!r} at position {i}") from None
        bits[2 * i] = first
        bits[2 * i + 1] = second
    return ProfileBits(profile_id, bits)


def pack(bits: ProfileBits, word_width: int = DEFAULT_WORD_WIDTH) -> PackedProfile:
    """Pack a bit vector into words, first bit in the most significant position."""
    dtype = word_dtype(word_width)
    n_words = words_per_profile(bits.bit_length, word_width)
    padded = np.zeros(n_words * word_width, dtype=np.uint8)
    padded[: bits.bit_length] = bits.bits
    # packbits is MSB-first within each byte; big-endian word view keeps that
    # order across the whole word.
    words = np.packbits(padded).view(dtype.newbyteorder(">"))
    return PackedProfile(bits.id, tuple(int(w) for w in words), word_width)


def unpack(profile: PackedProfile, bit_length: int) -> ProfileBits:
    """Exact inverse of pack for the first bit_length bits.

    Raises CorruptProfileError if any padding bit at position >= bit_length
    is set.
    """
    capacity = profile.n_words * profile.word_width
    if not 0 < bit_length <= capacity:
        raise CodecError(
            f"bit length {bit_length} does not fit {profile.n_words} words of "
            f"{profile.word_width} bits"
        )
    dtype = word_dtype(profile.word_width)
    arr = np.array(profile.words, dtype=dtype).astype(dtype.newbyteorder(">"))
    all_bits = np.unpackbits(arr.view(np.uint8))
    if all_bits[bit_length:].any():
        raise CorruptProfileError(
            f"profile {profile.id!r} has nonzero padding past bit {bit_length}"
        )
    return ProfileBits(profile.id, all_bits[:bit_length])


def parse_hex_line(line: str, word_width: int = DEFAULT_WORD_WIDTH) -> PackedProfile:
    """Parse one `<id><TAB><hex>` line into a packed profile.

    The leftmost hex digit is the most significant nibble of word 0; each
    group of B/4 digits fills one word.
    """
    word_dtype(word_width)  # reject unsupported widths up front
    fields = line.rstrip("\r\n").split("\t")
    if len(fields) != 2 or not fields[0] or not fields[1]:
        raise CodecError(f"expected '<id><TAB><hex>', got {line!r}")
    ident, hexstr = fields
    bad = set(hexstr) - _HEX_DIGITS
    if bad:
        raise CodecError(f"malformed hex for {ident!r}: invalid characters {sorted(bad)}")
    digits_per_word = word_width // 4
    if len(hexstr) % digits_per_word != 0:
        raise CodecError(
            f"hex length {len(hexstr)} for {ident!r} is not a multiple of "
            f"{digits_per_word} ({word_width}-bit words)"
        )
    words = tuple(
        int(hexstr[i : i + digits_per_word], 16)
        for i in range(0, len(hexstr), digits_per_word)
    )
    return PackedProfile(ident, words, word_width)


def format_hex(profile: PackedProfile) -> str:
    """Uppercase hex of the word sequence, most significant nibble first."""
    digits = profile.word_width // 4
    return "".join(f"{w:0{digits}X}" for w in profile.words)


def format_hex_line(profile: PackedProfile) -> str:
    return f"{profile.id}\t{format_hex(profile)}"
