"""Bitstrings, fixed-width fields and Elias-delta integers.

Bitstrings are plain ``str`` objects over ``"01"``; they are immutable,
hashable and compare lexicographically, which is all the search code needs.
"""

from __future__ import annotations


class ParseError(ValueError):
    def __init__(self, message, offset=None, field=None):
        self.offset = offset
        self.field = field
        where = []
        if field is not None:
            where.append(f"field {field}")
        if offset is not None:
            where.append(f"bit offset {offset}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


def check_bits(s: str) -> str:
    if any(c not in "01" for c in s):
        raise ValueError(f"not a bitstring: {s!r}")
    return s


def width(n: int) -> int:
    """Bits needed to write any integer in [0, n): ceil(log2 n), 0 for n <= 1."""
    return (n - 1).bit_length() if n > 1 else 0


def uint(value: int, nbits: int) -> str:
    if not 0 <= value < 1 << nbits:
        raise ValueError(f"{value} does not fit in {nbits} bits")
    return format(value, f"0{nbits}b") if nbits else ""


def elias_delta(n: int) -> str:
    if n < 1:
        raise ValueError("Elias-delta needs a positive integer")
    N = n.bit_length()
    L = N.bit_length() - 1
    return "0" * L + format(N, "b") + format(n, "b")[1:]


class BitReader:
    def __init__(self, bits: str, pos: int = 0):
        self.bits = bits
        self.pos = pos

    def remaining(self) -> int:
        return len(self.bits) - self.pos

    def read(self, nbits: int, field=None) -> int:
        if nbits == 0:
            return 0
        if self.pos + nbits > len(self.bits):
            raise ParseError("truncated stream", self.pos, field)
        chunk = self.bits[self.pos:self.pos + nbits]
        self.pos += nbits
        return int(chunk, 2)

    def read_delta(self, field=None) -> int:
        start = self.pos
        L = 0
        while True:
            if self.pos >= len(self.bits):
                raise ParseError("truncated Elias-delta code", start, field)
            if self.bits[self.pos] == "1":
                break
            L += 1
            self.pos += 1
            if L > 64:
                raise ParseError("Elias-delta length prefix too long", start, field)
        N = self.read(L + 1, field)
        if N - 1 > 1 << 16:
            raise ParseError("Elias-delta value too large", start, field)
        rest = self.read(N - 1, field)
        return (1 << (N - 1)) | rest


def decode_elias_delta(bits: str) -> int:
    """Decode a complete Elias-delta codeword; trailing bits are an error."""
    r = BitReader(bits)
    n = r.read_delta("elias_delta")
    if r.remaining():
        raise ParseError("trailing bits after Elias-delta code", r.pos, "elias_delta")
    return n


def pack_bits(bits: str) -> bytes:
    """MSB-first packing with a zero-padded tail."""
    pad = (-len(bits)) % 8
    padded = bits + "0" * pad
    return bytes(int(padded[i:i + 8], 2) for i in range(0, len(padded), 8))


def unpack_bits(data: bytes, nbits: int) -> str:
    s = "".join(format(b, "08b") for b in data)
    if nbits > len(s):
        raise ParseError("byte stream shorter than declared bit length", len(s))
    return s[:nbits]
