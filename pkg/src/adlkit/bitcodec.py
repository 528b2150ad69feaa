"""Self-delimiting bit codes with bracket framing and exact length accounting.

Logical messages are sequences over the four-symbol alphabet
``{0, 1, open, close}``.  Every symbol occupies exactly two physical bits
(``00``, ``01``, ``10``, ``11``), so a frame holding ``s`` payload symbols
costs ``2*(s + 2)`` physical bits: the payload plus one ``open`` and one
``close`` bracket.  Nested frames are allowed; their brackets count as
symbols of the enclosing stream.

Integer codes:

* ``encode_gamma(n)`` — Elias gamma of ``n + 1`` so that ``n = 0`` is
  representable; the code for ``n`` has ``2*floor(log2(n+1)) + 1`` symbols.
* ``encode_fixed(n, width)`` — big-endian fixed-width binary.
* ``encode_signed(n)`` — one sign symbol (0 for non-negative) followed by
  the gamma code of ``|n|``.

Serialization packs the two-bit symbols big-endian into bytes (first symbol
in the high bits of the first byte), zero-pads the final byte, and carries
an explicit bit length so the padding is unambiguous.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import DecodeError

SYM_ZERO = 0
SYM_ONE = 1
SYM_OPEN = 2
SYM_CLOSE = 3

_SYMBOL_NAMES = {SYM_ZERO: "0", SYM_ONE: "1", SYM_OPEN: "open", SYM_CLOSE: "close"}


class BitString:
    """Immutable sequence of payload symbols (0/1 only, no brackets)."""

    __slots__ = ("_data",)

    def __init__(self, data: bytes | bytearray | list[int] | tuple[int, ...] = b""):
        b = bytes(data)
        if any(c not in (0, 1) for c in b):
            raise ValueError("BitString accepts only 0/1 symbols")
        self._data = b

    @property
    def symbols(self) -> bytes:
        return self._data

    def __len__(self) -> int:
        return len(self._data)

    def __iter__(self):
        return iter(self._data)

    def __eq__(self, other) -> bool:
        return isinstance(other, BitString) and self._data == other._data

    def __hash__(self) -> int:
        return hash(self._data)

    def __add__(self, other: "BitString") -> "BitString":
        return BitString(self._data + other._data)

    def __repr__(self) -> str:
        shown = "".join(str(c) for c in self._data[:64])
        tail = "..." if len(self._data) > 64 else ""
        return f"BitString({shown}{tail}, len={len(self._data)})"


class BitWriter:
    """Accumulates payload symbols; cheap append, converts to BitString once."""

    __slots__ = ("_buf",)

    def __init__(self):
        self._buf = bytearray()

    def bit(self, value: int) -> "BitWriter":
        if value not in (0, 1):
            raise ValueError(f"not a payload symbol: {value}")
        self._buf.append(value)
        return self

    def extend(self, bits: BitString | bytes) -> "BitWriter":
        data = bits.symbols if isinstance(bits, BitString) else bytes(bits)
        self._buf.extend(data)
        return self

    def done(self) -> BitString:
        return BitString(self._buf)


@dataclass(frozen=True)
class FramedMessage:
    """A full symbol stream (payload plus brackets), validated to be balanced."""

    symbols: bytes

    def __post_init__(self):
        depth = 0
        for pos, s in enumerate(self.symbols):
            if s == SYM_OPEN:
                depth += 1
            elif s == SYM_CLOSE:
                depth -= 1
                if depth < 0:
                    raise DecodeError("unbalanced close bracket", pos)
            elif s not in (SYM_ZERO, SYM_ONE):
                raise ValueError(f"invalid symbol value {s}")
        if depth != 0:
            raise DecodeError("unclosed frame", len(self.symbols))

    def __len__(self) -> int:
        """Number of symbols, brackets included."""
        return len(self.symbols)

    @property
    def physical_bits(self) -> int:
        return 2 * len(self.symbols)

    def to_hex(self) -> dict:
        """Pack symbols big-endian, two physical bits each, into hex."""
        nbits = self.physical_bits
        out = bytearray((nbits + 7) // 8)
        for i, s in enumerate(self.symbols):
            bitpos = 2 * i
            out[bitpos // 8] |= s << (6 - bitpos % 8)
        return {"hex": out.hex(), "bits": nbits}

    @staticmethod
    def from_hex(blob: dict) -> "FramedMessage":
        nbits = int(blob["bits"])
        if nbits % 2 != 0:
            raise DecodeError("physical bit length must be even", nbits // 2)
        raw = bytes.fromhex(blob["hex"])
        if len(raw) != (nbits + 7) // 8:
            raise DecodeError("hex payload does not match declared bit length", 0)
        syms = bytearray()
        for i in range(nbits // 2):
            bitpos = 2 * i
            syms.append((raw[bitpos // 8] >> (6 - bitpos % 8)) & 0b11)
        return FramedMessage(bytes(syms))


def frame(children: list[BitString | FramedMessage] | BitString | FramedMessage) -> FramedMessage:
    """Wrap payload (and/or already-framed sub-messages) in one bracket pair."""
    if isinstance(children, (BitString, FramedMessage)):
        children = [children]
    buf = bytearray([SYM_OPEN])
    for child in children:
        buf.extend(child.symbols)
    buf.append(SYM_CLOSE)
    return FramedMessage(bytes(buf))


def gamma_length(n: int) -> int:
    """Symbol count of ``encode_gamma(n)``: 2*floor(log2(n+1)) + 1."""
    if n < 0:
        raise ValueError("gamma codes non-negative integers only")
    return 2 * ((n + 1).bit_length() - 1) + 1


def encode_gamma(n: int) -> BitString:
    """Elias gamma code of ``n + 1`` (so 0 encodes as a single '1')."""
    if n < 0:
        raise ValueError("gamma codes non-negative integers only")
    v = n + 1
    width = v.bit_length()
    bits = bytearray([0] * (width - 1))
    for shift in range(width - 1, -1, -1):
        bits.append((v >> shift) & 1)
    return BitString(bits)


def encode_fixed(n: int, width: int) -> BitString:
    """Big-endian fixed-width code; ``width = 0`` encodes only ``n = 0``."""
    if width < 0:
        raise ValueError("width must be non-negative")
    if not (0 <= n < (1 << width) or (width == 0 and n == 0)):
        raise ValueError(f"{n} does not fit in {width} symbols")
    return BitString([(n >> shift) & 1 for shift in range(width - 1, -1, -1)])


def encode_signed(n: int) -> BitString:
    """Sign symbol (0 = non-negative) followed by gamma of the magnitude."""
    w = BitWriter()
    w.bit(0 if n >= 0 else 1)
    w.extend(encode_gamma(abs(n)))
    return w.done()


def signed_length(n: int) -> int:
    return 1 + gamma_length(abs(n))


class SymbolReader:
    """Sequential reader over a symbol stream with offset-carrying errors."""

    __slots__ = ("_syms", "pos")

    def __init__(self, source: FramedMessage | BitString | bytes):
        if isinstance(source, FramedMessage):
            self._syms = source.symbols
        elif isinstance(source, BitString):
            self._syms = source.symbols
        else:
            self._syms = bytes(source)
        self.pos = 0

    def _next(self) -> int:
        if self.pos >= len(self._syms):
            raise DecodeError("truncated stream", self.pos)
        s = self._syms[self.pos]
        self.pos += 1
        return s

    def peek(self) -> int | None:
        return self._syms[self.pos] if self.pos < len(self._syms) else None

    def exhausted(self) -> bool:
        return self.pos >= len(self._syms)

    def read_bit(self) -> int:
        s = self._next()
        if s not in (SYM_ZERO, SYM_ONE):
            raise DecodeError(
                f"expected payload symbol, found '{_SYMBOL_NAMES[s]}'", self.pos - 1
            )
        return s

    def read_fixed(self, width: int) -> int:
        value = 0
        for _ in range(width):
            value = (value << 1) | self.read_bit()
        return value

    def read_gamma(self) -> int:
        zeros = 0
        while True:
            b = self.read_bit()
            if b == 1:
                break
            zeros += 1
        value = 1
        for _ in range(zeros):
            value = (value << 1) | self.read_bit()
        return value - 1

    def read_signed(self) -> int:
        negative = self.read_bit() == 1
        mag = self.read_gamma()
        return -mag if negative else mag

    def expect_open(self) -> None:
        s = self._next()
        if s != SYM_OPEN:
            raise DecodeError(
                f"expected open bracket, found '{_SYMBOL_NAMES[s]}'", self.pos - 1
            )

    def expect_close(self) -> None:
        s = self._next()
        if s != SYM_CLOSE:
            raise DecodeError(
                f"expected close bracket, found '{_SYMBOL_NAMES[s]}'", self.pos - 1
            )

    def expect_end(self) -> None:
        if not self.exhausted():
            raise DecodeError("trailing symbols after message", self.pos)


def decode_gamma(bits: BitString) -> int:
    r = SymbolReader(bits)
    n = r.read_gamma()
    r.expect_end()
    return n


def decode_fixed(bits: BitString, width: int) -> int:
    r = SymbolReader(bits)
    n = r.read_fixed(width)
    r.expect_end()
    return n


def decode_signed(bits: BitString) -> int:
    r = SymbolReader(bits)
    n = r.read_signed()
    r.expect_end()
    return n
