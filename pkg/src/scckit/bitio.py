"""Bit-level serialization: MSB-first bit reader/writer, exp-Golomb codes
and the SCCF container (header + length-prefixed frame payloads)."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import IntFlag
from typing import BinaryIO, Iterator


class BitstreamError(ValueError):
    """Raised for any malformed or non-conformant bitstream."""


class ToolFlags(IntFlag):
    IBC = 1 << 0
    PLT = 1 << 1
    TSM = 1 << 2
    BDPCM = 1 << 3
    ISC = 1 << 4
    ACT = 1 << 5
    DBK = 1 << 6
    LOSSLESS = 1 << 7
    # picture-level switch: TSM usage inferred from level parity instead of a flag
    PARITY = 1 << 8

    @classmethod
    def parse(cls, text: str) -> "ToolFlags":
        """Parse a comma-separated list such as ``"ibc,plt,tsm"``."""
        flags = cls(0)
        for name in filter(None, (t.strip() for t in text.split(","))):
            try:
                flags |= cls[name.upper()]
            except KeyError:
                raise ValueError(f"unknown tool {name!r}") from None
        return flags

    def names(self) -> list[str]:
        return [f.name.lower() for f in ToolFlags if f in self]


def ue_bits(v: int) -> int:
    """Length in bits of the order-0 exp-Golomb code of ``v``."""
    return 2 * (v + 1).bit_length() - 1


def se_map(v: int) -> int:
    return 2 * v - 1 if v > 0 else -2 * v


def se_bits(v: int) -> int:
    return ue_bits(se_map(v))


class BitWriter:
    def __init__(self) -> None:
        self._buf = bytearray()
        self._acc = 0
        self._nacc = 0
        self.bits_written = 0

    def write_bits(self, value: int, n: int) -> None:
        if n == 0:
            return
        if value < 0 or value >> n:
            raise ValueError(f"value {value} does not fit in {n} bits")
        self._acc = (self._acc << n) | value
        self._nacc += n
        self.bits_written += n
        while self._nacc >= 8:
            self._nacc -= 8
            self._buf.append((self._acc >> self._nacc) & 0xFF)
        self._acc &= (1 << self._nacc) - 1

    def write_flag(self, b: bool | int) -> None:
        self.write_bits(1 if b else 0, 1)

    def write_ue(self, v: int) -> None:
        if v < 0:
            raise ValueError("ue(v) requires v >= 0")
        code = v + 1
        k = code.bit_length() - 1
        self.write_bits(0, k)
        self.write_bits(code, k + 1)

    def write_se(self, v: int) -> None:
        self.write_ue(se_map(v))

    def byte_align(self) -> None:
        if self._nacc:
            self.write_bits(0, 8 - self._nacc)

    def getvalue(self) -> bytes:
        """Return the buffer padded with zero bits to a byte boundary."""
        self.byte_align()
        return bytes(self._buf)


class BitCounter:
    """Writer stand-in that only accumulates code lengths (encoder rate estimation)."""

    def __init__(self) -> None:
        self.bits_written = 0

    def write_bits(self, value: int, n: int) -> None:
        self.bits_written += n

    def write_flag(self, b: bool | int) -> None:
        self.bits_written += 1

    def write_ue(self, v: int) -> None:
        self.bits_written += ue_bits(v)

    def write_se(self, v: int) -> None:
        self.bits_written += ue_bits(se_map(v))

    def add(self, n: int) -> None:
        self.bits_written += n


class BitReader:
    def __init__(self, data: bytes) -> None:
        self._data = data
        self._pos = 0  # bit position
        self._len = len(data) * 8

    @property
    def bits_read(self) -> int:
        return self._pos

    @property
    def bits_left(self) -> int:
        return self._len - self._pos

    def read_bits(self, n: int) -> int:
        if n == 0:
            return 0
        if self._pos + n > self._len:
            raise BitstreamError("stream exhausted")
        value = 0
        pos = self._pos
        data = self._data
        remaining = n
        while remaining:
            byte = data[pos >> 3]
            off = pos & 7
            take = min(8 - off, remaining)
            value = (value << take) | ((byte >> (8 - off - take)) & ((1 << take) - 1))
            pos += take
            remaining -= take
        self._pos = pos
        return value

    def read_flag(self) -> int:
        pos = self._pos
        if pos >= self._len:
            raise BitstreamError("stream exhausted")
        self._pos = pos + 1
        return (self._data[pos >> 3] >> (7 - (pos & 7))) & 1

    def read_ue(self) -> int:
        k = 0
        while not self.read_flag():
            k += 1
            if k > 32:
                raise BitstreamError("exp-Golomb prefix too long")
        return (1 << k) - 1 + self.read_bits(k)

    def read_se(self) -> int:
        c = self.read_ue()
        return (c + 1) >> 1 if c & 1 else -(c >> 1)

    def finish(self) -> None:
        """Consume zero padding up to the byte boundary and require end of payload."""
        pad = (-self._pos) % 8
        if pad and self.read_bits(pad) != 0:
            raise BitstreamError("non-zero padding bits")
        if self._pos != self._len:
            raise BitstreamError(f"{(self._len - self._pos) // 8} trailing bytes in payload")


CHROMA_400, CHROMA_420, CHROMA_444 = 0, 1, 3
COLOR_YCBCR, COLOR_RGB, COLOR_YCOCG = 0, 1, 2
MAGIC = b"SCCF"
VERSION = 1
_CTU_CODES = {64: 0, 128: 1}
_HEADER = struct.Struct("<4sBHHBBBHI")


@dataclass(frozen=True)
class BitstreamHeader:
    width: int
    height: int
    chroma_format: int = CHROMA_420
    color_space: int = COLOR_YCBCR
    ctu_size: int = 128
    qp: int = 27
    tool_flags: ToolFlags = ToolFlags(0)
    frame_count: int = 1
    version: int = VERSION

    def __post_init__(self) -> None:
        if ToolFlags.BDPCM in self.tool_flags and ToolFlags.TSM not in self.tool_flags:
            raise BitstreamError("BDPCM requires TSM")
        if ToolFlags.PARITY in self.tool_flags and ToolFlags.TSM not in self.tool_flags:
            raise BitstreamError("parity-inferred transform skip requires TSM")
        if ToolFlags.ISC in self.tool_flags and ToolFlags.IBC not in self.tool_flags:
            raise BitstreamError("ISC requires IBC")
        if ToolFlags.LOSSLESS in self.tool_flags and ToolFlags.DBK in self.tool_flags:
            raise BitstreamError("deblocking cannot be combined with lossless coding")
        if ToolFlags.ACT in self.tool_flags and (
            self.chroma_format != CHROMA_444 or self.color_space != COLOR_RGB
        ):
            raise BitstreamError("ACT requires RGB 4:4:4")
        if self.chroma_format not in (CHROMA_400, CHROMA_420, CHROMA_444):
            raise BitstreamError(f"bad chroma format {self.chroma_format}")
        if self.ctu_size not in _CTU_CODES:
            raise BitstreamError(f"unsupported CTU size {self.ctu_size}")
        if not 0 <= self.qp <= 51:
            raise BitstreamError(f"qp {self.qp} out of range")

    @property
    def lossless(self) -> bool:
        return ToolFlags.LOSSLESS in self.tool_flags

    def pack(self) -> bytes:
        return _HEADER.pack(
            MAGIC, self.version, self.width, self.height,
            self.chroma_format | (self.color_space << 4),
            _CTU_CODES[self.ctu_size], self.qp, int(self.tool_flags), self.frame_count,
        )

    @classmethod
    def unpack(cls, data: bytes) -> "BitstreamHeader":
        if len(data) < _HEADER.size:
            raise BitstreamError("truncated header")
        magic, version, w, h, cf, ctu, qp, flags, count = _HEADER.unpack_from(data)
        if magic != MAGIC:
            raise BitstreamError(f"bad magic {magic!r}")
        if version != VERSION:
            raise BitstreamError(f"unsupported version {version}")
        ctu_sizes = {v: k for k, v in _CTU_CODES.items()}
        if ctu not in ctu_sizes:
            raise BitstreamError(f"bad CTU size code {ctu}")
        if flags >> len(ToolFlags):
            raise BitstreamError(f"unknown tool flag bits 0x{flags:04x}")
        return cls(w, h, cf & 0x0F, cf >> 4, ctu_sizes[ctu], qp, ToolFlags(flags), count, version)


HEADER_SIZE = _HEADER.size


def write_container(out: BinaryIO, header: BitstreamHeader, payloads: list[bytes]) -> None:
    if len(payloads) != header.frame_count:
        raise ValueError("frame_count does not match number of payloads")
    out.write(header.pack())
    for p in payloads:
        out.write(struct.pack("<I", len(p)))
        out.write(p)


def container_bytes(header: BitstreamHeader, payloads: list[bytes]) -> bytes:
    parts = [header.pack()]
    for p in payloads:
        parts.append(struct.pack("<I", len(p)))
        parts.append(p)
    return b"".join(parts)


def read_container(data: bytes) -> tuple[BitstreamHeader, list[bytes]]:
    header = BitstreamHeader.unpack(data)
    return header, list(iter_payloads(data, header))


def iter_payloads(data: bytes, header: BitstreamHeader) -> Iterator[bytes]:
    pos = HEADER_SIZE
    for i in range(header.frame_count):
        if pos + 4 > len(data):
            raise BitstreamError(f"frame {i}: missing length prefix")
        (n,) = struct.unpack_from("<I", data, pos)
        pos += 4
        if pos + n > len(data):
            raise BitstreamError(f"frame {i}: truncated payload")
        yield data[pos:pos + n]
        pos += n
    if pos != len(data):
        raise BitstreamError("trailing data after last frame")
