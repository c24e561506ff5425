"""Raw video/image I/O (YUV4MPEG2, binary PPM), frame containers and PSNR."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .bitio import CHROMA_400, CHROMA_420, CHROMA_444, COLOR_RGB, COLOR_YCBCR

# distinguished PSNR value for MSE == 0; never a finite number
LOSSLESS = math.inf


class MediaFormatError(ValueError):
    pass


@dataclass(frozen=True)
class PlaneBuffer:
    samples: np.ndarray
    bit_depth: int = 8

    def __post_init__(self) -> None:
        a = np.asarray(self.samples)
        if a.ndim != 2:
            raise ValueError("plane samples must be 2-D")
        if self.bit_depth != 8:
            raise ValueError("only 8-bit samples are supported")
        if a.size and (a.min() < 0 or a.max() > (1 << self.bit_depth) - 1):
            raise ValueError("sample out of range")
        a = np.array(a, dtype=np.uint8)
        a.setflags(write=False)
        object.__setattr__(self, "samples", a)

    @property
    def width(self) -> int:
        return self.samples.shape[1]

    @property
    def height(self) -> int:
        return self.samples.shape[0]


@dataclass(frozen=True)
class Frame:
    planes: tuple[PlaneBuffer, ...]
    chroma_format: int = CHROMA_420
    color_space: int = COLOR_YCBCR
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        n = 1 if self.chroma_format == CHROMA_400 else 3
        if len(self.planes) != n:
            raise ValueError(f"chroma format {self.chroma_format} needs {n} planes")
        if len({p.bit_depth for p in self.planes}) != 1:
            raise ValueError("planes must share bit depth")
        if n == 3:
            w, h = self.planes[0].width, self.planes[0].height
            cw, ch = chroma_dims(w, h, self.chroma_format)
            for p in self.planes[1:]:
                if (p.width, p.height) != (cw, ch):
                    raise ValueError("chroma plane dimensions inconsistent with format")

    @classmethod
    def from_arrays(cls, arrays: Sequence[np.ndarray], chroma_format: int = CHROMA_420,
                    color_space: int = COLOR_YCBCR) -> "Frame":
        return cls(tuple(PlaneBuffer(np.asarray(a)) for a in arrays), chroma_format, color_space)

    @property
    def width(self) -> int:
        return self.planes[0].width

    @property
    def height(self) -> int:
        return self.planes[0].height

    @property
    def bit_depth(self) -> int:
        return self.planes[0].bit_depth

    def arrays(self) -> list[np.ndarray]:
        return [p.samples for p in self.planes]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Frame):
            return NotImplemented
        return (
            self.chroma_format == other.chroma_format
            and self.color_space == other.color_space
            and len(self.planes) == len(other.planes)
            and all(np.array_equal(a.samples, b.samples) for a, b in zip(self.planes, other.planes))
        )

    __hash__ = None  # type: ignore[assignment]


def chroma_dims(width: int, height: int, chroma_format: int) -> tuple[int, int]:
    if chroma_format == CHROMA_420:
        return (width + 1) // 2, (height + 1) // 2
    return width, height


# ---------------------------------------------------------------- Y4M

_Y4M_MAGIC = b"YUV4MPEG2"
_Y4M_CS = {"420": CHROMA_420, "420jpeg": CHROMA_420, "420paldv": CHROMA_420,
           "420mpeg2": CHROMA_420, "444": CHROMA_444, "mono": CHROMA_400}
_Y4M_CS_OUT = {CHROMA_420: "420jpeg", CHROMA_444: "444", CHROMA_400: "mono"}


@dataclass
class Y4MHeader:
    width: int
    height: int
    chroma_format: int
    raw: bytes

    def frame_size(self) -> int:
        if self.chroma_format == CHROMA_400:
            return self.width * self.height
        cw, ch = chroma_dims(self.width, self.height, self.chroma_format)
        return self.width * self.height + 2 * cw * ch


def _parse_y4m_header(line: bytes) -> Y4MHeader:
    tokens = line.split(b" ")
    if tokens[0] != _Y4M_MAGIC:
        raise MediaFormatError("missing YUV4MPEG2 signature")
    width = height = None
    cf = CHROMA_420
    for tok in tokens[1:]:
        if not tok:
            continue
        tag, val = chr(tok[0]), tok[1:].decode("ascii", "replace")
        if tag == "W":
            width = int(val)
        elif tag == "H":
            height = int(val)
        elif tag == "C":
            if val not in _Y4M_CS:
                raise MediaFormatError(f"unsupported colorspace tag C{val}")
            cf = _Y4M_CS[val]
    if not width or not height:
        raise MediaFormatError("header lacks W/H")
    return Y4MHeader(width, height, cf, line)


def load_y4m(data: bytes) -> list[Frame]:
    """Parse a complete YUV4MPEG2 byte stream into frames."""
    end = data.find(b"\n")
    if end < 0:
        raise MediaFormatError("unterminated YUV4MPEG2 header")
    try:
        hdr = _parse_y4m_header(data[:end])
    except ValueError as exc:
        if isinstance(exc, MediaFormatError):
            raise
        raise MediaFormatError(f"malformed header: {exc}") from None
    pos = end + 1
    size = hdr.frame_size()
    frames = []
    while pos < len(data):
        nl = data.find(b"\n", pos)
        if nl < 0 or not data.startswith(b"FRAME", pos):
            raise MediaFormatError(f"bad frame marker at byte {pos}")
        marker = data[pos:nl]
        pos = nl + 1
        if pos + size > len(data):
            raise MediaFormatError(f"truncated frame payload ({len(data) - pos} of {size} bytes)")
        frame = _split_planes(data[pos:pos + size], hdr)
        frame.meta.update(y4m_header=hdr.raw, y4m_marker=marker)
        frames.append(frame)
        pos += size
    return frames


def _split_planes(buf: bytes, hdr: Y4MHeader) -> Frame:
    a = np.frombuffer(buf, dtype=np.uint8)
    w, h = hdr.width, hdr.height
    planes = [a[: w * h].reshape(h, w)]
    if hdr.chroma_format != CHROMA_400:
        cw, ch = chroma_dims(w, h, hdr.chroma_format)
        off = w * h
        for _ in range(2):
            planes.append(a[off: off + cw * ch].reshape(ch, cw))
            off += cw * ch
    return Frame.from_arrays(planes, hdr.chroma_format, COLOR_YCBCR)


def emit_y4m(frames: Iterable[Frame], header: bytes | None = None) -> bytes:
    """Serialize frames; reuses the source header line when one is attached."""
    frames = list(frames)
    if not frames:
        raise ValueError("no frames to write")
    f0 = frames[0]
    if f0.color_space == COLOR_RGB:
        raise ValueError("Y4M output requires YCbCr frames")
    if header is None:
        header = f0.meta.get("y4m_header")
    if header is None:
        header = (f"YUV4MPEG2 W{f0.width} H{f0.height} F30:1 Ip A1:1 "
                  f"C{_Y4M_CS_OUT[f0.chroma_format]}").encode()
    parts = [header, b"\n"]
    for f in frames:
        parts.append(f.meta.get("y4m_marker", b"FRAME") + b"\n")
        parts.extend(p.samples.tobytes() for p in f.planes)
    return b"".join(parts)


def read_y4m_file(path) -> list[Frame]:
    with open(path, "rb") as fh:
        return load_y4m(fh.read())


def write_y4m_file(path, frames: Iterable[Frame]) -> None:
    with open(path, "wb") as fh:
        fh.write(emit_y4m(frames))


# ---------------------------------------------------------------- PPM

_PPM_TOKEN = re.compile(rb"(?:\s|#[^\n]*\n)*(\S+)")


def load_ppm(data: bytes) -> Frame:
    """Binary P6 with maxval 255 -> RGB 4:4:4 frame (planes R, G, B)."""
    pos = 0
    fields = []
    for _ in range(4):
        m = _PPM_TOKEN.match(data, pos)
        if not m:
            raise MediaFormatError("truncated PPM header")
        fields.append(m.group(1))
        pos = m.end()
    if fields[0] != b"P6":
        raise MediaFormatError("only binary PPM (P6) is supported")
    w, h, maxval = (int(x) for x in fields[1:])
    if maxval != 255:
        raise MediaFormatError("only 8-bit PPM is supported")
    pos += 1  # single whitespace byte after maxval
    n = w * h * 3
    if len(data) - pos < n:
        raise MediaFormatError("truncated PPM payload")
    rgb = np.frombuffer(data[pos:pos + n], dtype=np.uint8).reshape(h, w, 3)
    return Frame.from_arrays([rgb[..., i] for i in range(3)], CHROMA_444, COLOR_RGB)


def emit_ppm(frame: Frame) -> bytes:
    if frame.chroma_format != CHROMA_444 or len(frame.planes) != 3:
        raise ValueError("PPM output needs a 3-plane 4:4:4 frame")
    rgb = np.stack(frame.arrays(), axis=-1)
    return f"P6\n{frame.width} {frame.height}\n255\n".encode() + rgb.tobytes()


def read_frames(path) -> list[Frame]:
    """Load ``.y4m`` or ``.ppm`` by extension."""
    with open(path, "rb") as fh:
        data = fh.read()
    if str(path).lower().endswith((".ppm", ".pnm")):
        return [load_ppm(data)]
    return load_y4m(data)


def write_frames(path, frames: Sequence[Frame]) -> None:
    if str(path).lower().endswith((".ppm", ".pnm")):
        if len(frames) != 1:
            raise ValueError("PPM holds a single frame")
        data = emit_ppm(frames[0])
    else:
        data = emit_y4m(frames)
    with open(path, "wb") as fh:
        fh.write(data)


# ---------------------------------------------------------------- metrics

def plane_psnr(ref: np.ndarray, rec: np.ndarray, bit_depth: int = 8) -> float:
    if ref.shape != rec.shape:
        raise ValueError(f"dimension mismatch {ref.shape} vs {rec.shape}")
    mse = float(np.mean((ref.astype(np.int64) - rec.astype(np.int64)) ** 2))
    if mse == 0.0:
        return LOSSLESS
    peak = (1 << bit_depth) - 1
    return 10.0 * math.log10(peak * peak / mse)


def psnr(ref: Frame, rec: Frame) -> tuple[float, ...]:
    """Per-plane PSNR in dB; :data:`LOSSLESS` where the planes are identical."""
    if (ref.chroma_format, ref.bit_depth, len(ref.planes)) != (
        rec.chroma_format, rec.bit_depth, len(rec.planes)
    ):
        raise ValueError("frames differ in format")
    return tuple(plane_psnr(a.samples, b.samples, ref.bit_depth)
                 for a, b in zip(ref.planes, rec.planes))


def is_lossless(value: float) -> bool:
    return value == LOSSLESS


def format_psnr(value: float) -> str:
    return "lossless" if is_lossless(value) else f"{value:.4f}"


def combined_psnr(values: Sequence[float]) -> float:
    """(6*Y + U + V) / 8 weighting; lossless only when every plane is."""
    if len(values) == 1:
        return values[0]
    if all(is_lossless(v) for v in values):
        return LOSSLESS
    cap = 100.0
    y, u, v = (min(x, cap) for x in values)
    return (6 * y + u + v) / 8
