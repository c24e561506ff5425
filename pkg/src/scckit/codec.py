"""Frame and sequence level encode/decode entry points."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

from .bitio import BitstreamError, BitstreamHeader, container_bytes, read_container
from .codec_core import CodingState, FrameStats, decode_payload
from .encoder import EncoderConfig, FrameEncoder
from .media_io import Frame


@dataclass
class EncodedFrame:
    payload: bytes
    recon: Frame
    stats: FrameStats


def make_header(frame: Frame, cfg: EncoderConfig, frame_count: int = 1) -> BitstreamHeader:
    return BitstreamHeader(frame.width, frame.height, frame.chroma_format, frame.color_space,
                           qp=cfg.qp, tool_flags=cfg.header_flags(), frame_count=frame_count)


def _to_frame(planes, header: BitstreamHeader) -> Frame:
    return Frame.from_arrays(planes, header.chroma_format, header.color_space)


def encode_frame(frame: Frame, cfg: EncoderConfig, header: BitstreamHeader | None = None) -> EncodedFrame:
    header = header or make_header(frame, cfg)
    if (frame.width, frame.height, frame.chroma_format) != (header.width, header.height, header.chroma_format):
        raise ValueError("frame does not match the stream header")
    payload, planes, stats, _ = FrameEncoder(frame.arrays(), header, cfg).encode()
    return EncodedFrame(payload, _to_frame(planes, header), stats)


def encode_frame_with_state(frame: Frame, cfg: EncoderConfig) -> tuple[EncodedFrame, CodingState]:
    header = make_header(frame, cfg)
    payload, planes, stats, state = FrameEncoder(frame.arrays(), header, cfg).encode()
    return EncodedFrame(payload, _to_frame(planes, header), stats), state


def decode_frame(payload: bytes, header: BitstreamHeader) -> tuple[Frame, FrameStats]:
    planes, stats, _ = decode_payload(payload, header)
    return _to_frame(planes, header), stats


def _encode_job(args):
    frame, cfg, header = args
    return encode_frame(frame, cfg, header)


def encode_sequence(frames: list[Frame], cfg: EncoderConfig) -> tuple[bytes, list[EncodedFrame]]:
    """Encode every frame independently (all-intra); frames may run in parallel workers."""
    if not frames:
        raise ValueError("no frames to encode")
    header = make_header(frames[0], cfg, len(frames))
    jobs = [(f, cfg, header) for f in frames]
    workers = min(cfg.workers or os.cpu_count() or 1, len(frames))
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            encoded = list(pool.map(_encode_job, jobs))
    else:
        encoded = [_encode_job(j) for j in jobs]
    return container_bytes(header, [e.payload for e in encoded]), encoded


def decode_sequence(data: bytes) -> tuple[BitstreamHeader, list[Frame], list[FrameStats]]:
    header, payloads = read_container(data)
    frames, stats = [], []
    for i, p in enumerate(payloads):
        try:
            f, s = decode_frame(p, header)
        except BitstreamError as exc:
            raise type(exc)(f"frame {i}: {exc}") from None
        frames.append(f)
        stats.append(s)
    return header, frames, stats
