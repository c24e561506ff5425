import numpy as np
import pytest

from scckit.bitio import (CHROMA_400, CHROMA_420, CHROMA_444, COLOR_RGB, BitstreamError,
                          BitstreamHeader, BitWriter, ToolFlags, read_container)
from scckit.codec import decode_frame, decode_sequence, encode_frame, encode_frame_with_state, encode_sequence
from scckit.codec_core import Mode, RdCost, decode_payload, mode_table, rd_lambda, tu_offsets
from scckit.corpus import make_frame
from scckit.encoder import EncoderConfig
from scckit.ibc import InvalidReferenceError
from scckit.media_io import Frame

ALL = ToolFlags.parse("ibc,plt,tsm,bdpcm,isc,dbk")


def roundtrip(frame, cfg):
    enc = encode_frame(frame, cfg)
    from scckit.codec import make_header
    dec, stats = decode_frame(enc.payload, make_header(frame, cfg))
    assert dec == enc.recon
    return enc, stats


def mono(a):
    return Frame.from_arrays([np.asarray(a, np.uint8)], CHROMA_400)


def test_mode_table_order():
    assert mode_table(ToolFlags(0)) == (Mode.INTRA_DC, Mode.INTRA_H, Mode.INTRA_V, Mode.INTRA_PLANAR)
    assert mode_table(ALL)[:3] == (Mode.INTRA_DC, Mode.IBC, Mode.PLT)


def test_lambda_and_cost_order():
    assert rd_lambda(12) == pytest.approx(0.57)
    assert rd_lambda(27) == pytest.approx(0.57 * 32)
    assert RdCost.of(10, 5, 1.0, 3) < RdCost.of(10, 6, 1.0, 0)
    assert RdCost.of(10, 5, 1.0, 1) < RdCost.of(10, 5, 1.0, 2)


def test_flat_picture_uses_dc_without_split():
    img = mono(np.full((128, 128), 128))
    enc, _ = roundtrip(img, EncoderConfig(tools=ALL))
    assert enc.recon == img
    _, st = encode_frame_with_state(img, EncoderConfig(tools=ALL))
    assert {cu.mode for cu in st.cus} == {Mode.INTRA_DC}
    assert {cu.size for cu in st.cus} == {64}
    assert all(cu.residual is None or not any(t for p in cu.residual for t in p) for cu in st.cus)


def test_flat_picture_after_first_cu():
    # with no neighbours the first CU may pick any mode; every later CU predicts exactly
    _, st = encode_frame_with_state(mono(np.full((128, 128), 90)), EncoderConfig(tools=ALL))
    assert {cu.size for cu in st.cus} == {64}
    assert {cu.mode for cu in st.cus[1:]} == {Mode.INTRA_DC}


def test_busy_quadrant_is_isolated(rng):
    img = np.full((64, 64), 128, np.uint8)
    img[32:, 32:] = rng.integers(0, 256, (32, 32))
    _, st = encode_frame_with_state(mono(img), EncoderConfig(tools=ToolFlags(0)))
    # isolation by a split or by the 32x32 transform tiling: residual only in the busy quadrant
    coded = []
    for cu in st.cus:
        if cu.residual is None:
            continue
        for (ox, oy, ts), tu in zip(tu_offsets(cu.size), cu.residual[0]):
            if tu is not None:
                coded.append((cu.x + ox, cu.y + oy, ts))
    assert coded and all(x >= 32 and y >= 32 for x, y, _ in coded)


def test_repeated_content_prefers_copy_modes(rng):
    tile = rng.integers(0, 256, (16, 16), dtype=np.uint8)
    img = np.tile(tile, (8, 8))
    _, st = encode_frame_with_state(mono(img), EncoderConfig(tools=ALL))
    area = sum(cu.size ** 2 for cu in st.cus if cu.mode in (Mode.IBC, Mode.ISC))
    assert area >= 0.75 * img.size


def test_two_colour_text_prefers_palette(rng):
    img = np.where(rng.random((64, 64)) < 0.3, 20, 230).astype(np.uint8)
    _, st = encode_frame_with_state(mono(img), EncoderConfig(qp=32, tools=ToolFlags.parse("plt,tsm")))
    area = sum(cu.size ** 2 for cu in st.cus if cu.mode == Mode.PLT)
    assert area >= 0.75 * img.size


CONFIGS = [
    ("", False, 27),
    ("ibc,plt,tsm,bdpcm,isc,dbk", False, 22),
    ("ibc,plt,tsm,bdpcm,isc,dbk", False, 37),
    ("ibc,isc,tsm,parity", False, 32),
    ("ibc,plt,tsm,bdpcm,isc", True, 27),
]


@pytest.mark.parametrize("tools,lossless,qp", CONFIGS)
@pytest.mark.parametrize("kind", ["text", "ui", "mixed"])
def test_golden_invariant_420(kind, tools, lossless, qp):
    frame = make_frame(kind, 3, 128, 128)
    enc, stats = roundtrip(frame, EncoderConfig(qp=qp, tools=ToolFlags.parse(tools), lossless=lossless))
    if lossless:
        assert enc.recon == frame
    assert stats.bits == 8 * len(enc.payload)
    assert sum(stats.mode_area.values()) == 128 * 128


@pytest.mark.parametrize("lossless", [False, True])
def test_golden_invariant_rgb_act(lossless):
    frame = make_frame("mixed", 1, 128, 128, rgb=True)
    assert frame.chroma_format == CHROMA_444 and frame.color_space == COLOR_RGB
    tools = ToolFlags.parse("ibc,plt,tsm,bdpcm,isc,act" + ("" if lossless else ",dbk"))
    enc, stats = roundtrip(frame, EncoderConfig(qp=27, tools=tools, lossless=lossless))
    if lossless:
        assert enc.recon == frame


def test_odd_picture_size_monochrome(rng):
    img = rng.integers(0, 256, (132, 200), dtype=np.uint8)
    img[:, 100:] = img[:, :100]
    enc, _ = roundtrip(mono(img), EncoderConfig(tools=ToolFlags.parse("ibc,plt,tsm,bdpcm,isc"), lossless=True))
    assert enc.recon == mono(img)


def test_bits_decrease_with_qp():
    frame = make_frame("mixed", 4, 128, 128)
    bits = [len(encode_frame(frame, EncoderConfig(qp=q, tools=ALL)).payload) for q in (22, 27, 32, 37)]
    assert bits == sorted(bits, reverse=True)


def test_tools_off_grammar():
    frame = make_frame("text", 2, 128, 128)
    cfg = EncoderConfig(tools=ToolFlags(0))
    data, enc = encode_sequence([frame], cfg)
    header, frames, stats = decode_sequence(data)
    assert header.tool_flags == ToolFlags(0)
    assert frames[0] == enc[0].recon
    for m in ("IBC", "PLT", "ISC"):
        assert stats[0].mode_count[m] == 0
    # the same payload read under a header that enables IBC is a different grammar
    with pytest.raises(BitstreamError):
        decode_payload(enc[0].payload, BitstreamHeader(128, 128, tool_flags=ToolFlags.parse("ibc,plt")))


def _rd_cost(frame, cfg):
    enc = encode_frame(frame, cfg)
    d = sum(int(((a.samples.astype(np.int64) - b.samples) ** 2).sum())
            for a, b in zip(frame.planes, enc.recon.planes))
    return d + rd_lambda(cfg.qp) * 8 * len(enc.payload)


@pytest.mark.parametrize("tool", ["ibc", "plt"])
def test_enabling_tool_does_not_raise_cost(tool):
    frame = make_frame("text", 5, 128, 128)
    base = _rd_cost(frame, EncoderConfig(tools=ToolFlags.parse("tsm")))
    more = _rd_cost(frame, EncoderConfig(tools=ToolFlags.parse("tsm," + tool)))
    assert more <= base


def test_determinism_across_workers():
    frames = [make_frame(k, 7, 128, 128) for k in ("text", "ui")]
    a, _ = encode_sequence(frames, EncoderConfig(tools=ALL, workers=1))
    b, _ = encode_sequence(frames, EncoderConfig(tools=ALL, workers=2))
    c, _ = encode_sequence(frames, EncoderConfig(tools=ALL, workers=1))
    assert a == b == c


def _single_cu_stream(mode_code, bvx, bvy):
    w = BitWriter()
    w.write_flag(0)  # 8x8 CU, no split
    w.write_ue(mode_code)
    w.write_flag(0)  # explicit vector
    w.write_se(bvx)
    w.write_se(bvy)
    w.write_flag(0)  # no luma residual
    return w.getvalue()


@pytest.mark.parametrize("bv", [(0, 0), (-8, 0), (0, -8), (4, 4)])
def test_decoder_rejects_invalid_vectors(bv):
    header = BitstreamHeader(8, 8, CHROMA_400, tool_flags=ToolFlags.IBC)
    with pytest.raises(InvalidReferenceError, match=r"CU \(0,0\)"):
        decode_payload(_single_cu_stream(1, *bv), header)


def test_truncated_and_trailing_payload():
    frame = make_frame("ui", 0, 128, 128)
    cfg = EncoderConfig(tools=ALL)
    data, _ = encode_sequence([frame], cfg)
    header, payloads = read_container(data)
    with pytest.raises(BitstreamError):
        decode_payload(payloads[0][: len(payloads[0]) // 2], header)
    with pytest.raises(BitstreamError):
        decode_payload(payloads[0] + b"\x00", header)


def test_config_validation():
    with pytest.raises(ValueError):
        EncoderConfig(qp=60)
    with pytest.raises(ValueError):
        EncoderConfig(min_cu=12)
    assert ToolFlags.DBK not in EncoderConfig(tools=ALL, lossless=True).header_flags()
