"""Command-line interface: encode, decode, analyze, bdrate, rdcurve, gen-corpus.

Exit status: 0 success, 1 usage or contract error, 2 I/O or media-format
error, 3 malformed bitstream.
"""

from __future__ import annotations

import argparse
import io
import os
import sys
from pathlib import Path

from . import __version__
from .bdrate import RdPoint
from .bitio import BitstreamError, ToolFlags
from .codec import decode_sequence, encode_sequence
from .corpus import KINDS, make_frame
from .encoder import EncoderConfig
from .media_io import MediaFormatError, combined_psnr, psnr, read_frames, write_frames
from .report import (CurveRow, FrameAnalysis, class_bd_rates, plot_bdrate, plot_mode_usage,
                     plot_rd_curves, read_curve, write_analysis, write_curve)

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_BITSTREAM = 0, 1, 2, 3
DEFAULT_TOOLS = "ibc,plt,tsm,bdpcm,isc,dbk"
DEFAULT_QPS = "22,27,32,37"


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _config(args) -> EncoderConfig:
    tools = ToolFlags.parse(args.tools)
    if args.act:
        tools |= ToolFlags.ACT
    if args.parity:
        tools |= ToolFlags.PARITY
    return EncoderConfig(qp=args.qp, tools=tools, lossless=args.lossless, workers=args.workers)


def _read_bytes(path) -> bytes:
    with open(path, "rb") as fh:
        return fh.read()


def _write_text(path, text: str) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


# ---------------------------------------------------------------- commands

def cmd_encode(args) -> int:
    cfg = _config(args)
    frames = read_frames(args.input)
    data, encoded = encode_sequence(frames, cfg)
    Path(args.output).write_bytes(data)
    bits = sum(8 * len(e.payload) for e in encoded)
    print(f"{len(frames)} frame(s), {len(data)} bytes, {bits} payload bits")
    return EXIT_OK


def cmd_decode(args) -> int:
    _, frames, _ = decode_sequence(_read_bytes(args.input))
    write_frames(args.output, frames)
    return EXIT_OK


def cmd_analyze(args) -> int:
    ref = read_frames(args.ref)
    rec = read_frames(args.rec)
    header, decoded, stats = decode_sequence(_read_bytes(args.bits))
    if not len(ref) == len(rec) == len(decoded):
        raise ValueError(f"frame counts differ: ref {len(ref)}, rec {len(rec)}, stream {len(decoded)}")
    rows = [FrameAnalysis(i, st.bits, psnr(r, d), st) for i, (r, d, st) in enumerate(zip(ref, rec, stats))]
    buf = io.StringIO()
    write_analysis(rows, buf)
    _write_text(args.output, buf.getvalue())
    if args.plot:
        plot_mode_usage(rows, args.plot)
    return EXIT_OK


def cmd_rdcurve(args) -> int:
    qps = [int(q) for q in args.qps.split(",") if q.strip()]
    rows = []
    for path in args.input:
        frames = read_frames(path)
        seq = Path(path).stem
        cls = args.cls or seq.split("_")[0]
        for qp in qps:
            args.qp = qp
            data, enc = encode_sequence(frames, _config(args))
            q = [combined_psnr(psnr(f, e.recon)) for f, e in zip(frames, enc)]
            rows.append(CurveRow(cls, seq, qp, 8 * sum(len(e.payload) for e in enc), sum(q) / len(q)))
    buf = io.StringIO()
    append = args.append and args.output not in (None, "-") and os.path.exists(args.output)
    write_curve(rows, buf, header=not append)
    if append:
        with open(args.output, "a") as fh:
            fh.write(buf.getvalue())
    else:
        _write_text(args.output, buf.getvalue())
    if args.plot:
        curves: dict[str, list] = {}
        for r in rows:
            curves.setdefault(r.sequence, []).append(RdPoint(r.psnr, r.bits))
        plot_rd_curves(curves, args.plot, args.tools or "tools off")
    return EXIT_OK


def cmd_bdrate(args) -> int:
    with open(args.anchor, newline="") as fh:
        anchor = read_curve(fh)
    with open(args.test, newline="") as fh:
        test = read_curve(fh)
    results = class_bd_rates(anchor, test)
    print("class,bdrate_percent")
    for cls, v in results.items():
        print(f"{cls},{v:.4f}")
    if args.plot:
        plot_bdrate(results, args.plot)
    return EXIT_OK


def cmd_gen_corpus(args) -> int:
    kinds = KINDS if args.kind == "all" else (args.kind,)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rgb = args.format == "ppm"
    for kind in kinds:
        for seed in range(args.seed, args.seed + args.count):
            frame = make_frame(kind, seed, args.width, args.height, rgb=rgb)
            path = out / f"{kind}_{seed:04d}.{args.format}"
            write_frames(path, [frame])
            print(path)
    return EXIT_OK


# ---------------------------------------------------------------- parser

def _add_codec_options(p) -> None:
    p.add_argument("--qp", type=int, default=27, help="quantization parameter 0..51 (default 27)")
    p.add_argument("--tools", default=DEFAULT_TOOLS,
                   help=f"comma-separated tools from {{{','.join(t.name.lower() for t in ToolFlags)}}}; "
                        f"empty string for the anchor (default {DEFAULT_TOOLS})")
    p.add_argument("--lossless", action="store_true", help="lossless coding (deblocking disabled)")
    p.add_argument("--act", action="store_true", help="enable the adaptive colour transform (RGB 4:4:4)")
    p.add_argument("--parity", action="store_true", help="infer transform skip from level parity")
    p.add_argument("--workers", type=int, default=1, help="frame-parallel encoder processes")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="scckit", description="Intra-frame screen-content codec.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("encode", help="encode a .y4m or .ppm file")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    _add_codec_options(p)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="decode a bitstream to .y4m or .ppm")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("analyze", help="per-frame bits, PSNR and mode usage as CSV")
    p.add_argument("--ref", required=True, help="source frames")
    p.add_argument("--rec", required=True, help="decoded frames")
    p.add_argument("--bits", required=True, help="bitstream the reconstruction came from")
    p.add_argument("--output", default="-", help="CSV path (default stdout)")
    p.add_argument("--plot", help="write a mode-usage figure (PNG/SVG/PDF by extension)")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("rdcurve", help="encode inputs at several QPs and write a bdrate CSV")
    p.add_argument("--input", required=True, nargs="+")
    p.add_argument("--qps", default=DEFAULT_QPS, help=f"comma-separated QPs (default {DEFAULT_QPS})")
    p.add_argument("--class", dest="cls", help="class label (default: file name up to the first '_')")
    p.add_argument("--output", default="-")
    p.add_argument("--append", action="store_true", help="append rows to an existing CSV")
    p.add_argument("--plot", help="write a rate-distortion figure")
    _add_codec_options(p)
    p.set_defaults(func=cmd_rdcurve)

    p = sub.add_parser("bdrate", help="Bjontegaard delta rate per class")
    p.add_argument("--anchor", required=True, help="CSV with columns class,sequence,qp,bits,psnr")
    p.add_argument("--test", required=True)
    p.add_argument("--plot", help="write a per-class bar chart")
    p.set_defaults(func=cmd_bdrate)

    p = sub.add_parser("gen-corpus", help="render synthetic screen-content frames")
    p.add_argument("--kind", choices=KINDS + ("all",), required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=1, help="frames per kind (seeds seed..seed+count-1)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--format", choices=("y4m", "ppm"), default="y4m",
                   help="y4m: YCbCr 4:2:0; ppm: RGB 4:4:4")
    p.add_argument("--width", type=int, default=512)
    p.add_argument("--height", type=int, default=512)
    p.set_defaults(func=cmd_gen_corpus)
    return ap


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except BitstreamError as exc:
        code, msg = EXIT_BITSTREAM, f"bitstream error: {exc}"
    except (OSError, MediaFormatError) as exc:
        code, msg = EXIT_IO, f"I/O error: {exc}"
    except ValueError as exc:
        code, msg = EXIT_USAGE, str(exc)
    print(f"scckit: error: {' '.join(msg.split())}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
