import csv
import subprocess
import sys

import pytest

from scckit.cli import EXIT_BITSTREAM, EXIT_IO, EXIT_OK, EXIT_USAGE, main


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    d = tmp_path_factory.mktemp("corpus")
    assert main(["gen-corpus", "--kind", "all", "--seed", "1", "--out", str(d),
                 "--width", "128", "--height", "128"]) == EXIT_OK
    return d


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_gen_corpus_is_deterministic(corpus, tmp_path):
    main(["gen-corpus", "--kind", "all", "--seed", "1", "--out", str(tmp_path), "--width", "128", "--height", "128"])
    names = sorted(p.name for p in corpus.iterdir())
    assert names == ["mixed_0001.y4m", "text_0001.y4m", "ui_0001.y4m"]
    for n in names:
        assert (corpus / n).read_bytes() == (tmp_path / n).read_bytes()


def test_ppm_corpus_and_act(tmp_path):
    assert main(["gen-corpus", "--kind", "ui", "--out", str(tmp_path), "--format", "ppm",
                 "--width", "128", "--height", "128"]) == EXIT_OK
    src = tmp_path / "ui_0000.ppm"
    bits, rec = tmp_path / "a.sccf", tmp_path / "rec.ppm"
    assert main(["encode", "--input", str(src), "--output", str(bits), "--act", "--lossless",
                 "--tools", "ibc,plt,tsm,bdpcm"]) == EXIT_OK
    assert main(["decode", "--input", str(bits), "--output", str(rec)]) == EXIT_OK
    assert rec.read_bytes() == src.read_bytes()


def test_lossless_pipeline_reports_marker(corpus, tmp_path):
    src = corpus / "text_0001.y4m"
    bits, rec, out = tmp_path / "t.sccf", tmp_path / "rec.y4m", tmp_path / "a.csv"
    assert main(["encode", "--input", str(src), "--output", str(bits), "--lossless"]) == EXIT_OK
    assert main(["decode", "--input", str(bits), "--output", str(rec)]) == EXIT_OK
    assert rec.read_bytes() == src.read_bytes()
    assert main(["analyze", "--ref", str(src), "--rec", str(rec), "--bits", str(bits),
                 "--output", str(out), "--plot", str(tmp_path / "modes.png")]) == EXIT_OK
    row = read_csv(out)[0]
    assert row["psnr_y"] == row["psnr_u"] == row["psnr_v"] == "lossless"
    pct = sum(float(v) for k, v in row.items() if k.startswith("pct_") and k != "pct_act")
    assert pct == pytest.approx(100.0, abs=0.05)
    assert (tmp_path / "modes.png").stat().st_size > 0


def test_lossy_analysis_and_tools_off(corpus, tmp_path, capsys):
    src = corpus / "ui_0001.y4m"
    for tools in ("", "ibc,plt,tsm,bdpcm,isc,dbk"):
        bits, rec = tmp_path / "u.sccf", tmp_path / "u.y4m"
        assert main(["encode", "--input", str(src), "--output", str(bits), "--tools", tools, "--qp", "32"]) == 0
        assert main(["decode", "--input", str(bits), "--output", str(rec)]) == 0
        assert main(["analyze", "--ref", str(src), "--rec", str(rec), "--bits", str(bits)]) == 0
        row = list(csv.DictReader(capsys.readouterr().out.splitlines()[-2:]))[0]
        assert 20 < float(row["psnr_y"]) < 99
        if not tools:
            assert float(row["pct_ibc"]) == float(row["pct_plt"]) == float(row["pct_isc"]) == 0


def test_rdcurve_and_bdrate(corpus, tmp_path, capsys):
    files = [str(corpus / "text_0001.y4m"), str(corpus / "ui_0001.y4m")]
    anchor, test = tmp_path / "anchor.csv", tmp_path / "test.csv"
    assert main(["rdcurve", "--input", *files, "--tools", "", "--output", str(anchor)]) == 0
    assert main(["rdcurve", "--input", *files, "--output", str(test), "--plot", str(tmp_path / "rd.png")]) == 0
    assert len(read_csv(anchor)) == 8
    capsys.readouterr()
    assert main(["bdrate", "--anchor", str(anchor), "--test", str(test), "--plot", str(tmp_path / "bd.png")]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "class,bdrate_percent"
    results = dict(line.split(",") for line in lines[1:])
    assert set(results) == {"text", "ui", "all"}
    assert float(results["all"]) < 0
    assert (tmp_path / "rd.png").stat().st_size > 0 and (tmp_path / "bd.png").stat().st_size > 0
    assert main(["bdrate", "--anchor", str(anchor), "--test", str(anchor)]) == 0
    assert all(float(v) == 0 for v in dict(l.split(",") for l in capsys.readouterr().out.split()[1:]).values())


def test_usage_errors(capsys):
    assert main([]) == EXIT_USAGE
    assert main(["encode", "--input", "x.y4m"]) == EXIT_USAGE
    assert main(["encode", "--input", "x.y4m", "--output", "y", "--tools", "warp"]) == EXIT_USAGE
    err = capsys.readouterr().err
    assert "unknown tool" in err


def test_io_errors(tmp_path, capsys):
    assert main(["decode", "--input", str(tmp_path / "missing.sccf"), "--output", "x.y4m"]) == EXIT_IO
    bad = tmp_path / "bad.y4m"
    bad.write_bytes(b"YUV4MPEG2 W8 H8 C420\nFRAME\n" + bytes(10))
    assert main(["encode", "--input", str(bad), "--output", str(tmp_path / "o")]) == EXIT_IO
    lines = capsys.readouterr().err.strip().splitlines()
    assert len(lines) == 2 and all(l.startswith("scckit: error:") for l in lines)


def test_bitstream_errors(corpus, tmp_path):
    bits = tmp_path / "t.sccf"
    main(["encode", "--input", str(corpus / "ui_0001.y4m"), "--output", str(bits)])
    data = bits.read_bytes()
    corrupt = tmp_path / "c.sccf"
    corrupt.write_bytes(data[:len(data) - 10])
    assert main(["decode", "--input", str(corrupt), "--output", str(tmp_path / "r.y4m")]) == EXIT_BITSTREAM
    corrupt.write_bytes(b"NOPE" + data[4:])
    assert main(["decode", "--input", str(corrupt), "--output", str(tmp_path / "r.y4m")]) == EXIT_BITSTREAM


def test_encode_is_deterministic_across_workers(corpus, tmp_path):
    src = tmp_path / "two.y4m"
    a = (corpus / "text_0001.y4m").read_bytes()
    b = (corpus / "ui_0001.y4m").read_bytes()
    src.write_bytes(a + b[b.index(b"\n") + 1:])
    outs = []
    for w in ("1", "2", "1"):
        o = tmp_path / f"o{len(outs)}.sccf"
        assert main(["encode", "--input", str(src), "--output", str(o), "--workers", w]) == 0
        outs.append(o.read_bytes())
    assert outs[0] == outs[1] == outs[2]


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "scckit.cli", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.startswith("scckit ")
