import csv
import time

import numpy as np
import pytest

from srepcc import cli
from srepcc.bitstream import parse_bitstream
from srepcc.models import CodingModel, save_model, tiny_config
from srepcc.ply import read_ply, write_ply
from srepcc.pointcloud import PointCloud
from srepcc.training.data import sphere_shell


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    for lid in (0, 4):
        m = CodingModel(tiny_config(lid), seed=lid)
        m.params.round_to_f32()
        save_model(m, d / "model", {"block_size": 32, "qs": 1.0})
    pts = sphere_shell(32, np.random.default_rng(0), radius=12, center=np.full(3, 16.0))
    write_ply(PointCloud.from_points(pts, 5), d / "shell.ply")
    return d


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_encode_decode_eval(workspace, capsys):
    w = workspace
    code, out, _ = run(capsys, "encode", w / "shell.ply", w / "s.bin", "--model", w / "model", "--sf", "2")
    assert code == 0 and "config:" in out and "bpp=" in out and "block 0" in out
    code, out, _ = run(capsys, "decode", w / "s.bin", w / "s.ply", "--model", w / "model")
    assert code == 0
    dec = read_ply(str(w / "s.ply"))
    assert len(dec) > 0 and np.all(dec.points % 2 == 0)
    code, out, _ = run(capsys, "eval", "--ref", w / "shell.ply", "--deg", w / "s.ply", "--bitstream", w / "s.bin",
                       "--csv", w / "rd.csv", "--codec-id", "toy")
    assert code == 0 and "psnr_d1=" in out
    rows = list(csv.DictReader(open(w / "rd.csv")))
    assert rows[0]["codec_id"] == "toy" and set(rows[0]) == {"codec_id", "pc_id", "bpp", "d1", "d2"}


def test_decoded_file_matches_encoder_reconstruction(workspace, capsys):
    from srepcc import codec
    from srepcc.models import load_model

    w = workspace
    run(capsys, "encode", w / "shell.ply", w / "r.bin", "--model", w / "model", "--lambda-id", "4")
    run(capsys, "decode", w / "r.bin", w / "r.ply", "--model", w / "model", "--binary")
    res = codec.encode_cloud(read_ply(str(w / "shell.ply")), load_model(w / "model", 4), 32)
    assert read_ply(str(w / "r.ply")) == res.recon
    assert (w / "r.bin").read_bytes() == res.data


def test_sf4_sr_flags(workspace, capsys):
    w = workspace
    code, _, _ = run(capsys, "encode", w / "shell.ply", w / "x.bin", "--model", w / "model", "--sf", "4", "--sr", "on")
    assert code == 0
    for rec in parse_bitstream((w / "x.bin").read_bytes()).blocks:
        assert rec.header.sf_code == 2 and rec.header.sr_flag == 1


def test_auto_selection(workspace, capsys):
    w = workspace
    code, out, _ = run(capsys, "encode", w / "shell.ply", w / "a.bin", "--model", w / "model", "--lambda-id", "auto",
                       "--sf", "auto", "--sr", "auto", "--lambda-op", "0.01")
    assert code == 0 and out.count("candidate model=") == 10


def test_deterministic_output(workspace, capsys):
    w = workspace
    for name in ("d1.bin", "d2.bin"):
        run(capsys, "--seed", "3", "--threads", "2", "encode", w / "shell.ply", w / name, "--model", w / "model")
    assert (w / "d1.bin").read_bytes() == (w / "d2.bin").read_bytes()


def test_usage_errors(workspace, capsys):
    w = workspace
    code, _, err = run(capsys, "encode", w / "shell.ply", w / "e.bin", "--model", w / "missing")
    assert code == 2 and "error" in err
    code, _, err = run(capsys, "encode", w / "nope.ply", w / "e.bin", "--model", w / "model")
    assert code == 2
    code, _, err = run(capsys, "encode", w / "shell.ply", w / "e.bin", "--model", w / "model", "--lambda-id", "2")
    assert code == 2
    (w / "junk.bin").write_bytes(b"JUNKJUNK")
    code, _, err = run(capsys, "decode", w / "junk.bin", w / "j.ply", "--model", w / "model")
    assert code == 2
    with pytest.raises(SystemExit) as exc:
        cli.main(["encode", "--no-such-flag"])
    assert exc.value.code == 2
    capsys.readouterr()


def test_params_check(capsys):
    t0 = time.perf_counter()
    code, out, _ = run(capsys, "params", "--check")
    assert time.perf_counter() - t0 < 1.0
    assert code == 0 and "2,250,016" in out and "BAD" not in out
    code, out, _ = run(capsys, "params", "--profile", "original")
    assert "5,073,312" in out
    code, out, _ = run(capsys, "params", "--profile", "table5:all_channels:16")
    assert "129,168" in out
    code, _, _ = run(capsys, "params", "--profile", "bogus")
    assert code == 2


def test_bdrate_identical(tmp_path, capsys):
    p = tmp_path / "c.csv"
    rows = [("a", "pc", b, q, q - 1) for b, q in ((0.1, 30), (0.2, 33), (0.4, 36), (0.8, 39))]
    with open(p, "w", newline="") as fh:
        csv.writer(fh).writerows([("codec_id", "pc_id", "bpp", "d1", "d2")] + rows)
    code, out, _ = run(capsys, "bdrate", "--test", p, "--ref", p)
    assert code == 0 and "BD-Rate=0.0000%" in out and "BD-PSNR=0.0000dB" in out
    code, _, _ = run(capsys, "bdrate", "--test", p, "--ref", tmp_path / "none.csv")
    assert code == 2


def test_channels_command(workspace, capsys):
    w = workspace
    code, out, _ = run(capsys, "channels", "--model", w / "model", "--n", "0..16", "--blocks", "3",
                       "--output", w / "ch.csv")
    assert code == 0
    rows = list(csv.DictReader(open(w / "ch.csv")))
    assert len(rows) == 17 and rows[-1]["N"] == "16"
    from srepcc.analysis import channel_variance_analysis
    from srepcc.models import load_model
    from srepcc.training.data import generate_training_blocks

    model = load_model(w / "model", 0)
    blocks = generate_training_blocks("mixed", 3, 32, 0)
    full = channel_variance_analysis(model, blocks, [16])[0]
    assert float(rows[-1]["psnr_d1"]) == pytest.approx(full[1], abs=1e-6)


def test_train_command(tmp_path, capsys):
    cfg = tmp_path / "train.cfg"
    cfg.write_text("num_blocks = 6\nbatch_size = 3\n")
    out_dir = tmp_path / "m"
    args = ["--seed", "1", "--config", cfg, "train", "--stage", "1", "--lambda-id", "4", "--epochs", "3",
            "--out", out_dir]
    code, out, _ = run(capsys, *args)
    assert code == 0 and "resolved:" in out
    assert (out_dir / "lambda4.srps").is_file()
    trace = list(csv.DictReader(open(out_dir / "trace_lambda4_stage1.csv")))
    assert len(trace) == 3 and float(trace[-1]["loss"]) < float(trace[0]["loss"])
    bad = tmp_path / "bad.cfg"
    bad.write_text("no_such_key = 1\n")
    code, _, err = run(capsys, "--config", bad, "train", "--out", out_dir)
    assert code == 2 and "no_such_key" in err


def test_per_block_flag(workspace, capsys):
    w = workspace
    code, out, _ = run(capsys, "encode", w / "shell.ply", w / "p.bin", "--model", w / "model", "--lambda-id", "0",
                       "--sf", "auto", "--sr", "auto", "--per-block", "--lambda-op", "0.01")
    assert code == 0 and "sf=per-block" in out
    code, _, _ = run(capsys, "decode", w / "p.bin", w / "p.ply", "--model", w / "model")
    assert code == 0
    code, _, err = run(capsys, "encode", w / "shell.ply", w / "q.bin", "--model", w / "model", "--lambda-id", "auto",
                       "--per-block")
    assert code == 2
