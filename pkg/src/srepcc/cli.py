"""Command-line entry points: encode, decode, train, eval, params, channels, bdrate."""

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import codec, metrics, report
from .analysis import channel_variance_analysis, channel_variances
from .bitstream import parse_bitstream
from .config import LossConfig, TinyProfile, TrainRun, apply_overrides, parse_kv, unknown_keys
from .errors import ConfigError, DecodeError, IntegrityError, MetricError, PlyError, ShapeError, TapeError
from .models import LAMBDAS, CodingModel, available_models, load_model, save_model, tiny_config
from .ply import read_ply, write_ply

EXIT_OK, EXIT_USAGE, EXIT_INTERNAL = 0, 2, 3


class UsageError(Exception):
    pass


def _print_config(args, extra=None):
    cfg = {k: v for k, v in vars(args).items() if k != "func"}
    cfg.update(extra or {})
    print("config: " + json.dumps(cfg, sort_keys=True, default=str))


def _overrides(args):
    if not args.config:
        return {}
    if not os.path.isfile(args.config):
        raise UsageError(f"config file not found: {args.config}")
    with open(args.config) as fh:
        return parse_kv(fh.read())


def _model(directory, lambda_id):
    if not os.path.isdir(directory):
        raise UsageError(f"model directory not found: {directory}")
    try:
        return load_model(directory, lambda_id)
    except FileNotFoundError as exc:
        raise UsageError(str(exc)) from None


def _model_block_size(directory, default):
    try:
        with open(os.path.join(directory, "config.json")) as fh:
            return int(json.load(fh).get("block_size", default))
    except (OSError, ValueError):
        return default


def _read_cloud(path, voxelize=False, bit_depth=None):
    if not os.path.isfile(path):
        raise UsageError(f"input not found: {path}")
    return read_ply(path, bit_depth=bit_depth, voxelize_points=voxelize)


# ---------------------------------------------------------------------------


def cmd_encode(args):
    pc = _read_cloud(args.input, args.voxelize, args.bit_depth)
    block_size = args.block_size or _model_block_size(args.model, 128)
    sfs = (1, 2, 4) if args.sf == "auto" else (int(args.sf),)
    srs = {"auto": (False, True), "on": (True,), "off": (False,)}[args.sr]
    if args.sr == "on" and sfs == (1,):
        raise UsageError("--sr on requires --sf 2, 4 or auto")
    if args.lambda_id == "auto":
        ids = available_models(args.model) if os.path.isdir(args.model) else []
        if not ids:
            raise UsageError(f"no trained models in {args.model}")
    else:
        ids = [int(args.lambda_id)]
    if args.per_block and len(ids) > 1:
        raise UsageError("--per-block needs a fixed --lambda-id")
    models = {i: _model(args.model, i) for i in ids}
    _print_config(args, {"resolved_block_size": block_size})
    if args.per_block:
        mid, sf, sr = ids[0], None, None
        opts = codec.coding_options(block_size, sfs, srs)
        res = codec.encode_cloud(pc, models[mid], block_size, qs=args.qs, threads=args.threads,
                                 per_block=args.lambda_op, options=opts)
    elif len(models) > 1 or len(sfs) > 1 or len(srs) > 1:
        (mid, sf, sr), rows = codec.select_coding_config(
            pc, models, args.lambda_op, sfs, tuple(s for s in srs), block_size, args.qs
        )
        for (m_, s_, r_), bpp, d1, cost in rows:
            print(f"candidate model={m_} sf={s_} sr={'on' if r_ else 'off'}: bpp {bpp:.4f} d1 {d1:.3f} cost {cost:.5f}")
    else:
        mid, sf, sr = ids[0], sfs[0], srs[0]
    if not args.per_block:
        res = codec.encode_cloud(pc, models[mid], block_size, sf, sr, args.qs, threads=args.threads)
    with open(args.output, "wb") as fh:
        fh.write(res.data)
    for i, (rec, st) in enumerate(zip(parse_bitstream(res.data).blocks, res.stats)):
        h = rec.header
        print(f"block {i} origin={h.origin} sf={h.sf} sr={'on' if h.sr_flag else 'off'} points={st.n_points} "
              f"latent={st.n_latent} k_C={h.k_c} k_S={h.k_s} bits={st.bits}")
    mode = "per-block" if args.per_block else f"{sf} sr={'on' if sr else 'off'}"
    print(f"model={mid} sf={mode} points={len(pc)} bytes={len(res.data)} bpp={res.bpp:.4f}")
    return EXIT_OK


def cmd_decode(args):
    if not os.path.isfile(args.input):
        raise UsageError(f"input not found: {args.input}")
    with open(args.input, "rb") as fh:
        data = fh.read()
    _print_config(args)
    cache = {}

    def source(mid):
        if mid not in cache:
            cache[mid] = _model(args.model, mid)
        return cache[mid]

    pc = codec.decode_cloud(data, source, threads=args.threads)
    write_ply(pc, args.output, binary=args.binary)
    print(f"decoded {len(pc)} points -> {args.output}")
    return EXIT_OK


def cmd_train(args):
    overrides = _overrides(args)
    for kv in args.set or []:
        k, _, v = kv.partition("=")
        overrides[k] = v
    profile = apply_overrides(TinyProfile(seed=args.seed), overrides)
    bad = unknown_keys(overrides, profile, TrainRun(), LossConfig())
    if bad:
        raise UsageError(f"unknown config keys: {', '.join(bad)}")
    _print_config(args, {"profile": profile.__dict__})
    from .training.data import generate_training_blocks
    from .training.pipeline import train_family
    from .training.trainer import train_stage, write_trace

    if args.stage == "all":
        train_family(args.out, profile, log=print)
        return EXIT_OK
    stage = int(args.stage)
    lid = int(args.lambda_id)
    run = apply_overrides(
        TrainRun(stage, args.epochs or profile.stage1_epochs, profile.batch_size, seed=args.seed), overrides
    )
    loss = apply_overrides(LossConfig(lam=LAMBDAS[lid]), overrides)
    print(f"resolved: {run} {loss}")
    if os.path.isfile(os.path.join(args.out, f"lambda{lid}.srps")):
        model = load_model(args.out, lid)
    elif stage == 1:
        model = CodingModel(tiny_config(lid), seed=args.seed)
    else:
        raise UsageError(f"stage {stage} needs a stage-1 checkpoint for lambda {lid} in {args.out}")
    data = generate_training_blocks("mixed", profile.num_blocks, profile.block_size, profile.data_seed)
    _, trace = train_stage(model, run, data, loss, log=print)
    model.params.round_to_f32()
    save_model(model, args.out, {"block_size": profile.block_size, "qs": loss.qs})
    path = os.path.join(args.out, f"trace_lambda{lid}_stage{stage}.csv")
    write_trace(trace, path)
    print(f"checkpoint -> {args.out}, trace -> {path}")
    return EXIT_OK


def cmd_eval(args):
    ref = _read_cloud(args.ref)
    deg = _read_cloud(args.deg)
    bd = args.bit_depth or ref.bit_depth
    _print_config(args, {"resolved_bit_depth": bd})
    d1 = metrics.psnr_d1(ref, deg, bd)
    d2 = metrics.psnr_d2(ref, deg, bd) if len(ref) >= metrics.NORMAL_NEIGHBORS else float("nan")
    bpp = float("nan")
    if args.bitstream:
        if not os.path.isfile(args.bitstream):
            raise UsageError(f"bitstream not found: {args.bitstream}")
        bpp = metrics.bits_per_point(8 * os.path.getsize(args.bitstream), len(ref))
    print(f"bpp={bpp:.6f} psnr_d1={d1:.4f} psnr_d2={d2:.4f}")
    if args.csv:
        new = not os.path.isfile(args.csv)
        with open(args.csv, "a", newline="") as fh:
            w = csv.writer(fh)
            if new:
                w.writerow(["codec_id", "pc_id", "bpp", "d1", "d2"])
            w.writerow([args.codec_id, args.pc_id or os.path.basename(args.ref), f"{bpp:.6f}", f"{d1:.4f}", f"{d2:.4f}"])
    return EXIT_OK


def cmd_params(args):
    _print_config(args)
    cfg = report.profile_config(args.profile)
    rows = report.subnet_table(cfg)
    for label, n in rows:
        print(f"{label:<40s} {n:>12,d}")
    if args.markdown:
        print(report.to_markdown(report.complexity_table()))
        print(report.to_markdown(report.simplification_table()))
    if args.check:
        bad = 0
        for key, expected, got in report.check_ledger():
            ok = expected == got
            bad += not ok
            print(f"{'OK ' if ok else 'BAD'} {key}: expected {expected:,} computed {got:,}")
        if bad:
            print(f"{bad} ledger mismatches", file=sys.stderr)
            return 1
    return EXIT_OK


def cmd_channels(args):
    model = _model(args.model, args.lambda_id)
    lo, _, hi = args.n.partition("..")
    ns = list(range(int(lo), int(hi or lo) + 1))
    from .training.data import generate_training_blocks

    block_size = _model_block_size(args.model, 32)
    blocks = generate_training_blocks("mixed", args.blocks, block_size, args.seed)
    _print_config(args, {"block_size": block_size})
    var = channel_variances(model, blocks)
    curve = channel_variance_analysis(model, blocks, ns, variances=var)
    out = args.output or "channels.csv"
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["N", "psnr_d1", "psnr_d2"])
        for n, d1, d2 in curve:
            w.writerow([n, f"{d1:.6f}", f"{d2:.6f}"])
            print(f"N={n:3d} d1={d1:.4f} d2={d2:.4f}")
    print(f"channel variances (sorted): {np.round(np.sort(var)[::-1], 4).tolist()}")
    print(f"-> {out}")
    return EXIT_OK


def _read_curve(path, codec_id=None, pc_id=None):
    if not os.path.isfile(path):
        raise UsageError(f"curve file not found: {path}")
    pts = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            if codec_id and row.get("codec_id") != codec_id:
                continue
            if pc_id and row.get("pc_id") != pc_id:
                continue
            pts.append(metrics.RDPoint(float(row["bpp"]), float(row["d1"]), float(row.get("d2", "nan"))))
    return pts


def cmd_bdrate(args):
    _print_config(args)
    test = _read_curve(args.test, args.test_codec, args.pc_id)
    ref = _read_curve(args.ref, args.ref_codec, args.pc_id)
    rate, psnr = metrics.bd_metrics(test, ref, args.metric)
    print(f"BD-Rate={rate:.4f}% BD-PSNR={psnr:.4f}dB")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="srepcc", description="Learned point cloud geometry codec with compressed-domain SR.")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--config", help="file of key=value overrides")
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("encode")
    e.add_argument("input")
    e.add_argument("output")
    e.add_argument("--model", required=True)
    e.add_argument("--lambda-id", default="0", choices=[str(i) for i in range(len(LAMBDAS))] + ["auto"])
    e.add_argument("--sf", default="1", choices=["1", "2", "4", "auto"])
    e.add_argument("--sr", default="off", choices=["on", "off", "auto"])
    e.add_argument("--block-size", type=int, default=None)
    e.add_argument("--qs", type=float, default=1.0)
    e.add_argument("--lambda-op", type=float, default=0.0, help="weight of bpp in the configuration search")
    e.add_argument("--per-block", action="store_true", help="choose sf/sr separately for every block")
    e.add_argument("--voxelize", action="store_true")
    e.add_argument("--bit-depth", type=int, default=None)
    e.set_defaults(func=cmd_encode)

    d = sub.add_parser("decode")
    d.add_argument("input")
    d.add_argument("output")
    d.add_argument("--model", required=True)
    d.add_argument("--binary", action="store_true")
    d.set_defaults(func=cmd_decode)

    t = sub.add_parser("train")
    t.add_argument("--profile", default="tiny", choices=["tiny"])
    t.add_argument("--stage", default="1", choices=["1", "2", "3", "all"])
    t.add_argument("--lambda-id", type=int, default=0, choices=range(len(LAMBDAS)))
    t.add_argument("--epochs", type=int, default=None)
    t.add_argument("--out", default="runs/tiny")
    t.add_argument("--set", action="append", metavar="KEY=VALUE")
    t.set_defaults(func=cmd_train)

    v = sub.add_parser("eval")
    v.add_argument("--ref", required=True)
    v.add_argument("--deg", required=True)
    v.add_argument("--bitstream")
    v.add_argument("--bit-depth", type=int, default=None)
    v.add_argument("--csv")
    v.add_argument("--codec-id", default="srepcc")
    v.add_argument("--pc-id")
    v.set_defaults(func=cmd_eval)

    q = sub.add_parser("params")
    q.add_argument("--profile", default="simplified")
    q.add_argument("--check", action="store_true")
    q.add_argument("--markdown", action="store_true")
    q.set_defaults(func=cmd_params)

    c = sub.add_parser("channels")
    c.add_argument("--model", required=True)
    c.add_argument("--lambda-id", type=int, default=0)
    c.add_argument("--n", default="0..16", help="range lo..hi of kept channel counts")
    c.add_argument("--blocks", type=int, default=20)
    c.add_argument("--output")
    c.set_defaults(func=cmd_channels)

    b = sub.add_parser("bdrate")
    b.add_argument("--test", required=True)
    b.add_argument("--ref", required=True)
    b.add_argument("--test-codec")
    b.add_argument("--ref-codec")
    b.add_argument("--pc-id")
    b.add_argument("--metric", default="psnr_d1", choices=["psnr_d1", "psnr_d2"])
    b.set_defaults(func=cmd_bdrate)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    np.random.seed(args.seed)
    try:
        return args.func(args)
    except (UsageError, ConfigError, PlyError, DecodeError, MetricError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (IntegrityError, ShapeError, TapeError, AssertionError) as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
