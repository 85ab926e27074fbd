"""Per-configuration RD summary of a trained family on the synthetic test blocks.

usage: python3 scripts/rd_ladder.py [MODEL_DIR] [--out rd.csv]
Rows: lambda id, sf, sr, bpp, mean PSNR D1, mean PSNR D2, mean rate-proxy error.
"""

import argparse
import csv

import numpy as np

from srepcc import codec, metrics
from srepcc.config import TinyProfile
from srepcc.models import LAMBDAS
from srepcc.pointcloud import block_bit_depth
from srepcc.training.pipeline import load_family, test_set

CONFIGS = ((1, False), (2, False), (2, True), (4, False), (4, True))


def ladder(family, blocks):
    bd = block_bit_depth(blocks[0].block_size)
    pts = sum(len(b) for b in blocks)
    rows = []
    for lid, model in sorted(family.items()):
        for sf, sr in CONFIGS:
            bits, d1, d2, perr = 0, [], [], []
            for b in blocks:
                rec, recon, stats = codec.encode_block(b, model, sf, sr)
                bits += stats.bits
                d1.append(metrics.psnr_d1(b.local_points, recon.local_points, bd))
                d2.append(metrics.psnr_d2(b.local_points, recon.local_points, bd))
                coded = 8 * (len(rec.hyper) + len(rec.latent))
                perr.append(abs(stats.proxy_bits - coded) / max(coded, 1))
            rows.append((lid, sf, int(sr), bits / pts, np.mean(d1), np.mean(d2), np.mean(perr)))
            print(f"lambda={LAMBDAS[lid]:<7} sf={sf} sr={int(sr)} bpp={rows[-1][3]:.4f} "
                  f"d1={rows[-1][4]:.2f} d2={rows[-1][5]:.2f} proxy_err={100 * rows[-1][6]:.2f}%", flush=True)
    return rows


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("model_dir", nargs="?", default="runs/tiny")
    ap.add_argument("--out")
    ap.add_argument("--blocks", type=int, default=None)
    args = ap.parse_args()
    blocks = test_set(TinyProfile())[: args.blocks]
    rows = ladder(load_family(args.model_dir), blocks)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["lambda_id", "sf", "sr", "bpp", "psnr_d1", "psnr_d2", "proxy_err"])
            w.writerows(rows)


if __name__ == "__main__":
    main()
