"""Quality versus number of kept latent channels for one trained model.

usage: python3 scripts/channel_curve.py [MODEL_DIR] [LAMBDA_ID] [BLOCKS]
"""

import sys

from srepcc.analysis import channel_variance_analysis, encode_dataset, channel_variances, saturation_point
from srepcc.config import TinyProfile
from srepcc.models import load_model
from srepcc.training.pipeline import test_set


def main(argv):
    model_dir = argv[0] if argv else "runs/tiny"
    lid = int(argv[1]) if len(argv) > 1 else 4
    n_blocks = int(argv[2]) if len(argv) > 2 else 20
    model = load_model(model_dir, lid)
    blocks = test_set(TinyProfile())[:n_blocks]
    enc = encode_dataset(model, blocks)
    var = channel_variances(model, blocks, encoded=enc)
    curve = channel_variance_analysis(model, blocks, range(model.cfg.latent_channels + 1), variances=var, encoded=enc)
    print("N,psnr_d1,psnr_d2")
    for n, d1, d2 in curve:
        print(f"{n},{d1:.4f},{d2:.4f}")
    print(f"# 99% of the maximum D1 reached at N={saturation_point(curve[1:])}")


if __name__ == "__main__":
    main(sys.argv[1:])
