"""Train the five-lambda tiny model family (stages 1-3) into a model directory.

usage: python3 scripts/train_tiny.py [OUT_DIR] [--resume] [key=value ...]

--resume keeps models already saved in OUT_DIR and trains the remaining lambdas.
"""

import sys
import time

from srepcc.config import TinyProfile, apply_overrides
from srepcc.training.pipeline import train_family

DEFAULT_DIR = "runs/tiny"


def main(argv):
    resume = "--resume" in argv
    argv = [a for a in argv if a != "--resume"]
    out = argv[0] if argv and "=" not in argv[0] else DEFAULT_DIR
    overrides = dict(a.split("=", 1) for a in argv if "=" in a)
    profile = apply_overrides(TinyProfile(), overrides)
    print("profile:", profile, flush=True)
    t0 = time.perf_counter()
    train_family(out, profile, log=lambda s: print(s, flush=True), resume=resume)
    print(f"done in {time.perf_counter() - t0:.0f}s -> {out}")


if __name__ == "__main__":
    main(sys.argv[1:])
