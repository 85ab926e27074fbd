"""Desk-scale training of the five-lambda SR-enabled model family."""

import json
import os
from dataclasses import asdict, replace

from ..config import LossConfig, TinyProfile, TrainRun
from ..models import LAMBDAS, CodingModel, available_models, load_model, save_model, tiny_config
from .data import generate_training_blocks
from .trainer import train_stage, write_trace

# smallest lambda (highest rate) first from random init; each later model warm-starts from the previous one
LAMBDA_ORDER = tuple(reversed(range(len(LAMBDAS))))


def training_set(profile):
    return generate_training_blocks("mixed", profile.num_blocks, profile.block_size, profile.data_seed)


def test_set(profile):
    return generate_training_blocks("mixed", profile.num_test_blocks, profile.block_size, profile.test_seed)


def train_family(out_dir, profile=None, cfg=None, lambda_ids=LAMBDA_ORDER, qs=1.0, log=print, resume=False):
    """Train stage 1, 2 and 3 for every lambda id and save them under ``out_dir``.

    With ``resume``, models already saved in ``out_dir`` are loaded instead of retrained and
    serve as the warm start for the next lambda.
    """
    profile = profile or TinyProfile()
    cfg = cfg or tiny_config()
    data = training_set(profile)
    os.makedirs(out_dir, exist_ok=True)
    prev = None
    saved = set(available_models(out_dir)) if resume else set()
    for i, lid in enumerate(lambda_ids):
        if lid in saved:
            log(f"lambda{lid}: loaded from {out_dir}")
            prev = load_model(out_dir, lid)
            continue
        model = CodingModel(replace(cfg, lambda_id=lid), seed=profile.seed)
        if prev is not None:
            model.params = prev.params.copy()
        loss_cfg = LossConfig(lam=LAMBDAS[lid], qs=qs)
        e1 = profile.stage1_epochs if i == 0 else profile.warm_epochs
        e_sr = profile.sr_epochs if i == 0 else max(1, profile.sr_epochs // 2)
        runs = (
            TrainRun(1, e1, profile.batch_size, seed=profile.seed + lid),
            TrainRun(2, e_sr, profile.batch_size, profile.sr_learning_rate, seed=profile.seed + lid),
            TrainRun(3, e_sr, profile.batch_size, profile.sr_learning_rate, seed=profile.seed + lid),
        )
        for run in runs:
            log(f"lambda{lid} ({LAMBDAS[lid]}): stage {run.stage}, {run.epochs} epochs")
            _, trace = train_stage(model, run, data, loss_cfg, log=log)
            write_trace(trace, os.path.join(out_dir, f"trace_lambda{lid}_stage{run.stage}.csv"))
            # checkpoints are stored in f32; continue from exactly what is saved
            model.params.round_to_f32()
        save_model(model, out_dir, {"block_size": profile.block_size, "qs": qs})
        prev = model
    with open(os.path.join(out_dir, "profile.json"), "w") as fh:
        json.dump(asdict(profile), fh, indent=2)
    return {lid: load_model(out_dir, lid) for lid in lambda_ids}


def family_complete(out_dir):
    return os.path.isfile(os.path.join(out_dir, "profile.json")) and available_models(out_dir) == list(
        range(len(LAMBDAS))
    )


def load_family(out_dir):
    return {lid: load_model(out_dir, lid) for lid in available_models(out_dir)}


def load_or_train(out_dir, profile=None, log=print):
    if family_complete(out_dir):
        return load_family(out_dir)
    return train_family(out_dir, profile, log=log)

