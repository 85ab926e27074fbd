"""Adam, spatial batching and the three training stages."""

import csv
import gc
import time

import numpy as np

from .. import autograd as ag
from ..codec import analyze, hyper_scales_f32, synthesize
from ..config import STAGE_SF, LossConfig, TrainRun
from ..entropy import gaussian
from ..errors import ConfigError
from ..pointcloud import downsample_block
from .. import morton
from ..sparse import CoordSet, SparseTensor, generated_set, prune_top_k
from .losses import focal_loss, max_focal_penalty, rate_proxy, rd_loss


class Adam:
    def __init__(self, params, lr=1e-3, b1=0.9, b2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.b1, self.b2, self.eps = b1, b2, eps
        self.t = 0
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            g = p.grad
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p.value = p.value - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        self.zero_grad()


def block_spacing(block_size):
    return max(4 * block_size, 256)


def _offsets(n, spacing):
    off = np.zeros((n, 3), dtype=np.int64)
    off[:, 0] = np.arange(n) * spacing
    return off


def candidate_labels(cand_set, gt_set):
    """Occupancy labels of the candidates and the number of missed true voxels."""
    key = ("labels", id(gt_set))
    hit = cand_set._cache.get(key)
    if hit is None or hit[0] is not gt_set:
        labels = gt_set.lookup(cand_set.coords) >= 0
        hit = (gt_set, labels, len(gt_set) - int(labels.sum()))
        cand_set._cache[key] = hit
    return hit[1], hit[2]


class Stage1Batch:
    def __init__(self, blocks):
        sizes = {b.block_size for b in blocks}
        if len(sizes) != 1:
            raise ConfigError("a batch must hold blocks of one size")
        spacing = block_spacing(sizes.pop())
        off = _offsets(len(blocks), spacing)
        coords = np.concatenate([b.local_points + off[i] for i, b in enumerate(blocks)])
        self.x = SparseTensor.from_points(coords)
        self.n_points = len(coords)


class SRBatch:
    def __init__(self, items, sf, block_size):
        """``items``: (pruned coords, pruned feats, original-resolution points) per block."""
        spacing = block_spacing(block_size // sf)
        off = _offsets(len(items), spacing)
        coords = np.concatenate([c + off[i] for i, (c, _, _) in enumerate(items)])
        feats = np.concatenate([f for _, f, _ in items])
        gt = np.concatenate([g + off[i] * sf for i, (_, _, g) in enumerate(items)])
        order = np.argsort(morton.encode(coords), kind="stable")
        self.pruned = SparseTensor(CoordSet(coords[order], presorted=True), feats[order])
        self.gt = CoordSet(gt)
        self.period = spacing * sf
        self.block_size = block_size
        self.sf = sf
        self.n_points = len(gt)


def stage1_loss(model, batch, loss_cfg, rng=None):
    """Rate-distortion loss of one batch; ``rng=None`` selects evaluation mode."""
    qs = loss_cfg.qs
    y = model.analysis(batch.x)
    z = model.hyper_analysis(y)
    if rng is not None:
        z_t = ag.noise_add(z.feats, rng.uniform(-0.5, 0.5, z.feats.shape))
    else:
        z_t = ag.Var(np.floor(z.feats.value + 0.5))
    mu, sigma = model.hyper_synthesis(z.with_feats(z_t), y.cset)
    scaled = ag.mul(y.feats, 1.0 / qs)
    if rng is not None:
        v = ag.add(ag.noise_add(scaled, rng.uniform(-0.5, 0.5, scaled.shape)), ag.neg(mu))
    else:
        v = ag.Var(gaussian.quantize_residuals(y.feats.value, mu.value, qs).astype(np.float64))
    rate = ag.add(rate_proxy(v, sigma), rate_proxy(z_t, model.hyper_scales()))
    y_t = ag.mul(ag.add(v, mu), qs)
    _, probs = model.synthesis(y.with_feats(y_t))
    cand = model_last_set(model, y.cset)
    labels, missed = candidate_labels(cand, batch.x.cset)
    dist = focal_loss(probs, labels, loss_cfg.focal_alpha, loss_cfg.focal_gamma, missed)
    loss = rd_loss(dist, rate, loss_cfg.lam, batch.n_points)
    return loss, float(dist.value), float(rate.value) / batch.n_points


def model_last_set(model, latent_set):
    """Candidate set produced by the Synthesis up-sampling chain (cached on the latent set)."""
    s = latent_set
    for item in model.specs["synthesis"].items:
        if getattr(item, "kind", None) == "GTSpConv":
            s = generated_set(s, item.kernel, item.stride)
    return s


def sr_loss(model, batch, loss_cfg):
    """(loss, candidate part, 0); the candidate part leaves out the constant penalty of missed voxels."""
    cset, probs = model.sr_branch(batch.sf, batch.pruned, batch.block_size, period=batch.period)
    labels, missed = candidate_labels(cset, batch.gt)
    dist = focal_loss(probs, labels, loss_cfg.focal_alpha, loss_cfg.focal_gamma, missed)
    floor = missed * max_focal_penalty(loss_cfg.focal_alpha, loss_cfg.focal_gamma) / (len(cset) + missed)
    return dist, float(dist.value) - floor, 0.0


def precompute_sr_items(model, blocks, sf, qs):
    """Frozen coding-model features pruned to k_C = |downsampled block|."""
    scales = hyper_scales_f32(model)
    items = []
    for b in blocks:
        down = downsample_block(b, sf)
        latent_set, _, _, mu, _, r = analyze(model, down.local_points, qs, scales)
        feats, probs = synthesize(model, latent_set, gaussian.dequantize(r, mu, qs))
        pruned = prune_top_k(feats, probs, len(down))
        items.append((pruned.coords.copy(), pruned.feats.value.copy(), b.local_points))
    return items


def make_batches(items, batch_size, rng):
    order = rng.permutation(len(items))
    return [[items[i] for i in order[s:s + batch_size]] for s in range(0, len(order), batch_size)]


def _set_trainable(model, subnets):
    prefixes = tuple(s + "." for s in subnets)
    params = []
    for k, v in model.params.items():
        v.requires_grad = k.startswith(prefixes)
        v.grad = None
        if v.requires_grad:
            params.append(v)
    return params


def train_stage(model, run, dataset, loss_cfg=None, log=None):
    """Train the stage's sub-networks in place; returns (ParameterStore, per-epoch trace)."""
    if not dataset:
        raise ConfigError("training dataset is empty")
    loss_cfg = loss_cfg or LossConfig(lam=model.cfg.lam)
    rng = np.random.default_rng(run.seed)
    params = _set_trainable(model, run.trainable)
    if run.stage == 1:
        groups = []
        for sf in run.stage1_sfs:
            groups.append([downsample_block(b, sf) for b in dataset if b.block_size // sf >= 8])
        batches = [Stage1Batch(g) for grp in groups for g in make_batches(grp, run.batch_size, rng)]
        step = lambda b: stage1_loss(model, b, loss_cfg, rng)  # noqa: E731
    else:
        sf = STAGE_SF[run.stage]
        items = precompute_sr_items(model, dataset, sf, loss_cfg.qs)
        bs = dataset[0].block_size
        batches = [SRBatch(g, sf, bs) for g in make_batches(items, run.batch_size, rng)]
        step = lambda b: sr_loss(model, b, loss_cfg)  # noqa: E731
    opt = Adam(params, run.learning_rate)
    trace = []
    best, stale = np.inf, 0
    for epoch in range(1, run.epochs + 1):
        t0 = time.perf_counter()
        tot = np.zeros(3)
        for bi in rng.permutation(len(batches)):
            with ag.Tape() as tape:
                loss, d, r = step(batches[bi])
                tape.backward(loss)
            opt.step()
            tot += (float(loss.value), d, r)
        loss_m, d_m, r_m = tot / len(batches)
        trace.append({"epoch": epoch, "D": d_m, "R_bits_per_point": r_m, "loss": loss_m, "lr": opt.lr})
        if log:
            log(f"stage {run.stage} epoch {epoch}: loss {loss_m:.5f} D {d_m:.5f} R {r_m:.4f} bpp "
                f"lr {opt.lr:.2e} ({time.perf_counter() - t0:.1f}s)")
        # SR losses carry a large parameter-independent miss penalty; watch only the part that can move
        monitor = loss_m if run.stage == 1 else d_m
        if monitor < best * (1 - 1e-3):
            best, stale = monitor, 0
        else:
            stale += 1
            if stale >= run.patience:
                opt.lr *= 0.5
                stale = 0
    for v in model.params.entries.values():
        v.requires_grad = True
        v.grad = None
    # coordinate-set caches form reference cycles; free them before the next stage
    gc.collect()
    return model.params, trace


def write_trace(trace, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "D", "R_bits_per_point", "loss"])
        for row in trace:
            w.writerow([row["epoch"], f"{row['D']:.10g}", f"{row['R_bits_per_point']:.10g}", f"{row['loss']:.10g}"])


def stage_run(stage, epochs, batch_size=8, seed=0, lr=1e-3, **kw):
    return TrainRun(stage=stage, epochs=epochs, batch_size=batch_size, learning_rate=lr, seed=seed, **kw)
