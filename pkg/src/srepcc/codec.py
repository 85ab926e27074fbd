"""Block and cloud encode/decode pipelines, Top-k selection and configuration search."""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from . import metrics
from .bitstream import SF_CODES, Bitstream, BlockHeader, BlockRecord, FileHeader, parse_bitstream, serialize_bitstream
from .entropy import gaussian, octree
from .errors import ConfigError, DecodeError
from .models import LATENT_STRIDE
from .pointcloud import Block, PointCloud, block_bit_depth, check_sf, downsample_block, merge_blocks, partition_blocks
from .sparse import CoordSet, SparseTensor, prune_top_k, top_k_indices
from .training.losses import symbol_bits

RHO_GRID = tuple(50 + 5 * i for i in range(21))  # percent, 0.50 .. 1.50


def grid_k(n):
    """Candidate k values round(rho * n) over the rho grid, at least 1."""
    return [max(1, (2 * r * n + 100) // 200) for r in RHO_GRID]


def block_mse(ref, deg):
    """Symmetric (max of directions) point-to-point MSE."""
    d_rd = cKDTree(deg).query(ref)[0]
    d_dr = cKDTree(ref).query(deg)[0]
    return max(float(np.mean(d_rd ** 2)), float(np.mean(d_dr ** 2)))


def optimize_top_k(probs, cand_coords, reference):
    """k on the rho grid minimizing block MSE (maximizing PSNR D1); ties go to the smaller k.

    ``reference`` is an (n, 3) array in the candidates' frame.
    """
    ref = np.asarray(reference, dtype=np.float64).reshape(-1, 3)
    if len(ref) == 0:
        raise ValueError("reference block is empty")
    cand = np.asarray(cand_coords, dtype=np.float64).reshape(-1, 3)
    p = np.asarray(probs, dtype=np.float64).reshape(-1)
    order = np.lexsort((np.arange(len(p)), -p))
    ranked = cand[order]
    # candidate -> reference distances do not depend on k: prefix means
    d_dr = cKDTree(ref).query(ranked)[0] ** 2
    prefix = np.concatenate([[0.0], np.cumsum(d_dr)])
    best_k, best = None, np.inf
    for k in sorted(set(grid_k(len(ref)))):
        kk = min(k, len(ranked))
        d_rd = cKDTree(ranked[:kk]).query(ref)[0]
        mse = max(float(np.mean(d_rd ** 2)), prefix[kk] / kk)
        if mse < best:
            best_k, best = kk, mse
    return best_k


def hyper_scales_f32(model):
    return model.hyper_scales().value.reshape(-1).astype(np.float32)


def analyze(model, points, qs, scales):
    """Encoder analysis path: latents, quantized hyper latents, mu/sigma and residuals."""
    x = SparseTensor.from_points(points)
    y = model.analysis(x)
    z = model.hyper_analysis(y)
    z_q = np.floor(z.feats.value + 0.5).astype(np.int64)
    mu, sigma = hyper_params(model, z.cset, z_q, y.cset)
    r = gaussian.quantize_residuals(y.feats.value, mu, qs)
    return y.cset, z.cset, z_q, mu, sigma, r


def hyper_params(model, hyper_set, z_q, latent_set):
    z_hat = SparseTensor(hyper_set, np.asarray(z_q, dtype=np.float64))
    mu, sigma = model.hyper_synthesis(z_hat, latent_set)
    return mu.value, sigma.value


def synthesize(model, latent_set, y_hat, channel_mask=None):
    feats = np.asarray(y_hat, dtype=np.float64)
    if channel_mask is not None:
        feats = feats * channel_mask[None, :]
    return model.synthesis(SparseTensor(latent_set, feats))


def sr_candidates(model, sf, feats, probs, k_c, out_size):
    pruned = prune_top_k(feats, probs, k_c)
    cset, probs_s = model.sr_branch(sf, pruned, out_size)
    return cset.coords, probs_s.value.reshape(-1)


@dataclass
class BlockStats:
    n_points: int
    n_coded: int
    n_latent: int
    bits: int
    proxy_bits: float


def _reconstruct(model, sf, use_sr, feats, probs, k_c, k_s, block_size):
    p = probs.value.reshape(-1)
    if not use_sr:
        keep = top_k_indices(p, k_c)
        return feats.coords[keep] * sf
    coords, ps = sr_candidates(model, sf, feats, probs, k_c, block_size)
    return coords[top_k_indices(ps, k_s)]


def encode_block(block, model, sf=1, use_sr=False, qs=1.0, scales=None):
    """Returns (BlockRecord, reconstructed Block, BlockStats)."""
    sf = check_sf(sf)
    if use_sr and sf == 1:
        raise ConfigError("super-resolution needs a sampling factor of 2 or 4")
    if block.block_size // sf < LATENT_STRIDE:
        raise ConfigError(f"block size {block.block_size} too small for sampling factor {sf}")
    scales = hyper_scales_f32(model) if scales is None else np.asarray(scales, dtype=np.float32)
    if len(block) == 0:
        rec = BlockRecord(BlockHeader(block.origin, SF_CODES[sf], int(use_sr)))
        return rec, Block(block.origin, np.zeros((0, 3)), block.block_size), BlockStats(0, 0, 0, 0, 0.0)
    down = downsample_block(block, sf)
    latent_set, hyper_set, z_q, mu, sigma, r = analyze(model, down.local_points, qs, scales)
    extent = down.block_size // LATENT_STRIDE
    oct_bytes = octree.octree_encode(latent_set.coords // LATENT_STRIDE, extent)
    hyp_bytes = gaussian.encode_hyper(z_q, scales.astype(np.float64))
    lat_bytes = gaussian.encode_residuals(r, sigma)
    y_hat = gaussian.dequantize(r, mu, qs)
    feats, probs = synthesize(model, latent_set, y_hat)
    k_c = optimize_top_k(probs.value, feats.coords, down.local_points)
    k_s = 0
    if use_sr:
        coords, ps = sr_candidates(model, sf, feats, probs, k_c, block.block_size)
        k_s = optimize_top_k(ps, coords, block.local_points)
    recon = _reconstruct(model, sf, use_sr, feats, probs, k_c, k_s, block.block_size)
    header = BlockHeader(block.origin, SF_CODES[sf], int(use_sr), k_c, k_s, len(latent_set))
    rec = BlockRecord(header, oct_bytes, hyp_bytes, lat_bytes)
    proxy = eval_rate_bits(r, sigma, z_q, scales)
    bits = 8 * (len(oct_bytes) + len(hyp_bytes) + len(lat_bytes))
    stats = BlockStats(len(block), len(recon), len(latent_set), bits, proxy)
    return rec, Block(block.origin, recon, block.block_size), stats


def eval_rate_bits(r, sigma, z_q, scales):
    """Evaluation-mode rate estimate of the latent and hyper payloads."""
    return float(symbol_bits(r, sigma).sum() + symbol_bits(z_q, np.asarray(scales, dtype=np.float64)[None, :]).sum())


def decode_block(rec, model, block_size, qs, scales, channel_mask=None):
    h = rec.header
    sf = h.sf
    if h.n_latent == 0:
        return Block(h.origin, np.zeros((0, 3)), block_size)
    down_size = block_size // sf
    if down_size < LATENT_STRIDE:
        raise DecodeError("block size too small for the signalled sampling factor")
    scales = np.asarray(scales, dtype=np.float64)
    if len(scales) != model.cfg.hyper_channels:
        raise DecodeError("hyper scale count does not match the model")
    cells = octree.octree_decode(rec.octree, down_size // LATENT_STRIDE)
    if len(cells) != h.n_latent:
        raise DecodeError(f"octree yields {len(cells)} latent points, header says {h.n_latent}")
    latent_set = CoordSet(cells * LATENT_STRIDE, stride=LATENT_STRIDE, presorted=True)
    hyper_set = latent_set.downsampled(4)
    z_q = gaussian.decode_hyper(rec.hyper, scales, len(hyper_set))
    mu, sigma = hyper_params(model, hyper_set, z_q, latent_set)
    y_hat, _ = gaussian.decode_latents(rec.latent, mu, sigma, qs)
    feats, probs = synthesize(model, latent_set, y_hat, channel_mask)
    if h.k_c < 1 or (h.sr_flag and h.k_s < 1):
        raise DecodeError("invalid Top-k counts in block header")
    recon = _reconstruct(model, sf, bool(h.sr_flag), feats, probs, h.k_c, h.k_s, block_size)
    return Block(h.origin, recon, block_size)


# ---------------------------------------------------------------------------
# clouds


def _map(fn, items, threads):
    if threads and threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            return list(ex.map(fn, items))
    return [fn(it) for it in items]


@dataclass
class EncodeResult:
    data: bytes
    recon: PointCloud
    stats: list
    bpp: float


def coding_options(block_size, sfs=(1, 2, 4), srs=(False, True)):
    """Valid (sf, use_sr) pairs for a block size."""
    return [(sf, sr) for sf in sfs if block_size // sf >= LATENT_STRIDE for sr in srs if not (sr and sf == 1)]


def encode_block_adaptive(block, model, lambda_op, options, qs=1.0, scales=None, bit_depth=None):
    """encode_block with the (sf, use_sr) option minimizing 1 / PSNR_D1 + lambda_op * bpp on this block."""
    if not options:
        raise ConfigError("no valid coding option for this block size")
    best = None
    for sf, sr in options:
        out = encode_block(block, model, sf, sr, qs, scales)
        if len(block) == 0:
            return out
        d1 = metrics.psnr_d1(block.local_points, out[1].local_points, bit_depth or block_bit_depth(block.block_size))
        cost = 1.0 / d1 + lambda_op * out[2].bits / len(block)
        if best is None or cost < best[0]:
            best = (cost, out)
    return best[1]


def encode_cloud(pc, model, block_size=128, sf=1, use_sr=False, qs=1.0, threads=1, per_block=None, options=None):
    """Encode a whole cloud with one (sf, use_sr) setting.

    With ``per_block`` set to a lambda_op value, every block instead picks its own
    setting from ``options`` (default: all valid pairs); the decoder needs no hint.
    """
    if len(pc) == 0:
        raise ConfigError("cannot encode an empty cloud")
    scales = hyper_scales_f32(model)
    blocks = partition_blocks(pc, block_size)
    if any(v >= 1 << 16 for b in blocks for v in b.origin):
        raise ConfigError("block origin exceeds u16; use a larger block size")
    if per_block is None:
        results = _map(lambda b: encode_block(b, model, sf, use_sr, qs, scales), blocks, threads)
    else:
        opts = coding_options(block_size) if options is None else list(options)
        results = _map(
            lambda b: encode_block_adaptive(b, model, per_block, opts, qs, scales, pc.bit_depth), blocks, threads
        )
    header = FileHeader(pc.bit_depth, block_size, model.cfg.lambda_id, qs, scales)
    bs = Bitstream(header, [r[0] for r in results])
    data = serialize_bitstream(bs)
    recon = merge_blocks([r[1] for r in results], pc.bit_depth)
    return EncodeResult(data, recon, [r[2] for r in results], 8 * len(data) / len(pc))


def decode_cloud(data, model_source, threads=1, channel_mask=None):
    """``model_source`` is a CodingModel or a callable mapping model_id to one."""
    bs = parse_bitstream(data)
    h = bs.header
    model = model_source(h.model_id) if callable(model_source) else model_source
    if model.cfg.lambda_id != h.model_id and not callable(model_source):
        raise DecodeError(f"bitstream needs model {h.model_id}, got {model.cfg.lambda_id}")
    blocks = _map(
        lambda rec: decode_block(rec, model, h.block_size, h.qs, h.hyper_scales, channel_mask), bs.blocks, threads
    )
    return merge_blocks(blocks, h.bit_depth)


def select_coding_config(pc, models, lambda_op, sfs=(1, 2, 4), srs=(False, True), block_size=128, qs=1.0):
    """Exhaustive search minimizing 1 / PSNR_D1 + lambda_op * bpp.

    Returns ((model_id, sf, use_sr), table) with one row per evaluated option.
    """
    if not models:
        raise ConfigError("at least one model is required")
    rows = []
    for mid in sorted(models):
        for sf in sfs:
            if block_size // sf < LATENT_STRIDE:
                continue
            for sr in srs:
                if sr and sf == 1:
                    continue
                res = encode_cloud(pc, models[mid], block_size, sf, sr, qs)
                d1 = metrics.psnr_d1(pc, res.recon)
                rows.append(((mid, sf, sr), res.bpp, d1, 1.0 / d1 + lambda_op * res.bpp))
    best = min(rows, key=lambda r: r[3])
    return best[0], rows

