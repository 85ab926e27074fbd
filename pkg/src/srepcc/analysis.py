"""Latent channel-energy experiment: decode with only the N highest-variance channels."""

import numpy as np

from . import codec, metrics
from .codec import hyper_params, hyper_scales_f32, synthesize
from .entropy import gaussian, octree
from .models import LATENT_STRIDE
from .pointcloud import Block, block_bit_depth
from .sparse import CoordSet


def _decoded_latents(rec, model, block_size, qs, scales):
    """Decoder-side (latent set, y_hat) of one block record."""
    h = rec.header
    down = block_size // h.sf
    cells = octree.octree_decode(rec.octree, down // LATENT_STRIDE)
    latent_set = CoordSet(cells * LATENT_STRIDE, stride=LATENT_STRIDE, presorted=True)
    z_q = gaussian.decode_hyper(rec.hyper, scales, len(latent_set.downsampled(4)))
    mu, sigma = hyper_params(model, latent_set.downsampled(4), z_q, latent_set)
    y_hat, _ = gaussian.decode_latents(rec.latent, mu, sigma, qs)
    return latent_set, y_hat


def encode_dataset(model, blocks, qs=1.0):
    """[(block, record, latent set, y_hat)] for SF=1 coding of every non-empty block."""
    scales = hyper_scales_f32(model)
    out = []
    for b in blocks:
        if len(b) == 0:
            continue
        rec, _, _ = codec.encode_block(b, model, 1, False, qs, scales)
        latent_set, y_hat = _decoded_latents(rec, model, b.block_size, qs, scales.astype(np.float64))
        out.append((b, rec, latent_set, y_hat))
    return out


def channel_variances(model, blocks, qs=1.0, encoded=None):
    """Per-channel variance of the decoded latents, pooled over all occupied positions."""
    encoded = encode_dataset(model, blocks, qs) if encoded is None else encoded
    if not encoded:
        raise ValueError("channel analysis needs a non-empty dataset")
    return np.concatenate([e[3] for e in encoded]).var(axis=0)


def channel_mask(variances, n):
    """0/1 mask keeping the ``n`` highest-variance channels (``n`` clamped to the channel count)."""
    c = len(variances)
    n = int(min(max(n, 0), c))
    mask = np.zeros(c)
    mask[np.argsort(-np.asarray(variances), kind="stable")[:n]] = 1.0
    return mask


def masked_reconstruction(model, item, mask):
    """SF=1 decode of one encoded block with the channel mask applied before Synthesis."""
    b, rec, latent_set, y_hat = item
    feats, probs = synthesize(model, latent_set, y_hat, mask)
    pts = codec._reconstruct(model, 1, False, feats, probs, rec.header.k_c, 0, b.block_size)
    return Block(b.origin, pts, b.block_size)


def channel_variance_analysis(model, blocks, ns, qs=1.0, variances=None, encoded=None):
    """[(N, mean PSNR D1, mean PSNR D2)] with all but the top-N latent channels zeroed."""
    encoded = encode_dataset(model, blocks, qs) if encoded is None else encoded
    var = channel_variances(model, blocks, qs, encoded) if variances is None else variances
    curve = []
    for n in ns:
        mask = channel_mask(var, n)
        d1, d2 = [], []
        for item in encoded:
            b = item[0]
            recon = masked_reconstruction(model, item, mask).local_points
            bd = block_bit_depth(b.block_size)
            d1.append(metrics.psnr_d1(b.local_points, recon, bd))
            d2.append(metrics.psnr_d2(b.local_points, recon, bd))
        curve.append((int(n), float(np.mean(d1)), float(np.mean(d2))))
    return curve


def saturation_point(curve, fraction=0.99):
    """Smallest N whose D1 quality reaches ``fraction`` of the curve maximum."""
    top = max(q for _, q, _ in curve)
    return min(n for n, q, _ in curve if q >= fraction * top)
