"""Gaussian-conditional coding of quantized latents and hyper latents.

Latents are coded as mean-removed residuals r = round(y / qs - mu), so the
probability table only depends on the scale: P(r) is the mass of N(0, sigma)
on [r - 1/2, r + 1/2].  Scales are clamped to [0.04, 256] and snapped to one
of ``NUM_LEVELS`` log-spaced levels; each level owns a 16-bit table over the
window [-255, 255] plus an escape symbol (every bin >= 1).  Escaped residuals
follow as a zigzag-coded 32-bit value in two raw 16-bit symbols.
"""

from functools import lru_cache

import numpy as np
from scipy.special import ndtr

from .rangecoder import RangeDecoder, RangeEncoder, StaticModel

SCALE_MIN = 0.04
SCALE_MAX = 256.0
NUM_LEVELS = 256
WINDOW = 255
PRECISION = 16
ESCAPE = 2 * WINDOW + 1
_LOG_MIN = np.log(SCALE_MIN)
_LOG_STEP = (np.log(SCALE_MAX) - np.log(SCALE_MIN)) / (NUM_LEVELS - 1)


def scale_levels():
    return np.exp(_LOG_MIN + _LOG_STEP * np.arange(NUM_LEVELS))


def scale_index(sigma):
    s = np.clip(np.asarray(sigma, dtype=np.float64), SCALE_MIN, SCALE_MAX)
    idx = np.rint((np.log(s) - _LOG_MIN) / _LOG_STEP).astype(np.int64)
    return np.clip(idx, 0, NUM_LEVELS - 1)


def quantized_pmf(sigma):
    """Integer frequencies (sum 2**16) for residuals -W..W followed by the escape bin."""
    r = np.arange(-WINDOW, WINDOW + 1, dtype=np.float64)
    upper = ndtr((-np.abs(r) + 0.5) / sigma)
    lower = ndtr((-np.abs(r) - 0.5) / sigma)
    p = np.append(upper - lower, 2.0 * ndtr(-(WINDOW + 0.5) / sigma))
    total = 1 << PRECISION
    freq = 1 + np.floor(p * (total - len(p))).astype(np.int64)
    freq[np.argmax(p)] += total - int(freq.sum())
    return freq


@lru_cache(maxsize=NUM_LEVELS)
def _model(level):
    return StaticModel(quantized_pmf(scale_levels()[level]))


def table(sigma):
    return _model(int(scale_index(sigma)))


def _zigzag(v):
    return (v << 1) if v >= 0 else ((-v << 1) - 1)


def _unzigzag(u):
    return (u >> 1) if not (u & 1) else -((u + 1) >> 1)


def _encode_values(enc, values, levels):
    for v, lvl in zip(values, levels):
        m = _model(lvl)
        if -WINDOW <= v <= WINDOW:
            m.encode(enc, v + WINDOW)
        else:
            m.encode(enc, ESCAPE)
            u = _zigzag(v)
            if u >= 1 << 32:
                raise OverflowError("residual magnitude exceeds the escape code range")
            enc.encode_uniform(u >> 16)
            enc.encode_uniform(u & 0xFFFF)


def _decode_values(dec, levels):
    out = []
    for lvl in levels:
        s = _model(lvl).decode(dec)
        if s == ESCAPE:
            u = (dec.decode_uniform() << 16) | dec.decode_uniform()
            out.append(_unzigzag(u))
        else:
            out.append(s - WINDOW)
    return out


def _channel_major(a):
    return np.asarray(a).T.reshape(-1)


def encode_residuals(residuals, sigma):
    """Range-code an (n, C) integer array; scales broadcast to (n, C).

    Element order is channel-major over rows in their given (Morton) order.
    """
    r = np.asarray(residuals, dtype=np.int64)
    s = np.broadcast_to(np.asarray(sigma, dtype=np.float64), r.shape)
    enc = RangeEncoder()
    _encode_values(enc, _channel_major(r).tolist(), _channel_major(scale_index(s)).tolist())
    return enc.finish()


def decode_residuals(data, sigma, shape):
    n, c = shape
    s = np.broadcast_to(np.asarray(sigma, dtype=np.float64), (n, c))
    dec = RangeDecoder(data)
    vals = _decode_values(dec, _channel_major(scale_index(s)).tolist())
    return np.asarray(vals, dtype=np.int64).reshape(c, n).T.copy()


def quantize_residuals(y, mu, qs=1.0):
    return np.floor(np.asarray(y) / qs - np.asarray(mu) + 0.5).astype(np.int64)


def dequantize(residuals, mu, qs=1.0):
    return (np.asarray(residuals, dtype=np.float64) + mu) * qs


def encode_latents(y, mu, sigma, qs=1.0):
    """Returns (payload, residuals)."""
    r = quantize_residuals(y, mu, qs)
    return encode_residuals(r, sigma), r


def decode_latents(data, mu, sigma, qs=1.0):
    mu = np.asarray(mu, dtype=np.float64)
    r = decode_residuals(data, sigma, mu.shape)
    return dequantize(r, mu, qs), r


def encode_hyper(z_q, channel_scales):
    return encode_residuals(z_q, np.asarray(channel_scales)[None, :])


def decode_hyper(data, channel_scales, n):
    scales = np.asarray(channel_scales)
    return decode_residuals(data, scales[None, :], (n, len(scales)))


def model_bits(residuals, sigma):
    """Σ -log2 P(r) under the quantized tables actually used for coding."""
    r = np.asarray(residuals, dtype=np.int64)
    s = np.broadcast_to(np.asarray(sigma, dtype=np.float64), r.shape)
    bits = 0.0
    for v, lvl in zip(r.ravel().tolist(), scale_index(s).ravel().tolist()):
        m = _model(lvl)
        sym = v + WINDOW if -WINDOW <= v <= WINDOW else ESCAPE
        bits -= np.log2(m.freqs[sym] / m.total)
        if sym == ESCAPE:
            bits += 32
    return bits
