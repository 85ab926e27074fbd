"""Focal-loss distortion, Gaussian rate proxy and the rate-distortion objective."""

import numpy as np
from scipy.special import ndtr

from .. import autograd as ag

PROB_CLAMP = 1e-7
LIKELIHOOD_FLOOR = 1e-9
SIGMA_FLOOR = 1e-6
_LN2 = np.log(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def _focal_terms(p, labels, alpha, gamma):
    p = np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
    pt = np.where(labels, p, 1.0 - p)
    at = np.where(labels, alpha, 1.0 - alpha)
    return p, pt, at


def max_focal_penalty(alpha=0.7, gamma=2.0):
    """Focal penalty of a true voxel predicted at the lowest clamped probability."""
    return float(alpha * (1.0 - PROB_CLAMP) ** gamma * -np.log(PROB_CLAMP))


def focal_loss(probs, labels, alpha=0.7, gamma=2.0, missed=0):
    """Mean of -a_t (1 - p_t)^g log p_t over the candidates.

    ``missed`` true voxels outside the candidate set each add the maximal
    penalty; the mean is then taken over candidates plus misses.
    """
    probs = ag.as_var(probs)
    raw = probs.value.reshape(-1)
    labels = np.asarray(labels, dtype=bool).reshape(-1)
    p, pt, at = _focal_terms(raw, labels, alpha, gamma)
    logpt = np.log(pt)
    terms = -at * (1.0 - pt) ** gamma * logpt
    count = len(raw) + int(missed)
    if count == 0:
        return ag.Var(0.0)
    value = (terms.sum() + missed * max_focal_penalty(alpha, gamma)) / count
    inside = (raw > PROB_CLAMP) & (raw < 1.0 - PROB_CLAMP)
    # d term / d pt, then d pt / d p = +-1
    dpt = -at * (1.0 - pt) ** gamma / pt
    if gamma:
        dpt = dpt + at * gamma * (1.0 - pt) ** (gamma - 1.0) * logpt
    dp = np.where(labels, dpt, -dpt) * inside / count
    shape = probs.shape
    return ag.record(np.asarray(value), (probs,), lambda g: (dp.reshape(shape) * g,))


def bce(probs, labels):
    p = np.clip(np.asarray(probs, dtype=np.float64).reshape(-1), PROB_CLAMP, 1.0 - PROB_CLAMP)
    y = np.asarray(labels, dtype=bool).reshape(-1)
    return float(np.mean(-np.where(y, np.log(p), np.log(1.0 - p))))


def symbol_bits(v, sigma):
    """-log2 of the N(0, sigma) mass on [v - 1/2, v + 1/2] (numpy, no tape)."""
    a = np.abs(np.asarray(v, dtype=np.float64))
    s = np.maximum(np.asarray(sigma, dtype=np.float64), SIGMA_FLOOR)
    lik = ndtr((0.5 - a) / s) - ndtr((-0.5 - a) / s)
    return -np.log2(np.maximum(lik, LIKELIHOOD_FLOOR))


def rate_proxy(v, sigma):
    """Total bits of the (noisy or rounded) mean-removed values ``v`` under N(0, sigma).

    ``v`` and ``sigma`` are Vars broadcastable to a common shape; the
    likelihood is floored at 1e-9 (zero gradient below the floor).
    """
    v, sigma = ag.as_var(v), ag.as_var(sigma)
    vv = v.value
    s = np.maximum(sigma.value, SIGMA_FLOOR)
    a = np.abs(vv)
    hi = (0.5 - a) / s
    lo = (-0.5 - a) / s
    lik = ndtr(hi) - ndtr(lo)
    live = lik > LIKELIHOOD_FLOOR
    bits = -np.log2(np.where(live, lik, LIKELIHOOD_FLOOR))
    phi_hi = np.exp(-0.5 * hi * hi) * _INV_SQRT_2PI
    phi_lo = np.exp(-0.5 * lo * lo) * _INV_SQRT_2PI
    coef = np.where(live, -1.0 / (np.maximum(lik, LIKELIHOOD_FLOOR) * _LN2), 0.0)
    dlik_da = (phi_lo - phi_hi) / s
    dlik_ds = (-hi * phi_hi + lo * phi_lo) / s * (sigma.value > SIGMA_FLOOR)
    sv, ss = v.shape, sigma.shape

    def vjp(g):
        gv = coef * dlik_da * np.sign(vv) * g
        gs = coef * dlik_ds * g
        return ag._unbroadcast(gv, sv), ag._unbroadcast(gs, ss)

    return ag.record(np.asarray(bits.sum()), (v, sigma), vjp)


def rd_loss(distortion, rate_bits, lam, num_points=1):
    """distortion + lam * rate_bits / num_points."""
    d = ag.as_var(distortion)
    r = ag.as_var(rate_bits)
    return ag.add(d, ag.mul(r, lam / max(int(num_points), 1)))
