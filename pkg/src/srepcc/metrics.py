"""Geometry distortion (PSNR D1/D2), rate accounting and Bjontegaard deltas."""

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.spatial import cKDTree

from .errors import MetricError

PSNR_CAP = 999.99
NORMAL_NEIGHBORS = 12


def _points(pc):
    pts = pc.points if hasattr(pc, "points") else pc
    return np.asarray(pts, dtype=np.float64).reshape(-1, 3)


def _peak(ref, bit_depth):
    if bit_depth is None:
        bit_depth = getattr(ref, "bit_depth", None)
    if bit_depth is None:
        raise MetricError("bit depth required for PSNR")
    return float((1 << int(bit_depth)) - 1)


def psnr_from_mse(mse, peak):
    if mse <= 0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * np.log10(3.0 * peak * peak / mse))


def d1_mse(ref, deg):
    a, b = _points(ref), _points(deg)
    if len(a) == 0 or len(b) == 0:
        raise MetricError("PSNR needs two non-empty clouds")
    ab = cKDTree(b).query(a)[0]
    ba = cKDTree(a).query(b)[0]
    return max(float(np.mean(ab ** 2)), float(np.mean(ba ** 2)))


def psnr_d1(ref, deg, bit_depth=None):
    """Point-to-point PSNR with peak 2^bit_depth - 1 (symmetric)."""
    return psnr_from_mse(d1_mse(ref, deg), _peak(ref, bit_depth))


def estimate_normals(points, k=NORMAL_NEIGHBORS):
    """Unit normals by PCA over k nearest neighbours (the point included).

    Rows are NaN where the neighbourhood has rank < 2.
    """
    pts = _points(points)
    if len(pts) < k:
        raise MetricError(f"normal estimation needs at least {k} points")
    _, idx = cKDTree(pts).query(pts, k=k)
    nb = pts[idx]
    centred = nb - nb.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", centred, centred) / k
    w, v = np.linalg.eigh(cov)
    normals = v[:, :, 0]
    rank = (w > 1e-9 * np.maximum(w[:, -1:], 1e-300)).sum(axis=1)
    normals[rank < 2] = np.nan
    return normals


def _plane_errors(disp, normals):
    proj = np.einsum("ij,ij->i", disp, np.nan_to_num(normals)) ** 2
    # degenerate neighbourhoods fall back to the displacement direction
    bad = np.isnan(normals[:, 0])
    proj[bad] = np.einsum("ij,ij->i", disp[bad], disp[bad])
    return proj


def d2_mse(ref, deg, normals=None):
    a, b = _points(ref), _points(deg)
    if len(a) == 0 or len(b) == 0:
        raise MetricError("PSNR needs two non-empty clouds")
    if normals is None:
        normals = estimate_normals(a)
    _, j = cKDTree(b).query(a)
    e_ab = _plane_errors(b[j] - a, normals)
    _, i = cKDTree(a).query(b)
    e_ba = _plane_errors(b - a[i], normals[i])
    return max(float(e_ab.mean()), float(e_ba.mean()))


def psnr_d2(ref, deg, bit_depth=None, normals=None):
    """Point-to-plane PSNR; normals are estimated on the reference."""
    return psnr_from_mse(d2_mse(ref, deg, normals), _peak(ref, bit_depth))


# ---------------------------------------------------------------------------
# rate-distortion curves


@dataclass(frozen=True)
class RDPoint:
    bpp: float
    psnr_d1: float
    psnr_d2: float = float("nan")


def bits_per_point(total_bits, n_points):
    if n_points <= 0:
        raise MetricError("bpp needs a non-empty original cloud")
    return total_bits / n_points


def _curve(points, which):
    pts = sorted(points, key=lambda p: p.bpp)
    if len(pts) < 4:
        raise MetricError("a rate-distortion curve needs at least 4 points")
    rate = np.array([p.bpp for p in pts], dtype=np.float64)
    if np.any(rate <= 0) or np.any(np.diff(rate) <= 0):
        raise MetricError("bpp values must be positive and strictly increasing")
    q = np.array([getattr(p, which) for p in pts], dtype=np.float64)
    if not np.all(np.isfinite(q)):
        raise MetricError("PSNR values must be finite")
    return np.log10(rate), q


def _mean_over(c, lo, hi):
    integ = P.polyint(c)
    return (P.polyval(hi, integ) - P.polyval(lo, integ)) / (hi - lo)


def bd_metrics(test, ref, which="psnr_d1"):
    """(BD-Rate in %, BD-PSNR in dB) of ``test`` relative to ``ref``; cubic fits."""
    lr_t, q_t = _curve(test, which)
    lr_r, q_r = _curve(ref, which)
    lo, hi = max(q_t.min(), q_r.min()), min(q_t.max(), q_r.max())
    if not hi > lo:
        raise MetricError("the curves' quality ranges do not overlap")
    d_log = _mean_over(P.polyfit(q_t, lr_t, 3), lo, hi) - _mean_over(P.polyfit(q_r, lr_r, 3), lo, hi)
    rlo, rhi = max(lr_t.min(), lr_r.min()), min(lr_t.max(), lr_r.max())
    if not rhi > rlo:
        raise MetricError("the curves' rate ranges do not overlap")
    d_q = _mean_over(P.polyfit(lr_t, q_t, 3), rlo, rhi) - _mean_over(P.polyfit(lr_r, q_r, 3), rlo, rhi)
    return 100.0 * (10.0 ** d_log - 1.0), float(d_q)
