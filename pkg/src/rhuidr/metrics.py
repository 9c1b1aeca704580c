"""Evaluation functionals for abundances and reconstructed images."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
from scipy.ndimage import gaussian_filter

from .core import HSCube, as_grid

__all__ = [
    "MetricReport",
    "PSNR_CAP_DB",
    "sre",
    "rmse",
    "ps",
    "mpsnr",
    "ssim",
    "mssim",
    "sad",
    "report",
]

PSNR_CAP_DB = 300.0  # per-band PSNR of an exact band
SSIM_SIGMA = 1.5
SSIM_RADIUS = 5  # 11 x 11 window
SSIM_K1, SSIM_K2 = 0.01, 0.03


@dataclass
class MetricReport:
    sre_db: Optional[float] = None
    rmse: Optional[float] = None
    ps: Optional[float] = None
    mpsnr_db: Optional[float] = None
    mssim: Optional[float] = None

    def as_record(self) -> str:
        """Single-line ``key=value`` rendering; absent metrics are skipped."""
        return " ".join(f"{k}={float(v)!r}" for k, v in asdict(self).items() if v is not None)


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def sre(A_true, A_est) -> float:
    """Signal reconstruction error in dB; ``inf`` for an exact estimate."""
    A_true, A_est = _pair(A_true, A_est)
    sig = float(np.sum(A_true ** 2))
    if sig == 0.0:
        raise ValueError("SRE undefined for an all-zero reference")
    err = float(np.sum((A_true - A_est) ** 2))
    if err == 0.0:
        return float("inf")
    return 10.0 * np.log10(sig / err)


def rmse(A_true, A_est) -> float:
    A_true, A_est = _pair(A_true, A_est)
    return float(np.sqrt(np.mean((A_true - A_est) ** 2)))


def ps(A_true, A_est, threshold: float = 3.16) -> float:
    """Fraction of pixels whose relative squared error is at most ``threshold``.

    Pixels whose true abundance vector is zero are left out of both the
    count and the denominator.
    """
    A_true, A_est = _pair(A_true, A_est)
    ref = np.sum(A_true ** 2, axis=0)
    err = np.sum((A_true - A_est) ** 2, axis=0)
    keep = ref > 0
    if not keep.any():
        raise ValueError("Ps undefined: every reference pixel is zero")
    return float(np.mean(err[keep] <= threshold * ref[keep]))


def _band_psnr(t, e):
    err = float(np.sum((t - e) ** 2))
    if err == 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * np.log10(t.size / err))


def mpsnr(H_true, H_est) -> float:
    """Mean over bands of ``10 log10(n / ||h_i - h_i'||^2)`` (peak 1).

    Exact bands count as ``PSNR_CAP_DB``.
    """
    t, e = _pair(_data(H_true), _data(H_est))
    return float(np.mean([_band_psnr(t[i], e[i]) for i in range(t.shape[0])]))


def _data(H):
    return H.data if isinstance(H, HSCube) else H


def _crop(dim):
    return SSIM_RADIUS if dim > 2 * SSIM_RADIUS else 0


def ssim(x, y, data_range: float = 1.0) -> float:
    """Gaussian-window SSIM of two 2-D images.

    Local statistics use an 11 x 11 Gaussian window (sigma 1.5) with
    population covariances; the map is averaged over pixels at least 5 away
    from the border (the whole image along axes of length <= 10).
    """
    x, y = _pair(x, y)
    trunc = SSIM_RADIUS / SSIM_SIGMA
    filt = lambda z: gaussian_filter(z, SSIM_SIGMA, mode="reflect", truncate=trunc)
    mx, my = filt(x), filt(y)
    vx = filt(x * x) - mx * mx
    vy = filt(y * y) - my * my
    cxy = filt(x * y) - mx * my
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    smap = ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
    r0, r1 = _crop(x.shape[0]), _crop(x.shape[1])
    return float(smap[r0:x.shape[0] - r0, r1:x.shape[1] - r1].mean())


def mssim(H_true: HSCube, H_est: HSCube) -> float:
    """Mean over bands of the single-band SSIM on the ``n1 x n2`` grid."""
    if H_true.dims != H_est.dims:
        raise ValueError(f"dims mismatch: {H_true.dims} vs {H_est.dims}")
    d = H_true.dims
    return float(np.mean([ssim(as_grid(H_true.data[k], d), as_grid(H_est.data[k], d))
                          for k in range(d.l)]))


def sad(s1, s2) -> float:
    """Spectral angle in radians."""
    s1, s2 = _pair(s1, s2)
    den = np.linalg.norm(s1) * np.linalg.norm(s2)
    if den == 0.0:
        raise ValueError("spectral angle undefined for a zero spectrum")
    return float(np.arccos(np.clip(np.dot(s1, s2) / den, -1.0, 1.0)))


def report(A_true=None, A_est=None, H_true: Optional[HSCube] = None,
           H_est: Optional[HSCube] = None) -> MetricReport:
    out = MetricReport()
    if A_true is not None and A_est is not None:
        out.sre_db = sre(A_true, A_est)
        out.rmse = rmse(A_true, A_est)
        out.ps = ps(A_true, A_est)
    if H_true is not None and H_est is not None:
        out.mpsnr_db = mpsnr(H_true, H_est)
        out.mssim = mssim(H_true, H_est)
    return out
