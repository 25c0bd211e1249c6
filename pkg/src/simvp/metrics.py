"""Evaluation metrics: MSE, MAE, SSIM, PSNR over predicted vs ground-truth
frame sequences.

Score conventions
-----------------
MSE and MAE follow the per-frame-sum convention common in video-prediction
reporting: mean over the batch of the error summed over (T, C, H, W) and
divided by H*W. Equivalently, per-pixel mean error times T*C. This is the
scaling that puts two-digit 64x64 scores in the tens; it is documented here
because papers rarely write the formula, so treat cross-paper comparisons
with care.

SSIM uses the original 11x11 Gaussian window (sigma 1.5), K1=0.01, K2=0.03,
dynamic range 1.0, per channel, averaged over channels/frames/batch. Frames
smaller than the window fall back to a single global window and the report
flags it. PSNR is 10*log10(1 / per-pixel MSE), capped at 100 dB for exact
matches.

Predictions are clamped to [0,1] before any metric is computed.
"""

import io
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigurationError

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
PSNR_CAP_DB = 100.0

CSV_HEADER = "step,split,mse,mae,ssim,psnr"


@dataclass
class MetricReport:
    mse: float
    mae: float
    ssim: float
    psnr: float
    per_frame: dict | None = None
    ssim_global_fallback: bool = False

    def csv_row(self, step, split):
        return f"{step},{split},{self.mse:.6f},{self.mae:.6f},{self.ssim:.6f},{self.psnr:.6f}"


def _check_pair(pred, target):
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ConfigurationError(f"metric shape mismatch: {pred.shape} vs {target.shape}")
    return np.clip(pred, 0.0, 1.0), target


def mse_metric(pred, target):
    """Batch mean of the per-sequence squared error summed over (T,C), with
    the per-pixel (H,W) mean. See module docstring for the convention."""
    pred, target = _check_pair(pred, target)
    sq = (pred - target) ** 2
    return float(sq.sum(axis=(1, 2, 3, 4)).mean() / (sq.shape[3] * sq.shape[4]))


def mae_metric(pred, target):
    pred, target = _check_pair(pred, target)
    ab = np.abs(pred - target)
    return float(ab.sum(axis=(1, 2, 3, 4)).mean() / (ab.shape[3] * ab.shape[4]))


def _gaussian_window(size, sigma):
    ax = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(ax ** 2) / (2.0 * sigma ** 2))
    w = np.outer(g, g)
    return w / w.sum()


_WINDOW = _gaussian_window(SSIM_WINDOW, SSIM_SIGMA)


def _ssim_channel(a, b):
    """SSIM mean over valid window positions of one (H,W) channel pair."""
    H, W = a.shape
    c1 = SSIM_K1 ** 2
    c2 = SSIM_K2 ** 2
    if H < SSIM_WINDOW or W < SSIM_WINDOW:
        # global single-window statistics
        mu_a, mu_b = a.mean(), b.mean()
        va, vb = a.var(), b.var()
        cov = ((a - mu_a) * (b - mu_b)).mean()
        num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
        den = (mu_a ** 2 + mu_b ** 2 + c1) * (va + vb + c2)
        return num / den, True

    def filt(x):
        win = sliding_window_view(x, (SSIM_WINDOW, SSIM_WINDOW))
        return np.tensordot(win, _WINDOW, axes=([2, 3], [0, 1]))

    mu_a, mu_b = filt(a), filt(b)
    va = filt(a * a) - mu_a ** 2
    vb = filt(b * b) - mu_b ** 2
    cov = filt(a * b) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a ** 2 + mu_b ** 2 + c1) * (va + vb + c2)
    return float((num / den).mean()), False


def ssim_frame(pred_frame, target_frame):
    """Windowed SSIM of one (C,H,W) frame pair, averaged over channels."""
    pred_frame = np.clip(np.asarray(pred_frame, dtype=np.float64), 0.0, 1.0)
    target_frame = np.asarray(target_frame, dtype=np.float64)
    if pred_frame.shape != target_frame.shape or pred_frame.ndim != 3:
        raise ConfigurationError("ssim_frame expects two (C,H,W) frames of equal shape")
    vals, fallback = [], False
    for c in range(pred_frame.shape[0]):
        v, fb = _ssim_channel(pred_frame[c], target_frame[c])
        vals.append(v)
        fallback |= fb
    return float(np.mean(vals)), fallback


def psnr_metric(pred, target):
    """10*log10(1 / per-pixel MSE) in dB, capped for identical inputs."""
    pred, target = _check_pair(pred, target)
    mse = ((pred - target) ** 2).mean()
    if mse <= 0:
        return PSNR_CAP_DB
    return float(min(10.0 * np.log10(1.0 / mse), PSNR_CAP_DB))


def sequence_report(pred, target, per_frame=True) -> MetricReport:
    """All four metrics over (B,T,C,H,W) sequences, with an optional
    per-time-step breakdown."""
    pred, target = _check_pair(pred, target)
    if pred.ndim != 5:
        raise ConfigurationError("sequence_report expects (B,T,C,H,W)")
    B, T = pred.shape[:2]
    ssim_vals = np.empty((B, T))
    fallback = False
    for b in range(B):
        for t in range(T):
            ssim_vals[b, t], fb = ssim_frame(pred[b, t], target[b, t])
            fallback |= fb
    frames = None
    if per_frame:
        hw = pred.shape[3] * pred.shape[4]
        sq = (pred - target) ** 2
        ab = np.abs(pred - target)
        frames = {
            "mse": [float(v) for v in sq.sum(axis=(2, 3, 4)).mean(axis=0) / hw],
            "mae": [float(v) for v in ab.sum(axis=(2, 3, 4)).mean(axis=0) / hw],
            "ssim": [float(v) for v in ssim_vals.mean(axis=0)],
            "psnr": [psnr_metric(pred[:, t:t + 1], target[:, t:t + 1]) for t in range(T)],
        }
    return MetricReport(
        mse=mse_metric(pred, target),
        mae=mae_metric(pred, target),
        ssim=float(ssim_vals.mean()),
        psnr=psnr_metric(pred, target),
        per_frame=frames,
        ssim_global_fallback=fallback,
    )
