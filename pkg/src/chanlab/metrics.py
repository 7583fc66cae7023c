"""Normalized mean squared error, the single metric of both tasks.

NMSE_dB = 10 log10( ||h_true - h_est||^2 / ||h_true||^2 ).

Batches average the linear ratios before the log (matching the training
loss); exact reconstructions are floored at -300 dB instead of -inf.
"""

import numpy as np

from .constants import NMSE_FLOOR_LINEAR


def nmse_linear(h_true: np.ndarray, h_est: np.ndarray) -> float:
    """Linear error ratio for a single sample (any shape, real or complex)."""
    h_true = np.asarray(h_true)
    h_est = np.asarray(h_est)
    if h_true.shape != h_est.shape:
        raise ValueError(f"shape mismatch: {h_true.shape} vs {h_est.shape}")
    ref = float(np.sum(np.abs(h_true) ** 2))
    if ref <= 0.0:
        raise ValueError("zero-norm reference in NMSE")
    err = float(np.sum(np.abs(h_true - h_est) ** 2))
    return err / ref


def to_db(ratio: float) -> float:
    return 10.0 * np.log10(max(ratio, NMSE_FLOOR_LINEAR))


def nmse_db(h_true: np.ndarray, h_est: np.ndarray) -> float:
    """Single-sample NMSE in dB, clamped at -300 dB."""
    return to_db(nmse_linear(h_true, h_est))


def batch_nmse_db(h_true: np.ndarray, h_est: np.ndarray) -> float:
    """Batch NMSE: mean of per-sample linear ratios, then dB.

    The first axis indexes samples.
    """
    h_true = np.asarray(h_true)
    h_est = np.asarray(h_est)
    if h_true.shape != h_est.shape:
        raise ValueError(f"shape mismatch: {h_true.shape} vs {h_est.shape}")
    ratios = [nmse_linear(t, e) for t, e in zip(h_true, h_est)]
    return to_db(float(np.mean(ratios)))
