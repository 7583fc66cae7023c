"""Tensor shaping and normalization feeding the two task models.

Compression snapshots: fine frequency grid -> per-PRB averaging (32 PRBs) ->
unitary angle-delay transform -> keep the first 16 delay bins -> split into
real/imag planes -> zero-mean unit-variance per snapshot.

Prediction sequences: single tone, two tx antennas; windows take the first
L_in steps as inputs and index targets at fixed millisecond horizons past
the last input sample; the whole dataset is scaled by one max-|H| scalar.
"""

from dataclasses import dataclass

import numpy as np

from .channel import ChannelGrid, ChannelSequence

N_DELAY_KEEP = 16
DEFAULT_HORIZONS_MS = (1, 3, 5, 10, 20, 40)


@dataclass
class CompressionSample:
    """ZMUV-normalized angle-delay snapshot, shape (2, n_delay, n_t)."""

    tensor: np.ndarray
    mean: float
    std: float

    def denormalize(self) -> np.ndarray:
        return self.tensor * self.std + self.mean


@dataclass
class PredictionWindow:
    """Input window plus per-horizon targets, in max-abs-scaled units.

    inputs shape (l_in, 4): per-step features are antenna-major, then I/Q:
    [Re h0, Im h0, Re h1, Im h1].
    """

    inputs: np.ndarray
    targets: dict[int, np.ndarray]  # horizon_ms -> (4,)
    scale: float


def prb_average(fine_grid: ChannelGrid, tones_per_prb: int, n_prb: int = 32) -> ChannelGrid:
    """Average groups of `tones_per_prb` adjacent tones into one effective
    subcarrier per PRB."""
    n_rx, n_t, n_c = fine_grid.data.shape
    if n_c != tones_per_prb * n_prb:
        raise ValueError(
            f"fine grid has {n_c} tones, expected {tones_per_prb} x {n_prb}"
        )
    data = fine_grid.data.reshape(n_rx, n_t, n_prb, tones_per_prb).mean(axis=3)
    # Effective tone sits at the mean offset of its PRB.
    f0 = fine_grid.f0_hz + fine_grid.subcarrier_spacing_hz * (tones_per_prb - 1) / 2.0
    return ChannelGrid(
        data=data,
        subcarrier_spacing_hz=fine_grid.subcarrier_spacing_hz * tones_per_prb,
        f0_hz=f0,
    )


def to_angle_delay(grid: ChannelGrid, n_delay_keep: int = N_DELAY_KEEP) -> np.ndarray:
    """Unitary transform of the (first rx antenna's) tx-by-frequency matrix
    into the angle-delay domain, keeping the first `n_delay_keep` delay bins.

    With the repo sign convention exp(-j 2 pi f tau), a path at delay
    k / (N_c * df) lands in delay bin k under the inverse DFT along
    frequency; the forward DFT is applied along the antenna axis. Returns a
    complex (n_delay_keep, n_t) array.
    """
    n_rx, n_t, n_c = grid.data.shape
    if n_c < n_delay_keep:
        raise ValueError(f"need at least {n_delay_keep} subcarriers, got {n_c}")
    h = grid.data[0]  # (n_t, n_c)
    delay = np.fft.ifft(h, axis=1, norm="ortho")
    angle_delay = np.fft.fft(delay, axis=0, norm="ortho")
    return angle_delay.T[:n_delay_keep, :]  # (delay, antenna)


def angle_delay_energy_fraction(grid: ChannelGrid, n_delay_keep: int = N_DELAY_KEEP) -> float:
    """Fraction of channel energy retained by the delay trim."""
    full = np.fft.fft(np.fft.ifft(grid.data[0], axis=1, norm="ortho"), axis=0, norm="ortho")
    total = float(np.sum(np.abs(full) ** 2))
    kept = float(np.sum(np.abs(full.T[:n_delay_keep, :]) ** 2))
    return kept / total if total > 0 else 0.0


def split_real_imag(x: np.ndarray) -> np.ndarray:
    """(...,) complex -> (2, ...) real planes [Re, Im]."""
    return np.stack([x.real, x.imag]).astype(np.float64)


def zmuv(angle_delay: np.ndarray) -> CompressionSample:
    """Zero-mean unit-variance normalization over all real entries of one
    snapshot. Raises on a degenerate (constant) snapshot."""
    planes = split_real_imag(angle_delay)
    mean = float(planes.mean())
    std = float(planes.std())
    if std <= 0.0:
        raise ValueError("degenerate snapshot: zero variance under ZMUV")
    return CompressionSample(tensor=(planes - mean) / std, mean=mean, std=std)


def maxabs_scale(sequences: list[ChannelSequence]) -> tuple[list[np.ndarray], float]:
    """Scale a sequence dataset by its single max |H|.

    Returns (list of (L, N_rx, N_t, N_c) complex arrays divided by the
    scale, scale). Raises when the dataset is identically zero.
    """
    tensors = [seq.as_tensor() for seq in sequences]
    scale = max(float(np.max(np.abs(t))) for t in tensors)
    if scale <= 0.0:
        raise ValueError("degenerate dataset: max |H| is zero")
    return [t / scale for t in tensors], scale


def flatten_step(step: np.ndarray) -> np.ndarray:
    """One complex grid snapshot (N_rx, N_t, N_c) -> real feature vector,
    antenna-major then I/Q: [Re h[a0], Im h[a0], Re h[a1], Im h[a1], ...]."""
    flat = step.reshape(-1)
    out = np.empty(2 * flat.size, dtype=np.float64)
    out[0::2] = flat.real
    out[1::2] = flat.imag
    return out


def unflatten_step(features: np.ndarray, shape: tuple[int, int, int]) -> np.ndarray:
    """Inverse of `flatten_step` (bijective)."""
    real = features[0::2]
    imag = features[1::2]
    return (real + 1j * imag).reshape(shape)


def make_windows(
    seq_tensor: np.ndarray,
    sampling_period_s: float,
    scale: float,
    l_in: int = 20,
    horizons_ms: tuple[int, ...] = DEFAULT_HORIZONS_MS,
) -> PredictionWindow:
    """One input window and its horizon targets from a scaled sequence.

    `seq_tensor` is the (L, N_rx, N_t, N_c) complex array already divided by
    the dataset scale. Target for horizon dt sits dt/period steps after the
    last input sample (index l_in - 1).
    """
    L = seq_tensor.shape[0]
    period_ms = sampling_period_s * 1e3
    offsets = {}
    for h in horizons_ms:
        steps = h / period_ms
        if abs(steps - round(steps)) > 1e-9:
            raise ValueError(f"horizon {h} ms is not a multiple of the sampling period")
        offsets[h] = int(round(steps))
    max_needed = l_in - 1 + max(offsets.values())
    if L <= max_needed:
        raise ValueError(f"sequence of length {L} too short for horizon "
                         f"{max(horizons_ms)} ms (needs {max_needed + 1} steps)")

    inputs = np.stack([flatten_step(seq_tensor[i]) for i in range(l_in)])
    targets = {
        h: flatten_step(seq_tensor[l_in - 1 + off]) for h, off in offsets.items()
    }
    return PredictionWindow(inputs=inputs, targets=targets, scale=scale)
