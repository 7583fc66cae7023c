"""Path-level channel synthesis for uniform linear arrays.

A link is described by a set of propagation paths (complex gain, delay,
azimuth angles at both ends, Doppler shift). The frequency response over a
grid of baseband tone offsets f at elapsed time t is

    H(t, f) = sum_n  gain_n * W_n * exp(-j 2 pi f tau_n) * exp(+j 2 pi fD_n t)

where W_n = a_rx(aoa_n) a_tx(aod_n)^H for geometric paths, or an explicit
per-antenna-pair weight matrix for tap-style paths without array structure.
The sign convention exp(-j 2 pi f tau) * exp(+j 2 pi fD t) is used everywhere
in this package; a global conjugation would leave all error metrics unchanged.

Angles are 2-D azimuths (propagation in the horizontal plane only, matching
the ULA setup). All synthesis is double precision.
"""

from dataclasses import dataclass, field, replace

import numpy as np

TWO_PI = 2.0 * np.pi


@dataclass
class ArrayGeometry:
    """Uniform linear array: `num_elements` isotropic elements spaced
    `spacing_wavelengths` apart (in carrier wavelengths)."""

    num_elements: int
    spacing_wavelengths: float = 0.5

    def __post_init__(self):
        if self.num_elements < 1:
            raise ValueError(f"num_elements must be >= 1, got {self.num_elements}")
        if not self.spacing_wavelengths > 0:
            raise ValueError("spacing_wavelengths must be > 0")


@dataclass
class Path:
    """One propagation path.

    gain        complex linear amplitude (includes the carrier phase)
    delay_s     absolute propagation delay, seconds
    aod_rad     azimuth of departure at the transmitter
    aoa_rad     azimuth of arrival at the receiver, pointing from the
                receiver toward where the wave comes from
    doppler_hz  Doppler shift of this path
    weights     optional (n_rx, n_t) complex matrix replacing the array
                outer product; used for tap-style paths whose per-antenna
                gains are drawn directly (no array structure)
    tag         optional hashable interaction signature (e.g. the wall index
                sequence from the tracer); used to match paths across
                neighbouring receiver positions
    """

    gain: complex
    delay_s: float
    aod_rad: float = 0.0
    aoa_rad: float = 0.0
    doppler_hz: float = 0.0
    weights: np.ndarray | None = None
    tag: tuple | None = None

    def validate(self):
        if not np.isfinite(self.delay_s) or self.delay_s < 0:
            raise ValueError(f"path delay must be finite and >= 0, got {self.delay_s}")
        if not np.isfinite(self.gain):
            raise ValueError("path gain must be finite")
        for name in ("aod_rad", "aoa_rad", "doppler_hz"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"path {name} must be finite")
        if self.weights is not None and not np.all(np.isfinite(self.weights)):
            raise ValueError("path weights must be finite")


@dataclass
class PathSet:
    """All paths of one link, plus optional receiver motion metadata."""

    paths: list[Path] = field(default_factory=list)
    rx_position: np.ndarray | None = None  # (2,) meters
    rx_velocity: np.ndarray | None = None  # (2,) m/s

    def __len__(self):
        return len(self.paths)

    def validate(self):
        for p in self.paths:
            p.validate()

    def total_power(self) -> float:
        """Sum of per-path powers |gain|^2 (mean over antenna pairs when a
        path carries an explicit weight matrix)."""
        total = 0.0
        for p in self.paths:
            w = 1.0 if p.weights is None else float(np.mean(np.abs(p.weights) ** 2))
            total += abs(p.gain) ** 2 * w
        return total


@dataclass
class ChannelGrid:
    """Complex channel over (rx antenna, tx antenna, subcarrier) for one
    snapshot. `f0_hz` is the offset of the first tone from the carrier."""

    data: np.ndarray  # complex128 (N_rx, N_t, N_c)
    subcarrier_spacing_hz: float
    f0_hz: float = 0.0

    @property
    def shape(self):
        return self.data.shape

    def validate(self):
        if self.data.ndim != 3:
            raise ValueError(f"grid must be 3-D, got shape {self.data.shape}")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("grid contains non-finite entries")


@dataclass
class ChannelSequence:
    """Time-ordered channel grids at a fixed sampling period."""

    grids: list[ChannelGrid]
    sampling_period_s: float

    def __len__(self):
        return len(self.grids)

    def as_tensor(self) -> np.ndarray:
        """(L, N_rx, N_t, N_c) complex array."""
        return np.stack([g.data for g in self.grids])

    def validate(self):
        if len(self.grids) < 1:
            raise ValueError("sequence must contain at least one grid")
        shape = self.grids[0].shape
        for g in self.grids:
            if g.shape != shape:
                raise ValueError("all grids in a sequence must share a shape")


def array_response(geometry: ArrayGeometry, angle_rad: float) -> np.ndarray:
    """Plane-wave response of a ULA: element k carries phase
    2 pi * spacing * k * sin(angle). Unit-modulus entries."""
    k = np.arange(geometry.num_elements)
    return np.exp(1j * TWO_PI * geometry.spacing_wavelengths * k * np.sin(angle_rad))


def synth_geometric(
    pathset: PathSet,
    rx: ArrayGeometry,
    tx: ArrayGeometry,
    freqs_hz: np.ndarray,
    t_s: float = 0.0,
) -> ChannelGrid:
    """Sum the path contributions into an (N_rx, N_t, N_c) grid.

    `freqs_hz` are baseband tone offsets from the carrier. Paths with an
    explicit weight matrix contribute gain * weights instead of the
    rank-one array outer product.
    """
    if len(pathset) == 0:
        raise ValueError("cannot synthesize an empty PathSet")
    pathset.validate()

    freqs = np.asarray(freqs_hz, dtype=np.float64)
    h = np.zeros((rx.num_elements, tx.num_elements, freqs.size), dtype=np.complex128)
    for p in pathset.paths:
        if p.weights is None:
            outer = np.outer(array_response(rx, p.aoa_rad), array_response(tx, p.aod_rad).conj())
        else:
            if p.weights.shape != (rx.num_elements, tx.num_elements):
                raise ValueError(
                    f"path weights shape {p.weights.shape} does not match arrays "
                    f"({rx.num_elements}, {tx.num_elements})"
                )
            outer = p.weights
        phase = np.exp(-1j * TWO_PI * freqs * p.delay_s)
        rot = np.exp(1j * TWO_PI * p.doppler_hz * t_s)
        h += (p.gain * rot) * outer[:, :, None] * phase[None, None, :]

    spacing = float(freqs[1] - freqs[0]) if freqs.size > 1 else 0.0
    return ChannelGrid(data=h, subcarrier_spacing_hz=spacing, f0_hz=float(freqs[0]))


def synth_tdl(
    taps: list[tuple[float, float, float]],
    freqs_hz: np.ndarray,
    t_s: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Scalar (single antenna pair) tap-sum frequency response.

    `taps` is a list of (power, delay_s, doppler_hz); powers are normalized
    to unit total. One complex gain per tap is drawn from the provided rng
    with E[|gain|^2] equal to the tap power, so a caller holding the rng
    state owns the realization: the same state and a later t give the same
    gains rotated by exp(j 2 pi fD dt) per tap.
    """
    if len(taps) == 0:
        raise ValueError("tap list must be non-empty")
    powers = np.array([t[0] for t in taps], dtype=np.float64)
    if np.any(powers < 0):
        raise ValueError("tap powers must be >= 0")
    powers = powers / powers.sum()
    delays = np.array([t[1] for t in taps], dtype=np.float64)
    dopplers = np.array([t[2] for t in taps], dtype=np.float64)

    gains = np.sqrt(powers / 2.0) * (
        rng.standard_normal(len(taps)) + 1j * rng.standard_normal(len(taps))
    )
    freqs = np.asarray(freqs_hz, dtype=np.float64)
    phases = np.exp(-1j * TWO_PI * np.outer(delays, freqs))
    rot = np.exp(1j * TWO_PI * dopplers * t_s)
    return (gains * rot) @ phases


def fading_sample(
    kind: str,
    rng: np.random.Generator,
    *,
    k: float = 0.0,
    omega: float = 1.0,
    m: float = 1.0,
) -> complex:
    """Draw one complex small-scale fading coefficient with E[|h|^2] = omega.

    kind: 'awgn' (no fading, h = 1), 'rayleigh', 'rician' (factor k >= 0),
    or 'nakagami' (shape m >= 0.5). Rician and Nakagami carry a uniform
    phase; rician(k=0) and nakagami(m=1) both reduce to Rayleigh.
    """
    if omega <= 0:
        raise ValueError("omega must be > 0")
    if kind == "awgn":
        return 1.0 + 0.0j
    if kind == "rayleigh":
        scale = np.sqrt(omega / 2.0)
        return complex(scale * rng.standard_normal() + 1j * scale * rng.standard_normal())
    if kind == "rician":
        if k < 0:
            raise ValueError("rician k must be >= 0")
        los = np.sqrt(omega * k / (k + 1.0)) * np.exp(1j * rng.uniform(0.0, TWO_PI))
        scale = np.sqrt(omega / (2.0 * (k + 1.0)))
        scatter = scale * rng.standard_normal() + 1j * scale * rng.standard_normal()
        return complex(los + scatter)
    if kind == "nakagami":
        if m < 0.5:
            raise ValueError("nakagami m must be >= 0.5")
        envelope = np.sqrt(rng.gamma(m, omega / m))
        return complex(envelope * np.exp(1j * rng.uniform(0.0, TWO_PI)))
    raise ValueError(f"unknown fading kind: {kind!r}")


def merge_pathsets(a: PathSet, b: PathSet) -> PathSet:
    """Union of two path lists over the same link (channel is linear in paths)."""
    return PathSet(
        paths=[replace(p) for p in a.paths] + [replace(p) for p in b.paths],
        rx_position=a.rx_position,
        rx_velocity=a.rx_velocity,
    )
