"""Stochastic channel generators: tap-delay, clustered, and urban-macro style.

Three families of increasing structure:

  * tap profiles (gen_tdl): powers/delays only, complex normal tap gains
    drawn independently per antenna pair (no array structure);
  * clustered profiles (gen_cdl): fixed clusters with departure/arrival
    angles, random subpath phases only;
  * urban-macro style (gen_uma): random cluster count, exponential delays
    rescaled to an exact RMS delay spread, wrapped-Gaussian angles and an
    optional Rician line-of-sight component.

Sequence evolution freezes all large-scale parameters (powers, delays,
angles) and advances per-path phases at a constant Doppler determined by a
motion draw: the per-path Doppler is the user speed projected onto a path
angle drawn once per sequence.

Profile tables are configuration files (JSON), not transcriptions of any
standardized table; `chanlab/profiles/` ships small illustrative examples.
"""

import json
from dataclasses import dataclass, replace
from pathlib import Path as FilePath

import numpy as np

from .channel import (
    ArrayGeometry,
    ChannelGrid,
    ChannelSequence,
    Path,
    PathSet,
    TWO_PI,
    synth_geometric,
)
from .constants import SPEED_OF_LIGHT

PROFILE_SCHEMA_VERSION = 1


@dataclass
class TdlProfile:
    """Tap powers (dB, relative) and delays normalized to unit delay spread."""

    taps: list[tuple[float, float]]  # (relative_power_db, normalized_delay)
    name: str = "tdl"

    def __post_init__(self):
        if len(self.taps) < 1:
            raise ValueError("profile needs at least one tap")
        if any(d < 0 for _, d in self.taps):
            raise ValueError("normalized delays must be >= 0")

    def linear_powers(self) -> np.ndarray:
        """Tap powers in linear scale, normalized to unit total."""
        p = 10.0 ** (np.array([db for db, _ in self.taps]) / 10.0)
        return p / p.sum()


@dataclass
class CdlProfile:
    """Fixed clusters with per-cluster angles, split into equal-power subpaths."""

    clusters: list[tuple[float, float, float, float]]  # (power_db, delay_norm, aod_deg, aoa_deg)
    per_cluster_subpaths: int = 1
    subpath_angle_offsets_deg: list[float] | None = None
    name: str = "cdl"

    def __post_init__(self):
        if len(self.clusters) < 1:
            raise ValueError("profile needs at least one cluster")
        if self.subpath_angle_offsets_deg is None:
            self.subpath_angle_offsets_deg = [0.0] * self.per_cluster_subpaths
        if len(self.subpath_angle_offsets_deg) != self.per_cluster_subpaths:
            raise ValueError("offsets list length must equal per_cluster_subpaths")

    def linear_powers(self) -> np.ndarray:
        p = 10.0 ** (np.array([c[0] for c in self.clusters]) / 10.0)
        return p / p.sum()


@dataclass
class GbsmConfig:
    """Urban-macro style generator configuration."""

    n_clusters_range: tuple[int, int] = (3, 8)
    delay_spread_s: float = 300e-9
    angle_spread_deg: float = 30.0
    rician_k_db_range: tuple[float, float] = (3.0, 10.0)
    los_probability: float = 0.5
    name: str = "uma"

    def __post_init__(self):
        lo, hi = self.n_clusters_range
        if not (1 <= lo <= hi):
            raise ValueError("n_clusters_range must satisfy 1 <= lo <= hi")
        if not (0.0 <= self.los_probability <= 1.0):
            raise ValueError("los_probability must lie in [0, 1]")
        if self.delay_spread_s <= 0:
            raise ValueError("delay_spread_s must be > 0")


@dataclass
class MobilityDraw:
    """One user-motion realization for a sequence: speed, heading, and the
    angle each path's Doppler is projected onto."""

    speed_mps: float
    heading_rad: float
    per_path_angle_rad: list[float]

    def __post_init__(self):
        if self.speed_mps < 0:
            raise ValueError("speed must be >= 0")


def draw_mobility(rng: np.random.Generator, speed_mps: float, n_paths: int) -> MobilityDraw:
    """Heading and per-path projection angles uniform on [0, 2pi)."""
    return MobilityDraw(
        speed_mps=speed_mps,
        heading_rad=float(rng.uniform(0.0, TWO_PI)),
        per_path_angle_rad=list(rng.uniform(0.0, TWO_PI, size=n_paths)),
    )


def _exp_corr_sqrt(n: int, rho: float) -> np.ndarray:
    """Cholesky factor of the exponential correlation matrix rho^|i-j|."""
    if rho == 0.0 or n == 1:
        return np.eye(n)
    idx = np.arange(n)
    corr = rho ** np.abs(idx[:, None] - idx[None, :])
    return np.linalg.cholesky(corr)


def gen_tdl(
    profile: TdlProfile,
    delay_spread_s: float,
    n_rx: int,
    n_t: int,
    rng: np.random.Generator,
    *,
    rx_corr: float = 0.0,
    tx_corr: float = 0.0,
) -> PathSet:
    """One path per tap, carrying an (n_rx, n_t) matrix of complex normal
    gains with E[|entry|^2] = tap power. Independent across antenna pairs
    by default; `rx_corr`/`tx_corr` apply exponential spatial correlation
    on either side (Kronecker structure)."""
    powers = profile.linear_powers()
    lrx = _exp_corr_sqrt(n_rx, rx_corr)
    ltx = _exp_corr_sqrt(n_t, tx_corr)

    paths = []
    for (_, delay_norm), p in zip(profile.taps, powers):
        w = (rng.standard_normal((n_rx, n_t)) + 1j * rng.standard_normal((n_rx, n_t))) / np.sqrt(2.0)
        w = lrx @ w @ ltx.conj().T
        paths.append(
            Path(
                gain=complex(np.sqrt(p)),
                delay_s=delay_norm * delay_spread_s,
                weights=w,
            )
        )
    return PathSet(paths=paths)


def gen_cdl(profile: CdlProfile, delay_spread_s: float, rng: np.random.Generator) -> PathSet:
    """Expand clusters into subpaths: deterministic powers/delays/angles,
    random phases only."""
    cluster_powers = profile.linear_powers()
    m = profile.per_cluster_subpaths
    offsets = np.deg2rad(profile.subpath_angle_offsets_deg)

    paths = []
    for (_, delay_norm, aod_deg, aoa_deg), power in zip(profile.clusters, cluster_powers):
        for off in offsets:
            phase = rng.uniform(0.0, TWO_PI)
            paths.append(
                Path(
                    gain=complex(np.sqrt(power / m) * np.exp(1j * phase)),
                    delay_s=delay_norm * delay_spread_s,
                    aod_rad=np.deg2rad(aod_deg) + off,
                    aoa_rad=np.deg2rad(aoa_deg) + off,
                )
            )
    return PathSet(paths=paths)


def gen_uma(config: GbsmConfig, rng: np.random.Generator) -> PathSet:
    """Random clusters with an exact RMS delay spread and optional LOS path.

    Cluster count is uniform over the configured range; delays are
    exponential with an exponential power-delay profile plus log-normal
    jitter; angles are wrapped Gaussians around a random mean direction.
    With probability `los_probability` a zero-delay LOS path is injected
    with a Rician factor drawn from the configured dB range; all delays are
    then rescaled so the power-weighted RMS delay spread is exactly
    `delay_spread_s` (skipped for a degenerate single-path draw).
    """
    lo, hi = config.n_clusters_range
    n = int(rng.integers(lo, hi + 1))
    ds = config.delay_spread_s

    delays = np.sort(rng.exponential(ds, size=n))
    delays -= delays[0]
    shadow_db = 3.0 * rng.standard_normal(n)
    powers = np.exp(-delays / ds) * 10.0 ** (-np.abs(shadow_db) / 10.0)
    powers /= powers.sum()

    mean_aod = rng.uniform(0.0, TWO_PI)
    mean_aoa = rng.uniform(0.0, TWO_PI)
    spread = np.deg2rad(config.angle_spread_deg)
    aods = np.mod(mean_aod + spread * rng.standard_normal(n), TWO_PI)
    aoas = np.mod(mean_aoa + spread * rng.standard_normal(n), TWO_PI)

    has_los = rng.uniform() < config.los_probability
    if has_los:
        k_db = rng.uniform(*config.rician_k_db_range)
        k_lin = 10.0 ** (k_db / 10.0)
        los_power = k_lin / (k_lin + 1.0)
        powers = powers * (1.0 - los_power)
    else:
        los_power = 0.0

    phases = rng.uniform(0.0, TWO_PI, size=n)
    paths = [
        Path(
            gain=complex(np.sqrt(p) * np.exp(1j * ph)),
            delay_s=float(d),
            aod_rad=float(aod),
            aoa_rad=float(aoa),
        )
        for p, d, ph, aod, aoa in zip(powers, delays, phases, aods, aoas)
    ]
    if has_los:
        paths.insert(
            0,
            Path(
                gain=complex(np.sqrt(los_power) * np.exp(1j * rng.uniform(0.0, TWO_PI))),
                delay_s=0.0,
                aod_rad=float(mean_aod),
                aoa_rad=float(mean_aoa),
            ),
        )

    # Rescale delays for an exact power-weighted RMS spread (scale-equivariant).
    pw = np.array([abs(p.gain) ** 2 for p in paths])
    tau = np.array([p.delay_s for p in paths])
    mean_tau = np.sum(pw * tau) / pw.sum()
    rms = np.sqrt(np.sum(pw * (tau - mean_tau) ** 2) / pw.sum())
    if rms > 0:
        scale = ds / rms
        paths = [replace(p, delay_s=p.delay_s * scale) for p in paths]

    # Normalize total power exactly to 1.
    total = np.sqrt(sum(abs(p.gain) ** 2 for p in paths))
    paths = [replace(p, gain=p.gain / total) for p in paths]
    return PathSet(paths=paths)


def evolve_sequence(
    pathset: PathSet,
    mobility: MobilityDraw,
    L: int,
    period_s: float,
    f_c_hz: float,
    rx: ArrayGeometry,
    tx: ArrayGeometry,
    freqs_hz: np.ndarray,
) -> ChannelSequence:
    """Advance a stochastic path set in time by pure per-path phase rotation.

    Per-path Doppler is (speed / wavelength) * cos(path_angle - heading) and
    stays constant across the window; powers, delays and angles are frozen.
    """
    if L < 1:
        raise ValueError("sequence length must be >= 1")
    if mobility is None:
        raise ValueError("a MobilityDraw is required to evolve a sequence")
    if len(mobility.per_path_angle_rad) != len(pathset):
        raise ValueError(
            f"mobility draw has {len(mobility.per_path_angle_rad)} path angles "
            f"for {len(pathset)} paths"
        )

    wavelength = SPEED_OF_LIGHT / f_c_hz
    paths = [
        replace(
            p,
            doppler_hz=(mobility.speed_mps / wavelength)
            * np.cos(angle - mobility.heading_rad),
            weights=None if p.weights is None else p.weights.copy(),
        )
        for p, angle in zip(pathset.paths, mobility.per_path_angle_rad)
    ]
    moving = PathSet(paths=paths, rx_position=pathset.rx_position)

    grids: list[ChannelGrid] = []
    for step in range(L):
        grids.append(synth_geometric(moving, rx, tx, freqs_hz, t_s=step * period_s))
    return ChannelSequence(grids=grids, sampling_period_s=period_s)


# ---------------------------------------------------------------------------
# Profile file I/O (JSON, versioned)

def load_profile(path: str | FilePath):
    """Load a TdlProfile / CdlProfile / GbsmConfig from a JSON file.

    The file carries {"version": 1, "kind": "tdl"|"cdl"|"uma", ...fields}.
    """
    with open(path) as f:
        doc = json.load(f)
    return profile_from_dict(doc, source=str(path))


def profile_from_dict(doc: dict, source: str = "<dict>"):
    version = doc.get("version")
    if version != PROFILE_SCHEMA_VERSION:
        raise ValueError(f"{source}: unsupported profile version {version!r}")
    kind = doc.get("kind")
    if kind == "tdl":
        return TdlProfile(
            taps=[(float(p), float(d)) for p, d in doc["taps"]],
            name=doc.get("name", "tdl"),
        )
    if kind == "cdl":
        return CdlProfile(
            clusters=[tuple(map(float, c)) for c in doc["clusters"]],
            per_cluster_subpaths=int(doc["per_cluster_subpaths"]),
            subpath_angle_offsets_deg=[float(x) for x in doc["subpath_angle_offsets_deg"]],
            name=doc.get("name", "cdl"),
        )
    if kind == "uma":
        return GbsmConfig(
            n_clusters_range=tuple(doc["n_clusters_range"]),
            delay_spread_s=float(doc["delay_spread_s"]),
            angle_spread_deg=float(doc["angle_spread_deg"]),
            rician_k_db_range=tuple(doc["rician_k_db_range"]),
            los_probability=float(doc["los_probability"]),
            name=doc.get("name", "uma"),
        )
    raise ValueError(f"{source}: unknown profile kind {kind!r}")
