"""Domain dataset builders: generator config -> normalized task tensors.

A *domain* is one channel data source (tap profile, clustered profile,
urban-macro config, traced scene, imported path file, or a synthetic
single-path source). Builders produce:

  * compression datasets: (N, 2, 16, 32) ZMUV angle-delay snapshots with
    per-sample normalization state and the delay-trim energy fraction;
  * prediction datasets: (N, 20, 4) input windows and per-horizon targets,
    max-abs scaled with one dataset-level scalar.

Every sample derives its rng from (seed, sample index), so datasets are
reproducible byte-for-byte from their manifest. Archives are npz + JSON
sidecar, cached under a content hash of (task, domain config, size, seed,
task parameters).
"""

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path as FilePath

import numpy as np

from .channel import ArrayGeometry, Path, PathSet, synth_geometric
from .constants import (
    DEFAULT_CARRIER_HZ,
    DEFAULT_DELAY_SPREAD_S,
    DEFAULT_SUBCARRIER_SPACING_HZ,
)
from .preprocess import (
    DEFAULT_HORIZONS_MS,
    angle_delay_energy_fraction,
    make_windows,
    maxabs_scale,
    prb_average,
    to_angle_delay,
    zmuv,
)
from .raytrace import Scene, Track, Wall, assign_doppler, import_paths, interpolate_track, trace_paths
from .stochastic import (
    GbsmConfig,
    draw_mobility,
    evolve_sequence,
    gen_cdl,
    gen_tdl,
    gen_uma,
    load_profile,
    profile_from_dict,
)
from .channel import ChannelSequence
from .utils import rng_for, stable_hash

DATASET_SCHEMA_VERSION = 1

TASK1 = dict(
    n_t=32,
    n_prb=32,
    tones_per_prb=12,
    subcarrier_spacing_hz=DEFAULT_SUBCARRIER_SPACING_HZ,
    n_delay_keep=16,
)
TASK2 = dict(
    n_t=2,
    l_in=20,
    seq_len=60,
    period_s=1e-3,
    speed_mps=8.333,
    horizons_ms=DEFAULT_HORIZONS_MS,
)


@dataclass
class CompressionDataset:
    tensor: np.ndarray  # (N, 2, n_delay, n_t) float64
    means: np.ndarray
    stds: np.ndarray
    energy_fraction: float
    manifest: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.tensor)


@dataclass
class PredictionDataset:
    inputs: np.ndarray  # (N, l_in, 4) float64
    targets: dict[int, np.ndarray]  # horizon_ms -> (N, 4)
    scale: float
    manifest: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.inputs)


# ---------------------------------------------------------------------------
# Scenes and profiles

def default_scene(max_reflections: int = 2, carrier_hz: float = DEFAULT_CARRIER_HZ) -> Scene:
    """Desk-scale site: partial outer shell plus an interior block and a
    detached wall, sized so all reflected delays stay inside the 16-bin
    delay window after PRB averaging."""
    walls = [
        Wall((0, 0), (120, 0), -0.70),
        Wall((120, 0), (120, 80), -0.65),
        Wall((0, 80), (120, 80), -0.70),
        Wall((0, 0), (0, 80), -0.60),
        # interior building
        Wall((45, 22), (75, 22), -0.80),
        Wall((75, 22), (75, 48), -0.80),
        Wall((45, 48), (75, 48), -0.80),
        Wall((45, 22), (45, 48), -0.80),
        # detached reflector
        Wall((92, 55), (112, 68), 0.5j),
    ]
    return Scene(
        walls=walls,
        tx_position=(18.0, 62.0),
        bounds=(0.0, 0.0, 120.0, 80.0),
        max_reflections=max_reflections,
        carrier_hz=carrier_hz,
    )


def scene_from_config(cfg, carrier_hz: float = DEFAULT_CARRIER_HZ) -> Scene:
    if cfg == "default" or cfg is None:
        return default_scene(carrier_hz=carrier_hz)
    walls = [Wall((w[0], w[1]), (w[2], w[3]), complex(w[4], w[5])) for w in cfg["walls"]]
    return Scene(
        walls=walls,
        tx_position=tuple(cfg["tx_position"]),
        bounds=tuple(cfg["bounds"]),
        max_reflections=int(cfg.get("max_reflections", 2)),
        carrier_hz=float(cfg.get("carrier_hz", carrier_hz)),
    )


def resolve_profile(spec):
    """Profile spec: shipped profile name, file path, or inline dict."""
    if isinstance(spec, dict):
        return profile_from_dict(spec)
    shipped = resources.files("chanlab") / "profiles" / f"{spec}.json"
    if shipped.is_file():
        return profile_from_dict(json.loads(shipped.read_text()), source=str(spec))
    if FilePath(spec).is_file():
        return load_profile(spec)
    raise FileNotFoundError(f"profile {spec!r}: not a shipped profile, file, or inline dict")


# ---------------------------------------------------------------------------
# Per-sample path sources

def _stochastic_pathset(domain: dict, n_rx: int, n_t: int, rng) -> PathSet:
    kind = domain["kind"]
    ds = float(domain.get("delay_spread_s", DEFAULT_DELAY_SPREAD_S))
    if kind == "tdl":
        return gen_tdl(
            resolve_profile(domain["profile"]), ds, n_rx, n_t, rng,
            rx_corr=float(domain.get("rx_corr", 0.0)),
            tx_corr=float(domain.get("tx_corr", 0.0)),
        )
    if kind == "cdl":
        return gen_cdl(resolve_profile(domain["profile"]), ds, rng)
    if kind == "uma":
        cfg = domain.get("config", {})
        return gen_uma(GbsmConfig(
            n_clusters_range=tuple(cfg.get("n_clusters_range", (3, 8))),
            delay_spread_s=float(cfg.get("delay_spread_s", ds)),
            angle_spread_deg=float(cfg.get("angle_spread_deg", 30.0)),
            rician_k_db_range=tuple(cfg.get("rician_k_db_range", (3.0, 10.0))),
            los_probability=float(cfg.get("los_probability", 0.5)),
        ), rng)
    raise ValueError(f"unknown stochastic domain kind {kind!r}")


def _single_path_pathset(domain: dict, rng) -> PathSet:
    doppler = domain.get("doppler_hz", 100.0)
    if doppler == "cosine":
        fd_max = float(domain.get("max_doppler_hz", 100.0))
        doppler = fd_max * np.cos(rng.uniform(0.0, 2 * np.pi))
    return PathSet(paths=[Path(
        gain=complex(np.exp(1j * rng.uniform(0.0, 2 * np.pi))),
        delay_s=0.0,
        aod_rad=float(rng.uniform(-np.pi, np.pi)),
        aoa_rad=0.0,
        doppler_hz=float(doppler),
    )])


def _rt_snapshot_pathset(scene: Scene, rng, min_tx_dist: float = 5.0, max_tries: int = 200) -> PathSet:
    xmin, ymin, xmax, ymax = scene.bounds
    for _ in range(max_tries):
        pos = np.array([rng.uniform(xmin + 1, xmax - 1), rng.uniform(ymin + 1, ymax - 1)])
        if np.linalg.norm(pos - scene.tx_position) < min_tx_dist:
            continue
        ps = trace_paths(scene, pos)
        if len(ps) > 0:
            return ps
    raise RuntimeError("could not sample a receiver with any propagation path")


def _rt_track_pathsets(scene: Scene, rng, seq_len: int, step_m: float,
                       source_oversample: int = 4, min_tx_dist: float = 5.0,
                       max_tx_dist: float = np.inf, max_tries: int = 200):
    """Trace a random axis-aligned track coarsely and interpolate to the
    target step. Returns (pathsets at each step, heading)."""
    xmin, ymin, xmax, ymax = scene.bounds
    span = (seq_len - 1) * step_m
    src_step = step_m * source_oversample
    n_src = int(np.ceil(span / src_step)) + 2
    directions = [(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0)]

    for _ in range(max_tries):
        d = np.array(directions[rng.integers(0, 4)])
        margin = src_step * (n_src - 1) + 1.0
        start = np.array([rng.uniform(xmin + 1, xmax - 1), rng.uniform(ymin + 1, ymax - 1)])
        end = start + d * margin
        if not scene.contains(end):
            continue
        # keep the whole track inside the configured distance ring around tx
        mid = start + d * margin / 2
        dists = [np.linalg.norm(p - scene.tx_position) for p in (start, end, mid)]
        if min(dists) < min_tx_dist or max(dists) > max_tx_dist:
            continue
        samples = []
        ok = True
        for k in range(n_src):
            pos = start + d * (k * src_step)
            ps = trace_paths(scene, pos)
            if len(ps) == 0:
                ok = False
                break
            samples.append((pos, ps))
        if not ok:
            continue
        track = Track(start=start, direction=d, step_m=step_m, n_steps=seq_len)
        interp = interpolate_track(samples, track, target_step_m=step_m)
        return interp[:seq_len], track.heading_rad
    raise RuntimeError("could not place a fully covered track in the scene")


# ---------------------------------------------------------------------------
# Task 1: compression snapshots

def _snapshot_grid(domain: dict, rng, params: dict, scene: Scene | None,
                   imported=None):
    n_t = params["n_t"]
    fs = params["subcarrier_spacing_hz"]
    n_tones = params["n_prb"] * params["tones_per_prb"]
    freqs = np.arange(n_tones) * fs
    rx = ArrayGeometry(1)
    tx = ArrayGeometry(n_t)

    kind = domain["kind"]
    if kind in ("tdl", "cdl", "uma"):
        ps = _stochastic_pathset(domain, 1, n_t, rng)
    elif kind == "rt_scene":
        ps = _rt_snapshot_pathset(scene, rng)
    elif kind == "rt_import":
        idx = int(rng.integers(0, len(imported)))
        ps = imported[idx][1]
        while len(ps) == 0:  # skip outage receivers
            idx = int(rng.integers(0, len(imported)))
            ps = imported[idx][1]
    else:
        raise ValueError(f"domain kind {kind!r} not supported for compression")
    return synth_geometric(ps, rx, tx, freqs, t_s=0.0)


def build_compression_dataset(domain: dict, n: int, seed: int, params: dict | None = None) -> CompressionDataset:
    params = {**TASK1, **(params or {})}
    scene = scene_from_config(domain.get("scene")) if domain["kind"] == "rt_scene" else None
    imported = import_paths(domain["file"]) if domain["kind"] == "rt_import" else None

    tensors, means, stds, fractions = [], [], [], []
    for i in range(n):
        rng = rng_for(seed, "t1", domain["name"], i)
        fine = _snapshot_grid(domain, rng, params, scene, imported)
        grid = prb_average(fine, params["tones_per_prb"], params["n_prb"])
        fractions.append(angle_delay_energy_fraction(grid, params["n_delay_keep"]))
        sample = zmuv(to_angle_delay(grid, params["n_delay_keep"]))
        tensors.append(sample.tensor)
        means.append(sample.mean)
        stds.append(sample.std)

    manifest = {
        "version": DATASET_SCHEMA_VERSION,
        "task": "compression",
        "domain": domain,
        "n": n,
        "seed": seed,
        "params": params,
        "normalization": {"scheme": "zmuv"},
        "energy_fraction": float(np.mean(fractions)),
        "shape": [n, 2, params["n_delay_keep"], params["n_t"]],
    }
    return CompressionDataset(
        tensor=np.stack(tensors),
        means=np.array(means),
        stds=np.array(stds),
        energy_fraction=float(np.mean(fractions)),
        manifest=manifest,
    )


# ---------------------------------------------------------------------------
# Task 2: prediction sequences

def _sequence(domain: dict, rng, params: dict, scene: Scene | None) -> ChannelSequence:
    n_t = params["n_t"]
    rx = ArrayGeometry(1)
    tx = ArrayGeometry(n_t)
    freqs = np.array([0.0])
    kind = domain["kind"]
    L = params["seq_len"]
    period = params["period_s"]
    speed = params["speed_mps"]
    carrier = float(domain.get("carrier_hz", DEFAULT_CARRIER_HZ))

    if kind in ("tdl", "cdl", "uma"):
        ps = _stochastic_pathset(domain, 1, n_t, rng)
        mobility = draw_mobility(rng, speed, len(ps))
        return evolve_sequence(ps, mobility, L, period, carrier, rx, tx, freqs)
    if kind == "single_path":
        ps = _single_path_pathset(domain, rng)
        grids = [synth_geometric(ps, rx, tx, freqs, t_s=k * period) for k in range(L)]
        return ChannelSequence(grids=grids, sampling_period_s=period)
    if kind == "rt_scene":
        step = speed * period
        pathsets, heading = _rt_track_pathsets(
            scene, rng, L, step,
            min_tx_dist=float(domain.get("min_tx_dist", 5.0)),
            max_tx_dist=float(domain.get("max_tx_dist", np.inf)),
        )
        pathsets = assign_doppler(pathsets, speed, heading, carrier)
        grids = [synth_geometric(ps, rx, tx, freqs, t_s=0.0) for ps in pathsets]
        return ChannelSequence(grids=grids, sampling_period_s=period)
    raise ValueError(f"domain kind {kind!r} not supported for prediction")


def build_prediction_dataset(domain: dict, n: int, seed: int, params: dict | None = None) -> PredictionDataset:
    params = {**TASK2, **(params or {})}
    scene = scene_from_config(domain.get("scene")) if domain["kind"] == "rt_scene" else None
    horizons = tuple(params["horizons_ms"])

    sequences = [
        _sequence(domain, rng_for(seed, "t2", domain["name"], i), params, scene)
        for i in range(n)
    ]
    scaled, scale = maxabs_scale(sequences)

    inputs, targets = [], {h: [] for h in horizons}
    for tensor in scaled:
        w = make_windows(tensor, params["period_s"], scale, params["l_in"], horizons)
        inputs.append(w.inputs)
        for h in horizons:
            targets[h].append(w.targets[h])

    manifest = {
        "version": DATASET_SCHEMA_VERSION,
        "task": "prediction",
        "domain": domain,
        "n": n,
        "seed": seed,
        "params": params,
        "normalization": {"scheme": "maxabs", "scale": scale},
        "horizons_ms": list(horizons),
        "shape": [n, params["l_in"], 4],
    }
    return PredictionDataset(
        inputs=np.stack(inputs),
        targets={h: np.stack(targets[h]) for h in horizons},
        scale=scale,
        manifest=manifest,
    )


# ---------------------------------------------------------------------------
# Archives and cache

def dataset_cache_key(task: str, domain: dict, n: int, seed: int, params: dict | None = None) -> str:
    base = TASK1 if task == "compression" else TASK2
    return stable_hash({
        "task": task, "domain": domain, "n": n, "seed": seed,
        "params": {**base, **(params or {})},
    })


def save_dataset(ds, path_prefix: str | FilePath):
    prefix = FilePath(path_prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(ds, CompressionDataset):
        np.savez(prefix.with_suffix(".npz"), tensor=ds.tensor, means=ds.means, stds=ds.stds)
    elif isinstance(ds, PredictionDataset):
        arrays = {f"targets_{h}": t for h, t in ds.targets.items()}
        np.savez(prefix.with_suffix(".npz"), inputs=ds.inputs, **arrays)
    else:
        raise TypeError(f"unknown dataset type {type(ds)!r}")
    with open(prefix.with_suffix(".json"), "w") as f:
        json.dump(ds.manifest, f, indent=2, sort_keys=True)


def load_dataset(path_prefix: str | FilePath):
    prefix = FilePath(path_prefix)
    with open(prefix.with_suffix(".json")) as f:
        manifest = json.load(f)
    with np.load(prefix.with_suffix(".npz")) as data:
        if manifest["task"] == "compression":
            return CompressionDataset(
                tensor=data["tensor"], means=data["means"], stds=data["stds"],
                energy_fraction=manifest["energy_fraction"], manifest=manifest,
            )
        targets = {
            int(k.split("_")[1]): data[k] for k in data.files if k.startswith("targets_")
        }
        return PredictionDataset(
            inputs=data["inputs"], targets=targets,
            scale=manifest["normalization"]["scale"], manifest=manifest,
        )


def build_dataset(task: str, domain: dict, n: int, seed: int,
                  params: dict | None = None, cache_dir: str | FilePath | None = None):
    """Build (or load from cache) one domain dataset for one task."""
    if cache_dir is not None:
        key = dataset_cache_key(task, domain, n, seed, params)
        prefix = FilePath(cache_dir) / "datasets" / f"{domain['name']}-{key}"
        if prefix.with_suffix(".npz").exists() and prefix.with_suffix(".json").exists():
            return load_dataset(prefix)
    if task == "compression":
        ds = build_compression_dataset(domain, n, seed, params)
    elif task == "prediction":
        ds = build_prediction_dataset(domain, n, seed, params)
    else:
        raise ValueError(f"unknown task {task!r}")
    if cache_dir is not None:
        save_dataset(ds, prefix)
    return ds
