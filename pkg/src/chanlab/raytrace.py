"""Site-specific channel source: image-method tracing over 2-D wall scenes.

The tracer enumerates mirror images of the transmitter across ordered wall
sequences (up to a configurable reflection depth), walks each candidate back
to the receiver, and keeps the paths whose reflection points fall inside the
wall segments with every leg unobstructed. Walls are two-sided mirrors with
a complex reflection coefficient; diffraction and diffuse scattering are not
modeled.

Per-path quantities:
    amplitude   (wavelength / (4 pi d)) * product of wall coefficients
    phase       -2 pi d / wavelength (carried in the complex gain)
    delay       d / c
    aod         azimuth of the first leg leaving the transmitter
    aoa         azimuth at the receiver pointing toward the incoming wave
    tag         tuple of reflecting wall indices (() for line of sight)

The module also provides an importer/exporter for external per-receiver path
files (JSON-lines or CSV), linear interpolation of per-path components along
straight receiver tracks (with unwrapped phases and zero-power ghost padding
on path birth/death), and geometric Doppler assignment from the angles of
arrival. Positions are interpolated with the paths, so a dense track can be
synthesized from a coarse traced grid.
"""

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path as FilePath

import numpy as np

from .channel import Path, PathSet, TWO_PI
from .constants import DEFAULT_CARRIER_HZ, SPEED_OF_LIGHT, wavelength_m

_PARAM_TOL = 1e-9  # open-interval tolerance along a leg (endpoint contacts pass)
PATHFILE_SCHEMA_VERSION = 1
CSV_COLUMNS = ["pos_x", "pos_y", "power_db", "phase_deg", "delay_s", "aod_deg", "aoa_deg"]
_AMP_FLOOR = 1e-30  # zero-amplitude paths export at the dB floor


@dataclass
class Wall:
    """Finite 2-D segment with a complex reflection coefficient."""

    p1: np.ndarray
    p2: np.ndarray
    reflection: complex = 0.7 + 0.0j

    def __post_init__(self):
        self.p1 = np.asarray(self.p1, dtype=np.float64)
        self.p2 = np.asarray(self.p2, dtype=np.float64)
        if np.allclose(self.p1, self.p2):
            raise ValueError("wall must have positive length")


@dataclass
class Scene:
    """Walls + transmitter inside a rectangular boundary."""

    walls: list[Wall]
    tx_position: np.ndarray
    bounds: tuple[float, float, float, float]  # xmin, ymin, xmax, ymax
    max_reflections: int = 2
    carrier_hz: float = DEFAULT_CARRIER_HZ

    def __post_init__(self):
        self.tx_position = np.asarray(self.tx_position, dtype=np.float64)
        if self.max_reflections < 0:
            raise ValueError("max_reflections must be >= 0")
        xmin, ymin, xmax, ymax = self.bounds
        if not (xmin < xmax and ymin < ymax):
            raise ValueError("degenerate scene bounds")
        self._wall_a = (
            np.stack([w.p1 for w in self.walls]) if self.walls else np.zeros((0, 2))
        )
        self._wall_b = (
            np.stack([w.p2 for w in self.walls]) if self.walls else np.zeros((0, 2))
        )
        self._images = None

    @property
    def wavelength(self) -> float:
        return wavelength_m(self.carrier_hz)

    def contains(self, point) -> bool:
        x, y = point
        xmin, ymin, xmax, ymax = self.bounds
        return xmin <= x <= xmax and ymin <= y <= ymax

    def image_candidates(self) -> list[tuple[tuple[int, ...], np.ndarray]]:
        """Mirror images of the transmitter for every wall sequence up to
        max_reflections (cached; receiver independent)."""
        if self._images is None:
            images = [((), self.tx_position)]
            frontier = [((), self.tx_position)]
            for _ in range(self.max_reflections):
                nxt = []
                for seq, pos in frontier:
                    for idx, wall in enumerate(self.walls):
                        if seq and seq[-1] == idx:
                            continue  # cannot reflect twice in a row off one mirror
                        nxt.append((seq + (idx,), _mirror(pos, wall.p1, wall.p2)))
                images.extend(nxt)
                frontier = nxt
            self._images = images
        return self._images


@dataclass
class Track:
    """Straight axis-aligned receiver trajectory."""

    start: np.ndarray
    direction: np.ndarray  # (+-1, 0) or (0, +-1)
    step_m: float
    n_steps: int

    def __post_init__(self):
        self.start = np.asarray(self.start, dtype=np.float64)
        self.direction = np.asarray(self.direction, dtype=np.float64)
        ok = sorted(np.abs(self.direction).tolist()) == [0.0, 1.0]
        if not ok:
            raise ValueError("direction must be axis-aligned: (+-1,0) or (0,+-1)")
        if self.step_m <= 0:
            raise ValueError("step_m must be > 0")

    @property
    def heading_rad(self) -> float:
        return math.atan2(self.direction[1], self.direction[0])

    def positions(self) -> np.ndarray:
        k = np.arange(self.n_steps)[:, None]
        return self.start[None, :] + k * self.step_m * self.direction[None, :]


def _mirror(point: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Reflect `point` across the infinite line through segment (a, b)."""
    d = b - a
    t = np.dot(point - a, d) / np.dot(d, d)
    foot = a + t * d
    return 2.0 * foot - point


def _cross(u, v):
    return u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0]


def _segment_blocked(scene: Scene, a: np.ndarray, b: np.ndarray) -> bool:
    """True if any wall crosses the open segment (a, b). Contacts at the
    segment endpoints (the reflection points themselves) do not block."""
    if not scene.walls:
        return False
    d = b - a
    wa, wb = scene._wall_a, scene._wall_b
    wd = wb - wa
    denom = _cross(d[None, :], wd)
    off = wa - a[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = _cross(off, wd) / denom  # param along the leg
        u = _cross(off, d[None, :]) / denom  # param along the wall
    hit = (
        (np.abs(denom) > 1e-14)
        & (t > _PARAM_TOL)
        & (t < 1.0 - _PARAM_TOL)
        & (u >= -1e-12)
        & (u <= 1.0 + 1e-12)
    )
    return bool(np.any(hit))


def _line_param(p: np.ndarray, q: np.ndarray, a: np.ndarray, b: np.ndarray):
    """Intersection of segment p->q with the line through wall (a, b).

    Returns (t_along_pq, u_along_wall) or None when parallel."""
    d = q - p
    wd = b - a
    denom = _cross(d, wd)
    if abs(denom) < 1e-14:
        return None
    off = a - p
    t = _cross(off, wd) / denom
    u = _cross(off, d) / denom
    return t, u


def trace_paths(scene: Scene, rx_position) -> PathSet:
    """Image-method paths from the scene transmitter to one receiver."""
    rx = np.asarray(rx_position, dtype=np.float64)
    if not scene.contains(rx):
        raise ValueError(f"receiver {rx.tolist()} outside scene bounds {scene.bounds}")
    if np.allclose(rx, scene.tx_position):
        raise ValueError("receiver coincides with the transmitter")

    lam = scene.wavelength
    paths: list[Path] = []
    for seq, image in scene.image_candidates():
        if not seq:
            if _segment_blocked(scene, scene.tx_position, rx):
                continue
            points = [scene.tx_position, rx]
            length = float(np.linalg.norm(rx - scene.tx_position))
            coeff = 1.0 + 0.0j
        else:
            hit = _walk_back(scene, seq, image, rx)
            if hit is None:
                continue
            points, length = hit
            coeff = np.prod([scene.walls[i].reflection for i in seq])
        if length < 1e-9:
            continue

        amp = lam / (4.0 * np.pi * length) * abs(coeff)
        phase = -TWO_PI * length / lam + np.angle(coeff)
        first_leg = points[1] - points[0]
        last_leg = points[-2] - points[-1]  # rx toward the last interaction
        paths.append(
            Path(
                gain=complex(amp * np.exp(1j * phase)),
                delay_s=length / SPEED_OF_LIGHT,
                aod_rad=math.atan2(first_leg[1], first_leg[0]),
                aoa_rad=math.atan2(last_leg[1], last_leg[0]),
                tag=tuple(seq),
            )
        )
    return PathSet(paths=paths, rx_position=rx.copy())


def _walk_back(scene: Scene, seq, image: np.ndarray, rx: np.ndarray):
    """Fold an image candidate back into a physical polyline, or None.

    Walks rx -> last mirror -> ... -> tx, checking that each reflection
    point lies inside its wall segment and every leg is unobstructed.
    """
    # Images of tx across the first i walls of seq.
    images = [scene.tx_position]
    for idx in seq:
        images.append(_mirror(images[-1], scene.walls[idx].p1, scene.walls[idx].p2))

    target = rx
    pts_rev = [rx]
    for i in range(len(seq) - 1, -1, -1):
        wall = scene.walls[seq[i]]
        res = _line_param(images[i + 1], target, wall.p1, wall.p2)
        if res is None:
            return None
        t, u = res
        if not (_PARAM_TOL < t < 1.0 - _PARAM_TOL):
            return None
        if not (1e-12 <= u <= 1.0 - 1e-12):
            return None
        target = wall.p1 + u * (wall.p2 - wall.p1)
        pts_rev.append(target)
    pts_rev.append(scene.tx_position)
    points = pts_rev[::-1]  # tx, x_1, ..., x_k, rx

    for a, b in zip(points[:-1], points[1:]):
        if _segment_blocked(scene, a, b):
            return None
    length = float(np.linalg.norm(image - rx))
    return points, length


def assign_doppler(
    pathsets: list[PathSet],
    speed_mps: float,
    heading_rad: float,
    f_c_hz: float,
) -> list[PathSet]:
    """Set per-path Doppler from the scene geometry:
    fD = (speed * fc / c) * cos(aoa - heading). Deterministic given angles."""
    fd_max = speed_mps * f_c_hz / SPEED_OF_LIGHT
    out = []
    for ps in pathsets:
        paths = [
            replace(p, doppler_hz=fd_max * math.cos(p.aoa_rad - heading_rad))
            for p in ps.paths
        ]
        out.append(PathSet(paths=paths, rx_position=ps.rx_position, rx_velocity=ps.rx_velocity))
    return out


# ---------------------------------------------------------------------------
# Track interpolation

def _wrap_to_pi(x: float) -> float:
    return (x + np.pi) % TWO_PI - np.pi


def _match_paths(ps_a: PathSet, ps_b: PathSet, mismatch: str):
    """Pair paths across two neighbouring receiver positions.

    Tagged paths (tracer output) match by interaction signature; untagged
    paths match by delay-sorted index. Unmatched paths are padded with a
    zero-amplitude ghost twin on the other side so they fade in/out linearly
    over the segment (mismatch='pad'), or raise (mismatch='error').
    """
    def sort_key(p):
        return (p.tag if p.tag is not None else (), p.delay_s)

    a = sorted(ps_a.paths, key=sort_key)
    b = sorted(ps_b.paths, key=sort_key)
    tagged = all(p.tag is not None for p in a + b)

    if tagged:
        map_a = {p.tag: p for p in a}
        map_b = {p.tag: p for p in b}
        keys = sorted(set(map_a) | set(map_b))
        if (set(map_a) != set(map_b)) and mismatch == "error":
            raise ValueError(
                f"path signature mismatch between track samples: "
                f"{sorted(set(map_a) ^ set(map_b))}"
            )
        pairs = []
        for key in keys:
            pa, pb = map_a.get(key), map_b.get(key)
            pairs.append((pa if pa is not None else _ghost(pb), pb if pb is not None else _ghost(pa)))
        return pairs

    if len(a) != len(b):
        if mismatch == "error":
            raise ValueError(f"path count mismatch between track samples: {len(a)} vs {len(b)}")
        while len(a) < len(b):
            a.append(_ghost(b[len(a)]))
        while len(b) < len(a):
            b.append(_ghost(a[len(b)]))
    return list(zip(a, b))


def _ghost(src: Path) -> Path:
    """Zero-amplitude twin keeping the source geometry (fades in/out)."""
    amp_phase = np.angle(src.gain)
    return replace(src, gain=complex(_AMP_FLOOR * np.exp(1j * amp_phase)))


def interpolate_track(
    samples: list[tuple[np.ndarray, PathSet]],
    track: Track,
    target_step_m: float,
    mismatch: str = "pad",
) -> list[PathSet]:
    """Linearly interpolate per-path components along a straight track.

    Interpolates amplitude, unwrapped phase (nearest-multiple-of-2pi
    continuation between neighbouring samples), delay, both angles and
    Doppler. Valid when the source spacing is below the carrier wavelength;
    the caller chooses spacing. Returns one PathSet per track step with
    rx_position filled.
    """
    if len(samples) < 2:
        raise ValueError("need at least two track samples to interpolate")
    if mismatch not in ("pad", "error"):
        raise ValueError(f"unknown mismatch policy {mismatch!r}")

    direction = track.direction
    s_vals = np.array(
        [float(np.dot(np.asarray(pos, dtype=np.float64) - track.start, direction)) for pos, _ in samples]
    )
    if np.any(np.diff(s_vals) <= 0):
        raise ValueError("track samples must be strictly ordered along the track direction")
    if target_step_m >= np.min(np.diff(s_vals)):
        raise ValueError("target step must be smaller than the source sample spacing")

    span = track.step_m * (track.n_steps - 1)
    n_out = int(np.floor(span / target_step_m + 1e-9)) + 1
    targets = np.arange(n_out) * target_step_m
    if targets[0] < s_vals[0] - 1e-9 or targets[-1] > s_vals[-1] + 1e-9:
        raise ValueError(
            f"track span [0, {targets[-1]:.3f}] m exceeds sampled range "
            f"[{s_vals[0]:.3f}, {s_vals[-1]:.3f}] m"
        )

    # Per-segment matched pairs, computed once.
    seg_pairs = [
        _match_paths(samples[i][1], samples[i + 1][1], mismatch)
        for i in range(len(samples) - 1)
    ]

    out = []
    for s in targets:
        i = int(np.clip(np.searchsorted(s_vals, s, side="right") - 1, 0, len(samples) - 2))
        s0, s1 = s_vals[i], s_vals[i + 1]
        u = (s - s0) / (s1 - s0)
        paths = [_lerp_path(pa, pb, u) for pa, pb in seg_pairs[i]]
        out.append(
            PathSet(paths=paths, rx_position=track.start + s * direction)
        )
    return out


def _lerp_path(pa: Path, pb: Path, u: float) -> Path:
    amp = (1.0 - u) * abs(pa.gain) + u * abs(pb.gain)
    ph0 = np.angle(pa.gain)
    ph1 = ph0 + _wrap_to_pi(np.angle(pb.gain) - ph0)
    phase = (1.0 - u) * ph0 + u * ph1
    aod = pa.aod_rad + u * _wrap_to_pi(pb.aod_rad - pa.aod_rad)
    aoa = pa.aoa_rad + u * _wrap_to_pi(pb.aoa_rad - pa.aoa_rad)
    return Path(
        gain=complex(amp * np.exp(1j * phase)),
        delay_s=(1.0 - u) * pa.delay_s + u * pb.delay_s,
        aod_rad=float(aod),
        aoa_rad=float(aoa),
        doppler_hz=(1.0 - u) * pa.doppler_hz + u * pb.doppler_hz,
        tag=pa.tag if pa.tag is not None else pb.tag,
    )


# ---------------------------------------------------------------------------
# Path files (JSON-lines and CSV)

def _path_to_record(p: Path) -> dict:
    amp = max(abs(p.gain), _AMP_FLOOR)
    return {
        "power_db": 20.0 * math.log10(amp),
        "phase_deg": math.degrees(np.angle(p.gain)),
        "delay_s": p.delay_s,
        "aod_deg": math.degrees(p.aod_rad),
        "aoa_deg": math.degrees(p.aoa_rad),
    }


def _record_to_path(rec: dict) -> Path:
    amp = 10.0 ** (float(rec["power_db"]) / 20.0)
    phase = math.radians(float(rec["phase_deg"]))
    delay = float(rec["delay_s"])
    if not (np.isfinite(delay) and delay >= 0):
        raise ValueError(f"delay must be finite and >= 0, got {delay}")
    return Path(
        gain=complex(amp * np.exp(1j * phase)),
        delay_s=delay,
        aod_rad=math.radians(float(rec["aod_deg"])),
        aoa_rad=math.radians(float(rec["aoa_deg"])),
    )


def export_paths_jsonl(records: list[tuple[np.ndarray, PathSet]], path: str | FilePath):
    """One receiver per line; empty path lists (outage) are preserved."""
    with open(path, "w") as f:
        for pos, ps in records:
            doc = {
                "version": PATHFILE_SCHEMA_VERSION,
                "position": [float(pos[0]), float(pos[1])],
                "paths": [_path_to_record(p) for p in ps.paths],
            }
            f.write(json.dumps(doc) + "\n")


def import_paths_jsonl(path: str | FilePath) -> list[tuple[np.ndarray, PathSet]]:
    out = []
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
                if doc.get("version") != PATHFILE_SCHEMA_VERSION:
                    raise ValueError(f"unsupported path-file version {doc.get('version')!r}")
                pos = np.array(doc["position"], dtype=np.float64)
                paths = [_record_to_path(rec) for rec in doc["paths"]]
            except (ValueError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}: malformed record at line {lineno}: {exc}") from exc
            out.append((pos, PathSet(paths=paths, rx_position=pos.copy())))
    return out


def export_paths_csv(records: list[tuple[np.ndarray, PathSet]], path: str | FilePath):
    """Path-major CSV with fixed column order; receivers are groups of
    consecutive rows sharing a position. Outage receivers (no paths) cannot
    be represented in this variant; use JSON-lines for lossless export."""
    with open(path, "w") as f:
        f.write(",".join(CSV_COLUMNS) + "\n")
        for pos, ps in records:
            for p in ps.paths:
                rec = _path_to_record(p)
                row = [repr(float(pos[0])), repr(float(pos[1]))] + [
                    repr(float(rec[c])) for c in CSV_COLUMNS[2:]
                ]
                f.write(",".join(row) + "\n")


def import_paths_csv(path: str | FilePath) -> list[tuple[np.ndarray, PathSet]]:
    out: list[tuple[np.ndarray, PathSet]] = []
    with open(path) as f:
        header = f.readline().strip()
        if header.split(",") != CSV_COLUMNS:
            raise ValueError(f"{path}: unexpected CSV header {header!r}")
        current_pos = None
        current_paths: list[Path] = []
        for lineno, line in enumerate(f, start=2):
            if not line.strip():
                continue
            fields = line.strip().split(",")
            if len(fields) != len(CSV_COLUMNS):
                raise ValueError(f"{path}: malformed record at line {lineno}: expected "
                                 f"{len(CSV_COLUMNS)} fields, got {len(fields)}")
            try:
                vals = dict(zip(CSV_COLUMNS, map(float, fields)))
                pos = np.array([vals["pos_x"], vals["pos_y"]])
                p = _record_to_path(vals)
            except ValueError as exc:
                raise ValueError(f"{path}: malformed record at line {lineno}: {exc}") from exc
            if current_pos is None or not np.array_equal(pos, current_pos):
                if current_pos is not None:
                    out.append((current_pos, PathSet(paths=current_paths, rx_position=current_pos.copy())))
                current_pos, current_paths = pos, []
            current_paths.append(p)
        if current_pos is not None:
            out.append((current_pos, PathSet(paths=current_paths, rx_position=current_pos.copy())))
    return out


def import_paths(path: str | FilePath) -> list[tuple[np.ndarray, PathSet]]:
    """Dispatch on file suffix: .jsonl / .json -> JSON-lines, .csv -> CSV."""
    suffix = FilePath(path).suffix.lower()
    if suffix in (".jsonl", ".json"):
        return import_paths_jsonl(path)
    if suffix == ".csv":
        return import_paths_csv(path)
    raise ValueError(f"unknown path-file format: {suffix!r}")
