"""Synthetic drives for calibrating and stress-testing the pipeline.

The generated vehicle moves at constant speed along a straight path,
photographing at a fixed rate. Scene content is modelled as a pool of
landmark descriptors: each frame sees a contiguous slice of the pool, and
the slice advances a few landmarks per frame. Two frames therefore share
descriptors in linear proportion to their time difference, which mimics
real image overlap decay and is exactly symmetric in both directions.

Queries replay positions on the same path: each takes the nearest frame's
descriptors, perturbed per component with Gaussian noise, with a fraction
replaced by random distractor vectors.
"""

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
import math
from math import cos, radians, sin

import numpy as np

from .database import Database, GeoFrame, ScanConfig
from .geodesy import GeoPoint
from .kalman import FilterConfig
from .matching import DESCRIPTOR_DIM, DescriptorSet, MatchConfig
from .pipeline import ErrorStats, LocalizationTrace, Query, evaluate, localize_sequence

METERS_PER_DEG = 111_320.0

T0_NS = 1_500_000_000_000_000_000
"""Epoch of every synthetic drive."""


@dataclass(frozen=True)
class WorldConfig:
    """Parameters of a synthetic drive and its query model."""

    speed_mps: float = 18.0
    heading_deg: float = 45.0
    db_hz: float = 10.0
    duration_s: float = 8.0
    keypoints_per_frame: int = 200
    landmark_overlap: float = 0.95
    query_noise_sigma: float = 0.01
    distractor_fraction: float = 0.1
    start_lat: float = 49.0
    start_lon: float = 8.4
    seed: int = 0

    def __post_init__(self):
        if self.speed_mps < 0:
            raise ValueError(f"speed_mps must be non-negative, got {self.speed_mps}")
        if not self.db_hz > 0:
            raise ValueError(f"db_hz must be positive, got {self.db_hz}")
        if not self.duration_s > 0:
            raise ValueError(f"duration_s must be positive, got {self.duration_s}")
        if self.keypoints_per_frame < 2:
            raise ValueError(f"keypoints_per_frame must be at least 2, got {self.keypoints_per_frame}")
        if not 0.0 <= self.landmark_overlap <= 1.0:
            raise ValueError(f"landmark_overlap must be in [0, 1], got {self.landmark_overlap}")
        if self.query_noise_sigma < 0:
            raise ValueError(f"query_noise_sigma must be non-negative, got {self.query_noise_sigma}")
        if not 0.0 <= self.distractor_fraction <= 1.0:
            raise ValueError(f"distractor_fraction must be in [0, 1], got {self.distractor_fraction}")


def _velocity_dps(cfg: WorldConfig) -> tuple[float, float]:
    """Trajectory velocity in degrees per second (flat-earth at start latitude)."""
    vn = cfg.speed_mps * cos(radians(cfg.heading_deg))
    ve = cfg.speed_mps * sin(radians(cfg.heading_deg))
    return vn / METERS_PER_DEG, ve / (METERS_PER_DEG * cos(radians(cfg.start_lat)))


def position_at(cfg: WorldConfig, ts_ns: int) -> GeoPoint:
    """Exact trajectory position at a timestamp."""
    vlat, vlon = _velocity_dps(cfg)
    t = (ts_ns - T0_NS) / 1e9
    return GeoPoint(cfg.start_lat + vlat * t, cfg.start_lon + vlon * t)


def _frame_count(cfg: WorldConfig) -> int:
    return int(round(cfg.duration_s * cfg.db_hz))


def _frame_period_ns(cfg: WorldConfig) -> int:
    return int(round(1e9 / cfg.db_hz))


def _unit_rows(rng: np.random.Generator, n: int) -> np.ndarray:
    rows = rng.standard_normal((n, DESCRIPTOR_DIM), dtype=np.float32)
    norms = np.linalg.norm(rows, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return rows / norms


def gen_world(cfg: WorldConfig) -> Database:
    """Generate the database side of a synthetic drive.

    Bit-identical for a fixed config. Consecutive frames share
    round(k * landmark_overlap) descriptors; the shared fraction decays
    linearly with frame distance and hits zero at k / (k - shared) frames.
    """
    n = _frame_count(cfg)
    k = cfg.keypoints_per_frame
    fresh = k - int(round(k * cfg.landmark_overlap))
    rng = np.random.default_rng([cfg.seed, 0])
    pool = _unit_rows(rng, k + fresh * max(0, n - 1))
    pool.setflags(write=False)

    period = _frame_period_ns(cfg)
    frames = []
    for i in range(n):
        ts = T0_NS + i * period
        start = i * fresh
        descriptors = DescriptorSet._wrap(pool[start : start + k])
        frames.append(GeoFrame(i, ts, position_at(cfg, ts), descriptors))
    return Database(frames, source=f"synthetic drive seed={cfg.seed}", camera="synthetic")


def gen_queries(
    db: Database,
    start_ts: int,
    n: int,
    period_s: float,
    cfg: WorldConfig,
) -> list[Query]:
    """Queries along the drive: nearest-frame descriptors, noised, with truth.

    Raises ValueError when any query timestamp falls outside the database
    time range.
    """
    if n < 1:
        raise ValueError(f"need at least one query, got {n}")
    first = db.frames[0].timestamp_ns
    last = db.frames[-1].timestamp_ns
    frame_ts = np.array([f.timestamp_ns for f in db.frames])

    rng = np.random.default_rng([cfg.seed, 1])
    k = cfg.keypoints_per_frame
    n_distract = int(round(k * cfg.distractor_fraction))

    queries = []
    for i in range(n):
        ts = start_ts + int(round(i * period_s * 1e9))
        if not first <= ts <= last:
            raise ValueError(f"query {i} at {ts} outside database range [{first}, {last}]")
        nearest = int(np.argmin(np.abs(frame_ts - ts)))
        base = db.frames[nearest].descriptors.array
        if cfg.query_noise_sigma > 0:
            arr = base + rng.standard_normal(base.shape, dtype=np.float32) * np.float32(
                cfg.query_noise_sigma
            )
        else:
            arr = base.copy()
        if n_distract > 0:
            rows = rng.choice(len(base), size=n_distract, replace=False)
            arr[rows] = _unit_rows(rng, n_distract)
        queries.append(Query(DescriptorSet(arr), ts, position_at(cfg, ts)))
    return queries


def _trial_seeds(master_seed: int, trials: int) -> list[tuple[int, int]]:
    children = np.random.SeedSequence(master_seed).spawn(trials)
    return [tuple(int(v) for v in c.generate_state(2)) for c in children]


def _run_trial(args) -> LocalizationTrace:
    world_cfg, scan_cfg, match_cfg, filter_cfg, steps, period_s, world_seed, start_seed = args
    cfg = replace(world_cfg, seed=world_seed)
    db = gen_world(cfg)

    # Start on the frame grid: queries sample the same camera stream as the
    # database, and a grid-aligned query sees equally distant candidate
    # frames on both sides of the exclusion gap.
    period_ns = _frame_period_ns(cfg)
    margin = math.ceil(((scan_cfg.exclusion_s or 0.0) + 2.0 / cfg.db_hz) * 1e9 / period_ns)
    span = round((steps - 1) * period_s * 1e9 / period_ns)
    lo = margin
    hi = _frame_count(cfg) - 1 - span - margin
    if hi < lo:
        raise ValueError(
            f"duration_s={cfg.duration_s} too short for {steps} queries at {period_s} s spacing"
        )
    start_idx = int(np.random.default_rng(start_seed).integers(lo, hi + 1))
    start_ts = T0_NS + start_idx * period_ns

    queries = gen_queries(db, start_ts, steps, period_s, cfg)
    return localize_sequence(db, queries, scan_cfg, match_cfg, filter_cfg)


def run_monte_carlo(
    world_cfg: WorldConfig,
    scan_cfg: ScanConfig,
    match_cfg: MatchConfig,
    filter_cfg: FilterConfig,
    trials: int,
    steps: int = 6,
    period_s: float = 1.0,
    workers: int = 1,
) -> ErrorStats:
    """Repeated synthetic drives, each localized end to end.

    Every trial generates a fresh world and query start from a per-trial
    stream spawned off world_cfg.seed, so results do not depend on worker
    count or execution order. Returns per-step error statistics.
    """
    if trials < 1:
        raise ValueError(f"trials must be positive, got {trials}")
    jobs = [
        (world_cfg, scan_cfg, match_cfg, filter_cfg, steps, period_s, ws, ss)
        for ws, ss in _trial_seeds(world_cfg.seed, trials)
    ]
    if workers == 1:
        traces = [_run_trial(j) for j in jobs]
    else:
        max_workers = workers if workers > 0 else (os.cpu_count() or 1)
        with ProcessPoolExecutor(max_workers=max_workers) as pool:
            traces = list(pool.map(_run_trial, jobs, chunksize=max(1, trials // (4 * max_workers))))
    return evaluate(traces)
