"""Geotagged descriptor database: storage, ingestion, windowed retrieval.

On-disk container format (little-endian throughout):

    magic   4 bytes  b"VLDB"
    version u32      currently 1
    count   u32      number of frames
    then per frame:
        frame_id     u64
        timestamp_ns i64
        lat          f64 decimal degrees
        lon          f64 decimal degrees
        k            u32
        descriptors  k * 128 * f32

A standalone ``.desc`` file is one frame record without the container
header. Descriptor extraction runs out-of-process (any SIFT-style frontend
works); this module only consumes its output.
"""

import csv
import logging
import struct
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import BinaryIO, Iterable, Iterator, Optional

import numpy as np

from .errors import DatabaseFormatError, EmptyCandidatesError, IngestError
from .geodesy import GeoPoint
from .matching import DESCRIPTOR_DIM, DescriptorSet, MatchConfig, best_match

logger = logging.getLogger(__name__)

MAGIC = b"VLDB"
FORMAT_VERSION = 1

_HEADER = struct.Struct("<4sII")
_FRAME_HEAD = struct.Struct("<QqddI")

CSV_MANIFEST_HEADER = ["frame_id", "timestamp_ns", "lat_deg", "lon_deg", "descriptor_path"]


@dataclass(frozen=True)
class GeoFrame:
    """One database image: identity, capture time, geotag, descriptors."""

    frame_id: int
    timestamp_ns: int
    geotag: GeoPoint
    descriptors: DescriptorSet

    def __post_init__(self):
        if self.frame_id < 0:
            raise ValueError(f"frame_id must be non-negative, got {self.frame_id}")


class Database:
    """Frames sorted by timestamp, with provenance metadata.

    Frame ids must be unique; frames are re-sorted by (timestamp_ns,
    frame_id) at construction, so ingest order does not matter.
    """

    def __init__(self, frames: Iterable[GeoFrame], source: str = "", camera: str = ""):
        ordered = sorted(frames, key=lambda f: (f.timestamp_ns, f.frame_id))
        seen: set[int] = set()
        for f in ordered:
            if f.frame_id in seen:
                raise ValueError(f"duplicate frame_id {f.frame_id}")
            seen.add(f.frame_id)
        self._frames = tuple(ordered)
        self._by_id = {f.frame_id: f for f in ordered}
        self.source = source
        self.camera = camera

    @property
    def frames(self) -> tuple[GeoFrame, ...]:
        return self._frames

    def frame_by_id(self, frame_id: int) -> GeoFrame:
        return self._by_id[frame_id]

    def __len__(self) -> int:
        return len(self._frames)

    def __iter__(self) -> Iterator[GeoFrame]:
        return iter(self._frames)

    def __repr__(self) -> str:
        return f"Database(frames={len(self)}, source={self.source!r}, camera={self.camera!r})"


@dataclass(frozen=True)
class ScanConfig:
    """Controls which frames a scan may consider.

    window_s restricts candidates to within that many seconds of center_ts
    (no restriction while center_ts is None, as on the first query of a
    sequence). exclusion_s drops frames too close to the query's own
    timestamp; that is an evaluation handicap for databases recorded on the
    same drive as the queries, off by default. recenter asks the sequence
    pipeline to slide the window center to the latest match instead of
    keeping the first one.
    """

    window_s: Optional[float] = 20.0
    exclusion_s: Optional[float] = None
    center_ts: Optional[int] = None
    recenter: bool = False

    def __post_init__(self):
        if self.window_s is not None and not self.window_s > 0:
            raise ValueError(f"window_s must be positive, got {self.window_s}")
        if self.exclusion_s is not None and self.exclusion_s < 0:
            raise ValueError(f"exclusion_s must be non-negative, got {self.exclusion_s}")


def scan(
    db: Database,
    query: DescriptorSet,
    query_ts: int,
    cfg: ScanConfig,
    match_cfg: MatchConfig,
) -> tuple[GeoFrame, int]:
    """Best-matching frame among those passing the window and exclusion filters.

    Returns (frame, correspondence_count). Raises EmptyCandidatesError when
    filtering leaves nothing to score.
    """
    frames = db.frames
    if cfg.window_s is not None and cfg.center_ts is not None:
        half = cfg.window_s * 1e9
        frames = [f for f in frames if abs(f.timestamp_ns - cfg.center_ts) <= half]
    if cfg.exclusion_s is not None:
        radius = cfg.exclusion_s * 1e9
        frames = [f for f in frames if abs(f.timestamp_ns - query_ts) > radius]
    if not frames:
        raise EmptyCandidatesError(
            f"no candidate frames for query_ts={query_ts} "
            f"(window_s={cfg.window_s}, center_ts={cfg.center_ts}, exclusion_s={cfg.exclusion_s})"
        )
    fid, count = best_match(query, [(f.frame_id, f.descriptors) for f in frames], match_cfg)
    return db.frame_by_id(fid), count


# ---------------------------------------------------------------------------
# binary serialization


def _write_frame(fh: BinaryIO, frame: GeoFrame) -> None:
    arr = frame.descriptors.array
    fh.write(
        _FRAME_HEAD.pack(
            frame.frame_id,
            frame.timestamp_ns,
            frame.geotag.lat,
            frame.geotag.lon,
            len(arr),
        )
    )
    fh.write(arr.astype("<f4", copy=False).tobytes())


def _read_exact(fh: BinaryIO, n: int, what: str) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise DatabaseFormatError(f"truncated file: expected {n} bytes for {what}, got {len(buf)}")
    return buf


def _read_frame(fh: BinaryIO) -> GeoFrame:
    fid, ts, lat, lon, k = _FRAME_HEAD.unpack(_read_exact(fh, _FRAME_HEAD.size, "frame header"))
    payload = _read_exact(fh, k * DESCRIPTOR_DIM * 4, f"descriptors of frame {fid}")
    arr = np.frombuffer(payload, dtype="<f4").reshape(k, DESCRIPTOR_DIM)
    return GeoFrame(fid, ts, GeoPoint(lat, lon), DescriptorSet(arr))


def save_db(db: Database, path) -> None:
    """Serialize a database; the result round-trips bit-exactly."""
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, len(db)))
        for frame in db:
            _write_frame(fh, frame)


def load_db(path) -> Database:
    with open(path, "rb") as fh:
        magic, version, count = _HEADER.unpack(_read_exact(fh, _HEADER.size, "header"))
        if magic != MAGIC:
            raise DatabaseFormatError(f"bad magic {magic!r}, not a descriptor database")
        if version != FORMAT_VERSION:
            raise DatabaseFormatError(f"unsupported format version {version}")
        frames = [_read_frame(fh) for _ in range(count)]
        if fh.read(1):
            raise DatabaseFormatError("trailing bytes after last frame")
    return Database(frames, source=str(path), camera="")


def write_desc_file(path, frame: GeoFrame) -> None:
    """Write one frame as a standalone .desc record."""
    with open(path, "wb") as fh:
        _write_frame(fh, frame)


def read_desc_file(path) -> GeoFrame:
    """Read one .desc record (a frame without the container header)."""
    with open(path, "rb") as fh:
        frame = _read_frame(fh)
        if fh.read(1):
            raise DatabaseFormatError(f"trailing bytes in {path}")
    return frame


# ---------------------------------------------------------------------------
# ingestion


def _parse_kitti_timestamp(line: str, where: str) -> int:
    # "2011-09-26 13:02:25.594360375" with nanosecond fraction, taken as UTC
    text = line.strip()
    try:
        if "." in text:
            base, frac = text.split(".", 1)
        else:
            base, frac = text, "0"
        dt = datetime.strptime(base, "%Y-%m-%d %H:%M:%S").replace(tzinfo=timezone.utc)
        ns = int(frac.ljust(9, "0")[:9])
    except ValueError as exc:
        raise IngestError(f"{where}: bad timestamp {text!r}") from exc
    return int(dt.timestamp()) * 1_000_000_000 + ns


def _parse_oxts_latlon(path: Path, index: str) -> GeoPoint:
    try:
        tokens = path.read_text().split()
    except OSError as exc:
        raise IngestError(f"frame {index}: cannot read {path}: {exc}") from exc
    if len(tokens) < 2:
        raise IngestError(f"frame {index}: oxts record has {len(tokens)} fields, need at least 2")
    try:
        lat, lon = float(tokens[0]), float(tokens[1])
    except ValueError:
        raise IngestError(f"frame {index}: non-numeric lat/lon in {path.name}") from None
    try:
        return GeoPoint(lat, lon)
    except ValueError as exc:
        raise IngestError(f"frame {index}: {exc}") from None


def ingest_kitti(root) -> Database:
    """Build a database from a KITTI-raw style directory.

    Expects oxts/timestamps.txt, oxts/data/<index>.txt (lat and lon in the
    first two fields) and descriptors/<index>.desc, one of each per frame.
    The oxts records are authoritative for timestamps and geotags; only the
    descriptor payload of each .desc file is used.
    """
    root = Path(root)
    ts_path = root / "oxts" / "timestamps.txt"
    if not ts_path.is_file():
        raise FileNotFoundError(f"missing {ts_path}")
    data_dir = root / "oxts" / "data"
    desc_dir = root / "descriptors"
    for d in (data_dir, desc_dir):
        if not d.is_dir():
            raise FileNotFoundError(f"missing directory {d}")

    lines = [ln for ln in ts_path.read_text().splitlines() if ln.strip()]
    data_files = sorted(data_dir.glob("*.txt"))
    desc_files = sorted(desc_dir.glob("*.desc"))
    if not (len(lines) == len(data_files) == len(desc_files)):
        raise IngestError(
            f"count mismatch: {len(lines)} timestamps, "
            f"{len(data_files)} oxts records, {len(desc_files)} descriptor files"
        )
    if [p.stem for p in data_files] != [p.stem for p in desc_files]:
        raise IngestError("oxts and descriptor frame indices do not line up")

    frames = []
    for line, data_path, desc_path in zip(lines, data_files, desc_files):
        index = data_path.stem
        ts = _parse_kitti_timestamp(line, f"frame {index}")
        geotag = _parse_oxts_latlon(data_path, index)
        try:
            record = read_desc_file(desc_path)
        except (DatabaseFormatError, OSError) as exc:
            raise IngestError(f"frame {index}: unreadable descriptors: {exc}") from exc
        frames.append(GeoFrame(int(index), ts, geotag, record.descriptors))
    db = Database(frames, source=str(root), camera="kitti")
    logger.info("ingested %d KITTI frames from %s", len(db), root)
    return db


def ingest_csv(manifest) -> Database:
    """Build a database from a CSV manifest.

    Header must be exactly frame_id,timestamp_ns,lat_deg,lon_deg,
    descriptor_path. Relative descriptor paths resolve against the manifest
    directory. Rows may be in any order; duplicate frame ids are rejected.
    """
    manifest = Path(manifest)
    if not manifest.is_file():
        raise FileNotFoundError(f"missing manifest {manifest}")
    with open(manifest, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestError(f"{manifest.name}: empty manifest") from None
        if header != CSV_MANIFEST_HEADER:
            raise IngestError(
                f"{manifest.name}: header {header!r} does not match {CSV_MANIFEST_HEADER!r}"
            )
        frames = []
        seen: set[int] = set()
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(CSV_MANIFEST_HEADER):
                raise IngestError(f"{manifest.name}:{lineno}: expected 5 fields, got {len(row)}")
            try:
                fid = int(row[0])
                ts = int(row[1])
                geotag = GeoPoint(float(row[2]), float(row[3]))
            except ValueError as exc:
                raise IngestError(f"{manifest.name}:{lineno}: {exc}") from None
            if fid in seen:
                raise IngestError(f"{manifest.name}:{lineno}: duplicate frame_id {fid}")
            seen.add(fid)
            desc_path = Path(row[4])
            if not desc_path.is_absolute():
                desc_path = manifest.parent / desc_path
            try:
                record = read_desc_file(desc_path)
            except (DatabaseFormatError, OSError) as exc:
                raise IngestError(f"{manifest.name}:{lineno}: unreadable descriptors: {exc}") from exc
            frames.append(GeoFrame(fid, ts, geotag, record.descriptors))
    try:
        return Database(frames, source=str(manifest), camera="")
    except ValueError as exc:
        raise IngestError(f"{manifest.name}: {exc}") from None
