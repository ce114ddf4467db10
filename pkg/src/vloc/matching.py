"""Keypoint descriptor matching with a ratio test plus a cosine gate.

A query keypoint matches a frame keypoint only when both hold:

* ratio test: squared distance to the nearest frame descriptor divided by
  squared distance to the second nearest is below ``tau1**2``
* cosine gate: cosine similarity with the nearest descriptor exceeds ``tau2``

Correspondence counts are independent per query keypoint (several query
keypoints may agree on one frame keypoint; no one-to-one constraint).

The batch path computes squared distances through a single float32 matrix
product (``|g|^2 + |f|^2 - 2 g.f``), which is what keeps full-database scans
tractable; the scalar helpers stay in float64.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import DegenerateDescriptorError, EmptyCandidatesError, FrameTooSmallError

logger = logging.getLogger(__name__)

DESCRIPTOR_DIM = 128


def as_descriptor(values) -> np.ndarray:
    """Validate a single descriptor: exactly 128 finite components."""
    arr = np.asarray(values, dtype=np.float64).reshape(-1)
    if arr.shape[0] != DESCRIPTOR_DIM:
        raise ValueError(f"descriptor must have {DESCRIPTOR_DIM} components, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("descriptor components must be finite")
    return arr


class DescriptorSet:
    """Immutable (k, 128) float32 block of keypoint descriptors for one image."""

    __slots__ = ("_array",)

    def __init__(self, array):
        arr = np.array(array, dtype=np.float32, order="C", ndmin=2, copy=True)
        if arr.ndim != 2 or arr.shape[1] != DESCRIPTOR_DIM:
            raise ValueError(f"expected shape (k, {DESCRIPTOR_DIM}), got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("descriptor components must be finite")
        arr.setflags(write=False)
        self._array = arr

    @classmethod
    def empty(cls) -> "DescriptorSet":
        return cls(np.zeros((0, DESCRIPTOR_DIM), dtype=np.float32))

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "DescriptorSet":
        # Trusted zero-copy constructor for generators that already hold a
        # read-only, validated float32 block (e.g. slices of a landmark pool).
        assert arr.dtype == np.float32 and arr.ndim == 2 and arr.shape[1] == DESCRIPTOR_DIM
        assert not arr.flags.writeable
        obj = cls.__new__(cls)
        obj._array = arr
        return obj

    @property
    def array(self) -> np.ndarray:
        """Read-only (k, 128) float32 view."""
        return self._array

    def __len__(self) -> int:
        return self._array.shape[0]

    def __getitem__(self, i: int) -> np.ndarray:
        return self._array[i]

    def __repr__(self) -> str:
        return f"DescriptorSet(k={len(self)})"


@dataclass(frozen=True)
class MatchConfig:
    """Thresholds for the two match criteria.

    tau1 gates the distance ratio (applied squared, so the comparison is
    ``d1^2 / d2^2 < tau1^2``), tau2 the cosine similarity with the nearest
    neighbour.
    """

    tau1: float = 0.8
    tau2: float = 0.97

    def __post_init__(self):
        if not 0.0 < self.tau1 < 1.0:
            raise ValueError(f"tau1 must be in (0, 1), got {self.tau1}")
        if not -1.0 < self.tau2 <= 1.0:
            raise ValueError(f"tau2 must be in (-1, 1], got {self.tau2}")


def sq_dist(g, f) -> float:
    """Squared Euclidean distance between two descriptors."""
    diff = as_descriptor(g) - as_descriptor(f)
    return float(np.dot(diff, diff))


def cosine_sim(g, f) -> float:
    """Cosine similarity of two descriptors, clamped to [-1, 1].

    Raises DegenerateDescriptorError when either vector has zero norm.
    """
    ga = as_descriptor(g)
    fa = as_descriptor(f)
    gn = float(np.dot(ga, ga))
    fn = float(np.dot(fa, fa))
    if gn == 0.0 or fn == 0.0:
        raise DegenerateDescriptorError("cosine similarity undefined for zero-norm descriptor")
    c = float(np.dot(ga, fa)) / np.sqrt(gn * fn)
    return max(-1.0, min(1.0, c))


def _query_matrix(query: DescriptorSet) -> tuple[np.ndarray, np.ndarray]:
    q = query.array
    qq = np.einsum("ij,ij->i", q, q)
    return q, qq


def _neg2dot_plus_fnorm(q: np.ndarray, frames: np.ndarray, fnorms: np.ndarray) -> np.ndarray:
    # E[i, j] = |f_j|^2 - 2 g_i.f_j  (= d^2 minus the per-row constant |g_i|^2).
    # argmin over j is unaffected by the dropped constant, and the buffer is
    # reused for the second-minimum pass, so one (m, n) float32 array suffices.
    e = q @ frames.T
    e *= -2.0
    e += fnorms
    return e


def _criteria(qq, e1, e2, fn1, cfg: MatchConfig) -> np.ndarray:
    """Apply ratio and cosine gates given per-row top-2 statistics."""
    qq = qq.astype(np.float64)
    d1 = np.maximum(qq + e1.astype(np.float64), 0.0)
    d2 = np.maximum(qq + e2.astype(np.float64), 0.0)
    fn1 = fn1.astype(np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = d1 / d2
        dots = (fn1 - e1.astype(np.float64)) / 2.0
        cos = dots / np.sqrt(qq * fn1)
    cos = np.clip(cos, -1.0, 1.0)
    ok = (d2 > 0.0) & (ratio < cfg.tau1 * cfg.tau1)
    ok &= (qq > 0.0) & (fn1 > 0.0) & (cos > cfg.tau2)
    return ok


def _match_rows(query: DescriptorSet, frame: DescriptorSet, cfg: MatchConfig) -> np.ndarray:
    """Nearest-neighbour match index per query row, -1 where the gates fail."""
    if len(frame) < 2:
        raise FrameTooSmallError(f"frame has {len(frame)} descriptors, ratio test needs at least 2")
    m = len(query)
    if m == 0:
        return np.empty(0, dtype=np.int64)
    q, qq = _query_matrix(query)
    f = frame.array
    fnorms = np.einsum("ij,ij->i", f, f)
    e = _neg2dot_plus_fnorm(q, f, fnorms)
    rows = np.arange(m)
    j1 = e.argmin(axis=1)
    e1 = e[rows, j1]
    e[rows, j1] = np.inf
    e2 = e.min(axis=1)
    ok = _criteria(qq, e1, e2, fnorms[j1], cfg)
    return np.where(ok, j1, -1)


def match_keypoint(g, frame: DescriptorSet, cfg: MatchConfig) -> Optional[int]:
    """Match one query descriptor against a frame.

    Returns the index of the matched frame keypoint, or None when either
    criterion rejects the nearest neighbour.
    """
    single = DescriptorSet(np.asarray(g, dtype=np.float32).reshape(1, DESCRIPTOR_DIM))
    idx = _match_rows(single, frame, cfg)[0]
    return None if idx < 0 else int(idx)


def count_correspondences(query: DescriptorSet, frame: DescriptorSet, cfg: MatchConfig) -> int:
    """Number of query keypoints that match somewhere in the frame."""
    if len(query) == 0:
        return 0
    return int((_match_rows(query, frame, cfg) >= 0).sum())


def _segment_counts(query: DescriptorSet, sets: Sequence[np.ndarray], cfg: MatchConfig) -> np.ndarray:
    """Correspondence counts of one query against several frames at once.

    Concatenates the frame blocks, runs one matrix product, then extracts the
    per-frame top-2 statistics. Equal-sized frames take a reshaped vectorized
    route; ragged sizes fall back to per-frame slices of the same buffer.
    """
    m = len(query)
    p = len(sets)
    q, qq = _query_matrix(query)
    frames = np.concatenate(sets, axis=0)
    fnorms = np.einsum("ij,ij->i", frames, frames)
    e = _neg2dot_plus_fnorm(q, frames, fnorms)

    widths = np.array([s.shape[0] for s in sets])
    rows = np.arange(m)
    if np.all(widths == widths[0]):
        k = int(widths[0])
        e3 = e.reshape(m, p, k)
        j1 = e3.argmin(axis=2)
        e1 = np.take_along_axis(e3, j1[:, :, None], axis=2)[:, :, 0]
        np.put_along_axis(e3, j1[:, :, None], np.inf, axis=2)
        e2 = e3.min(axis=2)
        fn1 = fnorms[j1 + np.arange(p) * k]
        qq2 = np.broadcast_to(qq[:, None], (m, p))
        ok = _criteria(qq2, e1, e2, fn1, cfg)
        return ok.sum(axis=0).astype(np.int64)

    counts = np.zeros(p, dtype=np.int64)
    offsets = np.concatenate([[0], np.cumsum(widths)])
    for s in range(p):
        sub = e[:, offsets[s] : offsets[s + 1]]
        j1 = sub.argmin(axis=1)
        e1 = sub[rows, j1]
        sub[rows, j1] = np.inf
        e2 = sub.min(axis=1)
        ok = _criteria(qq, e1, e2, fnorms[offsets[s] + j1], cfg)
        counts[s] = ok.sum()
    return counts


def best_match(
    query: DescriptorSet,
    candidates: Sequence[tuple[int, DescriptorSet]],
    cfg: MatchConfig,
) -> tuple[int, int]:
    """Pick the candidate frame with the most correspondences.

    Parameters
    ----------
    query : DescriptorSet
        Query image descriptors.
    candidates : sequence of (frame_id, DescriptorSet)
        Frames to score. Frames with fewer than two descriptors are scored
        zero (the ratio test is undefined for them) and logged.
    cfg : MatchConfig

    Returns
    -------
    (frame_id, count)
        Ties on the count resolve to the lowest frame_id, independent of
        candidate order. The count may be zero.
    """
    if len(candidates) == 0:
        raise EmptyCandidatesError("best_match needs at least one candidate frame")

    ids = np.array([fid for fid, _ in candidates], dtype=np.int64)
    counts = np.zeros(len(candidates), dtype=np.int64)

    scored = [(i, ds.array) for i, (_, ds) in enumerate(candidates) if len(ds) >= 2]
    skipped = len(candidates) - len(scored)
    if skipped:
        logger.warning("skipped %d candidate frame(s) with fewer than 2 descriptors", skipped)

    if len(query) > 0 and scored:
        idx = [i for i, _ in scored]
        counts[idx] = _segment_counts(query, [arr for _, arr in scored], cfg)

    order = np.lexsort((ids, -counts))
    win = order[0]
    return int(ids[win]), int(counts[win])
