"""Spatial segments, geo-tagging, dataset balancing/splitting, augmentation.

A spatial segment is a contiguous sub-area of the station with a unified
function (commercial / waiting / corridor) and a polygonal footprint on one
floor. Crops inherit the segment of the trajectory pose nearest in time to
their source panorama; crops whose pose lands outside every footprint are
dropped rather than force-assigned.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
from shapely.geometry import Polygon as _ShapelyPolygon

from .errors import ConfigError, DataError
from .imageutil import bilinear_resize

PROGRAMS = ("commercial", "waiting", "corridor")
SPLITS = ("train", "test")


@dataclass(frozen=True)
class SpatialSegment:
    """One classification unit: id, naming/metadata, and a simple polygon footprint (meters)."""

    id: int
    name: str
    program: str
    floor: int
    footprint: np.ndarray  # (V, 2) vertices, implicitly closed
    hall: Optional[str] = None

    def __post_init__(self):
        if self.program not in PROGRAMS:
            raise ConfigError(f"segment {self.id}: unknown program {self.program!r}")
        fp = np.asarray(self.footprint, dtype=np.float64)
        object.__setattr__(self, "footprint", fp)
        if fp.ndim != 2 or fp.shape[1] != 2 or fp.shape[0] < 3:
            raise ConfigError(f"segment {self.id}: footprint must be (V>=3, 2) vertices")
        poly = _ShapelyPolygon(fp)
        if not poly.is_valid or not poly.is_simple:
            raise ConfigError(f"segment {self.id}: footprint polygon is not simple")
        if poly.area <= 0.0:
            raise ConfigError(f"segment {self.id}: footprint area must be positive")

    def contains(self, x: float, y: float) -> bool:
        return bool(points_in_polygon(np.array([[x, y]]), self.footprint)[0])


@dataclass(frozen=True)
class TrajectoryPose:
    timestamp: float
    x: float
    y: float
    floor: int


@dataclass(frozen=True)
class AnnotatedImage:
    image_path: str
    segment_id: int
    yaw: float
    pitch: float
    pano_id: str
    split: Optional[str] = None


@dataclass
class DatasetManifest:
    """Annotated crops plus the segment table they refer to."""

    entries: list
    segments: list

    def __post_init__(self):
        ids = {s.id for s in self.segments}
        for e in self.entries:
            if e.segment_id not in ids:
                raise DataError(f"entry {e.image_path}: unknown segment {e.segment_id}")

    def counts(self) -> dict:
        out: dict = {}
        for e in self.entries:
            out[e.segment_id] = out.get(e.segment_id, 0) + 1
        return out

    def segment_by_id(self, seg_id: int) -> SpatialSegment:
        for s in self.segments:
            if s.id == seg_id:
                return s
        raise DataError(f"unknown segment {seg_id}")

    def subset(self, split: str) -> "DatasetManifest":
        return DatasetManifest([e for e in self.entries if e.split == split], self.segments)


def points_in_polygon(points: np.ndarray, polygon: np.ndarray) -> np.ndarray:
    """Even-odd ray casting, vectorized over points.

    Boundary behavior follows the half-open edge rule, which is consistent
    for points strictly inside/outside; footprints do not share edges, so
    ties never matter in practice.
    """
    px = points[:, 0][:, None]
    py = points[:, 1][:, None]
    vx = polygon[:, 0]
    vy = polygon[:, 1]
    wx = np.roll(vx, -1)
    wy = np.roll(vy, -1)
    crosses = (vy <= py) != (wy <= py)
    with np.errstate(divide="ignore", invalid="ignore"):
        x_at = vx + (py - vy) * (wx - vx) / np.where(wy == vy, 1.0, wy - vy)
    hits = crosses & (px < x_at)
    return hits.sum(axis=1) % 2 == 1


def check_footprints(segments: Sequence[SpatialSegment]) -> None:
    """Fail fast when two same-floor footprints overlap (area, not touching)."""
    by_floor: dict = {}
    for seg in segments:
        by_floor.setdefault(seg.floor, []).append(seg)
    for floor, segs in by_floor.items():
        polys = [(s, _ShapelyPolygon(s.footprint)) for s in segs]
        for i in range(len(polys)):
            for j in range(i + 1, len(polys)):
                inter = polys[i][1].intersection(polys[j][1])
                if inter.area > 1e-9:
                    raise ConfigError(
                        f"segments {polys[i][0].id} and {polys[j][0].id} overlap on floor {floor}"
                    )


def assign_segment(pose: TrajectoryPose, segments: Sequence[SpatialSegment]) -> Optional[int]:
    """Id of the segment whose footprint contains the pose on its floor, else None."""
    point = np.array([[pose.x, pose.y]])
    for seg in segments:
        if seg.floor == pose.floor and points_in_polygon(point, seg.footprint)[0]:
            return seg.id
    return None


def nearest_pose(timestamp: float, trajectory: Sequence[TrajectoryPose]) -> TrajectoryPose:
    """Pose with the closest timestamp; ties go to the earlier pose."""
    times = np.array([p.timestamp for p in trajectory])
    idx = int(np.searchsorted(times, timestamp))
    if idx == 0:
        return trajectory[0]
    if idx == len(trajectory):
        return trajectory[-1]
    before, after = trajectory[idx - 1], trajectory[idx]
    if timestamp - before.timestamp <= after.timestamp - timestamp:
        return before
    return after


def annotate(crops: Sequence[dict], trajectory: Sequence[TrajectoryPose],
             segments: Sequence[SpatialSegment]) -> tuple[DatasetManifest, int]:
    """Tag crops with segments via nearest-timestamp pose lookup.

    Each crop dict needs image_path, pano_id, timestamp, yaw, pitch. Crops
    whose pose falls in no footprint are dropped; the second return value
    counts them.
    """
    if not trajectory:
        raise DataError("empty trajectory")
    times = [p.timestamp for p in trajectory]
    if any(t2 <= t1 for t1, t2 in zip(times, times[1:])):
        raise DataError("trajectory timestamps must be strictly increasing")
    check_footprints(segments)

    entries = []
    dropped = 0
    for crop in crops:
        pose = nearest_pose(crop["timestamp"], trajectory)
        seg_id = assign_segment(pose, segments)
        if seg_id is None:
            dropped += 1
            continue
        entries.append(AnnotatedImage(
            image_path=crop["image_path"],
            segment_id=seg_id,
            yaw=crop["yaw"],
            pitch=crop["pitch"],
            pano_id=crop["pano_id"],
        ))
    return DatasetManifest(entries, list(segments)), dropped


def balance(manifest: DatasetManifest, cap_per_segment: int, seed: int) -> DatasetManifest:
    """Cap every segment at `cap_per_segment` entries by seeded uniform subsampling."""
    if cap_per_segment < 1:
        raise ConfigError(f"cap must be >= 1, got {cap_per_segment}")
    rng = np.random.default_rng(seed)
    kept = []
    by_seg: dict = {}
    for idx, e in enumerate(manifest.entries):
        by_seg.setdefault(e.segment_id, []).append(idx)
    keep_idx: set = set()
    for seg_id in sorted(by_seg):
        idxs = by_seg[seg_id]
        if len(idxs) <= cap_per_segment:
            keep_idx.update(idxs)
        else:
            chosen = rng.choice(len(idxs), size=cap_per_segment, replace=False)
            keep_idx.update(idxs[i] for i in chosen)
    kept = [e for i, e in enumerate(manifest.entries) if i in keep_idx]
    return DatasetManifest(kept, manifest.segments)


def split(manifest: DatasetManifest, test_fraction: float,
          seed: int) -> tuple[DatasetManifest, DatasetManifest]:
    """Stratified train/test split: per segment, round(fraction * count) test
    images, at least 1 and at most count - 1."""
    if not 0.0 < test_fraction < 1.0:
        raise ConfigError(f"test_fraction must be in (0, 1), got {test_fraction}")
    rng = np.random.default_rng(seed)
    by_seg: dict = {}
    for idx, e in enumerate(manifest.entries):
        by_seg.setdefault(e.segment_id, []).append(idx)

    test_idx: set = set()
    for seg_id in sorted(by_seg):
        idxs = by_seg[seg_id]
        if len(idxs) < 2:
            raise DataError(f"segment {seg_id} has {len(idxs)} image(s); need >= 2 to split")
        n_test = int(round(test_fraction * len(idxs)))
        n_test = min(max(n_test, 1), len(idxs) - 1)
        chosen = rng.choice(len(idxs), size=n_test, replace=False)
        test_idx.update(idxs[i] for i in chosen)

    train_entries = [replace(e, split="train")
                     for i, e in enumerate(manifest.entries) if i not in test_idx]
    test_entries = [replace(e, split="test")
                    for i, e in enumerate(manifest.entries) if i in test_idx]
    return (DatasetManifest(train_entries, manifest.segments),
            DatasetManifest(test_entries, manifest.segments))


@dataclass(frozen=True)
class AugmentParams:
    """One draw of the augmentation policy: sub-crop area ratio, crop origin
    (as fractions of the slack), and horizontal flip."""

    area: float
    fx: float
    fy: float
    flip: bool


def sample_augment(rng: np.random.Generator) -> AugmentParams:
    """Draw params: area ~ U[0.4, 1.0], origin fractions ~ U[0, 1), flip w.p. 0.5."""
    area = float(rng.uniform(0.4, 1.0))
    fx = float(rng.random())
    fy = float(rng.random())
    flip = bool(rng.random() < 0.5)
    return AugmentParams(area=area, fx=fx, fy=fy, flip=flip)


def apply_augment(image: np.ndarray, params: AugmentParams) -> np.ndarray:
    """Square sub-crop (aspect 1) with the given area ratio, resized back to
    the input size, then an optional mirror. area=1, no flip is the identity."""
    n = image.shape[0]
    if image.shape[1] != n:
        raise DataError(f"augment expects a square image, got {image.shape[:2]}")
    side = max(1, min(n, int(round(math.sqrt(params.area) * n))))
    x0 = int(round(params.fx * (n - side)))
    y0 = int(round(params.fy * (n - side)))
    crop = image[y0:y0 + side, x0:x0 + side]
    out = crop if side == n else bilinear_resize(crop, n, n)
    if params.flip:
        out = out[:, ::-1]
    return np.ascontiguousarray(out)


def augment(image: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Training-time augmentation: random sub-crop (area in [0.4, 1.0]) plus
    random horizontal flip. Deterministic given the generator state."""
    return apply_augment(image, sample_augment(rng))


# ---------------------------------------------------------------------------
# On-disk formats: segment table (JSON), trajectory (CSV), manifest (CSV).

def save_segments(segments: Sequence[SpatialSegment], path) -> None:
    data = [{
        "id": s.id, "name": s.name, "program": s.program, "floor": s.floor,
        "hall": s.hall, "polygon": s.footprint.tolist(),
    } for s in segments]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2)
        fh.write("\n")


def load_segments(path) -> list:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    segs = [SpatialSegment(id=d["id"], name=d["name"], program=d["program"],
                           floor=d["floor"], hall=d.get("hall"),
                           footprint=np.asarray(d["polygon"], dtype=np.float64))
            for d in data]
    check_footprints(segs)
    return segs


def save_trajectory(trajectory: Sequence[TrajectoryPose], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["timestamp", "x", "y", "floor"])
        for p in trajectory:
            writer.writerow([repr(p.timestamp), repr(p.x), repr(p.y), p.floor])


def load_trajectory(path) -> list:
    with open(path, newline="", encoding="utf-8") as fh:
        return [TrajectoryPose(timestamp=float(r["timestamp"]), x=float(r["x"]),
                               y=float(r["y"]), floor=int(r["floor"]))
                for r in csv.DictReader(fh)]


MANIFEST_FIELDS = ("image_path", "segment_id", "yaw", "pitch", "split", "pano_id")


def save_manifest(manifest: DatasetManifest, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_FIELDS)
        for e in manifest.entries:
            writer.writerow([e.image_path, e.segment_id, e.yaw, e.pitch,
                             e.split or "", e.pano_id])


def load_manifest(path, segments: Sequence[SpatialSegment]) -> DatasetManifest:
    entries = []
    with open(path, newline="", encoding="utf-8") as fh:
        for r in csv.DictReader(fh):
            entries.append(AnnotatedImage(
                image_path=r["image_path"], segment_id=int(r["segment_id"]),
                yaw=float(r["yaw"]), pitch=float(r["pitch"]),
                split=r["split"] or None, pano_id=r["pano_id"]))
    return DatasetManifest(entries, list(segments))
