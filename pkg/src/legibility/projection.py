"""Equirectangular panorama resampling.

The raw capture unit is a 2:1 spherical image covering 360 x 180 degrees.
Perspective views come out of a two-stage transform: each output pixel is
turned into a viewing direction (pinhole camera with the requested field of
view, rotated by yaw then pitch), the direction is converted to polar
coordinates, and the panorama is sampled bilinearly at the matching
longitude/latitude. Longitude wraps at the seam; latitude clamps at the
poles.

Conventions:
  - longitude 0 sits at the horizontal center of the panorama, increasing
    eastward (rightward in the image); latitude +90 is the top row.
  - yaw is longitude of the view center in [0, 360), pitch its latitude in
    [-90, 90].
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigError, DataError
from .imageutil import load_image, sample_bilinear


@dataclass(frozen=True)
class EquirectPanorama:
    """A full-sphere panorama: (H, W, 3) uint8 pixels with W == 2H."""

    id: str
    pixels: np.ndarray
    timestamp: Optional[float] = None

    def __post_init__(self):
        px = self.pixels
        if px.ndim != 3 or px.shape[2] != 3:
            raise DataError(f"panorama {self.id!r}: expected (H, W, 3) pixels, got {px.shape}")
        if px.dtype != np.uint8:
            raise DataError(f"panorama {self.id!r}: expected uint8 pixels, got {px.dtype}")
        h, w = px.shape[:2]
        if w < 2 or h < 1:
            raise DataError(f"panorama {self.id!r}: degenerate dimensions {w}x{h}")
        if w != 2 * h:
            raise DataError(f"panorama {self.id!r}: width must be 2x height, got {w}x{h}")

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


@dataclass(frozen=True)
class CropSpec:
    """One perspective view: yaw/pitch of the view center, fov, output size."""

    yaw: float
    pitch: float
    fov: float = 90.0
    out_size: int = 224

    def __post_init__(self):
        if not 0.0 <= self.yaw < 360.0:
            raise ConfigError(f"yaw must be in [0, 360), got {self.yaw}")
        if not -90.0 <= self.pitch <= 90.0:
            raise ConfigError(f"pitch must be in [-90, 90], got {self.pitch}")
        if not 0.0 < self.fov < 180.0:
            raise ConfigError(f"fov must be in (0, 180), got {self.fov}")
        if self.out_size <= 0:
            raise ConfigError(f"out_size must be positive, got {self.out_size}")


@dataclass(frozen=True)
class CubeFaces:
    """The six 90-degree views along the axes, all face_size x face_size."""

    front: np.ndarray
    right: np.ndarray
    back: np.ndarray
    left: np.ndarray
    up: np.ndarray
    down: np.ndarray
    face_size: int

    FACE_ANGLES = {
        "front": (0.0, 0.0),
        "right": (90.0, 0.0),
        "back": (180.0, 0.0),
        "left": (270.0, 0.0),
        "up": (0.0, 90.0),
        "down": (0.0, -90.0),
    }

    def __post_init__(self):
        for name in self.FACE_ANGLES:
            face = getattr(self, name)
            if face.shape[:2] != (self.face_size, self.face_size):
                raise DataError(f"face {name} is {face.shape[:2]}, expected {self.face_size}")

    def as_dict(self) -> dict:
        return {name: getattr(self, name) for name in self.FACE_ANGLES}


# Preset crop schemes: 8 yaw steps of 45 degrees, crossed with either the
# {0, +15} pitch pair or the {-30, 0, +30} pitch triple.
CROP_PRESETS = {
    "a": {"yaws": tuple(float(y) for y in range(0, 360, 45)), "pitches": (0.0, 15.0)},
    "b": {"yaws": tuple(float(y) for y in range(0, 360, 45)), "pitches": (-30.0, 0.0, 30.0)},
}
DEFAULT_PRESET = "b"


def view_directions(spec: CropSpec) -> np.ndarray:
    """Unit viewing direction for every output pixel, shape (out, out, 3).

    Camera frame: +x right, +y up, +z forward; the grid samples pixel
    centers. The frame is rotated by pitch about x, then yaw about the
    world up axis.
    """
    n = spec.out_size
    half = np.tan(np.deg2rad(spec.fov) / 2.0)
    coords = ((np.arange(n) + 0.5) / n) * 2.0 * half - half
    xs, ys = np.meshgrid(coords, -coords)  # top row looks up
    zs = np.ones_like(xs)
    dirs = np.stack([xs, ys, zs], axis=-1)
    dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)

    pitch = np.deg2rad(spec.pitch)
    yaw = np.deg2rad(spec.yaw)
    rot_x = np.array([  # positive pitch tilts the view up toward +y
        [1.0, 0.0, 0.0],
        [0.0, np.cos(pitch), np.sin(pitch)],
        [0.0, -np.sin(pitch), np.cos(pitch)],
    ])
    rot_y = np.array([
        [np.cos(yaw), 0.0, np.sin(yaw)],
        [0.0, 1.0, 0.0],
        [-np.sin(yaw), 0.0, np.cos(yaw)],
    ])
    return dirs @ (rot_y @ rot_x).T


def directions_to_lonlat(dirs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Polar coordinates (degrees) of unit directions: lon in (-180, 180], lat in [-90, 90]."""
    lon = np.rad2deg(np.arctan2(dirs[..., 0], dirs[..., 2]))
    lat = np.rad2deg(np.arcsin(np.clip(dirs[..., 1], -1.0, 1.0)))
    return lon, lat


def lonlat_to_pixel(lon: np.ndarray, lat: np.ndarray, width: int, height: int):
    """Continuous panorama array coordinates for polar coordinates in degrees.

    Pixel (i, j) covers longitudes [(j/W - 0.5)*360, ...), so its center is
    at continuous x = j + 0.5 in longitude units; subtracting the half pixel
    gives the bilinear sampling coordinate.
    """
    x = (lon / 360.0 + 0.5) * width - 0.5
    y = (0.5 - lat / 180.0) * height - 0.5
    return x, y


def crop_perspective(pano: EquirectPanorama, spec: CropSpec) -> np.ndarray:
    """Render one perspective view of the panorama as (out, out, 3) uint8.

    The output center pixel samples the panorama at longitude == yaw and
    latitude == pitch.
    """
    dirs = view_directions(spec)
    lon, lat = directions_to_lonlat(dirs)
    x, y = lonlat_to_pixel(lon, lat, pano.width, pano.height)
    out = sample_bilinear(pano.pixels, x, y, wrap_x=True)
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def equirect_to_cube(pano: EquirectPanorama, face_size: int) -> CubeFaces:
    """Project the panorama onto the six cube faces (90-degree fov each)."""
    if face_size <= 0:
        raise ConfigError(f"face_size must be positive, got {face_size}")
    faces = {
        name: crop_perspective(pano, CropSpec(yaw=yaw, pitch=pitch, fov=90.0, out_size=face_size))
        for name, (yaw, pitch) in CubeFaces.FACE_ANGLES.items()
    }
    return CubeFaces(face_size=face_size, **faces)


def standard_crop_set(pano: EquirectPanorama, preset: str = DEFAULT_PRESET,
                      out_size: int = 224, fov: float = 90.0):
    """Crop the panorama on the named preset grid.

    Preset "a" yields 16 views (pitches 0/+15), preset "b" yields 24
    (pitches -30/0/+30). Returns [(CropSpec, image), ...] in yaw-major
    order.
    """
    try:
        grid = CROP_PRESETS[preset]
    except KeyError:
        raise ConfigError(f"unknown crop preset {preset!r}; choose from {sorted(CROP_PRESETS)}")
    crops = []
    for yaw in grid["yaws"]:
        for pitch in grid["pitches"]:
            spec = CropSpec(yaw=yaw, pitch=pitch, fov=fov, out_size=out_size)
            crops.append((spec, crop_perspective(pano, spec)))
    return crops


def load_panorama(path, pano_id: Optional[str] = None,
                  timestamp: Optional[float] = None) -> EquirectPanorama:
    pixels = load_image(path)
    return EquirectPanorama(id=pano_id or str(path), pixels=pixels, timestamp=timestamp)


CROP_MANIFEST_FIELDS = ("pano_id", "yaw", "pitch", "fov", "out_path")


def write_crop_manifest(records, path) -> None:
    """Write one CSV row per crop: pano_id, yaw, pitch, fov, out_path."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CROP_MANIFEST_FIELDS)
        for rec in records:
            writer.writerow([rec[k] for k in CROP_MANIFEST_FIELDS])


def read_crop_manifest(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        rows = []
        for row in reader:
            rows.append({
                "pano_id": row["pano_id"],
                "yaw": float(row["yaw"]),
                "pitch": float(row["pitch"]),
                "fov": float(row["fov"]),
                "out_path": row["out_path"],
            })
    return rows
