"""Desk-scale synthetic station generator.

Produces a corpus the rest of the pipeline can train on: S textured rooms
laid out on a floor grid, a walk visiting each room, and equirectangular
panoramas rendered at every pose. Each room gets a distinct base color,
a striped wall pattern, and up to three signage glyphs; per-panorama
heading, lighting, and sensor noise vary so images within a room differ
while staying recognizable.

The `ambiguity` knob forces one pair of rooms to share texture parameters
(blend 1.0 = identical), creating a known hard-to-distinguish pair for the
similarity and survey stages.
"""

from __future__ import annotations

import colorsys
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .corpus import SpatialSegment, TrajectoryPose, PROGRAMS
from .errors import ConfigError
from .projection import EquirectPanorama

ROOM_SIZE = 8.0       # meters per room side
ROOM_GAP = 4.0        # grid spacing between rooms
POSE_MARGIN = 1.5     # poses stay this far from room walls
ROOMS_PER_ROW = 3


@dataclass(frozen=True)
class SynthSpec:
    """Knobs for the generated station."""

    num_segments: int = 12
    panos_per_segment: int = 6
    pano_height: int = 128
    ambiguity: float = 0.0
    shared_pair: Optional[tuple] = None  # defaults to the last two segments
    noise_sigma: float = 3.0

    def __post_init__(self):
        if self.num_segments < 2:
            raise ConfigError(f"need at least 2 segments, got {self.num_segments}")
        if self.panos_per_segment < 4:
            raise ConfigError(f"need at least 4 panoramas per segment, got {self.panos_per_segment}")
        if self.pano_height < 16:
            raise ConfigError("pano_height must be at least 16")
        if not 0.0 <= self.ambiguity <= 1.0:
            raise ConfigError(f"ambiguity must be in [0, 1], got {self.ambiguity}")
        if self.shared_pair is not None:
            a, b = self.shared_pair
            if not (0 <= a < self.num_segments and 0 <= b < self.num_segments and a != b):
                raise ConfigError(f"shared_pair {self.shared_pair} out of range")

    def resolved_pair(self) -> Optional[tuple]:
        if self.ambiguity <= 0.0:
            return None
        if self.shared_pair is not None:
            return tuple(sorted(self.shared_pair))
        return (self.num_segments - 2, self.num_segments - 1)


@dataclass(frozen=True)
class RoomTexture:
    """Procedural appearance of one room."""

    wall_a: np.ndarray      # stripe color 1 (RGB, 0..255)
    wall_b: np.ndarray      # stripe color 2
    floor: np.ndarray
    ceiling: np.ndarray
    stripe_freq: float      # stripe cycles per full turn
    wall_lat_lo: float      # wall band extent, degrees latitude
    wall_lat_hi: float
    glyphs: tuple           # (lon_deg, half_w_deg, lat_deg, half_h_deg, rgb)


@dataclass
class SynthStation:
    panoramas: list
    trajectory: list
    segments: list
    textures: list
    spec: SynthSpec
    seed: int


def _hsv255(h: float, s: float, v: float) -> np.ndarray:
    return np.array(colorsys.hsv_to_rgb(h % 1.0, s, v)) * 255.0


def _blend(a: np.ndarray, b: np.ndarray, t: float) -> np.ndarray:
    return a * (1.0 - t) + b * t


def _make_texture(idx: int, total: int, rng: np.random.Generator) -> RoomTexture:
    # one saturated hue per room, carried by every surface: the room's
    # identity survives lighting changes, which only scale value
    hue = idx / total
    wall_a = _hsv255(hue, 0.8, 0.85)
    wall_b = _hsv255(hue, 0.35, 0.5 + 0.1 * rng.random())
    floor = _hsv255(hue, 0.65, 0.4)
    ceiling = _hsv255(hue, 0.3, 0.92)
    stripe_freq = float(3 + 2 * idx)  # distinct texture frequency per room
    wall_lat_lo = -32.0 + 10.0 * ((idx * 3) % total) / total
    wall_lat_hi = 42.0 + 12.0 * ((idx * 5 + 2) % total) / total
    n_glyphs = idx % 4
    glyphs = []
    for _ in range(n_glyphs):
        glyphs.append((
            float(rng.uniform(0.0, 360.0)),           # bearing
            float(rng.uniform(6.0, 16.0)),            # half width
            float(rng.uniform(-5.0, 25.0)),           # latitude center
            float(rng.uniform(5.0, 12.0)),            # half height
            _hsv255(hue + 0.5, 0.9, 0.95),            # complementary accent
        ))
    return RoomTexture(wall_a=wall_a, wall_b=wall_b, floor=floor, ceiling=ceiling,
                       stripe_freq=stripe_freq, wall_lat_lo=wall_lat_lo,
                       wall_lat_hi=wall_lat_hi, glyphs=tuple(glyphs))


def _share_textures(base: RoomTexture, other: RoomTexture, t: float) -> RoomTexture:
    """Pull `other` toward `base` by blend factor t (t=1 copies it outright)."""
    if t >= 1.0:
        return base
    return RoomTexture(
        wall_a=_blend(other.wall_a, base.wall_a, t),
        wall_b=_blend(other.wall_b, base.wall_b, t),
        floor=_blend(other.floor, base.floor, t),
        ceiling=_blend(other.ceiling, base.ceiling, t),
        stripe_freq=other.stripe_freq * (1.0 - t) + base.stripe_freq * t,
        wall_lat_lo=other.wall_lat_lo * (1.0 - t) + base.wall_lat_lo * t,
        wall_lat_hi=other.wall_lat_hi * (1.0 - t) + base.wall_lat_hi * t,
        glyphs=base.glyphs if t >= 0.5 else other.glyphs,
    )


def render_panorama(tex: RoomTexture, height: int, heading_deg: float,
                    gain: float, noise_sigma: float,
                    rng: np.random.Generator) -> np.ndarray:
    """Render one equirect view of a room as (H, 2H, 3) uint8.

    `heading_deg` rotates the whole room around the viewer, modelling a
    different facing/position along the walk.
    """
    width = 2 * height
    lon = (np.arange(width) + 0.5) / width * 360.0 - 180.0
    lat = 90.0 - (np.arange(height) + 0.5) / height * 180.0
    lon_grid = np.broadcast_to(lon, (height, width))
    lat_grid = np.broadcast_to(lat[:, None], (height, width))
    room_lon = np.mod(lon_grid + heading_deg, 360.0)

    img = np.empty((height, width, 3), dtype=np.float64)

    stripe = 0.5 * (1.0 + np.sin(np.deg2rad(room_lon) * tex.stripe_freq))
    wall = tex.wall_a[None, None, :] * (1.0 - stripe[..., None]) \
        + tex.wall_b[None, None, :] * stripe[..., None]
    img[:] = wall

    floor_mask = lat_grid < tex.wall_lat_lo
    ceil_mask = lat_grid > tex.wall_lat_hi
    img[floor_mask] = tex.floor
    img[ceil_mask] = tex.ceiling

    wall_mask = ~(floor_mask | ceil_mask)
    for g_lon, g_hw, g_lat, g_hh, g_rgb in tex.glyphs:
        d_lon = np.abs((room_lon - g_lon + 180.0) % 360.0 - 180.0)
        mask = (d_lon < g_hw) & (np.abs(lat_grid - g_lat) < g_hh) & wall_mask
        img[mask] = g_rgb

    # simple vertical lighting falloff
    img *= (0.75 + 0.25 * np.cos(np.deg2rad(lat_grid)))[..., None]
    img *= gain
    img += rng.normal(0.0, noise_sigma, img.shape)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def _room_footprint(idx: int) -> np.ndarray:
    row, col = divmod(idx % 6, ROOMS_PER_ROW)
    x0 = col * (ROOM_SIZE + ROOM_GAP)
    y0 = row * (ROOM_SIZE + ROOM_GAP)
    return np.array([[x0, y0], [x0 + ROOM_SIZE, y0],
                     [x0 + ROOM_SIZE, y0 + ROOM_SIZE], [x0, y0 + ROOM_SIZE]])


def synth_station(spec: SynthSpec, seed: int) -> SynthStation:
    """Generate panoramas, walk trajectory, and segment table for a synthetic station.

    Deterministic: the same (spec, seed) produces a bit-identical corpus.
    Rooms alternate programs, sit on two floors (six rooms per floor), and
    are grouped into halls by grid row.
    """
    rng = np.random.default_rng(seed)
    s = spec.num_segments

    textures = [_make_texture(i, s, rng) for i in range(s)]
    pair = spec.resolved_pair()
    if pair is not None:
        a, b = pair
        textures[b] = _share_textures(textures[a], textures[b], spec.ambiguity)

    segments = []
    for i in range(s):
        floor = 1 + (i // 6)
        row = (i % 6) // ROOMS_PER_ROW
        segments.append(SpatialSegment(
            id=i,
            name=f"room_{i:02d}",
            program=PROGRAMS[i % len(PROGRAMS)],
            floor=floor,
            hall=f"hall_{floor}_{row}",
            footprint=_room_footprint(i),
        ))

    panoramas = []
    trajectory = []
    t = 0.0
    for seg in segments:
        fp = seg.footprint
        lo = fp.min(axis=0) + POSE_MARGIN
        hi = fp.max(axis=0) - POSE_MARGIN
        for k in range(spec.panos_per_segment):
            x = float(rng.uniform(lo[0], hi[0]))
            y = float(rng.uniform(lo[1], hi[1]))
            trajectory.append(TrajectoryPose(timestamp=t, x=x, y=y, floor=seg.floor))
            pixels = render_panorama(
                textures[seg.id], spec.pano_height,
                heading_deg=float(rng.uniform(0.0, 360.0)),
                gain=float(rng.uniform(0.85, 1.15)),
                noise_sigma=spec.noise_sigma, rng=rng)
            panoramas.append(EquirectPanorama(
                id=f"pano_{seg.id:02d}_{k:02d}", pixels=pixels, timestamp=t))
            t += 1.0

    return SynthStation(panoramas=panoramas, trajectory=trajectory,
                        segments=segments, textures=textures, spec=spec, seed=seed)
