"""Legibility readouts: grouped confidence/accuracy tables and class
activation maps.

A class activation map weighs the last convolutional feature maps by the
head row of one class: raw[x, y] = sum_k w[c, k] * F_k[x, y]. Because the
head sits directly on a global average pool, the spatial mean of the raw
map IS the class logit (bias-free head), so the map is an exact spatial
decomposition of the class evidence, not a saliency approximation.

"Confidence" here is always the mean probability assigned to the true
label; "accuracy" is the argmax hit rate. The tables report both and never
conflate them.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .imageutil import bilinear_resize
from .nnet import EvalResult

GROUP_KEYS = ("segment", "program", "hall", "floor", "pitch")


@dataclass
class LegibilityTable:
    """Per-group stats over an evaluated set; groups partition the set."""

    key: str
    rows: list  # (group value, count, top1 %, top5 %, mean confidence %)
    total: int

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow([self.key, "count", "top1_pct", "top5_pct", "mean_confidence_pct"])
            for group, count, top1, top5, conf in self.rows:
                w.writerow([group, count, repr(top1), repr(top5), repr(conf)])


def legibility_by(eval_result: EvalResult, segments, key: str) -> LegibilityTable:
    """Group evaluated images by `key` (segment | program | hall | floor |
    pitch) and report count, top-1 %, top-5 %, and mean confidence % per
    group."""
    if key not in GROUP_KEYS:
        raise DataError(f"unknown grouping key {key!r}; choose from {GROUP_KEYS}")
    seg_by_id = {s.id: s for s in segments}

    values = []
    missing = []
    for i, meta in enumerate(eval_result.meta):
        if key == "pitch":
            val = meta.get("pitch")
        elif key == "segment":
            val = meta.get("segment_id")
        else:
            seg = seg_by_id.get(meta.get("segment_id"))
            val = getattr(seg, key, None) if seg is not None else None
        if val is None:
            missing.append(eval_result.image_paths[i])
        values.append(val)
    if missing:
        raise DataError(f"images missing {key!r} metadata: {missing[:10]}")

    rows = []
    arr = np.array(values, dtype=object)
    for group in sorted(set(values)):
        sub = eval_result.subset(arr == group)
        rows.append((group, len(sub.labels), sub.top1_accuracy,
                     sub.top5_accuracy, sub.mean_confidence))
    return LegibilityTable(key=key, rows=rows, total=len(eval_result.labels))


def cam(feature_maps: np.ndarray, head_w: np.ndarray, class_index: int) -> np.ndarray:
    """Raw class activation map: per-pixel head-weighted sum of feature maps.

    feature_maps: (K, h, w); head_w: (S, K). The result's spatial mean
    equals the class logit when the head is bias-free.
    """
    feats = np.asarray(feature_maps, dtype=np.float64)
    w = np.asarray(head_w, dtype=np.float64)
    if feats.ndim != 3 or w.ndim != 2 or w.shape[1] != feats.shape[0]:
        raise DataError(
            f"shape mismatch: feature maps {feats.shape} vs head {w.shape}")
    if not 0 <= class_index < w.shape[0]:
        raise DataError(f"class index {class_index} out of range for {w.shape[0]} classes")
    return np.tensordot(w[class_index], feats, axes=1)


@dataclass
class CamHeatmap:
    """A class activation map in both resolutions: the raw grid at feature
    size and its [0, 1]-normalized upsampling to image size."""

    raw: np.ndarray
    upsampled: np.ndarray
    class_index: int
    image_ref: str = ""

    def __post_init__(self):
        if self.upsampled.min() < 0.0 or self.upsampled.max() > 1.0:
            raise DataError("upsampled map must be normalized to [0, 1]")


def make_heatmap(feature_maps: np.ndarray, head_w: np.ndarray, class_index: int,
                 out_h: int, out_w: int, image_ref: str = "") -> CamHeatmap:
    """Convenience bundle: raw activation map plus normalized upsampling."""
    raw = cam(feature_maps, head_w, class_index)
    return CamHeatmap(raw=raw, upsampled=upsample_cam(raw, out_h, out_w),
                      class_index=class_index, image_ref=image_ref)


def upsample_cam(raw: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear-upsample a raw map and min-max normalize to [0, 1].

    A constant raw map normalizes to all zeros (the 0/0 convention), so
    featureless maps read as "no attention anywhere".
    """
    raw = np.asarray(raw, dtype=np.float64)
    if out_h < raw.shape[0] or out_w < raw.shape[1]:
        raise DataError("upsample target must be at least the raw map size")
    up = bilinear_resize(raw, out_h, out_w)
    lo, hi = up.min(), up.max()
    if hi - lo <= 0.0:
        return np.zeros_like(up)
    return (up - lo) / (hi - lo)


# fixed perceptually-uniform colormap for overlays (viridis endpoints/waypoints)
_VIRIDIS_STOPS = np.array([
    [68, 1, 84], [59, 82, 139], [33, 145, 140], [94, 201, 98], [253, 231, 37],
], dtype=np.float64)


def colormap(values: np.ndarray) -> np.ndarray:
    """Map [0, 1] values onto the overlay colormap, returning float RGB."""
    v = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0)
    pos = v * (len(_VIRIDIS_STOPS) - 1)
    i0 = np.minimum(pos.astype(int), len(_VIRIDIS_STOPS) - 2)
    frac = (pos - i0)[..., None]
    return _VIRIDIS_STOPS[i0] * (1.0 - frac) + _VIRIDIS_STOPS[i0 + 1] * frac


def overlay(heatmap: np.ndarray, image: np.ndarray, alpha: float = 0.5) -> np.ndarray:
    """Blend a color-mapped heatmap over the image: alpha=0 is the image,
    alpha=1 the pure heatmap colors."""
    heat = np.asarray(heatmap, dtype=np.float64)
    img = np.asarray(image)
    if heat.shape != img.shape[:2]:
        raise DataError(f"heatmap {heat.shape} does not match image {img.shape[:2]}")
    if not 0.0 <= alpha <= 1.0:
        raise DataError(f"alpha must be in [0, 1], got {alpha}")
    colored = colormap(heat)
    blend = img.astype(np.float64) * (1.0 - alpha) + colored * alpha
    return np.clip(np.rint(blend), 0, 255).astype(np.uint8)
