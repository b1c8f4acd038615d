"""Miniature residual CNN, written directly on numpy.

The network is a stem convolution followed by a few stages of
identity-skip residual blocks (3x3 convolutions with bias, ReLU), a global
average pool over the last feature maps, and a linear softmax head. The
head is bias-free by default so every class logit decomposes exactly into
the spatial mean of a weighted feature-map sum, which is what makes the
class activation maps downstream exact rather than approximate.

Everything here - convolution, the backward pass, the SGD loop - is
implemented from scratch; the only vectorization tool is the im2col/GEMM
formulation of convolution.
"""

from __future__ import annotations

import json
import struct
import time
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .corpus import DatasetManifest, augment as _augment_image
from .errors import ConfigError, DataError, NumericError
from .imageutil import load_image

CHECKPOINT_MAGIC = b"LEGM"
CHECKPOINT_VERSION = 1


# ---------------------------------------------------------------------------
# configuration

@dataclass(frozen=True)
class ModelConfig:
    """Architecture knobs.

    `stage_channels` / `stage_blocks` describe the residual stages; an
    empty tuple gives a linear-head-only model (GAP over the raw RGB
    channels). Spatial size halves at the stem (per `stem_stride`) and at
    every stage transition.
    """

    num_classes: int
    input_size: int = 224
    stage_channels: tuple = (16, 32, 64)
    stage_blocks: tuple = (2, 2, 2)
    stem_stride: int = 2
    head_bias: bool = False

    def __post_init__(self):
        if self.num_classes < 2:
            raise ConfigError(f"num_classes must be >= 2, got {self.num_classes}")
        if len(self.stage_channels) != len(self.stage_blocks):
            raise ConfigError("stage_channels and stage_blocks must have equal length")
        if any(b < 1 for b in self.stage_blocks):
            raise ConfigError("every stage needs at least one residual block")
        if any(c < 1 for c in self.stage_channels):
            raise ConfigError("stage channel counts must be positive")
        if self.input_size < 1 or self.stem_stride < 1:
            raise ConfigError("input_size and stem_stride must be positive")
        if self.feature_map_size < 1:
            raise ConfigError(
                f"input {self.input_size} collapses below 1x1 after downsampling")

    @property
    def feature_map_size(self) -> int:
        """Spatial side of the last-stage feature maps."""
        size = self.input_size
        if self.stage_channels:
            size = -(-size // self.stem_stride)
            for _ in self.stage_channels[1:]:
                size = -(-size // 2)
        return size

    @property
    def feature_channels(self) -> int:
        """K: channel count of the last feature maps feeding GAP."""
        return self.stage_channels[-1] if self.stage_channels else 3

    def to_dict(self) -> dict:
        return {
            "num_classes": self.num_classes,
            "input_size": self.input_size,
            "stage_channels": list(self.stage_channels),
            "stage_blocks": list(self.stage_blocks),
            "stem_stride": self.stem_stride,
            "head_bias": self.head_bias,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(num_classes=d["num_classes"], input_size=d["input_size"],
                   stage_channels=tuple(d["stage_channels"]),
                   stage_blocks=tuple(d["stage_blocks"]),
                   stem_stride=d["stem_stride"], head_bias=d["head_bias"])


# ---------------------------------------------------------------------------
# layers

def _im2col(x: np.ndarray, stride: int):
    """Unfold 3x3 neighborhoods (pad 1) into (B, C*9, Ho*Wo) columns."""
    b, c, h, w = x.shape
    ho = (h - 1) // stride + 1
    wo = (w - 1) // stride + 1
    xp = np.zeros((b, c, h + 2, w + 2), dtype=x.dtype)
    xp[:, :, 1:h + 1, 1:w + 1] = x
    cols = np.empty((b, c, 9, ho, wo), dtype=x.dtype)
    k = 0
    for di in range(3):
        for dj in range(3):
            cols[:, :, k] = xp[:, :, di:di + (ho - 1) * stride + 1:stride,
                               dj:dj + (wo - 1) * stride + 1:stride]
            k += 1
    return cols.reshape(b, c * 9, ho * wo), (ho, wo)


def _col2im(dcols: np.ndarray, x_shape, stride: int):
    """Fold column gradients back onto the padded input (exact adjoint of _im2col)."""
    b, c, h, w = x_shape
    ho = (h - 1) // stride + 1
    wo = (w - 1) // stride + 1
    dcols = dcols.reshape(b, c, 9, ho, wo)
    dxp = np.zeros((b, c, h + 2, w + 2), dtype=dcols.dtype)
    k = 0
    for di in range(3):
        for dj in range(3):
            dxp[:, :, di:di + (ho - 1) * stride + 1:stride,
                dj:dj + (wo - 1) * stride + 1:stride] += dcols[:, :, k]
            k += 1
    return dxp[:, :, 1:h + 1, 1:w + 1]


class Conv3x3:
    """3x3 convolution, padding 1, with bias."""

    def __init__(self, name: str, c_in: int, c_out: int, stride: int,
                 rng: np.random.Generator, dtype):
        scale = np.sqrt(2.0 / (c_in * 9))
        self.name = name
        self.stride = stride
        self.w = (rng.standard_normal((c_out, c_in, 3, 3)) * scale).astype(dtype)
        self.b = np.zeros(c_out, dtype=dtype)
        self.dw = None
        self.db = None

    def forward(self, x: np.ndarray, tape: Optional[list]) -> np.ndarray:
        cols, (ho, wo) = _im2col(x, self.stride)
        c_out = self.w.shape[0]
        y = np.matmul(self.w.reshape(c_out, -1), cols) + self.b[:, None]
        if tape is not None:
            tape.append((self, x.shape, cols))
        return y.reshape(x.shape[0], c_out, ho, wo)

    def backward(self, dy: np.ndarray, x_shape, cols) -> np.ndarray:
        b, c_out = dy.shape[:2]
        dyf = np.ascontiguousarray(dy.reshape(b, c_out, -1))
        self.dw = np.matmul(dyf, cols.transpose(0, 2, 1)).sum(axis=0).reshape(self.w.shape)
        self.db = dyf.sum(axis=(0, 2))
        dcols = np.matmul(self.w.reshape(c_out, -1).T, dyf)
        return _col2im(dcols, x_shape, self.stride)

    def params(self):
        return [(f"{self.name}.w", "w"), (f"{self.name}.b", "b")]


class ResidualBlock:
    """y = relu(x + conv2(relu(conv1(x)))); channel-preserving identity skip."""

    def __init__(self, name: str, channels: int, rng: np.random.Generator, dtype):
        self.name = name
        self.conv1 = Conv3x3(f"{name}.conv1", channels, channels, 1, rng, dtype)
        self.conv2 = Conv3x3(f"{name}.conv2", channels, channels, 1, rng, dtype)

    def forward(self, x: np.ndarray, tape: Optional[list]) -> np.ndarray:
        inner_tape = [] if tape is not None else None
        h = self.conv1.forward(x, inner_tape)
        mask1 = h > 0
        h = h * mask1
        z = self.conv2.forward(h, inner_tape)
        y = x + z
        mask_out = y > 0
        y = y * mask_out
        if tape is not None:
            tape.append((self, inner_tape, mask1, mask_out))
        return y

    def backward(self, dy: np.ndarray, inner_tape, mask1, mask_out) -> np.ndarray:
        d_sum = dy * mask_out
        _, shape2, cols2 = inner_tape[1]
        dh = self.conv2.backward(d_sum, shape2, cols2)
        dh = dh * mask1
        _, shape1, cols1 = inner_tape[0]
        dx = self.conv1.backward(dh, shape1, cols1)
        return dx + d_sum

    def params(self):
        return self.conv1.params() + self.conv2.params()


class Model:
    """Stem conv -> residual stages -> GAP -> linear softmax head."""

    def __init__(self, config: ModelConfig, seed: int, dtype=np.float32):
        rng = np.random.default_rng(seed)
        self.config = config
        self.seed = seed
        self.dtype = np.dtype(dtype)
        ch = config.stage_channels
        if ch:
            self.stem = Conv3x3("stem", 3, ch[0], config.stem_stride, rng, dtype)
            self.blocks = []
            self.transitions = []
            for i, (c, n_blocks) in enumerate(zip(ch, config.stage_blocks)):
                if i > 0:
                    self.transitions.append(
                        Conv3x3(f"stage{i}.transition", ch[i - 1], c, 2, rng, dtype))
                stage_blocks = [ResidualBlock(f"stage{i}.block{j}", c, rng, dtype)
                                for j in range(n_blocks)]
                self.blocks.append(stage_blocks)
        else:
            self.stem = None
            self.blocks = []
            self.transitions = []
        k = config.feature_channels
        self.head_w = (rng.standard_normal((config.num_classes, k)) * 0.01).astype(dtype)
        self.head_b = np.zeros(config.num_classes, dtype=dtype) if config.head_bias else None

    # -- parameter registry (declaration order, stable for checkpoints) ----

    def named_params(self):
        out = []
        if self.stem is not None:
            out.append(("stem.w", self.stem, "w"))
            out.append(("stem.b", self.stem, "b"))
            for i, stage in enumerate(self.blocks):
                if i > 0:
                    t = self.transitions[i - 1]
                    out.append((f"{t.name}.w", t, "w"))
                    out.append((f"{t.name}.b", t, "b"))
                for blk in stage:
                    for conv in (blk.conv1, blk.conv2):
                        out.append((f"{conv.name}.w", conv, "w"))
                        out.append((f"{conv.name}.b", conv, "b"))
        out.append(("head.w", self, "head_w"))
        if self.head_b is not None:
            out.append(("head.b", self, "head_b"))
        return out

    def param_arrays(self):
        return [(name, getattr(obj, attr)) for name, obj, attr in self.named_params()]

    def num_params(self) -> int:
        return sum(arr.size for _, arr in self.param_arrays())

    def astype(self, dtype) -> "Model":
        clone = Model(self.config, self.seed, dtype=dtype)
        for (_, obj, attr), (_, src_obj, src_attr) in zip(clone.named_params(),
                                                          self.named_params()):
            setattr(obj, attr, getattr(src_obj, src_attr).astype(dtype))
        return clone

    # -- forward / backward -------------------------------------------------

    def _conv_relu(self, conv, x, tape):
        y = conv.forward(x, tape)
        mask = y > 0
        if tape is not None:
            tape.append(("relu", mask))
        return y * mask

    def features(self, x: np.ndarray, tape: Optional[list] = None) -> np.ndarray:
        """Last-stage feature maps for a (B, 3, H, W) batch."""
        if self.stem is None:
            return x
        h = self._conv_relu(self.stem, x, tape)
        for i, stage in enumerate(self.blocks):
            if i > 0:
                h = self._conv_relu(self.transitions[i - 1], h, tape)
            for blk in stage:
                h = blk.forward(h, tape)
        return h

    def forward_batch(self, x: np.ndarray, tape: Optional[list] = None):
        """Returns (feature_maps, gap, logits); gap/logits in float64."""
        if x.shape[1] != 3 or x.shape[2] != self.config.input_size \
                or x.shape[3] != self.config.input_size:
            raise DataError(
                f"expected (B, 3, {self.config.input_size}, {self.config.input_size}) "
                f"input, got {x.shape}")
        feats = self.features(x.astype(self.dtype, copy=False), tape)
        gap = feats.mean(axis=(2, 3), dtype=np.float64)
        logits = gap @ self.head_w.astype(np.float64).T
        if self.head_b is not None:
            logits = logits + self.head_b.astype(np.float64)
        return feats, gap, logits

    def backward_batch(self, dlogits: np.ndarray, feats, gap, tape: list):
        """Accumulates parameter gradients from dL/dlogits; consumes the tape."""
        dlogits = dlogits.astype(np.float64)
        self.d_head_w = (dlogits.T @ gap).astype(self.dtype)
        if self.head_b is not None:
            self.d_head_b = dlogits.sum(axis=0).astype(self.dtype)
        dgap = (dlogits @ self.head_w.astype(np.float64)).astype(self.dtype)
        h, w = feats.shape[2], feats.shape[3]
        dfeats = np.broadcast_to(dgap[:, :, None, None] / (h * w), feats.shape).astype(self.dtype)
        if self.stem is None:
            return dfeats
        grad = np.ascontiguousarray(dfeats)
        for item in reversed(tape):
            if isinstance(item, tuple) and item[0] == "relu":
                grad = grad * item[1]
            elif isinstance(item[0], ResidualBlock):
                blk, inner_tape, mask1, mask_out = item
                grad = blk.backward(grad, inner_tape, mask1, mask_out)
            else:
                conv, shape, cols = item
                grad = conv.backward(grad, shape, cols)
        return grad


@dataclass
class ForwardResult:
    """Single-image forward output: logits/probs (float64) and feature maps."""

    logits: np.ndarray       # (S,)
    probs: np.ndarray        # (S,)
    feature_maps: np.ndarray  # (K, h, w)


def build_model(config: ModelConfig, seed: int, dtype=np.float32) -> Model:
    """Deterministic model construction: same (config, seed) -> identical parameters."""
    return Model(config, seed, dtype=dtype)


def to_input(image: np.ndarray) -> np.ndarray:
    """(H, W, 3) uint8/float image -> (3, H, W) float in [-0.5, 0.5]."""
    img = np.asarray(image)
    if img.ndim != 3 or img.shape[2] != 3:
        raise DataError(f"expected (H, W, 3) image, got {img.shape}")
    return (img.astype(np.float32) / 255.0 - 0.5).transpose(2, 0, 1)


def softmax(z: np.ndarray) -> np.ndarray:
    """Standard softmax with max-subtraction; shift-invariant, rows sum to 1."""
    z = np.asarray(z, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise NumericError("softmax input contains non-finite logits")
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def forward(model: Model, image: np.ndarray) -> ForwardResult:
    """Run one image through the model; pure (no internal state is touched)."""
    x = to_input(image)[None]
    feats, gap, logits = model.forward_batch(x)
    return ForwardResult(logits=logits[0], probs=softmax(logits[0]),
                         feature_maps=feats[0].astype(np.float64))


def cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy and dL/dlogits for a (B, S) float64 logit batch."""
    probs = softmax(logits)
    b = logits.shape[0]
    picked = probs[np.arange(b), labels]
    loss = float(-np.log(np.maximum(picked, 1e-300)).mean())
    dlogits = probs.copy()
    dlogits[np.arange(b), labels] -= 1.0
    return loss, dlogits / b


# ---------------------------------------------------------------------------
# datasets

@dataclass
class LabeledImages:
    """In-memory dataset: images plus class labels and per-image metadata."""

    images: np.ndarray          # (N, H, W, 3) uint8
    labels: np.ndarray          # (N,) class indices
    class_segments: list        # class index -> segment id
    image_paths: list
    meta: list                  # dicts: segment_id, yaw, pitch, pano_id

    def __len__(self):
        return len(self.labels)


def load_dataset(manifest: DatasetManifest, root=None) -> LabeledImages:
    """Materialize a manifest: read every crop image, map segment ids to
    contiguous class indices (shared across splits via the segment table)."""
    if not manifest.entries:
        raise DataError("manifest has no entries")
    from pathlib import Path
    class_segments = sorted(s.id for s in manifest.segments)
    seg_to_class = {sid: i for i, sid in enumerate(class_segments)}
    images, labels, paths, meta = [], [], [], []
    for e in manifest.entries:
        path = str(Path(root) / e.image_path) if root else e.image_path
        images.append(load_image(path))
        labels.append(seg_to_class[e.segment_id])
        paths.append(e.image_path)
        meta.append({"segment_id": e.segment_id, "yaw": e.yaw, "pitch": e.pitch,
                     "pano_id": e.pano_id})
    return LabeledImages(images=np.stack(images), labels=np.array(labels),
                         class_segments=class_segments, image_paths=paths, meta=meta)


# ---------------------------------------------------------------------------
# training

@dataclass
class TrainReport:
    epochs: list = field(default_factory=list)        # epoch indices
    train_loss: list = field(default_factory=list)    # mean loss per epoch
    test_top1: list = field(default_factory=list)     # % or None per epoch
    test_top5: list = field(default_factory=list)
    wall_time: float = 0.0


def train(model: Model, data: LabeledImages, epochs: int, lr: float = 1e-4,
          batch_size: int = 32, seed: int = 0, start_epoch: int = 0,
          augment: bool = True, eval_data: Optional[LabeledImages] = None,
          log=None) -> tuple:
    """Plain SGD on cross-entropy with per-sample augmentation.

    Per-epoch randomness is derived from (seed, epoch), so resuming from a
    checkpoint at epoch k reproduces exactly the losses a straight-through
    run would have produced. Aborts with NumericError on a non-finite loss.
    """
    if len(data) == 0:
        raise DataError("empty training set")
    if lr < 0:
        raise ConfigError("lr must be non-negative")
    report = TrainReport()
    t0 = time.monotonic()
    n = len(data)
    for epoch in range(start_epoch, start_epoch + epochs):
        rng = np.random.default_rng((seed, epoch))
        order = rng.permutation(n)
        losses = []
        for bstart in range(0, n, batch_size):
            idx = order[bstart:bstart + batch_size]
            batch = np.empty((len(idx), 3, model.config.input_size,
                              model.config.input_size), dtype=np.float32)
            for j, i in enumerate(idx):
                img = data.images[i]
                if augment:
                    img = _augment_image(img, rng)
                batch[j] = to_input(img)
            tape: list = []
            feats, gap, logits = model.forward_batch(batch, tape)
            loss, dlogits = cross_entropy(logits, data.labels[idx])
            if not np.isfinite(loss):
                raise NumericError(
                    f"non-finite loss at epoch {epoch} batch {bstart // batch_size}")
            losses.append(loss)
            model.backward_batch(dlogits, feats, gap, tape)
            if lr > 0.0:
                _sgd_step(model, lr)
        report.epochs.append(epoch)
        report.train_loss.append(float(np.mean(losses)))
        if eval_data is not None:
            ev = evaluate(model, eval_data)
            report.test_top1.append(ev.top1_accuracy)
            report.test_top5.append(ev.top5_accuracy)
        else:
            report.test_top1.append(None)
            report.test_top5.append(None)
        if log is not None:
            log(epoch=epoch, loss=report.train_loss[-1],
                top1=report.test_top1[-1], top5=report.test_top5[-1])
    report.wall_time = time.monotonic() - t0
    return model, report


def _sgd_step(model: Model, lr: float) -> None:
    for name, obj, attr in model.named_params():
        grad_attr = {"head_w": "d_head_w", "head_b": "d_head_b"}.get(attr, "d" + attr)
        grad = getattr(obj, grad_attr, None)
        if grad is not None:
            arr = getattr(obj, attr)
            arr -= (lr * grad).astype(arr.dtype)


# ---------------------------------------------------------------------------
# gradient checking

def grad_check(model: Model, image: np.ndarray, label: int,
               num_params_probed: int = 100, step: float = 1e-5,
               seed: int = 0) -> float:
    """Max relative error between analytic and central-difference gradients.

    Runs on a float64 copy of the model. The relative error uses a 1e-4
    floor in the denominator so coordinates with near-zero gradients are
    judged on the finite-difference noise floor rather than blowing up.
    """
    m = model.astype(np.float64)
    x = to_input(image).astype(np.float64)[None]
    labels = np.array([label])

    tape: list = []
    feats, gap, logits = m.forward_batch(x, tape)
    _, dlogits = cross_entropy(logits, labels)
    m.backward_batch(dlogits, feats, gap, tape)

    def loss_only() -> float:
        _, _, lg = m.forward_batch(x)
        return cross_entropy(lg, labels)[0]

    analytic = {}
    for name, obj, attr in m.named_params():
        grad_attr = {"head_w": "d_head_w", "head_b": "d_head_b"}.get(attr, "d" + attr)
        analytic[name] = getattr(obj, grad_attr)

    entries = m.named_params()
    sizes = np.array([getattr(obj, attr).size for _, obj, attr in entries])
    total = int(sizes.sum())
    rng = np.random.default_rng(seed)
    probes = rng.choice(total, size=min(num_params_probed, total), replace=False)
    bounds = np.cumsum(sizes)

    max_rel = 0.0
    for flat in probes:
        p = int(np.searchsorted(bounds, flat, side="right"))
        name, obj, attr = entries[p]
        local = int(flat - (bounds[p - 1] if p > 0 else 0))
        arr = getattr(obj, attr)
        orig = arr.flat[local]
        arr.flat[local] = orig + step
        f_plus = loss_only()
        arr.flat[local] = orig - step
        f_minus = loss_only()
        arr.flat[local] = orig
        numeric = (f_plus - f_minus) / (2.0 * step)
        a = analytic[name].flat[local]
        rel = abs(a - numeric) / max(abs(a) + abs(numeric), 1e-4)
        max_rel = max(max_rel, rel)
    return max_rel


# ---------------------------------------------------------------------------
# evaluation

@dataclass
class EvalResult:
    """Per-image probabilities plus the label bookkeeping reports need."""

    probs: np.ndarray        # (N, S) float64
    labels: np.ndarray       # (N,) class indices
    class_segments: list     # class index -> segment id
    image_paths: list
    meta: list

    @property
    def preds(self) -> np.ndarray:
        return self.probs.argmax(axis=1)

    @property
    def top1_accuracy(self) -> float:
        return float((self.preds == self.labels).mean() * 100.0)

    @property
    def top5_accuracy(self) -> float:
        s = self.probs.shape[1]
        if s < 5:
            return 100.0
        top5 = np.argsort(-self.probs, axis=1)[:, :5]
        return float((top5 == self.labels[:, None]).any(axis=1).mean() * 100.0)

    @property
    def mean_confidence(self) -> float:
        """Mean probability assigned to the true label, in percent."""
        n = len(self.labels)
        return float(self.probs[np.arange(n), self.labels].mean() * 100.0)

    def true_label_probs(self) -> np.ndarray:
        return self.probs[np.arange(len(self.labels)), self.labels]

    def subset(self, mask: np.ndarray) -> "EvalResult":
        idx = np.flatnonzero(mask)
        return EvalResult(probs=self.probs[idx], labels=self.labels[idx],
                          class_segments=self.class_segments,
                          image_paths=[self.image_paths[i] for i in idx],
                          meta=[self.meta[i] for i in idx])

    def per_segment(self) -> list:
        """Rows (segment_id, count, top1 %, top5 %, mean confidence %);
        segments absent from the evaluated set are omitted with a warning."""
        rows = []
        for cls, seg_id in enumerate(self.class_segments):
            mask = self.labels == cls
            if not mask.any():
                warnings.warn(f"segment {seg_id} has no evaluated images; omitted")
                continue
            sub = self.subset(mask)
            rows.append((seg_id, int(mask.sum()), sub.top1_accuracy,
                         sub.top5_accuracy, sub.mean_confidence))
        return rows

    def to_csv(self, path) -> None:
        import csv
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["image_path", "label", "pred", "conf_true_label"])
            preds = self.preds
            conf = self.true_label_probs()
            for i, p in enumerate(self.image_paths):
                w.writerow([p, self.class_segments[self.labels[i]],
                            self.class_segments[preds[i]], repr(float(conf[i]))])

    def summary_csv(self, path) -> None:
        import csv
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["segment_id", "count", "top1_pct", "top5_pct", "mean_confidence_pct"])
            for row in self.per_segment():
                w.writerow([row[0], row[1], repr(row[2]), repr(row[3]), repr(row[4])])


def evaluate(model: Model, data: LabeledImages, batch_size: int = 64) -> EvalResult:
    """Forward the whole set (no augmentation) and collect probabilities."""
    if len(data) == 0:
        raise DataError("empty evaluation set")
    probs = np.empty((len(data), model.config.num_classes), dtype=np.float64)
    for bstart in range(0, len(data), batch_size):
        idx = slice(bstart, min(bstart + batch_size, len(data)))
        batch = np.stack([to_input(img) for img in data.images[idx]])
        _, _, logits = model.forward_batch(batch)
        probs[idx] = softmax(logits)
    return EvalResult(probs=probs, labels=data.labels.copy(),
                      class_segments=list(data.class_segments),
                      image_paths=list(data.image_paths), meta=list(data.meta))


# ---------------------------------------------------------------------------
# checkpoints

def save_model(model: Model, path, seed: Optional[int] = None,
               epoch: Optional[int] = None, extra: Optional[dict] = None) -> None:
    """Binary checkpoint: magic, version, JSON header, float32 LE blobs in
    declaration order."""
    params = model.param_arrays()
    header = {
        "config": model.config.to_dict(),
        "seed": model.seed if seed is None else seed,
        "epoch": epoch,
        "params": [{"name": n, "shape": list(a.shape)} for n, a in params],
    }
    if extra:
        header["extra"] = extra
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for _, arr in params:
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_model(path) -> tuple:
    """Read a checkpoint; returns (model, header)."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise DataError(f"not a model checkpoint: bad magic {magic!r}")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != CHECKPOINT_VERSION:
            raise DataError(f"unsupported checkpoint version {version}")
        (hlen,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        model = build_model(ModelConfig.from_dict(header["config"]),
                            seed=header["seed"])
        for spec, (name, obj, attr) in zip(header["params"], model.named_params()):
            if spec["name"] != name:
                raise DataError(f"checkpoint parameter order mismatch at {spec['name']}")
            shape = tuple(spec["shape"])
            count = int(np.prod(shape)) if shape else 1
            raw = fh.read(count * 4)
            if len(raw) != count * 4:
                raise DataError("truncated checkpoint")
            setattr(obj, attr, np.frombuffer(raw, dtype="<f4").reshape(shape).copy())
    return model, header
