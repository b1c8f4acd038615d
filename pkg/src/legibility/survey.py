"""Human-validation survey: question pool, response persistence, and
aggregation.

Each question shows a rotating panorama of a secret segment A, then asks
which of three images comes from the same space: one really from A, one
from A's highest-affinity partner segment, and one from an unrelated
segment. After choosing, the participant marks three features on the
reference image (click position plus a property tag); those clicks are
later compared against the model's activation heatmap via an
attention-overlap score in [0, 1]: the heatmap mass captured by three
click disks, relative to the most mass any equal-pixel-count region could
capture.

Storage is an append-only JSON-lines file, flushed durably per submission
and replayable: every aggregation is a pure function of the stored set.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import warnings
from dataclasses import dataclass, field, asdict
from typing import Optional, Sequence

import numpy as np

from .corpus import DatasetManifest
from .errors import DataError
from .similarity import SegmentAffinity

PROPERTIES = ("object", "material", "color", "light", "geometry", "texture", "other")
CHOICE_ROLES = ("image_a_1", "image_b", "image_c")
ROTATION_MS = 10000


@dataclass(frozen=True)
class SurveyQuestion:
    """One three-way matching question. `roles` (image path -> choice role)
    stays server-side; participants only ever see the shuffled paths."""

    question_id: str
    segment_a: int
    pano_id: str
    control_image: str
    choices: tuple            # three image paths, display (shuffled) order
    roles: dict               # path -> role in CHOICE_ROLES
    choice_segments: dict     # path -> segment id
    rotation_ms: int = ROTATION_MS


@dataclass(frozen=True)
class FeatureClick:
    x: float
    y: float
    property: str


@dataclass(frozen=True)
class SurveyResponse:
    participant: str          # hashed participant key
    question_id: str
    chosen_image: str
    chosen_segment: int
    clicks: tuple             # exactly 3 FeatureClicks
    dwell_ms: float
    timestamp: float
    token: str = ""           # idempotency token

    def to_dict(self) -> dict:
        d = asdict(self)
        d["clicks"] = [asdict(c) for c in self.clicks]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SurveyResponse":
        clicks = tuple(FeatureClick(**c) for c in d["clicks"])
        return cls(participant=d["participant"], question_id=d["question_id"],
                   chosen_image=d["chosen_image"], chosen_segment=d["chosen_segment"],
                   clicks=clicks, dwell_ms=d["dwell_ms"], timestamp=d["timestamp"],
                   token=d.get("token", ""))


def hash_participant(raw_key: str) -> str:
    """Participants are keyed by a hash, never by the raw network address."""
    return hashlib.sha256(raw_key.encode("utf-8")).hexdigest()[:16]


def argmax_partner(aff: SegmentAffinity, cls: int) -> int:
    """Class index of the highest-affinity partner (ties -> lowest index)."""
    row = aff.matrix[cls].copy()
    row[cls] = -np.inf
    return int(row.argmax())  # argmax returns the first (lowest) index on ties


def build_question_pool(pairs: Sequence[tuple], aff: SegmentAffinity,
                        manifest: DatasetManifest, pool_size: int,
                        seed: int) -> list:
    """One question per ranked pair, up to pool_size.

    The anchor segment A is the pair element whose argmax-affinity partner
    is the other element (lower index preferred); if neither side
    qualifies, the lower index anchors and image_b still comes from the
    anchor's true argmax partner, keeping the role invariant intact.
    Pairs whose anchor has fewer than 2 images are skipped with a warning.
    """
    rng = np.random.default_rng(seed)
    seg_ids = list(aff.class_segments)
    cls_of = {sid: i for i, sid in enumerate(seg_ids)}
    images_by_cls: dict = {i: [] for i in range(len(seg_ids))}
    pano_of: dict = {}
    for e in manifest.entries:
        cls = cls_of.get(e.segment_id)
        if cls is not None:
            images_by_cls[cls].append(e.image_path)
            pano_of[e.image_path] = e.pano_id
    if len(seg_ids) < 3:
        raise DataError("need at least 3 segments to build questions")

    questions = []
    for idx, (i, j) in enumerate(pairs):
        if len(questions) >= pool_size:
            break
        if argmax_partner(aff, i) == j:
            anchor = i
        elif argmax_partner(aff, j) == i:
            anchor = j
        else:
            anchor = min(i, j)
        partner = argmax_partner(aff, anchor)

        anchor_imgs = images_by_cls[anchor]
        partner_imgs = images_by_cls[partner]
        others = [c for c in range(len(seg_ids))
                  if c not in (anchor, partner) and images_by_cls[c]]
        if len(anchor_imgs) < 2 or not partner_imgs or not others:
            warnings.warn(f"pair ({i}, {j}): not enough images; skipped")
            continue

        control, same_seg = (anchor_imgs[k] for k in
                             rng.choice(len(anchor_imgs), size=2, replace=False))
        img_b = partner_imgs[int(rng.integers(len(partner_imgs)))]
        c_cls = others[int(rng.integers(len(others)))]
        img_c = images_by_cls[c_cls][int(rng.integers(len(images_by_cls[c_cls])))]

        ordered = [same_seg, img_b, img_c]
        order = rng.permutation(3)
        choices = tuple(ordered[k] for k in order)
        roles = {same_seg: "image_a_1", img_b: "image_b", img_c: "image_c"}
        choice_segments = {same_seg: seg_ids[anchor], img_b: seg_ids[partner],
                           img_c: seg_ids[c_cls]}
        questions.append(SurveyQuestion(
            question_id=f"q{idx:03d}", segment_a=seg_ids[anchor],
            pano_id=pano_of[control], control_image=control,
            choices=choices, roles=roles, choice_segments=choice_segments))
    return questions


# ---------------------------------------------------------------------------
# persistence

class ResponseStore:
    """Append-only JSON-lines record store with idempotent submission.

    Every record carries a sequential id and the submission token; a
    duplicate token returns the original id without appending. Writes are
    flushed and fsynced so a crash never loses an acknowledged response.
    """

    def __init__(self, path):
        self.path = str(path)
        self._lock = threading.Lock()
        self._records: list = []
        self._by_token: dict = {}
        if os.path.exists(self.path):
            with open(self.path, encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        rec = json.loads(line)
                        self._records.append(rec)
                        if rec.get("token"):
                            self._by_token[rec["token"]] = rec["id"]
        self._fh = open(self.path, "a", encoding="utf-8")

    def append(self, response: SurveyResponse) -> str:
        with self._lock:
            if response.token and response.token in self._by_token:
                return self._by_token[response.token]
            rid = f"r{len(self._records):06d}"
            rec = {"id": rid, "token": response.token, "response": response.to_dict()}
            self._fh.write(json.dumps(rec, sort_keys=True) + "\n")
            self._fh.flush()
            os.fsync(self._fh.fileno())
            self._records.append(rec)
            if response.token:
                self._by_token[response.token] = rid
            return rid

    def responses(self) -> list:
        with self._lock:
            return [SurveyResponse.from_dict(r["response"]) for r in self._records]

    def records(self) -> list:
        with self._lock:
            return list(self._records)

    def __len__(self):
        return len(self._records)

    def close(self):
        self._fh.close()


def validate_response(response: SurveyResponse, question: SurveyQuestion,
                      image_size: tuple) -> None:
    """Raise DataError naming the offending field on any contract violation."""
    if len(response.clicks) != 3:
        raise DataError(f"clicks: expected exactly 3, got {len(response.clicks)}")
    w, h = image_size
    for k, c in enumerate(response.clicks):
        if not (0 <= c.x < w and 0 <= c.y < h):
            raise DataError(f"clicks[{k}]: ({c.x}, {c.y}) outside {w}x{h} image")
        if c.property not in PROPERTIES:
            raise DataError(f"clicks[{k}].property: unknown value {c.property!r}")
    if response.chosen_image not in question.choices:
        raise DataError("chosen_image: not one of the question's choices")
    if response.chosen_segment != question.choice_segments[response.chosen_image]:
        raise DataError("chosen_segment: does not match the chosen image")
    if response.dwell_ms < 0:
        raise DataError("dwell_ms: must be non-negative")


# ---------------------------------------------------------------------------
# filtering and aggregation

def filter_bots(responses: Sequence[SurveyResponse], min_dwell_ms: float = 2000.0,
                max_per_participant: int = 20) -> tuple:
    """Split responses into (valid, rejected) with recorded reasons.

    Too-fast answers (dwell below the threshold) and hyperactive
    participant keys (beyond max_per_participant responses, in arrival
    order) are rejected deterministically.
    """
    counts: dict = {}
    valid, rejected = [], []
    for r in responses:
        if r.dwell_ms < min_dwell_ms:
            rejected.append((r, f"dwell {r.dwell_ms:.0f}ms below {min_dwell_ms:.0f}ms"))
            continue
        counts[r.participant] = counts.get(r.participant, 0) + 1
        if counts[r.participant] > max_per_participant:
            rejected.append((r, f"participant exceeded {max_per_participant} responses"))
            continue
        valid.append(r)
    return valid, rejected


def aggregate_choices(responses: Sequence[SurveyResponse], questions: Sequence[SurveyQuestion]) -> dict:
    """Counts and percentages of choices by role (same-segment image,
    max-affinity partner, random other)."""
    by_id = {q.question_id: q for q in questions}
    counts = {role: 0 for role in CHOICE_ROLES}
    for r in responses:
        q = by_id.get(r.question_id)
        if q is None:
            raise DataError(f"response references unknown question {r.question_id!r}")
        counts[q.roles[r.chosen_image]] += 1
    total = sum(counts.values())
    percentages = {role: (100.0 * c / total if total else 0.0)
                   for role, c in counts.items()}
    return {"counts": counts, "percentages": percentages, "total": total}


def property_tally(responses: Sequence[SurveyResponse]) -> dict:
    """Per click-rank property percentages (1st/2nd/3rd click columns)."""
    ranks = []
    for rank in range(3):
        counts = {p: 0 for p in PROPERTIES}
        for r in responses:
            counts[r.clicks[rank].property] += 1
        total = sum(counts.values())
        ranks.append({
            "counts": counts,
            "percentages": {p: (100.0 * c / total if total else 0.0)
                            for p, c in counts.items()},
            "total": total,
        })
    return {"ranks": ranks}


# ---------------------------------------------------------------------------
# attention overlap (posterior predictive check)

def attention_overlap(heatmap: np.ndarray, clicks: Sequence, radius: float = 10.0,
                      denominator: str = "topk") -> float:
    """Fraction of the model's best-capturable heatmap mass that the
    participant's click disks actually capture; in [0, 1].

    The heatmap (any non-negative 2-D map, e.g. a [0, 1]-normalized
    activation map) is renormalized to a probability mass; an all-zero map
    counts as uniform. The selected region U is the union of pixel-center
    disks of `radius` around the clicks, clipped to the image. With
    denominator="topk" (default) the score divides by the sum of the |U|
    largest mass values anywhere - the most an equal-area selection could
    capture; denominator="total" divides by the whole mass instead.
    """
    heat = np.asarray(heatmap, dtype=np.float64)
    if heat.ndim != 2:
        raise DataError(f"expected a 2-D heatmap, got shape {heat.shape}")
    if (heat < 0).any():
        raise DataError("heatmap values must be non-negative")
    if denominator not in ("topk", "total"):
        raise DataError(f"unknown denominator mode {denominator!r}")
    h, w = heat.shape
    total = heat.sum()
    mass = np.full((h, w), 1.0 / (h * w)) if total <= 0.0 else heat / total

    cols, rows = np.meshgrid(np.arange(w, dtype=np.float64),
                             np.arange(h, dtype=np.float64))
    selected = np.zeros((h, w), dtype=bool)
    for c in clicks:
        x, y = (c.x, c.y) if hasattr(c, "x") else (c[0], c[1])
        selected |= (cols - x) ** 2 + (rows - y) ** 2 <= radius * radius
    k = int(selected.sum())
    if k == 0:
        return 0.0
    numerator = float(mass[selected].sum())
    if denominator == "total":
        denom = float(mass.sum())
    else:
        denom = float(np.sort(mass, axis=None)[-k:].sum())
    if denom <= 0.0:
        return 0.0
    return min(max(numerator / denom, 0.0), 1.0)


@dataclass
class OverlapSummary:
    """Per-response attention-overlap scores plus their distribution."""

    per_response: list = field(default_factory=list)  # (response index, score)
    skipped: int = 0
    bin_width: float = 0.05

    @property
    def values(self) -> np.ndarray:
        return np.array([v for _, v in self.per_response], dtype=np.float64)

    def summary(self) -> dict:
        v = self.values
        if v.size == 0:
            return {"count": 0, "max": None, "min": None, "mean": None,
                    "median": None, "skipped": self.skipped}
        return {"count": int(v.size), "max": float(v.max()), "min": float(v.min()),
                "mean": float(v.mean()), "median": float(np.median(v)),
                "skipped": self.skipped}

    def histogram(self) -> list:
        """Bins of width 0.05 covering [0, 1]: (lo, hi, count)."""
        edges = np.arange(0.0, 1.0 + self.bin_width / 2, self.bin_width)
        counts, _ = np.histogram(self.values, bins=edges)
        return [(float(edges[i]), float(edges[i + 1]), int(c))
                for i, c in enumerate(counts)]


def overlap_distribution(responses: Sequence[SurveyResponse], questions: Sequence[SurveyQuestion],
                         heatmaps: dict, radius: float = 10.0,
                         denominator: str = "topk") -> OverlapSummary:
    """Score every response against the model heatmap of its question's
    control image; responses without a heatmap are skipped with a warning."""
    by_id = {q.question_id: q for q in questions}
    out = OverlapSummary()
    for i, r in enumerate(responses):
        q = by_id.get(r.question_id)
        heat = heatmaps.get(q.control_image) if q is not None else None
        if heat is None:
            warnings.warn(f"response {i}: no heatmap for its control image; skipped")
            out.skipped += 1
            continue
        out.per_response.append(
            (i, attention_overlap(heat, r.clicks, radius=radius, denominator=denominator)))
    return out


def export_responses_csv(records: Sequence[dict], questions: Sequence[SurveyQuestion], path) -> None:
    """Flat CSV of stored responses: participant, question, the three choice
    images with their segments, the user's choice, click coordinates and
    properties, dwell time, timestamp."""
    import csv
    by_id = {q.question_id: q for q in questions}
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        header = ["response_id", "participant", "question_id",
                  "image_a_1", "image_b", "image_c",
                  "choice_image", "choice_segment"]
        for k in range(1, 4):
            header += [f"click{k}_x", f"click{k}_y", f"click{k}_property"]
        header += ["dwell_ms", "timestamp"]
        w.writerow(header)
        for rec in records:
            r = SurveyResponse.from_dict(rec["response"])
            q = by_id.get(r.question_id)
            by_role = {role: img for img, role in q.roles.items()} if q else {}
            row = [rec["id"], r.participant, r.question_id,
                   by_role.get("image_a_1", ""), by_role.get("image_b", ""),
                   by_role.get("image_c", ""), r.chosen_image, r.chosen_segment]
            for c in r.clicks:
                row += [repr(c.x), repr(c.y), c.property]
            row += [repr(r.dwell_ms), repr(r.timestamp)]
            w.writerow(row)


class SurveyService:
    """Serves questions round-robin and persists validated responses.

    A participant gets at most `questions_per_participant` distinct
    questions; each serve picks the globally least-served unseen question
    (ties to the lowest question id), keeping per-question sample counts
    within one of each other across participants.
    """

    def __init__(self, questions: Sequence[SurveyQuestion], store: ResponseStore,
                 image_size: tuple, affinity: Optional[SegmentAffinity] = None,
                 heatmaps: Optional[dict] = None,
                 questions_per_participant: int = 5,
                 overlap_radius: float = 10.0):
        if not questions:
            raise DataError("question pool is empty")
        self.questions = list(questions)
        self.by_id = {q.question_id: q for q in self.questions}
        self.store = store
        self.image_size = image_size
        self.affinity = affinity
        self.heatmaps = heatmaps or {}
        self.questions_per_participant = questions_per_participant
        self.overlap_radius = overlap_radius
        self.serve_counts = {q.question_id: 0 for q in self.questions}
        self.seen: dict = {}
        self._lock = threading.Lock()

    def next_question(self, participant: str) -> Optional[SurveyQuestion]:
        """The participant's next unseen question, or None when done."""
        with self._lock:
            seen = self.seen.setdefault(participant, [])
            if len(seen) >= self.questions_per_participant:
                return None
            unseen = [q for q in self.questions if q.question_id not in seen]
            if not unseen:
                return None
            q = min(unseen, key=lambda q: (self.serve_counts[q.question_id], q.question_id))
            seen.append(q.question_id)
            self.serve_counts[q.question_id] += 1
            return q

    def submit(self, response: SurveyResponse) -> str:
        q = self.by_id.get(response.question_id)
        if q is None:
            raise DataError(f"question_id: unknown question {response.question_id!r}")
        validate_response(response, q, self.image_size)
        return self.store.append(response)

    def stats_choices(self) -> dict:
        return aggregate_choices(self.store.responses(), self.questions)

    def stats_properties(self) -> dict:
        return property_tally(self.store.responses())

    def stats_overlap(self) -> dict:
        if not self.heatmaps:
            return {"available": False}
        dist = overlap_distribution(self.store.responses(), self.questions,
                                    self.heatmaps, radius=self.overlap_radius)
        out = dist.summary()
        out["available"] = True
        out["histogram"] = dist.histogram()
        return out
