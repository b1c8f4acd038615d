"""Pipeline configuration: one TOML file drives every subcommand.

Flag overrides (--seed, --out) win over the file. Every artifact a command
writes is stamped with the digest of the configuration that produced it,
either inline (JSON artifacts) or via a `<name>.meta.json` sidecar
(CSV/PNG artifacts), so a run is always attributable.
"""

from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError


@dataclass
class SynthSection:
    num_segments: int = 12
    panos_per_segment: int = 9
    pano_height: int = 128
    ambiguity: float = 0.0
    shared_pair: Optional[list] = None
    noise_sigma: float = 3.0


@dataclass
class CropSection:
    preset: str = "b"
    out_size: int = 32
    fov: float = 90.0


@dataclass
class DatasetSection:
    balance_cap: int = 200
    test_fraction: float = 0.2


@dataclass
class ModelSection:
    input_size: int = 32
    stage_channels: list = field(default_factory=lambda: [16, 32])
    stage_blocks: list = field(default_factory=lambda: [1, 1])
    stem_stride: int = 2
    head_bias: bool = True


@dataclass
class TrainSection:
    epochs: int = 8
    lr: float = 0.1
    batch_size: int = 64


@dataclass
class SurveySection:
    pool_size: int = 30
    radius: float = 10.0
    questions_per_participant: int = 5
    min_dwell_ms: float = 2000.0
    max_per_participant: int = 20
    port: int = 8000
    overlap_denominator: str = "topk"


@dataclass
class PipelineConfig:
    seed: int = 7
    out_dir: str = "runs/default"
    synth: SynthSection = field(default_factory=SynthSection)
    crop: CropSection = field(default_factory=CropSection)
    dataset: DatasetSection = field(default_factory=DatasetSection)
    model: ModelSection = field(default_factory=ModelSection)
    train: TrainSection = field(default_factory=TrainSection)
    survey: SurveySection = field(default_factory=SurveySection)

    # -- paths ---------------------------------------------------------

    @property
    def out(self) -> Path:
        return Path(self.out_dir)

    @property
    def corpus_dir(self) -> Path:
        return self.out / "corpus"

    @property
    def pano_dir(self) -> Path:
        return self.corpus_dir / "panos"

    @property
    def crop_dir(self) -> Path:
        return self.corpus_dir / "crops"

    @property
    def checkpoint_path(self) -> Path:
        return self.out / "checkpoints" / "model.ckpt"

    @property
    def analysis_dir(self) -> Path:
        return self.out / "analysis"

    @property
    def survey_dir(self) -> Path:
        return self.out / "survey"

    @property
    def response_store_path(self) -> Path:
        return self.survey_dir / "responses.jsonl"

    # -- identity ------------------------------------------------------

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        """Identity of the experiment: every knob except where it is stored."""
        d = self.to_dict()
        d.pop("out_dir")
        blob = json.dumps(d, sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:16]


_SECTIONS = {
    "synth": SynthSection,
    "crop": CropSection,
    "dataset": DatasetSection,
    "model": ModelSection,
    "train": TrainSection,
    "survey": SurveySection,
}


def load_config(path=None, seed: Optional[int] = None,
                out_dir: Optional[str] = None) -> PipelineConfig:
    """Read a TOML config; missing keys keep their defaults, unknown keys
    fail fast. `seed`/`out_dir` arguments override the file."""
    data: dict = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}")
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"invalid TOML in {path}: {exc}")

    cfg = PipelineConfig()
    for key, value in data.items():
        if key in _SECTIONS:
            section_cls = _SECTIONS[key]
            section = getattr(cfg, key)
            if not isinstance(value, dict):
                raise ConfigError(f"[{key}] must be a table")
            for k, v in value.items():
                if not hasattr(section, k):
                    raise ConfigError(f"unknown key {k!r} in [{key}]")
                setattr(section, k, v)
        elif key in ("seed", "out_dir"):
            setattr(cfg, key, value)
        else:
            raise ConfigError(f"unknown top-level config key {key!r}")

    if seed is not None:
        cfg.seed = seed
    if out_dir is not None:
        cfg.out_dir = out_dir
    return cfg


def write_artifact_meta(artifact_path, config: PipelineConfig, command: str,
                        extra: Optional[dict] = None) -> None:
    """Sidecar metadata for a non-JSON artifact (timestamps live here, never
    in the data file, so re-runs stay byte-identical)."""
    import time
    meta = {
        "artifact": str(Path(artifact_path).name),
        "config_digest": config.digest(),
        "seed": config.seed,
        "command": command,
        "written_at": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }
    if extra:
        meta.update(extra)
    with open(str(artifact_path) + ".meta.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
