"""Spin up a real survey service on a random port for the UI contract test.

Builds a tiny synthetic corpus and an untrained localizer in a temp dir,
derives the affinity-ranked question pool from it, and serves the full
HTTP API with uvicorn. Prints `PORT <n>` and `STORE <path>` before
starting so the test harness can connect and, afterwards, inspect the
persisted responses.
"""

import socket
import sys
import tempfile
from pathlib import Path

import numpy as np
import uvicorn

from legibility import corpus, nnet, projection, similarity, survey, synth
from legibility.imageutil import save_image
from legibility.server import create_app


def build_service(root: Path):
    station = synth.synth_station(
        synth.SynthSpec(num_segments=4, panos_per_segment=4, pano_height=64),
        seed=21)
    crops = []
    images = {}
    (root / "crops").mkdir(parents=True)
    for pano in station.panoramas:
        save_image(pano.pixels, root / f"{pano.id}.png")
        for k, (spec, image) in enumerate(
                projection.standard_crop_set(pano, "a", out_size=32)):
            rel = f"crops/{pano.id}_{k:02d}.png"
            save_image(image, root / rel)
            images[rel] = image
            crops.append({"image_path": rel, "pano_id": pano.id,
                          "timestamp": pano.timestamp, "yaw": spec.yaw,
                          "pitch": spec.pitch})
    manifest, _ = corpus.annotate(crops, station.trajectory, station.segments)

    class_segments = sorted(s.id for s in manifest.segments)
    cls = {s: i for i, s in enumerate(class_segments)}
    data = nnet.LabeledImages(
        images=np.stack([images[e.image_path] for e in manifest.entries]),
        labels=np.array([cls[e.segment_id] for e in manifest.entries]),
        class_segments=class_segments,
        image_paths=[e.image_path for e in manifest.entries],
        meta=[{"segment_id": e.segment_id} for e in manifest.entries])
    model = nnet.build_model(
        nnet.ModelConfig(num_classes=4, input_size=32, stage_channels=(8,),
                         stage_blocks=(1,), stem_stride=2), seed=0)
    result = nnet.evaluate(model, data)
    aff = similarity.affinity(result)
    pairs = similarity.top_pairs(aff, 6)
    questions = survey.build_question_pool(pairs, aff, manifest,
                                           pool_size=6, seed=0)
    store = survey.ResponseStore(root / "responses.jsonl")
    service = survey.SurveyService(questions, store, image_size=(32, 32),
                                   affinity=aff)
    return service


def main():
    root = Path(tempfile.mkdtemp(prefix="spacematch-fixture-"))
    service = build_service(root)
    app = create_app(service, static_dir=str(root))
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        port = s.getsockname()[1]
    print(f"STORE {root / 'responses.jsonl'}", flush=True)
    print(f"PORT {port}", flush=True)
    uvicorn.run(app, host="127.0.0.1", port=port, log_level="warning")


if __name__ == "__main__":
    main()
