"""The human-validation loop, end to end but offline: build the question
pool from the affinity ranking, simulate participants against the survey
service, aggregate their choices and feature tags, and score how much of
the model's activation mass their clicks captured.

Run:  python demos/06_survey_and_overlap.py
"""

import importlib.util
from pathlib import Path

import numpy as np

from legibility.analysis import cam, upsample_cam
from legibility.nnet import ModelConfig, build_model, evaluate, forward, train
from legibility.similarity import affinity, top_pairs
from legibility.survey import (FeatureClick, PROPERTIES, ResponseStore,
                               SurveyResponse, SurveyService,
                               aggregate_choices, build_question_pool,
                               filter_bots, overlap_distribution,
                               property_tally)

spec = importlib.util.spec_from_file_location(
    "sim_demo", Path(__file__).parent / "05_similarity_clusters.py")
sim_demo = importlib.util.module_from_spec(spec)
spec.loader.exec_module(sim_demo)

OUT = Path(__file__).parent / "output" / "survey"
OUT.mkdir(parents=True, exist_ok=True)


def main():
    rng = np.random.default_rng(0)
    train_data, test_data = sim_demo.build_corpus()
    model = build_model(ModelConfig(num_classes=6, input_size=32,
                                    stage_channels=(16, 32), stage_blocks=(1, 1),
                                    stem_stride=2), seed=0)
    model, _ = train(model, train_data, epochs=8, lr=0.1, batch_size=64, seed=0)
    result = evaluate(model, test_data)

    aff = affinity(result)
    pairs = top_pairs(aff, 8)

    # manifest for image lookup: reuse the test split entries
    from legibility.corpus import DatasetManifest, AnnotatedImage, SpatialSegment
    segments = [SpatialSegment(id=i, name=f"room{i}", program="waiting", floor=1,
                               footprint=np.array([[20.0 * i, 0], [20.0 * i + 10, 0],
                                                   [20.0 * i + 10, 10], [20.0 * i, 10]]))
                for i in range(6)]
    entries = [AnnotatedImage(image_path=p, segment_id=m["segment_id"], yaw=0.0,
                              pitch=0.0, pano_id=f"pano_{m['segment_id']}")
               for p, m in zip(result.image_paths, result.meta)]
    manifest = DatasetManifest(entries, segments)

    questions = build_question_pool(pairs, aff, manifest, pool_size=8, seed=0)
    print(f"question pool: {len(questions)} questions from {len(pairs)} ranked pairs")

    store = ResponseStore(OUT / "responses.jsonl")
    service = SurveyService(questions, store, image_size=(32, 32))

    image_by_path = dict(zip(test_data.image_paths, test_data.images))
    for p in range(30):
        key = f"participant{p}"
        while (q := service.next_question(key)) is not None:
            # simulated participant: picks a choice biased toward the real answer
            roles_inv = {r: img for img, r in q.roles.items()}
            pick = rng.choice([roles_inv["image_a_1"]] * 6
                              + [roles_inv["image_b"]] * 3 + [roles_inv["image_c"]])
            clicks = tuple(FeatureClick(float(rng.uniform(0, 31)),
                                        float(rng.uniform(0, 31)),
                                        PROPERTIES[rng.integers(len(PROPERTIES))])
                           for _ in range(3))
            dwell = float(rng.uniform(300, 20000))  # some too-fast "bots" included
            service.submit(SurveyResponse(
                participant=key, question_id=q.question_id, chosen_image=pick,
                chosen_segment=q.choice_segments[pick], clicks=clicks,
                dwell_ms=dwell, timestamp=float(p), token=f"{key}:{q.question_id}"))

    responses = store.responses()
    valid, rejected = filter_bots(responses)
    print(f"responses: {len(responses)} stored, {len(rejected)} rejected as bots")

    choices = aggregate_choices(valid, questions)
    print("choice distribution:")
    for role, pct in choices["percentages"].items():
        print(f"  {role:<10} {pct:5.1f}%  ({choices['counts'][role]})")

    tally = property_tally(valid)
    first = tally["ranks"][0]["percentages"]
    print(f"most-used first-click property: {max(first, key=first.get)}")

    heatmaps = {}
    for q in questions:
        image = image_by_path[q.control_image]
        fwd = forward(model, image)
        raw = cam(fwd.feature_maps, model.head_w, int(fwd.probs.argmax()))
        heatmaps[q.control_image] = upsample_cam(raw, 32, 32)
    dist = overlap_distribution(valid, questions, heatmaps, radius=10.0)
    s = dist.summary()
    print(f"attention overlap over {s['count']} responses: "
          f"mean {s['mean']:.3f}, median {s['median']:.3f}, "
          f"range [{s['min']:.3f}, {s['max']:.3f}]")
    print("histogram (0.05 bins with any mass):")
    for lo, hi, count in dist.histogram():
        if count:
            print(f"  [{lo:.2f}, {hi:.2f}): {'#' * count}")


if __name__ == "__main__":
    main()
