"""Train the miniature residual network to localize crops to rooms, from
scratch, on a small synthetic station; then verify the gradient machinery
with finite differences and report held-out accuracy.

Takes a minute or two on CPU.

Run:  python demos/03_train_localizer.py
"""

import numpy as np

from legibility.corpus import annotate, split
from legibility.nnet import (LabeledImages, ModelConfig, build_model, evaluate,
                             grad_check, train)
from legibility.projection import standard_crop_set
from legibility.synth import SynthSpec, synth_station


def build_corpus(seed=3):
    station = synth_station(SynthSpec(num_segments=6, panos_per_segment=6,
                                      pano_height=96), seed=seed)
    crops, images = [], {}
    for pano in station.panoramas:
        for k, (cspec, image) in enumerate(standard_crop_set(pano, "b", out_size=32)):
            name = f"{pano.id}_{k:02d}.png"
            crops.append({"image_path": name, "pano_id": pano.id,
                          "timestamp": pano.timestamp, "yaw": cspec.yaw,
                          "pitch": cspec.pitch})
            images[name] = image
    manifest, _ = annotate(crops, station.trajectory, station.segments)
    train_m, test_m = split(manifest, 0.2, seed=seed)

    def dataset(m):
        class_segments = sorted(s.id for s in m.segments)
        cls = {s: i for i, s in enumerate(class_segments)}
        return LabeledImages(
            images=np.stack([images[e.image_path] for e in m.entries]),
            labels=np.array([cls[e.segment_id] for e in m.entries]),
            class_segments=class_segments,
            image_paths=[e.image_path for e in m.entries],
            meta=[{"segment_id": e.segment_id, "yaw": e.yaw, "pitch": e.pitch,
                   "pano_id": e.pano_id} for e in m.entries])

    return dataset(train_m), dataset(test_m)


def main():
    train_data, test_data = build_corpus()
    print(f"corpus: {len(train_data)} train / {len(test_data)} test crops, "
          f"{len(train_data.class_segments)} rooms")

    config = ModelConfig(num_classes=6, input_size=32, stage_channels=(16, 32),
                         stage_blocks=(1, 1), stem_stride=2, head_bias=True)
    model = build_model(config, seed=0)
    print(f"model: {model.num_params()} parameters, "
          f"last feature maps {config.feature_channels}x"
          f"{config.feature_map_size}x{config.feature_map_size}")

    err = grad_check(model, train_data.images[0], int(train_data.labels[0]),
                     num_params_probed=50)
    print(f"gradient check (50 random params, central differences): "
          f"max relative error {err:.2e}")

    model, report = train(model, train_data, epochs=10, lr=0.1, batch_size=64,
                          seed=0, eval_data=test_data,
                          log=lambda **kv: print(f"  epoch {kv['epoch']:>2}: "
                                                 f"loss {kv['loss']:.3f} "
                                                 f"top1 {kv['top1']:.1f}%"))
    result = evaluate(model, test_data)
    print(f"\nheld-out: top-1 {result.top1_accuracy:.1f}%, "
          f"top-5 {result.top5_accuracy:.1f}%, "
          f"mean confidence {result.mean_confidence:.1f}%")
    print("per-room accuracy:")
    for seg_id, count, top1, _, conf in result.per_segment():
        print(f"  room {seg_id}: {top1:5.1f}% over {count} crops "
              f"(confidence {conf:.1f}%)")


if __name__ == "__main__":
    main()
