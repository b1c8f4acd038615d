"""Where does the localizer look? Computes class activation maps for a few
crops of a quickly-trained model and writes heatmap + overlay PNGs.

The raw map is exact: its spatial mean reproduces the class logit when the
head is bias-free, which this demo verifies numerically.

Run:  python demos/04_activation_maps.py   (after 03, or standalone)
"""

from pathlib import Path

import numpy as np

from legibility.analysis import cam, overlay, upsample_cam
from legibility.imageutil import save_image
from legibility.nnet import ModelConfig, build_model, forward, train

import importlib.util

OUT = Path(__file__).parent / "output" / "cam"
OUT.mkdir(parents=True, exist_ok=True)

spec = importlib.util.spec_from_file_location(
    "train_demo", Path(__file__).parent / "03_train_localizer.py")
train_demo = importlib.util.module_from_spec(spec)
spec.loader.exec_module(train_demo)


def main():
    train_data, test_data = train_demo.build_corpus()
    config = ModelConfig(num_classes=6, input_size=32, stage_channels=(16, 32),
                         stage_blocks=(1, 1), stem_stride=2)  # bias-free head: exact maps
    model = build_model(config, seed=0)
    model, _ = train(model, train_data, epochs=6, lr=0.1, batch_size=64, seed=0)

    rng = np.random.default_rng(1)
    for i in rng.choice(len(test_data), 6, replace=False):
        image = test_data.images[i]
        fwd = forward(model, image)
        predicted = int(fwd.probs.argmax())
        raw = cam(fwd.feature_maps, model.head_w, predicted)
        identity_gap = abs(raw.mean() - fwd.logits[predicted])
        heat = upsample_cam(raw, image.shape[0], image.shape[1])
        composite = overlay(heat, image, alpha=0.5)
        stem = Path(test_data.image_paths[i]).stem
        save_image(np.clip(np.rint(heat * 255), 0, 255).astype(np.uint8),
                   OUT / f"{stem}_heat.png")
        save_image(composite, OUT / f"{stem}_overlay.png")
        print(f"{stem}: true room {test_data.meta[i]['segment_id']}, "
              f"predicted {test_data.class_segments[predicted]} "
              f"(p={fwd.probs[predicted]:.2f}); "
              f"map-mean vs logit gap {identity_gap:.1e}")
    print(f"heatmaps in {OUT}")


if __name__ == "__main__":
    main()
