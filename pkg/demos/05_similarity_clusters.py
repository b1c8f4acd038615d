"""Which rooms does the model confuse with each other? Builds the segment
covariance and affinity matrices from evaluation output, ranks the most
confusable pairs, clusters the affinity graph by greedy modularity
optimization, and lays the rooms out in 2D.

The station is generated with one texture-sharing pair (4, 5), which
should surface as the top affinity pair and fall into one community.

Run:  python demos/05_similarity_clusters.py
"""

import importlib.util
from pathlib import Path

import numpy as np

from legibility.nnet import ModelConfig, build_model, evaluate, train
from legibility.similarity import (affinity, covariance, graph_from_affinity,
                                   layout2d, logit_matrix, louvain, top_pairs)
from legibility.corpus import annotate, split
from legibility.projection import standard_crop_set
from legibility.synth import SynthSpec, synth_station

OUT = Path(__file__).parent / "output" / "similarity"
OUT.mkdir(parents=True, exist_ok=True)


def build_corpus(seed=3):
    station = synth_station(SynthSpec(num_segments=6, panos_per_segment=6,
                                      pano_height=96, ambiguity=1.0,
                                      shared_pair=(4, 5)), seed=seed)
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
    from legibility.nnet import LabeledImages

    def dataset(m):
        class_segments = sorted(s.id for s in m.segments)
        cls = {s: i for i, s in enumerate(class_segments)}
        return LabeledImages(
            images=np.stack([images[e.image_path] for e in m.entries]),
            labels=np.array([cls[e.segment_id] for e in m.entries]),
            class_segments=class_segments,
            image_paths=[e.image_path for e in m.entries],
            meta=[{"segment_id": e.segment_id} for e in m.entries])

    return dataset(train_m), dataset(test_m)


def main():
    train_data, test_data = build_corpus()
    model = build_model(ModelConfig(num_classes=6, input_size=32,
                                    stage_channels=(16, 32), stage_blocks=(1, 1),
                                    stem_stride=2, head_bias=True), seed=0)
    model, _ = train(model, train_data, epochs=10, lr=0.1, batch_size=64, seed=0)
    result = evaluate(model, test_data)
    print(f"held-out top-1: {result.top1_accuracy:.1f}% "
          "(rooms 4/5 share textures, so ~2 rooms' worth of errors is expected)")

    q = covariance(logit_matrix(result))
    print(f"covariance: diagonal range [{np.diag(q).min():.2f}, {np.diag(q).max():.2f}]")

    aff = affinity(result)
    print("\ntop confusable pairs by affinity:")
    for i, j in top_pairs(aff, 5):
        print(f"  rooms ({i}, {j}): affinity {aff.matrix[i, j]:.3f}")

    part = louvain(graph_from_affinity(aff), seed=0)
    print(f"\ncommunities (modularity {part.q:.3f}):")
    groups = {}
    for node, c in zip(part.node_ids, part.communities):
        groups.setdefault(int(c), []).append(node)
    for c, members in sorted(groups.items()):
        print(f"  community {c}: rooms {members}")

    coords = layout2d(aff.matrix)
    np.savetxt(OUT / "layout.csv", np.column_stack([part.node_ids, coords]),
               delimiter=",", header="segment_id,x,y", comments="")
    print(f"\n2D layout (closer = more similar): {OUT / 'layout.csv'}")
    d45 = np.linalg.norm(coords[4] - coords[5])
    others = [np.linalg.norm(coords[i] - coords[j])
              for i in range(6) for j in range(i + 1, 6) if (i, j) != (4, 5)]
    print(f"  twin-pair distance {d45:.3f} vs mean other distance {np.mean(others):.3f}")


if __name__ == "__main__":
    main()
