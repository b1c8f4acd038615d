"""Generate a small synthetic station and walk through its pieces: the
segment table, the trajectory, sample panoramas, and how crops get
geo-tagged back to rooms.

Run:  python demos/02_synthetic_station.py
"""

from pathlib import Path

from legibility.corpus import annotate, balance, split
from legibility.imageutil import save_image
from legibility.projection import standard_crop_set
from legibility.synth import SynthSpec, synth_station

OUT = Path(__file__).parent / "output" / "station"
OUT.mkdir(parents=True, exist_ok=True)


def main():
    spec = SynthSpec(num_segments=6, panos_per_segment=4, pano_height=96,
                     ambiguity=1.0, shared_pair=(4, 5))
    station = synth_station(spec, seed=42)

    print("segments:")
    for seg in station.segments:
        x0, y0 = seg.footprint.min(axis=0)
        print(f"  {seg.id}: {seg.name:<8} {seg.program:<10} floor {seg.floor} "
              f"hall {seg.hall} at ({x0:.0f}, {y0:.0f})")
    print(f"trajectory: {len(station.trajectory)} poses, "
          f"{station.trajectory[-1].timestamp - station.trajectory[0].timestamp:.0f}s walk")
    print("segments 4 and 5 share all textures (ambiguity=1): "
          "expect them to confuse any observer\n")

    for seg_id in (0, 4, 5):
        pano = station.panoramas[seg_id * spec.panos_per_segment]
        save_image(pano.pixels, OUT / f"pano_segment{seg_id}.png")

    crops = []
    for pano in station.panoramas:
        for k, (cspec, image) in enumerate(standard_crop_set(pano, "b", out_size=64)):
            name = f"{pano.id}_{k:02d}.png"
            crops.append({"image_path": name, "pano_id": pano.id,
                          "timestamp": pano.timestamp, "yaw": cspec.yaw,
                          "pitch": cspec.pitch})
            if pano.id.endswith("_00") and k < 3:
                save_image(image, OUT / name)

    manifest, dropped = annotate(crops, station.trajectory, station.segments)
    print(f"annotated {len(manifest.entries)} crops ({dropped} dropped)")
    print(f"per-segment counts: {manifest.counts()}")

    capped = balance(manifest, cap_per_segment=60, seed=1)
    train_m, test_m = split(capped, test_fraction=0.25, seed=1)
    print(f"after balance(60) + split(0.25): train {len(train_m.entries)}, "
          f"test {len(test_m.entries)}")
    print(f"outputs in {OUT}")


if __name__ == "__main__":
    main()
