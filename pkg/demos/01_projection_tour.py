"""Tour of the panorama projection machinery.

Renders an equirect view of a 6-color cube, converts it back to cube
faces, and cuts the two standard crop grids, writing everything under
demos/output/projection/.

Run:  python demos/01_projection_tour.py
"""

from pathlib import Path

import numpy as np

from legibility.imageutil import save_image
from legibility.projection import (CropSpec, EquirectPanorama, crop_perspective,
                                   equirect_to_cube, standard_crop_set)

OUT = Path(__file__).parent / "output" / "projection"
OUT.mkdir(parents=True, exist_ok=True)

FACE_COLORS = {
    "front": (220, 30, 30), "right": (30, 220, 30), "back": (30, 30, 220),
    "left": (220, 220, 30), "up": (220, 30, 220), "down": (30, 220, 220),
}


def cube_panorama(width=1024, height=512):
    lat = np.deg2rad(90.0 - (np.arange(height)[:, None] + 0.5) / height * 180.0)
    lon = np.deg2rad((np.arange(width)[None, :] + 0.5) / width * 360.0 - 180.0)
    dx, dy = np.cos(lat) * np.sin(lon), np.broadcast_to(np.sin(lat), (height, width))
    dz = np.cos(lat) * np.cos(lon)
    ax, ay, az = np.abs(dx), np.abs(dy), np.abs(dz)
    img = np.empty((height, width, 3), dtype=np.uint8)
    z_wins = (az >= ax) & (az >= ay)
    x_wins = ~z_wins & (ax >= ay)
    y_wins = ~z_wins & ~x_wins
    img[z_wins & (dz > 0)] = FACE_COLORS["front"]
    img[z_wins & (dz <= 0)] = FACE_COLORS["back"]
    img[x_wins & (dx > 0)] = FACE_COLORS["right"]
    img[x_wins & (dx <= 0)] = FACE_COLORS["left"]
    img[y_wins & (dy > 0)] = FACE_COLORS["up"]
    img[y_wins & (dy <= 0)] = FACE_COLORS["down"]
    return img


def main():
    pano = EquirectPanorama(id="cube-world", pixels=cube_panorama())
    save_image(pano.pixels, OUT / "panorama.png")
    print(f"panorama: {pano.width}x{pano.height} -> {OUT / 'panorama.png'}")

    faces = equirect_to_cube(pano, face_size=64)
    for name, face in faces.as_dict().items():
        save_image(face, OUT / f"face_{name}.png")
        recovered = (face == FACE_COLORS[name]).all(axis=2).mean()
        print(f"  face {name:<5} recovers {recovered:6.2%} of its color")

    # an oblique view mixing three faces
    oblique = crop_perspective(pano, CropSpec(yaw=45, pitch=35, fov=100, out_size=256))
    save_image(oblique, OUT / "oblique_view.png")

    for preset in ("a", "b"):
        crops = standard_crop_set(pano, preset, out_size=96)
        print(f"preset {preset!r}: {len(crops)} crops, "
              f"pitches {sorted({s.pitch for s, _ in crops})}")
        for k, (spec, image) in enumerate(crops[:4]):
            save_image(image, OUT / f"preset_{preset}_{k}_y{int(spec.yaw)}p{int(spec.pitch)}.png")


if __name__ == "__main__":
    main()
