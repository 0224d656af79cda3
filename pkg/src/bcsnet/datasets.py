"""Grayscale test set and training corpus built from images bundled with
scikit-image and scikit-learn (no downloads).

The test set holds ten photographs, each scaled so its short side is 512
and center-cropped to 512 x 512. The training corpus uses a disjoint set of
bundled images at native resolution. Requires the ``data`` extra.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .imaging import GrayImage, to_pixels, write_pgm

TEST_IMAGES = (
    "camera", "astronaut", "coffee", "chelsea", "rocket",
    "china", "flower", "coins", "moon", "clock",
)
TRAIN_IMAGES = (
    "brick", "grass", "gravel", "retina", "hubble_deep_field",
    "immunohistochemistry", "cell", "page", "text", "faces",
)


def _raw(name):
    import skimage.data as skd

    if name in ("china", "flower"):
        from sklearn.datasets import load_sample_image

        return load_sample_image(f"{name}.jpg")
    if name == "faces":
        # 200 LFW crops (25 x 25) tiled into a 250 x 500 mosaic
        faces = skd.lfw_subset()
        tiles = faces.reshape(10, 20, 25, 25).transpose(0, 2, 1, 3).reshape(250, 500)
        return tiles
    return getattr(skd, name)()


def _gray(arr) -> np.ndarray:
    """Any bundled array to float gray in [0, 1]."""
    from skimage.color import rgb2gray, rgba2rgb

    a = np.asarray(arr)
    if a.dtype == bool:
        a = a.astype(np.float64)
    elif a.dtype == np.uint8:
        a = a / 255.0
    if a.ndim == 3:
        if a.shape[2] == 4:
            a = rgba2rgb(a)
        a = rgb2gray(a)
    return np.clip(a.astype(np.float64), 0.0, 1.0)


def _square(gray: np.ndarray, size: int) -> np.ndarray:
    from skimage.transform import resize

    h, w = gray.shape
    scale = size / min(h, w)
    nh, nw = max(size, round(h * scale)), max(size, round(w * scale))
    if (nh, nw) != (h, w):
        gray = resize(gray, (nh, nw), order=3, anti_aliasing=scale < 1, mode="reflect")
    top, left = (nh - size) // 2, (nw - size) // 2
    return gray[top : top + size, left : left + size]


def load_image(name: str, size: int | None = None) -> GrayImage:
    """One bundled image as 8-bit gray, optionally squared to ``size``."""
    g = _gray(_raw(name))
    if size is not None:
        g = _square(g, size)
    return GrayImage(to_pixels(g))


def test_images(size: int = 512) -> dict:
    return {name: load_image(name, size) for name in TEST_IMAGES}


def training_corpus() -> list:
    return [load_image(name) for name in TRAIN_IMAGES]


def export(directory, images) -> list:
    """Write ``{name: image}`` (or a list) as PGM files; return the paths."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    if not isinstance(images, dict):
        images = {f"img{k:03d}": im for k, im in enumerate(images)}
    paths = []
    for name, img in images.items():
        path = directory / f"{name}.pgm"
        write_pgm(img, path)
        paths.append(path)
    return paths
