"""Colour segmentation and pixelation of RGB images."""

from __future__ import annotations

import math

import numpy as np

from .core import InstanceError, pairwise_sq_dists, validate_dataset
from .io import RgbImage
from .solver import AnnealConfig, anneal


def default_config(**changes) -> AnnealConfig:
    """Schedule used for images: faster growth, cluster weights tracking mass.

    Images have tens of thousands of distinct colours and features of very
    different size; with uniform weights the early splits hand out resources
    in proportion to pixel count rather than colour spread.
    """
    kw = dict(beta_growth=1.2, unconstrained_eta="mass")
    kw.update(changes)
    return AnnealConfig(**kw)


def color_dataset(img: RgbImage):
    """Distinct colours scaled to [0, 1] with pixel counts as weights.

    Returns the dataset and, for every pixel, the index of its colour.
    """
    flat = img.pixels.reshape(-1, 3)
    colors, inverse, counts = np.unique(flat, axis=0, return_inverse=True, return_counts=True)
    return validate_dataset(colors / 255.0, counts), inverse.reshape(-1)


def nearest_palette(rgb: np.ndarray, palette: np.ndarray) -> np.ndarray:
    """Index of the closest palette colour for each row of ``rgb``."""
    d = pairwise_sq_dists(np.asarray(rgb, float), np.asarray(palette, float))
    return np.argmin(d, axis=1)


def pixelate(img: RgbImage, width: int, height: int, palette: np.ndarray) -> RgbImage:
    """Shrink to ``width x height`` blocks, averaging each block and snapping
    the mean to the nearest palette colour."""
    if not (1 <= width <= img.width and 1 <= height <= img.height):
        raise ValueError(f"pixelation grid {width}x{height} does not fit a "
                         f"{img.width}x{img.height} image")
    px = img.pixels.astype(float)
    rows = np.array_split(np.arange(img.height), height)
    cols = np.array_split(np.arange(img.width), width)
    means = np.array([[px[np.ix_(r, c)].reshape(-1, 3).mean(axis=0) for c in cols] for r in rows])
    idx = nearest_palette(means.reshape(-1, 3), palette)
    return RgbImage(palette[idx].reshape(height, width, 3))


def segment_image(img: RgbImage, k: int, cfg: AnnealConfig | None = None,
                  pixelate_to: tuple[int, int] | None = None):
    """Quantise an image to at most ``k`` colours by annealing in colour space.

    Returns ``(segmented, palette, info)``; with ``pixelate_to=(w, h)`` the
    info dict also carries the pixelated image under ``"pixelated"``.
    """
    ds, inverse = color_dataset(img)
    if k < 1:
        raise InstanceError("K must be at least 1")
    if k > ds.n:
        raise InstanceError(f"K={k} exceeds the {ds.n} distinct colours in the image")
    report = anneal(ds, k, cfg=cfg or default_config())
    palette = np.clip(np.round(report.final_state.locations * 255), 0, 255).astype(np.uint8)
    # every colour goes to its nearest resource (the hard limit of the associations)
    label = nearest_palette(ds.points, report.final_state.locations)
    seg = RgbImage(palette[label][inverse].reshape(img.pixels.shape))

    n = img.width * img.height
    index_bytes = n * max(1, math.ceil(math.log2(k))) / 8 if k > 1 else 0
    info = {
        "k": k,
        "pixels": n,
        "distinct_colors": ds.n,
        "output_colors": int(len(np.unique(seg.pixels.reshape(-1, 3), axis=0))),
        "distortion": report.distortion,
        # pixel colours only, as if the image were reduced to its palette
        "compression_palette": (3 * n) / (3 * k),
        "compression_with_index": (3 * n) / (3 * k + index_bytes),
        "report": report,
    }
    if pixelate_to is not None:
        info["pixelated"] = pixelate(img, *pixelate_to, palette)
    return seg, palette, info
