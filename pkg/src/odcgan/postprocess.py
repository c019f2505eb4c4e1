"""Soft-mask cleanup: thresholding, morphological opening, largest blob."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage


@dataclass
class StructuringElement:
    shape: str = "square"
    size: int = 3
    iterations: int = 1

    def validate(self) -> None:
        if self.shape not in ("square", "disc"):
            raise ValueError(f"structuring element shape must be 'square' or 'disc', not {self.shape!r}")
        if self.size < 1 or self.size % 2 == 0:
            raise ValueError(f"structuring element size must be odd and >= 1, got {self.size}")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")

    def footprint(self) -> np.ndarray:
        self.validate()
        if self.shape == "square":
            return np.ones((self.size, self.size), dtype=bool)
        r = self.size // 2
        yy, xx = np.mgrid[-r:r + 1, -r:r + 1]
        return yy ** 2 + xx ** 2 <= r ** 2


@dataclass
class PostprocessConfig:
    threshold: float = 0.5
    element: StructuringElement = None
    keep_largest: bool = False

    def __post_init__(self):
        if self.element is None:
            self.element = StructuringElement()


def threshold(soft, t: float = 0.5) -> np.ndarray:
    if not 0.0 < t < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {t}")
    return (np.asarray(soft) >= t).astype(np.uint8)


def _check_binary(mask: np.ndarray) -> np.ndarray:
    mask = np.asarray(mask)
    if not np.isin(mask, (0, 1)).all():
        raise ValueError("mask must be binary (values in {0, 1})")
    return mask.astype(bool)


def morph_open(mask, se: StructuringElement | None = None) -> np.ndarray:
    """Erode then dilate ``se.iterations`` times each.

    Works on the last two axes, so batches of masks are opened image by
    image. Pixels outside the image count as background.
    """
    se = se or StructuringElement()
    fp = se.footprint()
    m = _check_binary(mask)
    if se.iterations == 0 or m.size == 0:
        return m.astype(np.uint8)
    flat = m.reshape((-1,) + m.shape[-2:])
    out = np.empty_like(flat)
    for i, plane in enumerate(flat):
        eroded = ndimage.binary_erosion(plane, fp, iterations=se.iterations, border_value=0)
        out[i] = ndimage.binary_dilation(eroded, fp, iterations=se.iterations, border_value=0)
    return out.reshape(m.shape).astype(np.uint8)


def largest_component(mask) -> np.ndarray:
    """Keep the largest 8-connected foreground region of a 2-D mask.

    Ties go to the region whose first pixel comes earliest in raster order.
    """
    m = _check_binary(mask)
    if m.ndim != 2:
        raise ValueError("largest_component expects a single 2-D mask")
    labels, n = ndimage.label(m, structure=np.ones((3, 3), dtype=bool))
    if n == 0:
        return np.zeros(m.shape, dtype=np.uint8)
    areas = np.bincount(labels.ravel())[1:]
    return (labels == int(np.argmax(areas)) + 1).astype(np.uint8)


def postprocess(soft, cfg: PostprocessConfig | None = None) -> np.ndarray:
    """Soft HxW map in [0, 1] to a cleaned hard mask."""
    cfg = cfg or PostprocessConfig()
    hard = morph_open(threshold(soft, cfg.threshold), cfg.element)
    if cfg.keep_largest:
        hard = largest_component(hard)
    return hard
