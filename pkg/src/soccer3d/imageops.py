"""Small image helpers shared by edge extraction and segmentation."""

from __future__ import annotations

import numpy as np
from scipy import ndimage


def to_gray(image: np.ndarray) -> np.ndarray:
    """RGB or grayscale float image -> grayscale float64."""
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim == 3:
        return arr @ np.array([0.299, 0.587, 0.114])
    return arr


def sobel_magnitude(gray: np.ndarray) -> np.ndarray:
    """Sobel gradient magnitude normalized to [0, 1]."""
    gx = ndimage.sobel(gray, axis=1)
    gy = ndimage.sobel(gray, axis=0)
    mag = np.hypot(gx, gy)
    peak = mag.max()
    return mag / peak if peak > 0 else mag
