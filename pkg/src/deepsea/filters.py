"""Gaussian blurs renormalized over a validity mask (3 sigma truncation)."""

from __future__ import annotations

import numpy as np
from scipy import ndimage

TRUNCATE = 3.0


def kernel_radius(sigma: float) -> int:
    # same rule scipy.ndimage uses for the kernel half-width
    return int(TRUNCATE * float(sigma) + 0.5)


def masked_gaussian(image: np.ndarray, mask: np.ndarray, sigma: float) -> np.ndarray:
    """Blur an (H, W, C) image, averaging only over pixels where ``mask`` is set.

    Pixels outside the image count as masked out, so borders are renormalized
    too. Output is 0 wherever no masked pixel falls inside the kernel.
    """
    weight = mask.astype(np.float64)
    if sigma <= 0:
        return image * weight[..., None]
    num = np.empty_like(image, dtype=np.float64)
    for c in range(image.shape[-1]):
        num[..., c] = ndimage.gaussian_filter(
            image[..., c] * weight, sigma, mode="constant", cval=0.0, truncate=TRUNCATE
        )
    den = ndimage.gaussian_filter(weight, sigma, mode="constant", cval=0.0, truncate=TRUNCATE)
    out = np.zeros_like(num)
    ok = den > 1e-12
    out[ok] = num[ok] / den[ok, None]
    return out
