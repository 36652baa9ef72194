"""Small synthetic test images so the full pipeline runs with zero downloads."""

import numpy as np

from .images import Image

__all__ = ["piecewise_constant", "smooth_bump", "get_phantom", "PHANTOM_NAMES"]


def piecewise_constant(height: int = 64, width: int = 64) -> Image:
    """Flat background with a rectangle, a disk, and a bright square.

    Sharp edges make this the stress case for deblurring: blur error
    dominates the corruption and restoration gains are easy to read off.
    """
    canvas = np.full((height, width), 0.15)
    canvas[height // 8 : height // 2, width // 6 : 2 * width // 3] = 0.85
    yy, xx = np.mgrid[0:height, 0:width]
    cy, cx = 0.7 * height, 0.7 * width
    disk = (yy - cy) ** 2 + (xx - cx) ** 2 <= (0.18 * min(height, width)) ** 2
    canvas[disk] = 0.5
    canvas[
        int(0.58 * height) : int(0.72 * height),
        int(0.08 * width) : int(0.28 * width),
    ] = 1.0
    return Image.from_2d(canvas, nonneg=True)


def smooth_bump(height: int = 64, width: int = 64) -> Image:
    """Gentle Gaussian bump on a dim pedestal; everything stays in [0, 1]."""
    yy, xx = np.mgrid[0:height, 0:width]
    cy, cx = (height - 1) / 2.0, (width - 1) / 2.0
    sigma = min(height, width) / 6.0
    bump = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2.0 * sigma * sigma))
    return Image.from_2d(0.1 + 0.85 * bump, nonneg=True)


_REGISTRY = {
    "pc": piecewise_constant,
    "piecewise": piecewise_constant,
    "bump": smooth_bump,
}

PHANTOM_NAMES = ("pc", "bump")


def get_phantom(name: str, size: int = 64) -> Image:
    try:
        factory = _REGISTRY[name]
    except KeyError:
        raise ValueError(
            f"unknown phantom {name!r}; available: {sorted(_REGISTRY)}"
        ) from None
    return factory(size, size)
