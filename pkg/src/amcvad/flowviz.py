"""Flow colour coding: hue encodes direction, saturation encodes displacement."""

from __future__ import annotations

import numpy as np
from matplotlib.colors import hsv_to_rgb


def flow_to_rgb(flow: np.ndarray, max_magnitude: float | None = None) -> np.ndarray:
    """Render an H x W x 2|3 flow field as a uint8 RGB image.

    Saturation is ``min(mag / max_magnitude, 1)`` with ``max_magnitude``
    defaulting to the largest magnitude in the field; value is always 1, so a
    zero field renders white.
    """
    dx = flow[..., 0].astype(np.float64)
    dy = flow[..., 1].astype(np.float64)
    mag = np.hypot(dx, dy)
    scale = mag.max() if max_magnitude is None else float(max_magnitude)
    sat = np.zeros_like(mag) if scale <= 0 else np.minimum(mag / scale, 1.0)
    hue = np.mod(np.arctan2(dy, dx), 2 * np.pi) / (2 * np.pi)
    rgb = hsv_to_rgb(np.stack([hue, sat, np.ones_like(mag)], axis=-1))
    return np.round(rgb * 255).astype(np.uint8)
