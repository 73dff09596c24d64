"""Sharpness-based frame selection."""
from __future__ import annotations

import numpy as np
from scipy import ndimage


def sharpness(image):
    """Variance of the Laplacian of the luminance."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 3:
        img = img @ np.array([0.2126, 0.7152, 0.0722])
    return float(ndimage.laplace(img).var())


def select_frames(frames, V, min_spacing=None):
    """Indices of ``V`` frames, sharpest first.

    Frames are taken greedily by decreasing sharpness, skipping any frame closer
    than ``min_spacing`` (default ``len(frames) // (2 V)``) to an already chosen
    one; if that leaves fewer than ``V``, the remaining slots are filled with
    the sharpest unused frames.
    """
    n = len(frames)
    if V <= 0:
        raise ValueError("V must be positive")
    if n < V:
        raise ValueError(f"need at least {V} frames, got {n}")
    scores = np.array([sharpness(f) for f in frames])
    order = np.argsort(-scores, kind="stable")
    spacing = n // (2 * V) if min_spacing is None else int(min_spacing)
    chosen = []
    for i in order:
        if all(abs(int(i) - j) >= max(spacing, 1) for j in chosen):
            chosen.append(int(i))
        if len(chosen) == V:
            break
    if len(chosen) < V:
        for i in order:
            if int(i) not in chosen:
                chosen.append(int(i))
            if len(chosen) == V:
                break
    chosen.sort(key=lambda i: -scores[i])
    return chosen
