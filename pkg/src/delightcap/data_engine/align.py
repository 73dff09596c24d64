"""Landmark-based similarity alignment to a canonical five-point template."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

# (x, y) in units of the output size: left eye, right eye, nose tip, mouth corners
CANONICAL_TEMPLATE = np.array([
    [0.325, 0.31],
    [0.675, 0.31],
    [0.500, 0.565],
    [0.400, 0.79],
    [0.600, 0.79],
])


class DegenerateLandmarksError(ValueError):
    pass


@dataclass
class Similarity:
    """x' = scale * R(angle) x + translation, acting on (x, y) pixel coordinates."""
    scale: float
    angle: float
    translation: np.ndarray

    @property
    def matrix(self):
        c, s = np.cos(self.angle), np.sin(self.angle)
        m = np.eye(3)
        m[:2, :2] = self.scale * np.array([[c, -s], [s, c]])
        m[:2, 2] = self.translation
        return m

    def apply(self, pts):
        pts = np.asarray(pts, dtype=np.float64)
        m = self.matrix
        return pts @ m[:2, :2].T + m[:2, 2]

    def inverse(self):
        m = np.linalg.inv(self.matrix)
        return Similarity(1.0 / self.scale, -self.angle, m[:2, 2])

    def compose(self, other):
        """``self`` after ``other``."""
        m = self.matrix @ other.matrix
        return Similarity(self.scale * other.scale, self.angle + other.angle, m[:2, 2])


def template_points(size, template=CANONICAL_TEMPLATE):
    return np.asarray(template, dtype=np.float64) * np.asarray(size, dtype=np.float64)


def fit_similarity(src, dst):
    """Least-squares similarity (Umeyama, no reflection) taking ``src`` to ``dst``."""
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    if len(src) < 3 or src.shape != dst.shape:
        raise DegenerateLandmarksError("need at least 3 matching 2D landmarks")
    mu_s, mu_d = src.mean(0), dst.mean(0)
    a, b = src - mu_s, dst - mu_d
    sv = np.linalg.svd(a, compute_uv=False)
    if sv[0] < 1e-9 or sv[1] / sv[0] < 1e-6:
        raise DegenerateLandmarksError("landmarks are collinear or coincident")
    cov = b.T @ a / len(src)
    u, s, vt = np.linalg.svd(cov)
    d = np.sign(np.linalg.det(u @ vt))
    e = np.diag([1.0, d])
    rot = u @ e @ vt
    var = (a ** 2).sum() / len(src)
    scale = float((s * np.diag(e)).sum() / var)
    angle = float(np.arctan2(rot[1, 0], rot[0, 0]))
    t = mu_d - scale * rot @ mu_s
    return Similarity(scale, angle, t)


def warp(image, transform, out_shape, order=1):
    """Resample ``image`` so that output pixel p shows input pixel transform^-1(p)."""
    image = np.asarray(image, dtype=np.float64)
    h, w = out_shape
    inv = transform.inverse().matrix
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    sx = inv[0, 0] * xs + inv[0, 1] * ys + inv[0, 2]
    sy = inv[1, 0] * xs + inv[1, 1] * ys + inv[1, 2]
    coords = np.stack([sy, sx])
    if image.ndim == 2:
        return ndimage.map_coordinates(image, coords, order=order, mode="constant", cval=0.0)
    return np.stack([ndimage.map_coordinates(image[..., c], coords, order=order, mode="constant", cval=0.0)
                     for c in range(image.shape[2])], -1)


def warp_mask(mask, transform, out_shape):
    """Warp a binary mask; a pixel stays valid only if all its bilinear taps were valid."""
    return warp(np.asarray(mask, dtype=np.float64), transform, out_shape) > 1 - 1e-6


def align_face(image, landmarks, size=64, template=CANONICAL_TEMPLATE):
    """Warp ``image`` so ``landmarks`` land on the canonical template.

    Returns the aligned ``size`` x ``size`` image and the similarity used; its
    inverse maps canonical pixels back to the source frame.
    """
    dst = template_points(size, template)
    tf = fit_similarity(np.asarray(landmarks)[: len(dst)], dst)
    return warp(image, tf, (size, size)), tf
