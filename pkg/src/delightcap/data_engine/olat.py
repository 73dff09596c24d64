"""One-light-at-a-time captures: synthesis, relighting, uniform-light albedo proxy."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.spatial import SphericalVoronoi

from .. import sphere
from .render import DEFAULT_EXPONENT, gbuffer, shade_directional


@dataclass
class OLATSubjectCapture:
    frames: np.ndarray        # (L, H, W, 3)
    light_dirs: np.ndarray    # (L, 3)
    solid_angles: np.ndarray  # (L,)
    albedo_proxy_scale: float
    mask: np.ndarray | None = None       # skin mask (H, W)
    landmarks: np.ndarray | None = None  # (5, 2) pixel positions
    name: str = ""
    _cells: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        try:
            frames = np.asarray(self.frames, dtype=np.float64)
        except ValueError as exc:
            raise ValueError("dimension mismatch among OLAT frames") from exc
        if frames.ndim != 4 or frames.shape[-1] != 3:
            raise ValueError(f"dimension mismatch among OLAT frames: got {frames.shape}")
        self.frames = frames
        self.light_dirs = np.asarray(self.light_dirs, dtype=np.float64)
        self.solid_angles = np.asarray(self.solid_angles, dtype=np.float64)
        n = len(frames)
        if self.light_dirs.shape != (n, 3) or self.solid_angles.shape != (n,):
            raise ValueError("dimension mismatch: one light direction and solid angle per frame")
        if np.abs(np.linalg.norm(self.light_dirs, axis=1) - 1).max() > 1e-6:
            raise ValueError("light directions must be unit vectors")
        total = self.solid_angles.sum()
        if (self.solid_angles <= 0).any() or not (0.95 * 4 * np.pi <= total <= 1.05 * 4 * np.pi):
            raise ValueError(f"solid angles must be positive and sum to ~4pi, got {total:.4f}")
        if (frames < 0).any():
            raise ValueError("OLAT frames must be nonnegative")
        if not self.albedo_proxy_scale > 0:
            raise ValueError("albedo_proxy_scale must be positive")

    @property
    def image_shape(self):
        return self.frames.shape[1:3]

    def albedo_proxy(self):
        """Uniform-light rendering, normalised: the dataset's diffuse albedo stand-in."""
        return self.albedo_proxy_scale * np.einsum("l,lhwc->hwc", self.solid_angles, self.frames)

    def cell_assignment(self, height):
        """Index of the nearest light for every texel of an ``height`` x 2``height`` map."""
        if height not in self._cells:
            d = sphere.equirect_directions(height).reshape(-1, 3)
            self._cells[height] = np.argmax(d @ self.light_dirs.T, axis=1)
        return self._cells[height]


def voronoi_solid_angles(light_dirs):
    """Areas of the spherical Voronoi cells around each light (sum = 4 pi)."""
    sv = SphericalVoronoi(np.asarray(light_dirs, dtype=np.float64), radius=1.0, center=np.zeros(3))
    return sv.calculate_areas()


def light_weights(cap, env):
    """Per-light RGB weights: mean env radiance over the light's cell times its solid angle."""
    cells = cap.cell_assignment(env.height)
    sa = env.solid_angles().reshape(-1)
    rad = env.pixels.reshape(-1, 3)
    n = len(cap.light_dirs)
    num = np.zeros((n, 3))
    np.add.at(num, cells, rad * sa[:, None])
    den = np.bincount(cells, weights=sa, minlength=n)
    mean = np.empty((n, 3))
    hit = den > 0
    mean[hit] = num[hit] / den[hit, None]
    if (~hit).any():
        # cells smaller than a texel: sample the map at the light direction
        from ..geometry import bilinear
        theta, phi = sphere.direction_angles(cap.light_dirs[~hit])
        h, w = env.pixels.shape[:2]
        y = theta / np.pi * h - 0.5
        x = np.mod(phi / (2 * np.pi) * w - 0.5, w)
        wrapped = np.concatenate([env.pixels, env.pixels[:, :1]], axis=1)
        mean[~hit] = bilinear(wrapped, x, y)
    return mean * cap.solid_angles[:, None]


def relight_olat(cap, env):
    """Image of the subject under ``env``: linear combination of the OLAT frames."""
    return np.einsum("lc,lhwc->hwc", light_weights(cap, env), cap.frames)


def capture_olat(asset, camera, n_lights=64, rng=None, jitter_px=0.6, gain=1.0,
                 exponent=DEFAULT_EXPONENT, name=""):
    """Synthesise an OLAT capture of ``asset``.

    Each frame is shifted by a random sub-pixel offset (std ``jitter_px``) to
    mimic residual subject motion between frames, so that integrated images and
    the uniform-light albedo proxy come out slightly blurred; the proxy also
    contains the specular reflection (no polarisation separation).
    """
    rng = np.random.default_rng(0) if rng is None else rng
    dirs = sphere.fibonacci_sphere(n_lights)
    sa = voronoi_solid_angles(dirs)
    gb = gbuffer(asset, camera)
    per_light = shade_directional(gb, dirs, exponent)  # (L, P, 3)
    frames = np.zeros((n_lights,) + gb.shape + (3,))
    frames[:, gb.mask] = per_light * gain
    if jitter_px > 0:
        offsets = rng.normal(0, jitter_px, (n_lights, 2))
        for i in range(n_lights):
            frames[i] = ndimage.shift(frames[i], (offsets[i, 0], offsets[i, 1], 0), order=1, mode="constant")
        np.clip(frames, 0, None, out=frames)
    mask = gb.scatter(gb.skin.astype(np.float64)) > 0.5
    landmarks, _ = camera.project(asset.landmarks)
    scale = 4 * np.pi / sa.sum() / gain
    return OLATSubjectCapture(frames, dirs, sa, scale, mask, landmarks, name or asset.name)
