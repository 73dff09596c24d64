"""Environment maps: validation, frequency scoring, weighted sampling, rotation."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import sphere


class EmptyEnvironmentError(ValueError):
    pass


@dataclass
class EnvironmentMap:
    pixels: np.ndarray
    name: str = ""
    score: float | None = None

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim != 3 or px.shape[2] != 3 or px.shape[1] != 2 * px.shape[0]:
            raise ValueError(f"environment map must be H x 2H x 3, got {px.shape}")
        if not np.isfinite(px).all() or (px < 0).any():
            raise ValueError("environment radiance must be finite and nonnegative")
        self.pixels = px

    @property
    def height(self):
        return self.pixels.shape[0]

    def total_energy(self):
        """Radiant energy integrated over the sphere, per channel."""
        return np.einsum("hwc,hw->c", self.pixels, sphere.texel_solid_angles(self.height))

    def directions(self):
        return sphere.equirect_directions(self.height)

    def solid_angles(self):
        return sphere.texel_solid_angles(self.height)

    def downsample(self, height):
        """Box-filter to a coarser ``height`` (must divide the current height)."""
        f = self.height // height
        if f * height != self.height:
            raise ValueError("downsample height must divide the map height")
        if f == 1:
            return self
        sa = self.solid_angles()
        num = (self.pixels * sa[..., None]).reshape(height, f, 2 * height, f, 3).sum((1, 3))
        den = sa.reshape(height, f, 2 * height, f).sum((1, 3))
        return EnvironmentMap(num / den[..., None], self.name, self.score)


def classify_hdri_frequency(env):
    """Fraction of the map's energy lying above SH band 2, in [0, 1].

    Energy is the squared L2 norm on the sphere; the band-limited part is the
    sum of squared order <= 2 SH coefficients (Parseval).
    """
    px = env.pixels.mean(axis=2)
    sa = env.solid_angles()
    total = float((px * px * sa).sum())
    if total <= 0:
        raise EmptyEnvironmentError("empty environment")
    coeffs = sphere.project_env(px[..., None])[:, 0]
    low = float((coeffs ** 2).sum())
    return float(np.clip(1.0 - low / total, 0.0, 1.0))


def frequency_class(score, boundaries=(0.2, 0.6)):
    """Integer class: 0 low, 1 medium, ... ``len(boundaries)`` highest."""
    return int(np.searchsorted(np.asarray(boundaries), score, side="right"))


def with_scores(pool):
    for env in pool:
        if env.score is None:
            env.score = classify_hdri_frequency(env)
    return pool


def sampling_weights(pool, beta):
    scores = np.array([env.score for env in pool], dtype=np.float64)
    if np.isnan(scores).any() or any(env.score is None for env in pool):
        raise ValueError("pool maps need precomputed frequency scores")
    w = 1.0 + beta * scores
    return w / w.sum()


def sample_hdri_index(pool, rng, beta=4.0):
    if not pool:
        raise ValueError("cannot sample from an empty HDRI pool")
    if len(pool) == 1:
        return 0
    return int(rng.choice(len(pool), p=sampling_weights(pool, beta)))


def sample_hdri(pool, rng, beta=4.0):
    """Draw a map with probability proportional to ``1 + beta * score``."""
    return pool[sample_hdri_index(pool, rng, beta)]


def rotate_env(env, yaw):
    """Rotate about the vertical axis by ``yaw`` radians (cyclic column shift)."""
    if not np.isfinite(yaw):
        raise ValueError("yaw must be finite")
    w = env.pixels.shape[1]
    shift = (yaw / (2 * np.pi) * w) % w
    k = int(np.floor(shift))
    frac = shift - k
    a = np.roll(env.pixels, k, axis=1)
    if frac < 1e-12:
        out = a
    else:
        b = np.roll(env.pixels, k + 1, axis=1)
        out = (1 - frac) * a + frac * b
    return EnvironmentMap(out, env.name, env.score)


def normalize_exposure(env, mean_radiance=1.0):
    """Scale the map so its sphere-averaged radiance (channel mean) is ``mean_radiance``."""
    mean = env.total_energy().mean() / (4 * np.pi)
    if mean <= 0:
        raise EmptyEnvironmentError("empty environment")
    return EnvironmentMap(env.pixels * (mean_radiance / mean), env.name, env.score)


def procedural_hdri(rng, height=32, kind=None, name="", exposure=1.0):
    """A synthetic HDR sky: gradient dome, ground, and zero or more lights.

    ``kind`` selects the lighting character: ``"overcast"`` (smooth),
    ``"sun"`` (one compact very bright source) or ``"studio"`` (a few
    medium-sized sources).  Chosen at random when None.  The result is
    exposure-normalised to a sphere-averaged radiance of ``exposure``
    (None keeps the raw scale).
    """
    kinds = ("overcast", "sun", "studio")
    if kind is None:
        kind = kinds[int(rng.integers(len(kinds)))]
    d = sphere.equirect_directions(height)
    up = d[..., 1]
    sky = rng.uniform(0.4, 1.0, 3) * np.array([0.8, 0.9, 1.0])
    ground = rng.uniform(0.1, 0.35, 3) * np.array([1.0, 0.9, 0.8])
    t = np.clip(up * 3 + 0.5, 0, 1)[..., None]
    px = t * sky * (0.6 + 0.4 * np.clip(up, 0, 1))[..., None] + (1 - t) * ground
    if kind == "overcast":
        lobes = [(rng.uniform(1.0, 4.0), rng.uniform(1.0, 3.0))]
    elif kind == "sun":
        lobes = [(rng.uniform(300.0, 2000.0), rng.uniform(2.0, 6.0))]
    else:
        lobes = [(rng.uniform(20.0, 120.0), rng.uniform(1.0, 3.0)) for _ in range(int(rng.integers(2, 4)))]
    sa = sphere.texel_solid_angles(height)
    for kappa, energy in lobes:
        axis = sphere.direction(rng.uniform(0.15, 0.5) * np.pi, rng.uniform(0, 2 * np.pi))
        tint = rng.uniform(0.85, 1.0, 3)
        lobe = np.exp(kappa * (d @ axis - 1.0))
        # normalised on the grid so sub-texel lobes keep their energy
        lobe *= energy / (lobe * sa).sum()
        px = px + lobe[..., None] * tint
    env = EnvironmentMap(px, name or kind)
    return env if exposure is None else normalize_exposure(env, exposure)
