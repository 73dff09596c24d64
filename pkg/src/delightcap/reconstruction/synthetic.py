"""Synthetic multi-view capture bundles with known albedo and lighting."""
from __future__ import annotations

import numpy as np

from ..data_engine.render import render_albedo, render_scan, render_sh
from ..geometry import Camera
from .scene import CameraView, SceneBundle


def orbit_cameras(n_views, size=128, focal=None, distance=4.2, yaw_deg=60.0, pitch_deg=20.0):
    """``n_views`` cameras on a frontal arc looking at the origin.

    Yaw sweeps [-yaw_deg, yaw_deg]; pitch alternates over three rows so the
    views see the face from above, level and below.
    """
    focal = size * 110 / 96 if focal is None else focal
    yaws = np.radians(np.linspace(-yaw_deg, yaw_deg, n_views)) if n_views > 1 else np.zeros(1)
    pitches = np.radians(pitch_deg * np.array([0.0, 1.0, -1.0]))[np.arange(n_views) % 3]
    cams = []
    for yaw, pitch in zip(yaws, pitches):
        eye = distance * np.array([np.sin(yaw) * np.cos(pitch), np.sin(pitch), np.cos(yaw) * np.cos(pitch)])
        cams.append(Camera.look_at(eye, [0, 0, 0], size, size, focal))
    return cams


def random_sh(rng, dc=1.0, spread=0.35):
    """Order-2 SH coefficients (9, 3) whose DC term gives shading near ``dc``."""
    c = rng.normal(0, spread, (9, 3)) * dc
    c[0] = dc * rng.uniform(0.8, 1.2, 3) / 0.28209479177387814
    return c


def synthetic_bundle(asset, cameras, lighting=None, env=None, exponent=None):
    """Render ``asset`` from every camera.

    With ``env`` the raw photos are full scan renderings (diffuse plus
    specular) under that environment; otherwise they are Lambertian images
    under SH ``lighting`` (9, 3).  Each view stores its ground-truth albedo.
    """
    if (lighting is None) == (env is None):
        raise ValueError("give exactly one of lighting or env")
    views = []
    for i, cam in enumerate(cameras):
        alb, mask = render_albedo(asset, cam)
        if env is not None:
            kw = {} if exponent is None else {"exponent": exponent}
            image, _, mask = render_scan(asset, env, cam, **kw)
        else:
            image, _ = render_sh(asset, cam, lighting)
        lm, _ = cam.project(asset.landmarks)
        views.append(CameraView(f"view{i:02d}", cam, image, mask, lm, alb))
    return SceneBundle(asset.mesh, views)
