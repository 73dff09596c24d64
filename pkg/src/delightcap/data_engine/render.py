"""Minimal scan renderer: rasterized G-buffer, Lambertian + Blinn-Phong shading.

Radiance leaving a skin point toward the camera is

    albedo / pi * E(n) + spec * sum_t L_t dw_t * f_bp(n, w_t, v) * max(0, n . w_t)

with ``E(n)`` the irradiance of the environment at the shading normal and
``f_bp = (e + 8) / (8 pi) * max(0, n . h)^e`` the normalised Blinn-Phong lobe.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..geometry import rasterize_mesh, sample_texture

DEFAULT_EXPONENT = 48.0
_CHUNK = 2048


class EmptyCoverageError(ValueError):
    pass


@dataclass
class GBuffer:
    mask: np.ndarray       # covered pixels (H, W) bool
    position: np.ndarray   # (P, 3) world positions of covered pixels
    normal: np.ndarray     # (P, 3) shading normals
    view: np.ndarray       # (P, 3) unit vectors toward the camera
    uv: np.ndarray         # (P, 2)
    albedo: np.ndarray     # (P, 3)
    spec: np.ndarray       # (P,)
    skin: np.ndarray       # (P,) bool
    depth: np.ndarray      # (H, W) z-buffer
    tri: np.ndarray        # (H, W) triangle ids

    @property
    def shape(self):
        return self.mask.shape

    def scatter(self, values, fill=0.0):
        """Place per-covered-pixel ``values`` (P, ...) back into an image."""
        values = np.asarray(values)
        out = np.full(self.mask.shape + values.shape[1:], fill, dtype=np.float64)
        out[self.mask] = values
        return out


def tangent_frame(n):
    up = np.broadcast_to([0.0, 1.0, 0.0], n.shape)
    t = np.cross(up, n)
    small = np.linalg.norm(t, axis=-1) < 1e-6
    if small.any():
        t[small] = np.cross(np.broadcast_to([1.0, 0.0, 0.0], n[small].shape), n[small])
    t /= np.linalg.norm(t, axis=-1, keepdims=True)
    b = np.cross(n, t)
    return t, b


def gbuffer(asset, camera):
    frags = rasterize_mesh(asset.mesh, camera)
    m = frags.coverage
    if not m.any():
        raise EmptyCoverageError("asset not visible from camera (empty coverage)")
    pos = frags.interpolate(asset.mesh.positions)[m]
    n = frags.interpolate(asset.mesh.normals)[m]
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    uv = frags.interpolate(asset.mesh.uvs)[m]
    nt = sample_texture(asset.normal_tex, uv)
    if np.abs(nt - [0, 0, 1]).max() > 1e-12:
        t, b = tangent_frame(n)
        n = nt[:, :1] * t + nt[:, 1:2] * b + nt[:, 2:] * n
        n /= np.linalg.norm(n, axis=1, keepdims=True)
    v = camera.center - pos
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return GBuffer(
        mask=m, position=pos, normal=n, view=v, uv=uv,
        albedo=sample_texture(asset.albedo_tex, uv),
        spec=sample_texture(asset.spec_tex, uv),
        skin=sample_texture(asset.skin_tex, uv) > 0.5,
        depth=frags.depth, tri=frags.tri,
    )


def blinn_phong(n, v, l, exponent):
    """Normalised Blinn-Phong lobe times the cosine term, (P,) x (D,) -> (P, D)."""
    h = l[None, :, :] + v[:, None, :]
    h /= np.linalg.norm(h, axis=-1, keepdims=True) + 1e-12
    ndh = np.clip(np.einsum("pk,pdk->pd", n, h), 0, None)
    ndl = np.clip(n @ l.T, 0, None)
    return (exponent + 8) / (8 * np.pi) * ndh ** exponent * ndl


def env_shading(env, normal, view, exponent=DEFAULT_EXPONENT):
    """Irradiance (P, 3) and specular radiance per unit spec albedo (P, 3)."""
    d = env.directions().reshape(-1, 3)
    sa = env.solid_angles().reshape(-1)
    rad = env.pixels.reshape(-1, 3)
    keep = sa > 0
    d, sa, rad = d[keep], sa[keep], rad[keep]
    irr = np.empty((len(normal), 3))
    spec = np.empty((len(normal), 3))
    for s in range(0, len(normal), _CHUNK):
        n = normal[s:s + _CHUNK]
        k = np.clip(n @ d.T, 0, None) * sa
        # renormalise the discrete cosine kernel so it integrates to pi exactly
        irr[s:s + _CHUNK] = np.pi * (k @ rad) / k.sum(1, keepdims=True)
        spec[s:s + _CHUNK] = (blinn_phong(n, view[s:s + _CHUNK], d, exponent) * sa) @ rad
    return irr, spec


def shade_env(gb, env, exponent=DEFAULT_EXPONENT):
    irr, spec = env_shading(env, gb.normal, gb.view, exponent)
    return gb.albedo / np.pi * irr + gb.spec[:, None] * spec


def shade_directional(gb, light_dirs, exponent=DEFAULT_EXPONENT):
    """Per-light radiance (L, P, 3) for lights of unit radiance per steradian."""
    l = np.asarray(light_dirs, dtype=np.float64)
    cos = np.clip(gb.normal @ l.T, 0, None)                      # (P, L)
    bp = blinn_phong(gb.normal, gb.view, l, exponent)            # (P, L)
    out = gb.albedo[None] / np.pi * cos.T[..., None] + (gb.spec[:, None] * bp).T[..., None]
    return out


def render_scan(asset, env, camera, exponent=DEFAULT_EXPONENT):
    """Render ``asset`` under ``env``; returns (image, albedo_gt, mask)."""
    gb = gbuffer(asset, camera)
    image = gb.scatter(shade_env(gb, env, exponent))
    albedo = gb.scatter(gb.albedo)
    mask = gb.scatter(gb.skin.astype(np.float64)) > 0.5
    if not mask.any():
        raise EmptyCoverageError("no skin pixels visible")
    return image, albedo, mask


def render_albedo(asset, camera):
    gb = gbuffer(asset, camera)
    return gb.scatter(gb.albedo), gb.scatter(gb.skin.astype(np.float64)) > 0.5


def render_sh(asset, camera, coeffs, albedo_tex=None):
    """Lambertian image under order-2 SH lighting ``coeffs`` (9, 3)."""
    from ..sphere import irradiance_basis

    gb = gbuffer(asset, camera)
    alb = gb.albedo if albedo_tex is None else sample_texture(albedo_tex, gb.uv)
    shade = irradiance_basis(gb.normal) @ np.asarray(coeffs)
    return gb.scatter(alb * shade), gb.scatter(gb.skin.astype(np.float64)) > 0.5
