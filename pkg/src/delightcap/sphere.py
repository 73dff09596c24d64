"""Spherical helpers: equirectangular grids and order-2 real spherical harmonics.

World convention: +y is up.  An equirectangular texel at row ``r`` and
column ``c`` of an ``H x 2H`` map looks along polar angle
``theta = pi * (r + 0.5) / H`` (measured from +y) and azimuth
``phi = 2 pi * (c + 0.5) / W`` (phi = 0 looks along +z, increasing toward +x).
"""
from __future__ import annotations

import numpy as np

N_SH = 9

# Convolution of a radiance SH expansion with the clamped cosine, per band.
IRRADIANCE_BAND_SCALE = np.array([np.pi, 2 * np.pi / 3, np.pi / 4])
_BAND_OF = np.array([0, 1, 1, 1, 2, 2, 2, 2, 2])


def direction(theta, phi):
    st = np.sin(theta)
    return np.stack([st * np.sin(phi), np.cos(theta), st * np.cos(phi)], axis=-1)


def direction_angles(d):
    d = np.asarray(d, dtype=np.float64)
    theta = np.arccos(np.clip(d[..., 1], -1.0, 1.0))
    phi = np.mod(np.arctan2(d[..., 0], d[..., 2]), 2 * np.pi)
    return theta, phi


def equirect_directions(height):
    """Unit directions (H, 2H, 3) at texel centres."""
    width = 2 * height
    theta = np.pi * (np.arange(height) + 0.5) / height
    phi = 2 * np.pi * (np.arange(width) + 0.5) / width
    t, p = np.meshgrid(theta, phi, indexing="ij")
    return direction(t, p)


def texel_solid_angles(height):
    """Exact solid angle of every texel cell (H, 2H); sums to 4 pi."""
    width = 2 * height
    edges = np.cos(np.pi * np.arange(height + 1) / height)
    band = (edges[:-1] - edges[1:]) * (2 * np.pi / width)
    return np.repeat(band[:, None], width, axis=1)


def sh_basis(d):
    """Real SH basis up to band 2 evaluated at unit directions (..., 3) -> (..., 9).

    Ordering is (l, m) = (0,0), (1,-1), (1,0), (1,1), (2,-2), (2,-1), (2,0),
    (2,1), (2,2) with (x, y, z) the Cartesian components of ``d``.
    """
    d = np.asarray(d, dtype=np.float64)
    x, y, z = d[..., 0], d[..., 1], d[..., 2]
    return np.stack([
        np.full_like(x, 0.28209479177387814),
        0.4886025119029199 * y,
        0.4886025119029199 * z,
        0.4886025119029199 * x,
        1.0925484305920792 * x * y,
        1.0925484305920792 * y * z,
        0.31539156525252005 * (3 * z * z - 1),
        1.0925484305920792 * x * z,
        0.5462742152960396 * (x * x - y * y),
    ], axis=-1)


def irradiance_basis(d):
    """Basis B_k(n) such that Lambertian radiance = albedo * sum_k c_k B_k(n).

    ``c`` are the radiance SH coefficients of the environment; B_k includes the
    clamped-cosine band scale and the 1/pi of the Lambertian BRDF.
    """
    return sh_basis(d) * (IRRADIANCE_BAND_SCALE[_BAND_OF] / np.pi)


def project_env(pixels):
    """Radiance SH coefficients (9, C) of an equirectangular map by texel quadrature."""
    pixels = np.asarray(pixels, dtype=np.float64)
    h = pixels.shape[0]
    basis = sh_basis(equirect_directions(h)) * texel_solid_angles(h)[..., None]
    return np.einsum("hwk,hwc->kc", basis, pixels)


def eval_sh(coeffs, d):
    """Radiance reconstructed from SH coefficients (9, C) at directions (..., 3)."""
    return sh_basis(d) @ np.asarray(coeffs, dtype=np.float64)


def fibonacci_sphere(n):
    """``n`` near-uniform unit vectors covering the whole sphere."""
    i = np.arange(n) + 0.5
    y = 1 - 2 * i / n
    r = np.sqrt(np.clip(1 - y * y, 0, None))
    ang = np.pi * (3 - np.sqrt(5)) * i
    return np.stack([r * np.sin(ang), y, r * np.cos(ang)], axis=-1)
