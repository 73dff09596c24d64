"""Global order-2 SH lighting fitted by linear least squares."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..geometry import rasterize_mesh, sample_texture
from ..io import FormatError
from ..sphere import N_SH, irradiance_basis

RANK_TOL = 1e-8
ORTHO_TOL = 1e-6


class RankDeficientError(ValueError):
    pass


@dataclass
class SHLighting:
    coeffs: np.ndarray                  # (9, 3)
    residual: np.ndarray | None = None  # (3,) residual sum of squares per channel

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=np.float64).reshape(N_SH, 3)
        if not np.isfinite(self.coeffs).all():
            raise ValueError("SH coefficients must be finite")

    def irradiance(self, normals):
        """Cosine-convolved shading factor (..., 3) at unit normals (..., 3)."""
        return irradiance_basis(normals) @ self.coeffs


@dataclass
class Observations:
    """Skin pixels of one view with their surface normal, UV and raw colour."""
    pixels: np.ndarray   # (P, 2) row, col
    normal: np.ndarray   # (P, 3)
    uv: np.ndarray       # (P, 2)
    raw: np.ndarray      # (P, 3)


def observe(mesh, camera, image, mask):
    frags = rasterize_mesh(mesh, camera)
    m = frags.coverage & (np.asarray(mask) > 0.5)
    n = frags.interpolate(mesh.normals)[m]
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    rows, cols = np.nonzero(m)
    return Observations(np.stack([rows, cols], 1), n, frags.interpolate(mesh.uvs)[m],
                        np.asarray(image, dtype=np.float64)[m])


def observe_views(mesh, views):
    return [observe(mesh, v.camera, v.image, v.mask) for v in views]


def texture_valid_at(texture, uv):
    """Nearest-texel validity of ``texture`` at UVs."""
    r = texture.resolution
    c = np.clip(np.floor(uv[:, 0] * r).astype(np.int64), 0, r - 1)
    rr = np.clip(np.floor(uv[:, 1] * r).astype(np.int64), 0, r - 1)
    return texture.valid[rr, c]


def check_normal_rank(normals):
    """Raise if the irradiance basis over ``normals`` cannot determine all 9 coefficients."""
    if len(normals) < N_SH:
        raise RankDeficientError(f"rank-deficient normal distribution: {len(normals)} observations "
                                 f"for {N_SH} coefficients")
    sv = np.linalg.svd(irradiance_basis(normals), compute_uv=False)
    rank = int((sv > RANK_TOL * sv[0]).sum())
    if rank < N_SH:
        spread = np.linalg.svd(normals - normals.mean(0), compute_uv=False)
        if spread[0] < 1e-6:
            kind = "planar scene (all normals identical)"
        elif spread[1] < 1e-6 * spread[0]:
            kind = "normals confined to one great circle arc"
        else:
            kind = "insufficient normal variety"
        raise RankDeficientError(f"rank-deficient normal distribution: rank {rank} of {N_SH}, {kind}")


def fit_sh_lighting(views, texture, mesh, obs=None, check=True):
    """Fit ``raw ~ albedo(uv) * sum_k c_k B_k(n)`` per channel over every observed pixel.

    The albedo comes from the fused ``texture``; pixels whose texel is not
    flagged valid are ignored.  Returns coefficients and per-channel residual.
    """
    obs = observe_views(mesh, views) if obs is None else obs
    normals, albedo, raw = [], [], []
    for o in obs:
        keep = texture_valid_at(texture, o.uv)
        normals.append(o.normal[keep])
        albedo.append(sample_texture(texture.texels, o.uv[keep]))
        raw.append(o.raw[keep])
    normals = np.concatenate(normals)
    albedo = np.concatenate(albedo)
    raw = np.concatenate(raw)
    check_normal_rank(normals)
    basis = irradiance_basis(normals)
    coeffs = np.zeros((N_SH, 3))
    resid = np.zeros(3)
    for c in range(3):
        a = albedo[:, c:c + 1] * basis
        sol, *_ = np.linalg.lstsq(a, raw[:, c], rcond=None)
        r = raw[:, c] - a @ sol
        if check:
            scale = np.linalg.norm(a, axis=0) * max(np.linalg.norm(raw[:, c]), 1e-300)
            ortho = np.abs(a.T @ r) / np.where(scale > 0, scale, 1.0)
            if ortho.max() > ORTHO_TOL:
                raise RankDeficientError(f"channel {c}: residual not orthogonal to the design "
                                         f"({ortho.max():.3g}); albedo may vanish on the observed region")
        coeffs[:, c] = sol
        resid[c] = float(r @ r)
    return SHLighting(coeffs, resid)


def write_sh(path, lighting):
    lines = ["# order-2 real SH irradiance coefficients, one basis function per row: r g b"]
    lines += [" ".join(f"{v:.17g}" for v in row) for row in lighting.coeffs]
    Path(path).write_text("\n".join(lines) + "\n")


def read_sh(path):
    vals = []
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0]
        vals += [float(v) for v in line.split()]
    if len(vals) != 3 * N_SH:
        raise FormatError(f"{path}: expected {3 * N_SH} SH numbers, got {len(vals)}")
    return SHLighting(np.reshape(vals, (N_SH, 3)))
