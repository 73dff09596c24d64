"""Multi-view fusion of per-view albedo images into a UV texture."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..geometry import bilinear, rasterize_mesh, rasterize_uv

DEFAULT_GAMMA = 2.0
DEPTH_EPS = 1e-3  # relative to mesh scale


class FusionError(ValueError):
    pass


@dataclass
class UVTexture:
    texels: np.ndarray   # (R, R, 3), >= 0
    valid: np.ndarray    # (R, R) bool: observed by at least one view

    def __post_init__(self):
        self.texels = np.asarray(self.texels, dtype=np.float64)
        self.valid = np.asarray(self.valid, dtype=bool)
        if self.texels.ndim != 3 or self.texels.shape[0] != self.texels.shape[1] or self.texels.shape[2] != 3:
            raise ValueError(f"texture must be R x R x 3, got {self.texels.shape}")
        if self.valid.shape != self.texels.shape[:2]:
            raise ValueError("validity mask does not match texture size")

    @property
    def resolution(self):
        return self.texels.shape[0]


@dataclass
class TexelSurface:
    """Surface points behind every UV texel covered by the layout."""
    covered: np.ndarray   # (R, R) bool
    position: np.ndarray  # (T, 3)
    normal: np.ndarray    # (T, 3) unit
    tri: np.ndarray       # (T,)


def texel_surface(mesh, resolution):
    frags = rasterize_uv(mesh, resolution)
    m = frags.coverage
    if not m.any():
        raise FusionError("mesh UV layout covers no texel")
    n = frags.interpolate(mesh.normals)[m]
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    return TexelSurface(m, frags.interpolate(mesh.positions)[m], n, frags.tri[m])


def _taps(x, y, w, h):
    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    return x0, y0, x0 + 1, y0 + 1


def _all_taps(img, x0, y0, x1, y1, reduce):
    return reduce(reduce(img[y0, x0], img[y0, x1]), reduce(img[y1, x0], img[y1, x1]))


def view_samples(surface, mesh, camera, image, valid, eps=None, frags=None):
    """Bilinear samples of ``image`` at every texel visible in ``camera``.

    Returns (values (T, 3), ok (T,) bool, cosine (T,)).  A texel is usable when
    it projects inside the image, its four bilinear taps are all flagged valid
    and covered, and its depth does not exceed the z-buffer depth interpolated
    at its projection by more than ``eps`` (default 1e-3 of the mesh scale).
    """
    eps = DEPTH_EPS * mesh.scale if eps is None else eps
    frags = frags if frags is not None else rasterize_mesh(mesh, camera)
    h, w = camera.height, camera.width
    xy, z = camera.project(surface.position)
    x, y = xy[:, 0], xy[:, 1]
    inside = (z > 0) & np.isfinite(x) & np.isfinite(y) & (x >= 0) & (x <= w - 1) & (y >= 0) & (y <= h - 1)
    ok = inside.copy()
    vals = np.zeros((len(z), 3))
    v = camera.center - surface.position
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    cos = np.einsum("ij,ij->i", surface.normal, v)
    ok &= cos > 0
    if not ok.any():
        return vals, ok, cos
    idx = np.nonzero(ok)[0]
    xs, ys = x[idx], y[idx]
    x0, y0, x1, y1 = _taps(xs, ys, w, h)
    x1, y1 = np.minimum(x1, w - 1), np.minimum(y1, h - 1)
    good = np.asarray(valid, dtype=bool) & frags.coverage
    tap_ok = _all_taps(good, x0, y0, x1, y1, np.logical_and)
    depth = np.where(frags.coverage, frags.depth, 0.0)
    zb = bilinear(depth, xs, ys)
    visible = z[idx] <= zb + eps
    keep = tap_ok & visible
    ok[idx] = keep
    vals[idx[keep]] = bilinear(image, xs[keep], ys[keep])
    return vals, ok, cos


def fill_invalid(texels, valid, max_iter=None):
    """Fill unflagged texels by repeated 8-neighbour averaging of filled ones.

    Each sweep assigns every unfilled texel with at least one filled neighbour
    the mean of those neighbours, so values spread outward ring by ring from
    the observed region until the whole map is filled.
    """
    out = np.array(texels, dtype=np.float64)
    filled = np.array(valid, dtype=bool)
    if not filled.any():
        raise FusionError("no valid texel to fill from")
    h, w = filled.shape
    it = 0
    while not filled.all():
        pad_v = np.pad(out * filled[..., None], ((1, 1), (1, 1), (0, 0)))
        pad_m = np.pad(filled.astype(np.float64), 1)
        acc = np.zeros_like(out)
        cnt = np.zeros((h, w))
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                if dy == dx == 0:
                    continue
                acc += pad_v[1 + dy:1 + dy + h, 1 + dx:1 + dx + w]
                cnt += pad_m[1 + dy:1 + dy + h, 1 + dx:1 + dx + w]
        new = ~filled & (cnt > 0)
        out[new] = acc[new] / cnt[new][:, None]
        filled |= new
        it += 1
        if max_iter is not None and it >= max_iter:
            break
    return out


def fuse_to_uv(albedos, masks, mesh, cameras, resolution=1024, gamma=DEFAULT_GAMMA, eps=None,
               fill=True, return_weights=False):
    """Blend per-view albedo images into an R x R UV texture.

    Every texel takes the convex combination of its visible view samples with
    weights ``max(0, n . v) ** gamma``.  Texels seen by no view are flagged
    invalid and, when ``fill`` is set, filled from their valid neighbours.
    """
    if not (len(albedos) == len(masks) == len(cameras)):
        raise ValueError(f"list length mismatch: {len(albedos)} albedos, {len(masks)} masks, "
                         f"{len(cameras)} cameras")
    if not albedos:
        raise FusionError("fusion needs at least one view")
    surface = texel_surface(mesh, resolution)
    t = len(surface.position)
    acc = np.zeros((t, 3))
    wsum = np.zeros(t)
    per_view = []
    for img, m, cam in zip(albedos, masks, cameras):
        img = np.asarray(img, dtype=np.float64)
        if img.shape[:2] != (cam.height, cam.width):
            raise ValueError(f"image {img.shape[:2]} does not match camera {(cam.height, cam.width)}")
        vals, ok, cos = view_samples(surface, mesh, cam, img, m, eps)
        wv = np.where(ok, np.clip(cos, 0, None) ** gamma, 0.0)
        acc += wv[:, None] * vals
        wsum += wv
        per_view.append(wv)
    seen = wsum > 0
    if not seen.any():
        raise FusionError("no texel is covered by any view")
    r = resolution
    texels = np.zeros((r, r, 3))
    valid = np.zeros((r, r), dtype=bool)
    flat = np.zeros((t, 3))
    flat[seen] = acc[seen] / wsum[seen][:, None]
    texels[surface.covered] = flat
    valid[surface.covered] = seen
    if fill:
        texels = fill_invalid(texels, valid)
    tex = UVTexture(np.clip(texels, 0, None), valid)
    if return_weights:
        return tex, surface, np.stack(per_view)
    return tex
