"""Procedural stand-ins for scanned heads: meshes plus UV reflectance maps."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from ..geometry import Mesh, vertex_normals

# (theta, phi) surface positions of the five alignment landmarks on the
# unit-sphere parameterisation: left eye, right eye, nose tip, mouth corners.
LANDMARK_ANGLES = np.array([
    [0.44, -0.36],
    [0.44, 0.36],
    [0.55, 0.0],
    [0.68, -0.24],
    [0.68, 0.24],
]) * np.array([np.pi, 1.0])

SKIN_TONES = np.array([
    [0.72, 0.52, 0.42],
    [0.62, 0.43, 0.33],
    [0.50, 0.33, 0.24],
    [0.36, 0.23, 0.16],
    [0.78, 0.60, 0.50],
])


@dataclass
class ScanAsset:
    mesh: Mesh
    albedo_tex: np.ndarray
    spec_tex: np.ndarray
    normal_tex: np.ndarray
    skin_tex: np.ndarray
    landmarks: np.ndarray  # (5, 3) world positions
    name: str = ""

    def __post_init__(self):
        if (self.albedo_tex < 0).any() or (self.albedo_tex > 1).any():
            raise ValueError("albedo texture must lie in [0, 1]")
        n = np.linalg.norm(self.normal_tex, axis=-1)
        if np.abs(n - 1).max() > 1e-5:
            raise ValueError("normal texture must hold unit vectors")


def _grid_mesh(radius_fn, n_theta, n_phi, axes):
    theta = np.linspace(0, np.pi, n_theta + 1)
    # seam at the back of the head: phi runs from -pi to pi, u = (phi + pi) / 2pi
    phi = np.linspace(-np.pi, np.pi, n_phi + 1)
    t, p = np.meshgrid(theta, phi, indexing="ij")
    r = radius_fn(t, p)
    st = np.sin(t)
    pos = np.stack([st * np.sin(p), np.cos(t), st * np.cos(p)], -1) * r[..., None] * axes
    uv = np.stack([(p + np.pi) / (2 * np.pi), t / np.pi], -1)
    idx = np.arange((n_theta + 1) * (n_phi + 1)).reshape(n_theta + 1, n_phi + 1)
    a, b = idx[:-1, :-1].ravel(), idx[:-1, 1:].ravel()
    c, d = idx[1:, :-1].ravel(), idx[1:, 1:].ravel()
    faces = np.concatenate([np.stack([a, c, b], 1), np.stack([b, c, d], 1)])
    pos = pos.reshape(-1, 3)
    uv = np.clip(uv.reshape(-1, 2), 0, 1)
    # drop triangles collapsed at the poles
    pf = pos[faces]
    area = np.linalg.norm(np.cross(pf[:, 1] - pf[:, 0], pf[:, 2] - pf[:, 0]), axis=1)
    faces = faces[area > 1e-12]
    normals = vertex_normals(pos, faces)
    # weld normals across the seam and at the poles
    key = np.round(pos, 9)
    _, inv = np.unique(key, axis=0, return_inverse=True)
    inv = inv.ravel()
    acc = np.zeros((inv.max() + 1, 3))
    np.add.at(acc, inv, normals)
    normals = acc[inv]
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    return pos, normals, uv, faces


def _bump(t, p, t0, p0, sigma, amp):
    return amp * np.exp(-((t - t0) ** 2 + (p - p0) ** 2) / (2 * sigma ** 2))


def _on_surface(angles, radius_fn, axes):
    t, p = angles[:, 0], angles[:, 1]
    r = radius_fn(t, p)
    st = np.sin(t)
    return np.stack([st * np.sin(p), np.cos(t), st * np.cos(p)], -1) * r[:, None] * axes


def sphere_asset(rng=None, tex_res=128, n_theta=48, n_phi=96, albedo=None, spec=0.0, name="sphere"):
    """Unit sphere with a smooth random albedo, constant specular, flat normals."""
    radius = lambda t, p: np.ones_like(t)  # noqa: E731
    axes = np.ones(3)
    pos, nrm, uv, faces = _grid_mesh(radius, n_theta, n_phi, axes)
    if albedo is None:
        rng = np.random.default_rng(0) if rng is None else rng
        albedo = _smooth_albedo(rng, tex_res, rng.uniform(0.3, 0.7, 3))
    albedo = np.broadcast_to(np.asarray(albedo, dtype=np.float64), (tex_res, tex_res, 3)).copy()
    spec_tex = np.full((tex_res, tex_res), float(spec))
    normal_tex = np.zeros((tex_res, tex_res, 3))
    normal_tex[..., 2] = 1.0
    skin = np.ones((tex_res, tex_res))
    lm = _on_surface(LANDMARK_ANGLES, radius, axes)
    return ScanAsset(Mesh(pos, nrm, uv, faces), albedo, spec_tex, normal_tex, skin, lm, name)


def _smooth_albedo(rng, res, base, detail=0.15, sigma=6.0):
    noise = ndimage.gaussian_filter(rng.standard_normal((res, res, 3)), (sigma, sigma, 0), mode="wrap")
    noise /= noise.std() + 1e-12
    return np.clip(base * (1 + detail * noise), 0, 1)


def head_asset(rng, tex_res=128, n_theta=48, n_phi=96, name="head", freckles=True):
    """Ellipsoidal head with nose/brow/cheek bumps and a skin-like UV albedo."""
    tone = SKIN_TONES[int(rng.integers(len(SKIN_TONES)))] * rng.uniform(0.9, 1.1, 3)
    nose = rng.uniform(0.12, 0.2)
    brow = rng.uniform(0.04, 0.08)
    cheek = rng.uniform(0.03, 0.07)

    def radius(t, p):
        r = 1.0 + _bump(t, p, 0.56 * np.pi, 0.0, 0.12, nose)
        r = r + _bump(t, p, 0.38 * np.pi, -0.35, 0.15, brow) + _bump(t, p, 0.38 * np.pi, 0.35, 0.15, brow)
        r = r + _bump(t, p, 0.58 * np.pi, -0.6, 0.22, cheek) + _bump(t, p, 0.58 * np.pi, 0.6, 0.22, cheek)
        r = r - _bump(t, p, 0.44 * np.pi, -0.36, 0.08, 0.05) - _bump(t, p, 0.44 * np.pi, 0.36, 0.08, 0.05)
        return r

    axes = np.array([0.85, 1.1, 0.95]) * rng.uniform(0.95, 1.05, 3)
    pos, nrm, uv, faces = _grid_mesh(radius, n_theta, n_phi, axes)

    uvc = (np.arange(tex_res) + 0.5) / tex_res
    vv, uu = np.meshgrid(uvc, uvc, indexing="ij")
    t = vv * np.pi
    p = uu * 2 * np.pi - np.pi
    albedo = _smooth_albedo(rng, tex_res, tone, detail=0.08, sigma=tex_res / 16)
    # blush on cheeks, reddish lips, darker brows
    blush = _bump(t, p, 0.6 * np.pi, -0.55, 0.2, 1) + _bump(t, p, 0.6 * np.pi, 0.55, 0.2, 1)
    albedo = albedo * (1 + 0.12 * blush[..., None] * np.array([1.0, -0.3, -0.3]))
    lips = np.exp(-(((t - 0.68 * np.pi) / 0.05) ** 2 + (p / 0.22) ** 2))
    albedo = albedo * (1 - 0.35 * lips[..., None]) + 0.35 * lips[..., None] * tone * np.array([1.1, 0.55, 0.55])
    if freckles:
        spots = ndimage.gaussian_filter((rng.random((tex_res, tex_res)) > 0.985).astype(float), 1.0)
        spots = spots / (spots.max() + 1e-12)
        front = np.exp(-((t - 0.5 * np.pi) / 0.35) ** 2 - (p / 0.9) ** 2)
        albedo = albedo * (1 - 0.3 * (spots * front)[..., None])
    eyes = np.zeros_like(t)
    brows = np.zeros_like(t)
    for side in (-1, 1):
        eyes = np.maximum(eyes, np.exp(-(((t - 0.44 * np.pi) / 0.07) ** 2 + ((p - side * 0.36) / 0.14) ** 2)))
        brows = np.maximum(brows, np.exp(-(((t - 0.37 * np.pi) / 0.035) ** 2 + ((p - side * 0.36) / 0.2) ** 2)))
    albedo = albedo * (1 - 0.75 * eyes[..., None]) * (1 - 0.6 * brows[..., None])
    albedo = np.clip(albedo, 0, 1)

    spec = 0.12 + 0.1 * np.exp(-((t - 0.5 * np.pi) / 0.25) ** 2 - (p / 0.25) ** 2)  # T-zone shine
    spec = spec * (1 - lips) + 0.2 * lips
    normal_tex = np.zeros((tex_res, tex_res, 3))
    normal_tex[..., 2] = 1.0

    # skin: the face and sides; excludes eyes, brows and the scalp/back of head
    skin = (t > 0.3 * np.pi) & (t < 0.85 * np.pi) & (np.abs(p) < 1.9)
    skin &= (eyes < 0.3) & (brows < 0.3)
    lm = _on_surface(LANDMARK_ANGLES, radius, axes)
    return ScanAsset(Mesh(pos, nrm, uv, faces), albedo, spec, normal_tex, skin.astype(np.float64), lm, name)


def plane_asset(size=2.0, z=0.0, tex_res=64, albedo=None, n=8, name="plane"):
    """Square facing +z, centred on the z axis at depth ``z``."""
    g = np.linspace(-size / 2, size / 2, n + 1)
    x, y = np.meshgrid(g, g[::-1])
    pos = np.stack([x.ravel(), y.ravel(), np.full(x.size, z)], 1)
    uv = np.stack([(x.ravel() + size / 2) / size, (size / 2 - y.ravel()) / size], 1)
    idx = np.arange((n + 1) ** 2).reshape(n + 1, n + 1)
    a, b = idx[:-1, :-1].ravel(), idx[:-1, 1:].ravel()
    c, d = idx[1:, :-1].ravel(), idx[1:, 1:].ravel()
    faces = np.concatenate([np.stack([a, c, b], 1), np.stack([b, c, d], 1)])
    nrm = np.tile([0.0, 0.0, 1.0], (len(pos), 1))
    if albedo is None:
        albedo = np.full((tex_res, tex_res, 3), 0.5)
    albedo = np.broadcast_to(albedo, (tex_res, tex_res, 3)).copy()
    normal_tex = np.zeros((tex_res, tex_res, 3))
    normal_tex[..., 2] = 1.0
    lm = np.array([[-0.3, 0.2, z], [0.3, 0.2, z], [0, 0, z], [-0.2, -0.3, z], [0.2, -0.3, z]])
    return ScanAsset(Mesh(pos, nrm, uv, faces), albedo, np.zeros((tex_res, tex_res)),
                     normal_tex, np.ones((tex_res, tex_res)), lm, name)


def merge_meshes(meshes, uv_boxes):
    """Concatenate meshes, squeezing each UV layout into its own (u0, v0, u1, v1) box."""
    pos, nrm, uv, faces = [], [], [], []
    off = 0
    for m, (u0, v0, u1, v1) in zip(meshes, uv_boxes):
        pos.append(m.positions)
        nrm.append(m.normals)
        uv.append(np.stack([u0 + m.uvs[:, 0] * (u1 - u0), v0 + m.uvs[:, 1] * (v1 - v0)], 1))
        faces.append(m.faces + off)
        off += len(m.positions)
    return Mesh(np.concatenate(pos), np.concatenate(nrm), np.concatenate(uv), np.concatenate(faces))
