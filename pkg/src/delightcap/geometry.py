"""Cameras, triangle meshes, a vectorised z-buffer rasterizer and texture lookup.

Image coordinates: ``x`` is the column, ``y`` the row, and pixel centres sit on
integer coordinates.  Texture coordinates: ``u`` runs along columns and ``v``
along rows of a UV map, texel (r, c) has its centre at
``((c + 0.5) / R, (r + 0.5) / R)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_MAX_CANDIDATES = 2_000_000


@dataclass
class Camera:
    fx: float
    fy: float
    cx: float
    cy: float
    R: np.ndarray  # world-to-camera rotation
    t: np.ndarray
    width: int
    height: int

    def __post_init__(self):
        self.R = np.asarray(self.R, dtype=np.float64).reshape(3, 3)
        self.t = np.asarray(self.t, dtype=np.float64).reshape(3)
        det = np.linalg.det(self.R)
        if abs(det - 1) > 1e-6 or np.abs(self.R @ self.R.T - np.eye(3)).max() > 1e-6:
            raise ValueError(f"camera rotation is not orthonormal (det={det:.6g})")

    @classmethod
    def look_at(cls, eye, target, width, height, focal, up=(0.0, 1.0, 0.0)):
        eye = np.asarray(eye, dtype=np.float64)
        fwd = np.asarray(target, dtype=np.float64) - eye
        fwd /= np.linalg.norm(fwd)
        right = np.cross(fwd, up)
        right /= np.linalg.norm(right)
        down = np.cross(fwd, right)
        R = np.stack([right, down, fwd])
        return cls(focal, focal, (width - 1) / 2, (height - 1) / 2, R, -R @ eye, width, height)

    @property
    def center(self):
        return -self.R.T @ self.t

    def to_camera(self, points):
        return np.asarray(points, dtype=np.float64) @ self.R.T + self.t

    def project(self, points):
        """World points (..., 3) -> pixel coordinates (..., 2) and camera depth (...)."""
        pc = self.to_camera(points)
        z = pc[..., 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            x = self.fx * pc[..., 0] / z + self.cx
            y = self.fy * pc[..., 1] / z + self.cy
        return np.stack([x, y], axis=-1), z

    def pixel_rays(self):
        """Unit world-space directions through every pixel centre (H, W, 3)."""
        ys, xs = np.mgrid[0:self.height, 0:self.width].astype(np.float64)
        d = np.stack([(xs - self.cx) / self.fx, (ys - self.cy) / self.fy, np.ones_like(xs)], -1)
        d = d @ self.R  # camera -> world
        return d / np.linalg.norm(d, axis=-1, keepdims=True)


@dataclass
class Mesh:
    positions: np.ndarray
    normals: np.ndarray
    uvs: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64)
        self.normals = np.asarray(self.normals, dtype=np.float64)
        self.uvs = np.asarray(self.uvs, dtype=np.float64)
        self.faces = np.asarray(self.faces, dtype=np.int64)
        n = len(self.positions)
        if self.normals.shape != (n, 3) or self.uvs.shape != (n, 2):
            raise ValueError("positions, normals and uvs must have one row per vertex")
        if self.faces.ndim != 2 or self.faces.shape[1] != 3:
            raise ValueError("faces must be (F, 3)")
        if len(self.faces) and (self.faces.min() < 0 or self.faces.max() >= n):
            raise ValueError("face index out of range")
        if (self.uvs < -1e-9).any() or (self.uvs > 1 + 1e-9).any():
            raise ValueError("uvs must lie in [0, 1]^2")
        norms = np.linalg.norm(self.normals, axis=1)
        if np.abs(norms - 1).max(initial=0) > 1e-6:
            raise ValueError("normals must be unit length")

    @property
    def scale(self):
        lo, hi = self.positions.min(0), self.positions.max(0)
        return float(np.linalg.norm(hi - lo))


def vertex_normals(positions, faces):
    """Area-weighted vertex normals."""
    p = positions[faces]
    fn = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    vn = np.zeros_like(positions)
    for k in range(3):
        np.add.at(vn, faces[:, k], fn)
    norm = np.linalg.norm(vn, axis=1, keepdims=True)
    return vn / np.where(norm > 0, norm, 1.0)


@dataclass
class Fragments:
    """Per-pixel rasterization result; ``tri`` is -1 where nothing was drawn."""
    tri: np.ndarray
    bary: np.ndarray
    depth: np.ndarray
    faces: np.ndarray = field(repr=False)

    @property
    def coverage(self):
        return self.tri >= 0

    def interpolate(self, attr):
        """Perspective-correct interpolation of per-vertex ``attr`` (V, D) -> (H, W, D)."""
        attr = np.asarray(attr, dtype=np.float64)
        out = np.zeros(self.tri.shape + attr.shape[1:])
        m = self.coverage
        idx = self.faces[self.tri[m]]
        out[m] = np.einsum("pk,pk...->p...", self.bary[m], attr[idx])
        return out


def rasterize(xy, z, faces, height, width, near=1e-6):
    """Z-buffer rasterization of screen-space triangles.

    ``xy`` holds per-vertex pixel coordinates and ``z`` per-vertex depth along
    the view axis.  Barycentrics are perspective-correct with respect to ``z``
    (pass ``z = 1`` for an orthographic or UV-space pass).  Degenerate
    triangles and triangles touching the near plane are skipped.
    """
    xy = np.asarray(xy, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    faces = np.asarray(faces, dtype=np.int64)
    tri_buf = np.full(height * width, -1, dtype=np.int64)
    depth_buf = np.full(height * width, np.inf)
    w_buf = np.zeros((height * width, 3))

    p = xy[faces]
    fz = z[faces]
    area = ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
            - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0]))
    ok = (np.abs(area) > 1e-12) & (fz > near).all(1) & np.isfinite(p).all((1, 2))
    x0 = np.clip(np.ceil(p[:, :, 0].min(1)), 0, width)
    x1 = np.clip(np.floor(p[:, :, 0].max(1)), -1, width - 1)
    y0 = np.clip(np.ceil(p[:, :, 1].min(1)), 0, height)
    y1 = np.clip(np.floor(p[:, :, 1].max(1)), -1, height - 1)
    ok &= (x1 >= x0) & (y1 >= y0)
    ids = np.nonzero(ok)[0]
    if len(ids) == 0:
        return Fragments(tri_buf.reshape(height, width), w_buf.reshape(height, width, 3),
                         depth_buf.reshape(height, width), faces)
    bw = (x1[ids] - x0[ids] + 1).astype(np.int64)
    bh = (y1[ids] - y0[ids] + 1).astype(np.int64)
    counts = bw * bh

    start = 0
    csum = np.cumsum(counts)
    while start < len(ids):
        base = csum[start - 1] if start else 0
        stop = int(np.searchsorted(csum, base + _MAX_CANDIDATES, side="right"))
        stop = max(stop, start + 1)
        sl = slice(start, stop)
        start = stop

        tid = ids[sl]
        cnt = counts[sl]
        owner = np.repeat(np.arange(len(tid)), cnt)
        offs = np.arange(cnt.sum()) - np.repeat(np.cumsum(cnt) - cnt, cnt)
        px = x0[tid][owner] + offs % bw[sl][owner]
        py = y0[tid][owner] + offs // bw[sl][owner]
        tri = tid[owner]
        a = p[tri, 0]
        b = p[tri, 1]
        c = p[tri, 2]
        ar = area[tri]
        w0 = ((b[:, 0] - px) * (c[:, 1] - py) - (b[:, 1] - py) * (c[:, 0] - px)) / ar
        w1 = ((c[:, 0] - px) * (a[:, 1] - py) - (c[:, 1] - py) * (a[:, 0] - px)) / ar
        w2 = 1.0 - w0 - w1
        inside = (w0 >= -1e-9) & (w1 >= -1e-9) & (w2 >= -1e-9)
        if not inside.any():
            continue
        ws = np.stack([w0, w1, w2], 1)[inside]
        tri = tri[inside]
        pix = (py[inside] * width + px[inside]).astype(np.int64)
        inv = ws / fz[tri]
        inv_sum = inv.sum(1)
        depth = 1.0 / inv_sum
        bary = inv / inv_sum[:, None]

        order = np.lexsort((tri, depth, pix))
        pix, depth, tri, bary = pix[order], depth[order], tri[order], bary[order]
        first = np.ones(len(pix), dtype=bool)
        first[1:] = pix[1:] != pix[:-1]
        pix, depth, tri, bary = pix[first], depth[first], tri[first], bary[first]
        win = depth < depth_buf[pix]
        pix = pix[win]
        depth_buf[pix] = depth[win]
        tri_buf[pix] = tri[win]
        w_buf[pix] = bary[win]

    return Fragments(tri_buf.reshape(height, width), w_buf.reshape(height, width, 3),
                     depth_buf.reshape(height, width), faces)


def rasterize_mesh(mesh, camera):
    xy, z = camera.project(mesh.positions)
    return rasterize(xy, z, mesh.faces, camera.height, camera.width)


def rasterize_uv(mesh, resolution):
    """Rasterize the mesh's UV layout at ``resolution``^2 texels."""
    xy = mesh.uvs * resolution - 0.5
    return rasterize(xy, np.ones(len(mesh.uvs)), mesh.faces, resolution, resolution)


def bilinear(image, x, y):
    """Clamp-to-edge bilinear lookup of ``image`` (H, W[, C]) at pixel coords."""
    image = np.asarray(image)
    h, w = image.shape[:2]
    x = np.clip(np.asarray(x, dtype=np.float64), 0, w - 1)
    y = np.clip(np.asarray(y, dtype=np.float64), 0, h - 1)
    xi = np.minimum(np.floor(x).astype(np.int64), w - 2) if w > 1 else np.zeros(x.shape, np.int64)
    yi = np.minimum(np.floor(y).astype(np.int64), h - 2) if h > 1 else np.zeros(y.shape, np.int64)
    fx = x - xi
    fy = y - yi
    xj = np.minimum(xi + 1, w - 1)
    yj = np.minimum(yi + 1, h - 1)
    if image.ndim == 3:
        fx = fx[..., None]
        fy = fy[..., None]
    top = image[yi, xi] * (1 - fx) + image[yi, xj] * fx
    bot = image[yj, xi] * (1 - fx) + image[yj, xj] * fx
    return top * (1 - fy) + bot * fy


def sample_texture(texture, uv):
    """Bilinear texture lookup at UV coordinates (..., 2)."""
    res_v, res_u = texture.shape[:2]
    uv = np.asarray(uv, dtype=np.float64)
    return bilinear(texture, uv[..., 0] * res_u - 0.5, uv[..., 1] * res_v - 0.5)


def uv_texel_centers(resolution):
    r = (np.arange(resolution) + 0.5) / resolution
    v, u = np.meshgrid(r, r, indexing="ij")
    return np.stack([u, v], -1)
