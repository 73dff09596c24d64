"""Scene bundles: mesh, cameras and per-view images on disk.

Bundle layout::

    <bundle>/mesh.txt        mesh records (see below)
    <bundle>/cameras.txt     one view per line:
                             name width height fx fy cx cy r00 r01 r02 r10 r11 r12
                             r20 r21 r22 tx ty tz   (world-to-camera)
    <bundle>/views/<name>_image.pfm       raw photo (linear RGB)
    <bundle>/views/<name>_mask.pfm        skin mask (optional; default all ones)
    <bundle>/views/<name>_landmarks.txt   five "x y" lines (optional)
    <bundle>/views/<name>_albedo.pfm      known per-view albedo (optional)

Mesh records, one per line, ``#`` comments allowed::

    v x y z        position
    vn x y z       normal      (one per position, same order)
    vt u v         uv          (one per position, same order)
    f i j k        triangle, 0-based vertex indices
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..geometry import Camera, Mesh
from ..io import FormatError, read_pfm, write_pfm


class BundleError(ValueError):
    """A bundle file is missing or malformed; ``view`` names the culprit if known."""

    def __init__(self, message, view=None):
        super().__init__(message)
        self.view = view


@dataclass
class CameraView:
    name: str
    camera: Camera
    image: np.ndarray
    mask: np.ndarray
    landmarks: np.ndarray | None = None
    albedo: np.ndarray | None = None


@dataclass
class SceneBundle:
    mesh: Mesh
    views: list

    @property
    def cameras(self):
        return [v.camera for v in self.views]


def write_mesh(path, mesh):
    lines = ["# delightcap mesh v1"]
    lines += [f"v {x:.9g} {y:.9g} {z:.9g}" for x, y, z in mesh.positions]
    lines += [f"vn {x:.9g} {y:.9g} {z:.9g}" for x, y, z in mesh.normals]
    lines += [f"vt {u:.9g} {v:.9g}" for u, v in mesh.uvs]
    lines += [f"f {i} {j} {k}" for i, j, k in mesh.faces]
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path):
    rec = {"v": [], "vn": [], "vt": [], "f": []}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].split()
        if not line:
            continue
        tag, vals = line[0], line[1:]
        want = {"v": 3, "vn": 3, "vt": 2, "f": 3}.get(tag)
        if want is None or len(vals) != want:
            raise FormatError(f"{path}:{lineno}: bad mesh record")
        rec[tag].append([int(v) for v in vals] if tag == "f" else [float(v) for v in vals])
    try:
        normals = np.asarray(rec["vn"], dtype=np.float64).reshape(-1, 3)
        normals /= np.linalg.norm(normals, axis=1, keepdims=True)
        return Mesh(np.asarray(rec["v"]).reshape(-1, 3), normals,
                    np.asarray(rec["vt"]).reshape(-1, 2), np.asarray(rec["f"], dtype=np.int64).reshape(-1, 3))
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc


def camera_record(name, cam):
    vals = [cam.width, cam.height, cam.fx, cam.fy, cam.cx, cam.cy, *cam.R.ravel(), *cam.t]
    return name + " " + " ".join(f"{v:.17g}" for v in vals)


def write_cameras(path, named):
    lines = ["# name width height fx fy cx cy r00 r01 r02 r10 r11 r12 r20 r21 r22 tx ty tz"]
    lines += [camera_record(n, c) for n, c in named]
    Path(path).write_text("\n".join(lines) + "\n")


def read_cameras(path):
    out = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].split()
        if not line:
            continue
        name = line[0]
        if len(line) != 19:
            raise BundleError(f"{path}:{lineno}: view {name}: expected 18 numbers, got {len(line) - 1}", name)
        try:
            vals = [float(v) for v in line[1:]]
        except ValueError:
            raise BundleError(f"{path}:{lineno}: view {name}: non-numeric camera field", name) from None
        if not np.isfinite(vals).all():
            raise BundleError(f"view {name}: non-finite camera field", name)
        w, h = int(vals[0]), int(vals[1])
        try:
            cam = Camera(vals[2], vals[3], vals[4], vals[5], np.reshape(vals[6:15], (3, 3)), vals[15:18], w, h)
        except ValueError as exc:
            raise BundleError(f"view {name}: {exc}", name) from None
        out.append((name, cam))
    if not out:
        raise BundleError(f"{path}: no camera records")
    return out


def write_bundle(path, bundle):
    root = Path(path)
    (root / "views").mkdir(parents=True, exist_ok=True)
    write_mesh(root / "mesh.txt", bundle.mesh)
    write_cameras(root / "cameras.txt", [(v.name, v.camera) for v in bundle.views])
    for v in bundle.views:
        write_pfm(root / "views" / f"{v.name}_image.pfm", v.image)
        write_pfm(root / "views" / f"{v.name}_mask.pfm", np.asarray(v.mask, dtype=np.float32))
        if v.landmarks is not None:
            np.savetxt(root / "views" / f"{v.name}_landmarks.txt", v.landmarks, fmt="%.9g")
        if v.albedo is not None:
            write_pfm(root / "views" / f"{v.name}_albedo.pfm", v.albedo)
    return root


def read_bundle(path):
    root = Path(path)
    for name in ("mesh.txt", "cameras.txt"):
        if not (root / name).exists():
            raise BundleError(f"bundle is missing {name}")
    mesh = read_mesh(root / "mesh.txt")
    views = []
    for name, cam in read_cameras(root / "cameras.txt"):
        vdir = root / "views"
        img_path = vdir / f"{name}_image.pfm"
        if not img_path.exists():
            raise BundleError(f"view {name}: missing image", name)
        try:
            image = read_pfm(img_path)
        except FormatError as exc:
            raise BundleError(f"view {name}: {exc}", name) from None
        if image.shape[:2] != (cam.height, cam.width):
            raise BundleError(f"view {name}: image {image.shape[:2]} does not match camera size", name)
        mpath = vdir / f"{name}_mask.pfm"
        mask = read_pfm(mpath) > 0.5 if mpath.exists() else np.ones(image.shape[:2], dtype=bool)
        lpath = vdir / f"{name}_landmarks.txt"
        lm = np.loadtxt(lpath, ndmin=2) if lpath.exists() else None
        apath = vdir / f"{name}_albedo.pfm"
        alb = read_pfm(apath) if apath.exists() else None
        views.append(CameraView(name, cam, image, mask, lm, alb))
    return SceneBundle(mesh, views)
