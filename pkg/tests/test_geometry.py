import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import ndimage

from delightcap.geometry import (Camera, Mesh, bilinear, rasterize, rasterize_mesh, sample_texture,
                                 uv_texel_centers, vertex_normals)


def brute_force_raster(xy, z, faces, h, w):
    """Per-pixel loop over every triangle: nearest covering triangle and its depth."""
    tri = np.full((h, w), -1)
    depth = np.full((h, w), np.inf)
    for py in range(h):
        for px in range(w):
            for f, (a, b, c) in enumerate(faces):
                m = np.array([[xy[a, 0] - xy[c, 0], xy[b, 0] - xy[c, 0]],
                              [xy[a, 1] - xy[c, 1], xy[b, 1] - xy[c, 1]]])
                if abs(np.linalg.det(m)) < 1e-12:
                    continue
                l0, l1 = np.linalg.solve(m, [px - xy[c, 0], py - xy[c, 1]])
                ls = np.array([l0, l1, 1 - l0 - l1])
                if (ls < -1e-9).any():
                    continue
                d = 1.0 / (ls / z[[a, b, c]]).sum()
                if d < depth[py, px]:
                    depth[py, px], tri[py, px] = d, f
    return tri, depth


def test_rasterizer_matches_brute_force():
    rng = np.random.default_rng(3)
    xy = rng.uniform(-2, 14, (12, 2))
    z = rng.uniform(1, 5, 12)
    faces = rng.integers(0, 12, (8, 3))
    faces = faces[(faces[:, 0] != faces[:, 1]) & (faces[:, 1] != faces[:, 2]) & (faces[:, 0] != faces[:, 2])]
    frags = rasterize(xy, z, faces, 12, 12)
    tri, depth = brute_force_raster(xy, z, faces, 12, 12)
    covered = tri >= 0
    np.testing.assert_array_equal(frags.coverage, covered)
    np.testing.assert_allclose(frags.depth[covered], depth[covered], rtol=1e-9)


def test_perspective_correct_barycentrics_recover_3d_points():
    cam = Camera.look_at([0.3, 0.2, 3.0], [0, 0, 0], 32, 24, 30.0)
    p = np.array([[-1.0, -1.0, 0.0], [1.5, -0.8, -1.0], [0.0, 1.2, 0.5]])
    xy, z = cam.project(p)
    frags = rasterize(xy, z, np.array([[0, 1, 2]]), 24, 32)
    pos = frags.interpolate(p)[frags.coverage]
    # every interpolated point lies on the triangle's plane and projects to its own pixel centre
    nrm = np.cross(p[1] - p[0], p[2] - p[0])
    np.testing.assert_allclose((pos - p[0]) @ nrm, 0, atol=1e-9)
    ys, xs = np.nonzero(frags.coverage)
    pxy, _ = cam.project(pos)
    np.testing.assert_allclose(pxy, np.stack([xs, ys], 1), atol=1e-9)


def test_camera_rejects_non_orthonormal_rotation():
    with pytest.raises(ValueError, match="orthonormal"):
        Camera(10, 10, 5, 5, np.diag([1.0, 1.0, 1.1]), np.zeros(3), 10, 10)
    with pytest.raises(ValueError, match="orthonormal"):
        Camera(10, 10, 5, 5, np.diag([1.0, 1.0, -1.0]), np.zeros(3), 10, 10)


def test_look_at_centre_and_rays():
    cam = Camera.look_at([0, 0, 4], [0, 0, 0], 9, 9, 10.0)
    np.testing.assert_allclose(cam.center, [0, 0, 4], atol=1e-12)
    xy, z = cam.project(np.zeros(3))
    np.testing.assert_allclose(xy, [4, 4], atol=1e-12)
    assert z == pytest.approx(4)
    rays = cam.pixel_rays()
    np.testing.assert_allclose(rays[4, 4], [0, 0, -1], atol=1e-12)
    # +y world is up, so it projects above the centre (smaller row)
    assert cam.project(np.array([0, 1.0, 0]))[0][1] < 4


def test_mesh_validation():
    p = np.eye(3)
    n = np.tile([0, 0, 1.0], (3, 1))
    with pytest.raises(ValueError, match="uvs"):
        Mesh(p, n, np.array([[0, 0], [1.2, 0], [0, 1]]), np.array([[0, 1, 2]]))
    with pytest.raises(ValueError, match="unit"):
        Mesh(p, 2 * n, np.zeros((3, 2)), np.array([[0, 1, 2]]))
    with pytest.raises(ValueError, match="range"):
        Mesh(p, n, np.zeros((3, 2)), np.array([[0, 1, 3]]))


def test_vertex_normals_of_flat_patch():
    p = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0.0]])
    n = vertex_normals(p, np.array([[0, 1, 2], [1, 3, 2]]))
    np.testing.assert_allclose(n, np.tile([0, 0, 1.0], (4, 1)))


@given(st.floats(-2, 9), st.floats(-2, 6))
def test_bilinear_matches_scipy(x, y):
    img = np.arange(40, dtype=float).reshape(5, 8) ** 1.5
    ref = ndimage.map_coordinates(img, [[y], [x]], order=1, mode="nearest")[0]
    assert bilinear(img, x, y) == pytest.approx(ref, rel=1e-12, abs=1e-12)


def test_sample_texture_at_texel_centres_is_exact():
    tex = np.random.default_rng(0).random((6, 6, 3))
    np.testing.assert_allclose(sample_texture(tex, uv_texel_centers(6)), tex, atol=1e-12)


def test_rasterize_mesh_near_plane_cull():
    cam = Camera.look_at([0, 0, 1], [0, 0, 0], 16, 16, 10.0)
    p = np.array([[-1, -1, 2.0], [1, -1, 2.0], [0, 1, 2.0]])  # behind the camera
    m = Mesh(p, np.tile([0, 0, 1.0], (3, 1)), np.zeros((3, 2)), np.array([[0, 1, 2]]))
    assert not rasterize_mesh(m, cam).coverage.any()
