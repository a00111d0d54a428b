"""Shared fixtures-in-code for the test suite: analytic views and poses."""

import numpy as np
from scipy.spatial.transform import Rotation

from reprojkit.geometry import CameraIntrinsics, DepthMap, PoseSE3, RenderedView


def rotation(axis, deg):
    axis = np.asarray(axis, dtype=np.float64)
    return Rotation.from_rotvec(axis / np.linalg.norm(axis) * np.radians(deg)).as_matrix()


def plane_depth(cam, pose, plane_z):
    """Analytic ray-distance map for the horizontal plane z = plane_z.

    Independent of the renderer: intersects each pixel ray with the plane
    directly. Pixels whose ray misses (parallel or hits behind) are invalid.
    """
    xs, ys = np.meshgrid(np.arange(cam.width), np.arange(cam.height))
    pts = np.stack([xs, ys], axis=-1).reshape(-1, 2).astype(np.float64)
    rays = cam.pixel_rays(pts)
    dirs = rays / np.linalg.norm(rays, axis=-1, keepdims=True)
    dirs_w = dirs @ pose.rotation.T
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (plane_z - pose.translation[2]) / dirs_w[:, 2]
    valid = np.isfinite(t) & (t > 1e-9)
    vals = np.where(valid, t, 0.0)
    return DepthMap(vals.reshape(cam.height, cam.width),
                    valid.reshape(cam.height, cam.width))


def flat_view(cam, pose, plane_z, index=0):
    """RenderedView of a blank image over an analytic plane-depth map."""
    img = np.zeros((cam.height, cam.width, 3), dtype=np.uint8)
    return RenderedView(img, plane_depth(cam, pose, plane_z), cam, pose, index)


def random_pose(rng, t_scale=2.0):
    R = Rotation.random(random_state=np.random.RandomState(rng.integers(2**31))).as_matrix()
    return PoseSE3(R, rng.uniform(-t_scale, t_scale, 3))


def default_cam(width=301, height=201, f=100.0):
    return CameraIntrinsics(fx=f, fy=f, cx=(width - 1) / 2.0, cy=(height - 1) / 2.0,
                            width=width, height=height)
