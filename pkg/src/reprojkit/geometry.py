"""Pinhole camera model, SE(3) poses, and depth-based pixel reprojection.

Conventions used throughout the toolkit:

* Pixel coordinates are ``(x, y)`` with pixel centers at integer
  coordinates; ``x`` runs along image width (columns), ``y`` along height
  (rows). A sub-pixel location is in bounds iff ``0 <= x <= width - 1``
  and ``0 <= y <= height - 1``.
* Camera frame is right-handed with x right, y down, z forward.
* Poses are camera-to-world: ``X_world = R @ X_cam + t``.
* Depth maps store *ray distance* (the Euclidean distance from the
  camera center to the surface along the pixel ray), not z-depth.
  ``ray_distance_to_z`` / ``z_to_ray_distance`` convert between the two.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np
from scipy.ndimage import maximum_filter, minimum_filter

from .errors import BehindCameraError, InvalidDepthError, ShapeError

# Minimum camera-frame z for a point to count as in front of the camera.
MIN_FRONT_Z = 1e-9


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole calibration: focal lengths, principal point, image size."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise ValueError(
                f"principal point ({self.cx}, {self.cy}) outside image "
                f"{self.width}x{self.height}"
            )

    @classmethod
    def from_horizontal_fov(cls, fov_deg: float, width: int, height: int) -> "CameraIntrinsics":
        """Square-pixel intrinsics with the given horizontal field of view."""
        fx = (width / 2.0) / np.tan(np.radians(fov_deg) / 2.0)
        return cls(fx=fx, fy=fx, cx=(width - 1) / 2.0, cy=(height - 1) / 2.0,
                   width=width, height=height)

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx],
                         [0.0, self.fy, self.cy],
                         [0.0, 0.0, 1.0]])

    def pixel_rays(self, points: np.ndarray) -> np.ndarray:
        """Un-normalized camera rays ``K^-1 [x, y, 1]`` for pixels (..., 2)."""
        points = np.asarray(points, dtype=np.float64)
        x = (points[..., 0] - self.cx) / self.fx
        y = (points[..., 1] - self.cy) / self.fy
        return np.stack([x, y, np.ones_like(x)], axis=-1)

    def contains(self, points: np.ndarray, tol: float = 1e-9) -> np.ndarray:
        """True where (..., 2) pixel locations fall inside the image.

        ``tol`` absorbs round-trip noise for landings mathematically on
        the border (a pixel reprojected onto itself can come back at
        -1e-16).
        """
        points = np.asarray(points, dtype=np.float64)
        x, y = points[..., 0], points[..., 1]
        return ((x >= -tol) & (x <= self.width - 1.0 + tol)
                & (y >= -tol) & (y <= self.height - 1.0 + tol))


@dataclass(frozen=True)
class PoseSE3:
    """Camera-to-world rigid transform."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = np.array(self.rotation, dtype=np.float64)
        t = np.array(self.translation, dtype=np.float64).reshape(3)
        if R.shape != (3, 3):
            raise ShapeError(f"rotation must be 3x3, got {R.shape}")
        if not np.allclose(R.T @ R, np.eye(3), atol=1e-9):
            raise ValueError("rotation is not orthonormal within 1e-9")
        if not np.isclose(np.linalg.det(R), 1.0, atol=1e-9):
            raise ValueError("rotation determinant is not +1 within 1e-9")
        R.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "PoseSE3":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> "PoseSE3":
        m = np.asarray(m, dtype=np.float64)
        if m.shape != (4, 4):
            raise ShapeError(f"expected 4x4 matrix, got {m.shape}")
        return cls(m[:3, :3], m[:3, 3])

    @property
    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def world_to_camera(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64)
        return (points - self.translation) @ self.rotation

    def camera_to_world(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64)
        return points @ self.rotation.T + self.translation


def relative_pose(src: PoseSE3, dst: PoseSE3) -> tuple[np.ndarray, np.ndarray]:
    """Rigid map from src camera frame to dst camera frame.

    Returns (R, t) with ``X_dst = R @ X_src + t``.
    """
    R = dst.rotation.T @ src.rotation
    t = dst.rotation.T @ (src.translation - dst.translation)
    return R, t


class DepthMap:
    """Per-pixel ray distances with a validity mask."""

    def __init__(self, values: np.ndarray, valid: np.ndarray | None = None):
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 2:
            raise ShapeError(f"depth values must be 2D, got shape {values.shape}")
        if valid is None:
            valid = np.isfinite(values) & (values > 0.0)
        else:
            valid = np.asarray(valid, dtype=bool)
            if valid.shape != values.shape:
                raise ShapeError("validity mask shape does not match depth values")
            bad = valid & ~(np.isfinite(values) & (values > 0.0))
            if np.any(bad):
                raise InvalidDepthError("valid depth entries must be positive and finite")
        self.values = values
        self.valid = valid

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def at(self, x: int, y: int) -> float:
        """Depth at an integer pixel; raises if invalid there."""
        if not self.valid[y, x]:
            raise InvalidDepthError(f"no valid depth at pixel ({x}, {y})")
        return float(self.values[y, x])


@dataclass(frozen=True)
class ReprojectionParams:
    """Depth-window stabilization settings.

    ``depth_eps`` is the tolerated depth spread in meters; ``window`` the
    odd side of the pixel window searched for the foreground depth.
    ``window=1`` disables the stabilization (the raw per-pixel depth is
    used).
    """

    depth_eps: float = 0.03
    window: int = 5

    def __post_init__(self):
        if not self.depth_eps > 0:
            raise ValueError(f"depth_eps must be positive, got {self.depth_eps}")
        if self.window < 1 or self.window % 2 == 0:
            raise ValueError(f"window must be odd and >= 1, got {self.window}")


class RejectReason(IntEnum):
    """Why a reprojection produced no usable target (0 is reserved for ok)."""

    INVALID_DEPTH = 1
    BEHIND_CAMERA = 2
    OUT_OF_BOUNDS = 3
    OCCLUDED = 4


@dataclass(frozen=True)
class ReprojectionResult:
    """Outcome of reprojecting one pixel into another view."""

    point: np.ndarray | None
    depth: float | None
    reason: RejectReason | None = None

    @property
    def ok(self) -> bool:
        return self.reason is None


@dataclass(frozen=True)
class RenderedView:
    """One synthetic frame: RGB image, ray-distance depth, and camera."""

    image: np.ndarray
    depth: DepthMap
    cam: CameraIntrinsics
    pose: PoseSE3
    index: int = 0

    def __post_init__(self):
        expected = (self.cam.height, self.cam.width)
        if self.image.shape[:2] != expected or self.image.shape[2:] != (3,):
            raise ShapeError(
                f"image shape {self.image.shape} does not match camera {expected} + RGB"
            )
        if self.depth.shape != expected:
            raise ShapeError(
                f"depth shape {self.depth.shape} does not match camera {expected}"
            )


def backproject(p: np.ndarray, d, cam: CameraIntrinsics, pose: PoseSE3) -> np.ndarray:
    """Lift pixel(s) to 3D world points using ray-distance depth.

    The pixel ray ``K^-1 [x, y, 1]`` is normalized to unit length and
    scaled by ``d`` before the camera-to-world transform, so ``d`` is the
    Euclidean distance from the camera center to the returned point.

    Parameters
    ----------
    p : (..., 2) pixel coordinates.
    d : scalar or (...,) ray distances, must be positive and finite.
    """
    d = np.asarray(d, dtype=np.float64)
    if np.any(~np.isfinite(d)) or np.any(d <= 0.0):
        raise InvalidDepthError("ray distance must be positive and finite")
    rays = cam.pixel_rays(p)
    dirs = rays / np.linalg.norm(rays, axis=-1, keepdims=True)
    return pose.camera_to_world(dirs * d[..., None])


def project(P: np.ndarray, cam: CameraIntrinsics, pose: PoseSE3):
    """Project 3D world point(s) into a camera; returns (pixel, camera z).

    Raises BehindCameraError if any point has camera-frame z <= 1e-9.
    """
    P = np.asarray(P, dtype=np.float64)
    if np.any(~np.isfinite(P)):
        raise ValueError("3D points must be finite")
    X = pose.world_to_camera(P)
    z = X[..., 2]
    if np.any(z <= MIN_FRONT_Z):
        raise BehindCameraError("point is behind the camera")
    pix = np.stack([cam.fx * X[..., 0] / z + cam.cx,
                    cam.fy * X[..., 1] / z + cam.cy], axis=-1)
    return pix, z


def ray_distance_to_z(p: np.ndarray, d, cam: CameraIntrinsics):
    """Convert ray distance along the pixel ray of ``p`` into z-depth."""
    rays = cam.pixel_rays(p)
    return np.asarray(d, dtype=np.float64) / np.linalg.norm(rays, axis=-1)


def z_to_ray_distance(p: np.ndarray, z, cam: CameraIntrinsics):
    """Convert z-depth at pixel ``p`` into ray distance."""
    rays = cam.pixel_rays(p)
    return np.asarray(z, dtype=np.float64) * np.linalg.norm(rays, axis=-1)


def robust_depth(p: np.ndarray, depth: DepthMap, params: ReprojectionParams) -> float:
    """Depth-window stabilized ray distance at pixel ``p``.

    Looks at the valid depths inside the ``window x window`` patch
    centered on ``p`` (clipped at image borders). If the center depth is
    valid and the patch spread (max - min) does not exceed ``depth_eps``,
    the center depth is returned; otherwise the patch minimum, which
    keeps edge pixels attached to the foreground surface.
    """
    x, y = (int(v) for v in np.rint(np.asarray(p, dtype=np.float64)))
    h, w = depth.shape
    if not (0 <= x < w and 0 <= y < h):
        raise ValueError(f"pixel ({x}, {y}) outside {w}x{h} depth map")
    r = params.window // 2
    patch = depth.values[max(0, y - r):y + r + 1, max(0, x - r):x + r + 1]
    mask = depth.valid[max(0, y - r):y + r + 1, max(0, x - r):x + r + 1]
    vals = patch[mask]
    if vals.size == 0:
        raise InvalidDepthError(f"no valid depth in window around ({x}, {y})")
    vmin = float(vals.min())
    if depth.valid[y, x] and float(vals.max()) - vmin <= params.depth_eps:
        return float(depth.values[y, x])
    return vmin


def robust_depth_map(depth: DepthMap, params: ReprojectionParams) -> DepthMap:
    """Vectorized ``robust_depth`` over every pixel of a depth map.

    Pixels whose window holds no valid depth are marked invalid instead
    of raising.
    """
    vals = depth.values
    vmin = minimum_filter(np.where(depth.valid, vals, np.inf),
                          size=params.window, mode="constant", cval=np.inf)
    vmax = maximum_filter(np.where(depth.valid, vals, -np.inf),
                          size=params.window, mode="constant", cval=-np.inf)
    any_valid = np.isfinite(vmin)
    uniform = depth.valid & (vmax - vmin <= params.depth_eps)
    out = np.where(uniform, vals, vmin)
    out = np.where(any_valid, out, 0.0)
    return DepthMap(out, any_valid)


def reproject_points(
    points: np.ndarray,
    src: RenderedView,
    dst: RenderedView,
    params: ReprojectionParams,
    *,
    src_robust: DepthMap | None = None,
    dst_robust: DepthMap | None = None,
):
    """Reproject (N, 2) src pixels into dst; the batch core behind reproject.

    Returns ``(targets, depths, reasons)``: (N, 2) dst pixels, (N,) dst
    camera-frame z, and (N,) uint8 reject codes (0 where the target is
    usable, else a RejectReason value). Rejected rows carry NaN targets.

    Precomputed robust depth maps can be passed in to amortize the window
    filters across calls on the same views.
    """
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    n = points.shape[0]
    targets = np.full((n, 2), np.nan)
    depths = np.full(n, np.nan)
    reasons = np.zeros(n, dtype=np.uint8)

    if src_robust is None:
        src_robust = robust_depth_map(src.depth, params)
    if dst_robust is None:
        dst_robust = robust_depth_map(dst.depth, params)

    xi = np.rint(points[:, 0]).astype(int)
    yi = np.rint(points[:, 1]).astype(int)
    if np.any((xi < 0) | (xi >= src.cam.width) | (yi < 0) | (yi >= src.cam.height)):
        raise ValueError("source pixels must lie inside the source image")
    ok = src_robust.valid[yi, xi]
    reasons[~ok] = RejectReason.INVALID_DEPTH
    if not np.any(ok):
        return targets, depths, reasons

    d = src_robust.values[yi[ok], xi[ok]]
    world = backproject(points[ok], d, src.cam, src.pose)
    X = dst.pose.world_to_camera(world)
    z = X[:, 2]

    front = z > MIN_FRONT_Z
    sub = np.flatnonzero(ok)
    reasons[sub[~front]] = RejectReason.BEHIND_CAMERA

    with np.errstate(divide="ignore", invalid="ignore"):
        px = dst.cam.fx * X[:, 0] / z + dst.cam.cx
        py = dst.cam.fy * X[:, 1] / z + dst.cam.cy
    pix = np.stack([px, py], axis=-1)

    inb = front & dst.cam.contains(pix)
    reasons[sub[front & ~inb]] = RejectReason.OUT_OF_BOUNDS
    # occlusion: projected ray distance must agree with dst's robust depth
    ray_dist = np.linalg.norm(X, axis=-1)
    pix_safe = np.where(np.isfinite(pix), pix, 0.0)
    lx = np.rint(pix_safe[:, 0]).astype(int)
    ly = np.rint(pix_safe[:, 1]).astype(int)
    lx = np.clip(lx, 0, dst.cam.width - 1)
    ly = np.clip(ly, 0, dst.cam.height - 1)
    dst_d = dst_robust.values[ly, lx]
    dst_ok = dst_robust.valid[ly, lx]
    occluded = inb & dst_ok & (ray_dist - dst_d > params.depth_eps)
    reasons[sub[occluded]] = RejectReason.OCCLUDED

    accepted = inb & ~occluded
    targets[sub[accepted]] = pix[accepted]
    depths[sub[accepted]] = z[accepted]
    return targets, depths, reasons


def reproject(
    p: np.ndarray,
    src: RenderedView,
    dst: RenderedView,
    params: ReprojectionParams,
) -> ReprojectionResult:
    """Reproject one src pixel into dst through geometry + depth.

    Composes the stabilized depth lookup, back-projection, and projection
    into the destination camera. Out-of-bounds landings, points behind
    the destination camera, missing depth, and occlusion-test failures
    are reported as rejections rather than errors.
    """
    targets, depths, reasons = reproject_points(np.asarray(p, dtype=np.float64)[None, :],
                                                src, dst, params)
    if reasons[0] != 0:
        return ReprojectionResult(None, None, RejectReason(int(reasons[0])))
    return ReprojectionResult(targets[0], float(depths[0]), None)
