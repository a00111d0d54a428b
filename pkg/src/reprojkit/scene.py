"""Deterministic ray-cast renderer for synthetic multi-view RGB-D data.

Scenes are lists of textured primitives (finite planes, axis-aligned
boxes, spheres). One ray is cast through each pixel center; the nearest
hit is shaded with the primitive's procedural texture and its Euclidean
hit distance becomes the depth value. Misses produce the background
color and an invalid depth.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import EmptySceneError, InvalidSpecError
from .geometry import CameraIntrinsics, DepthMap, PoseSE3, RenderedView
from .textures import _as_color, texture_from_dict, texture_to_dict

_EPS = 1e-9


def _unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    n = np.linalg.norm(v)
    if n < 1e-12:
        raise InvalidSpecError("zero-length direction vector")
    return v / n


@dataclass(frozen=True)
class Plane:
    """Finite textured rectangle: origin, unit normal, half extents in meters.

    ``u_axis`` fixes the in-plane texture frame; when omitted an arbitrary
    axis orthogonal to the normal is chosen deterministically.
    """

    origin: tuple
    normal: tuple
    half_u: float
    half_v: float
    texture: int = 0
    u_axis: tuple | None = None

    def __post_init__(self):
        if not (self.half_u > 0 and self.half_v > 0):
            raise InvalidSpecError("plane extents must be positive")
        n = _unit(self.normal)
        if self.u_axis is not None:
            u = _unit(self.u_axis)
            if abs(np.dot(u, n)) > 1e-9:
                raise InvalidSpecError("u_axis must be orthogonal to the plane normal")
        else:
            helper = np.array([0.0, 0.0, 1.0]) if abs(n[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
            u = _unit(np.cross(helper, n))
        object.__setattr__(self, "normal", tuple(n))
        object.__setattr__(self, "u_axis", tuple(u))

    def frame(self):
        n = np.asarray(self.normal)
        u = np.asarray(self.u_axis)
        return n, u, np.cross(n, u)

    def intersect(self, origins: np.ndarray, dirs: np.ndarray):
        n, u_ax, v_ax = self.frame()
        o = np.asarray(self.origin, dtype=np.float64)
        denom = dirs @ n
        facing = np.abs(denom) > 1e-12
        with np.errstate(divide="ignore", invalid="ignore"):
            t = ((o - origins) @ n) / denom
        ts = np.where(facing, t, 0.0)
        rel = origins + dirs * ts[..., None] - o
        u, v = rel @ u_ax, rel @ v_ax
        ok = facing & (ts > _EPS) & (np.abs(u) <= self.half_u) & (np.abs(v) <= self.half_v)
        return np.where(ok, ts, np.inf), np.stack([u, v], axis=-1)


@dataclass(frozen=True)
class Box:
    """Axis-aligned textured box: center and half sizes in meters."""

    center: tuple
    half_size: tuple
    texture: int = 0

    def __post_init__(self):
        hs = np.asarray(self.half_size, dtype=np.float64)
        if hs.shape != (3,) or np.any(hs <= 0):
            raise InvalidSpecError("box half sizes must be 3 positive numbers")

    def intersect(self, origins: np.ndarray, dirs: np.ndarray):
        c = np.asarray(self.center, dtype=np.float64)
        h = np.asarray(self.half_size, dtype=np.float64)
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = (c - h - origins) / dirs
            t2 = (c + h - origins) / dirs
        tmin = np.minimum(t1, t2)
        tmax = np.maximum(t1, t2)
        tnear = np.nanmax(tmin, axis=-1)
        tfar = np.nanmin(tmax, axis=-1)
        t = np.where(tnear > _EPS, tnear, tfar)
        ok = (tnear <= tfar) & (t > _EPS)
        t = np.where(ok, t, np.inf)
        hit = origins + dirs * np.where(ok, t, 0.0)[..., None]
        # texture frame: the two coordinates of the entry face, by slab axis
        axis = np.argmax(np.where(tmin == tnear[..., None], np.abs(dirs), -np.inf), axis=-1)
        axis = np.where(tnear > _EPS, axis,
                        np.argmax(np.where(tmax == tfar[..., None], np.abs(dirs), -np.inf), axis=-1))
        rel = hit - c
        u = np.take_along_axis(rel, ((axis + 1) % 3)[..., None], axis=-1)[..., 0]
        v = np.take_along_axis(rel, ((axis + 2) % 3)[..., None], axis=-1)[..., 0]
        return t, np.stack([u, v], axis=-1)


@dataclass(frozen=True)
class Sphere:
    """Textured sphere: center and radius in meters."""

    center: tuple
    radius: float
    texture: int = 0

    def __post_init__(self):
        if not self.radius > 0:
            raise InvalidSpecError("sphere radius must be positive")

    def intersect(self, origins: np.ndarray, dirs: np.ndarray):
        oc = origins - np.asarray(self.center, dtype=np.float64)
        b = np.sum(oc * dirs, axis=-1)
        c = np.sum(oc * oc, axis=-1) - self.radius**2
        disc = b * b - c
        sq = np.sqrt(np.maximum(disc, 0.0))
        t = np.where(-b - sq > _EPS, -b - sq, -b + sq)
        ok = (disc >= 0.0) & (t > _EPS)
        t = np.where(ok, t, np.inf)
        hit = origins + dirs * np.where(ok, t, 0.0)[..., None] - np.asarray(self.center)
        with np.errstate(invalid="ignore"):
            d = hit / self.radius
            u = np.arctan2(d[..., 1], d[..., 0]) * self.radius
            v = np.arccos(np.clip(d[..., 2], -1.0, 1.0)) * self.radius
        return t, np.stack([u, v], axis=-1)


PRIMITIVE_KINDS = {"plane": Plane, "box": Box, "sphere": Sphere}


@dataclass(frozen=True)
class SceneSpec:
    """Primitives plus the texture palette they index into."""

    primitives: tuple
    textures: tuple
    background: tuple = (0.04, 0.05, 0.08)

    def __post_init__(self):
        if len(self.primitives) == 0:
            raise EmptySceneError("scene needs at least one primitive")
        if len(self.textures) == 0:
            raise InvalidSpecError("scene needs at least one texture")
        _as_color(self.background)
        for p in self.primitives:
            if not 0 <= p.texture < len(self.textures):
                raise InvalidSpecError(f"texture id {p.texture} out of range")
        object.__setattr__(self, "primitives", tuple(self.primitives))
        object.__setattr__(self, "textures", tuple(self.textures))

    def intersect(self, origins: np.ndarray, dirs: np.ndarray):
        """Nearest hit over all primitives: (t, primitive index); miss = inf/-1."""
        ts = np.stack([p.intersect(origins, dirs)[0] for p in self.primitives], axis=0)
        idx = np.argmin(ts, axis=0)
        t = np.take_along_axis(ts, idx[None], axis=0)[0]
        return t, np.where(np.isfinite(t), idx, -1)

    def to_dict(self) -> dict:
        prims = []
        for p in self.primitives:
            if isinstance(p, Plane):
                prims.append({"kind": "plane", "origin": list(p.origin),
                              "normal": list(p.normal), "half_u": p.half_u,
                              "half_v": p.half_v, "u_axis": list(p.u_axis),
                              "texture": p.texture})
            elif isinstance(p, Box):
                prims.append({"kind": "box", "center": list(p.center),
                              "half_size": list(p.half_size), "texture": p.texture})
            elif isinstance(p, Sphere):
                prims.append({"kind": "sphere", "center": list(p.center),
                              "radius": p.radius, "texture": p.texture})
            else:
                raise InvalidSpecError(f"unknown primitive {p!r}")
        return {"background": list(self.background),
                "textures": [texture_to_dict(t) for t in self.textures],
                "primitives": prims}

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        try:
            textures = tuple(texture_from_dict(t) for t in d["textures"])
            prims = []
            for pd in d["primitives"]:
                kind = pd.get("kind")
                if kind not in PRIMITIVE_KINDS:
                    raise InvalidSpecError(f"unknown primitive kind {kind!r}")
                kwargs = {k: tuple(v) if isinstance(v, list) else v
                          for k, v in pd.items() if k != "kind"}
                prims.append(PRIMITIVE_KINDS[kind](**kwargs))
            return cls(tuple(prims), textures, tuple(d.get("background", (0.04, 0.05, 0.08))))
        except (KeyError, TypeError) as e:
            raise InvalidSpecError(f"malformed scene spec: {e}") from e


def look_at(position, target, up=(0.0, 0.0, 1.0)) -> PoseSE3:
    """Camera-to-world pose at ``position`` with +z toward ``target``.

    Camera x points right, y down; ``up`` is the world up reference and
    must not be parallel to the viewing direction.
    """
    position = np.asarray(position, dtype=np.float64)
    f = _unit(np.asarray(target, dtype=np.float64) - position)
    upv = _unit(up)
    if abs(np.dot(f, upv)) > 1.0 - 1e-9:
        raise InvalidSpecError("viewing direction parallel to up vector")
    x = _unit(np.cross(f, upv))
    y = np.cross(f, x)
    return PoseSE3(np.column_stack([x, y, f]), position)


@dataclass(frozen=True)
class TrajectorySpec:
    """Camera path: orbit or line around/past ``center``, look-at oriented.

    ``kind`` is one of ``orbit``, ``line``, ``orbit-with-jitter``. Orbits
    place ``frames`` cameras on a circle of ``radius`` at ``height`` above
    the center, looking at it. Lines sweep laterally past the center at
    standoff ``radius``. Jitter composes each look-at pose with a random
    rotation of at most ``jitter_deg`` degrees (seeded).
    """

    kind: str = "orbit"
    center: tuple = (0.0, 0.0, 0.0)
    radius: float = 2.0
    height: float = 1.0
    frames: int = 50
    jitter_deg: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("orbit", "line", "orbit-with-jitter"):
            raise InvalidSpecError(f"unknown trajectory kind {self.kind!r}")
        if self.frames < 2:
            raise InvalidSpecError("trajectory needs at least 2 frames")
        if not self.radius > 0:
            raise InvalidSpecError("trajectory radius must be positive")
        if self.jitter_deg < 0:
            raise InvalidSpecError("jitter bound must be nonnegative")


def _jitter_rotation(rng: np.random.Generator, max_deg: float) -> np.ndarray:
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    angle = np.radians(rng.uniform(0.0, max_deg))
    return Rotation.from_rotvec(axis * angle).as_matrix()


def generate_trajectory(spec: TrajectorySpec) -> list[PoseSE3]:
    """Deterministic list of ``spec.frames`` look-at poses."""
    center = np.asarray(spec.center, dtype=np.float64)
    rng = np.random.default_rng(spec.seed)
    positions = []
    if spec.kind in ("orbit", "orbit-with-jitter"):
        for k in range(spec.frames):
            a = 2.0 * np.pi * k / spec.frames
            positions.append(center + [spec.radius * np.cos(a),
                                       spec.radius * np.sin(a), spec.height])
    else:
        xs = np.linspace(-spec.radius, spec.radius, spec.frames)
        for x in xs:
            positions.append(center + [x, -spec.radius, spec.height])
    poses = []
    for pos in positions:
        pose = look_at(pos, center)
        if spec.kind == "orbit-with-jitter" and spec.jitter_deg > 0:
            pose = PoseSE3(pose.rotation @ _jitter_rotation(rng, spec.jitter_deg),
                           pose.translation)
        poses.append(pose)
    return poses


def render_view(scene: SceneSpec, cam: CameraIntrinsics, pose: PoseSE3,
                index: int = 0) -> RenderedView:
    """Ray-cast one frame; depth is the Euclidean distance to the hit."""
    xs, ys = np.meshgrid(np.arange(cam.width), np.arange(cam.height))
    pix = np.stack([xs, ys], axis=-1).reshape(-1, 2).astype(np.float64)
    rays = cam.pixel_rays(pix)
    dirs = rays / np.linalg.norm(rays, axis=-1, keepdims=True)
    dirs = dirs @ pose.rotation.T
    origins = np.broadcast_to(pose.translation, dirs.shape)

    ts, uvs = [], []
    for p in scene.primitives:
        t, uv = p.intersect(origins, dirs)
        ts.append(t)
        uvs.append(uv)
    ts = np.stack(ts, axis=0)
    nearest = np.argmin(ts, axis=0)
    t = np.take_along_axis(ts, nearest[None], axis=0)[0]
    valid = np.isfinite(t)

    color = np.broadcast_to(_as_color(scene.background), (pix.shape[0], 3)).copy()
    for i, prim in enumerate(scene.primitives):
        mask = valid & (nearest == i)
        if not mask.any():
            continue
        uv = uvs[i][mask]
        color[mask] = scene.textures[prim.texture].sample(uv[:, 0], uv[:, 1])

    image = np.clip(np.rint(color * 255.0), 0, 255).astype(np.uint8)
    image = image.reshape(cam.height, cam.width, 3)
    depth_vals = np.where(valid, t, 0.0).reshape(cam.height, cam.width)
    depth = DepthMap(depth_vals, valid.reshape(cam.height, cam.width))
    return RenderedView(image, depth, cam, pose, index)
