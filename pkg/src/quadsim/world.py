"""Analytic obstacle scenes, pinhole depth ray casting, and depth noise.

Scenes are lists of spheres, yaw-oriented boxes, and vertical cylinders;
moving primitives are ballistic.  Depth images are row-major float32
arrays in meters clamped to [near, max_range]; misses encode as
max_range so the minimum-depth scalar stays meaningful.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from .quat import rotate_vec

DEPTH_MAGIC = b"QDPT"

SPHERE = "sphere"
BOX = "box"
CYLINDER = "cylinder"


@dataclass
class Primitive:
    kind: str
    center: np.ndarray
    radius: float = 0.0             # sphere, cylinder
    half_extents: np.ndarray = None  # box
    yaw: float = 0.0                # box
    height: float = 0.0             # cylinder
    velocity: np.ndarray = None     # moving bodies integrate ballistically

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float)
        if self.half_extents is not None:
            self.half_extents = np.asarray(self.half_extents, dtype=float)
            if np.any(self.half_extents <= 0):
                raise ValueError("box half_extents must be positive")
        if self.velocity is not None:
            self.velocity = np.asarray(self.velocity, dtype=float)
        if self.kind == SPHERE and self.radius <= 0:
            raise ValueError("sphere radius must be positive")
        if self.kind == CYLINDER and (self.radius <= 0 or self.height <= 0):
            raise ValueError("cylinder radius and height must be positive")
        if self.kind == BOX and self.half_extents is None:
            raise ValueError("box needs half_extents")
        if self.kind not in (SPHERE, BOX, CYLINDER):
            raise ValueError(f"unknown primitive kind {self.kind!r}")

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "center": self.center.tolist()}
        if self.kind in (SPHERE, CYLINDER):
            d["radius"] = self.radius
        if self.kind == CYLINDER:
            d["height"] = self.height
        if self.kind == BOX:
            d["half_extents"] = self.half_extents.tolist()
            d["yaw"] = self.yaw
        if self.velocity is not None:
            d["velocity"] = self.velocity.tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Primitive":
        return cls(
            kind=d["kind"],
            center=np.asarray(d["center"], dtype=float),
            radius=d.get("radius", 0.0),
            half_extents=np.asarray(d["half_extents"], dtype=float)
            if "half_extents" in d
            else None,
            yaw=d.get("yaw", 0.0),
            height=d.get("height", 0.0),
            velocity=np.asarray(d["velocity"], dtype=float)
            if "velocity" in d
            else None,
        )


@dataclass
class Scene:
    primitives: list = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(
            {"primitives": [p.to_dict() for p in self.primitives]}, indent=2
        )

    @classmethod
    def from_json(cls, text: str) -> "Scene":
        data = json.loads(text)
        return cls([Primitive.from_dict(d) for d in data["primitives"]])

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path) -> "Scene":
        with open(path) as fh:
            return cls.from_json(fh.read())


def advance_scene(scene: Scene, dt: float, gravity: float = 9.81) -> Scene:
    """Ballistic update of moving primitives; statics pass through unchanged."""
    out = []
    g = np.array([0.0, 0.0, -gravity])
    for p in scene.primitives:
        if p.velocity is None:
            out.append(p)
        else:
            out.append(
                replace(p, center=p.center + p.velocity * dt, velocity=p.velocity + g * dt)
            )
    return Scene(out)


@dataclass
class CameraModel:
    width: int = 212
    height: int = 120
    hfov: float = np.deg2rad(87.0)
    vfov: float = np.deg2rad(58.0)
    max_range: float = 4.5
    near: float = 0.05
    mount_pos: np.ndarray = field(default_factory=lambda: np.zeros(3))
    mount_quat: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))

    def __post_init__(self):
        self.mount_pos = np.asarray(self.mount_pos, dtype=float)
        self.mount_quat = np.asarray(self.mount_quat, dtype=float)
        if not 0.0 < self.near < self.max_range:
            raise ValueError("need 0 < near < max_range")
        if not (0.0 < self.hfov < np.pi and 0.0 < self.vfov < np.pi):
            raise ValueError("fov must be in (0, pi)")
        self._dirs = None

    def ray_directions(self) -> np.ndarray:
        """Unit ray directions in the camera's forward-left-up frame, (H*W, 3)."""
        if self._dirs is None:
            fx = (self.width / 2.0) / np.tan(self.hfov / 2.0)
            fy = (self.height / 2.0) / np.tan(self.vfov / 2.0)
            cols = (np.arange(self.width) + 0.5 - self.width / 2.0) / fx
            rows = (np.arange(self.height) + 0.5 - self.height / 2.0) / fy
            u, v = np.meshgrid(cols, rows)
            d = np.stack([np.ones_like(u), -u, -v], axis=-1)
            d /= np.linalg.norm(d, axis=-1, keepdims=True)
            self._dirs = d.reshape(-1, 3)
        return self._dirs


def _hit_sphere(origin, dirs, prim: Primitive) -> np.ndarray:
    oc = origin - prim.center
    b = dirs @ oc
    c = oc @ oc - prim.radius**2
    disc = b * b - c
    t = np.full(dirs.shape[0], np.inf)
    ok = disc >= 0.0
    root = np.sqrt(np.maximum(disc, 0.0))
    t_near = -b - root
    t_far = -b + root
    t_hit = np.where(t_near >= 0.0, t_near, t_far)
    valid = ok & (t_hit >= 0.0)
    t[valid] = t_hit[valid]
    return t


def _hit_cylinder(origin, dirs, prim: Primitive) -> np.ndarray:
    z0 = prim.center[2] - prim.height / 2.0
    z1 = prim.center[2] + prim.height / 2.0
    oc = origin[:2] - prim.center[:2]
    dxy = dirs[:, :2]
    a = (dxy**2).sum(axis=-1)
    b = dxy @ oc
    c = oc @ oc - prim.radius**2
    t = np.full(dirs.shape[0], np.inf)

    disc = b * b - a * c
    a_safe = np.where(a < 1e-12, 1.0, a)
    root = np.sqrt(np.maximum(disc, 0.0))
    for t_side in ((-b - root) / a_safe, (-b + root) / a_safe):
        z = origin[2] + t_side * dirs[:, 2]
        valid = (disc >= 0.0) & (a >= 1e-12) & (t_side >= 0.0) & (z >= z0) & (z <= z1)
        t = np.where(valid & (t_side < t), t_side, t)

    dz = np.where(np.abs(dirs[:, 2]) < 1e-12, 1e-12, dirs[:, 2])
    for z_cap in (z0, z1):
        t_cap = (z_cap - origin[2]) / dz
        xy = origin[:2] + t_cap[:, None] * dxy
        inside = ((xy - prim.center[:2]) ** 2).sum(axis=-1) <= prim.radius**2
        valid = (t_cap >= 0.0) & inside
        t = np.where(valid & (t_cap < t), t_cap, t)
    return t


def _hit_box(origin, dirs, prim: Primitive) -> np.ndarray:
    c, s = np.cos(-prim.yaw), np.sin(-prim.yaw)
    rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    o = rot @ (origin - prim.center)
    d = dirs @ rot.T
    d_safe = np.where(np.abs(d) < 1e-12, 1e-12, d)
    t1 = (-prim.half_extents - o) / d_safe
    t2 = (prim.half_extents - o) / d_safe
    t_near = np.minimum(t1, t2).max(axis=-1)
    t_far = np.maximum(t1, t2).min(axis=-1)
    hit = (t_near <= t_far) & (t_far >= 0.0)
    t_hit = np.where(t_near >= 0.0, t_near, t_far)
    return np.where(hit, t_hit, np.inf)


_HIT = {SPHERE: _hit_sphere, CYLINDER: _hit_cylinder, BOX: _hit_box}


def raycast(scene: Scene, cam_pos, cam_quat, camera: CameraModel) -> np.ndarray:
    """Depth image (H, W) float32: nearest hit distance along each ray.

    Misses and hits beyond max_range clamp to max_range; hits closer than
    `near` clamp to near.
    """
    origin = np.asarray(cam_pos, dtype=float)
    dirs = rotate_vec(np.asarray(cam_quat, dtype=float), camera.ray_directions())
    t = np.full(dirs.shape[0], np.inf)
    for prim in scene.primitives:
        t = np.minimum(t, _HIT[prim.kind](origin, dirs, prim))
    depth = np.clip(t, camera.near, camera.max_range)
    return depth.reshape(camera.height, camera.width).astype(np.float32)


def min_depth(img: np.ndarray) -> float:
    """Minimum-depth scalar used as the obstacle-distance proxy."""
    return float(np.min(img))


def _box_blur3(img: np.ndarray) -> np.ndarray:
    p = np.pad(img, 1, mode="edge")
    out = np.zeros_like(img, dtype=float)
    for dr in range(3):
        for dc in range(3):
            out += p[dr : dr + img.shape[0], dc : dc + img.shape[1]]
    return out / 9.0


@dataclass
class DepthDrParams:
    sigma_mult: float = 0.0       # multiplicative noise scale
    sigma_add: float = 0.0        # m, additive Gaussian
    blur: bool = False            # 3x3 box blur
    scale_range: tuple = (1.0, 1.0)
    offset_range: tuple = (0.0, 0.0)


def dr_depth(
    img: np.ndarray,
    rng: np.random.Generator,
    params: DepthDrParams,
    near: float = 0.05,
    max_range: float = 4.5,
) -> np.ndarray:
    """Sensor-noise randomization: per-pixel noise, blur, global scale/offset."""
    out = np.asarray(img, dtype=float)
    if params.sigma_mult > 0.0:
        out = out * (1.0 + rng.normal(0.0, params.sigma_mult, size=out.shape))
    if params.sigma_add > 0.0:
        out = out + rng.normal(0.0, params.sigma_add, size=out.shape)
    if params.blur:
        out = _box_blur3(out)
    scale = rng.uniform(*params.scale_range)
    offset = rng.uniform(*params.offset_range)
    out = out * scale + offset
    return np.clip(out, near, max_range).astype(np.float32)


def scene_forest(
    rng: np.random.Generator,
    n_trunks: int,
    bounds,
    radius_range=(0.1, 0.3),
    min_clearance: float = 1.0,
    keep_clear=(),
    trunk_height: float = 6.0,
    max_tries: int = 200,
) -> Scene:
    """Random cluster of vertical trunks with pairwise and keep-out clearance.

    `bounds` is ((x_lo, y_lo), (x_hi, y_hi)); `keep_clear` holds (xy, radius)
    pairs (start and goal cells) that stay free.
    """
    (x_lo, y_lo), (x_hi, y_hi) = bounds
    centers = []
    prims = []
    for _ in range(n_trunks):
        for _ in range(max_tries):
            xy = rng.uniform((x_lo, y_lo), (x_hi, y_hi))
            if any(np.linalg.norm(xy - c) < min_clearance for c in centers):
                continue
            if any(
                np.linalg.norm(xy - np.asarray(p)[:2]) < min_clearance + r
                for p, r in keep_clear
            ):
                continue
            radius = rng.uniform(*radius_range)
            centers.append(xy)
            prims.append(
                Primitive(
                    kind=CYLINDER,
                    center=np.array([xy[0], xy[1], trunk_height / 2.0]),
                    radius=float(radius),
                    height=trunk_height,
                )
            )
            break
    return Scene(prims)


# ---------------------------------------------------------------------------
# raw depth dump: magic, u32 width, u32 height (little-endian), f32 pixels


def write_depth(path, img: np.ndarray) -> None:
    img = np.asarray(img, dtype=np.float32)
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(DEPTH_MAGIC)
        fh.write(struct.pack("<II", w, h))
        fh.write(img.astype("<f4").tobytes(order="C"))


def read_depth(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != DEPTH_MAGIC:
            raise ValueError("not a depth dump")
        w, h = struct.unpack("<II", fh.read(8))
        data = np.frombuffer(fh.read(4 * w * h), dtype="<f4")
    return data.reshape(h, w)
