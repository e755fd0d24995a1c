"""Randomized pillar-forest worlds: generation, analytic signed distance,
collision queries, pinhole depth rendering, and file formats.

Pillars are vertical cylinders treated as infinitely tall within the flight
altitude band, so the signed distance is purely horizontal and analytic.
Depth images store z-depth (distance along the camera forward axis), not
ray length, with max_range both capping hits and marking no-hit pixels.
"""

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .trajectory import Pose

MAX_RANGE = 20.0
PILLAR_R_MIN = 0.25
PILLAR_R_MAX = 0.5
MIN_GAP = 1.2          # m of clearance required between pillar surfaces
CLEAR_DISC = 2.0       # m pillar-free radius around start and goal
PLACEMENT_ATTEMPTS = 100000


@dataclass
class PillarWorld:
    """Immutable after generation; pillars is an (n, 3) array of rows
    (center x, center y, radius)."""

    bounds: tuple           # (xmin, xmax, ymin, ymax) m
    pillars: np.ndarray     # (n, 3)
    seed: int
    density: float          # pillars / m^2
    start: np.ndarray = field(default_factory=lambda: np.array([-18.0, 0.0, 1.5]))
    goal: np.ndarray = field(default_factory=lambda: np.array([18.0, 0.0, 1.5]))


DEFAULT_BOUNDS = (-20.0, 20.0, -10.0, 10.0)


def generate_world(seed, density, bounds=DEFAULT_BOUNDS, start=None, goal=None):
    """Seeded rejection sampling of round(density * area) pillars.

    Every pillar keeps at least MIN_GAP m of surface separation from every
    other and stays out of the CLEAR_DISC discs around start and goal.
    Deterministic per (seed, density, bounds, start, goal).
    """
    xmin, xmax, ymin, ymax = bounds
    area = (xmax - xmin) * (ymax - ymin)
    if area <= 0:
        raise ValueError(f"bounds {bounds} enclose no area")
    if density < 0:
        raise ValueError("density must be nonnegative")
    start = np.array([-18.0, 0.0, 1.5]) if start is None else np.asarray(start, dtype=float)
    goal = np.array([18.0, 0.0, 1.5]) if goal is None else np.asarray(goal, dtype=float)

    count = int(round(density * area))
    rng = np.random.default_rng(seed)
    placed = []
    attempts = 0
    while len(placed) < count:
        attempts += 1
        if attempts > PLACEMENT_ATTEMPTS:
            raise RuntimeError(
                f"could not place {count} pillars in {PLACEMENT_ATTEMPTS} attempts; "
                "density too high for the separation constraints")
        x = rng.uniform(xmin, xmax)
        y = rng.uniform(ymin, ymax)
        r = rng.uniform(PILLAR_R_MIN, PILLAR_R_MAX)
        if np.hypot(x - start[0], y - start[1]) < CLEAR_DISC + r:
            continue
        if np.hypot(x - goal[0], y - goal[1]) < CLEAR_DISC + r:
            continue
        ok = True
        for px, py, pr in placed:
            if np.hypot(x - px, y - py) < r + pr + MIN_GAP:
                ok = False
                break
        if ok:
            placed.append((x, y, r))

    pillars = np.array(placed, dtype=float).reshape(len(placed), 3)
    return PillarWorld(bounds=tuple(float(b) for b in bounds), pillars=pillars,
                       seed=int(seed), density=float(density),
                       start=start, goal=goal)


def signed_distance(world, point):
    """Horizontal distance to the nearest pillar surface, negative inside,
    capped at +MAX_RANGE; the cap is also the empty-world value."""
    if len(world.pillars) == 0:
        return MAX_RANGE
    p = np.asarray(point, dtype=float)
    d = np.hypot(world.pillars[:, 0] - p[0], world.pillars[:, 1] - p[1]) - world.pillars[:, 2]
    return float(min(d.min(), MAX_RANGE))


def signed_distance_many(world, points):
    """Vectorized signed_distance over an (n, 3) array; returns (n,)."""
    pts = np.asarray(points, dtype=float)
    if len(world.pillars) == 0:
        return np.full(len(pts), MAX_RANGE)
    dx = pts[:, 0:1] - world.pillars[None, :, 0]
    dy = pts[:, 1:2] - world.pillars[None, :, 1]
    d = np.hypot(dx, dy) - world.pillars[None, :, 2]
    return np.minimum(d.min(axis=1), MAX_RANGE)


def collision(world, point, vehicle_radius):
    """True iff the vehicle disc overlaps a pillar (strict inequality, so
    exact tangency does not count)."""
    return signed_distance(world, point) < vehicle_radius


def inflated(world, margin):
    """Copy of the world with every pillar radius grown by margin meters.

    Planning evaluates candidates against this configuration-space view so
    clearance targets account for the vehicle body plus a safety buffer;
    collision checks and safety metrics always use the true geometry.
    """
    pillars = world.pillars.copy()
    if len(pillars):
        pillars[:, 2] = pillars[:, 2] + margin
    return PillarWorld(bounds=world.bounds, pillars=pillars, seed=world.seed,
                       density=world.density, start=world.start.copy(),
                       goal=world.goal.copy())


@dataclass(frozen=True)
class CameraModel:
    """Pinhole depth camera; principal point at the image center, focal
    lengths from the field of view."""

    width: int = 160
    height: int = 96
    hfov: float = np.deg2rad(87.0)
    vfov: float = np.deg2rad(58.0)
    max_range: float = MAX_RANGE

    @property
    def fx(self):
        return (self.width / 2.0) / np.tan(self.hfov / 2.0)

    @property
    def fy(self):
        return (self.height / 2.0) / np.tan(self.vfov / 2.0)

    @property
    def cx(self):
        return self.width / 2.0

    @property
    def cy(self):
        return self.height / 2.0


def ray_directions_body(camera):
    """Unnormalized ray directions in the camera body frame (x forward,
    y left, z up), one per pixel, shape (H, W, 3) with x component 1.

    Integer pixel coordinates are used, so the pixel at (cx, cy) looks
    exactly along the forward axis. With the x component fixed at 1, the
    ray parameter equals z-depth directly.
    """
    u = np.arange(camera.width, dtype=float)
    v = np.arange(camera.height, dtype=float)
    dir_y = -(u - camera.cx) / camera.fx   # image right is body -y
    dir_z = -(v - camera.cy) / camera.fy   # image down is body -z
    dirs = np.empty((camera.height, camera.width, 3))
    dirs[:, :, 0] = 1.0
    dirs[:, :, 1] = dir_y[None, :]
    dirs[:, :, 2] = dir_z[:, None]
    return dirs


def render_depth(world, pose, camera=None):
    """Cast one ray per pixel and intersect with every pillar.

    Returns an (H, W) float64 z-depth image in meters. The quadratic is in
    the ray parameter s of P(s) = origin + s * d where d has unit forward
    component after yaw rotation, so s is the z-depth of the hit. Ground
    and ceiling are not rendered.
    """
    camera = camera or CameraModel()
    dirs = ray_directions_body(camera)
    c, s = np.cos(pose.yaw), np.sin(pose.yaw)
    # world-frame horizontal components of each ray
    dx = c * dirs[:, :, 0] - s * dirs[:, :, 1]
    dy = s * dirs[:, :, 0] + c * dirs[:, :, 1]
    ox, oy = pose.position[0], pose.position[1]

    depth = np.full((camera.height, camera.width), camera.max_range)
    a = dx * dx + dy * dy
    for px, py, pr in world.pillars:
        fx_, fy_ = ox - px, oy - py
        b = 2.0 * (dx * fx_ + dy * fy_)
        cc = fx_ * fx_ + fy_ * fy_ - pr * pr
        disc = b * b - 4.0 * a * cc
        hit = disc >= 0.0
        sq = np.sqrt(np.where(hit, disc, 0.0))
        s0 = (-b - sq) / (2.0 * a)
        s1 = (-b + sq) / (2.0 * a)
        # nearest strictly positive root
        s_near = np.where(s0 > 1e-9, s0, np.where(s1 > 1e-9, s1, np.inf))
        s_near = np.where(hit, s_near, np.inf)
        depth = np.minimum(depth, s_near)

    return np.minimum(depth, camera.max_range)


def sphere_trace_depths(world, pose, camera, pixels_vu, eps=1e-6, max_steps=100000):
    """Reference z-depths for selected pixels by sphere tracing.

    Each ray advances by the signed distance at its current point, so it can
    neither cross a surface nor stall short of one; a ray finishes when the
    signed distance drops below eps (hit) or it leaves max_range (miss).
    Uses only signed_distance_many, no ray-surface algebra, which makes it
    an independent check of render_depth.

    pixels_vu is an (n, 2) integer array of (row, col); returns (n,) depths.
    """
    pixels_vu = np.asarray(pixels_vu)
    dirs = ray_directions_body(camera)[pixels_vu[:, 0], pixels_vu[:, 1]]
    rot = pose.rotation()
    d_world = dirs @ rot.T
    scale = np.linalg.norm(d_world, axis=1)   # arc length per unit z-depth
    d_unit = d_world / scale[:, None]

    n = len(pixels_vu)
    t = np.zeros(n)                           # arc length traveled
    limit = camera.max_range * scale
    active = np.ones(n, dtype=bool)
    hit = np.zeros(n, dtype=bool)
    for _ in range(max_steps):
        if not active.any():
            break
        pts = pose.position[None, :] + t[active, None] * d_unit[active]
        sd = signed_distance_many(world, pts)
        idx = np.flatnonzero(active)
        finished = sd < eps
        hit[idx[finished]] = True
        t[idx] += np.maximum(sd, 0.0)
        out = t[idx] > limit[idx]
        active[idx[finished | out]] = False

    depth = np.where(hit, t / scale, camera.max_range)
    return np.minimum(depth, camera.max_range)


# ---- file formats ----

def _fmt(x):
    return f"{float(x):.9g}"


def save_world(world, path):
    """Structured-text world file; 9-significant-digit numbers so that
    write -> read -> write is byte-identical."""
    xmin, xmax, ymin, ymax = world.bounds
    lines = [
        "{",
        '  "version": 1,',
        f'  "seed": {world.seed},',
        f'  "density": {_fmt(world.density)},',
        f'  "bounds": {{"xmin": {_fmt(xmin)}, "xmax": {_fmt(xmax)}, '
        f'"ymin": {_fmt(ymin)}, "ymax": {_fmt(ymax)}}},',
        f'  "start": [{_fmt(world.start[0])}, {_fmt(world.start[1])}, {_fmt(world.start[2])}],',
        f'  "goal": [{_fmt(world.goal[0])}, {_fmt(world.goal[1])}, {_fmt(world.goal[2])}],',
        '  "pillars": [',
    ]
    rows = [f'    {{"x": {_fmt(x)}, "y": {_fmt(y)}, "r": {_fmt(r)}}}'
            for x, y, r in world.pillars]
    if rows:
        lines.append(",\n".join(rows))
    lines += ["  ]", "}", ""]
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines))


def load_world(path):
    with open(path, encoding="utf-8") as f:
        doc = json.load(f)
    if doc.get("version") != 1:
        raise ValueError(f"{path}: unsupported world file version {doc.get('version')}")
    b = doc["bounds"]
    pillars = np.array([[p["x"], p["y"], p["r"]] for p in doc["pillars"]], dtype=float)
    return PillarWorld(
        bounds=(b["xmin"], b["xmax"], b["ymin"], b["ymax"]),
        pillars=pillars.reshape(len(doc["pillars"]), 3),
        seed=int(doc["seed"]),
        density=float(doc["density"]),
        start=np.asarray(doc["start"], dtype=float),
        goal=np.asarray(doc["goal"], dtype=float),
    )


DEPTH_MAGIC = b"SDPT"


def save_depth(depth, path, max_range=MAX_RANGE):
    """Little-endian binary: magic, u32 H, u32 W, f32 max_range, H*W f32
    row-major z-depth meters."""
    depth = np.asarray(depth)
    h, w = depth.shape
    with open(path, "wb") as f:
        f.write(DEPTH_MAGIC)
        f.write(struct.pack("<IIf", h, w, max_range))
        f.write(np.ascontiguousarray(depth, dtype="<f4").tobytes())


def load_depth(path):
    """Returns (depth (H, W) float64, max_range)."""
    with open(path, "rb") as f:
        data = f.read()
    return decode_depth(data)


def decode_depth(data):
    if data[:4] != DEPTH_MAGIC:
        raise ValueError(f"bad depth magic {data[:4]!r}")
    h, w, max_range = struct.unpack_from("<IIf", data, 4)
    pixels = np.frombuffer(data, dtype="<f4", count=h * w, offset=16)
    return pixels.astype(np.float64).reshape(h, w), float(max_range)


def encode_depth(depth, max_range=MAX_RANGE):
    depth = np.asarray(depth)
    h, w = depth.shape
    return (DEPTH_MAGIC + struct.pack("<IIf", h, w, max_range)
            + np.ascontiguousarray(depth, dtype="<f4").tobytes())
