"""Synthetic laser scenes rendered by exact ray casting.

A scene is a rectangular room with optional interior walls and static clutter
(pillars and boxes).  Every frame of a scene re-places the mobility aids, which
are modelled as rings of circular posts: wheelchairs have four thick posts,
walkers two thin ones.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dataio import AnnotatedFrame, Annotation, Klass
from .geometry import Scan, SensorConfig, beam_angles


@dataclass(frozen=True)
class ObjectShape:
    leg_count: int
    leg_radius: float
    footprint: float  # diameter of the circle the posts sit on

    def __post_init__(self):
        if self.leg_count < 1 or self.leg_radius <= 0 or self.footprint <= 0:
            raise ValueError(f"invalid object shape {self}")

    @property
    def radius(self) -> float:
        return self.footprint / 2 + self.leg_radius


WHEELCHAIR_SHAPE = ObjectShape(leg_count=4, leg_radius=0.06, footprint=0.8)
WALKER_SHAPE = ObjectShape(leg_count=2, leg_radius=0.04, footprint=0.5)


@dataclass(frozen=True)
class SyntheticSceneConfig:
    num_scans: int = 100
    scans_per_scene: int = 20
    objects_per_scan: tuple = (0, 3)
    walker_fraction: float = 0.5
    object_range: tuple = (1.0, 8.0)
    wheelchair: ObjectShape = WHEELCHAIR_SHAPE
    walker: ObjectShape = WALKER_SHAPE
    room_half_extent: tuple = (5.0, 12.0)
    interior_walls: tuple = (0, 3)
    clutter_per_scene: tuple = (2, 8)
    range_noise: float = 0.01
    min_visible_beams: int = 3
    max_retries: int = 200
    seed: int = 0
    sensor: SensorConfig = field(default_factory=SensorConfig)

    def __post_init__(self):
        lo, hi = self.object_range
        if not 0 < lo <= hi:
            raise ValueError("object_range must be positive and ordered")
        if not 0 < self.room_half_extent[0] <= self.room_half_extent[1]:
            raise ValueError("room_half_extent must be positive and ordered")
        for name in ("objects_per_scan", "interior_walls", "clutter_per_scene"):
            a, b = getattr(self, name)
            if not 0 <= a <= b:
                raise ValueError(f"{name} must be a nonnegative ordered range")
        if self.num_scans < 0 or self.scans_per_scene < 1 or self.range_noise < 0:
            raise ValueError("invalid scan counts or noise")

    def shape(self, klass: Klass) -> ObjectShape:
        return self.wheelchair if klass == Klass.WHEELCHAIR else self.walker


class PlacementError(RuntimeError):
    pass


@dataclass
class Primitives:
    """Circles as rows (cx, cy, radius) and segments as rows (x0, y0, x1, y1)."""

    circles: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    segments: np.ndarray = field(default_factory=lambda: np.zeros((0, 4)))

    def __add__(self, other: "Primitives") -> "Primitives":
        return Primitives(np.vstack([self.circles, other.circles]),
                          np.vstack([self.segments, other.segments]))

    @property
    def count(self) -> int:
        return len(self.circles) + len(self.segments)


def cast_rays(angles: np.ndarray, prims: Primitives, max_range: float):
    """Nearest hit distance along each ray from the origin.

    Returns ``(ranges, hit)`` where ``hit`` indexes the primitive (circles first,
    then segments) and is -1 where nothing lies within ``max_range``.
    """
    ux, uy = np.cos(angles)[:, None], np.sin(angles)[:, None]
    n = len(angles)
    t_all = np.full((n, prims.count + 1), np.inf)
    t_all[:, -1] = max_range

    if len(prims.circles):
        cx, cy, rad = prims.circles.T
        b = ux * cx + uy * cy
        disc = b * b - (cx * cx + cy * cy - rad * rad)
        with np.errstate(invalid="ignore"):
            t = b - np.sqrt(disc)
        ok = (disc >= 0) & (t > 0)
        t_all[:, : len(cx)] = np.where(ok, t, np.inf)

    if len(prims.segments):
        px, py, qx, qy = prims.segments.T
        dx, dy = qx - px, qy - py
        denom = ux * dy - uy * dx
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (px * dy - py * dx) / denom
            s = (px * uy - py * ux) / denom
        ok = (denom != 0) & (t > 0) & (s >= 0) & (s <= 1)
        t_all[:, len(prims.circles): prims.count] = np.where(ok, t, np.inf)

    hit = np.argmin(t_all, axis=1)
    ranges = t_all[np.arange(n), hit]
    hit = np.where((hit == prims.count) | (ranges >= max_range), -1, hit)
    return np.minimum(ranges, max_range), hit


def object_primitives(klass: Klass, center, yaw: float, shape: ObjectShape) -> Primitives:
    k = np.arange(shape.leg_count)
    theta = yaw + 2 * np.pi * k / shape.leg_count
    r = shape.footprint / 2
    circles = np.stack([center[0] + r * np.cos(theta), center[1] + r * np.sin(theta),
                        np.full(shape.leg_count, shape.leg_radius)], axis=1)
    return Primitives(circles=circles)


def room_segments(half_w: float, half_h: float, offset, yaw: float) -> np.ndarray:
    corners = np.array([[-half_w, -half_h], [half_w, -half_h], [half_w, half_h], [-half_w, half_h]])
    c, s = math.cos(yaw), math.sin(yaw)
    corners = corners @ np.array([[c, s], [-s, c]]) + np.asarray(offset)
    return np.hstack([corners, np.roll(corners, -1, axis=0)])


def box_segments(center, size: float, yaw: float) -> np.ndarray:
    return room_segments(size / 2, size / 2, center, yaw)


def _point_segment_distance(p, segs: np.ndarray) -> np.ndarray:
    if len(segs) == 0:
        return np.zeros(0)
    a, b = segs[:, :2], segs[:, 2:]
    d = b - a
    t = np.clip(np.einsum("ij,ij->i", p - a, d) / np.einsum("ij,ij->i", d, d), 0, 1)
    return np.hypot(*(a + t[:, None] * d - p).T)


@dataclass
class Scene:
    """Static part of a synthetic sequence."""

    walls: np.ndarray
    clutter: Primitives
    inside: callable = None

    @property
    def static(self) -> Primitives:
        return Primitives(self.clutter.circles, np.vstack([self.walls, self.clutter.segments]))

    def clearance(self, p) -> float:
        """Distance from ``p`` to the nearest static primitive."""
        p = np.asarray(p, dtype=np.float64)
        s = self.static
        d = [np.inf, np.hypot(*p)]
        if len(s.segments):
            d.append(_point_segment_distance(p, s.segments).min())
        if len(s.circles):
            d.append((np.hypot(*(s.circles[:, :2] - p).T) - s.circles[:, 2]).min())
        return float(min(d))


def make_scene(cfg: SyntheticSceneConfig, rng: np.random.Generator) -> Scene:
    lo, hi = cfg.room_half_extent
    half_w, half_h = rng.uniform(lo, hi, size=2)
    yaw = rng.uniform(0, np.pi)
    # keep the sensor at least 1 m inside the room
    offset = rng.uniform(-1, 1, size=2) * (np.array([half_w, half_h]) - 1.0)
    rot = np.array([[math.cos(yaw), -math.sin(yaw)], [math.sin(yaw), math.cos(yaw)]])
    walls = room_segments(half_w, half_h, -rot @ offset, yaw)
    center = -rot @ offset

    def inside(p, margin=0.0):
        q = rot.T @ (np.asarray(p) - center)
        return abs(q[0]) <= half_w - margin and abs(q[1]) <= half_h - margin

    scene = Scene(walls, Primitives(), inside)
    extra = []
    for _ in range(rng.integers(cfg.interior_walls[0], cfg.interior_walls[1] + 1)):
        for _ in range(cfg.max_retries):
            a = rng.uniform(-1, 1, size=2) * [half_w, half_h]
            ang = rng.uniform(0, 2 * np.pi)
            length = rng.uniform(1.0, 4.0)
            p0 = rot @ a + center
            p1 = p0 + length * np.array([math.cos(ang), math.sin(ang)])
            seg = np.concatenate([p0, p1])[None]
            if inside(p1) and _point_segment_distance(np.zeros(2), seg)[0] > 1.0:
                extra.append(seg)
                break
    scene.walls = np.vstack([walls] + extra)

    for _ in range(rng.integers(cfg.clutter_per_scene[0], cfg.clutter_per_scene[1] + 1)):
        for _ in range(cfg.max_retries):
            p = rot @ (rng.uniform(-1, 1, size=2) * [half_w, half_h]) + center
            pillar = rng.random() < 0.5
            size = rng.uniform(0.1, 0.35) if pillar else rng.uniform(0.3, 0.9)
            extent = size if pillar else size * 0.71
            if not inside(p, extent + 0.2) or scene.clearance(p) < extent + 0.3:
                continue
            if pillar:
                add = Primitives(circles=np.array([[p[0], p[1], size]]))
            else:
                add = Primitives(segments=box_segments(p, size, rng.uniform(0, np.pi / 2)))
            scene.clutter = scene.clutter + add
            break
    return scene


def render_frame(scene: Scene, objects, cfg: SyntheticSceneConfig, rng: np.random.Generator,
                 seq_id: int = 0, sequence: str = "") -> AnnotatedFrame:
    """Ray-cast ``scene`` plus ``objects`` given as (klass, center, yaw) triples.

    Objects hit by fewer than ``cfg.min_visible_beams`` beams are left unannotated.
    """
    sensor = cfg.sensor
    static = scene.static
    obj_circles = [object_primitives(k, c, yaw, cfg.shape(k)).circles for k, c, yaw in objects]
    owners = [np.full(len(static.circles), -1)]
    owners += [np.full(len(oc), i) for i, oc in enumerate(obj_circles)]
    owners += [np.full(len(static.segments) + 1, -1)]  # trailing -1 catches hit == -1
    owners = np.concatenate(owners)
    prims = Primitives(np.vstack([static.circles] + obj_circles), static.segments)
    ranges, hit = cast_rays(beam_angles(sensor), prims, sensor.range_max)
    if cfg.range_noise > 0:
        ranges = ranges + (hit >= 0) * rng.normal(0.0, cfg.range_noise, size=ranges.shape)
    ranges = np.clip(ranges, sensor.range_min, sensor.range_max)

    hits_per_object = np.bincount(owners[hit][owners[hit] >= 0], minlength=len(objects))
    anns = [Annotation(Klass(k), (float(c[0]), float(c[1])))
            for (k, c, _), n in zip(objects, hits_per_object) if n >= cfg.min_visible_beams]
    return AnnotatedFrame(Scan(ranges, seq_id, seq_id / 13.0), anns, sequence)


def sample_objects(scene: Scene, cfg: SyntheticSceneConfig, rng: np.random.Generator):
    n = rng.integers(cfg.objects_per_scan[0], cfg.objects_per_scan[1] + 1)
    half_fov = cfg.sensor.fov / 2 - 0.05
    placed = []
    for _ in range(n):
        klass = Klass.WALKER if rng.random() < cfg.walker_fraction else Klass.WHEELCHAIR
        radius = cfg.shape(klass).radius
        for _ in range(cfg.max_retries):
            r = rng.uniform(*cfg.object_range)
            phi = rng.uniform(-half_fov, half_fov)
            c = np.array([r * math.cos(phi), r * math.sin(phi)])
            if r < radius + 0.3 or not scene.inside(c, radius + 0.1):
                continue
            if scene.clearance(c) < radius + 0.15:
                continue
            if any(np.hypot(*(c - p)) < radius + cfg.shape(k).radius + 0.15 for k, p, _ in placed):
                continue
            placed.append((klass, c, float(rng.uniform(0, 2 * np.pi))))
            break
        else:
            raise PlacementError(f"could not place {klass.label} after {cfg.max_retries} tries")
    return placed


def synthesize(cfg: SyntheticSceneConfig, scene_attempts: int = 10) -> list:
    """Deterministic synthetic dataset of ``cfg.num_scans`` annotated frames.

    A scene too cluttered to host the sampled objects is redrawn, up to
    ``scene_attempts`` times, before ``PlacementError`` propagates.
    """
    frames = []
    n_scenes = -(-cfg.num_scans // cfg.scans_per_scene)
    for s in range(n_scenes):
        name = f"synth-{cfg.seed}-{s:04d}"
        count = min(cfg.scans_per_scene, cfg.num_scans - s * cfg.scans_per_scene)
        for attempt in range(scene_attempts):
            key = [cfg.seed, s] if attempt == 0 else [cfg.seed, s, 0, attempt]
            scene = make_scene(cfg, np.random.default_rng(key))
            try:
                frames += _scene_frames(scene, cfg, key, count, name)
                break
            except PlacementError:
                if attempt == scene_attempts - 1:
                    raise
    return frames


def _scene_frames(scene, cfg, key, count, name):
    out = []
    for f in range(count):
        rng = np.random.default_rng(key + [f + 1])
        objects = sample_objects(scene, cfg, rng)
        out.append(render_frame(scene, objects, cfg, rng, seq_id=f, sequence=name))
    return out
