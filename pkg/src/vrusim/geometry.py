"""Planar pose math, oriented-box overlap, frustum and occlusion tests.

All lengths are meters, all angles radians. Headings are normalized to
(-pi, pi]. The vertical axis only enters through sensor height, occluder
height and silhouette sampling; everything else lives in the ground plane.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

_EPS = 1e-9
_SILHOUETTE_COLS = 3
_SILHOUETTE_ROWS = 3


def wrap_angle(a: float) -> float:
    """Normalize an angle to (-pi, pi]."""
    a = math.fmod(a, 2.0 * math.pi)
    if a <= -math.pi:
        a += 2.0 * math.pi
    elif a > math.pi:
        a -= 2.0 * math.pi
    return a


@dataclass(frozen=True)
class Vec2:
    x: float
    y: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"non-finite Vec2: ({self.x}, {self.y})")

    def __add__(self, other: "Vec2") -> "Vec2":
        return Vec2(self.x + other.x, self.y + other.y)

    def __sub__(self, other: "Vec2") -> "Vec2":
        return Vec2(self.x - other.x, self.y - other.y)

    def scaled(self, k: float) -> "Vec2":
        return Vec2(self.x * k, self.y * k)

    def dot(self, other: "Vec2") -> float:
        return self.x * other.x + self.y * other.y

    def cross(self, other: "Vec2") -> float:
        return self.x * other.y - self.y * other.x

    def norm(self) -> float:
        return math.hypot(self.x, self.y)

    def rotated(self, angle: float) -> "Vec2":
        c, s = math.cos(angle), math.sin(angle)
        return Vec2(c * self.x - s * self.y, s * self.x + c * self.y)


def unit_vector(angle: float) -> Vec2:
    return Vec2(math.cos(angle), math.sin(angle))


@dataclass(frozen=True)
class Pose2:
    """Ground-plane position plus heading; heading stored normalized."""

    x: float
    y: float
    heading: float

    def __post_init__(self) -> None:
        for v in (self.x, self.y, self.heading):
            if not math.isfinite(v):
                raise ValueError("non-finite Pose2 component")
        object.__setattr__(self, "heading", wrap_angle(self.heading))

    @property
    def position(self) -> Vec2:
        return Vec2(self.x, self.y)


@dataclass(frozen=True)
class MountPose:
    """3D sensor mount: position, yaw about z, pitch about the lateral axis.

    Positive pitch looks up, negative looks down. For a vehicle mount the
    coordinates are relative to the vehicle body frame.
    """

    x: float
    y: float
    z: float
    yaw: float
    pitch: float


@dataclass(frozen=True)
class OrientedBox:
    """Rectangle with arbitrary heading, given by center and half extents."""

    center: Vec2
    half_long: float  # half extent along the heading axis
    half_lat: float  # half extent across it
    heading: float

    def __post_init__(self) -> None:
        if self.half_long <= 0.0 or self.half_lat <= 0.0:
            raise ValueError("OrientedBox half extents must be positive")

    def axes(self) -> tuple[Vec2, Vec2]:
        fwd = unit_vector(self.heading)
        return fwd, Vec2(-fwd.y, fwd.x)

    def corners(self) -> tuple[Vec2, Vec2, Vec2, Vec2]:
        fwd, lat = self.axes()
        dl = fwd.scaled(self.half_long)
        dw = lat.scaled(self.half_lat)
        c = self.center
        return (c + dl + dw, c + dl - dw, c - dl - dw, c - dl + dw)

    def contains(self, p: Vec2) -> bool:
        fwd, lat = self.axes()
        d = p - self.center
        return (
            abs(d.dot(fwd)) <= self.half_long + _EPS
            and abs(d.dot(lat)) <= self.half_lat + _EPS
        )

    def bounding_radius(self) -> float:
        return math.hypot(self.half_long, self.half_lat)


@dataclass(frozen=True)
class Prism(OrientedBox):
    """Vertical extrusion of an oriented footprint, sitting on the ground."""

    height: float

    def __post_init__(self) -> None:
        super().__post_init__()
        if self.height <= 0.0:
            raise ValueError("Prism height must be positive")


@dataclass(frozen=True)
class AxisBox2:
    """Axis-aligned box in whatever frame the caller uses (pixels or meters)."""

    min_x: float
    min_y: float
    max_x: float
    max_y: float

    def __post_init__(self) -> None:
        if self.max_x < self.min_x or self.max_y < self.min_y:
            raise ValueError("AxisBox2 max corner must not precede min corner")

    @property
    def area(self) -> float:
        return (self.max_x - self.min_x) * (self.max_y - self.min_y)


@dataclass(frozen=True)
class Silhouette:
    """Vertical sampling plane standing on a target's footprint.

    The plane is oriented along the target heading and spans the footprint
    length; `width` is the across-heading extent, used only for projecting
    the apparent width seen from a sensor. Sample points cover the plane on
    a fixed 3x3 grid (columns along the heading, rows over the height).
    """

    anchor: Vec2
    heading: float
    length: float
    width: float
    height: float

    def __post_init__(self) -> None:
        if min(self.length, self.width, self.height) <= 0.0:
            raise ValueError("Silhouette extents must be positive")

    def sample_points(self) -> tuple[tuple[float, float, float], ...]:
        fwd = unit_vector(self.heading)
        pts = []
        for i in range(_SILHOUETTE_COLS):
            # cell centers over [-length/2, length/2]
            s = self.length * ((i + 0.5) / _SILHOUETTE_COLS - 0.5)
            px = self.anchor.x + fwd.x * s
            py = self.anchor.y + fwd.y * s
            for j in range(_SILHOUETTE_ROWS):
                pz = self.height * (j + 0.5) / _SILHOUETTE_ROWS
                pts.append((px, py, pz))
        return tuple(pts)


def ray_segment_intersect(origin: Vec2, direction: Vec2, a: Vec2, b: Vec2) -> float | None:
    """Smallest t >= 0 with origin + t*direction on segment ab, else None.

    `direction` must be unit length. Collinear overlap returns the nearest
    covered parameter (0.0 when the origin itself lies on the segment).
    """
    if abs(direction.norm() - 1.0) > 1e-9:
        raise ValueError("ray direction must be unit length")
    seg = b - a
    denom = direction.cross(seg)
    rel = a - origin
    if abs(denom) < _EPS:
        # parallel; collinear only if the segment offset has no lateral part
        if abs(rel.cross(direction)) > _EPS:
            return None
        ta = rel.dot(direction)
        tb = (b - origin).dot(direction)
        lo, hi = min(ta, tb), max(ta, tb)
        if hi < -_EPS:
            return None
        return max(lo, 0.0)
    t = rel.cross(seg) / denom
    u = rel.cross(direction) / denom
    if t < -_EPS or u < -_EPS or u > 1.0 + _EPS:
        return None
    return max(t, 0.0)


def _projected_interval(box: OrientedBox, axis: Vec2) -> tuple[float, float]:
    vals = [c.dot(axis) for c in box.corners()]
    return min(vals), max(vals)


def obb_overlap(a: OrientedBox, b: OrientedBox) -> bool:
    """Separating-axis test; touching boundaries count as overlap."""
    for box in (a, b):
        for axis in box.axes():
            a_lo, a_hi = _projected_interval(a, axis)
            b_lo, b_hi = _projected_interval(b, axis)
            if a_hi < b_lo or b_hi < a_lo:
                return False
    return True


def obb_separation(a: OrientedBox, b: OrientedBox) -> float:
    """Euclidean gap between two boxes; 0.0 when they overlap or touch."""
    if obb_overlap(a, b):
        return 0.0
    best = math.inf
    ca, cb = a.corners(), b.corners()
    for pts, box in ((ca, b), (cb, a)):
        edges = list(zip(box.corners(), box.corners()[1:] + box.corners()[:1]))
        for p in pts:
            for e0, e1 in edges:
                best = min(best, _point_segment_distance(p, e0, e1))
    return best


def _point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> float:
    seg = b - a
    ln2 = seg.dot(seg)
    if ln2 <= _EPS:
        return (p - a).norm()
    t = max(0.0, min(1.0, (p - a).dot(seg) / ln2))
    return (p - (a + seg.scaled(t))).norm()


def iou_axis_box(a: AxisBox2, b: AxisBox2) -> float:
    """Intersection over union of axis-aligned boxes.

    Zero-area inputs yield 0.0 unless the two boxes are identical, which is
    defined as 1.0 so that a degenerate box still matches itself.
    """
    if a == b:
        return 1.0
    ix = min(a.max_x, b.max_x) - max(a.min_x, b.min_x)
    iy = min(a.max_y, b.max_y) - max(a.min_y, b.min_y)
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    inter = ix * iy
    union = a.area + b.area - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def in_frustum(
    pose: MountPose,
    hfov: float,
    vfov: float,
    max_range: float,
    point: tuple[float, float, float],
) -> bool:
    """Whether a 3D point lies inside the sensor's viewing frustum.

    All three boundaries (range sphere, horizontal and vertical aperture)
    are inclusive.
    """
    dx = point[0] - pose.x
    dy = point[1] - pose.y
    dz = point[2] - pose.z
    dist = math.sqrt(dx * dx + dy * dy + dz * dz)
    if dist > max_range + _EPS:
        return False
    horiz = math.hypot(dx, dy)
    if horiz < _EPS and abs(dz) < _EPS:
        return True  # point at the sensor origin
    bearing = math.atan2(dy, dx)
    if abs(wrap_angle(bearing - pose.yaw)) > hfov / 2.0 + _EPS:
        return False
    elevation = math.atan2(dz, horiz)
    if abs(wrap_angle(elevation - pose.pitch)) > vfov / 2.0 + _EPS:
        return False
    return True


def ray_blocked(
    origin: tuple[float, float, float],
    target: tuple[float, float, float],
    occluder: Prism,
) -> bool:
    """Whether the segment origin->target passes through a vertical prism.

    The 2D projection must cross the footprint, and the segment height at
    the crossing must dip below the prism top.
    """
    o = Vec2(origin[0], origin[1])
    t = Vec2(target[0], target[1])
    span = t - o
    # slab test in the footprint's local frame
    fwd, lat = occluder.axes()
    rel = o - occluder.center
    t_lo, t_hi = 0.0, 1.0
    for axis, half in ((fwd, occluder.half_long), (lat, occluder.half_lat)):
        d = span.dot(axis)
        s = rel.dot(axis)
        if abs(d) < _EPS:
            if abs(s) > half:
                return False
            continue
        u0 = (-half - s) / d
        u1 = (half - s) / d
        if u0 > u1:
            u0, u1 = u1, u0
        t_lo = max(t_lo, u0)
        t_hi = min(t_hi, u1)
        if t_lo > t_hi:
            return False
    z0 = origin[2] + (target[2] - origin[2]) * t_lo
    z1 = origin[2] + (target[2] - origin[2]) * t_hi
    return min(z0, z1) < occluder.height - _EPS


def visible_fraction(
    pose: MountPose,
    hfov: float,
    vfov: float,
    max_range: float,
    target: Silhouette,
    occluders: tuple[Prism, ...] | list[Prism],
) -> float:
    """Fraction of silhouette sample points both inside the frustum and
    unblocked by every occluder."""
    origin = (pose.x, pose.y, pose.z)
    pts = target.sample_points()
    seen = 0
    for p in pts:
        if not in_frustum(pose, hfov, vfov, max_range, p):
            continue
        if any(ray_blocked(origin, p, occ) for occ in occluders):
            continue
        seen += 1
    return seen / len(pts)
