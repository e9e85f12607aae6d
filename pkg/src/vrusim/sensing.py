"""Sensor units and the geometric detection pipeline.

A detection stands in for a trained image detector: the target must be
mostly unoccluded, subtend a minimum apparent width, and be tall enough on
the virtual sensor plane. Confirmation applies per sensor over consecutive
frames; fusion only selects whose confirmations count.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

from .geometry import MountPose, Pose2, Silhouette, Vec2, visible_fraction
from .scenario import WorldState

SENSOR_IMAGE_WIDTH_PX = 1920

DEFAULT_HFOV_RAD = math.radians(90.0)
DEFAULT_MIN_WIDTH_PX = 15.0
DEFAULT_MIN_HEIGHT_PX = 110.0


def px_to_rad(px: float, hfov: float = DEFAULT_HFOV_RAD, image_width_px: float = SENSOR_IMAGE_WIDTH_PX) -> float:
    """Pixel-count threshold to radians, one pixel = hfov / image width."""
    return px * hfov / image_width_px


@dataclass(frozen=True)
class SensorUnit:
    """One camera (or lidar) head, either roadside or on the test vehicle.

    For mount "vut" the pose is vehicle-relative: x forward of the vehicle
    center, y to its left, yaw relative to its heading. z stays absolute.
    """

    sensor_id: str
    mount: str
    pose: MountPose
    hfov: float
    vfov: float
    max_range: float
    frame_rate: float = 10.0
    latency: float = 0.025

    def __post_init__(self) -> None:
        if self.mount not in ("vut", "rsu"):
            raise ValueError(f"unknown mount {self.mount!r}")
        if self.pose.z <= 0:
            raise ValueError("sensor height must be positive")
        if self.max_range <= 0:
            raise ValueError("range must be positive")
        if self.latency < 0:
            raise ValueError("latency must be non-negative")
        if self.frame_rate <= 0 or self.hfov <= 0 or self.vfov <= 0:
            raise ValueError("rate and apertures must be positive")

    def world_pose(self, vut_pose: Pose2) -> MountPose:
        if self.mount == "rsu":
            return self.pose
        offset = Vec2(self.pose.x, self.pose.y).rotated(vut_pose.heading)
        return MountPose(
            vut_pose.x + offset.x,
            vut_pose.y + offset.y,
            self.pose.z,
            vut_pose.heading + self.pose.yaw,
            self.pose.pitch,
        )


@dataclass(frozen=True)
class DetectionModel:
    min_visible_fraction: float = 0.5
    min_apparent_width: float = px_to_rad(DEFAULT_MIN_WIDTH_PX)
    min_apparent_height: float = px_to_rad(DEFAULT_MIN_HEIGHT_PX)
    miss_probability: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.min_visible_fraction <= 1.0:
            raise ValueError("min_visible_fraction must be within [0, 1]")
        if not 0.0 <= self.miss_probability <= 1.0:
            raise ValueError("miss_probability must be within [0, 1]")
        if self.min_apparent_width < 0 or self.min_apparent_height < 0:
            raise ValueError("apparent-size thresholds must be non-negative")


@dataclass(frozen=True)
class DetectionEvent:
    frame: int
    sensor_id: str
    target_id: str
    visible_fraction: float
    apparent_width: float
    apparent_height: float
    available_at: float


@dataclass(frozen=True)
class RsuLayout:
    units: tuple[SensorUnit, ...]

    def __post_init__(self) -> None:
        ids = [u.sensor_id for u in self.units]
        if len(set(ids)) != len(ids):
            raise ValueError("sensor ids must be unique")

    def __iter__(self):
        return iter(self.units)

    def __len__(self) -> int:
        return len(self.units)


def apparent_angular_width(sensor_pose: MountPose, target: Silhouette) -> float:
    """Angle subtended by the target extent perpendicular to the sight line."""
    dx = target.anchor.x - sensor_pose.x
    dy = target.anchor.y - sensor_pose.y
    dist = math.hypot(dx, dy)
    if dist < 1e-9:
        raise ValueError("target coincides with the sensor")
    bearing = math.atan2(dy, dx)
    delta = target.heading - bearing
    w_perp = target.length * abs(math.sin(delta)) + target.width * abs(math.cos(delta))
    return 2.0 * math.atan2(w_perp / 2.0, dist)


def apparent_angular_height(sensor_pose: MountPose, target: Silhouette) -> float:
    """Angle subtended by the target height at the slant range to mid-height."""
    dx = target.anchor.x - sensor_pose.x
    dy = target.anchor.y - sensor_pose.y
    dist = math.hypot(dx, dy)
    if dist < 1e-9:
        raise ValueError("target coincides with the sensor")
    slant = math.hypot(dist, sensor_pose.z - target.height / 2.0)
    return 2.0 * math.atan2(target.height / 2.0, slant)


def _miss_coin(seed: int, sensor_id: str, frame: int) -> float:
    """Stateless per-(sensor, frame) uniform draw in [0, 1)."""
    digest = hashlib.sha256(f"{seed}:{sensor_id}:{frame}".encode()).digest()
    return int.from_bytes(digest[:8], "big") / 2**64


def sense_frame(
    sensor: SensorUnit,
    model: DetectionModel,
    world: WorldState,
    frame: int,
) -> DetectionEvent | None:
    """Detection attempt on the VRU for one frame; None when any gate fails."""
    pose = sensor.world_pose(world.vut.pose)
    target = world.vru.silhouette

    dx = target.anchor.x - pose.x
    dy = target.anchor.y - pose.y
    dist = math.hypot(dx, dy)
    if dist - target.length / 2.0 > sensor.max_range:
        return None
    if dist < 1e-9:
        # an unbraked run drives straight through the target; a sensor
        # sitting inside it has no meaningful view
        return None

    width = apparent_angular_width(pose, target)
    if width < model.min_apparent_width:
        return None
    height = apparent_angular_height(pose, target)
    if height < model.min_apparent_height:
        return None

    fraction = visible_fraction(pose, sensor.hfov, sensor.vfov, sensor.max_range, target, world.occluders)
    if fraction < model.min_visible_fraction:
        return None

    if model.miss_probability > 0.0:
        if _miss_coin(model.seed, sensor.sensor_id, frame) <= model.miss_probability:
            return None

    return DetectionEvent(
        frame=frame,
        sensor_id=sensor.sensor_id,
        target_id="vru",
        visible_fraction=fraction,
        apparent_width=width,
        apparent_height=height,
        available_at=frame / sensor.frame_rate + sensor.latency,
    )


def confirm_stream(events: list[DetectionEvent], k: int) -> list[float]:
    """Confirmation times: available_at of the k-th event of each maximal
    run of consecutive frames."""
    if k < 1:
        raise ValueError("confirmation count must be at least 1")
    out: list[float] = []
    run = 0
    prev_frame: int | None = None
    for ev in events:
        if prev_frame is not None and ev.frame <= prev_frame:
            raise ValueError("events must be strictly ordered by frame")
        run = run + 1 if prev_frame == ev.frame - 1 else 1
        if run == k:
            out.append(ev.available_at)
        prev_frame = ev.frame
    return out


def first_confirmed_time(
    events_by_sensor: dict[str, list[DetectionEvent]],
    k: int,
    subset: tuple[str, ...],
) -> float | None:
    """Earliest per-sensor confirmation among the chosen sensors."""
    best: float | None = None
    for sensor_id in subset:
        if sensor_id not in events_by_sensor:
            raise ValueError(f"unknown sensor id {sensor_id!r}")
        confs = confirm_stream(events_by_sensor[sensor_id], k)
        if confs and (best is None or confs[0] < best):
            best = confs[0]
    return best


# ------------------------------------------------------------ default layout

_RSU_TABLE = (
    # id, x, y, yaw degrees
    ("rsu0", -12.0, -12.0, 45.0),
    ("rsu1", 12.0, -12.0, 135.0),
    ("rsu2", 12.0, 12.0, -135.0),
    ("rsu3", -12.0, 12.0, -45.0),
    ("rsu4", -10.0, 3.0, 0.0),
    ("rsu5", 10.0, -3.0, 180.0),
    ("rsu6", 3.0, 10.0, -90.0),
    ("rsu7", -3.0, -10.0, 90.0),
    ("rsu8", -14.0, 2.0, 180.0),
    ("rsu9", 14.0, -2.0, 0.0),
    ("rsu10", 2.0, 14.0, 90.0),
    ("rsu11", -2.0, -14.0, -90.0),
)

DEFAULT_RSU_HEIGHT = 7.0
DEFAULT_RSU_PITCH = math.radians(-15.0)
DEFAULT_VFOV_RAD = 2.0 * math.atan(math.tan(DEFAULT_HFOV_RAD / 2.0) * 1080.0 / 1920.0)
DEFAULT_RANGE_M = 250.0
DEFAULT_VUT_SENSOR_HEIGHT = 1.6


def default_layout(
    hfov: float = DEFAULT_HFOV_RAD,
    vfov: float = DEFAULT_VFOV_RAD,
    max_range: float = DEFAULT_RANGE_M,
    frame_rate: float = 10.0,
    latency: float = 0.025,
) -> RsuLayout:
    """Twelve roadside units on the corners and masts of a 4-way junction."""
    units = tuple(
        SensorUnit(
            sensor_id=name,
            mount="rsu",
            pose=MountPose(x, y, DEFAULT_RSU_HEIGHT, math.radians(yaw_deg), DEFAULT_RSU_PITCH),
            hfov=hfov,
            vfov=vfov,
            max_range=max_range,
            frame_rate=frame_rate,
            latency=latency,
        )
        for name, x, y, yaw_deg in _RSU_TABLE
    )
    return RsuLayout(units)


def default_vut_sensor(
    hfov: float = DEFAULT_HFOV_RAD,
    vfov: float = DEFAULT_VFOV_RAD,
    max_range: float = DEFAULT_RANGE_M,
    frame_rate: float = 10.0,
    latency: float = 0.025,
) -> SensorUnit:
    """Forward camera behind the windshield of the test vehicle."""
    return SensorUnit(
        sensor_id="vut",
        mount="vut",
        pose=MountPose(0.0, 0.0, DEFAULT_VUT_SENSOR_HEIGHT, 0.0, 0.0),
        hfov=hfov,
        vfov=vfov,
        max_range=max_range,
        frame_rate=frame_rate,
        latency=latency,
    )


# --------------------------------------------------------------- layout file

_LAYOUT_COLUMNS = (
    "id",
    "mount",
    "x",
    "y",
    "z",
    "yaw_deg",
    "pitch_deg",
    "hfov_deg",
    "vfov_deg",
    "range_m",
    "rate_hz",
    "latency_s",
)


def format_layout(units: tuple[SensorUnit, ...]) -> str:
    """Layout file text: comma-separated, angles in degrees, one unit per line."""
    lines = [",".join(_LAYOUT_COLUMNS)]
    for u in units:
        lines.append(
            ",".join(
                [
                    u.sensor_id,
                    u.mount,
                    f"{u.pose.x:g}",
                    f"{u.pose.y:g}",
                    f"{u.pose.z:g}",
                    f"{math.degrees(u.pose.yaw):g}",
                    f"{math.degrees(u.pose.pitch):g}",
                    f"{math.degrees(u.hfov):g}",
                    f"{math.degrees(u.vfov):g}",
                    f"{u.max_range:g}",
                    f"{u.frame_rate:g}",
                    f"{u.latency:g}",
                ]
            )
        )
    return "\n".join(lines) + "\n"


def parse_layout(text: str) -> tuple[SensorUnit, ...]:
    """Inverse of format_layout. Blank lines and #-comments are skipped."""
    rows = []
    header: list[str] | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        cells = [c.strip() for c in line.split(",")]
        if header is None:
            header = cells
            if tuple(header) != _LAYOUT_COLUMNS:
                raise ValueError(
                    f"layout line {lineno}: header must be {','.join(_LAYOUT_COLUMNS)}"
                )
            continue
        if len(cells) != len(_LAYOUT_COLUMNS):
            raise ValueError(f"layout line {lineno}: expected {len(_LAYOUT_COLUMNS)} fields")
        try:
            unit = SensorUnit(
                sensor_id=cells[0],
                mount=cells[1],
                pose=MountPose(
                    float(cells[2]),
                    float(cells[3]),
                    float(cells[4]),
                    math.radians(float(cells[5])),
                    math.radians(float(cells[6])),
                ),
                hfov=math.radians(float(cells[7])),
                vfov=math.radians(float(cells[8])),
                max_range=float(cells[9]),
                frame_rate=float(cells[10]),
                latency=float(cells[11]),
            )
        except ValueError as exc:
            raise ValueError(f"layout line {lineno}: {exc}") from exc
        rows.append(unit)
    if header is None:
        raise ValueError("layout file has no header line")
    return tuple(rows)
