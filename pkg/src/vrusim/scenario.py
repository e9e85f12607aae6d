"""EuroNCAP VRU test-case construction.

Each scenario is a parametric timeline: the vehicle under test drives east
along y = 0 and the vulnerable road user moves so that, absent braking, the
two footprints meet at the conflict point at the origin. Start positions are
back-computed so both actor centers arrive simultaneously; the stored
nominal collision time is the (earlier) analytic instant when the footprints
first touch.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

from .geometry import OrientedBox, Pose2, Prism, Silhouette, Vec2, obb_overlap

KMH = 1.0 / 3.6

# speeds from the published sweep grids, km/h
CROSSING_SPEEDS_KMH = tuple(float(v) for v in range(20, 65, 5))
LONGITUDINAL_SPEEDS_KMH = tuple(float(v) for v in range(25, 65, 5))

_MIN_SYNC_TIME = 8.0
_MIN_START_DISTANCE = 60.0
_POST_CONFLICT_TIME = 4.0


class ScenarioKind(enum.Enum):
    CPNC50 = "CPNC-50"
    CBNA = "CBNA"
    CBLA = "CBLA"

    @property
    def display_name(self) -> str:
        return self.value


class ActorClass(enum.Enum):
    VEHICLE = "vehicle"
    PEDESTRIAN = "pedestrian"
    CYCLIST = "cyclist"


@dataclass(frozen=True)
class ActorTrack:
    """Constant-speed motion along a polyline, clamped at the last waypoint."""

    actor_class: ActorClass
    length: float
    width: float
    height: float
    speed: float
    path: tuple[Vec2, ...]

    def __post_init__(self) -> None:
        if self.length <= 0 or self.width <= 0 or self.height <= 0:
            raise ValueError("actor dimensions must be positive")
        if self.speed < 0:
            raise ValueError("speed must be non-negative")
        if len(self.path) < 2:
            raise ValueError("path needs at least two waypoints")

    def state_at(self, t: float) -> tuple[Pose2, float]:
        """Pose and instantaneous speed after travelling speed*t along the path."""
        if t < 0:
            raise ValueError("time must be non-negative")
        pose, clamped = self.pose_at_distance(self.speed * t)
        return pose, 0.0 if clamped else self.speed

    def pose_at_distance(self, distance: float) -> tuple[Pose2, bool]:
        """Pose after travelling `distance` along the polyline.

        The second value reports clamping at the final waypoint.
        """
        if distance < 0:
            raise ValueError("distance must be non-negative")
        remaining = distance
        for a, b in zip(self.path, self.path[1:]):
            seg = b - a
            seg_len = seg.norm()
            heading = math.atan2(seg.y, seg.x)
            if remaining <= seg_len:
                frac = remaining / seg_len if seg_len > 0 else 0.0
                pos = a + seg.scaled(frac)
                return Pose2(pos.x, pos.y, heading), False
            remaining -= seg_len
        end = self.path[-1]
        tail = self.path[-1] - self.path[-2]
        return Pose2(end.x, end.y, math.atan2(tail.y, tail.x)), True

    def footprint(self, pose: Pose2) -> OrientedBox:
        return OrientedBox(pose.position, self.length / 2, self.width / 2, pose.heading)

    def silhouette(self, pose: Pose2) -> Silhouette:
        return Silhouette(pose.position, pose.heading, self.length, self.width, self.height)


@dataclass(frozen=True)
class ScenarioSpec:
    kind: ScenarioKind
    vut_track: ActorTrack
    vru_track: ActorTrack
    occluders: tuple[Prism, ...]
    conflict_point: Vec2
    nominal_collision_time: float
    sim_duration: float
    frame_rate: float = 10.0

    def __post_init__(self) -> None:
        if self.frame_rate <= 0:
            raise ValueError("frame_rate must be positive")
        if self.sim_duration <= 0:
            raise ValueError("sim_duration must be positive")


@dataclass(frozen=True)
class ActorState:
    pose: Pose2
    speed: float
    footprint: OrientedBox
    silhouette: Silhouette


@dataclass(frozen=True)
class WorldState:
    time: float
    vut: ActorState
    vru: ActorState
    occluders: tuple[Prism, ...]


@dataclass(frozen=True)
class ScenarioOverrides:
    """Dimension and rate knobs; defaults follow EuroNCAP obstruction practice."""

    frame_rate: float = 10.0
    vut_length: float = 4.5
    vut_width: float = 1.8
    vut_height: float = 1.5
    pedestrian_speed_kmh: float = 5.0
    pedestrian_length: float = 0.5
    pedestrian_width: float = 0.5
    pedestrian_height: float = 1.8
    cyclist_speed_kmh: float = 15.0
    cyclist_length: float = 1.8
    cyclist_width: float = 0.5
    cyclist_height: float = 1.8
    lane_half_width: float = 1.75
    parked_car_length: float = 4.5
    parked_car_width: float = 1.8
    parked_car_height: float = 1.5
    parked_car_gap: float = 1.0
    parked_car_clearance: float = 1.0
    wall_height: float = 3.0
    wall_thickness: float = 0.3
    wall_clearance: float = 0.5
    wall_end_distance: float = 17.0


DEFAULT_OVERRIDES = ScenarioOverrides()


def allowed_speeds_kmh(kind: ScenarioKind) -> tuple[float, ...]:
    if kind is ScenarioKind.CBLA:
        return LONGITUDINAL_SPEEDS_KMH
    return CROSSING_SPEEDS_KMH


def _validate_speed(kind: ScenarioKind, vut_speed_kmh: float) -> float:
    allowed = allowed_speeds_kmh(kind)
    for v in allowed:
        if abs(vut_speed_kmh - v) < 1e-9:
            return v
    raise ValueError(
        f"{kind.display_name} speed {vut_speed_kmh:g} km/h not in allowed set "
        f"{{{', '.join(f'{v:g}' for v in allowed)}}}"
    )


def build_scenario(
    kind: ScenarioKind,
    vut_speed_kmh: float,
    overrides: ScenarioOverrides = DEFAULT_OVERRIDES,
) -> ScenarioSpec:
    """Construct one test case at the given vehicle speed.

    Raises ValueError when the speed is outside the sweep grid for the kind.
    """
    speed_kmh = _validate_speed(kind, vut_speed_kmh)
    v = speed_kmh * KMH
    ov = overrides

    sync_time = max(_MIN_SYNC_TIME, _MIN_START_DISTANCE / v)
    duration = sync_time + _POST_CONFLICT_TIME
    vut_start = -v * sync_time
    vut_track = ActorTrack(
        ActorClass.VEHICLE,
        ov.vut_length,
        ov.vut_width,
        ov.vut_height,
        v,
        (Vec2(vut_start, 0.0), Vec2(abs(vut_start) + v * duration + 20.0, 0.0)),
    )

    if kind is ScenarioKind.CBLA:
        vc = ov.cyclist_speed_kmh * KMH
        vru_start = -vc * sync_time
        vru_track = ActorTrack(
            ActorClass.CYCLIST,
            ov.cyclist_length,
            ov.cyclist_width,
            ov.cyclist_height,
            vc,
            (Vec2(vru_start, 0.0), Vec2(abs(vru_start) + vc * duration + 20.0, 0.0)),
        )
        closing = v - vc
        touch_gap = ov.vut_length / 2 + ov.cyclist_length / 2
        nominal = sync_time - touch_gap / closing
        occluders: tuple[Prism, ...] = ()
    else:
        if kind is ScenarioKind.CPNC50:
            vru_class = ActorClass.PEDESTRIAN
            vru_len, vru_wid, vru_hgt = ov.pedestrian_length, ov.pedestrian_width, ov.pedestrian_height
            vru_speed = ov.pedestrian_speed_kmh * KMH
        else:
            vru_class = ActorClass.CYCLIST
            vru_len, vru_wid, vru_hgt = ov.cyclist_length, ov.cyclist_width, ov.cyclist_height
            vru_speed = ov.cyclist_speed_kmh * KMH
        vru_start = -vru_speed * sync_time
        vru_track = ActorTrack(
            vru_class,
            vru_len,
            vru_wid,
            vru_hgt,
            vru_speed,
            (Vec2(0.0, vru_start), Vec2(0.0, abs(vru_start) + vru_speed * duration + 20.0)),
        )
        # axis-aligned onset: the later of the two per-axis touch instants
        x_touch = sync_time - (ov.vut_length / 2 + vru_wid / 2) / v
        y_touch = sync_time - (ov.vut_width / 2 + vru_len / 2) / vru_speed
        nominal = max(x_touch, y_touch)
        occluders = _crossing_occluders(kind, ov, abs(vru_start))

    return ScenarioSpec(
        kind=kind,
        vut_track=vut_track,
        vru_track=vru_track,
        occluders=occluders,
        conflict_point=Vec2(0.0, 0.0),
        nominal_collision_time=nominal,
        sim_duration=duration,
        frame_rate=ov.frame_rate,
    )


def _crossing_occluders(kind: ScenarioKind, ov: ScenarioOverrides, vru_start_dist: float) -> tuple[Prism, ...]:
    if kind is ScenarioKind.CPNC50:
        near_edge = -(ov.lane_half_width + ov.parked_car_clearance)
        center_y = near_edge - ov.parked_car_width / 2
        center_x = ov.parked_car_gap / 2 + ov.parked_car_length / 2
        return (
            Prism(Vec2(center_x, center_y), ov.parked_car_length / 2, ov.parked_car_width / 2, 0.0, height=ov.parked_car_height),
            Prism(Vec2(-center_x, center_y), ov.parked_car_length / 2, ov.parked_car_width / 2, 0.0, height=ov.parked_car_height),
        )
    # wall beside the cyclist approach, ending short of the conflict point
    near_y = -ov.wall_end_distance
    far_y = -(vru_start_dist + 2.0)
    center_y = (near_y + far_y) / 2
    half_len = (near_y - far_y) / 2
    center_x = -(ov.wall_clearance + ov.wall_thickness / 2)
    return (
        Prism(Vec2(center_x, center_y), half_len, ov.wall_thickness / 2, math.pi / 2, height=ov.wall_height),
    )


def _actor_state(track: ActorTrack, pose: Pose2, speed: float) -> ActorState:
    return ActorState(pose, speed, track.footprint(pose), track.silhouette(pose))


def world_at(spec: ScenarioSpec, t: float) -> WorldState:
    vut_pose, vut_speed = spec.vut_track.state_at(t)
    vru_pose, vru_speed = spec.vru_track.state_at(t)
    return WorldState(
        time=t,
        vut=_actor_state(spec.vut_track, vut_pose, vut_speed),
        vru=_actor_state(spec.vru_track, vru_pose, vru_speed),
        occluders=spec.occluders,
    )


def nominal_collision_check(spec: ScenarioSpec) -> float | None:
    """Time of first footprint overlap with braking disabled, on the frame grid."""
    n_frames = int(round(spec.sim_duration * spec.frame_rate)) + 1
    for i in range(n_frames):
        t = i / spec.frame_rate
        vut_pose, _ = spec.vut_track.state_at(t)
        vru_pose, _ = spec.vru_track.state_at(t)
        if obb_overlap(spec.vut_track.footprint(vut_pose), spec.vru_track.footprint(vru_pose)):
            return t
    return None


def rotate_scenario(spec: ScenarioSpec, yaw: float) -> ScenarioSpec:
    """Rotate the whole scene about the origin; sensor layouts stay put."""
    if yaw == 0.0:
        return spec

    def rot_track(track: ActorTrack) -> ActorTrack:
        return replace(track, path=tuple(p.rotated(yaw) for p in track.path))

    def rot_prism(p: Prism) -> Prism:
        return Prism(p.center.rotated(yaw), p.half_long, p.half_lat, p.heading + yaw, height=p.height)

    return replace(
        spec,
        vut_track=rot_track(spec.vut_track),
        vru_track=rot_track(spec.vru_track),
        occluders=tuple(rot_prism(p) for p in spec.occluders),
        conflict_point=spec.conflict_point.rotated(yaw),
    )
