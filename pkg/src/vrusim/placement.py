"""Choose roadside sensor sites under a budget.

Candidate mounting positions are scored by running the full scenario suite:
one sensing pass per scenario records what every candidate would see, then
any subset of sites is evaluated by replaying the braking kinematics with
that subset's earliest confirmation.  Selection is greedy on marginal
avoidance gain with detection accuracy as tie-breaker; with at most a
handful of candidates this provably matches exhaustive search only on the
suites the tests pin, and no stronger claim is made.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .aeb import AebPolicy, simulate_run
from .metrics import accuracy, natural_key
from .scenario import ScenarioSpec
from .sensing import (
    DEFAULT_HFOV_RAD,
    DEFAULT_RANGE_M,
    DEFAULT_VFOV_RAD,
    DetectionModel,
    MountPose,
    SensorUnit,
    first_confirmed_time,
)

__all__ = [
    "CandidateSite",
    "SiteScore",
    "PlacementResult",
    "candidate_sites_from_units",
    "evaluate_sites",
    "greedy_select",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CandidateSite:
    """A possible RSU mounting spot plus the hardware that would go there."""

    site_id: str
    x: float
    y: float
    z: float
    yaw: float
    pitch: float
    hfov: float = DEFAULT_HFOV_RAD
    vfov: float = DEFAULT_VFOV_RAD
    max_range: float = DEFAULT_RANGE_M
    frame_rate: float = 10.0
    latency: float = 0.025

    def __post_init__(self) -> None:
        if not self.site_id:
            raise ValueError("site_id must be non-empty")
        if self.z <= 0:
            raise ValueError("mounting height must be positive")

    def to_unit(self) -> SensorUnit:
        return SensorUnit(
            sensor_id=self.site_id,
            mount="rsu",
            pose=MountPose(self.x, self.y, self.z, self.yaw, self.pitch),
            hfov=self.hfov,
            vfov=self.vfov,
            max_range=self.max_range,
            frame_rate=self.frame_rate,
            latency=self.latency,
        )


def candidate_sites_from_units(units: Iterable[SensorUnit]) -> tuple[CandidateSite, ...]:
    """Adapt a sensor layout (e.g. a parsed layout file) into candidates."""
    sites = []
    for u in units:
        if u.mount != "rsu":
            raise ValueError(f"candidate {u.sensor_id!r} must be rsu-mounted")
        sites.append(
            CandidateSite(
                site_id=u.sensor_id,
                x=u.pose.x,
                y=u.pose.y,
                z=u.pose.z,
                yaw=u.pose.yaw,
                pitch=u.pose.pitch,
                hfov=u.hfov,
                vfov=u.vfov,
                max_range=u.max_range,
                frame_rate=u.frame_rate,
                latency=u.latency,
            )
        )
    return tuple(sites)


@dataclass(frozen=True)
class SiteScore:
    site_id: str
    avoidance: float
    accuracy: float


@dataclass(frozen=True)
class PlacementResult:
    selected_site_ids: tuple[str, ...]
    marginal_gains: tuple[float, ...]
    avoidance_rate: float
    accuracy: float

    def __post_init__(self) -> None:
        if len(self.marginal_gains) != len(self.selected_site_ids):
            raise ValueError("one marginal gain per selected site required")


@dataclass
class _ObservedSuite:
    """One sensing pass per scenario; subsets are scored by replay."""

    specs: Sequence[ScenarioSpec]
    events: list[Mapping]
    n_frames: list[int]
    policy: AebPolicy
    model: DetectionModel
    dt: float
    _cache: dict = field(default_factory=dict)

    def performance(self, subset: Sequence[str]) -> tuple[float, float]:
        key = frozenset(subset)
        if key in self._cache:
            return self._cache[key]
        avoided = 0
        acc_sum = 0.0
        for spec, events, n_frames in zip(self.specs, self.events, self.n_frames):
            trigger = first_confirmed_time(events, self.policy.confirm_frames, subset)
            trace = simulate_run(
                spec, (), self.model, self.policy, (),
                dt=self.dt, trigger_override=trigger, sense=False,
            )
            if trace.outcome.avoided:
                avoided += 1
            acc_sum += accuracy(events, n_frames, subset)
        perf = (avoided / len(self.specs), acc_sum / len(self.specs))
        self._cache[key] = perf
        return perf


def _observe(
    suite: Sequence[ScenarioSpec],
    sites: Sequence[CandidateSite],
    policy: AebPolicy,
    model: DetectionModel,
    dt: float,
) -> _ObservedSuite:
    if not sites:
        raise ValueError("need at least one candidate site")
    if not suite:
        raise ValueError("need at least one scenario")
    ids = [s.site_id for s in sites]
    if len(set(ids)) != len(ids):
        raise ValueError("candidate site ids must be unique")
    units = tuple(s.to_unit() for s in sites)
    events, n_frames = [], []
    for spec in suite:
        trace = simulate_run(
            spec, units, model, policy, (), dt=dt, stop_at_collision=False
        )
        events.append(trace.events_by_sensor)
        n_frames.append(len(trace.frames))
    return _ObservedSuite(suite, events, n_frames, policy, model, dt)


def evaluate_sites(
    candidates: Sequence[CandidateSite],
    suite: Sequence[ScenarioSpec],
    policy: AebPolicy,
    model: DetectionModel,
    dt: float = 0.005,
) -> tuple[SiteScore, ...]:
    """Score every candidate alone over the whole suite."""
    observed = _observe(suite, candidates, policy, model, dt)
    scores = []
    for site in candidates:
        avoidance_rate, acc = observed.performance((site.site_id,))
        scores.append(SiteScore(site.site_id, avoidance_rate, acc))
    return tuple(scores)


def greedy_select(
    candidates: Sequence[CandidateSite],
    budget: int,
    suite: Sequence[ScenarioSpec],
    policy: AebPolicy,
    model: DetectionModel,
    dt: float = 0.005,
) -> PlacementResult:
    """Pick up to ``budget`` sites, one at a time, by re-simulated gain.

    Each round adds the site whose fused subset gives the best (avoidance,
    accuracy) pair; ties fall to the lower site id.
    """
    if budget < 1:
        raise ValueError("budget must be at least 1")
    observed = _observe(suite, candidates, policy, model, dt)
    if budget > len(candidates):
        log.warning(
            "budget %d exceeds %d candidate(s); selecting all", budget, len(candidates)
        )
        budget = len(candidates)

    remaining = sorted((s.site_id for s in candidates), key=natural_key)
    selected: list[str] = []
    gains: list[float] = []
    current = observed.performance(())
    while remaining and len(selected) < budget:
        best_id, best_perf = None, None
        for site_id in remaining:
            perf = observed.performance(tuple(selected) + (site_id,))
            if best_perf is None or perf > best_perf:
                best_id, best_perf = site_id, perf
        selected.append(best_id)
        remaining.remove(best_id)
        gains.append(best_perf[0] - current[0])
        current = best_perf

    return PlacementResult(
        selected_site_ids=tuple(selected),
        marginal_gains=tuple(gains),
        avoidance_rate=current[0],
        accuracy=current[1],
    )
