"""Score external detector logs against ground truth and feed the pipeline.

A detector run on recorded footage produces pixel boxes per frame and
sensor.  This module parses those logs plus the matching ground truth,
applies box-IoU matching, and turns true positives into the same
DetectionEvent stream the simulated sensors emit, so confirmation and
braking analysis run unchanged on real detections.

Matching is greedy by descending IoU over each (frame, sensor) cell: the
highest-IoU eligible pair is matched first, each detection and each ground
truth box at most once, ties broken by the lower detection index and then
the lower ground-truth index.  A pair is eligible only when the class
labels agree.  The threshold is strict (IoU must exceed it); pass
``inclusive=True`` for the at-least convention.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Mapping, Sequence

from .geometry import AxisBox2, iou_axis_box
from .sensing import DetectionEvent

__all__ = [
    "ExternalDetection",
    "GroundTruthRecord",
    "MatchCounts",
    "MatchResult",
    "MatchedPair",
    "parse_detection_log",
    "parse_ground_truth",
    "match_detections",
    "DETECTION_LOG_HEADER",
    "GROUND_TRUTH_HEADER",
    "VRU_LABELS",
]

DETECTION_LOG_HEADER = "frame,sensor_id,label,x_min,y_min,x_max,y_max,confidence"
GROUND_TRUTH_HEADER = "frame,sensor_id,target_id,label,x_min,y_min,x_max,y_max"

# classes whose confirmed detections participate in emergency braking;
# everything else is scored but never reaches the safety pipeline
VRU_LABELS = frozenset({"pedestrian", "cyclist"})


@dataclass(frozen=True)
class ExternalDetection:
    frame: int
    sensor_id: str
    label: str
    box: AxisBox2
    confidence: float

    def __post_init__(self) -> None:
        if self.frame < 0:
            raise ValueError("frame index must be non-negative")
        if not self.sensor_id or not self.label:
            raise ValueError("sensor_id and label must be non-empty")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence must lie in [0, 1]")


@dataclass(frozen=True)
class GroundTruthRecord:
    frame: int
    sensor_id: str
    target_id: str
    label: str
    box: AxisBox2

    def __post_init__(self) -> None:
        if self.frame < 0:
            raise ValueError("frame index must be non-negative")
        if not self.sensor_id or not self.target_id or not self.label:
            raise ValueError("sensor_id, target_id and label must be non-empty")


def _split_line(line: str, n_fields: int, where: str) -> list[str]:
    parts = [p.strip() for p in line.split(",")]
    if len(parts) != n_fields:
        raise ValueError(f"{where}: expected {n_fields} comma-separated fields, got {len(parts)}")
    return parts


def _parse_box(parts: Sequence[str], where: str) -> AxisBox2:
    try:
        x0, y0, x1, y1 = (float(p) for p in parts)
    except ValueError:
        raise ValueError(f"{where}: box coordinates must be numbers") from None
    if x1 < x0 or y1 < y0:
        raise ValueError(f"{where}: box extent is negative ({x0},{y0})..({x1},{y1})")
    return AxisBox2(x0, y0, x1, y1)


def _read_rows(path: str | os.PathLike, header: str, kind: str):
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    header_seen = False
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        where = f"{kind} line {lineno}"
        if not header_seen:
            if line != header:
                raise ValueError(f"{where}: expected header {header!r}")
            header_seen = True
            continue
        yield where, line
    # a file with no rows (or nothing at all) is a valid empty log


def parse_detection_log(path: str | os.PathLike) -> list[ExternalDetection]:
    records = []
    for where, line in _read_rows(path, DETECTION_LOG_HEADER, "detection log"):
        parts = _split_line(line, 8, where)
        try:
            frame = int(parts[0])
        except ValueError:
            raise ValueError(f"{where}: frame must be an integer") from None
        box = _parse_box(parts[3:7], where)
        try:
            confidence = float(parts[7])
        except ValueError:
            raise ValueError(f"{where}: confidence must be a number") from None
        try:
            records.append(ExternalDetection(frame, parts[1], parts[2], box, confidence))
        except ValueError as exc:
            raise ValueError(f"{where}: {exc}") from None
    return records


def parse_ground_truth(path: str | os.PathLike) -> list[GroundTruthRecord]:
    records = []
    for where, line in _read_rows(path, GROUND_TRUTH_HEADER, "ground truth"):
        parts = _split_line(line, 8, where)
        try:
            frame = int(parts[0])
        except ValueError:
            raise ValueError(f"{where}: frame must be an integer") from None
        box = _parse_box(parts[4:8], where)
        try:
            records.append(GroundTruthRecord(frame, parts[1], parts[2], parts[3], box))
        except ValueError as exc:
            raise ValueError(f"{where}: {exc}") from None
    return records


@dataclass(frozen=True)
class MatchCounts:
    tp: int
    fp: int
    fn: int

    def __add__(self, other: "MatchCounts") -> "MatchCounts":
        return MatchCounts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)


@dataclass(frozen=True)
class MatchedPair:
    frame: int
    sensor_id: str
    detection_index: int
    ground_truth_index: int
    iou: float


@dataclass(frozen=True)
class MatchResult:
    """Matching outcome: per-cell counts, matched pairs, and safety events.

    ``counts`` is keyed by (frame, sensor_id).  Indices in ``pairs`` point
    into the input sequences.  ``events`` holds one DetectionEvent per
    VRU-class true positive; pipe them through ``events_by_sensor`` to get
    the per-sensor streams the confirmation rule consumes.
    """

    counts: Mapping[tuple[int, str], MatchCounts]
    pairs: tuple[MatchedPair, ...]
    events: tuple[DetectionEvent, ...]

    def totals(self) -> MatchCounts:
        total = MatchCounts(0, 0, 0)
        for c in self.counts.values():
            total = total + c
        return total

    def events_by_sensor(self, target_id: str) -> dict[str, list[DetectionEvent]]:
        """Per-sensor streams for one target, ordered by frame."""
        streams: dict[str, list[DetectionEvent]] = {}
        for ev in self.events:
            if ev.target_id == target_id:
                streams.setdefault(ev.sensor_id, []).append(ev)
        for stream in streams.values():
            stream.sort(key=lambda ev: ev.frame)
        return streams


def match_detections(
    detections: Sequence[ExternalDetection],
    ground_truth: Sequence[GroundTruthRecord],
    iou_threshold: float = 0.5,
    inclusive: bool = False,
    frame_rate: float = 10.0,
    latency: float = 0.025,
) -> MatchResult:
    """Greedy IoU matching of detections to ground truth, per frame and sensor.

    True positives on VRU-class targets become DetectionEvents stamped with
    the sensor latency, ready for the confirmation rule.  An ingested event
    carries no geometric view, so visible_fraction is reported as 1.0 (the
    detector did see it) and the apparent angles as 0.0.
    """
    if not 0.0 <= iou_threshold <= 1.0:
        raise ValueError("iou_threshold must lie in [0, 1]")
    if frame_rate <= 0 or latency < 0:
        raise ValueError("frame_rate must be positive and latency non-negative")

    cells: dict[tuple[int, str], tuple[list[int], list[int]]] = {}
    for i, det in enumerate(detections):
        cells.setdefault((det.frame, det.sensor_id), ([], []))[0].append(i)
    for j, gt in enumerate(ground_truth):
        cells.setdefault((gt.frame, gt.sensor_id), ([], []))[1].append(j)

    counts: dict[tuple[int, str], MatchCounts] = {}
    pairs: list[MatchedPair] = []
    events: list[DetectionEvent] = []

    def passes(iou: float) -> bool:
        return iou >= iou_threshold if inclusive else iou > iou_threshold

    for key in sorted(cells, key=lambda k: (k[0], k[1])):
        det_ids, gt_ids = cells[key]
        frame, sensor_id = key
        candidates = []
        for i in det_ids:
            for j in gt_ids:
                if detections[i].label != ground_truth[j].label:
                    continue
                iou = iou_axis_box(detections[i].box, ground_truth[j].box)
                if passes(iou):
                    candidates.append((-iou, i, j))
        candidates.sort()
        used_det: set[int] = set()
        used_gt: set[int] = set()
        for neg_iou, i, j in candidates:
            if i in used_det or j in used_gt:
                continue
            used_det.add(i)
            used_gt.add(j)
            pairs.append(MatchedPair(frame, sensor_id, i, j, -neg_iou))
            gt = ground_truth[j]
            if gt.label in VRU_LABELS:
                events.append(
                    DetectionEvent(
                        frame=frame,
                        sensor_id=sensor_id,
                        target_id=gt.target_id,
                        visible_fraction=1.0,
                        apparent_width=0.0,
                        apparent_height=0.0,
                        available_at=frame / frame_rate + latency,
                    )
                )
        counts[key] = MatchCounts(
            tp=len(used_gt),
            fp=len(det_ids) - len(used_det),
            fn=len(gt_ids) - len(used_gt),
        )

    return MatchResult(counts=counts, pairs=tuple(pairs), events=tuple(events))
