"""Per-sequence orchestration: chaining frame-pair estimates into a
trajectory, scale handling, and sequence simulation for the CLI."""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from .estimator import (EstimateResult, EstimatorOptions, NoMatches,
                        default_cold_start_grid, estimate)
from .geometry import DegenerateTranslation, Pose
from .io_formats import (FramePairRecord, NoRecords, Scenario,
                         TrajectoryRecord)
from .manifold import CameraRig, MotionParams, pose_from_params
from .metrics import MatchSet
from .simulate import NoVisiblePoints, generate_matches, generate_scene

CURVE_YAW_THRESHOLD = 0.01


@dataclass(frozen=True)
class FixedScale:
    """Arc length fixed per frame pair from an external source."""

    values: tuple

    def __post_init__(self):
        object.__setattr__(self, "values",
                           tuple(float(v) for v in self.values))


@dataclass(frozen=True)
class FreeInCurves:
    """Arc length optimized only while the prior yaw exceeds the curve
    threshold; held at the last known value on straights."""

    initial: float
    curve_threshold: float = CURVE_YAW_THRESHOLD


@dataclass(frozen=True)
class FrameOutcome:
    t0: int
    t1: int
    params: MotionParams
    result: EstimateResult | None
    failed: bool
    error: str | None
    runtime_ms: float


def match_sets_from_record(record: FramePairRecord, rig: CameraRig):
    sets = []
    for cam_id in sorted(record.pixels):
        px0, px1 = record.pixels[cam_id]
        cam = rig.camera(cam_id)
        sets.append(MatchSet.from_pixels(cam_id, cam.model, px0, px1))
    return sets


def run_sequence(rig: CameraRig, records, scale_source,
                 opts: EstimatorOptions = EstimatorOptions(),
                 prior: MotionParams | None = None):
    """Estimate every frame pair, each initialized from the previous
    result; failed frames carry the prior motion forward, flagged.

    Returns (TrajectoryRecord, list of FrameOutcome).
    """
    records = list(records)
    if not records:
        raise NoRecords("no frame pair records")
    if isinstance(scale_source, FixedScale) and \
            len(scale_source.values) < len(records):
        raise ValueError("scale file shorter than the record list")

    held_arc = (scale_source.initial if isinstance(scale_source, FreeInCurves)
                else scale_source.values[0])
    if prior is None:
        prior = MotionParams(yaw=0.0, arc_length=held_arc, free=("yaw",))
        first_opts = replace(opts, fallback_grid=opts.fallback_grid
                             or default_cold_start_grid(prior))
    else:
        first_opts = opts

    poses = [Pose.identity()]
    outcomes = []
    current = prior
    for index, record in enumerate(records):
        if isinstance(scale_source, FixedScale):
            arc = scale_source.values[index]
            free = tuple(f for f in current.free if f != "arc_length")
            current = replace(current, arc_length=arc, free=free or ("yaw",))
        else:
            in_curve = abs(current.yaw) >= scale_source.curve_threshold
            free = set(current.free) | {"yaw"}
            if in_curve:
                free.add("arc_length")
            else:
                free.discard("arc_length")
            current = replace(current, arc_length=held_arc,
                              free=tuple(free))
        frame_opts = first_opts if index == 0 else opts
        start = time.perf_counter()
        try:
            result = estimate(rig, match_sets_from_record(record, rig),
                              current, frame_opts)
            runtime = (time.perf_counter() - start) * 1e3
            current = result.params
            if (isinstance(scale_source, FreeInCurves)
                    and "arc_length" in result.params.free
                    and result.condition_note != "scale_unobservable"):
                held_arc = result.params.arc_length
            outcomes.append(FrameOutcome(record.t0, record.t1,
                                         result.params, result, False, None,
                                         runtime))
        except (NoMatches, DegenerateTranslation, NoVisiblePoints) as exc:
            runtime = (time.perf_counter() - start) * 1e3
            outcomes.append(FrameOutcome(record.t0, record.t1, current,
                                         None, True, str(exc), runtime))
        poses.append(poses[-1].compose(pose_from_params(current)))
    return TrajectoryRecord(tuple(poses)), outcomes


def simulate_sequence(scenario: Scenario):
    """Generate per-frame match records and the ground-truth trajectory
    for a scenario; a fresh scene is drawn for every frame pair.

    Returns (records, TrajectoryRecord, scale values).
    """
    if scenario.sequence is not None:
        yaws = scenario.sequence.yaw_per_frame()
    else:
        yaws = [scenario.truth.yaw]
    records = []
    poses = [Pose.identity()]
    scales = []
    for k, yaw in enumerate(yaws):
        truth = replace(scenario.truth, yaw=yaw)
        scene = replace(scenario.scene, seed=scenario.scene.seed + 1000 * k)
        noise = replace(scenario.noise, seed=scenario.noise.seed + 1000 * k)
        points = generate_scene(scene)
        match_sets, _ = generate_matches(points, scenario.rig, truth, noise)
        pixels = {s.camera_id: (np.asarray(s.pixels_t0),
                                np.asarray(s.pixels_t1))
                  for s in match_sets}
        records.append(FramePairRecord(k, k + 1, pixels))
        poses.append(poses[-1].compose(pose_from_params(truth)))
        scales.append(truth.arc_length)
    return records, TrajectoryRecord(tuple(poses)), scales
