"""Single-track motion manifold, camera-frame conjugation and the
multi-camera energy."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .geometry import (DegenerateTranslation, Pose, essential_from_motion,
                       fundamental_from_essential, rotation_x, rotation_y,
                       rotation_z)
from .metrics import (MetricKind, RobustLoss, angleplane_energy,
                      geoline_energy)

PARAM_FIELDS = ("yaw", "arc_length", "pitch", "roll")

YAW_SERIES_SWITCH = 1e-6


class DimensionMismatch(Exception):
    pass


@dataclass(frozen=True)
class MotionParams:
    """Coordinates on the motion manifold: one frame-to-frame step is an
    arc of yaw `yaw` and length `arc_length`, optionally tilted by pitch
    and roll. `free` names the fields the optimizer may vary."""

    yaw: float = 0.0
    arc_length: float = 0.0
    pitch: float = 0.0
    roll: float = 0.0
    free: tuple = ("yaw",)

    def __post_init__(self):
        if not abs(self.yaw) < np.pi:
            raise ValueError("per-frame yaw must lie in (-pi, pi)")
        unknown = set(self.free) - set(PARAM_FIELDS)
        if unknown:
            raise ValueError(f"unknown free fields: {sorted(unknown)}")
        # canonical declaration order, so pack/unpack are unambiguous
        ordered = tuple(f for f in PARAM_FIELDS if f in self.free)
        object.__setattr__(self, "free", ordered)

    def with_values(self, **kwargs) -> "MotionParams":
        return replace(self, **kwargs)


def pack_free(p: MotionParams) -> np.ndarray:
    return np.array([getattr(p, f) for f in p.free], dtype=float)


def unpack_free(vector, template: MotionParams) -> MotionParams:
    vector = np.asarray(vector, dtype=float).reshape(-1)
    if len(vector) != len(template.free):
        raise DimensionMismatch(
            f"expected {len(template.free)} values, got {len(vector)}")
    return replace(template, **dict(zip(template.free, map(float, vector))))


def pose_from_params(p: MotionParams) -> Pose:
    """Pose of the vehicle frame at t1 expressed in the frame at t0.

    The planar translation is the chord of a circular arc; near zero yaw
    the closed form l/yaw is replaced by its series expansion.
    """
    g = p.yaw
    if abs(g) < YAW_SERIES_SWITCH:
        sinc = 1.0 - g * g / 6.0 + g ** 4 / 120.0
        versine = g / 2.0 - g ** 3 / 24.0
    else:
        sinc = np.sin(g) / g
        versine = (1.0 - np.cos(g)) / g
    t = np.array([p.arc_length * sinc, p.arc_length * versine, 0.0])
    rot = rotation_z(g)
    if p.pitch or p.roll:
        rot = rot @ rotation_y(p.pitch) @ rotation_x(p.roll)
    return Pose(rot, t)


def conjugate_to_camera(motion: Pose, extrinsic: Pose) -> Pose:
    """Propagate a motion-center motion to a camera mounted at `extrinsic`."""
    return extrinsic.inverse().compose(motion).compose(extrinsic)


@dataclass(frozen=True)
class RigCamera:
    camera_id: int
    model: object
    extrinsic: Pose


@dataclass(frozen=True)
class CameraRig:
    cameras: tuple

    def __post_init__(self):
        cams = tuple(self.cameras)
        if not cams:
            raise ValueError("rig needs at least one camera")
        ids = [c.camera_id for c in cams]
        if len(set(ids)) != len(ids):
            raise ValueError("camera ids must be unique")
        object.__setattr__(self, "cameras", cams)

    def camera(self, camera_id: int) -> RigCamera:
        for c in self.cameras:
            if c.camera_id == camera_id:
                return c
        raise KeyError(f"no camera with id {camera_id}")


def camera_point_transform(motion: Pose, extrinsic: Pose) -> Pose:
    """Point transform (t0 camera coords -> t1 camera coords) feeding the
    essential matrix for one camera."""
    return conjugate_to_camera(motion, extrinsic).inverse()


def multi_camera_energy(p: MotionParams, rig: CameraRig, match_sets,
                        loss: RobustLoss, metric: MetricKind) -> float:
    """Total epipolar energy over all cameras for one manifold point."""
    pose = pose_from_params(p)
    total = 0.0
    populated = 0
    usable = 0
    for s in match_sets:
        if len(s) == 0:
            continue
        populated += 1
        cam = rig.camera(s.camera_id)
        transform = camera_point_transform(pose, cam.extrinsic)
        try:
            e = essential_from_motion(transform)
        except DegenerateTranslation:
            continue
        usable += 1
        if metric is MetricKind.GEOLINE:
            k = cam.model.intrinsics
            f = fundamental_from_essential(e, k, k)
            total += geoline_energy(f, s, loss)
        else:
            total += angleplane_energy(e, s, loss)
    if populated and not usable:
        raise DegenerateTranslation(
            "all per-camera motions have zero translation")
    return float(total)
