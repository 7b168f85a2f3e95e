"""File formats: rig calibration, match CSV, KITTI-style trajectories,
per-frame scale files and declarative simulation scenarios."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .geometry import (GenericCamera, PinholeCamera, PinholeIntrinsics, Pose)
from .manifold import CameraRig, MotionParams, RigCamera
from .simulate import NoiseSpec, SceneSpec

MATCH_HEADER = ["t0", "t1", "camera_id", "u0", "v0", "u1", "v1"]


class ParseError(Exception):
    def __init__(self, path, line, message):
        super().__init__(f"{path}:{line}: {message}")
        self.path, self.line = path, line


class CalibrationInvalid(Exception):
    pass


class NonMonotoneFrames(Exception):
    pass


class NoRecords(Exception):
    pass


def _fmt(x: float) -> str:
    """Shortest decimal that round-trips the float exactly."""
    return repr(float(x))


# ---------------------------------------------------------------- rig files

def load_rig(path) -> CameraRig:
    """Rig file: one key-value block per camera, blocks separated by blank
    lines. Keys: id, model (pinhole|generic), intrinsics (fx fy cx cy
    [skew]), image_size (w h, optional), table (path, generic only),
    extrinsic (12 reals, row-major 3x4)."""
    blocks = [{}]
    with open(path, encoding="utf-8") as fh:
        for lineno, rawline in enumerate(fh, 1):
            line = rawline.split("#", 1)[0].strip()
            if not line:
                if blocks[-1]:
                    blocks.append({})
                continue
            parts = line.split()
            blocks[-1][parts[0]] = (parts[1:], lineno)
    blocks = [b for b in blocks if b]
    if not blocks:
        raise ParseError(path, 0, "rig file defines no cameras")
    cameras = []
    for block in blocks:
        try:
            cam_id = int(block["id"][0][0])
            kind = block["model"][0][0]
            ext_vals = [float(v) for v in block["extrinsic"][0]]
        except KeyError as exc:
            raise ParseError(path, 0, f"camera block missing key {exc}")
        except ValueError as exc:
            raise ParseError(path, 0, f"bad numeric field: {exc}")
        if len(ext_vals) != 12:
            raise ParseError(path, block["extrinsic"][1],
                             "extrinsic needs 12 values")
        mat = np.array(ext_vals).reshape(3, 4)
        try:
            extrinsic = Pose(mat[:, :3], mat[:, 3])
        except ValueError as exc:
            raise CalibrationInvalid(str(exc))
        image_size = None
        if "image_size" in block:
            image_size = tuple(float(v) for v in block["image_size"][0])
        if kind == "pinhole":
            vals = [float(v) for v in block["intrinsics"][0]]
            if len(vals) not in (4, 5):
                raise ParseError(path, block["intrinsics"][1],
                                 "intrinsics needs fx fy cx cy [skew]")
            model = PinholeCamera(PinholeIntrinsics(*vals), image_size)
        elif kind == "generic":
            table_path = block["table"][0][0]
            model = load_bearing_table(table_path, image_size)
        else:
            raise ParseError(path, block["model"][1],
                             f"unknown camera model {kind!r}")
        cameras.append(RigCamera(cam_id, model, extrinsic))
    try:
        return CameraRig(tuple(cameras))
    except ValueError as exc:
        raise CalibrationInvalid(str(exc))


def write_rig(rig: CameraRig, path):
    lines = []
    for cam in rig.cameras:
        lines.append(f"id {cam.camera_id}")
        lines.append(f"model {cam.model.kind}")
        if cam.model.kind == "pinhole":
            k = cam.model.intrinsics
            lines.append("intrinsics " + " ".join(
                _fmt(v) for v in (k.fx, k.fy, k.cx, k.cy, k.skew)))
        else:
            raise ValueError("writing generic cameras is not supported")
        if cam.model.image_size is not None:
            lines.append("image_size " + " ".join(
                _fmt(v) for v in cam.model.image_size))
        lines.append("extrinsic " + " ".join(
            _fmt(v) for v in cam.extrinsic.matrix34().ravel()))
        lines.append("")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines))


def load_bearing_table(path, image_size=None) -> GenericCamera:
    """Bearing table: header `u0 v0 du dv nu nv` then nu*nv unit bearings
    (three reals per line), row-major over v then u."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 6:
            raise ParseError(path, 1, "header needs u0 v0 du dv nu nv")
        u0, v0, du, dv = map(float, header[:4])
        nu, nv = int(header[4]), int(header[5])
        data = np.loadtxt(fh)
    if data.shape != (nu * nv, 3):
        raise ParseError(path, 2, f"expected {nu * nv} bearing rows")
    return GenericCamera(u0, v0, du, dv, data.reshape(nv, nu, 3), image_size)


# -------------------------------------------------------------- match files

@dataclass(frozen=True)
class FramePairRecord:
    """Pixel matches of one consecutive frame pair, keyed by camera id."""

    t0: int
    t1: int
    pixels: dict = field(default_factory=dict)  # camera_id -> (px0, px1)

    def match_count(self) -> int:
        return sum(len(p0) for p0, _ in self.pixels.values())


def load_matches(path):
    """Match CSV with header t0,t1,camera_id,u0,v0,u1,v1; one line per
    match, records grouped by (t0, t1) in strictly increasing t0 order."""
    rows = {}
    order = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != MATCH_HEADER:
            raise ParseError(path, 1, f"expected header {','.join(MATCH_HEADER)}")
        for lineno, row in enumerate(reader, 2):
            if not row:
                continue
            if len(row) != 7:
                raise ParseError(path, lineno, "expected 7 fields")
            try:
                t0, t1, cam = int(row[0]), int(row[1]), int(row[2])
                u0, v0, u1, v1 = map(float, row[3:])
            except ValueError as exc:
                raise ParseError(path, lineno, str(exc))
            key = (t0, t1)
            if key not in rows:
                rows[key] = {}
                order.append(key)
            rows[key].setdefault(cam, []).append((u0, v0, u1, v1))
    records = []
    last_t0 = None
    for t0, t1 in order:
        if last_t0 is not None and t0 <= last_t0:
            raise NonMonotoneFrames(
                f"frame index {t0} does not increase past {last_t0}")
        last_t0 = t0
        pixels = {}
        for cam, quads in rows[(t0, t1)].items():
            arr = np.array(quads)
            pixels[cam] = (arr[:, :2], arr[:, 2:])
        records.append(FramePairRecord(t0, t1, pixels))
    return records


def write_matches(records, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(MATCH_HEADER)
        for rec in records:
            for cam in sorted(rec.pixels):
                px0, px1 = rec.pixels[cam]
                for (u0, v0), (u1, v1) in zip(px0, px1):
                    writer.writerow([rec.t0, rec.t1, cam, _fmt(u0), _fmt(v0),
                                     _fmt(u1), _fmt(v1)])


# --------------------------------------------------------- trajectory files

@dataclass(frozen=True)
class TrajectoryRecord:
    poses: tuple
    timestamps: tuple | None = None

    def __post_init__(self):
        poses = tuple(self.poses)
        if not poses:
            raise ValueError("trajectory needs at least one pose")
        if not poses[0].isclose(Pose.identity(), atol=1e-12):
            raise ValueError("first trajectory pose must be identity")
        object.__setattr__(self, "poses", poses)
        if self.timestamps is not None:
            ts = tuple(float(t) for t in self.timestamps)
            if len(ts) != len(poses):
                raise ValueError("one timestamp per pose required")
            object.__setattr__(self, "timestamps", ts)

    def __len__(self):
        return len(self.poses)


def write_trajectory(trajectory: TrajectoryRecord, path):
    """One line per frame: the 12 row-major values of [R|t], printed with
    shortest round-trip formatting."""
    with open(path, "w", encoding="utf-8") as fh:
        for pose in trajectory.poses:
            fh.write(" ".join(_fmt(v) for v in pose.matrix34().ravel()))
            fh.write("\n")


def load_trajectory(path) -> TrajectoryRecord:
    poses = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            vals = line.split()
            if len(vals) != 12:
                raise ParseError(path, lineno, "expected 12 values per line")
            try:
                mat = np.array([float(v) for v in vals]).reshape(3, 4)
                poses.append(Pose(mat[:, :3], mat[:, 3]))
            except ValueError as exc:
                raise ParseError(path, lineno, str(exc))
    if not poses:
        raise ParseError(path, 0, "empty trajectory file")
    return TrajectoryRecord(tuple(poses))


def load_scale(path):
    """Per-frame-pair arc lengths, one real per line."""
    values = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                values.append(float(line))
            except ValueError as exc:
                raise ParseError(path, lineno, str(exc))
    return values


def write_scale(values, path):
    with open(path, "w", encoding="utf-8") as fh:
        for v in values:
            fh.write(_fmt(v) + "\n")


# ------------------------------------------------------------ scenario files

@dataclass(frozen=True)
class SequenceProfile:
    """Per-frame truth for a simulated drive: (frame_count, yaw) segments
    with a shared arc length per frame."""

    segments: tuple   # ((count, yaw), ...)

    def yaw_per_frame(self):
        out = []
        for count, yaw in self.segments:
            out.extend([yaw] * count)
        return out


@dataclass(frozen=True)
class Scenario:
    scene: SceneSpec
    noise: NoiseSpec
    truth: MotionParams
    rig: CameraRig
    sequence: SequenceProfile | None = None


def _parse_keyvalues(path):
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, rawline in enumerate(fh, 1):
            line = rawline.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParseError(path, lineno, "expected key = value")
            key, _, val = line.partition("=")
            values[key.strip()] = (val.strip(), lineno)
    return values


def load_scenario(path) -> Scenario:
    """Scenario key-value file. Keys: rig (path, relative to the scenario
    file), seed, scene.*, noise.*, truth.*, sequence.segments."""
    import os

    raw = _parse_keyvalues(path)

    def take(key, default=None, cast=float):
        if key in raw:
            val, lineno = raw[key]
            try:
                return cast(val)
            except ValueError as exc:
                raise ParseError(path, lineno, str(exc))
        return default

    seed = take("seed", 0, int)
    scene = SceneSpec(
        num_points=take("scene.num_points", 200, int),
        depth_range=(take("scene.depth_min", 5.0),
                     take("scene.depth_max", 40.0)),
        lateral_spread=take("scene.lateral_spread", 8.0),
        seed=take("scene.seed", seed, int))
    noise = NoiseSpec(
        pixel_sigma=take("noise.pixel_sigma", 0.0),
        outlier_fraction=take("noise.outlier_fraction", 0.0),
        outlier_mode=take("noise.outlier_mode", "uniform_image", str),
        seed=take("noise.seed", seed + 1, int))
    free = tuple(f.strip() for f in
                 take("truth.free", "yaw", str).split(",") if f.strip())
    truth = MotionParams(yaw=take("truth.yaw", 0.0),
                         arc_length=take("truth.arc_length", 1.0),
                         pitch=take("truth.pitch", 0.0),
                         roll=take("truth.roll", 0.0),
                         free=free)
    if "rig" not in raw:
        raise ParseError(path, 0, "scenario needs a rig entry")
    rig_path = raw["rig"][0]
    if not os.path.isabs(rig_path):
        rig_path = os.path.join(os.path.dirname(os.path.abspath(path)),
                                rig_path)
    rig = load_rig(rig_path)
    sequence = None
    if "sequence.segments" in raw:
        val, lineno = raw["sequence.segments"]
        segments = []
        for item in val.split(","):
            try:
                count, yaw = item.split(":")
                segments.append((int(count), float(yaw)))
            except ValueError as exc:
                raise ParseError(path, lineno, str(exc))
        sequence = SequenceProfile(tuple(segments))
    return Scenario(scene, noise, truth, rig, sequence)
