import numpy as np
import pytest

from motionprior.geometry import (PinholeCamera, PinholeIntrinsics,
                                  forward_camera_extrinsic)
from motionprior.io_formats import (FramePairRecord, NoRecords, Scenario,
                                    SequenceProfile)
from motionprior.manifold import (CameraRig, MotionParams, RigCamera,
                                  pose_from_params)
from motionprior.pipeline import (FixedScale, FreeInCurves,
                                  match_sets_from_record, run_sequence,
                                  simulate_sequence)
from motionprior.simulate import (NoiseSpec, SceneSpec, generate_matches,
                                  generate_scene)

INTR = PinholeIntrinsics(700.0, 700.0, 640.0, 480.0)


def make_rig(offsets):
    cams = tuple(RigCamera(i, PinholeCamera(INTR, (1280, 960)),
                           forward_camera_extrinsic(offset))
                 for i, offset in enumerate(offsets))
    return CameraRig(cams)


RIG1 = make_rig([[2.0, 0.0, 0.0]])
RIG2 = make_rig([[2.0, 0.0, 0.0], [1.0, 0.8, 0.2]])


def make_records(rig, yaws, arc=1.0, seed=0, noise=NoiseSpec(seed=1)):
    records = []
    for k, yaw in enumerate(yaws):
        truth = MotionParams(yaw=yaw, arc_length=arc)
        points = generate_scene(SceneSpec(150, seed=seed + k))
        sets, _ = generate_matches(points, rig, truth, noise)
        pixels = {s.camera_id: (np.asarray(s.pixels_t0),
                                np.asarray(s.pixels_t1)) for s in sets}
        records.append(FramePairRecord(k, k + 1, pixels))
    return records


class TestMatchSetsFromRecord:
    def test_bearings_match_camera_model(self):
        records = make_records(RIG2, [0.02])
        sets = match_sets_from_record(records[0], RIG2)
        assert [s.camera_id for s in sets] == [0, 1]
        cam = RIG2.camera(1)
        expected = cam.model.pixel_to_bearing(sets[1].pixels_t0)
        assert np.allclose(sets[1].bearings_t0, expected)


class TestRunSequence:
    def test_fixed_scale_noise_free_recovery(self):
        yaws = [0.03, 0.03, -0.02, 0.0, 0.01]
        records = make_records(RIG1, yaws)
        traj, outcomes = run_sequence(RIG1, records,
                                      FixedScale([1.0] * len(yaws)))
        assert len(traj) == len(yaws) + 1
        assert not any(o.failed for o in outcomes)
        for o, yaw in zip(outcomes, yaws):
            assert o.params.arc_length == 1.0
            assert abs(o.params.yaw - yaw) < 1e-6

    def test_fixed_scale_values_respected(self):
        records = make_records(RIG1, [0.02, 0.02], arc=1.3)
        traj, outcomes = run_sequence(RIG1, records, FixedScale([1.3, 1.3]))
        truth = pose_from_params(MotionParams(yaw=0.02, arc_length=1.3))
        step = traj.poses[0].inverse().compose(traj.poses[1])
        assert step.isclose(truth, atol=1e-5)

    def test_scale_file_too_short(self):
        records = make_records(RIG1, [0.02, 0.02])
        with pytest.raises(ValueError):
            run_sequence(RIG1, records, FixedScale([1.0]))

    def test_empty_records(self):
        with pytest.raises(NoRecords):
            run_sequence(RIG1, [], FixedScale([]))

    def test_free_in_curves_holds_arc_on_straights(self):
        yaws = [0.0, 0.0, 0.0]
        records = make_records(RIG2, yaws, arc=1.5)
        _, outcomes = run_sequence(RIG2, records, FreeInCurves(1.2))
        for o in outcomes:
            assert o.params.arc_length == 1.2
            assert "arc_length" not in o.params.free

    def test_free_in_curves_recovers_scale_in_curve(self):
        # straight frames to build up a yaw prior, then a curve where the
        # two-camera lever arm makes the true arc length observable
        yaws = [0.0, 0.04, 0.04, 0.04]
        records = make_records(RIG2, yaws, arc=1.5)
        _, outcomes = run_sequence(RIG2, records, FreeInCurves(1.0))
        assert outcomes[0].params.arc_length == 1.0
        last = outcomes[-1]
        assert "arc_length" in last.params.free
        assert abs(last.params.arc_length - 1.5) < 1e-3

    def test_free_in_curves_held_arc_persists_after_curve(self):
        yaws = [0.0, 0.04, 0.04, 0.04, 0.0, 0.0]
        records = make_records(RIG2, yaws, arc=1.5)
        _, outcomes = run_sequence(RIG2, records, FreeInCurves(1.0))
        # once the curve fixed the scale, later straight frames hold it
        final = outcomes[-1]
        assert "arc_length" not in final.params.free
        assert abs(final.params.arc_length - 1.5) < 1e-3

    def test_failed_frame_carries_prior(self):
        records = make_records(RIG1, [0.02, 0.02])
        # second record has no matches at all
        records[1] = FramePairRecord(1, 2, {0: (np.zeros((0, 2)),
                                                np.zeros((0, 2)))})
        traj, outcomes = run_sequence(RIG1, records, FixedScale([1.0, 1.0]))
        assert not outcomes[0].failed and outcomes[1].failed
        assert outcomes[1].error
        # the carried-forward motion repeats the last good estimate
        step1 = traj.poses[0].inverse().compose(traj.poses[1])
        step2 = traj.poses[1].inverse().compose(traj.poses[2])
        assert step1.isclose(step2, atol=1e-12)

    def test_chained_trajectory_matches_truth(self):
        yaws = [0.01, 0.02, 0.03]
        records = make_records(RIG1, yaws)
        traj, _ = run_sequence(RIG1, records, FixedScale([1.0] * 3))
        expected = pose_from_params(MotionParams(yaw=yaws[0], arc_length=1.0))
        for yaw in yaws[1:]:
            expected = expected.compose(
                pose_from_params(MotionParams(yaw=yaw, arc_length=1.0)))
        assert traj.poses[-1].isclose(expected, atol=1e-5)

    def test_runtime_recorded(self):
        records = make_records(RIG1, [0.02])
        _, outcomes = run_sequence(RIG1, records, FixedScale([1.0]))
        assert outcomes[0].runtime_ms > 0.0


class TestSimulateSequence:
    def scenario(self, segments):
        return Scenario(
            scene=SceneSpec(120, seed=3),
            noise=NoiseSpec(seed=4),
            truth=MotionParams(yaw=0.0, arc_length=1.0, free=("yaw",)),
            rig=RIG2,
            sequence=SequenceProfile(segments))

    def test_frame_count_and_scales(self):
        records, gt, scales = simulate_sequence(self.scenario(((3, 0.0),
                                                               (2, 0.05))))
        assert len(records) == 5
        assert len(gt) == 6
        assert scales == [1.0] * 5

    def test_ground_truth_geometry(self):
        _, gt, _ = simulate_sequence(self.scenario(((2, 0.0),)))
        assert np.allclose(gt.poses[2].translation, [2.0, 0.0, 0.0],
                           atol=1e-12)

    def test_fresh_scene_per_frame(self):
        records, _, _ = simulate_sequence(self.scenario(((2, 0.0),)))
        assert not np.array_equal(records[0].pixels[0][0],
                                  records[1].pixels[0][0])

    def test_round_trip_with_estimator(self):
        records, gt, _ = simulate_sequence(self.scenario(((2, 0.0),
                                                          (3, 0.04))))
        traj, outcomes = run_sequence(RIG2, records, FreeInCurves(1.0))
        assert not any(o.failed for o in outcomes)
        assert traj.poses[-1].isclose(gt.poses[-1], atol=1e-4)
