"""Frame-to-frame motion prior estimation for vehicle-mounted camera rigs.

Robustly minimizes epipolar error over a single-track motion manifold,
for one or many rigidly mounted cameras without overlapping fields of view.
"""

from .estimator import (EstimateResult, EstimatorOptions, GridSpec,
                        Landscape, LandscapeGrid, NoMatches,
                        classify_inliers, energy_landscape, estimate,
                        internal_gradient, numeric_gradient)
from .evaluation import EvalReport, TrajectoryTooShort, evaluate
from .geometry import (BehindCamera, DegenerateTranslation, GenericCamera,
                       GeometryError, OutOfDomain, PinholeCamera,
                       PinholeIntrinsics, Pose, bearing_from_pixel, compose,
                       essential_from_motion, forward_camera_extrinsic,
                       fundamental_from_essential, inverse, project, skew)
from .io_formats import (CalibrationInvalid, FramePairRecord,
                         NonMonotoneFrames, NoRecords, ParseError, Scenario,
                         TrajectoryRecord, load_matches, load_rig,
                         load_scale, load_scenario, load_trajectory,
                         write_matches, write_rig, write_scale,
                         write_trajectory)
from .manifold import (CameraRig, DimensionMismatch, MotionParams, RigCamera,
                       camera_point_transform, conjugate_to_camera,
                       multi_camera_energy, pack_free, pose_from_params,
                       unpack_free)
from .metrics import (EpipoleDegenerate, FeatureMatch, MatchSet, MetricKind,
                      RobustLoss, angleplane_energy, angleplane_residual,
                      angleplane_residuals, epipolar_line_distance,
                      geoline_energy, geoline_residuals, robust_loss_eval)
from .pipeline import (FixedScale, FrameOutcome, FreeInCurves,
                       match_sets_from_record, run_sequence,
                       simulate_sequence)
from .simulate import (NoiseSpec, NoVisiblePoints, SceneSpec,
                       generate_matches, generate_scene, grid_search_oracle)

__version__ = "0.1.0"
