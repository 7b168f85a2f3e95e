"""Robust minimization of the multi-camera epipolar energy over the free
manifold parameters.

The solver is a damped least-squares loop on the robustified residual
vector z with z_i = sqrt(rho(r_i^2)) * sign(r_i), so that sum(z^2) equals
the robust energy exactly. Jacobians are central finite differences over
the (at most four) free parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import (DegenerateTranslation, Pose, essential_from_motion,
                       fundamental_from_essential)
from .manifold import (CameraRig, MotionParams, camera_point_transform,
                       multi_camera_energy, pack_free, pose_from_params,
                       unpack_free)
from .metrics import (MetricKind, RobustLoss, angleplane_residuals,
                      geoline_residuals)

FEW_MATCHES_THRESHOLD = 8
SCALE_CURVATURE_REL_TOL = 1e-9


class NoMatches(Exception):
    pass


@dataclass(frozen=True)
class GridSpec:
    """Axis-aligned evaluation grid over free parameters: field name ->
    (min, max, steps)."""

    axes: dict

    def points(self, template: MotionParams):
        axes = [np.linspace(*self.axes[f]) if f in self.axes
                else np.array([getattr(template, f)])
                for f in template.free]
        if not axes:
            return np.zeros((1, 0))
        grids = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)


def default_cold_start_grid(prior: MotionParams) -> GridSpec:
    """Coarse yaw sweep used when no trustworthy prior exists."""
    return GridSpec({"yaw": (-0.3, 0.3, 41)})


@dataclass(frozen=True)
class EstimatorOptions:
    metric: MetricKind = MetricKind.ANGLEPLANE
    loss: RobustLoss = RobustLoss("cauchy", 0.0065)
    max_iterations: int = 100
    gradient_tolerance: float = 1e-10
    step_tolerance: float = 1e-12
    fallback_grid: GridSpec | None = None
    damping_init: float = 1e-4
    jacobian_step: float = 1e-7

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if min(self.gradient_tolerance, self.step_tolerance,
               self.damping_init, self.jacobian_step) <= 0:
            raise ValueError("tolerances must be positive")


@dataclass(frozen=True)
class EstimateResult:
    params: MotionParams
    pose: Pose
    final_energy: float
    iterations: int
    converged: bool
    residuals: np.ndarray          # signed, NaN for skipped matches
    skipped_matches: int
    condition_note: str            # "ok" | "scale_unobservable" | "few_matches"


def _camera_blocks(p: MotionParams, rig: CameraRig, match_sets,
                   metric: MetricKind):
    """Per-camera residual components.

    Returns a list aligned with the non-empty match sets of
    (components (n, k), valid (n,)) and raises DegenerateTranslation when
    every populated camera degenerates.
    """
    pose = pose_from_params(p)
    blocks = []
    usable = 0
    for s in match_sets:
        if len(s) == 0:
            continue
        cam = rig.camera(s.camera_id)
        transform = camera_point_transform(pose, cam.extrinsic)
        try:
            e = essential_from_motion(transform)
        except DegenerateTranslation:
            blocks.append((np.zeros((len(s), 1)), np.zeros(len(s), bool)))
            continue
        usable += 1
        if metric is MetricKind.GEOLINE:
            k = cam.model.intrinsics
            f = fundamental_from_essential(e, k, k)
            d1, d0, valid = geoline_residuals(f, s)
            blocks.append((np.stack([d1, d0], axis=1), valid))
        else:
            r, valid = angleplane_residuals(e, s)
            blocks.append((r[:, None], valid))
    if blocks and not usable:
        raise DegenerateTranslation(
            "all per-camera motions have zero translation")
    return blocks


def _robustify(blocks, loss: RobustLoss):
    """Stack robustified residual entries so that sum(z^2) equals the
    robust energy; also return the signed raw residual per match (NaN for
    skipped) and the skip count."""
    z_parts = []
    raw_parts = []
    skipped = 0
    energy = 0.0
    for components, valid in blocks:
        squared = np.sum(components ** 2, axis=1)
        rho, _ = loss.evaluate(squared)
        energy += float(np.sum(rho[valid]))
        weight = np.ones_like(squared)
        big = squared > 1e-300
        weight[big] = np.sqrt(rho[big] / squared[big])
        z = (weight[:, None] * components)[valid].ravel()
        z_parts.append(z)
        raw = components[:, 0].copy()
        raw[~valid] = np.nan
        raw_parts.append(raw)
        skipped += int(np.sum(~valid))
    z = np.concatenate(z_parts) if z_parts else np.zeros(0)
    raw = np.concatenate(raw_parts) if raw_parts else np.zeros(0)
    return z, raw, skipped, energy


def _frozen_residuals(p, rig, match_sets, loss, metric, masks):
    """Residual vector re-evaluated at p but with validity masks frozen;
    keeps the Jacobian stencil dimension fixed."""
    blocks = _camera_blocks(p, rig, match_sets, metric)
    z_parts = []
    for (components, _), mask in zip(blocks, masks):
        squared = np.sum(components ** 2, axis=1)
        rho, _ = loss.evaluate(squared)
        weight = np.ones_like(squared)
        big = squared > 1e-300
        weight[big] = np.sqrt(rho[big] / squared[big])
        z_parts.append((weight[:, None] * components)[mask].ravel())
    return np.concatenate(z_parts) if z_parts else np.zeros(0)


def _jacobian(x, template, rig, match_sets, loss, metric, masks, h):
    n = len(x)
    cols = []
    for k in range(n):
        dx = np.zeros(n)
        dx[k] = h
        zp = _frozen_residuals(unpack_free(x + dx, template), rig,
                               match_sets, loss, metric, masks)
        zm = _frozen_residuals(unpack_free(x - dx, template), rig,
                               match_sets, loss, metric, masks)
        cols.append((zp - zm) / (2.0 * h))
    return np.stack(cols, axis=1) if cols else np.zeros((0, 0))


def internal_gradient(rig, match_sets, p: MotionParams, loss: RobustLoss,
                      metric: MetricKind, h: float = 1e-7) -> np.ndarray:
    """Gradient of the robust energy implied by the solver's residual
    Jacobian: 2 J^T z."""
    blocks = _camera_blocks(p, rig, match_sets, metric)
    masks = [valid for _, valid in blocks]
    z, _, _, _ = _robustify(blocks, loss)
    J = _jacobian(pack_free(p), p, rig, match_sets, loss, metric, masks, h)
    return 2.0 * J.T @ z


def numeric_gradient(rig, match_sets, p: MotionParams, loss: RobustLoss,
                     metric: MetricKind, h: float) -> np.ndarray:
    """Central differences of the multi-camera energy over free params."""
    if h <= 0:
        raise ValueError("h must be positive")
    x = pack_free(p)
    grad = np.zeros(len(x))
    for k in range(len(x)):
        dx = np.zeros(len(x))
        dx[k] = h
        ep = multi_camera_energy(unpack_free(x + dx, p), rig, match_sets,
                                 loss, metric)
        em = multi_camera_energy(unpack_free(x - dx, p), rig, match_sets,
                                 loss, metric)
        grad[k] = (ep - em) / (2.0 * h)
    return grad


def _safe_energy(p, rig, match_sets, loss, metric):
    try:
        return multi_camera_energy(p, rig, match_sets, loss, metric)
    except DegenerateTranslation:
        return np.inf


def _grid_best(grid: GridSpec, template, rig, match_sets, loss, metric):
    """Lowest-energy grid point; ties broken by smallest |yaw| then
    smallest arc length, for determinism."""
    best = None
    best_key = None
    for row in grid.points(template):
        try:
            p = unpack_free(row, template)
        except ValueError:
            continue
        energy = _safe_energy(p, rig, match_sets, loss, metric)
        key = (energy, abs(p.yaw), p.arc_length)
        if best_key is None or key < best_key:
            best, best_key = p, key
    return best, (best_key[0] if best_key else np.inf)


def _scale_observable(params, rig, match_sets, loss, metric):
    """Probe the energy's sensitivity to arc length at the solution."""
    l0 = params.arc_length if abs(params.arc_length) > 1e-3 else 1.0
    sweep = [_safe_energy(params.with_values(arc_length=l0 * k), rig,
                          match_sets, loss, metric)
             for k in (0.5, 0.75, 1.0, 1.5, 2.0)]
    sweep = [e for e in sweep if np.isfinite(e)]
    if len(sweep) < 2:
        return False
    variation = max(sweep) - min(sweep)
    yaw_ref = params.yaw + (0.05 if params.yaw < np.pi - 0.1 else -0.05)
    reference = _safe_energy(params.with_values(yaw=yaw_ref, arc_length=l0),
                             rig, match_sets, loss, metric)
    scale = max(max(sweep), reference if np.isfinite(reference) else 0.0,
                1e-300)
    return variation >= SCALE_CURVATURE_REL_TOL * scale


def estimate(rig: CameraRig, match_sets, prior: MotionParams,
             opts: EstimatorOptions = EstimatorOptions()) -> EstimateResult:
    """Minimize the robust multi-camera energy over the prior's free
    parameters, starting from the prior (optionally after a coarse grid)."""
    total_matches = sum(len(s) for s in match_sets)
    if total_matches == 0:
        raise NoMatches("estimation needs at least one match")
    loss, metric = opts.loss, opts.metric

    start = prior
    if opts.fallback_grid is not None:
        candidate, cand_energy = _grid_best(opts.fallback_grid, prior, rig,
                                            match_sets, loss, metric)
        if candidate is not None and cand_energy <= _safe_energy(
                prior, rig, match_sets, loss, metric):
            start = candidate

    params = start
    x = pack_free(params)
    blocks = _camera_blocks(params, rig, match_sets, metric)
    masks = [valid for _, valid in blocks]
    z, raw, skipped, energy = _robustify(blocks, loss)

    converged = len(x) == 0
    iterations = 0
    lam = opts.damping_init
    while not converged and iterations < opts.max_iterations:
        iterations += 1
        J = _jacobian(x, params, rig, match_sets, loss, metric, masks,
                      opts.jacobian_step)
        gradient = 2.0 * J.T @ z
        if np.abs(gradient).max() <= opts.gradient_tolerance:
            converged = True
            break
        JTJ = J.T @ J
        accepted = False
        for _ in range(30):
            try:
                step = np.linalg.solve(JTJ + lam * np.eye(len(x)),
                                       -(J.T @ z))
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            try:
                trial = unpack_free(x + step, params)
                t_blocks = _camera_blocks(trial, rig, match_sets, metric)
                t_z, t_raw, t_skipped, t_energy = _robustify(t_blocks, loss)
            except (ValueError, DegenerateTranslation):
                lam *= 10.0
                continue
            if t_energy < energy:
                x = x + step
                params, blocks = trial, t_blocks
                masks = [valid for _, valid in blocks]
                z, raw, skipped, energy = t_z, t_raw, t_skipped, t_energy
                lam = max(lam / 3.0, 1e-15)
                accepted = True
                if np.linalg.norm(step) <= opts.step_tolerance:
                    converged = True
                break
            lam *= 10.0
            if lam > 1e15:
                break
        if not accepted:
            # no downhill step exists at machine precision: local minimum
            converged = True
            break

    note = "ok"
    valid_matches = total_matches - skipped
    if valid_matches < FEW_MATCHES_THRESHOLD:
        note = "few_matches"
    elif "arc_length" in params.free and not _scale_observable(
            params, rig, match_sets, loss, metric):
        note = "scale_unobservable"

    return EstimateResult(params=params, pose=pose_from_params(params),
                          final_energy=energy, iterations=iterations,
                          converged=converged, residuals=raw,
                          skipped_matches=skipped, condition_note=note)


@dataclass(frozen=True)
class LandscapeGrid:
    yaw_range: tuple
    yaw_steps: int
    arc_range: tuple
    arc_steps: int


@dataclass(frozen=True)
class Landscape:
    yaw_values: np.ndarray
    arc_values: np.ndarray
    energies: np.ndarray          # shape (yaw_steps, arc_steps)
    degenerate: np.ndarray        # boolean mask, same shape

    def argmin(self):
        flat = np.where(self.degenerate, np.inf, self.energies)
        i, j = np.unravel_index(int(np.argmin(flat)), flat.shape)
        return i, j


def energy_landscape(rig, match_sets, grid: LandscapeGrid,
                     fixed: MotionParams, loss: RobustLoss,
                     metric: MetricKind, normalize: bool = False) -> Landscape:
    """Dense energy evaluation over a yaw x arc-length grid."""
    yaws = np.linspace(grid.yaw_range[0], grid.yaw_range[1], grid.yaw_steps)
    arcs = np.linspace(grid.arc_range[0], grid.arc_range[1], grid.arc_steps)
    if len(yaws) == 0 or len(arcs) == 0:
        raise ValueError("grid must be nonempty")
    energies = np.zeros((len(yaws), len(arcs)))
    degenerate = np.zeros_like(energies, dtype=bool)
    for i, g in enumerate(yaws):
        for j, l in enumerate(arcs):
            try:
                p = fixed.with_values(yaw=float(g), arc_length=float(l))
                energies[i, j] = multi_camera_energy(p, rig, match_sets,
                                                     loss, metric)
            except (ValueError, DegenerateTranslation):
                degenerate[i, j] = True
    if normalize:
        peak = energies[~degenerate].max(initial=0.0)
        if peak > 0:
            energies = energies / peak * 100.0
    return Landscape(yaws, arcs, energies, degenerate)


def classify_inliers(result: EstimateResult, threshold: float) -> np.ndarray:
    """Mask of matches whose |residual| is within threshold; skipped
    matches are never inliers."""
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    with np.errstate(invalid="ignore"):
        return np.abs(result.residuals) <= threshold
