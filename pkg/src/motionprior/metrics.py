"""Reconstruction-free epipolar error metrics and robust losses.

Two metrics are provided: the symmetric pixel distance to epipolar lines
(pinhole only) and the sine of the angle between a line of sight and its
epipolar plane (any central camera model).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

DEGENERACY_EPS = 1e-12


class EpipoleDegenerate(Exception):
    """A point maps onto the epipole; its residual is undefined."""


class MetricKind(enum.Enum):
    GEOLINE = "geoline"
    ANGLEPLANE = "angleplane"


@dataclass(frozen=True)
class RobustLoss:
    """Loss rho applied to squared residuals. width is in residual units
    (pixels for the line metric, sine-of-angle for the plane metric)."""

    kind: str = "none"
    width: float = 1.0

    KINDS = ("none", "cauchy", "huber", "tukey")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown loss kind {self.kind!r}")
        if not self.width > 0:
            raise ValueError("loss width must be positive")

    def evaluate(self, squared: np.ndarray):
        """Return (rho(s), drho/ds) elementwise for squared residuals s."""
        s = np.asarray(squared, dtype=float)
        if self.kind == "none":
            return s.copy(), np.ones_like(s)
        w2 = self.width * self.width
        if self.kind == "cauchy":
            return w2 * np.log1p(s / w2), 1.0 / (1.0 + s / w2)
        if self.kind == "huber":
            r = np.sqrt(s)
            small = s <= w2
            value = np.where(small, s, 2.0 * self.width * r - w2)
            deriv = np.where(small, 1.0,
                             self.width / np.maximum(r, DEGENERACY_EPS))
            return value, deriv
        # tukey, normalized so rho(s) ~ s near zero
        clipped = np.minimum(s / w2, 1.0)
        value = (w2 / 3.0) * (1.0 - (1.0 - clipped) ** 3)
        deriv = np.where(s <= w2, (1.0 - clipped) ** 2, 0.0)
        return value, deriv


def robust_loss_eval(loss: RobustLoss, squared_residual: float):
    if squared_residual < 0:
        raise ValueError("squared residual must be nonnegative")
    value, deriv = loss.evaluate(np.float64(squared_residual))
    return float(value), float(deriv)


@dataclass(frozen=True)
class FeatureMatch:
    """One feature tracked between the two frames of a pair."""

    pixel_t0: np.ndarray
    pixel_t1: np.ndarray
    bearing_t0: np.ndarray
    bearing_t1: np.ndarray


@dataclass(frozen=True)
class MatchSet:
    """All matches of one camera for a frame pair, stored columnar."""

    camera_id: int
    pixels_t0: np.ndarray
    pixels_t1: np.ndarray
    bearings_t0: np.ndarray
    bearings_t1: np.ndarray

    def __post_init__(self):
        p0 = np.atleast_2d(np.asarray(self.pixels_t0, dtype=float))
        p1 = np.atleast_2d(np.asarray(self.pixels_t1, dtype=float))
        b0 = np.atleast_2d(np.asarray(self.bearings_t0, dtype=float))
        b1 = np.atleast_2d(np.asarray(self.bearings_t1, dtype=float))
        n = len(p0)
        if not (len(p1) == len(b0) == len(b1) == n):
            raise ValueError("match arrays must have equal length")
        if n and (np.abs(np.linalg.norm(b0, axis=1) - 1.0).max() > 1e-9
                  or np.abs(np.linalg.norm(b1, axis=1) - 1.0).max() > 1e-9):
            raise ValueError("bearings must be unit norm")
        for name, arr in (("pixels_t0", p0), ("pixels_t1", p1),
                          ("bearings_t0", b0), ("bearings_t1", b1)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self):
        return len(self.pixels_t0)

    @classmethod
    def from_matches(cls, camera_id: int, matches, model=None) -> "MatchSet":
        p0 = np.array([m.pixel_t0 for m in matches], dtype=float).reshape(-1, 2)
        p1 = np.array([m.pixel_t1 for m in matches], dtype=float).reshape(-1, 2)
        b0 = np.array([m.bearing_t0 for m in matches], dtype=float).reshape(-1, 3)
        b1 = np.array([m.bearing_t1 for m in matches], dtype=float).reshape(-1, 3)
        if model is not None and len(matches):
            if (np.abs(model.pixel_to_bearing(p0) - b0).max() > 1e-9
                    or np.abs(model.pixel_to_bearing(p1) - b1).max() > 1e-9):
                raise ValueError("bearings do not match the camera model")
        return cls(camera_id, p0, p1, b0, b1)

    @classmethod
    def from_pixels(cls, camera_id: int, model, pixels_t0, pixels_t1) -> "MatchSet":
        p0 = np.atleast_2d(np.asarray(pixels_t0, dtype=float))
        p1 = np.atleast_2d(np.asarray(pixels_t1, dtype=float))
        if len(p0) == 0:
            empty = np.empty((0, 3))
            return cls(camera_id, p0.reshape(0, 2), p1.reshape(0, 2), empty, empty)
        return cls(camera_id, p0, p1,
                   model.pixel_to_bearing(p0), model.pixel_to_bearing(p1))

    def subset(self, index) -> "MatchSet":
        return MatchSet(self.camera_id, self.pixels_t0[index],
                        self.pixels_t1[index], self.bearings_t0[index],
                        self.bearings_t1[index])


def _lift(pixels: np.ndarray) -> np.ndarray:
    pixels = np.atleast_2d(np.asarray(pixels, dtype=float))
    return np.hstack([pixels, np.ones((len(pixels), 1))])


def epipolar_line_distance(f: np.ndarray, x0, x1) -> float:
    """Signed pixel distance of x1 to the epipolar line of x0."""
    h0 = _lift(x0)[0]
    h1 = _lift(x1)[0]
    line = f @ h0
    den = np.hypot(line[0], line[1])
    if den < DEGENERACY_EPS:
        raise EpipoleDegenerate("point maps to the epipole")
    return float(h1 @ line / den)


def geoline_residuals(f: np.ndarray, s: MatchSet):
    """Per-match symmetric line distances (d1, d0) and a validity mask."""
    h0 = _lift(s.pixels_t0)
    h1 = _lift(s.pixels_t1)
    line0 = h0 @ f.T          # F x0, per row
    line1 = h1 @ f            # F^T x1, per row
    den0 = np.hypot(line0[:, 0], line0[:, 1])
    den1 = np.hypot(line1[:, 0], line1[:, 1])
    valid = (den0 >= DEGENERACY_EPS) & (den1 >= DEGENERACY_EPS)
    num = np.einsum("ij,ij->i", h1, line0)
    d1 = num / np.where(valid, den0, 1.0)
    d0 = num / np.where(valid, den1, 1.0)
    return d1, d0, valid


def geoline_energy(f: np.ndarray, s: MatchSet, loss: RobustLoss) -> float:
    """Robustified symmetric epipolar line energy; degenerate matches are
    skipped."""
    d1, d0, valid = geoline_residuals(f, s)
    squared = d1[valid] ** 2 + d0[valid] ** 2
    value, _ = loss.evaluate(squared)
    return float(np.sum(value))


def angleplane_residual(e: np.ndarray, b0, b1) -> float:
    """Signed sine of the angle between b1 and the epipolar plane of b0."""
    b0 = np.asarray(b0, dtype=float).reshape(3)
    b1 = np.asarray(b1, dtype=float).reshape(3)
    normal = e @ b0
    norm = np.linalg.norm(normal)
    if norm < DEGENERACY_EPS:
        raise EpipoleDegenerate("bearing maps to the epipole")
    return float(b1 @ normal / norm)


def angleplane_residuals(e: np.ndarray, s: MatchSet):
    """Per-match signed plane-angle residuals and a validity mask."""
    normals = s.bearings_t0 @ e.T
    norms = np.linalg.norm(normals, axis=1)
    valid = norms >= DEGENERACY_EPS
    r = np.einsum("ij,ij->i", s.bearings_t1, normals) / np.where(valid, norms, 1.0)
    return r, valid


def angleplane_energy(e: np.ndarray, s: MatchSet, loss: RobustLoss) -> float:
    r, valid = angleplane_residuals(e, s)
    value, _ = loss.evaluate(r[valid] ** 2)
    return float(np.sum(value))
