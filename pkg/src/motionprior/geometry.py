"""Rigid transforms, camera models and epipolar matrix construction."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ORTHONORMALITY_TOL = 1e-9


class GeometryError(Exception):
    pass


class DegenerateTranslation(GeometryError):
    """Epipolar geometry is undefined for a pure rotation."""


class BehindCamera(GeometryError):
    pass


class OutOfDomain(GeometryError):
    pass


@dataclass(frozen=True)
class Pose:
    """Rigid transform. apply() carries points from the child frame into
    the parent frame: p_parent = R @ p_child + t."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = np.array(self.rotation, dtype=float).reshape(3, 3)
        t = np.array(self.translation, dtype=float).reshape(3)
        if np.abs(R.T @ R - np.eye(3)).max() >= ORTHONORMALITY_TOL:
            raise ValueError("rotation is not orthonormal")
        if abs(np.linalg.det(R) - 1.0) >= ORTHONORMALITY_TOL:
            raise ValueError("rotation determinant is not +1")
        R.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity() -> "Pose":
        return Pose(np.eye(3), np.zeros(3))

    def compose(self, other: "Pose") -> "Pose":
        """Apply `other` first, then self."""
        return Pose(self.rotation @ other.rotation,
                    self.rotation @ other.translation + self.translation)

    def inverse(self) -> "Pose":
        return Pose(self.rotation.T, -self.rotation.T @ self.translation)

    def apply(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        return points @ self.rotation.T + self.translation

    def matrix34(self) -> np.ndarray:
        return np.hstack([self.rotation, self.translation[:, None]])

    def isclose(self, other: "Pose", atol: float = 1e-12) -> bool:
        return (np.allclose(self.rotation, other.rotation, atol=atol, rtol=0.0)
                and np.allclose(self.translation, other.translation,
                                atol=atol, rtol=0.0))


def compose(a: Pose, b: Pose) -> Pose:
    return a.compose(b)


def inverse(p: Pose) -> Pose:
    return p.inverse()


def skew(t) -> np.ndarray:
    """Cross-product matrix: skew(t) @ v == cross(t, v)."""
    t = np.asarray(t, dtype=float).reshape(3)
    return np.array([[0.0, -t[2], t[1]],
                     [t[2], 0.0, -t[0]],
                     [-t[1], t[0], 0.0]])


def essential_from_motion(m: Pose) -> np.ndarray:
    """Essential matrix of the point transform carrying coordinates from
    the first camera frame into the second: b1^T E b0 = 0."""
    if np.linalg.norm(m.translation) < 1e-12:
        raise DegenerateTranslation("translation magnitude below 1e-12")
    return skew(m.translation) @ m.rotation


@dataclass(frozen=True)
class PinholeIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    skew: float = 0.0

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, self.skew, self.cx],
                         [0.0, self.fy, self.cy],
                         [0.0, 0.0, 1.0]])

    @property
    def matrix_inv(self) -> np.ndarray:
        return np.linalg.inv(self.matrix)


def fundamental_from_essential(e: np.ndarray, k0: PinholeIntrinsics,
                               k1: PinholeIntrinsics) -> np.ndarray:
    """F = K1^-T E K0^-1, for pixel correspondences x1^T F x0 = 0."""
    return k1.matrix_inv.T @ e @ k0.matrix_inv


class PinholeCamera:
    """Pinhole model. image_size (width, height) bounds the valid domain
    when given; used by the simulator for visibility and outlier draws."""

    kind = "pinhole"

    def __init__(self, intrinsics: PinholeIntrinsics, image_size=None):
        self.intrinsics = intrinsics
        self.image_size = tuple(image_size) if image_size is not None else None

    def pixel_to_bearing(self, pixels: np.ndarray) -> np.ndarray:
        """Unit line(s) of sight, K^-1 x normalized, positive z."""
        pixels = np.asarray(pixels, dtype=float)
        single = pixels.ndim == 1
        pts = np.atleast_2d(pixels)
        homo = np.hstack([pts, np.ones((len(pts), 1))])
        rays = homo @ self.intrinsics.matrix_inv.T
        rays /= np.linalg.norm(rays, axis=1, keepdims=True)
        return rays[0] if single else rays

    def project(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        single = points.ndim == 1
        pts = np.atleast_2d(points)
        if np.any(pts[:, 2] <= 0):
            raise BehindCamera("point has non-positive depth")
        homo = pts @ self.intrinsics.matrix.T
        pix = homo[:, :2] / homo[:, 2:3]
        return pix[0] if single else pix

    def contains(self, pixels: np.ndarray) -> np.ndarray:
        pixels = np.atleast_2d(np.asarray(pixels, dtype=float))
        if self.image_size is None:
            return np.ones(len(pixels), dtype=bool)
        w, h = self.image_size
        return ((pixels[:, 0] >= 0) & (pixels[:, 0] <= w - 1)
                & (pixels[:, 1] >= 0) & (pixels[:, 1] <= h - 1))


class GenericCamera:
    """Tabulated camera model: a rectangular grid of ray directions with
    bilinear interpolation (output normalized to unit length), inverted by
    local Gauss-Newton iteration. Table entries need not be unit vectors;
    tabulating z-normalized rays makes interpolation exact for any model
    that is projective-linear in the pixel, pinholes included."""

    kind = "generic"

    def __init__(self, u0, v0, du, dv, table: np.ndarray, image_size=None):
        table = np.asarray(table, dtype=float)
        if table.ndim != 3 or table.shape[2] != 3:
            raise ValueError("bearing table must have shape (nv, nu, 3)")
        self.u0, self.v0, self.du, self.dv = float(u0), float(v0), float(du), float(dv)
        self.table = table
        self.image_size = tuple(image_size) if image_size is not None else None

    @classmethod
    def from_camera(cls, camera, width, height, step=8.0):
        """Tabulate another camera model on a regular pixel grid; rays are
        stored z-normalized (the model must look into the z > 0 halfspace)."""
        us = np.arange(0.0, width + 1e-9, step)
        vs = np.arange(0.0, height + 1e-9, step)
        uu, vv = np.meshgrid(us, vs)
        pix = np.stack([uu.ravel(), vv.ravel()], axis=1)
        rays = camera.pixel_to_bearing(pix)
        if np.any(rays[:, 2] <= 0):
            raise ValueError("tabulated rays must have positive z")
        rays = rays / rays[:, 2:3]
        return cls(0.0, 0.0, step, step, rays.reshape(len(vs), len(us), 3),
                   image_size=(width, height))

    def _domain(self):
        nv, nu = self.table.shape[:2]
        return (self.u0, self.u0 + (nu - 1) * self.du,
                self.v0, self.v0 + (nv - 1) * self.dv)

    def pixel_to_bearing(self, pixels: np.ndarray) -> np.ndarray:
        pixels = np.asarray(pixels, dtype=float)
        single = pixels.ndim == 1
        pts = np.atleast_2d(pixels)
        umin, umax, vmin, vmax = self._domain()
        if np.any((pts[:, 0] < umin - 1e-9) | (pts[:, 0] > umax + 1e-9)
                  | (pts[:, 1] < vmin - 1e-9) | (pts[:, 1] > vmax + 1e-9)):
            raise OutOfDomain("pixel outside the tabulated domain")
        gu = np.clip((pts[:, 0] - self.u0) / self.du, 0, self.table.shape[1] - 1)
        gv = np.clip((pts[:, 1] - self.v0) / self.dv, 0, self.table.shape[0] - 1)
        iu = np.clip(gu.astype(int), 0, self.table.shape[1] - 2)
        iv = np.clip(gv.astype(int), 0, self.table.shape[0] - 2)
        fu = (gu - iu)[:, None]
        fv = (gv - iv)[:, None]
        b = ((1 - fu) * (1 - fv) * self.table[iv, iu]
             + fu * (1 - fv) * self.table[iv, iu + 1]
             + (1 - fu) * fv * self.table[iv + 1, iu]
             + fu * fv * self.table[iv + 1, iu + 1])
        b /= np.linalg.norm(b, axis=1, keepdims=True)
        return b[0] if single else b

    def project(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        single = points.ndim == 1
        pts = np.atleast_2d(points)
        out = np.array([self._project_one(p) for p in pts])
        return out[0] if single else out

    def _project_one(self, point: np.ndarray) -> np.ndarray:
        if point[2] <= 0:
            raise BehindCamera("point has non-positive depth")
        target = point / np.linalg.norm(point)
        # coarse init: best-aligned table node
        nodes = self.table.reshape(-1, 3)
        dots = (nodes @ target) / np.linalg.norm(nodes, axis=1)
        idx = int(np.argmax(dots))
        nv, nu = self.table.shape[:2]
        pix = np.array([self.u0 + (idx % nu) * self.du,
                        self.v0 + (idx // nu) * self.dv])
        umin, umax, vmin, vmax = self._domain()
        h = 1e-3
        for _ in range(50):
            r = self.pixel_to_bearing(pix) - target
            J = np.empty((3, 2))
            for k in range(2):
                dp = np.zeros(2)
                dp[k] = h
                lo = np.clip(pix - dp, [umin, vmin], [umax, vmax])
                hi = np.clip(pix + dp, [umin, vmin], [umax, vmax])
                J[:, k] = (self.pixel_to_bearing(hi)
                           - self.pixel_to_bearing(lo)) / (hi - lo)[k]
            step, *_ = np.linalg.lstsq(J, -r, rcond=None)
            pix = np.clip(pix + step, [umin, vmin], [umax, vmax])
            if np.linalg.norm(step) < 1e-10:
                break
        return pix

    def contains(self, pixels: np.ndarray) -> np.ndarray:
        pixels = np.atleast_2d(np.asarray(pixels, dtype=float))
        umin, umax, vmin, vmax = self._domain()
        ok = ((pixels[:, 0] >= umin) & (pixels[:, 0] <= umax)
              & (pixels[:, 1] >= vmin) & (pixels[:, 1] <= vmax))
        if self.image_size is not None:
            w, h = self.image_size
            ok &= ((pixels[:, 0] >= 0) & (pixels[:, 0] <= w - 1)
                   & (pixels[:, 1] >= 0) & (pixels[:, 1] <= h - 1))
        return ok


def bearing_from_pixel(model, pixel) -> np.ndarray:
    return model.pixel_to_bearing(pixel)


def project(model, point) -> np.ndarray:
    return model.project(point)


def rotation_x(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rotation_y(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rotation_z(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


# Camera axes (z forward, x right, y down) expressed in the vehicle frame
# (x forward, y left, z up), for a camera looking along the vehicle's nose.
_FORWARD_CAMERA_ROTATION = np.array([[0.0, 0.0, 1.0],
                                     [-1.0, 0.0, 0.0],
                                     [0.0, -1.0, 0.0]])


def forward_camera_extrinsic(translation) -> Pose:
    """Extrinsic pose of a forward-looking camera mounted at `translation`
    in the vehicle frame."""
    return Pose(_FORWARD_CAMERA_ROTATION, translation)
