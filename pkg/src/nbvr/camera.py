"""Pinhole cameras, ray generation, and candidate pose samplers.

Conventions: world-to-camera rigid transform ``x_cam = R @ x_world + t``
with OpenCV axes (x right, y down, z forward). Continuous pixel
coordinates put the center of pixel (i, j) at (i + 0.5, j + 0.5);
``u`` runs along image width, ``v`` along height.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass
class CameraView:
    """Intrinsics + world-to-camera extrinsics + raster size."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    R: np.ndarray  # (3,3) world-to-camera rotation
    t: np.ndarray  # (3,)  world-to-camera translation

    def __post_init__(self):
        self.R = np.asarray(self.R, dtype=np.float64).reshape(3, 3)
        self.t = np.asarray(self.t, dtype=np.float64).reshape(3)
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not np.allclose(self.R @ self.R.T, np.eye(3), atol=1e-6):
            raise ValueError("rotation is not orthonormal")
        if not np.isclose(np.linalg.det(self.R), 1.0, atol=1e-6):
            raise ValueError("rotation determinant must be +1")

    @property
    def center(self) -> np.ndarray:
        """Camera center in world coordinates."""
        return -self.R.T @ self.t

    def intrinsic_matrix(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )

    def extrinsic_matrix(self) -> np.ndarray:
        """4x4 world-to-camera transform."""
        E = np.eye(4)
        E[:3, :3] = self.R
        E[:3, 3] = self.t
        return E

    def scaled(self, width: int, height: int) -> "CameraView":
        """Same pose imaged on a ``width`` x ``height`` raster."""
        sx = width / self.width
        sy = height / self.height
        return CameraView(
            fx=self.fx * sx,
            fy=self.fy * sy,
            cx=self.cx * sx,
            cy=self.cy * sy,
            width=width,
            height=height,
            R=self.R.copy(),
            t=self.t.copy(),
        )

    def to_dict(self) -> dict:
        return {
            "fx": self.fx,
            "fy": self.fy,
            "cx": self.cx,
            "cy": self.cy,
            "width": self.width,
            "height": self.height,
            "R": self.R.tolist(),
            "t": self.t.tolist(),
        }

    @staticmethod
    def from_dict(d: dict) -> "CameraView":
        return CameraView(
            fx=float(d["fx"]),
            fy=float(d["fy"]),
            cx=float(d["cx"]),
            cy=float(d["cy"]),
            width=int(d["width"]),
            height=int(d["height"]),
            R=np.asarray(d["R"], dtype=np.float64),
            t=np.asarray(d["t"], dtype=np.float64),
        )


def generate_rays(view: CameraView, uv: np.ndarray):
    """Rays through continuous pixel locations ``uv`` (N,2).

    Returns (origins (N,3), unit directions (N,3)). Origins are all the
    camera center.
    """
    uv = np.atleast_2d(np.asarray(uv, dtype=np.float64))
    dx = (uv[:, 0] - view.cx) / view.fx
    dy = (uv[:, 1] - view.cy) / view.fy
    d_cam = np.stack([dx, dy, np.ones_like(dx)], axis=1)
    d_world = d_cam @ view.R  # R^T applied row-wise
    d_world /= np.linalg.norm(d_world, axis=1, keepdims=True)
    origins = np.broadcast_to(view.center, d_world.shape).copy()
    return origins, d_world


def pixel_grid(width: int, height: int) -> np.ndarray:
    """(H*W, 2) pixel-center coordinates in raster order (row major)."""
    u = np.arange(width, dtype=np.float64) + 0.5
    v = np.arange(height, dtype=np.float64) + 0.5
    uu, vv = np.meshgrid(u, v)
    return np.stack([uu.ravel(), vv.ravel()], axis=1)


def project(view: CameraView, points: np.ndarray):
    """Project world points; returns (uv (N,2), z (N,) camera depth)."""
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    pc = points @ view.R.T + view.t
    z = pc[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = view.fx * pc[:, 0] / z + view.cx
        v = view.fy * pc[:, 1] / z + view.cy
    return np.stack([u, v], axis=1), z


def look_at(eye, target=(0.0, 0.0, 0.0), up=(0.0, 0.0, 1.0)):
    """World-to-camera (R, t) for a camera at ``eye`` looking at ``target``."""
    eye = np.asarray(eye, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    up = np.asarray(up, dtype=np.float64)
    z = target - eye
    z = z / np.linalg.norm(z)
    x = np.cross(z, up)
    nx = np.linalg.norm(x)
    if nx < 1e-8:  # looking straight along up: fall back to world y
        x = np.cross(z, np.array([0.0, 1.0, 0.0]))
        nx = np.linalg.norm(x)
    x = x / nx
    y = np.cross(z, x)
    R = np.stack([x, y, z], axis=0)
    t = -R @ eye
    return R, t


def _intrinsics_for_fov(width: int, height: int, fov_deg: float):
    f = 0.5 * width / math.tan(math.radians(fov_deg) / 2.0)
    return f, f, width / 2.0, height / 2.0


def ring_poses(
    n: int,
    radius: float,
    elevation_deg: float,
    width: int,
    height: int,
    fov_deg: float = 55.0,
    target=(0.0, 0.0, 0.0),
) -> list[CameraView]:
    """n look-at cameras on a horizontal circle at the given elevation."""
    fx, fy, cx, cy = _intrinsics_for_fov(width, height, fov_deg)
    el = math.radians(elevation_deg)
    views = []
    for k in range(n):
        az = 2.0 * math.pi * k / n
        eye = radius * np.array(
            [math.cos(el) * math.cos(az), math.cos(el) * math.sin(az), math.sin(el)]
        )
        R, t = look_at(eye, target)
        views.append(CameraView(fx, fy, cx, cy, width, height, R, t))
    return views


def fibonacci_hemisphere_poses(
    n: int,
    radius: float,
    width: int,
    height: int,
    fov_deg: float = 55.0,
    min_z: float = 0.05,
    max_z: float = 0.95,
    target=(0.0, 0.0, 0.0),
) -> list[CameraView]:
    """n look-at cameras on the upper hemisphere via a golden-angle spiral."""
    fx, fy, cx, cy = _intrinsics_for_fov(width, height, fov_deg)
    golden = math.pi * (3.0 - math.sqrt(5.0))
    views = []
    for k in range(n):
        z = min_z + (max_z - min_z) * (k + 0.5) / n
        rho = math.sqrt(max(0.0, 1.0 - z * z))
        phi = golden * k
        eye = radius * np.array([rho * math.cos(phi), rho * math.sin(phi), z])
        R, t = look_at(eye, target)
        views.append(CameraView(fx, fy, cx, cy, width, height, R, t))
    return views
