"""Hash-encoded SDF + color fields with progressive level activation.

The SDF decoder input is (x, features) — the raw clamped point doubles as
the auxiliary input, which lets the decoder start as an approximate
sphere while the hash features are still near zero. The color decoder
input is (view direction, surface normal, features) squashed by a
logistic map.

Spatial gradients are central finite differences with a step equal to
the finest active cell, so no second-order parameter derivatives exist
anywhere in training.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .config import FieldConfig
from .hashgrid import HashGridConfig, active_mask

PARAM_ORDER = (
    "tables",
    "sdf_W1",
    "sdf_b1",
    "sdf_w2",
    "sdf_b2",
    "color_V1",
    "color_c1",
    "color_V2",
    "color_c2",
    "color_V3",
    "color_c3",
    "tau_raw",
)


@dataclass
class ProgressiveSchedule:
    """psi(i) = min(L, i*L/threshold); threshold <= 0 disables masking."""

    threshold: int
    levels: int

    def psi(self, iteration: int) -> float:
        if self.threshold <= 0:
            return float(self.levels)
        return min(float(self.levels), iteration * self.levels / self.threshold)


class FieldParams:
    """All learnable state plus same-shaped gradient slots."""

    def __init__(self, arrays: dict, grid: HashGridConfig, hidden: int):
        self.grid = grid
        self.hidden = hidden
        self.dtype = arrays["tables"].dtype
        for name in PARAM_ORDER:
            setattr(self, name, arrays[name])
        self.grads = {n: np.zeros_like(arrays[n]) for n in PARAM_ORDER}
        self.touched = np.zeros(
            (grid.levels, grid.table_size), dtype=np.uint8
        )
        self._resf = grid.resolutions().astype(self.dtype)
        self._res = grid.resolutions()
        self._one = self.dtype.type(1.0)

    @property
    def tau(self) -> float:
        return float(np.exp(self.tau_raw))

    def named_params(self):
        return [(n, getattr(self, n)) for n in PARAM_ORDER]

    def zero_grads(self):
        for n in PARAM_ORDER:
            if n == "tables":
                continue  # table grads are cleared by the sparse optimizer
            self.grads[n][...] = 0

    def n_params(self) -> int:
        return sum(p.size for _, p in self.named_params())

    def copy(self) -> "FieldParams":
        arrays = {n: getattr(self, n).copy() for n in PARAM_ORDER}
        return FieldParams(arrays, self.grid, self.hidden)


def init_field_params(
    grid: HashGridConfig, fieldcfg: FieldConfig, seed: int
) -> FieldParams:
    """Geometric initialization: the SDF starts near |x| - r.

    Hidden x-columns ~ N(0,1), output weights sqrt(2*pi)/(H*sigma) so the
    expected initial field is the signed distance to a sphere of radius
    ``init_sphere_radius``; hash-feature columns get a moderate spread so
    table gradients flow from step one.
    """
    dtype = np.dtype(fieldcfg.dtype)
    rng = np.random.default_rng(seed)
    L, F, T, H = grid.levels, grid.channels, grid.table_size, fieldcfg.hidden
    din = 3 + L * F
    dc = 6 + L * F

    tables = rng.uniform(
        -fieldcfg.table_init_scale, fieldcfg.table_init_scale, size=(L, T, F)
    )

    sdf_W1 = np.zeros((din, H))
    sdf_W1[:3] = rng.standard_normal((3, H))
    sdf_W1[3:] = rng.standard_normal((L * F, H)) * fieldcfg.feat_column_std
    sdf_b1 = np.zeros(H)
    mu = math.sqrt(2.0 * math.pi) / H
    sdf_w2 = mu * (1.0 + 0.01 * rng.standard_normal(H))
    sdf_b2 = np.array(-fieldcfg.init_sphere_radius)

    color_V1 = rng.standard_normal((dc, H)) * math.sqrt(2.0 / dc)
    color_c1 = np.zeros(H)
    color_V2 = rng.standard_normal((H, H)) * math.sqrt(2.0 / H)
    color_c2 = np.zeros(H)
    color_V3 = rng.standard_normal((H, 3)) * 0.1
    color_c3 = np.zeros(3)

    tau_raw = np.array(math.log(fieldcfg.tau_init))

    arrays = {
        "tables": tables,
        "sdf_W1": sdf_W1,
        "sdf_b1": sdf_b1,
        "sdf_w2": sdf_w2,
        "sdf_b2": sdf_b2,
        "color_V1": color_V1,
        "color_c1": color_c1,
        "color_V2": color_V2,
        "color_c2": color_c2,
        "color_V3": color_V3,
        "color_c3": color_c3,
        "tau_raw": tau_raw,
    }
    arrays = {k: np.ascontiguousarray(v.astype(dtype)) for k, v in arrays.items()}
    return FieldParams(arrays, grid, H)


# ---------------------------------------------------------------------------
# encoding and decoder forward/backward


def _normalize(x: np.ndarray, grid: HashGridConfig):
    """Clamp into bounds; return (clamped world points, unit-cube coords)."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    xc = np.clip(x, grid.lo, grid.hi)
    u = (xc - grid.lo) / grid.extent
    return xc, u


def encode(x, params: FieldParams, grid: HashGridConfig, psi: float) -> np.ndarray:
    """Masked multi-level features, level-major, width L*F (float64 out)."""
    xc, u = _normalize(x, grid)
    act = active_mask(psi, grid.levels)
    out = np.empty((u.shape[0], grid.feature_dim()), dtype=params.dtype)
    kernels.encode_fwd(
        u.astype(params.dtype), params.tables, params._res, params._resf, act,
        out, params._one,
    )
    return out.astype(np.float64)


def sdf_inputs(x, params: FieldParams, grid: HashGridConfig, psi: float):
    """Decoder input matrix [x | features] plus the normalized coords."""
    xc, u = _normalize(x, grid)
    act = active_mask(psi, grid.levels)
    n = u.shape[0]
    X = np.empty((n, 3 + grid.feature_dim()), dtype=params.dtype)
    X[:, :3] = xc
    ud = np.ascontiguousarray(u.astype(params.dtype))
    kernels.encode_fwd(
        ud, params.tables, params._res, params._resf, act, X[:, 3:], params._one
    )
    return X, ud


def sdf_mlp_fwd(params: FieldParams, X: np.ndarray):
    """Returns (f (N,), hidden cache)."""
    H = X @ params.sdf_W1
    H += params.sdf_b1
    kernels.relu_fwd(H)
    f = H @ params.sdf_w2
    f += params.sdf_b2
    return f, H


def sdf_mlp_bwd(params: FieldParams, X, H, df):
    """Accumulates decoder grads; returns dX."""
    g = params.grads
    g["sdf_w2"] += H.T @ df
    g["sdf_b2"] += df.sum(dtype=params.dtype)
    dH = df[:, None] * params.sdf_w2[None, :]
    kernels.relu_bwd(dH, H)
    g["sdf_W1"] += X.T @ dH
    g["sdf_b1"] += dH.sum(axis=0)
    return dH @ params.sdf_W1.T


def color_mlp_fwd(params: FieldParams, Xc: np.ndarray):
    """Returns (rgb (N,3) in [0,1], caches)."""
    H1 = Xc @ params.color_V1
    H1 += params.color_c1
    kernels.relu_fwd(H1)
    H2 = H1 @ params.color_V2
    H2 += params.color_c2
    kernels.relu_fwd(H2)
    Z = H2 @ params.color_V3
    Z += params.color_c3
    rgb = 1.0 / (1.0 + np.exp(-Z.astype(np.float64)))
    return rgb, (H1, H2, rgb)

def color_mlp_bwd(params: FieldParams, Xc, caches, drgb):
    H1, H2, rgb = caches
    g = params.grads
    dZ = (drgb * rgb * (1.0 - rgb)).astype(params.dtype)
    g["color_V3"] += H2.T @ dZ
    g["color_c3"] += dZ.sum(axis=0)
    dH2 = dZ @ params.color_V3.T
    kernels.relu_bwd(dH2, H2)
    g["color_V2"] += H1.T @ dH2
    g["color_c2"] += dH2.sum(axis=0)
    dH1 = dH2 @ params.color_V2.T
    kernels.relu_bwd(dH1, H1)
    g["color_V1"] += Xc.T @ dH1
    g["color_c1"] += dH1.sum(axis=0)
    return dH1 @ params.color_V1.T


def encode_backward(params: FieldParams, u, dfeat, psi: float):
    """Scatter feature grads into the persistent table grad buffers."""
    act = active_mask(psi, params.grid.levels)
    kernels.encode_bwd(
        u,
        np.ascontiguousarray(dfeat),
        params._res,
        params._resf,
        act,
        params.grads["tables"],
        params.touched,
        params._one,
    )


# ---------------------------------------------------------------------------
# public field operations (float64 in/out)


def sdf(x, params: FieldParams, grid: HashGridConfig, psi: float):
    single = np.asarray(x).ndim == 1
    X, _ = sdf_inputs(x, params, grid, psi)
    f, _ = sdf_mlp_fwd(params, X)
    f = f.astype(np.float64)
    return float(f[0]) if single else f


def sdf_gradient(x, params: FieldParams, grid: HashGridConfig, psi: float, eps=None):
    """Central finite differences; eps defaults to the finest active cell."""
    if eps is None:
        eps = grid.finest_active_cell(psi)
    single = np.asarray(x).ndim == 1
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    n = x.shape[0]
    shifts = np.zeros((6, 1, 3))
    for k in range(3):
        shifts[2 * k, 0, k] = eps
        shifts[2 * k + 1, 0, k] = -eps
    pts = (x[None, :, :] + shifts).reshape(6 * n, 3)
    f = sdf(pts, params, grid, psi).reshape(6, n)
    g = np.stack([(f[0] - f[1]), (f[2] - f[3]), (f[4] - f[5])], axis=1) / (2 * eps)
    return g[0] if single else g


def color(x, view_dir, normal, params: FieldParams, grid: HashGridConfig, psi: float):
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    d = np.atleast_2d(np.asarray(view_dir, dtype=np.float64))
    nrm = np.atleast_2d(np.asarray(normal, dtype=np.float64))
    single = x.shape[0] == 1 and np.asarray(view_dir).ndim == 1
    feat = encode(x, params, grid, psi)
    Xc = np.concatenate([d, nrm, feat], axis=1).astype(params.dtype)
    rgb, _ = color_mlp_fwd(params, Xc)
    return rgb[0] if single else rgb


# ---------------------------------------------------------------------------
# checkpoints: JSON header + float32 little-endian blobs


def save_checkpoint(path, params: FieldParams, iteration: int, psi: float):
    header = {
        "format": "nbvr-ckpt-1",
        "grid": params.grid.to_dict(),
        "hidden": params.hidden,
        "iteration": int(iteration),
        "psi": float(psi),
        "arrays": [[n, list(getattr(params, n).shape)] for n in PARAM_ORDER],
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode() + b"\n"
    with open(path, "wb") as fh:
        fh.write(blob)
        for n in PARAM_ORDER:
            arr = np.ascontiguousarray(getattr(params, n), dtype="<f4")
            fh.write(arr.tobytes())


def load_checkpoint(path, dtype="float32"):
    """Returns (FieldParams, iteration, psi)."""
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode())
        if header.get("format") != "nbvr-ckpt-1":
            raise ValueError(f"not a checkpoint file: {path}")
        grid = HashGridConfig.from_dict(header["grid"])
        arrays = {}
        for name, shape in header["arrays"]:
            count = int(np.prod(shape)) if shape else 1
            raw = fh.read(4 * count)
            if len(raw) != 4 * count:
                raise ValueError("truncated checkpoint")
            arr = np.frombuffer(raw, dtype="<f4").reshape(shape)
            arrays[name] = np.ascontiguousarray(arr.astype(np.dtype(dtype)))
    params = FieldParams(arrays, grid, int(header["hidden"]))
    return params, int(header["iteration"]), float(header["psi"])
