"""Multi-resolution hash grid: configuration, spatial hashing, interpolation.

Each level ``l`` covers the bounding box with ``res[l]`` cells per axis;
cell corners are integer lattice points hashed into a per-level table of
``table_size`` learnable feature vectors. The reference interpolation
path here is plain numpy; the training hot path lives in ``kernels``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Spatial-hash primes; the x coordinate is deliberately unmultiplied.
HASH_PRIMES = (1, 2654435761, 805459861)


@dataclass
class HashGridConfig:
    levels: int = 12
    channels: int = 2
    table_size: int = 2**19
    base_resolution: int = 16
    growth_factor: float = 1.38
    bounds_lo: tuple = (-1.0, -1.0, -1.0)
    bounds_hi: tuple = (1.0, 1.0, 1.0)

    def __post_init__(self):
        if self.levels < 1 or self.channels < 1:
            raise ValueError("levels and channels must be >= 1")
        if self.table_size < 1 or (self.table_size & (self.table_size - 1)) != 0:
            raise ValueError("table_size must be a power of two")
        lo = np.asarray(self.bounds_lo, dtype=np.float64)
        hi = np.asarray(self.bounds_hi, dtype=np.float64)
        if not np.all(hi > lo):
            raise ValueError("bounds_hi must exceed bounds_lo")
        res = self.resolutions()
        if np.any(np.diff(res) <= 0):
            raise ValueError("per-level resolutions must be strictly increasing")

    def resolutions(self) -> np.ndarray:
        """Cells per axis at each level (0-indexed)."""
        l = np.arange(self.levels)
        return np.floor(self.base_resolution * self.growth_factor**l).astype(np.int64)

    @property
    def lo(self) -> np.ndarray:
        return np.asarray(self.bounds_lo, dtype=np.float64)

    @property
    def hi(self) -> np.ndarray:
        return np.asarray(self.bounds_hi, dtype=np.float64)

    @property
    def extent(self) -> np.ndarray:
        return self.hi - self.lo

    def cell_sizes(self) -> np.ndarray:
        """Smallest cell edge per level (min over axes)."""
        return np.min(self.extent) / self.resolutions()

    def finest_active_cell(self, psi: float) -> float:
        """Cell size of the finest level enabled at bandwidth ``psi``."""
        finest = int(min(np.floor(psi), self.levels - 1))
        finest = max(finest, 0)
        return float(self.cell_sizes()[finest])

    def feature_dim(self) -> int:
        return self.levels * self.channels

    def to_dict(self) -> dict:
        return {
            "levels": self.levels,
            "channels": self.channels,
            "table_size": self.table_size,
            "base_resolution": self.base_resolution,
            "growth_factor": self.growth_factor,
            "bounds_lo": list(self.bounds_lo),
            "bounds_hi": list(self.bounds_hi),
        }

    @staticmethod
    def from_dict(d: dict) -> "HashGridConfig":
        return HashGridConfig(
            levels=int(d["levels"]),
            channels=int(d["channels"]),
            table_size=int(d["table_size"]),
            base_resolution=int(d["base_resolution"]),
            growth_factor=float(d["growth_factor"]),
            bounds_lo=tuple(d["bounds_lo"]),
            bounds_hi=tuple(d["bounds_hi"]),
        )


def hash_index(corner, level: int, config: HashGridConfig):
    """Table index for an integer corner coordinate (vectorized over rows).

    XOR of per-axis coordinates multiplied by fixed primes, masked to the
    power-of-two table size. Total and deterministic.
    """
    c = np.asarray(corner, dtype=np.int64)
    single = c.ndim == 1
    c = np.atleast_2d(c)
    h = (
        c[:, 0] * HASH_PRIMES[0]
        ^ c[:, 1] * HASH_PRIMES[1]
        ^ c[:, 2] * HASH_PRIMES[2]
    ) & (config.table_size - 1)
    return int(h[0]) if single else h


def normalize_points(x: np.ndarray, config: HashGridConfig) -> np.ndarray:
    """Clamp into bounds and map to the unit cube."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    xc = np.clip(x, config.lo, config.hi)
    return (xc - config.lo) / config.extent


def active_mask(psi: float, levels: int) -> np.ndarray:
    """Binary per-level gate: level l enabled iff l <= psi."""
    return (np.arange(levels) <= psi).astype(bool)


def encode_reference(x, tables: np.ndarray, config: HashGridConfig, psi: float):
    """Numpy reference encoder: trilinear per level, level-major output.

    ``tables`` is (L, T, F). Masked levels contribute exact zero blocks.
    Matches the jitted kernel bit-for-bit at float64.
    """
    u = normalize_points(x, config)
    n = u.shape[0]
    L, _, F = tables.shape
    res = config.resolutions()
    act = active_mask(psi, L)
    out = np.zeros((n, L * F), dtype=np.float64)
    for l in range(L):
        if not act[l]:
            continue
        r = int(res[l])
        p = u * r
        ic = np.minimum(p.astype(np.int64), r - 1)
        t = p - ic
        block = np.zeros((n, F), dtype=np.float64)
        for corner in range(8):
            bits = np.array([(corner >> k) & 1 for k in range(3)], dtype=np.int64)
            cc = ic + bits
            w = np.prod(np.where(bits == 1, t, 1.0 - t), axis=1)
            idx = hash_index(cc, l, config)
            block += w[:, None] * tables[l, idx].astype(np.float64)
        out[:, l * F : (l + 1) * F] = block
    return out
