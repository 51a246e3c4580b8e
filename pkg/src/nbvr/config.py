"""Run configuration: dataclasses with strict dict round-tripping.

Unknown keys are rejected up front so a typo'd config fails before any
compute. ``RunConfig.resolved()`` materializes all defaults for the
config.json echo written into every run directory.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

from .hashgrid import HashGridConfig


def _from_dict(cls, d: dict):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return cls(**d)


@dataclass
class FieldConfig:
    hidden: int = 64
    init_sphere_radius: float = 0.5
    tau_init: float = 15.0
    table_init_scale: float = 1e-4
    feat_column_std: float = 0.5
    dtype: str = "float32"

    @staticmethod
    def from_dict(d):
        return _from_dict(FieldConfig, d)


@dataclass
class RenderConfig:
    n_coarse: int = 64
    n_importance: int = 32
    scene_radius: float = 1.0
    background: tuple = (1.0, 1.0, 1.0)
    jitter: bool = True
    # color/normal evaluation is restricted to samples with
    # w > max(active_abs, active_rel * per-ray max), at most active_max per ray
    active_rel: float = 1e-3
    active_abs: float = 1e-4
    active_max: int = 8
    # fine evaluation stops where coarse transmittance falls below this
    coarse_trans_cut: float = 5e-4

    def __post_init__(self):
        self.background = tuple(float(c) for c in self.background)
        if len(self.background) != 3:
            raise ValueError("background must be an RGB triple")

    @staticmethod
    def from_dict(d):
        return _from_dict(RenderConfig, d)


@dataclass
class TrainConfig:
    batch_rays: int = 1024
    total_iters: int = 15000
    plan_interval: int = 1000
    init_views: int = 3
    prog_threshold: int = 10000
    progressive: bool = True
    lr_tables: float = 1e-2
    lr_mlp: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.99
    adam_eps: float = 1e-15
    cosine_decay: bool = True
    w_norm: float = 0.05
    w_eik: float = 0.1
    w_dir: float = 0.05
    delta_rbf: float = 50.0
    eik_uniform: int = 1024
    save_checkpoints: bool = True
    save_previews: bool = False

    @staticmethod
    def from_dict(d):
        return _from_dict(TrainConfig, d)


@dataclass
class PlannerConfig:
    width: int = 96
    height: int = 96
    silhouette_threshold: float = 0.5
    dump_score_maps: bool = False

    @staticmethod
    def from_dict(d):
        return _from_dict(PlannerConfig, d)


@dataclass
class EvalConfig:
    mc_resolution: int = 128
    chamfer_samples: int = 50000
    gt_mc_resolution: int = 192
    heldout: list = field(
        default_factory=lambda: [
            {"type": "ring", "n": 8, "radius": 2.4, "elevation_deg": 25.0}
        ]
    )
    psnr: bool = True

    @staticmethod
    def from_dict(d):
        return _from_dict(EvalConfig, d)


@dataclass
class RunConfig:
    scene: dict = field(default_factory=lambda: {"preset": "sphere_box"})
    candidates: list = field(
        default_factory=lambda: [
            {"type": "ring", "n": 16, "radius": 2.4, "elevation_deg": 12.0},
            {"type": "fibonacci", "n": 24, "radius": 2.4},
        ]
    )
    budget: int = 8
    policy: str = "planning"
    seed: int = 0
    out_dir: str | None = None
    width: int = 96
    height: int = 96
    fov_deg: float = 55.0
    grid: HashGridConfig = field(default_factory=HashGridConfig)
    fieldcfg: FieldConfig = field(default_factory=FieldConfig)
    render: RenderConfig = field(default_factory=RenderConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    evalcfg: EvalConfig = field(default_factory=EvalConfig)

    def __post_init__(self):
        if self.policy not in ("planning", "random", "cluster", "farthest"):
            raise ValueError(f"unknown policy: {self.policy}")
        if self.budget < 3:
            raise ValueError("budget must be >= 3")

    @staticmethod
    def from_dict(d: dict) -> "RunConfig":
        d = dict(d)
        sub = {
            "grid": HashGridConfig.from_dict,
            "fieldcfg": FieldConfig.from_dict,
            "render": RenderConfig.from_dict,
            "train": TrainConfig.from_dict,
            "planner": PlannerConfig.from_dict,
            "evalcfg": EvalConfig.from_dict,
        }
        for key, fn in sub.items():
            if key in d and isinstance(d[key], dict):
                d[key] = fn(d[key])
        return _from_dict(RunConfig, d)

    def resolved(self) -> dict:
        """Full config dict with every default materialized."""
        out = dataclasses.asdict(self)
        out["grid"] = self.grid.to_dict()
        return out
