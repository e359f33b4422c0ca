"""Run configuration: one YAML file covering robot, gripper, scene and budgets."""
import dataclasses
from dataclasses import dataclass, field

import numpy as np
import yaml

from regrasp.grasp import GraspConfig, GripperModel
from regrasp.handover import HandoverConfig
from regrasp.kinematics import IKConfig, default_robot_dict
from regrasp.motion import MotionConfig


@dataclass(frozen=True)
class SceneConfig:
    table_lo: tuple = (0.15, -0.6, -0.05)
    table_hi: tuple = (0.8, 0.6, 0.0)
    anchor: tuple = (0.30, 0.0)          # object position on the table (x, y)
    pregrasp: float = 0.05               # retreat along -approach
    lift: float = 0.05                   # vertical lift-off / set-down distance
    set_down_allow: float = 1e-3         # held object vs table during lift / set-down
    yaw_samples: int = 16
    timeout: float = 180.0


@dataclass(frozen=True)
class SearchConfig:
    transit_cost: float = 1.0
    transfer_cost: float = 2.0
    bridge_cost: float = 2.0
    rank_eps: float = 1e-4               # source/sink edge weight per quality rank
    max_rotations: int = 352
    random_ends: bool = False            # pick start/end grasps randomly instead of by rank


@dataclass(frozen=True)
class BenchConfig:
    objects: tuple = ("lblock", "box", "ttube")
    trials: int = 50
    seed: int = 0
    modes: tuple = ("single", "dual")

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials per cell must be >= 1")
        bad = set(self.modes) - {"single", "dual"}
        if bad:
            raise ValueError(f"unknown modes {sorted(bad)}")


@dataclass(frozen=True)
class Config:
    robot: dict = field(default_factory=default_robot_dict)
    gripper: GripperModel = GripperModel()
    grasp: GraspConfig = GraspConfig()
    placement_margin: float = 0.005
    ik: IKConfig = IKConfig()
    handover: HandoverConfig = HandoverConfig()
    motion: MotionConfig = MotionConfig()
    scene: SceneConfig = SceneConfig()
    search: SearchConfig = SearchConfig()
    bench: BenchConfig = BenchConfig()
    cache_dir: str = ".cache/regrasp"


def _plain(x):
    if dataclasses.is_dataclass(x):
        return {f.name: _plain(getattr(x, f.name)) for f in dataclasses.fields(x)}
    if isinstance(x, dict):
        return {k: _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, np.generic):
        return x.item()
    return x


def to_dict(cfg):
    return _plain(cfg)


def _build(cls, data):
    if not isinstance(data, dict):
        raise ValueError(f"expected a mapping for {cls.__name__}")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ValueError(f"unknown keys for {cls.__name__}: {sorted(unknown)}")
    kw = {}
    defaults = cls()
    for k, v in data.items():
        cur = getattr(defaults, k)
        if dataclasses.is_dataclass(cur):
            kw[k] = _build(type(cur), {**to_dict(cur), **v})
        elif isinstance(cur, tuple):
            kw[k] = tuple(v)
        else:
            kw[k] = v
    return cls(**kw)


def from_dict(data):
    data = dict(data or {})
    return _build(Config, data)


def load_config(path=None):
    if path is None:
        return Config()
    with open(path) as fh:
        return from_dict(yaml.safe_load(fh))


def dump_config(cfg, path):
    with open(path, "w") as fh:
        yaml.safe_dump(to_dict(cfg), fh, sort_keys=False, default_flow_style=None)
