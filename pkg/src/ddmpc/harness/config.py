"""Experiment configuration: YAML blocks merged over packaged defaults."""

from __future__ import annotations

import copy
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np
import yaml

from ..errors import DimensionError
from ..planner import PlannerConfig

_HERE = Path(__file__).parent
PRESETS = {"default": [_HERE / "default.yaml"],
           "desk": [_HERE / "default.yaml", _HERE / "desk.yaml"]}


def _block(cls, data: dict, name: str):
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown keys in {name} block: {sorted(unknown)}")
    return cls(**data)


@dataclass
class PlantBlock:
    kind: str = "surrogate"
    n_seg: int = 3
    load: float = 1.0
    noise_std: float = 0.05
    half_width: float | None = None
    vel_limit: float = 600.0
    dt: float = 0.02

    @property
    def m(self) -> int:
        return 3 * self.n_seg

    @property
    def c(self) -> int:
        return 2 * self.n_seg


@dataclass
class ExcitationBlock:
    freq_hz: float = 3.0
    damping: float = 0.3
    angle_std: float = 25.0
    vel_clip: float = 500.0


@dataclass
class DataBlock:
    N: int = 401


@dataclass
class PlannerBlock:
    l: int = 6
    n_ini: int = 2
    Q: float = 1e4
    R: float = 70.0
    S: float = 0.01
    F: float = 0.01
    P: float = 0.1
    u_bounds: list | None = None
    y_bounds: list | None = None
    dy_bounds: list | None = None
    solver_tol: float = 1e-6
    max_iter: int = 4000
    h: int = 15


@dataclass
class DsaBlock:
    loads: list
    sigma_weight: float = 1.0
    test_loads: list = None
    trials: int = 100
    probe_steps: int = 200
    timing_steps: int = 60
    timing_min_ratio: float = 3.0
    min_accuracy: float = 0.95
    manifest: str | None = None


@dataclass
class RefgenBlock:
    targets: list
    poses: list
    T_leg: float = 1.0
    T_hold: float = 2.0
    letter_scale: float = 100.0
    letter_center: list = None
    letter_T_leg: float = 0.6


@dataclass
class MlpBlock:
    lr: float = 1e-3
    batch: int = 128
    epochs: int = 100
    hidden: int = 256
    n_hidden: int = 3
    seed: int = 42
    split: list = None
    samples: int = 10000
    joint_range: float = 20.0
    bend_range: float = 15.0
    min_val_reduction: float = 0.5


@dataclass
class TrackBlock:
    pid: dict
    max_ratio: float = 0.8


@dataclass
class SweepBlock:
    N_list: list
    n_ini_list: list
    l_list: list
    start: list
    end: list
    T_a: int = 1200
    horizon_N: int = 401
    repeats: int = 3
    workers: int = 1
    min_ratio: float = 5.0


@dataclass
class RepeatBlock:
    cycles: int = 30
    warmup: int = 2
    T_move: float = 1.0
    T_settle: float = 3.0


@dataclass
class LettersBlock:
    letters: list
    threshold_mm: float = 5.0
    fk_tolerance_mm: float = 2.0


_BLOCKS = {"plant": PlantBlock, "excitation": ExcitationBlock, "data": DataBlock,
           "planner": PlannerBlock, "dsa": DsaBlock, "refgen": RefgenBlock,
           "mlp": MlpBlock, "track": TrackBlock, "sweep": SweepBlock,
           "repeat": RepeatBlock, "letters": LettersBlock}


@dataclass
class ExperimentConfig:
    plant: PlantBlock
    excitation: ExcitationBlock
    data: DataBlock
    planner: PlannerBlock
    dsa: DsaBlock
    refgen: RefgenBlock
    mlp: MlpBlock
    track: TrackBlock
    sweep: SweepBlock
    repeat: RepeatBlock
    letters: LettersBlock
    seed: int = 0
    base_dir: Path = Path(".")

    def planner_config(self, **overrides) -> PlannerConfig:
        p = {f.name: getattr(self.planner, f.name) for f in fields(self.planner)}
        p.pop("h")
        p.update(overrides)
        return PlannerConfig(m=self.plant.m, c=self.plant.c, dt=self.plant.dt, **p)

    def validate(self) -> None:
        c = self.plant.c
        for name, pts in (("refgen.targets", self.refgen.targets),
                          ("refgen.poses", self.refgen.poses),
                          ("sweep.start", [self.sweep.start]),
                          ("sweep.end", [self.sweep.end])):
            arr = np.asarray(pts, dtype=float)
            if arr.ndim != 2 or arr.shape[1] != c:
                raise DimensionError(f"{name} must hold {c}-vectors")
        for N in self.sweep.N_list:
            for n_ini in self.sweep.n_ini_list:
                for l in self.sweep.l_list:
                    if N < n_ini + l:
                        raise ValueError(f"sweep point N={N} shorter than n_ini+l={n_ini + l}")
        if self.dsa.manifest and not self.resolve(self.dsa.manifest).exists():
            raise FileNotFoundError(f"bank manifest {self.dsa.manifest} not found")
        self.planner_config()

    def resolve(self, path) -> Path:
        p = Path(path)
        return p if p.is_absolute() else self.base_dir / p


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in (over or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def config_from_dict(raw: dict, base_dir=".") -> ExperimentConfig:
    raw = dict(raw)
    unknown = set(raw) - set(_BLOCKS) - {"seed"}
    if unknown:
        raise ValueError(f"unknown config blocks: {sorted(unknown)}")
    blocks = {k: _block(cls, raw.get(k, {}) or {}, k) for k, cls in _BLOCKS.items()}
    cfg = ExperimentConfig(**blocks, seed=int(raw.get("seed", 0)), base_dir=Path(base_dir))
    cfg.validate()
    return cfg


def load_config(path=None, preset: str = "default", overrides: dict | None = None) -> ExperimentConfig:
    """Preset defaults, then the YAML file at ``path``, then ``overrides``."""
    raw: dict = {}
    for f in PRESETS[preset]:
        raw = _merge(raw, yaml.safe_load(f.read_text()))
    base = Path(".")
    if path is not None:
        path = Path(path)
        raw = _merge(raw, yaml.safe_load(path.read_text()) or {})
        base = path.parent
    raw = _merge(raw, overrides or {})
    return config_from_dict(raw, base)
