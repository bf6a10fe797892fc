"""Shared pieces for the experiments: signals, data collection, reports."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from ..mlp import MlpModel, TrainConfig, TrainResult, infer, train
from ..plants import CableArmSurrogate, coupling_matrix, forward_kinematics
from ..trajectory import Trajectory, record_episode
from .config import ExperimentConfig


def excitation(T: int, m: int, rng: np.random.Generator, freq_hz: float = 3.0,
               damping: float = 0.3, angle_std: float = 25.0, vel_clip: float = 500.0,
               dt: float = 0.02) -> np.ndarray:
    """Motor-velocity sequence whose integrated angles follow a damped resonant noise process.

    The angle process is scaled to standard deviation ``angle_std`` and the
    velocities are clipped to ``vel_clip``.
    """
    wn = 2.0 * np.pi * freq_hz
    th, w = np.zeros(m), np.zeros(m)
    vel, ang = np.zeros((T, m)), np.zeros((T, m))
    for t in range(T):
        acc = -2.0 * damping * wn * w - wn ** 2 * th + rng.standard_normal(m) / np.sqrt(dt)
        w = w + dt * acc
        th = th + dt * w
        vel[t], ang[t] = w, th
    scale = angle_std / max(float(ang.std()), 1e-12)
    return np.clip(vel * scale, -vel_clip, vel_clip)


def make_plant(cfg: ExperimentConfig, load: float | None = None,
               noise_std: float | None = None, half_width=...) -> CableArmSurrogate:
    p = cfg.plant
    if p.kind != "surrogate":
        raise ValueError(f"experiments need the surrogate plant, got {p.kind!r}")
    return CableArmSurrogate(
        load=p.load if load is None else load, n_seg=p.n_seg, dt=p.dt,
        noise_std=p.noise_std if noise_std is None else noise_std,
        vel_limit=p.vel_limit, half_width=p.half_width if half_width is ... else half_width)


def collect_dataset(cfg: ExperimentConfig, load: float, N: int, seed,
                    label: str | None = None, noise_seed=None, **plant_kw) -> Trajectory:
    """Record ``N`` excitation samples from a surrogate at rest at the zero pose.

    ``seed`` fixes the input sequence. Measurement noise is drawn from
    ``noise_seed`` when given, else from the same stream as the input, so
    several conditions can be driven by one shared input program.
    """
    rng = np.random.default_rng(seed)
    e = cfg.excitation
    u = excitation(N, cfg.plant.m, rng, e.freq_hz, e.damping, e.angle_std, e.vel_clip,
                   cfg.plant.dt)
    plant = make_plant(cfg, load, **plant_kw)
    if noise_seed is None:
        noise_seed = int(rng.integers(2 ** 32))
    return record_episode(plant, u, seed=noise_seed,
                          label=f"{load:g}" if label is None else label)


def motion_pairs(cfg: ExperimentConfig, load: float, n: int, seed) -> tuple[np.ndarray, np.ndarray]:
    """Motor and joint angles sampled along slow random joint-space motion.

    The motors are moved within the row space of the coupling matrix so the
    joint-to-motor relation is one-to-one.
    """
    rng = np.random.default_rng(seed)
    plant = make_plant(cfg, load)
    W = plant.W
    Wp = np.linalg.pinv(W)
    amp = cfg.mlp.joint_range
    # slow joint-space path: sum of random sinusoids per channel
    t = np.arange(n) * plant.dt
    # slow enough that the lag behind the motors stays small
    freqs = rng.uniform(0.01, 0.08, (4, plant.c))
    phases = rng.uniform(0, 2 * np.pi, (4, plant.c))
    path = np.zeros((n, plant.c))
    for f, ph in zip(freqs, phases):
        path += np.sin(2 * np.pi * f * t[:, None] + ph)
    ramp = np.clip(t / 5.0, 0.0, 1.0)
    path *= (amp / 2.0) * (ramp * ramp * (3 - 2 * ramp))[:, None]
    theta_path = path @ Wp.T
    omega = np.vstack([theta_path[:1] / plant.dt, np.diff(theta_path, axis=0) / plant.dt])
    omega = np.clip(omega, -plant.vel_limit, plant.vel_limit)
    thetas, betas = [], []
    for w in omega:
        y = plant.step(w, rng)
        thetas.append(plant.theta.copy())
        betas.append(y)
    return np.array(thetas), np.array(betas)


def train_config(cfg: ExperimentConfig) -> TrainConfig:
    m = cfg.mlp
    return TrainConfig(lr=m.lr, batch=m.batch, epochs=m.epochs, hidden=m.hidden,
                       n_hidden=m.n_hidden, seed=m.seed,
                       split=tuple(m.split or (0.8, 0.1, 0.1)))


def train_joint_inverse(cfg: ExperimentConfig, load: float, seed) -> TrainResult:
    """Joint angles to motor angles for the condition ``load``."""
    theta, beta = motion_pairs(cfg, load, cfg.mlp.samples, seed)
    return train(beta, theta, train_config(cfg))


def bend_pairs(cfg: ExperimentConfig, n: int, seed) -> tuple[np.ndarray, np.ndarray]:
    """End-effector x-y positions and joint angles of uniform-bend poses.

    Every segment carries the same joint pair ``(a, b)``, a constant-curvature
    family that maps one-to-one onto the x-y plane near the straight pose.
    """
    rng = np.random.default_rng(seed)
    r = cfg.mlp.bend_range
    ab = rng.uniform(-r, r, (n, 2))
    beta = np.tile(ab, (1, cfg.plant.n_seg))
    xy = np.array([forward_kinematics(b)[:2] for b in beta])
    return xy, beta


def train_position_inverse(cfg: ExperimentConfig, seed) -> TrainResult:
    xy, beta = bend_pairs(cfg, cfg.mlp.samples, seed)
    return train(xy, beta, train_config(cfg))


def velocity_reference(model: MlpModel | None, y_ref: np.ndarray, dt: float,
                       W: np.ndarray | None = None) -> np.ndarray:
    """``u_tar`` as the backward difference of inverse-model motor angles.

    Without a model the minimum-norm motor preimage through ``W`` is used.
    """
    y_ref = np.atleast_2d(y_ref)
    if model is not None:
        theta = infer(model, y_ref)
    else:
        theta = y_ref @ np.linalg.pinv(W if W is not None else coupling_matrix(y_ref.shape[1] // 2)).T
    return np.vstack([np.zeros((1, theta.shape[1])), np.diff(theta, axis=0) / dt])


@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class Report:
    """Outcome of one experiment.

    ``metrics`` are deterministic given (config, seed); wall-clock numbers
    go to ``timing`` and are written to a separate file.
    """

    name: str
    metrics: dict = field(default_factory=dict)
    timing: dict = field(default_factory=dict)
    checks: list[Check] = field(default_factory=list)
    tables: dict = field(default_factory=dict)
    files: list[Path] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def check(self, name: str, passed: bool, detail: str = "") -> bool:
        self.checks.append(Check(name, bool(passed), detail))
        return bool(passed)

    def add_table(self, name: str, header: list[str], rows: list[list]) -> None:
        self.tables[name] = (header, rows)

    def write(self, out_dir) -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = []
        for name, (header, rows) in self.tables.items():
            p = out / f"{name}.csv"
            write_csv(p, header, rows)
            paths.append(p)
        p = out / "checks.csv"
        write_csv(p, ["check", "passed", "detail"],
                  [[c.name, int(c.passed), c.detail] for c in self.checks])
        paths.append(p)
        p = out / "metrics.yaml"
        p.write_text(yaml.safe_dump(_plain(self.metrics), sort_keys=True))
        paths.append(p)
        if self.timing:
            p = out / "timing.yaml"
            p.write_text(yaml.safe_dump(_plain(self.timing), sort_keys=True))
            paths.append(p)
        self.files.extend(paths)
        return paths

    def summary(self) -> str:
        lines = [f"[{self.name}]"]
        for c in self.checks:
            lines.append(f"  {'PASS' if c.passed else 'FAIL'}  {c.name}  {c.detail}")
        return "\n".join(lines)


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, np.integer):
        return int(v)
    return v


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, np.bool_)):
        return obj.item()
    return obj
