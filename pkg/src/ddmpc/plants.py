"""Simulated plants and a PID baseline.

``LtiPlant`` is an exact linear system used as a ground-truth oracle.
``CableArmSurrogate`` is a stand-in for a multi-segment cable-driven arm:
motors are velocity-commanded and integrate to angles, a coupling matrix maps
motor angles to joint targets, and each joint passes through a cubic
softening, a backlash (play) operator and a first-order lag. The payload
widens the backlash band and slows the lag.

Plants share the step convention ``y = plant.step(u, rng)``: the returned
measurement is the one paired with ``u`` in recorded data.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, DivergenceError, InputBoundError

SEGMENT_LENGTH_MM = 350.0
DIVERGENCE_LIMIT = 1e9


class LtiPlant:
    """``x+ = Ax + Bu``, ``y = Cx + Du + noise``.

    ``step`` returns the output at the current state and then advances it.
    """

    def __init__(self, A, B, C, D=None, x0=None, noise_std: float = 0.0, dt: float = 1.0):
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        self.B = np.atleast_2d(np.asarray(B, dtype=float))
        self.C = np.atleast_2d(np.asarray(C, dtype=float))
        h, m = self.B.shape
        c = self.C.shape[0]
        self.D = np.zeros((c, m)) if D is None else np.atleast_2d(np.asarray(D, dtype=float))
        if self.A.shape != (h, h) or self.C.shape != (c, h) or self.D.shape != (c, m):
            raise DimensionError("inconsistent state-space matrices")
        self.x0 = np.zeros(h) if x0 is None else np.asarray(x0, dtype=float).ravel().copy()
        self.x = self.x0.copy()
        self.noise_std = float(noise_std)
        self.dt = dt

    @property
    def dims(self) -> tuple[int, int, int]:
        """``(h, m, c)``."""
        return self.A.shape[0], self.B.shape[1], self.C.shape[0]

    def reset(self, x0=None) -> None:
        self.x = (self.x0 if x0 is None else np.asarray(x0, dtype=float).ravel()).copy()

    def step(self, u, rng: np.random.Generator | None = None) -> np.ndarray:
        u = np.asarray(u, dtype=float).ravel()
        y = self.C @ self.x + self.D @ u
        if self.noise_std > 0:
            y = y + self.noise_std * rng.standard_normal(y.size)
        self.x = self.A @ self.x + self.B @ u
        if not np.all(np.isfinite(self.x)) or np.linalg.norm(self.x) > DIVERGENCE_LIMIT:
            raise DivergenceError("LTI state norm exceeded divergence limit")
        return y


def lti_step(p: LtiPlant, u, rng=None) -> np.ndarray:
    return p.step(u, rng)


def lti_rollout(A, B, C, D, x0, inputs) -> np.ndarray:
    """Noise-free outputs for an input sequence, computed directly."""
    x = np.asarray(x0, dtype=float).ravel()
    ys = []
    for u in np.atleast_2d(inputs):
        ys.append(C @ x + D @ u)
        x = A @ x + B @ u
    return np.array(ys)


def random_lti(h: int, m: int, c: int, rng: np.random.Generator,
               radius: float = 0.9, feedthrough: bool = False, **kwargs) -> LtiPlant:
    """Random stable plant; minimal with probability one."""
    A = rng.standard_normal((h, h))
    A *= radius / max(np.max(np.abs(np.linalg.eigvals(A))), 1e-12)
    B = rng.standard_normal((h, m))
    C = rng.standard_normal((c, h))
    D = rng.standard_normal((c, m)) if feedthrough else np.zeros((c, m))
    return LtiPlant(A, B, C, D, **kwargs)


def coupling_matrix(n_seg: int = 3, cross: float = 0.1) -> np.ndarray:
    """Motor-to-joint map of shape ``(2n, 3n)``.

    Each segment's three cables sit 120 degrees apart; the joint pair of a
    segment responds to the differential motion of its own motors with unit
    gain. Motors of proximal segments leak into distal joints with relative
    weight ``-cross``.
    """
    phi = np.deg2rad([0.0, 120.0, 240.0])
    block = (2.0 / 3.0) * np.vstack([np.cos(phi), np.sin(phi)])
    W = np.zeros((2 * n_seg, 3 * n_seg))
    for i in range(n_seg):
        W[2 * i:2 * i + 2, 3 * i:3 * i + 3] = block
        for j in range(i):
            W[2 * i:2 * i + 2, 3 * j:3 * j + 3] = -cross * block
    return W


def backlash(z, target, half_width):
    """Play operator: ``z`` follows ``target`` only outside a band of ``half_width``."""
    return np.clip(z, target - half_width, target + half_width)


def backlash_half_width(load: float) -> float:
    return 0.2 + 0.3 * load


def lag_time_constant(load: float) -> float:
    return 0.15 + 0.1 * load


@dataclass
class CableArmSurrogate:
    """Velocity-commanded cable-arm stand-in.

    Angles are in degrees, velocities in deg/s, the payload in kg.
    ``half_width`` and ``tau`` default to the payload-dependent laws.
    """

    load: float = 0.0
    n_seg: int = 3
    dt: float = 0.02
    gamma: float = 1e-6
    noise_std: float = 0.05
    vel_limit: float = 600.0
    W: np.ndarray | None = None
    half_width: float | None = None
    tau: float | None = None
    theta: np.ndarray = field(init=False)
    beta: np.ndarray = field(init=False)
    z: np.ndarray = field(init=False)

    def __post_init__(self):
        if not 0.0 <= self.load <= 2.5:
            raise ValueError("load must lie in [0, 2.5] kg")
        if self.W is None:
            self.W = coupling_matrix(self.n_seg)
        self.W = np.asarray(self.W, dtype=float)
        if self.W.shape != (2 * self.n_seg, 3 * self.n_seg):
            raise DimensionError("coupling matrix has the wrong shape")
        if self.half_width is None:
            self.half_width = backlash_half_width(self.load)
        if self.tau is None:
            self.tau = lag_time_constant(self.load)
        self.theta = np.zeros(self.m)
        self.beta = np.zeros(self.c)
        self.z = np.zeros(self.c)

    @property
    def m(self) -> int:
        return 3 * self.n_seg

    @property
    def c(self) -> int:
        return 2 * self.n_seg

    def joint_target(self, theta) -> np.ndarray:
        s = self.W @ np.asarray(theta, dtype=float)
        return s - self.gamma * s ** 3

    def set_pose(self, beta) -> None:
        """Place the arm at rest with joint angles ``beta``.

        Motor angles are the minimum-norm preimage; the backlash state is
        centred on the joint angles.
        """
        beta = np.asarray(beta, dtype=float).ravel()
        s = beta.copy()
        for _ in range(50):  # invert s - gamma s^3 = beta
            s = s - (s - self.gamma * s ** 3 - beta) / (1.0 - 3.0 * self.gamma * s ** 2)
        self.theta = np.linalg.pinv(self.W) @ s
        self.beta = beta.copy()
        self.z = beta.copy()

    def step(self, omega, rng: np.random.Generator | None = None) -> np.ndarray:
        omega = np.asarray(omega, dtype=float).ravel()
        if omega.size != self.m:
            raise DimensionError(f"expected {self.m} motor velocities")
        if np.any(~np.isfinite(omega)) or np.any(np.abs(omega) > self.vel_limit):
            raise InputBoundError(f"motor velocity outside +/-{self.vel_limit} deg/s")
        self.theta = self.theta + self.dt * omega
        target = self.joint_target(self.theta)
        self.z = backlash(self.z, target, self.half_width)
        self.beta = self.beta + (self.dt / self.tau) * (self.z - self.beta)
        if np.any(np.abs(self.theta) > DIVERGENCE_LIMIT):
            raise DivergenceError("motor angles diverged")
        y = self.beta.copy()
        if self.noise_std > 0:
            y += self.noise_std * rng.standard_normal(y.size)
        return y


def surrogate_step(s: CableArmSurrogate, omega, rng=None) -> np.ndarray:
    return s.step(omega, rng)


def _rot_x(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def _rot_y(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def forward_kinematics(beta, segment_length: float = SEGMENT_LENGTH_MM) -> np.ndarray:
    """End-effector position (mm) for joint angles ``beta`` (deg).

    Each segment is a link of ``segment_length`` along the running z-axis
    followed by its universal joint, which rotates about y by the first
    angle of the pair and then about x by the second.
    """
    beta = np.deg2rad(np.asarray(beta, dtype=float).ravel())
    if beta.size % 2:
        raise DimensionError("joint vector must have even length")
    R = np.eye(3)
    p = np.zeros(3)
    for i in range(beta.size // 2):
        p = p + R @ np.array([0.0, 0.0, segment_length])
        R = R @ _rot_y(beta[2 * i]) @ _rot_x(beta[2 * i + 1])
    return p


@dataclass
class PidState:
    """Per-joint PID in joint space, mapped to motor velocities.

    Attributes:
        output_map: ``(m, c)`` joint-to-motor map, normally ``pinv(W)``.
        i_clamp: Per-channel bound on the integrator (anti-windup).
        u_limit: Optional symmetric clip on the motor command.
    """

    kp: np.ndarray
    ki: np.ndarray
    kd: np.ndarray
    output_map: np.ndarray
    i_clamp: np.ndarray
    u_limit: float | None = None
    integrator: np.ndarray = field(init=False)
    prev_error: np.ndarray = field(init=False)

    def __post_init__(self):
        c = self.output_map.shape[1]
        for name in ("kp", "ki", "kd", "i_clamp"):
            arr = np.broadcast_to(np.asarray(getattr(self, name), dtype=float), (c,)).copy()
            if np.any(arr < 0):
                raise ValueError(f"{name} must be nonnegative")
            setattr(self, name, arr)
        self.integrator = np.zeros(c)
        self.prev_error = np.zeros(c)

    @classmethod
    def for_arm(cls, W, kp, ki, kd, i_clamp=5.0, u_limit=None) -> "PidState":
        return cls(kp, ki, kd, np.linalg.pinv(np.asarray(W, dtype=float)), i_clamp, u_limit)

    def reset(self) -> None:
        self.integrator[:] = 0.0
        self.prev_error[:] = 0.0


def pid_step(pid: PidState, y_ref, y_meas, dt: float) -> np.ndarray:
    if not dt > 0:
        raise ValueError("dt must be positive")
    e = np.asarray(y_ref, dtype=float) - np.asarray(y_meas, dtype=float)
    pid.integrator = np.clip(pid.integrator + e * dt, -pid.i_clamp, pid.i_clamp)
    deriv = (e - pid.prev_error) / dt
    pid.prev_error = e
    v = pid.kp * e + pid.ki * pid.integrator + pid.kd * deriv
    u = pid.output_map @ v
    if pid.u_limit is not None:
        u = np.clip(u, -pid.u_limit, pid.u_limit)
    return u
