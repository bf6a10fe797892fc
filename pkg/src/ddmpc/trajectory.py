"""Recorded input-output data and the Hankel structures built from it.

Signals are stored time-major: row ``t`` of an ``(T, d)`` array is the sample
at time ``t``. A depth-``L`` block-Hankel matrix of such a signal has ``L``
block rows of height ``d``; column ``j`` is the flattened window
``s[j], s[j+1], ..., s[j+L-1]`` with the ``d`` components of each sample kept
contiguous.
"""

from __future__ import annotations

import math
import re
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import numpy as np

from .errors import (
    DimensionError,
    EpisodeAbortedError,
    InsufficientDataError,
    InvalidDepthError,
    NumericError,
)

# Singular values below RANK_RTOL * sigma_max are treated as zero.
RANK_RTOL = 1e-9


def _as_signal(signal) -> np.ndarray:
    arr = np.asarray(signal, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise DimensionError(f"signal must be 1-D or 2-D, got shape {arr.shape}")
    return arr


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=float, copy=True)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class SystemDims:
    """Input, output and assumed state dimensions of a plant."""

    m: int
    c: int
    h: int

    def __post_init__(self):
        for name in ("m", "c", "h"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")


@dataclass(frozen=True)
class Trajectory:
    """A recorded input-output sequence.

    Attributes:
        inputs: ``(T, m)`` applied inputs.
        outputs: ``(T, c)`` measured outputs paired with ``inputs`` row by row.
        dt: Sample period in seconds.
        label: Operating-condition tag, e.g. the payload in kg.
    """

    inputs: np.ndarray
    outputs: np.ndarray
    dt: float = 0.02
    label: str = ""

    def __post_init__(self):
        u = _as_signal(self.inputs)
        y = _as_signal(self.outputs)
        if u.shape[0] != y.shape[0]:
            raise DimensionError(
                f"inputs have {u.shape[0]} rows but outputs have {y.shape[0]}")
        if u.shape[0] < 1:
            raise InsufficientDataError("trajectory needs at least one sample")
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(y))):
            raise NumericError("trajectory contains non-finite entries")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        object.__setattr__(self, "inputs", _frozen(u))
        object.__setattr__(self, "outputs", _frozen(y))
        object.__setattr__(self, "label", str(self.label))

    @property
    def T(self) -> int:
        return self.inputs.shape[0]

    @property
    def m(self) -> int:
        return self.inputs.shape[1]

    @property
    def c(self) -> int:
        return self.outputs.shape[1]

    def window(self, start: int, length: int) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(inputs, outputs)`` rows ``start .. start+length-1``."""
        if start < 0 or start + length > self.T:
            raise InsufficientDataError(
                f"window [{start}, {start + length}) outside trajectory of length {self.T}")
        return (self.inputs[start:start + length].copy(),
                self.outputs[start:start + length].copy())

    def head(self, n: int) -> "Trajectory":
        """First ``n`` samples as a new trajectory."""
        if n < 1 or n > self.T:
            raise InsufficientDataError(f"cannot take {n} samples from {self.T}")
        return Trajectory(self.inputs[:n], self.outputs[:n], self.dt, self.label)


@dataclass(frozen=True)
class HankelMatrix:
    data: np.ndarray
    depth: int
    signal_dim: int

    @property
    def n_cols(self) -> int:
        return self.data.shape[1]

    def block(self, i: int, j: int) -> np.ndarray:
        """Block ``(i, j)`` (0-based), i.e. signal sample ``i + j``."""
        d = self.signal_dim
        return self.data[i * d:(i + 1) * d, j]


@dataclass(frozen=True)
class HankelPartition:
    """Past/future split of the input and output Hankel matrices."""

    Up: np.ndarray
    Yp: np.ndarray
    Uf: np.ndarray
    Yf: np.ndarray
    n_ini: int
    l: int
    m: int
    c: int

    @property
    def width(self) -> int:
        return self.Up.shape[1]

    @property
    def depth(self) -> int:
        return self.n_ini + self.l


def build_hankel(signal, depth: int) -> HankelMatrix:
    """Build the depth-``L`` block-Hankel matrix of a time-major signal.

    Args:
        signal: ``(T,)`` or ``(T, d)`` array.
        depth: Number of block rows ``L``.

    Returns:
        HankelMatrix whose data has shape ``(L*d, T-L+1)``.

    Raises:
        InvalidDepthError: If ``L < 1`` or ``L > T``.
    """
    s = _as_signal(signal)
    T, d = s.shape
    if depth < 1 or depth > T:
        raise InvalidDepthError(f"depth {depth} invalid for signal of length {T}")
    cols = T - depth + 1
    # windows[j] is s[j:j+L] flattened sample-major
    windows = np.lib.stride_tricks.sliding_window_view(s, depth, axis=0)
    # sliding_window_view puts the window axis last: (cols, d, L)
    data = np.ascontiguousarray(windows.transpose(0, 2, 1).reshape(cols, depth * d).T)
    data.flags.writeable = False
    return HankelMatrix(data=data, depth=depth, signal_dim=d)


def numerical_rank(mat: np.ndarray, rtol: float = RANK_RTOL) -> int:
    sv = np.linalg.svd(mat, compute_uv=False)
    if sv.size == 0 or sv[0] == 0.0:
        return 0
    return int(np.sum(sv > rtol * sv[0]))


def is_persistently_exciting(signal, order: int) -> bool:
    """Whether the depth-``order`` Hankel matrix of ``signal`` has full row rank."""
    s = _as_signal(signal)
    if s.shape[0] < order:
        raise InsufficientDataError(
            f"signal of length {s.shape[0]} too short for order {order}")
    H = build_hankel(s, order)
    return numerical_rank(H.data) == H.data.shape[0]


def min_data_length(dims: SystemDims, n_ini: int, l: int) -> int:
    """Data length needed for a square-or-wider Hankel stack.

    ``max{(m+1)(n_ini+l+h), (m+c+1)(n_ini+l)}``
    """
    if min(n_ini, l) < 1:
        raise ValueError("n_ini and l must be >= 1")
    L = n_ini + l
    return max((dims.m + 1) * (L + dims.h), (dims.m + dims.c + 1) * L)


def partition_hankel(traj: Trajectory, n_ini: int, l: int,
                     h: int | None = None) -> HankelPartition:
    """Split the depth-``n_ini+l`` Hankels of ``traj`` into past and future rows.

    When ``h`` is given, the inputs are checked for persistency of excitation
    of order ``n_ini+l+h`` and a warning is issued if they fall short.
    """
    L = n_ini + l
    if n_ini < 1 or l < 1:
        raise ValueError("n_ini and l must be >= 1")
    if traj.T < L:
        raise InsufficientDataError(
            f"trajectory of length {traj.T} shorter than n_ini + l = {L}")
    if h is not None:
        order = L + h
        if traj.T < order or not is_persistently_exciting(traj.inputs, order):
            warnings.warn(
                f"inputs are not persistently exciting of order {order}",
                RuntimeWarning, stacklevel=2)
    m, c = traj.m, traj.c
    Hu = build_hankel(traj.inputs, L).data
    Hy = build_hankel(traj.outputs, L).data
    return HankelPartition(
        Up=Hu[:m * n_ini], Uf=Hu[m * n_ini:],
        Yp=Hy[:c * n_ini], Yf=Hy[c * n_ini:],
        n_ini=n_ini, l=l, m=m, c=c)


class Plant(Protocol):
    dt: float

    def step(self, u: np.ndarray, rng: np.random.Generator) -> np.ndarray: ...


def record_episode(plant: Plant, inputs, seed: int = 0, label: str = "") -> Trajectory:
    """Drive ``plant`` open loop with ``inputs`` and record the outputs.

    The plant is stepped from whatever state it is in; measurement noise is
    drawn from a generator seeded with ``seed``.

    Raises:
        EpisodeAbortedError: If a plant step fails. The exception carries the
            samples recorded so far.
    """
    u = _as_signal(inputs)
    if not np.all(np.isfinite(u)):
        raise NumericError("inputs contain non-finite entries")
    rng = np.random.default_rng(seed)
    ys = []
    for t in range(u.shape[0]):
        try:
            ys.append(np.asarray(plant.step(u[t], rng), dtype=float).ravel())
        except Exception as exc:
            partial = (Trajectory(u[:t], np.vstack(ys), plant.dt, label)
                       if ys else None)
            raise EpisodeAbortedError(
                f"plant step {t} failed: {exc}", partial=partial, step=t) from exc
    return Trajectory(u, np.vstack(ys), plant.dt, label)


_META_RE = re.compile(
    r"#\s*dt=(?P<dt>\S+)\s+label=(?P<label>\S*)\s+m=(?P<m>\d+)\s+c=(?P<c>\d+)")


def save_trajectory_csv(traj: Trajectory, path) -> None:
    """Write ``traj`` as ``t,u_1..u_m,y_1..y_c`` with a metadata comment line."""
    if re.search(r"\s", traj.label):
        raise ValueError("label must not contain whitespace")
    header = ",".join(["t"] + [f"u_{i + 1}" for i in range(traj.m)]
                      + [f"y_{i + 1}" for i in range(traj.c)])
    t = np.arange(traj.T) * traj.dt
    body = np.column_stack([t, traj.inputs, traj.outputs])
    with open(path, "w") as fh:
        fh.write(f"# dt={traj.dt!r} label={traj.label} m={traj.m} c={traj.c}\n")
        fh.write(header + "\n")
        np.savetxt(fh, body, delimiter=",", fmt="%.17g")


def load_trajectory_csv(path) -> Trajectory:
    """Read a file written by :func:`save_trajectory_csv`.

    Raises:
        DimensionError: If the header or data columns disagree with the
            declared ``m`` and ``c``.
    """
    path = Path(path)
    with open(path) as fh:
        meta_line = fh.readline()
        header = fh.readline().strip().split(",")
    match = _META_RE.match(meta_line.strip())
    if match is None:
        raise ValueError(f"{path}: missing metadata comment line")
    m, c = int(match["m"]), int(match["c"])
    expected = ["t"] + [f"u_{i + 1}" for i in range(m)] + [f"y_{i + 1}" for i in range(c)]
    if header != expected:
        raise DimensionError(f"{path}: header {header} does not match m={m}, c={c}")
    body = np.loadtxt(path, delimiter=",", skiprows=2, ndmin=2)
    if body.shape[1] != 1 + m + c:
        raise DimensionError(
            f"{path}: {body.shape[1]} data columns, expected {1 + m + c}")
    dt = float(match["dt"])
    if not math.isfinite(dt):
        raise NumericError(f"{path}: non-finite dt")
    return Trajectory(body[:, 1:1 + m], body[:, 1 + m:], dt, match["label"])

