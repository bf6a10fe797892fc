"""Smooth reference generation.

Point-to-point moves use rest-to-rest quintic polynomials. Multi-waypoint
paths chain quintic legs, each starting and ending at rest, so velocity and
acceleration are zero at every waypoint. Letter paths are fixed polylines in
the end-effector x-y plane, converted to joint references through an inverse
model.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .errors import DimensionError, InvalidDurationError, ReferenceInfeasibleError


def quintic_coeffs(p0, pT, T: float) -> np.ndarray:
    """Coefficients ``a0..a5`` of the rest-to-rest quintic from ``p0`` to ``pT``.

    Works elementwise; for vector endpoints the result has shape ``(6, c)``.

    Raises:
        InvalidDurationError: If ``T <= 0``.
    """
    if not T > 0:
        raise InvalidDurationError(f"segment duration must be positive, got {T}")
    p0 = np.asarray(p0, dtype=float)
    delta = np.asarray(pT, dtype=float) - p0
    zero = np.zeros_like(delta)
    return np.stack([p0, zero, zero, 10.0 * delta / T ** 3,
                     -15.0 * delta / T ** 4, 6.0 * delta / T ** 5])


class RefSample(NamedTuple):
    q: np.ndarray
    qd: np.ndarray
    qdd: np.ndarray
    clamped: bool


@dataclass(frozen=True)
class QuinticSegment:
    p0: np.ndarray
    pT: np.ndarray
    T: float

    def __post_init__(self):
        p0 = np.atleast_1d(np.asarray(self.p0, dtype=float))
        pT = np.atleast_1d(np.asarray(self.pT, dtype=float))
        if p0.shape != pT.shape:
            raise DimensionError("segment endpoints differ in shape")
        object.__setattr__(self, "p0", p0)
        object.__setattr__(self, "pT", pT)
        object.__setattr__(self, "coeffs", quintic_coeffs(p0, pT, self.T))

    @property
    def dim(self) -> int:
        return self.p0.size


def sample_reference(seg: QuinticSegment, t: float) -> RefSample:
    """Position, velocity and acceleration of ``seg`` at time ``t``.

    Times outside ``[0, T]`` are clamped and flagged.
    """
    tc = min(max(float(t), 0.0), seg.T)
    a = seg.coeffs
    q = a[0] + tc * (a[1] + tc * (a[2] + tc * (a[3] + tc * (a[4] + tc * a[5]))))
    qd = a[1] + tc * (2 * a[2] + tc * (3 * a[3] + tc * (4 * a[4] + tc * 5 * a[5])))
    qdd = 2 * a[2] + tc * (6 * a[3] + tc * (12 * a[4] + tc * 20 * a[5]))
    return RefSample(q, qd, qdd, tc != t)


@dataclass(frozen=True)
class WaypointPath:
    """Quintic legs through ``waypoints`` with rest at each one."""

    waypoints: np.ndarray
    durations: np.ndarray

    def __post_init__(self):
        wp = np.atleast_2d(np.asarray(self.waypoints, dtype=float))
        dur = np.broadcast_to(np.asarray(self.durations, dtype=float),
                              (max(wp.shape[0] - 1, 0),)).copy()
        if wp.shape[0] < 2:
            raise DimensionError("a path needs at least two waypoints")
        if np.any(dur <= 0):
            raise InvalidDurationError("leg durations must be positive")
        object.__setattr__(self, "waypoints", wp)
        object.__setattr__(self, "durations", dur)
        object.__setattr__(self, "segments", tuple(
            QuinticSegment(wp[i], wp[i + 1], float(dur[i])) for i in range(len(dur))))

    @property
    def total_time(self) -> float:
        return float(self.durations.sum())

    def sample(self, t: float) -> RefSample:
        starts = np.concatenate([[0.0], np.cumsum(self.durations)])
        i = int(np.clip(np.searchsorted(starts, t, side="right") - 1, 0, len(self.segments) - 1))
        s = sample_reference(self.segments[i], t - starts[i])
        return s._replace(clamped=not 0.0 <= t <= self.total_time)

    def discretize(self, dt: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Times, positions and velocities on a ``dt`` grid including both ends.

        Legs are sampled on their own grids so every waypoint is hit exactly.
        """
        if not dt > 0:
            raise InvalidDurationError("dt must be positive")
        ts, qs, qds = [0.0], [self.waypoints[0]], [np.zeros(self.waypoints.shape[1])]
        t0 = 0.0
        for seg in self.segments:
            n = max(int(round(seg.T / dt)), 1)
            for k in range(1, n + 1):
                s = sample_reference(seg, seg.T * k / n)
                ts.append(t0 + seg.T * k / n)
                qs.append(s.q)
                qds.append(s.qd)
            t0 += seg.T
        return np.array(ts), np.array(qs), np.array(qds)


def step_path(start, targets, T_leg: float, T_hold: float) -> WaypointPath:
    """Rest-to-rest moves through ``targets`` with a hold after each move.

    Holds are legs from a point to itself, which stay exactly put.
    """
    pts = [np.asarray(start, dtype=float)]
    durs = []
    for tg in np.atleast_2d(targets):
        pts += [np.asarray(tg, dtype=float)] * 2
        durs += [T_leg, T_hold]
    return WaypointPath(np.array(pts), np.array(durs))


# Letter polylines on a unit box, x to the right and y up.
LETTERS: dict[str, np.ndarray] = {
    "S": np.array([
        [0.9, 0.85], [0.7, 1.0], [0.3, 1.0], [0.1, 0.85], [0.1, 0.65], [0.3, 0.5],
        [0.7, 0.5], [0.9, 0.35], [0.9, 0.15], [0.7, 0.0], [0.3, 0.0], [0.1, 0.15]]),
    "M": np.array([
        [0.0, 0.0], [0.0, 0.5], [0.0, 1.0], [0.25, 0.75], [0.5, 0.5],
        [0.75, 0.75], [1.0, 1.0], [1.0, 0.5], [1.0, 0.0]]),
    "C": np.array([
        [0.9, 0.85], [0.7, 1.0], [0.3, 1.0], [0.1, 0.8], [0.0, 0.5],
        [0.1, 0.2], [0.3, 0.0], [0.7, 0.0], [0.9, 0.15]]),
}


def polyline_length(points) -> float:
    pts = np.asarray(points, dtype=float)
    return float(np.sum(np.linalg.norm(np.diff(pts, axis=0), axis=1)))


def letter_waypoints(letter: str, scale: float, center=(0.0, 0.0)) -> np.ndarray:
    """Waypoints of ``letter`` in mm, sized ``scale`` and centred at ``center``."""
    try:
        unit = LETTERS[letter.upper()]
    except KeyError:
        raise ValueError(f"no polyline for letter {letter!r}") from None
    return (unit - 0.5) * scale + np.asarray(center, dtype=float)


@dataclass
class LetterReference:
    letter: str
    path: WaypointPath
    times: np.ndarray
    xy: np.ndarray
    joints: np.ndarray


def build_letter_path(letter: str, scale: float, T_leg: float,
                      inverse_model: Callable | None, dt: float = 0.02,
                      center=(0.0, 0.0), in_range: Callable | None = None) -> LetterReference:
    """Discretized operational-space path of a letter and its joint references.

    Args:
        inverse_model: Maps an ``(n, 2)`` array of x-y positions to joint
            angles. ``None`` leaves ``joints`` empty.
        in_range: Optional predicate telling whether a position lies inside
            the region the inverse model was trained on.

    Raises:
        ReferenceInfeasibleError: If a sample lies outside the trained region
            or the model returns non-finite joints.
    """
    path = WaypointPath(letter_waypoints(letter, scale, center), T_leg)
    times, xy, _ = path.discretize(dt)
    joints = np.zeros((len(times), 0))
    if inverse_model is not None:
        if in_range is not None:
            bad = [i for i, p in enumerate(xy) if not in_range(p)]
            if bad:
                raise ReferenceInfeasibleError(
                    f"letter {letter}: {len(bad)} samples outside the inverse model's range")
        joints = np.asarray(inverse_model(xy), dtype=float)
        if not np.all(np.isfinite(joints)):
            raise ReferenceInfeasibleError(f"letter {letter}: inverse model returned non-finite joints")
    return LetterReference(letter.upper(), path, times, xy, joints)


def save_reference_csv(path, times, q, qd) -> None:
    """Write ``t,q_1..q_c,qd_1..qd_c``."""
    q, qd = np.atleast_2d(q), np.atleast_2d(qd)
    c = q.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"q_{i + 1}" for i in range(c)] + [f"qd_{i + 1}" for i in range(c)])
        for t, a, b in zip(times, q, qd):
            w.writerow([repr(float(t))] + [repr(float(v)) for v in a] + [repr(float(v)) for v in b])


def load_reference_csv(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    c = (data.shape[1] - 1) // 2
    return data[:, 0], data[:, 1:1 + c], data[:, 1 + c:]
