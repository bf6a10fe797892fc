"""Receding-horizon tracking planner built on the condensed predictor.

The predicted outputs are affine in the stacked future inputs,
``y = y_free + G_u u``, so the planning problem reduces to an
inequality-constrained QP over ``u`` alone. The cost is::

    ||y_l - y_ter||_S^2
      + sum_k ||u_k - u_tar_k||_R^2 + ||y_k - y_tar_k||_Q^2
      + sum_k ||u_{k+1} - u_k||_F^2 + ||y_{k+1} - y_k||_P^2

where the difference sums run over consecutive planned samples and over the
step from the last applied input / last measured output to the first planned
one.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import qp
from .errors import DimensionError, InfeasibleError, NumericError
from .predictor import GMatrix, InitWindow

log = logging.getLogger(__name__)


def _weights(w, dim: int, name: str) -> np.ndarray:
    arr = np.broadcast_to(np.asarray(w, dtype=float), (dim,)).copy()
    if np.any(~np.isfinite(arr)) or np.any(arr <= 0):
        raise ValueError(f"weight {name} must be positive and finite")
    return arr


def _bounds(bnd, dim: int, name: str) -> np.ndarray:
    if bnd is None:
        arr = np.tile([-np.inf, np.inf], (dim, 1))
    else:
        arr = np.broadcast_to(np.asarray(bnd, dtype=float), (dim, 2)).copy()
    if np.any(np.isnan(arr)):
        raise NumericError(f"{name} contains NaN")
    if np.any(arr[:, 0] > arr[:, 1]):
        raise InfeasibleError(f"{name} has min > max")
    return arr


@dataclass
class PlannerConfig:
    """Horizons, weights, bounds and solver settings.

    Weights are diagonal and may be given as scalars. Bounds are per-channel
    ``[min, max]`` pairs (or a single pair broadcast to every channel);
    ``None`` means unbounded.
    """

    m: int
    c: int
    l: int = 6
    n_ini: int = 2
    Q: object = 10000.0
    R: object = 70.0
    S: object = 0.01
    F: object = 0.01
    P: object = 0.1
    u_bounds: object = None
    y_bounds: object = None
    dy_bounds: object = None
    solver_tol: float = 1e-6
    max_iter: int = 4000
    dt: float = 0.02

    def __post_init__(self):
        if self.l < 1 or self.n_ini < 1:
            raise ValueError("l and n_ini must be >= 1")
        if not self.solver_tol > 0:
            raise ValueError("solver_tol must be positive")
        self.Q = _weights(self.Q, self.c, "Q")
        self.S = _weights(self.S, self.c, "S")
        self.P = _weights(self.P, self.c, "P")
        self.R = _weights(self.R, self.m, "R")
        self.F = _weights(self.F, self.m, "F")
        self.u_bounds = _bounds(self.u_bounds, self.m, "u_bounds")
        self.y_bounds = _bounds(self.y_bounds, self.c, "y_bounds")
        self.dy_bounds = _bounds(self.dy_bounds, self.c, "dy_bounds")


@dataclass(frozen=True)
class ReferenceSet:
    u_tar: np.ndarray
    y_tar: np.ndarray
    y_ter: np.ndarray

    def __post_init__(self):
        u = np.atleast_2d(np.asarray(self.u_tar, dtype=float))
        y = np.atleast_2d(np.asarray(self.y_tar, dtype=float))
        yt = np.asarray(self.y_ter, dtype=float).ravel()
        if u.shape[0] != y.shape[0]:
            raise DimensionError("u_tar and y_tar must have l rows each")
        if not all(np.all(np.isfinite(a)) for a in (u, y, yt)):
            raise NumericError("references must be finite")
        object.__setattr__(self, "u_tar", u)
        object.__setattr__(self, "y_tar", y)
        object.__setattr__(self, "y_ter", yt)

    @classmethod
    def constant(cls, l: int, m: int, y_ter) -> "ReferenceSet":
        y_ter = np.asarray(y_ter, dtype=float).ravel()
        return cls(np.zeros((l, m)), np.tile(y_ter, (l, 1)), y_ter)


@dataclass
class QpProblem:
    """Condensed QP ``min 0.5 u'Hu + g'u + const  s.t.  A u <= b``.

    Attributes:
        y_offset, y_map: Predicted outputs are ``y_offset + y_map @ u``.
        row_tags: ``(kind, k, channel, side)`` for each row of ``A``, used to
            shift active sets between control steps.
    """

    hessian: np.ndarray
    gradient: np.ndarray
    constant: float
    A: np.ndarray
    b: np.ndarray
    y_offset: np.ndarray
    y_map: np.ndarray
    m: int
    c: int
    l: int
    row_tags: list = field(default_factory=list)

    def cost(self, u) -> float:
        u = np.asarray(u, dtype=float).ravel()
        return float(0.5 * u @ self.hessian @ u + self.gradient @ u + self.constant)

    def predicted_outputs(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float).ravel()
        return (self.y_offset + self.y_map @ u).reshape(self.l, self.c)


def _diff_operator(l: int, d: int) -> np.ndarray:
    """Stacked first differences with the first block differenced against zero."""
    D = np.eye(l * d)
    if l > 1:
        D[d:, :-d] -= np.eye((l - 1) * d)
    return D


def assemble_qp(g: GMatrix, cfg: PlannerConfig, win: InitWindow, refs: ReferenceSet,
                last_u=None) -> QpProblem:
    """Build the condensed tracking QP for one control step.

    Args:
        g: Transition map of the active dataset.
        cfg: Planner configuration.
        win: Recent inputs and outputs; its last output row is the current
            measurement.
        refs: Input, output and terminal targets over the horizon.
        last_u: Input applied at the previous step (defaults to the last row
            of ``win.u_ini``).
    """
    m, c, l = cfg.m, cfg.c, cfg.l
    if (g.dims.m, g.dims.c, g.l, g.n_ini) != (m, c, l, cfg.n_ini):
        raise DimensionError("G matrix dimensions disagree with planner config")
    if refs.u_tar.shape != (l, m) or refs.y_tar.shape != (l, c) or refs.y_ter.size != c:
        raise DimensionError("reference shapes disagree with planner config")
    if last_u is None:
        last_u = win.u_ini[-1]
    last_u = np.asarray(last_u, dtype=float).ravel()
    last_y = win.y_ini[-1]

    Gu = np.asarray(g.G_u)
    y_free = g.free_response(win)
    Du = _diff_operator(l, m)
    Dy = _diff_operator(l, c)
    d0_u = np.zeros(m * l)
    d0_u[:m] = last_u
    d0_y = np.zeros(c * l)
    d0_y[:c] = last_y
    Rb = np.tile(cfg.R, l)
    Qb = np.tile(cfg.Q, l)
    Fb = np.tile(cfg.F, l)
    Pb = np.tile(cfg.P, l)
    last = slice(c * (l - 1), c * l)

    # (matrix, diagonal weight, target) triples for sum of ||M u - r||_W^2
    DyGu = Dy @ Gu
    terms = [
        (np.eye(m * l), Rb, refs.u_tar.ravel()),
        (Gu, Qb, refs.y_tar.ravel() - y_free),
        (Gu[last], cfg.S, refs.y_ter - y_free[last]),
        (Du, Fb, d0_u),
        (DyGu, Pb, d0_y - Dy @ y_free),
    ]
    H = np.zeros((m * l, m * l))
    grad = np.zeros(m * l)
    const = 0.0
    for M, w, r in terms:
        WM = M * w[:, None]
        H += 2.0 * M.T @ WM
        grad -= 2.0 * WM.T @ r
        const += float(r @ (w * r))
    H = 0.5 * (H + H.T)

    rows, rhs, tags = [], [], []

    def add(mat, offset, lo, hi, kind, d):
        # lo <= mat u + offset <= hi, one row per finite bound
        for i in range(mat.shape[0]):
            k, ch = divmod(i, d)
            if np.isfinite(hi[ch]):
                rows.append(mat[i])
                rhs.append(hi[ch] - offset[i])
                tags.append((kind, k, ch, "max"))
            if np.isfinite(lo[ch]):
                rows.append(-mat[i])
                rhs.append(offset[i] - lo[ch])
                tags.append((kind, k, ch, "min"))

    add(np.eye(m * l), np.zeros(m * l), cfg.u_bounds[:, 0], cfg.u_bounds[:, 1], "u", m)
    add(Gu, y_free, cfg.y_bounds[:, 0], cfg.y_bounds[:, 1], "y", c)
    add(DyGu, Dy @ y_free - d0_y, cfg.dy_bounds[:, 0], cfg.dy_bounds[:, 1], "dy", c)
    A = np.array(rows).reshape(-1, m * l)
    b = np.array(rhs, dtype=float)
    return QpProblem(hessian=H, gradient=grad, constant=const, A=A, b=b,
                     y_offset=y_free, y_map=Gu, m=m, c=c, l=l, row_tags=tags)


@dataclass
class QpStats:
    iterations: int
    solve_time: float
    status: str
    converged: bool
    objective: float
    max_violation: float
    warm_started: bool
    active_tags: list = field(default_factory=list)


def solve_qp(p: QpProblem, cfg: PlannerConfig, warm_tags=None):
    """Solve a planner QP.

    Args:
        warm_tags: Row tags guessed active, usually the shifted active set of
            the previous step.

    Returns:
        ``(u_opt, y_pred, stats)`` with ``u_opt`` of shape ``(l, m)`` and
        ``y_pred`` of shape ``(l, c)``.
    """
    warm = None
    if warm_tags is not None:
        index = {t: i for i, t in enumerate(p.row_tags)}
        warm = [index[t] for t in warm_tags if t in index]
    res = qp.solve(p.hessian, p.gradient, p.A, p.b, tol=cfg.solver_tol,
                   max_iter=cfg.max_iter, warm_active=warm)
    u = res.x
    stats = QpStats(
        iterations=res.iterations, solve_time=res.solve_time, status=res.status,
        converged=res.converged, objective=res.objective + p.constant,
        max_violation=qp.max_violation(p.A, p.b, u), warm_started=res.warm_started,
        active_tags=[p.row_tags[i] for i in res.active])
    return u.reshape(p.l, p.m), p.predicted_outputs(u), stats


def shift_tags(tags, l: int) -> list:
    """Move active-row tags one step earlier, repeating the last block."""
    out = []
    for kind, k, ch, side in tags:
        if k >= 1:
            out.append((kind, k - 1, ch, side))
        if k == l - 1:
            out.append((kind, k, ch, side))
    return sorted(set(out), key=lambda t: (t[0], t[1], t[2], t[3]))


@dataclass
class StepRecord:
    step: int
    solve_ms: float
    iters: int
    converged: bool
    u: np.ndarray
    y: np.ndarray
    err: float


@dataclass
class ControllerState:
    """Mutable state of one receding-horizon loop."""

    u_buf: np.ndarray
    y_buf: np.ndarray
    last_applied_u: np.ndarray
    warm_start: np.ndarray | None = None
    warm_tags: list | None = None
    step_count: int = 0
    last_stats: QpStats | None = None
    records: list = field(default_factory=list)

    @property
    def window(self) -> InitWindow:
        return InitWindow(self.u_buf.copy(), self.y_buf.copy())

    @classmethod
    def from_window(cls, win: InitWindow, last_u=None) -> "ControllerState":
        last_u = win.u_ini[-1] if last_u is None else np.asarray(last_u, dtype=float)
        return cls(u_buf=win.u_ini.copy(), y_buf=win.y_ini.copy(),
                   last_applied_u=np.array(last_u, dtype=float))

    @classmethod
    def at_rest(cls, plant, n_ini: int, m: int, rng=None) -> "ControllerState":
        """Hold ``plant`` at rest for ``n_ini`` steps to seed the buffers."""
        rng = np.random.default_rng(0) if rng is None else rng
        u0 = np.zeros(m)
        ys = [np.asarray(plant.step(u0, rng), dtype=float).ravel() for _ in range(n_ini)]
        return cls(u_buf=np.zeros((n_ini, m)), y_buf=np.vstack(ys), last_applied_u=u0)


def control_step(state: ControllerState, y_meas, g: GMatrix, cfg: PlannerConfig,
                 refs: ReferenceSet) -> np.ndarray:
    """One receding-horizon iteration.

    The measurement is pushed into the output buffer, the QP is solved
    warm-started from the previous step, and the first planned input is
    returned and pushed into the input buffer. Non-converged solves return
    the solver's last iterate (clipped to the input box) and are flagged in
    ``state.last_stats``.
    """
    y_meas = np.asarray(y_meas, dtype=float).ravel()
    if y_meas.size != cfg.c:
        raise DimensionError(f"measurement has {y_meas.size} entries, expected {cfg.c}")
    state.y_buf = np.vstack([state.y_buf[1:], y_meas])
    p = assemble_qp(g, cfg, state.window, refs, last_u=state.last_applied_u)
    u_opt, _, stats = solve_qp(p, cfg, warm_tags=state.warm_tags)
    if not stats.converged:
        log.warning("step %d: QP %s after %d iterations",
                    state.step_count, stats.status, stats.iterations)
    u1 = np.clip(u_opt[0], cfg.u_bounds[:, 0], cfg.u_bounds[:, 1])
    state.u_buf = np.vstack([state.u_buf[1:], u1])
    state.last_applied_u = u1.copy()
    state.warm_start = np.vstack([u_opt[1:], u_opt[-1:]])
    state.warm_tags = shift_tags(stats.active_tags, cfg.l)
    state.last_stats = stats
    state.records.append(StepRecord(
        step=state.step_count, solve_ms=1e3 * stats.solve_time, iters=stats.iterations,
        converged=stats.converged, u=u1.copy(), y=y_meas.copy(),
        err=float(np.linalg.norm(y_meas - refs.y_ter))))
    state.step_count += 1
    return u1


def tracking_error(outputs, y_ter) -> float:
    """``(1/c) * sum_t ||y_t - y_ter||^2`` over all rows of ``outputs``."""
    y = np.atleast_2d(np.asarray(outputs, dtype=float))
    y_ter = np.asarray(y_ter, dtype=float).ravel()
    if y.shape[1] != y_ter.size:
        y = y.reshape(-1, y_ter.size)
    return float(np.sum((y - y_ter) ** 2) / y_ter.size)


def references_at(k: int, l: int, y_ref: np.ndarray, u_ref: np.ndarray,
                  y_ter) -> ReferenceSet:
    """Horizon slice of reference arrays for planning at step ``k``.

    Row ``k + 1 + i`` of the arrays is the target for the ``i``-th planned
    sample; indices past the end repeat the final row.
    """
    idx = np.arange(k + 1, k + 1 + l)
    return ReferenceSet(u_ref[np.minimum(idx, u_ref.shape[0] - 1)],
                        y_ref[np.minimum(idx, y_ref.shape[0] - 1)], y_ter)


@dataclass
class ClosedLoopResult:
    outputs: np.ndarray
    inputs: np.ndarray
    records: list
    nonconverged: int

    @property
    def solve_ms(self) -> np.ndarray:
        return np.array([r.solve_ms for r in self.records])


def run_closed_loop(plant, g: GMatrix, cfg: PlannerConfig,
                    refs_at: Callable[[int], ReferenceSet], n_steps: int,
                    rng: np.random.Generator, state: ControllerState | None = None,
                    on_step: Callable | None = None) -> ClosedLoopResult:
    """Run ``n_steps`` of planning and plant stepping.

    Row ``t`` of the returned outputs is the measurement the planner saw at
    step ``t``; row ``t`` of the inputs is the command it issued.
    """
    if state is None:
        state = ControllerState.at_rest(plant, cfg.n_ini, cfg.m, rng)
    y = state.y_buf[-1].copy()
    ys, us = [], []
    start = len(state.records)
    for k in range(n_steps):
        u = control_step(state, y, g, cfg, refs_at(k))
        ys.append(y)
        us.append(u)
        if on_step is not None:
            on_step(k, state)
        y = np.asarray(plant.step(u, rng), dtype=float).ravel()
    recs = state.records[start:]
    return ClosedLoopResult(np.array(ys), np.array(us), recs,
                            sum(not r.converged for r in recs))


def write_step_log(records, path, m: int, c: int) -> None:
    """CSV with columns ``step,solve_ms,iters,converged,u_*,y_*,err``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "solve_ms", "iters", "converged"]
                   + [f"u_{i + 1}" for i in range(m)]
                   + [f"y_{i + 1}" for i in range(c)] + ["err"])
        for r in records:
            w.writerow([r.step, f"{r.solve_ms:.6f}", r.iters, int(r.converged)]
                       + [repr(float(v)) for v in r.u] + [repr(float(v)) for v in r.y]
                       + [repr(r.err)])
