"""Dense strictly convex QP solver.

Solves::

    minimize    0.5 x'Hx + g'x
    subject to  A x <= b

with the dual active-set method of Goldfarb and Idnani. The iteration starts
at the unconstrained minimizer and adds violated constraints one at a time,
so the objective never decreases from one iterate to the next and the final
point satisfies the KKT conditions to round-off. Warm starting verifies a
guessed active set directly and falls back to the cold iteration when the
guess is not optimal.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import DimensionError, InfeasibleError, NumericError

SOLVED = "solved"
MAX_ITER = "max_iter"
INFEASIBLE = "infeasible"


@dataclass
class QpResult:
    x: np.ndarray
    status: str
    iterations: int
    solve_time: float
    objective: float
    active: list[int] = field(default_factory=list)
    multipliers: np.ndarray = field(default_factory=lambda: np.zeros(0))
    objective_trace: list[float] = field(default_factory=list)
    warm_started: bool = False

    @property
    def converged(self) -> bool:
        return self.status == SOLVED


def objective(H: np.ndarray, g: np.ndarray, x: np.ndarray) -> float:
    return float(0.5 * x @ H @ x + g @ x)


def max_violation(A: np.ndarray, b: np.ndarray, x: np.ndarray) -> float:
    if A.shape[0] == 0:
        return 0.0
    return float(max(0.0, np.max(A @ x - b)))


def check_opposing_rows(A: np.ndarray, b: np.ndarray, tol: float = 1e-12) -> None:
    """Raise if two rows ``a'x <= b1`` and ``-a'x <= b2`` admit no ``x``.

    This catches crossed lower/upper bounds before iterating.
    """
    norms = np.linalg.norm(A, axis=1)
    seen: dict[bytes, list[int]] = {}
    for i in range(A.shape[0]):
        if norms[i] == 0.0:
            if b[i] < -tol:
                raise InfeasibleError(f"row {i} reads 0 <= {b[i]}")
            continue
        key = np.round(A[i] / norms[i], 12)
        seen.setdefault(key.tobytes(), []).append(i)
    for key_rows in seen.values():
        i = key_rows[0]
        neg = np.round(-A[i] / norms[i], 12).tobytes()
        for j in seen.get(neg, []):
            for ii in key_rows:
                # a'x <= b_ii/|a| and a'x >= -b_j/|a|
                upper = b[ii] / norms[ii]
                lower = -b[j] / norms[j]
                if lower > upper + tol * max(1.0, abs(upper), abs(lower)):
                    raise InfeasibleError(
                        f"rows {ii} and {j} bound the same direction with min > max")


def solve(H, g, A=None, b=None, *, tol: float = 1e-6, max_iter: int = 4000,
          warm_active: list[int] | None = None) -> QpResult:
    """Solve a strictly convex inequality-constrained QP.

    Args:
        H: Symmetric positive definite ``(n, n)`` Hessian.
        g: Linear term, length ``n``.
        A, b: Inequalities ``A x <= b``. Rows with ``b = +inf`` are ignored.
        tol: Constraint violation accepted at termination.
        max_iter: Cap on active-set changes.
        warm_active: Indices of constraints guessed to be active at the
            optimum, e.g. from the previous control step.

    Returns:
        QpResult. When the iteration cap is hit the last iterate is returned
        with status ``max_iter``; when the constraints are found inconsistent
        the status is ``infeasible``.

    Raises:
        InfeasibleError: If an opposing pair of rows has crossed bounds.
    """
    t0 = time.perf_counter()
    H = np.asarray(H, dtype=float)
    g = np.asarray(g, dtype=float).ravel()
    n = g.size
    if H.shape != (n, n):
        raise DimensionError(f"H has shape {H.shape}, expected {(n, n)}")
    if A is None:
        A = np.zeros((0, n))
        b = np.zeros(0)
    A = np.atleast_2d(np.asarray(A, dtype=float)).reshape(-1, n)
    b = np.asarray(b, dtype=float).ravel()
    if b.size != A.shape[0]:
        raise DimensionError("A and b disagree in row count")
    if not (np.all(np.isfinite(H)) and np.all(np.isfinite(g)) and np.all(np.isfinite(A))):
        raise NumericError("non-finite QP data")
    if np.any(np.isnan(b)):
        raise NumericError("NaN in constraint bounds")
    if np.any(b == -np.inf):
        raise InfeasibleError("a constraint bound is -inf")
    keep = np.flatnonzero(np.isfinite(b))
    if keep.size < A.shape[0]:
        res = solve(H, g, A[keep], b[keep], tol=tol, max_iter=max_iter,
                    warm_active=_remap(warm_active, keep))
        res.active = [int(keep[i]) for i in res.active]
        res.solve_time = time.perf_counter() - t0
        return res
    check_opposing_rows(A, b)

    try:
        chol = sla.cho_factor(H, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NumericError("Hessian is not positive definite") from exc

    if warm_active is not None:
        res = _try_active_set(H, g, A, b, chol, list(warm_active), tol)
        if res is not None:
            res.solve_time = time.perf_counter() - t0
            return res

    res = _goldfarb_idnani(H, g, A, b, chol, tol, max_iter)
    res.solve_time = time.perf_counter() - t0
    return res


def _remap(active, keep):
    if active is None:
        return None
    pos = {int(k): i for i, k in enumerate(keep)}
    return [pos[a] for a in active if a in pos]


def _try_active_set(H, g, A, b, chol, active, tol):
    """Solve with ``active`` held as equalities; return it only if KKT holds."""
    n = g.size
    active = sorted(set(active))
    N = A[active].T  # n x q
    q = N.shape[1]
    Hinv_g = sla.cho_solve(chol, g, check_finite=False)
    Hinv_N = sla.cho_solve(chol, N, check_finite=False)
    if q:
        M = N.T @ Hinv_N
        if np.linalg.cond(M) > 1e12:
            return None
        lam = -np.linalg.solve(M, b[active] + N.T @ Hinv_g)
    else:
        lam = np.zeros(0)
    x = -Hinv_g - Hinv_N @ lam
    scale = max(1.0, float(np.max(np.abs(lam), initial=0.0)))
    if np.any(lam < -1e-9 * scale) or max_violation(A, b, x) > 0.01 * tol:
        return None
    f = objective(H, g, x)
    assert x.size == n
    return QpResult(x=x, status=SOLVED, iterations=0, solve_time=0.0, objective=f,
                    active=list(active), multipliers=np.maximum(lam, 0.0),
                    objective_trace=[f], warm_started=True)


def _goldfarb_idnani(H, g, A, b, chol, tol, max_iter):
    # Constraint i is n_i'x >= c_i with n_i = -A_i, c_i = -b_i; slack s_i = b_i - A_i x.
    x = -sla.cho_solve(chol, g, check_finite=False)
    f = objective(H, g, x)
    trace = [f]
    active: list[int] = []
    lam = np.zeros(0)
    Hinv_N = np.zeros((g.size, 0))
    feas_tol = 0.01 * tol
    iters = 0
    row_scale = np.maximum(np.linalg.norm(A, axis=1), 1e-300)

    while True:
        slack = b - A @ x
        if active:
            slack[active] = np.inf
        # most violated constraint in normalized terms
        scaled = slack / row_scale
        p = int(np.argmin(scaled)) if slack.size else -1
        if p < 0 or slack[p] >= -feas_tol:
            return QpResult(x=x, status=SOLVED, iterations=iters, solve_time=0.0,
                            objective=f, active=active, multipliers=lam,
                            objective_trace=trace)
        n_p = -A[p]
        lam_p = 0.0
        while True:
            if iters >= max_iter:
                return QpResult(x=x, status=MAX_ITER, iterations=iters, solve_time=0.0,
                                objective=f, active=active, multipliers=lam,
                                objective_trace=trace)
            iters += 1
            Hinv_np = sla.cho_solve(chol, n_p, check_finite=False)
            if active:
                N = -A[active].T
                M = N.T @ Hinv_N
                r = np.linalg.solve(M, N.T @ Hinv_np)
                z = Hinv_np - Hinv_N @ r
            else:
                r = np.zeros(0)
                z = Hinv_np
            # partial (dual) step length
            t1, k = np.inf, -1
            pos = r > 1e-12 * max(1.0, float(np.max(np.abs(r), initial=0.0)))
            if np.any(pos):
                ratios = np.full(r.size, np.inf)
                ratios[pos] = lam[pos] / r[pos]
                k = int(np.argmin(ratios))
                t1 = float(ratios[k])
            z_np = float(z @ n_p)
            z_zero = np.linalg.norm(z) <= 1e-12 * max(1.0, np.linalg.norm(Hinv_np)) or z_np <= 0
            s_p = float(b[p] - A[p] @ x)
            if z_zero:
                if not np.isfinite(t1):
                    return QpResult(x=x, status=INFEASIBLE, iterations=iters,
                                    solve_time=0.0, objective=f, active=active,
                                    multipliers=lam, objective_trace=trace)
                lam = lam - t1 * r
                lam_p += t1
                active, lam, Hinv_N = _drop(active, lam, Hinv_N, k)
                continue
            t2 = -s_p / z_np
            t = min(t1, t2)
            x = x + t * z
            f = f + t * z_np * (0.5 * t + lam_p)
            trace.append(f)
            lam = lam - t * r
            lam_p += t
            if t2 <= t1:
                active.append(p)
                lam = np.append(lam, lam_p)
                Hinv_N = np.column_stack([Hinv_N, Hinv_np]) if Hinv_N.size else Hinv_np[:, None]
                break
            active, lam, Hinv_N = _drop(active, lam, Hinv_N, k)


def _drop(active, lam, Hinv_N, k):
    active = active[:k] + active[k + 1:]
    lam = np.delete(lam, k)
    Hinv_N = np.delete(Hinv_N, k, axis=1)
    return active, lam, Hinv_N
