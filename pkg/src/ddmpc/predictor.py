"""Condensed data-driven predictor.

The past/future Hankel stack ``S = [Up; Yp; Uf]`` is pseudo-inverted once and
folded with ``Yf`` into a single matrix ``G = Yf S^+``. Multiplying ``G`` by
the stacked vector ``[u_ini; y_ini; u]`` yields the ``l``-step output
prediction, so the coefficient vector over Hankel columns never appears at
run time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDataError, DimensionError, NumericError
from .trajectory import RANK_RTOL, HankelPartition, SystemDims


def pinv_svd(mat: np.ndarray, rtol: float = RANK_RTOL) -> np.ndarray:
    """Moore-Penrose pseudo-inverse with a relative singular-value cutoff."""
    mat = np.asarray(mat, dtype=float)
    U, s, Vt = np.linalg.svd(mat, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros(mat.T.shape)
    keep = s > rtol * s[0]
    return (Vt[keep].T / s[keep]) @ U[:, keep].T


def solve_min_norm_k(stack, rhs) -> np.ndarray:
    """Minimum-norm least-squares coefficient vector ``K = stack^+ rhs``."""
    S = np.atleast_2d(np.asarray(stack, dtype=float))
    b = np.asarray(rhs, dtype=float).ravel()
    if S.shape[1] < 1:
        raise DimensionError("stack needs at least one column")
    if b.size != S.shape[0]:
        raise DimensionError(f"rhs has length {b.size}, stack has {S.shape[0]} rows")
    if not (np.all(np.isfinite(S)) and np.all(np.isfinite(b))):
        raise NumericError("non-finite entries in stack or rhs")
    return pinv_svd(S) @ b


@dataclass(frozen=True)
class InitWindow:
    """Most recent ``n_ini`` applied inputs and measured outputs, oldest first."""

    u_ini: np.ndarray
    y_ini: np.ndarray

    def __post_init__(self):
        u = np.atleast_2d(np.asarray(self.u_ini, dtype=float))
        y = np.atleast_2d(np.asarray(self.y_ini, dtype=float))
        if u.shape[0] != y.shape[0]:
            raise DimensionError("u_ini and y_ini must have the same number of rows")
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(y))):
            raise NumericError("init window contains non-finite entries")
        object.__setattr__(self, "u_ini", u)
        object.__setattr__(self, "y_ini", y)

    @property
    def n_ini(self) -> int:
        return self.u_ini.shape[0]

    @classmethod
    def zeros(cls, n_ini: int, m: int, c: int) -> "InitWindow":
        return cls(np.zeros((n_ini, m)), np.zeros((n_ini, c)))


@dataclass(frozen=True)
class GMatrix:
    """The ``l``-step transition map and its column partition.

    Attributes:
        map: ``(c*l, (m+c)*n_ini + m*l)`` matrix.
        dims: Input/output dimensions (``h`` is informational only).
        n_ini: Estimation horizon.
        l: Prediction horizon.
    """

    map: np.ndarray
    dims: SystemDims
    n_ini: int
    l: int

    def __post_init__(self):
        m, c = self.dims.m, self.dims.c
        shape = (c * self.l, (m + c) * self.n_ini + m * self.l)
        if self.map.shape != shape:
            raise DimensionError(f"G has shape {self.map.shape}, expected {shape}")
        if not np.all(np.isfinite(self.map)):
            raise NumericError("G contains non-finite entries")
        arr = np.array(self.map, dtype=float)
        arr.flags.writeable = False
        object.__setattr__(self, "map", arr)

    @property
    def partitions(self) -> dict[str, slice]:
        m, c, n = self.dims.m, self.dims.c, self.n_ini
        return {
            "u_ini": slice(0, m * n),
            "y_ini": slice(m * n, (m + c) * n),
            "u": slice((m + c) * n, (m + c) * n + m * self.l),
        }

    @property
    def G_uini(self) -> np.ndarray:
        return self.map[:, self.partitions["u_ini"]]

    @property
    def G_yini(self) -> np.ndarray:
        return self.map[:, self.partitions["y_ini"]]

    @property
    def G_u(self) -> np.ndarray:
        return self.map[:, self.partitions["u"]]

    def free_response(self, win: InitWindow) -> np.ndarray:
        """Stacked prediction for zero future input, shape ``(c*l,)``."""
        self._check_window(win)
        return self.G_uini @ win.u_ini.ravel() + self.G_yini @ win.y_ini.ravel()

    def _check_window(self, win: InitWindow) -> None:
        m, c = self.dims.m, self.dims.c
        if win.u_ini.shape != (self.n_ini, m) or win.y_ini.shape != (self.n_ini, c):
            raise DimensionError(
                f"window shapes {win.u_ini.shape}/{win.y_ini.shape} do not match "
                f"({self.n_ini}, {m})/({self.n_ini}, {c})")


def compute_g_matrix(part: HankelPartition, h: int = 1) -> GMatrix:
    """``G = Yf [Up; Yp; Uf]^+`` with the SVD pseudo-inverse.

    Raises:
        DegenerateDataError: If the stacked Hankel matrix is identically zero.
    """
    stack = np.vstack([part.Up, part.Yp, part.Uf])
    if part.width < 1:
        raise DimensionError("partition has no columns")
    if not np.any(stack):
        raise DegenerateDataError("stacked Hankel matrix is all zero")
    G = part.Yf @ pinv_svd(stack)
    return GMatrix(G, SystemDims(part.m, part.c, h), part.n_ini, part.l)


def predict(g: GMatrix, win: InitWindow, u) -> np.ndarray:
    """Predicted outputs for future inputs ``u`` (``(l, m)``), shape ``(l, c)``."""
    u = np.atleast_2d(np.asarray(u, dtype=float))
    m, c = g.dims.m, g.dims.c
    if u.shape != (g.l, m):
        raise DimensionError(f"u has shape {u.shape}, expected {(g.l, m)}")
    g._check_window(win)
    vec = np.concatenate([win.u_ini.ravel(), win.y_ini.ravel(), u.ravel()])
    return (g.map @ vec).reshape(g.l, c)


def save_g_matrix(g: GMatrix, path) -> None:
    """Write ``g`` as a whitespace-separated row-major text matrix."""
    header = (f"gmatrix m={g.dims.m} c={g.dims.c} h={g.dims.h} "
              f"n_ini={g.n_ini} l={g.l} rows={g.map.shape[0]} cols={g.map.shape[1]}")
    np.savetxt(path, g.map, fmt="%.17g", header=header)


def load_g_matrix(path) -> GMatrix:
    with open(path) as fh:
        first = fh.readline().lstrip("#").split()
    if not first or first[0] != "gmatrix":
        raise ValueError(f"{path}: not a G-matrix file")
    meta = {k: int(v) for k, v in (tok.split("=") for tok in first[1:])}
    data = np.loadtxt(path, ndmin=2).reshape(meta["rows"], meta["cols"])
    return GMatrix(data, SystemDims(meta["m"], meta["c"], meta["h"]),
                   meta["n_ini"], meta["l"])
