"""Dataset selection by minimum-norm Hankel coefficients.

Each candidate dataset ``j`` explains a freshly measured window
``(u_s, y_s)`` through a coefficient vector ``K`` over its Hankel columns.
Inputs are commanded and must be matched exactly; outputs are measured, so
their residual is only penalized::

    minimize ||K||^2 + lam * ||Hy K - y_s||^2   subject to   Hu K = u_s

The dataset needing the smallest ``||K||`` is the one whose recorded behaviour
is closest to the current operating condition.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as sla

from .errors import (DegenerateDataError, DimensionError, NumericError,
                     SelectionFailedError)
from .predictor import GMatrix, compute_g_matrix
from .trajectory import (HankelPartition, SystemDims, Trajectory, build_hankel,
                         load_trajectory_csv, min_data_length, partition_hankel)


@dataclass(frozen=True)
class SampleWindow:
    u_s: np.ndarray
    y_s: np.ndarray

    def __post_init__(self):
        u = np.atleast_2d(np.asarray(self.u_s, dtype=float))
        y = np.atleast_2d(np.asarray(self.y_s, dtype=float))
        if u.shape[0] != y.shape[0]:
            raise DimensionError("u_s and y_s must have the same number of rows")
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(y))):
            raise NumericError("sample window contains non-finite entries")
        object.__setattr__(self, "u_s", u)
        object.__setattr__(self, "y_s", y)

    @property
    def length(self) -> int:
        return self.u_s.shape[0]

    def digest(self) -> str:
        return hashlib.sha1(self.u_s.tobytes() + self.y_s.tobytes()).hexdigest()


@dataclass
class BankEntry:
    """One recorded operating condition.

    Attributes:
        traj: Length-``N`` recording.
        Hu, Hy: Depth-``L`` input and output Hankel matrices.
        part: Past/future split used for the transition map.
        g: Cached transition map.
        inverse_model: Optional reference model paired with this condition.
    """

    traj: Trajectory
    Hu: np.ndarray
    Hy: np.ndarray
    part: HankelPartition
    g: GMatrix
    inverse_model: object = None
    _factor_cache: dict = field(default_factory=dict, repr=False)

    @property
    def label(self) -> str:
        return self.traj.label

    @classmethod
    def from_trajectory(cls, traj: Trajectory, n_ini: int, l: int, h: int = 1,
                        inverse_model=None) -> "BankEntry":
        L = n_ini + l
        part = partition_hankel(traj, n_ini, l)
        return cls(traj=traj, Hu=build_hankel(traj.inputs, L).data,
                   Hy=build_hankel(traj.outputs, L).data, part=part,
                   g=compute_g_matrix(part, h), inverse_model=inverse_model)

    def _factors(self, lam: float):
        # P = I + lam Hy'Hy is inverted through the small Gram matrix of Hy.
        if lam not in self._factor_cache:
            Hu, Hy = self.Hu, self.Hy
            gram = np.eye(Hy.shape[0]) + lam * (Hy @ Hy.T)
            cy = sla.cho_factor(gram, lower=True)

            def p_inv(x):
                return x - lam * Hy.T @ sla.cho_solve(cy, Hy @ x)

            S = Hu @ p_inv(Hu.T)
            try:
                cs = sla.cho_factor(0.5 * (S + S.T), lower=True)
            except np.linalg.LinAlgError as exc:
                raise DegenerateDataError(
                    f"input Hankel of entry {self.label!r} is rank deficient") from exc
            if np.min(np.diag(cs[0])) ** 2 < 1e-12 * np.max(np.diag(S)):
                raise DegenerateDataError(
                    f"input Hankel of entry {self.label!r} is rank deficient")
            self._factor_cache[lam] = (p_inv, cs)
        return self._factor_cache[lam]

    def coefficients(self, win: SampleWindow, lam: float) -> np.ndarray:
        """The penalized minimum-norm coefficient vector ``K``."""
        L = self.Hu.shape[0] // self.traj.m
        if win.u_s.shape != (L, self.traj.m) or win.y_s.shape != (L, self.traj.c):
            raise DimensionError(
                f"window shapes {win.u_s.shape}/{win.y_s.shape} do not match depth {L}")
        p_inv, cs = self._factors(lam)
        u_s, y_s = win.u_s.ravel(), win.y_s.ravel()
        base = p_inv(lam * self.Hy.T @ y_s)
        nu = sla.cho_solve(cs, self.Hu @ base - u_s)
        return base - p_inv(self.Hu.T @ nu)


def score_dataset(entry: BankEntry, win: SampleWindow, sigma_weight: float = 1.0) -> float:
    """``||K||`` for ``entry`` explaining ``win``."""
    if not sigma_weight > 0:
        raise ValueError("sigma_weight must be positive")
    return float(np.linalg.norm(entry.coefficients(win, sigma_weight)))


@dataclass
class DatasetBank:
    entries: list[BankEntry]
    n_ini: int
    l: int

    def __post_init__(self):
        if not self.entries:
            raise ValueError("bank needs at least one entry")
        first = self.entries[0].traj
        for e in self.entries[1:]:
            t = e.traj
            if (t.m, t.c, t.T) != (first.m, first.c, first.T) or t.dt != first.dt:
                raise DimensionError("bank entries must share dims, dt and N")
        self._score_cache: dict = {}

    @property
    def window_len(self) -> int:
        return self.n_ini + self.l

    @property
    def labels(self) -> list[str]:
        return [e.label for e in self.entries]

    def __len__(self) -> int:
        return len(self.entries)

    def __getitem__(self, i: int) -> BankEntry:
        return self.entries[i]

    @classmethod
    def from_trajectories(cls, trajs, n_ini: int, l: int, h: int = 1,
                          inverse_models=None, check_length: bool = True) -> "DatasetBank":
        trajs = list(trajs)
        inverse_models = inverse_models or [None] * len(trajs)
        if check_length:
            need = min_data_length(SystemDims(trajs[0].m, trajs[0].c, h), n_ini, l)
            if trajs[0].T < need:
                raise DimensionError(
                    f"bank datasets have N={trajs[0].T}, need at least {need}")
        return cls([BankEntry.from_trajectory(t, n_ini, l, h, inv)
                    for t, inv in zip(trajs, inverse_models)], n_ini, l)

    def clear_cache(self) -> None:
        self._score_cache.clear()


def select_dataset(bank: DatasetBank, win: SampleWindow, sigma_weight: float = 1.0):
    """Pick the entry with the smallest coefficient norm.

    Entries that fail to score get ``+inf``. Ties go to the lowest index.

    Returns:
        ``(best_index, scores)``.

    Raises:
        SelectionFailedError: If no entry could be scored.
    """
    key = (win.digest(), float(sigma_weight))
    scores = bank._score_cache.get(key)
    if scores is None:
        scores = np.full(len(bank), np.inf)
        for j, entry in enumerate(bank.entries):
            try:
                scores[j] = score_dataset(entry, win, sigma_weight)
            except (DegenerateDataError, np.linalg.LinAlgError):
                continue
        bank._score_cache[key] = scores
    if not np.any(np.isfinite(scores)):
        raise SelectionFailedError("no bank entry could be scored")
    return int(np.argmin(scores)), scores.copy()


def pooled_g_matrix(bank: DatasetBank, h: int = 1) -> GMatrix:
    """Transition map fitted to all bank entries at once.

    The per-entry Hankel partitions are placed side by side, so no column
    straddles the boundary between two recordings.
    """
    parts = [e.part for e in bank.entries]
    p0 = parts[0]
    pooled = HankelPartition(
        Up=np.hstack([p.Up for p in parts]), Yp=np.hstack([p.Yp for p in parts]),
        Uf=np.hstack([p.Uf for p in parts]), Yf=np.hstack([p.Yf for p in parts]),
        n_ini=p0.n_ini, l=p0.l, m=p0.m, c=p0.c)
    return compute_g_matrix(pooled, h)


def read_manifest(path) -> list[tuple[str, Path, Path | None]]:
    """Parse ``label,trajectory_csv[,inverse_model]`` lines (relative to the manifest)."""
    path = Path(path)
    out = []
    with open(path) as fh:
        for row in csv.reader(fh):
            if not row or row[0].startswith("#"):
                continue
            label, traj = row[0].strip(), path.parent / row[1].strip()
            inv = path.parent / row[2].strip() if len(row) > 2 and row[2].strip() else None
            out.append((label, traj, inv))
    return out


def write_manifest(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for label, traj, inv in rows:
            w.writerow([label, str(traj)] + ([str(inv)] if inv else []))


def load_bank(manifest, n_ini: int, l: int, h: int = 1, model_loader=None) -> DatasetBank:
    """Build a bank from a manifest; inverse models are loaded with ``model_loader``."""
    trajs, models = [], []
    for label, traj_path, inv_path in read_manifest(manifest):
        traj = load_trajectory_csv(traj_path)
        if traj.label != label:
            traj = Trajectory(traj.inputs, traj.outputs, traj.dt, label)
        trajs.append(traj)
        models.append(model_loader(inv_path) if (inv_path and model_loader) else None)
    return DatasetBank.from_trajectories(trajs, n_ini, l, h, models)
