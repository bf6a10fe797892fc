"""The experiments behind the CLI subcommands.

Each ``run_*`` function takes a configuration, a seed and an output
directory, writes its tables there and returns a :class:`Report` whose checks
decide the exit status. Seeds for independent random streams are derived as
``[seed, tag, ...]`` so experiments never share generator state.
"""

from __future__ import annotations

import itertools
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from ..dsa import (BankEntry, DatasetBank, SampleWindow, load_bank, pooled_g_matrix,
                   select_dataset, write_manifest)
from ..errors import ReferenceInfeasibleError
from ..mlp import MlpModel, infer, load_model, save_model, train
from ..planner import (ControllerState, references_at, run_closed_loop, tracking_error,
                       write_step_log)
from ..plants import PidState, forward_kinematics, pid_step
from ..predictor import GMatrix, compute_g_matrix
from ..refgen import build_letter_path, save_reference_csv, step_path
from ..trajectory import SystemDims, min_data_length, partition_hankel, save_trajectory_csv
from .common import (Report, collect_dataset, make_plant, motion_pairs, train_config,
                     train_joint_inverse, train_position_inverse, velocity_reference,
                     write_csv)
from .config import ExperimentConfig

log = logging.getLogger(__name__)

# stream tags for derived seeds
_DATA, _INVERSE, _PROBE, _PLANT, _SWEEP, _LETTER, _FORWARD = 11, 12, 21, 31, 51, 41, 13


def _seq(seed: int, *tags: int) -> list[int]:
    return [int(seed), *(int(t) for t in tags)]


def _label(load: float) -> str:
    return f"load_{load:g}"


def _fit_g(cfg: ExperimentConfig, traj, n_ini=None, l=None) -> GMatrix:
    n_ini = cfg.planner.n_ini if n_ini is None else n_ini
    l = cfg.planner.l if l is None else l
    return compute_g_matrix(partition_hankel(traj, n_ini, l), cfg.planner.h)


def _bank_dataset(cfg: ExperimentConfig, seed: int, j: int, load: float):
    # every load condition is driven by the same input program
    return collect_dataset(cfg, load, cfg.data.N, _seq(seed, _DATA), _label(load),
                           noise_seed=_seq(seed, _DATA, j))


def build_bank(cfg: ExperimentConfig, seed: int, with_models: bool = False) -> DatasetBank:
    """One recording (and optionally one inverse model) per bank load."""
    if cfg.dsa.manifest:
        loader = load_model if with_models else None
        return load_bank(cfg.resolve(cfg.dsa.manifest), cfg.planner.n_ini, cfg.planner.l,
                         cfg.planner.h, loader)
    trajs, models = [], []
    for j, load in enumerate(cfg.dsa.loads):
        trajs.append(_bank_dataset(cfg, seed, j, load))
        models.append(train_joint_inverse(cfg, load, _seq(seed, _INVERSE, j)).model
                      if with_models else None)
    return DatasetBank.from_trajectories(trajs, cfg.planner.n_ini, cfg.planner.l,
                                         cfg.planner.h, models)


# ---------------------------------------------------------------- collect

def run_collect(cfg: ExperimentConfig, seed: int, out) -> Report:
    """Record one excitation dataset per bank load and write a manifest."""
    out = Path(out)
    rep = Report("collect")
    rows, manifest = [], []
    need = min_data_length(SystemDims(cfg.plant.m, cfg.plant.c, cfg.planner.h),
                           cfg.planner.n_ini, cfg.planner.l)
    out.mkdir(parents=True, exist_ok=True)
    for j, load in enumerate(cfg.dsa.loads):
        traj = _bank_dataset(cfg, seed, j, load)
        path = out / f"data_{_label(load)}.csv"
        save_trajectory_csv(traj, path)
        manifest.append((traj.label, path.name, None))
        rows.append([traj.label, load, traj.T, float(np.abs(traj.inputs).max()),
                     float(traj.outputs.std())])
        rep.check(f"{traj.label} length", traj.T >= need, f"N={traj.T}, bound={need}")
    write_manifest(out / "manifest.csv", manifest)
    rep.add_table("datasets", ["label", "load_kg", "N", "max_abs_u", "std_y"], rows)
    rep.metrics["bound"] = need
    rep.write(out)
    return rep


# ------------------------------------------------------------- train-mlp

def run_train_mlp(cfg: ExperimentConfig, seed: int, out) -> Report:
    """Train forward, joint-inverse and end-effector-inverse maps at the plant load."""
    out = Path(out)
    rep = Report("train-mlp")
    load = cfg.plant.load
    theta, beta = motion_pairs(cfg, load, cfg.mlp.samples, _seq(seed, _INVERSE, 0))
    tc = train_config(cfg)
    results = {
        "forward": train(theta, beta, tc),
        "joint_inverse": train(beta, theta, tc),
        "position_inverse": train_position_inverse(cfg, _seq(seed, _LETTER)),
    }
    out.mkdir(parents=True, exist_ok=True)
    hist_rows = []
    for name, res in results.items():
        save_model(res.model, out / f"{name}.mlp")
        for e, (a, b) in enumerate(zip(res.train_rmse, res.val_rmse)):
            hist_rows.append([name, e, a, b])
        red = 1.0 - min(res.val_rmse) / res.val_rmse[0]
        rep.metrics[name] = {"test_rmse": res.test_rmse, "best_epoch": res.best_epoch,
                             "val_reduction": red}
        rep.check(f"{name} validation RMSE reduced", red >= cfg.mlp.min_val_reduction,
                  f"reduction {red:.3f}")
    # round trip on held-out joint samples
    te = results["joint_inverse"].splits[2]
    back = infer(results["forward"].model, infer(results["joint_inverse"].model, beta[te]))
    rt = float(np.sqrt(np.mean((back - beta[te]) ** 2)))
    rep.metrics["round_trip_rmse"] = rt
    rep.add_table("history", ["model", "epoch", "train_rmse", "val_rmse"], hist_rows)
    rep.write(out)
    return rep


# ------------------------------------------------------------ build-bank

def run_build_bank(cfg: ExperimentConfig, seed: int, out) -> Report:
    """Datasets and paired inverse models for every bank load, plus a manifest."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    rep = Report("build-bank")
    rows = []
    for j, load in enumerate(cfg.dsa.loads):
        traj = _bank_dataset(cfg, seed, j, load)
        res = train_joint_inverse(cfg, load, _seq(seed, _INVERSE, j))
        dpath, mpath = out / f"data_{_label(load)}.csv", out / f"inverse_{_label(load)}.mlp"
        save_trajectory_csv(traj, dpath)
        save_model(res.model, mpath)
        rows.append((traj.label, dpath.name, mpath.name))
    write_manifest(out / "manifest.csv", rows)
    bank = load_bank(out / "manifest.csv", cfg.planner.n_ini, cfg.planner.l, cfg.planner.h,
                     load_model)
    rep.check("bank reloads from manifest", bank.labels == [r[0] for r in rows],
              f"{len(bank)} entries")
    rep.check("every entry has an inverse model",
              all(isinstance(e.inverse_model, MlpModel) for e in bank.entries))
    rep.add_table("bank", ["label", "data", "inverse_model"], [list(r) for r in rows])
    rep.write(out)
    return rep


# -------------------------------------------------------------- dsa-eval

def _probe_window(cfg: ExperimentConfig, load: float, L: int, seed) -> SampleWindow:
    rng = np.random.default_rng(seed)
    traj = collect_dataset(cfg, load, cfg.dsa.probe_steps, rng.integers(2 ** 32), "probe")
    start = int(rng.integers(min(50, cfg.dsa.probe_steps - L), cfg.dsa.probe_steps - L + 1))
    u, y = traj.window(start, L)
    return SampleWindow(u, y)


def _step_references(cfg: ExperimentConfig, start, targets):
    path = step_path(start, targets, cfg.refgen.T_leg, cfg.refgen.T_hold)
    _, q, _ = path.discretize(cfg.plant.dt)
    return q


def _timed_run(cfg, g: GMatrix, seed, n_steps: int) -> np.ndarray:
    pcfg = cfg.planner_config()
    plant = make_plant(cfg)
    y_ref = _step_references(cfg, np.zeros(cfg.plant.c), cfg.refgen.targets[:1])
    u_ref = velocity_reference(None, y_ref, cfg.plant.dt, plant.W)
    rng = np.random.default_rng(seed)
    res = run_closed_loop(plant, g, pcfg,
                          lambda k: references_at(k, pcfg.l, y_ref, u_ref, y_ref[-1]),
                          n_steps, rng)
    return res.solve_ms


def run_dsa_eval(cfg: ExperimentConfig, seed: int, out, bank: DatasetBank | None = None) -> Report:
    """Score table, selection accuracy and the selected-vs-pooled solve-time comparison."""
    out = Path(out)
    rep = Report("dsa-eval")
    bank = bank or build_bank(cfg, seed)
    loads = np.array(cfg.dsa.loads, dtype=float)
    L = bank.window_len
    lam = cfg.dsa.sigma_weight
    test_loads = cfg.dsa.test_loads or list(loads)
    table, acc_rows = [], []
    for i, rho in enumerate(test_loads):
        want = int(np.argmin(np.abs(loads - rho)))
        scores, hits = [], 0
        for t in range(cfg.dsa.trials):
            win = _probe_window(cfg, rho, L, _seq(seed, _PROBE, i, t))
            idx, sc = select_dataset(bank, win, lam)
            scores.append(sc)
            hits += idx == want
        mean = np.mean(scores, axis=0)
        acc = hits / cfg.dsa.trials
        table.append([f"{rho:g}"] + list(mean) + [bank.labels[int(np.argmin(mean))]])
        acc_rows.append([f"{rho:g}", bank.labels[want], hits, cfg.dsa.trials, acc])
        rep.check(f"selection accuracy at {rho:g} kg", acc >= cfg.dsa.min_accuracy,
                  f"{hits}/{cfg.dsa.trials} chose {bank.labels[want]}")
    rep.add_table("scores", ["sample_load_kg"] + bank.labels + ["argmin"], table)
    rep.add_table("accuracy", ["sample_load_kg", "nearest", "hits", "trials", "accuracy"], acc_rows)

    # solve time: one selected dataset vs all datasets pooled
    sel = int(np.argmin(np.abs(loads - cfg.plant.load)))
    t0 = time.perf_counter()
    g_sel = compute_g_matrix(bank.entries[sel].part, cfg.planner.h)
    t_sel_build = time.perf_counter() - t0
    t0 = time.perf_counter()
    g_pool = pooled_g_matrix(bank, cfg.planner.h)
    t_pool_build = time.perf_counter() - t0
    med_sel, med_pool = [], []
    for r in range(5):
        s = _timed_run(cfg, g_sel, _seq(seed, _PLANT, r), cfg.dsa.timing_steps)[10:]
        p = _timed_run(cfg, g_pool, _seq(seed, _PLANT, r), cfg.dsa.timing_steps)[10:]
        med_sel.append(np.median(s))
        med_pool.append(np.median(p))
    ms_sel, ms_pool = float(np.median(med_sel)), float(np.median(med_pool))
    ratio = ms_pool / ms_sel
    rep.timing.update({"selected_solve_ms": ms_sel, "pooled_solve_ms": ms_pool,
                       "solve_ratio": ratio, "selected_g_build_s": t_sel_build,
                       "pooled_g_build_s": t_pool_build,
                       "solves_per_run": cfg.dsa.timing_steps - 10})
    rep.check("pooled/selected solve-time ratio", ratio >= cfg.dsa.timing_min_ratio,
              f"{ms_pool:.3f} ms / {ms_sel:.3f} ms = {ratio:.2f}")
    rep.write(out)
    return rep


# ------------------------------------------------------------------ track

def _setup_controller(cfg: ExperimentConfig, seed, load: float | None = None, **plant_kw):
    """Dataset, transition map and inverse model for one operating condition."""
    load = cfg.plant.load if load is None else load
    traj = collect_dataset(cfg, load, cfg.data.N, _seq(seed, _DATA, 99), **plant_kw)
    g = _fit_g(cfg, traj)
    inv = train_joint_inverse(cfg, load, _seq(seed, _INVERSE, 99)).model
    return g, inv


def _mpc_run(cfg, g, y_ref, u_ref, plant, rng, state=None):
    """Closed loop over ``y_ref``; returns the result and the true joint angles per step."""
    pcfg = cfg.planner_config()
    truth = []
    res = run_closed_loop(plant, g, pcfg,
                          lambda k: references_at(k, pcfg.l, y_ref, u_ref, y_ref[-1]),
                          len(y_ref), rng, state=state,
                          on_step=lambda k, s: truth.append(plant.beta.copy()))
    return res, np.array(truth)


def _pid_run(cfg, y_ref, plant, rng, rest_steps: int):
    p = cfg.track.pid
    pid = PidState.for_arm(plant.W, p["kp"], p["ki"], p["kd"], p.get("i_clamp", 5.0),
                           p.get("u_limit"))
    u0 = np.zeros(plant.m)
    y = None
    for _ in range(rest_steps):
        y = plant.step(u0, rng)
    truth, us = [], []
    for ref in y_ref:
        truth.append(plant.beta.copy())
        u = pid_step(pid, ref, y, plant.dt)
        us.append(u)
        y = plant.step(u, rng)
    return np.array(truth), np.array(us)


def _segment_errors(truth, y_ref, n_targets: int, seg_len: int) -> list[float]:
    err = np.abs(truth - y_ref).mean(axis=1)
    return [float(err[1 + i * seg_len: 1 + (i + 1) * seg_len].mean()) for i in range(n_targets)]


def run_track(cfg: ExperimentConfig, seed: int, out, half_width=...) -> Report:
    """Step targets tracked by the planner and by the PID baseline on identical plants."""
    out = Path(out)
    rep = Report("track")
    kw = {} if half_width is ... else {"half_width": half_width}
    g, inv = _setup_controller(cfg, seed, **kw)
    targets = np.asarray(cfg.refgen.targets, dtype=float)
    y_ref = _step_references(cfg, np.zeros(cfg.plant.c), targets)
    u_ref = velocity_reference(inv, y_ref, cfg.plant.dt)
    seg_len = int(round((cfg.refgen.T_leg + cfg.refgen.T_hold) / cfg.plant.dt))

    plant = make_plant(cfg, **kw)
    rng = np.random.default_rng(_seq(seed, _PLANT))
    state = ControllerState.at_rest(plant, cfg.planner.n_ini, cfg.plant.m, rng)
    res, truth_mpc = _mpc_run(cfg, g, y_ref, u_ref, plant, rng, state)

    plant = make_plant(cfg, **kw)
    rng = np.random.default_rng(_seq(seed, _PLANT))
    truth_pid, u_pid = _pid_run(cfg, y_ref, plant, rng, cfg.planner.n_ini)

    e_mpc = _segment_errors(truth_mpc, y_ref, len(targets), seg_len)
    e_pid = _segment_errors(truth_pid, y_ref, len(targets), seg_len)
    avg_mpc, avg_pid = float(np.mean(e_mpc)), float(np.mean(e_pid))
    rows = [[f"TT{i + 1}", a, b] for i, (a, b) in enumerate(zip(e_pid, e_mpc))]
    rows.append(["Average", avg_pid, avg_mpc])
    rep.add_table("track_table", ["target", "pid_error_deg", "mpc_error_deg"], rows)
    t = np.arange(len(y_ref)) * cfg.plant.dt
    c = cfg.plant.c
    rep.add_table("track_traces",
                  ["t"] + [f"ref_{i + 1}" for i in range(c)] + [f"mpc_{i + 1}" for i in range(c)]
                  + [f"pid_{i + 1}" for i in range(c)],
                  np.column_stack([t, y_ref, truth_mpc, truth_pid]).tolist())
    rough = {"mpc": float(np.sqrt(np.mean(np.diff(res.inputs, axis=0) ** 2))),
             "pid": float(np.sqrt(np.mean(np.diff(u_pid, axis=0) ** 2)))}
    rep.metrics.update({"mpc_average_deg": avg_mpc, "pid_average_deg": avg_pid,
                        "ratio": avg_mpc / avg_pid, "nonconverged_steps": res.nonconverged,
                        "steps": len(y_ref), "command_roughness": rough})
    ms = res.solve_ms
    rep.timing.update({"solve_ms_mean": float(ms.mean()),
                       "solve_ms_p95": float(np.percentile(ms, 95)),
                       "solve_ms_max": float(ms.max())})
    rep.check("planner beats PID", avg_mpc < avg_pid, f"{avg_mpc:.4f} vs {avg_pid:.4f} deg")
    rep.check("error ratio", avg_mpc / avg_pid < cfg.track.max_ratio,
              f"{avg_mpc / avg_pid:.3f} < {cfg.track.max_ratio}")
    rep.write(out)
    (out / "logs").mkdir(exist_ok=True)
    write_step_log(res.records, out / "logs" / "mpc_steps.csv", cfg.plant.m, c)
    return rep


# ------------------------------------------------------------------ sweep

def _sweep_point(args):
    cfg, seed, N, n_ini, l, inv, r = args
    traj = collect_dataset(cfg, cfg.plant.load, N, _seq(seed, _SWEEP, r))
    g = _fit_g(cfg, traj, n_ini, l)
    pcfg = cfg.planner_config(n_ini=n_ini, l=l)
    start = np.asarray(cfg.sweep.start, dtype=float)
    end = np.asarray(cfg.sweep.end, dtype=float)
    q = _step_references(cfg, start, end[None, :])
    T_a = cfg.sweep.T_a
    y_ref = np.vstack([q, np.tile(end, (max(T_a - len(q), 0), 1))])[:T_a]
    u_ref = velocity_reference(inv, y_ref, cfg.plant.dt)
    plant = make_plant(cfg)
    plant.set_pose(start)
    rng = np.random.default_rng(_seq(seed, _SWEEP, r, 1))
    state = ControllerState.at_rest(plant, n_ini, cfg.plant.m, rng)
    res = run_closed_loop(plant, g, pcfg,
                          lambda k: references_at(k, l, y_ref, u_ref, end), T_a, rng, state)
    return tracking_error(res.outputs, end), res.nonconverged


def run_sweep(cfg: ExperimentConfig, seed: int, out, N_list=None, n_ini_list=None,
              l_list=None) -> Report:
    """Step-task error over a grid of data lengths and horizons."""
    out = Path(out)
    rep = Report("sweep")
    N_list = list(N_list or cfg.sweep.N_list)
    n_ini_list = list(n_ini_list or cfg.sweep.n_ini_list)
    l_list = list(l_list or cfg.sweep.l_list)
    inv = train_joint_inverse(cfg, cfg.plant.load, _seq(seed, _INVERSE, 98)).model
    points = list(itertools.product(N_list, n_ini_list, l_list))
    jobs = [(cfg, seed, N, n, l, inv, r) for N, n, l in points for r in range(cfg.sweep.repeats)]
    if cfg.sweep.workers > 1:
        with ProcessPoolExecutor(cfg.sweep.workers) as ex:
            results = list(ex.map(_sweep_point, jobs))
    else:
        results = [_sweep_point(j) for j in jobs]
    dims = SystemDims(cfg.plant.m, cfg.plant.c, cfg.planner.h)
    rows, err = [], {}
    for i, (N, n, l) in enumerate(points):
        chunk = results[i * cfg.sweep.repeats:(i + 1) * cfg.sweep.repeats]
        e = float(np.mean([a for a, _ in chunk]))
        nc = int(sum(b for _, b in chunk))
        bound = min_data_length(dims, n, l)
        err[(N, n, l)] = e
        rows.append([N, n, l, bound, int(N < bound), e, nc])
    rep.add_table("sweep", ["N", "n_ini", "l", "bound", "below_bound", "error", "nonconverged"], rows)
    rep.check("rows below the sizing bound are flagged",
              all(r[4] == int(r[0] < r[3]) for r in rows), f"{sum(r[4] for r in rows)} flagged")

    # data-length trend: the point nearest half the bound vs nearest 1.5x the bound
    for n, l in itertools.product(n_ini_list, l_list):
        bound = min_data_length(dims, n, l)
        lo = [N for N in N_list if N <= 0.5 * bound]
        hi = [N for N in N_list if N >= 1.5 * bound]
        if lo and hi and n == max(n_ini_list):
            a, b = err[(max(lo), n, l)], err[(min(hi), n, l)]
            rep.metrics[f"length_ratio_n{n}_l{l}"] = a / b
            rep.check(f"error falls with N (n_ini={n}, l={l})", a >= cfg.sweep.min_ratio * b,
                      f"N={max(lo)}: {a:.2f}, N={min(hi)}: {b:.2f}, ratio {a / b:.2f}")
    # estimation-horizon trend at fixed N
    N = cfg.sweep.horizon_N
    if len(n_ini_list) > 1 and N in N_list:
        for l in l_list:
            seq = [err[(N, n, l)] for n in sorted(n_ini_list)]
            ok = all(b <= a for a, b in zip(seq, seq[1:]))
            rep.check(f"error nonincreasing in n_ini (N={N}, l={l})", ok,
                      " -> ".join(f"{v:.2f}" for v in seq))
    rep.write(out)
    return rep


# ----------------------------------------------------------------- repeat

def run_repeat(cfg: ExperimentConfig, seed: int, out, noise_std: float | None = None,
               cycles: int | None = None) -> Report:
    """Cycle through the fixed poses and measure end-effector scatter per pose."""
    out = Path(out)
    rep = Report("repeat")
    noise = cfg.plant.noise_std if noise_std is None else noise_std
    cycles = cfg.repeat.cycles if cycles is None else cycles
    g, inv = _setup_controller(cfg, seed)
    poses = np.asarray(cfg.refgen.poses, dtype=float)
    dt = cfg.plant.dt
    n_move = int(round(cfg.repeat.T_move / dt))
    n_hold = int(round(cfg.repeat.T_settle / dt))
    plant = make_plant(cfg, noise_std=noise)
    rng = np.random.default_rng(_seq(seed, _PLANT))
    state = ControllerState.at_rest(plant, cfg.planner.n_ini, cfg.plant.m, rng)
    current = np.zeros(cfg.plant.c)
    hits = {i: [] for i in range(len(poses))}
    for cyc in range(cfg.repeat.warmup + cycles):
        for i, pose in enumerate(poses):
            path = step_path(current, pose[None, :], cfg.repeat.T_move, cfg.repeat.T_settle)
            _, q, _ = path.discretize(dt)
            q = q[1:1 + n_move + n_hold]
            u_ref = velocity_reference(inv, np.vstack([current, q]), dt)[1:]
            _, truth = _mpc_run(cfg, g, q, u_ref, plant, rng, state)
            if cyc >= cfg.repeat.warmup:
                hits[i].append(forward_kinematics(plant.beta))
            current = pose
    rows, stats = [], []
    for i in range(len(poses)):
        pts = np.array(hits[i])
        d = np.linalg.norm(pts - pts.mean(axis=0), axis=1)
        mean, std = float(d.mean()), float(d.std(ddof=1)) if len(d) > 1 else 0.0
        stats.append((mean, std, mean + 3 * std))
        rows.append([f"P{i + 1}", *stats[-1]])
    avg = np.mean(stats, axis=0)
    rows.append(["Average", *avg])
    rep.add_table("repeat_table", ["pose", "mean_mm", "std_mm", "three_sigma_mm"], rows)
    rep.metrics.update({"average_mean_mm": float(avg[0]), "average_std_mm": float(avg[1]),
                        "average_three_sigma_mm": float(avg[2]), "cycles": cycles,
                        "noise_std": noise, "nonconverged_steps":
                        int(sum(not r.converged for r in state.records))})
    rep.check("table has one row per pose plus Average", len(rows) == len(poses) + 1)
    if noise == 0:
        rep.check("noiseless repeat distance", avg[0] <= 1e-6, f"mean {avg[0]:.3g} mm")
    rep.write(out)
    return rep


# ---------------------------------------------------------------- letters

def run_letters(cfg: ExperimentConfig, seed: int, out) -> Report:
    """Track each letter path and compare end-effector traces with the reference."""
    out = Path(out)
    rep = Report("letters")
    g, inv = _setup_controller(cfg, seed)
    pos_inv = train_position_inverse(cfg, _seq(seed, _LETTER)).model
    dt = cfg.plant.dt
    c = cfg.plant.c
    rows = []
    out.mkdir(parents=True, exist_ok=True)
    for letter in cfg.letters.letters:
        try:
            ref = build_letter_path(letter, cfg.refgen.letter_scale, cfg.refgen.letter_T_leg,
                                    lambda xy: infer(pos_inv, xy), dt,
                                    cfg.refgen.letter_center, in_range=pos_inv.in_range)
        except ReferenceInfeasibleError as exc:
            rep.check(f"letter {letter} reference", False, str(exc))
            continue
        y_ref = ref.joints
        fk_ref = np.array([forward_kinematics(b) for b in y_ref])
        fk_gap = float(np.max(np.linalg.norm(fk_ref[:, :2] - ref.xy, axis=1)))
        plant = make_plant(cfg)
        plant.set_pose(y_ref[0])
        rng = np.random.default_rng(_seq(seed, _PLANT, ord(letter)))
        state = ControllerState.at_rest(plant, cfg.planner.n_ini, cfg.plant.m, rng)
        u_ref = velocity_reference(inv, y_ref, dt)
        res, truth = _mpc_run(cfg, g, y_ref, u_ref, plant, rng, state)
        fk = np.array([forward_kinematics(b) for b in truth])
        dev = float(np.mean(np.linalg.norm(fk - fk_ref, axis=1)))
        eq12 = tracking_error(res.outputs, y_ref[-1])
        write_csv(out / f"letter_{ref.letter}.csv",
                  ["t", "x_ref", "y_ref", "z_ref", "x", "y", "z"],
                  np.column_stack([ref.times, fk_ref, fk]).tolist())
        save_reference_csv(out / f"letter_{ref.letter}_joint_reference.csv", ref.times, y_ref,
                           np.vstack([np.zeros((1, c)), np.diff(y_ref, axis=0) / dt]))
        rows.append([ref.letter, len(y_ref), fk_gap, dev, eq12, res.nonconverged])
        rep.check(f"letter {ref.letter} reference matches polyline", fk_gap <= cfg.letters.fk_tolerance_mm,
                  f"max gap {fk_gap:.3f} mm")
        rep.check(f"letter {ref.letter} tracking deviation", dev <= cfg.letters.threshold_mm,
                  f"mean {dev:.3f} mm")
    rep.add_table("letters", ["letter", "steps", "reference_gap_mm", "mean_deviation_mm",
                              "tracking_error", "nonconverged"], rows)
    rep.write(out)
    return rep


EXPERIMENTS = {
    "collect": run_collect,
    "train-mlp": run_train_mlp,
    "build-bank": run_build_bank,
    "dsa-eval": run_dsa_eval,
    "sweep": run_sweep,
    "track": run_track,
    "repeat": run_repeat,
    "letters": run_letters,
}
