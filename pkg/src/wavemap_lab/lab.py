"""Run configuration, experiment orchestration and persistence.

A run evolves initial data on a bump metric and, at every recorded step,
evaluates the gauge, elliptic and norm diagnostics on a window of five
consecutive slices.  To make the first and last recorded steps complete the
orchestrator also integrates two steps backwards from ``t = 0`` and two steps
past ``t_end``; those extra slices are used for diagnostics only.
"""

import csv
import dataclasses
import json
import math
import os
import time
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid
from scipy.optimize import brentq

from . import analysis, elliptic, evolve, gauge
from .fields import CFLError, GridSpec, MapState, differential, gradient, write_field_dump
from .geometry import MetricProfile, build_metric, bump
from .target import project, tangential

SCHEMA_VERSION = 1
OUTPUT_ROOT_ENV = "WAVEMAP_LAB_OUTPUT"
DATA_FAMILIES = ("small-bump", "rotating-circle", "random-smooth")

COLUMNS = [
    "step", "t", "energy", "energy_drift", "energy_shadow", "shadow_drift", "du_H1", "du_L2", "du_L8", "du_L82",
    "constraint_norm", "constraint_tangent", "exact_error",
    "Lambda", "coulomb_residual", "pullback_residual", "gauge_iterations", "gauge_converged",
    "lambda_monotone", "frame_continuity", "structure_residual", "r_delta", "r_d", "waveq_residual",
    "H_L2",
    "Dq_sq", "elliptic_contraction", "elliptic_iterations", "elliptic_residual",
    "elliptic_recovery", "ratio_i", "ratio_ii", "ratio_iii", "ratio_iv",
    "normeq_lhs", "normeq_rhs",
]


@dataclass
class RunConfig:
    """Flat run configuration; round-trips through JSON."""

    schema_version: int = SCHEMA_VERSION
    name: str = "run"
    d: int = 4
    n: int = 16
    box_length: float = 2 * math.pi
    dt: float = None
    dt_factor: float = 0.25
    cfl: float = 0.5
    metric_kind: str = "conformal"
    metric_amplitude: float = 0.01
    metric_radius: float = 2.4
    data_family: str = "small-bump"
    eps0: float = 0.05
    data_radius: float = 3.0
    omega: float = 2.0
    t_end: float = 1.0
    integrator: str = "leapfrog"
    renormalize_every: int = 1
    record_every: int = 1
    diag_gauge: bool = True
    diag_elliptic: bool = True
    diag_norms: bool = True
    gauge_rtol: float = 1e-8
    gauge_max_iters: int = 500
    dump_fields: bool = False
    output_dir: str = None
    seed: int = 0

    def __post_init__(self):
        if self.schema_version != SCHEMA_VERSION:
            raise ValueError(f"unsupported config schema version {self.schema_version}")
        if self.data_family not in DATA_FAMILIES:
            raise ValueError(f"unknown initial-data family {self.data_family!r}")
        if not self.eps0 >= 0 or not math.isfinite(self.eps0):
            raise ValueError("eps0 must be a finite non-negative number")
        MetricProfile(self.metric_kind, self.metric_amplitude, self.metric_radius)
        evolve.EvolutionConfig(self.t_end, self.integrator, self.renormalize_every, self.record_every)

    @property
    def h(self):
        return self.box_length / self.n

    @property
    def time_step(self):
        return self.dt if self.dt is not None else self.dt_factor * self.h

    def grid(self):
        return GridSpec(self.d, self.n, self.box_length, self.time_step, self.cfl)

    def profile(self):
        return MetricProfile(self.metric_kind, self.metric_amplitude, self.metric_radius)

    def to_dict(self):
        return dataclasses.asdict(self)

    def replace(self, **kw):
        return dataclasses.replace(self, **kw)

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)


def canonical_config(**kw):
    """The default 16^4 experiment on the conformal bump metric."""
    return RunConfig(**kw)


def output_root():
    return os.environ.get(OUTPUT_ROOT_ENV, os.path.join(os.getcwd(), "runs"))


def resolve_output_dir(config):
    if config.output_dir is None:
        return os.path.join(output_root(), config.name)
    if os.path.isabs(config.output_dir):
        return config.output_dir
    return os.path.join(output_root(), config.output_dir)


# ---------------------------------------------------------------------------
# initial data

def du_H1(state, grid):
    """``||d(du)||_{L^2}`` with ``du = (u_t, d_1 u, ..., d_d u)``, flat."""
    ddu = gradient(differential(state, grid), grid)
    return float(np.sqrt(np.sum(ddu * ddu) * grid.cell_volume))


def _bump_shape(config, grid, rng):
    x = grid.coords()
    c = grid.center
    r = np.sqrt(sum((x[i] - c[i]) ** 2 for i in range(grid.d)))
    window = bump(r / config.data_radius)
    if config.data_family == "small-bump":
        s1 = window * (1 + 0.3 * np.sin(x[0] - c[0]))
        s2 = window * 0.6 * np.cos(x[-1] - c[-1])
        s3 = window * 0.8
        return [s1, s2, np.zeros_like(window)], [np.zeros_like(window), 0.5 * s2, s3]
    shapes = []
    for _ in range(6):
        f = analysis.random_smooth_field(rng, grid)
        shapes.append(f * window)
    return shapes[:3], shapes[3:]


def _profile_state(a, pos, vel, grid):
    """``u = project(p + a sum pos_k E_k)``, ``u_t = a sum vel_k E_k`` projected tangentially."""
    base = np.zeros((4,) + grid.shape)
    base[0] = 1.0
    u = base.copy()
    v = np.zeros_like(base)
    for k in range(3):
        u[k + 1] += a * pos[k]
        v[k + 1] += a * vel[k]
    u = project(u)
    return MapState(u, tangential(u, v), 0.0, grid)


def initial_state(config, grid):
    """Initial data for the configured family, scaled so that ``||du(0)||_{H^1} = eps0``."""
    if config.data_family == "rotating-circle":
        u = np.zeros((4,) + grid.shape)
        v = np.zeros_like(u)
        u[0] = 1.0
        v[1] = config.omega
        return MapState(u, v, 0.0, grid)
    rng = np.random.default_rng(config.seed)
    pos, vel = _bump_shape(config, grid, rng)
    if config.eps0 == 0:
        return _profile_state(0.0, pos, vel, grid)

    def excess(a):
        return du_H1(_profile_state(a, pos, vel, grid), grid) - config.eps0

    hi = 1e-3
    while excess(hi) < 0:
        hi *= 2
        if hi > 1e3:
            raise ValueError("cannot reach the requested data size")
    a = brentq(excess, 0.0, hi, xtol=1e-14, rtol=1e-13)
    return _profile_state(a, pos, vel, grid)


def rotating_circle_exact(t, omega, grid):
    u = np.zeros((4,) + grid.shape)
    u[0] = math.cos(omega * t)
    u[1] = math.sin(omega * t)
    return u


# ---------------------------------------------------------------------------
# per-slice diagnostics

@dataclass
class Slice:
    step: int
    state: MapState
    frame: np.ndarray = None
    gauge: object = None
    pullback_residual: float = float("nan")


def _gauge_fix(sl, prev, metric, config):
    e0 = gauge.pullback_frame(sl.state.u)
    sl.pullback_residual = gauge.coulomb_residual(e0, metric)
    res = gauge.coulomb_project(e0, metric, rtol=config.gauge_rtol, max_iters=config.gauge_max_iters,
                                rotation0=None if prev is None else prev.gauge.rotation)
    if prev is not None:
        gauge.anchor(res, prev.frame, metric)
    sl.gauge = res
    sl.frame = res.frame


def state_norms(state, grid):
    du = differential(state, grid)
    mag = analysis.pointwise_magnitude(du, grid)
    w = np.full(grid.shape, grid.cell_volume)
    return {
        "du_H1": du_H1(state, grid),
        "du_L2": analysis.lp_norm(mag, 2, w),
        "du_L8": analysis.lp_norm(mag, 8, w),
        "du_L82": analysis.lorentz_norm_weighted(mag, analysis.LorentzSpec(8, 2), w),
    }


def window_diagnostics(window, metric, dt, with_elliptic=True, with_monitor=True):
    """Gauge, identity and elliptic diagnostics at the middle of five gauge-fixed slices."""
    grid = metric.grid
    frames = [s.frame for s in window]
    states = [s.state for s in window]
    As = [gauge.connection_form(frames[k - 1:k + 2], dt, grid) for k in (1, 2, 3)]
    dus = [differential(states[k], grid) for k in (1, 2, 3)]
    qs = [gauge.frame_components(dus[j], states[j + 1].u, frames[j + 1]) for j in range(3)]
    mid = window[2]
    F = gauge.curvature(states[2].u, dus[1], frames[2])
    A = As[1]
    out = {}
    out["Lambda"] = mid.gauge.lambda_history[-1]
    out["coulomb_residual"] = mid.gauge.residual
    out["pullback_residual"] = mid.pullback_residual
    out["gauge_iterations"] = mid.gauge.iterations
    out["gauge_converged"] = int(mid.gauge.converged)
    hist = np.asarray(mid.gauge.lambda_history)
    out["lambda_monotone"] = int(np.all(np.diff(hist) <= 0))
    out["frame_continuity"] = float(np.max(np.abs(frames[3] - frames[2])))
    out["structure_residual"] = gauge.structure_residual(As[0], As[1], As[2], F, metric, dt)
    out["r_delta"], out["r_d"] = gauge.q_identity_residuals(qs[0], qs[1], qs[2], A, metric, dt)
    out["waveq_residual"], out["H_L2"] = gauge.waveq_residual(qs, As, F, metric, dt)
    out["Dq_sq"] = evolve.covariant_energy_H2(qs[1], A, metric)
    if with_elliptic:
        Fs = F[1:, 1:]
        As_ = A[1:]
        out["elliptic_residual"], _ = elliptic.connection_system_residual(As_, Fs, metric)
        opr = elliptic.connection_operator(metric)
        sol = elliptic.solve_connection_system(opr, elliptic.assemble_connection_rhs(As_, Fs, metric),
                                               tol=1e-10, max_iters=50)
        out["elliptic_contraction"] = sol.contraction
        out["elliptic_iterations"] = sol.iterations
        out["elliptic_recovery"] = manufactured_recovery(opr, As_)
    if with_monitor and grid.d == 4:
        mon = elliptic.estimate_monitor(A[1:], dus[1], grid)
        for key, name in zip(("ratio_i", "ratio_ii", "ratio_iii", "ratio_iv"), elliptic.RATIO_NAMES):
            out[key] = mon[name]
    lhs, rhs_ = analysis.norm_equivalence_check(qs[1][0], frames[2], A[1:], dus[1], grid)
    out["normeq_lhs"], out["normeq_rhs"] = lhs, rhs_
    return out


def manufactured_recovery(opr, A, tol=1e-12):
    """Relative error of recovering the zero-mean part of ``A`` from ``rhs = L A``."""
    grid = opr.grid
    axes = tuple(range(A.ndim - grid.d, A.ndim))
    target = A - A.mean(axis=axes, keepdims=True)
    nA = float(np.sqrt(np.sum(target ** 2)))
    if nA == 0:
        return 0.0
    sol = elliptic.solve_connection_system(opr, elliptic.apply(opr, target), tol=tol, max_iters=200)
    return float(np.sqrt(np.sum((sol.solution - target) ** 2))) / nA


# ---------------------------------------------------------------------------
# runs

@dataclass
class RunRecord:
    config: dict
    rows: list = field(default_factory=list)
    status: str = "completed"
    message: str = ""
    wall_clock: float = 0.0
    output_dir: str = None
    final_state: object = field(default=None, repr=False)

    def column(self, name):
        return np.array([row.get(name, np.nan) for row in self.rows], dtype=float)

    def to_json(self):
        return {"schema_version": SCHEMA_VERSION, "config": self.config, "status": self.status,
                "message": self.message, "wall_clock": self.wall_clock, "n_rows": len(self.rows),
                "columns": COLUMNS}


def write_csv(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=COLUMNS, restval="nan", extrasaction="ignore")
        w.writeheader()
        for row in rows:
            w.writerow({k: (repr(float(v)) if isinstance(v, (float, np.floating)) else v)
                        for k, v in row.items()})


def read_csv(path):
    with open(path) as fh:
        return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(fh)]


def _persist(record, config):
    out = resolve_output_dir(config) if config.output_dir is not None or record.output_dir else None
    if out is None:
        return
    os.makedirs(out, exist_ok=True)
    record.output_dir = out
    write_csv(os.path.join(out, "run.csv"), record.rows)
    with open(os.path.join(out, "record.json"), "w") as fh:
        json.dump(record.to_json(), fh, indent=2)
    with open(os.path.join(out, "config.json"), "w") as fh:
        json.dump(record.config, fh, indent=2)


def run(config, persist=True, keep_states=False):
    """Evolve the configured data and collect diagnostic rows.

    Returns a :class:`RunRecord`; its ``status`` is ``completed``,
    ``aborted-NaN`` or ``aborted-CFL``.  With ``persist`` and an output
    directory the CSV, the record and the echoed config are written even when
    the run aborts.
    """
    t0 = time.perf_counter()
    record = RunRecord(config.to_dict())
    try:
        grid = config.grid()
    except CFLError as exc:
        record.status, record.message = "aborted-CFL", str(exc)
        record.wall_clock = time.perf_counter() - t0
        if persist:
            _persist(record, config)
        return record
    metric = build_metric(grid, config.profile())
    state0 = initial_state(config, grid)
    nsteps = evolve.n_steps(config.t_end, grid.dt)
    dt = config.t_end / nsteps if nsteps else grid.dt
    E0 = evolve.energy(state0, metric)
    S0 = evolve.shadow_energy(state0, metric, dt)
    need_window = config.diag_gauge and nsteps >= 0
    recorded = set(k for k in range(nsteps + 1) if k % config.record_every == 0) | {nsteps}

    def base_row(k, st):
        row = {"step": k, "t": k * dt}
        E = evolve.energy(st, metric)
        row["energy"] = E
        row["energy_drift"] = abs(E - E0) / max(E0, 1e-14)
        S = evolve.shadow_energy(st, metric, dt)
        row["energy_shadow"] = S
        row["shadow_drift"] = abs(S - S0) / max(abs(S0), 1e-14)
        cn, ct = st.constraint_errors()
        row["constraint_norm"], row["constraint_tangent"] = cn, ct
        if config.diag_norms:
            row.update(state_norms(st, grid))
        if config.data_family == "rotating-circle":
            row["exact_error"] = float(np.max(np.abs(st.u - rotating_circle_exact(k * dt, config.omega,
                                                                                  grid))))
        return row

    rows = {}
    window = deque(maxlen=5)
    prev_slice = [None]
    states_kept = []

    def push(k, st):
        sl = Slice(k, st)
        if need_window:
            _gauge_fix(sl, prev_slice[0], metric, config)
            prev_slice[0] = sl
        window.append(sl)
        if 0 <= k <= nsteps and k in recorded:
            rows[k] = base_row(k, st)
        if need_window and len(window) == 5:
            mid = window[2]
            if 0 <= mid.step <= nsteps and mid.step in recorded:
                rows[mid.step].update(window_diagnostics(list(window), metric, dt,
                                                         config.diag_elliptic, config.diag_norms))

    status, message = "completed", ""
    final = state0
    try:
        if need_window:
            back = [state0]
            for j in range(2):
                back.append(evolve.step(back[-1], metric, -dt, config.integrator))
            for j, st in zip((-2, -1), back[:0:-1]):
                st.t = j * dt
                push(j, st)
        push(0, state0)
        st = state0
        extra = 2 if need_window else 0
        for k in range(1, nsteps + 1 + extra):
            renorm = k % config.renormalize_every == 0
            st = evolve.step(st, metric, dt, config.integrator, renorm, k)
            st.t = k * dt
            if k == nsteps:
                final = st
            if keep_states and k <= nsteps:
                states_kept.append(st)
            push(k, st)
        if nsteps == 0:
            final = state0
    except evolve.EvolutionAborted as exc:
        status, message = "aborted-NaN", str(exc)
    record.rows = [rows[k] for k in sorted(rows)]
    record.status, record.message = status, message
    record.final_state = final
    if keep_states:
        record.states = [state0] + states_kept
    record.wall_clock = time.perf_counter() - t0
    if persist:
        _persist(record, config)
        if config.dump_fields and record.output_dir:
            write_field_dump(os.path.join(record.output_dir, "u_final"), final.u, grid,
                             kind="map", t=final.t)
            write_field_dump(os.path.join(record.output_dir, "udot_final"), final.udot, grid,
                             kind="velocity", t=final.t)
    return record


# ---------------------------------------------------------------------------
# studies

STUDY_KEYS = ("energy_drift", "structure_residual", "r_delta", "r_d", "waveq_residual",
              "elliptic_residual")


def fit_order(hs, values):
    """Least-squares slope of ``log(value)`` against ``log(h)`` and its ``R^2``.

    Returns ``(nan, nan)`` when the values are not strictly decreasing under
    refinement or not all positive.
    """
    hs = np.asarray(hs, dtype=float)
    v = np.asarray(values, dtype=float)
    if v.size < 2 or not np.all(np.isfinite(v)) or np.any(v <= 0) or np.any(np.diff(v) >= 0):
        return float("nan"), float("nan")
    x, y = np.log(hs), np.log(v)
    slope, icpt = np.polyfit(x, y, 1)
    resid = y - (slope * x + icpt)
    ss = np.sum((y - y.mean()) ** 2)
    r2 = 1 - np.sum(resid ** 2) / ss if ss > 0 else 1.0
    return float(slope), float(r2)


def convergence_study(config, levels=3, keys=STUDY_KEYS):
    """Rerun the final-time diagnostics at ``h, h/2, h/4, ...`` with ``dt`` proportional to ``h``.

    Returns a dict with per-level raw values and, per diagnostic, the fitted
    order and ``R^2`` (NaN when the values are not monotone).
    """
    if levels < 3:
        raise ValueError("a convergence study needs at least three levels")
    hs, per_level = [], []
    for lev in range(levels):
        cfg = config.replace(n=config.n * 2 ** lev,
                             dt=None if config.dt is None else config.dt / 2 ** lev,
                             record_every=10 ** 9, output_dir=None)
        rec = run(cfg, persist=False)
        if rec.status != "completed":
            raise RuntimeError(f"level {lev} did not complete: {rec.status} {rec.message}")
        last = rec.rows[-1]
        hs.append(cfg.h)
        per_level.append({k: float(last.get(k, np.nan)) for k in keys} | {
            "coulomb_residual": float(last.get("coulomb_residual", np.nan)),
            "wall_clock": rec.wall_clock})
    table = {"h": hs, "levels": per_level, "orders": {}}
    for k in keys:
        vals = [lv[k] for lv in per_level]
        if all(v == 0 for v in vals):
            table["orders"][k] = {"order": float("nan"), "r2": float("nan"), "values": vals,
                                  "note": "inapplicable"}
            continue
        order, r2 = fit_order(hs, vals)
        table["orders"][k] = {"order": order, "r2": r2, "values": vals}
    return table


def smalldata_sweep(config, amplitudes, cap=2.0):
    """Runs over increasing data sizes recording ``sup_t ||du||_{H^1}`` and ``||du||_{L^2 L^8}``."""
    amps = list(amplitudes)
    if any(b < a for a, b in zip(amps, amps[1:])):
        raise ValueError("amplitudes must be sorted ascending")
    out = []
    for eps in amps:
        cfg = config.replace(eps0=float(eps), diag_gauge=False, diag_elliptic=False, output_dir=None)
        rec = run(cfg, persist=False)
        t = rec.column("t")
        h1 = rec.column("du_H1")
        l8 = rec.column("du_L8")
        sup = float(np.max(h1)) if h1.size else float("nan")
        l2l8 = float(np.sqrt(trapezoid(l8 ** 2, t))) if t.size > 1 else 0.0
        ratio = sup / eps if eps > 0 else float("nan")
        out.append({"eps0": float(eps), "sup_du_H1": sup, "du_L2L8": l2l8, "ratio": ratio,
                    "bounded": bool(eps == 0 or ratio <= cap), "status": rec.status})
    sups = [r["sup_du_H1"] for r in out]
    return {"rows": out, "monotone": bool(all(b >= a for a, b in zip(sups, sups[1:])))}


def identity_control_study(config, levels=3, t0=0.3):
    """``r_delta`` and ``r_d`` for a smooth map that is not a wave map.

    The map ``u(t, x) = project(p + a w(x) (cos(t + x_1), sin(2t) , cos(t) x_2 / L))``
    is sampled exactly at five slices around ``t0`` and gauge fixed like a run.
    """
    out = []
    hs = []
    for lev in range(levels):
        grid = GridSpec(config.d, config.n * 2 ** lev, config.box_length,
                        config.time_step / 2 ** lev, config.cfl)
        metric = build_metric(grid, config.profile())
        x = grid.coords()
        c = grid.center
        r = np.sqrt(sum((x[i] - c[i]) ** 2 for i in range(grid.d)))
        w = bump(r / config.data_radius)
        a = 0.6

        def sample(t):
            base = np.zeros((4,) + grid.shape)
            base[0] = 1.0
            vec = np.stack([a * w * np.cos(t + x[0]), a * w * np.sin(2 * t),
                            a * w * np.cos(t) * np.sin(x[-1])])
            dvec = np.stack([-a * w * np.sin(t + x[0]), 2 * a * w * np.cos(2 * t),
                             -a * w * np.sin(t) * np.sin(x[-1])])
            raw = base.copy()
            raw[1:] += vec
            vraw = np.zeros_like(raw)
            vraw[1:] = dvec
            nrm = np.sqrt(np.sum(raw ** 2, axis=0))
            u = raw / nrm
            udot = vraw / nrm - np.sum(raw * vraw, axis=0) / nrm ** 3 * raw
            return MapState(u, udot, t, grid)

        dt = grid.dt
        window = []
        prev = None
        for j in range(-2, 3):
            sl = Slice(j, sample(t0 + j * dt))
            _gauge_fix(sl, prev, metric, config)
            prev = sl
            window.append(sl)
        diag = window_diagnostics(window, metric, dt, with_elliptic=False, with_monitor=False)
        out.append({"r_delta": diag["r_delta"], "r_d": diag["r_d"]})
        hs.append(grid.h[0])
    return {"h": hs, "levels": out,
            "orders": {k: dict(zip(("order", "r2"), fit_order(hs, [o[k] for o in out])))
                       for k in ("r_delta", "r_d")}}


def twin_runs(config, steps, perturbation=1e-3):
    """Deterministic twin run and a perturbed run over ``steps`` steps.

    Returns the max difference between identical twins, and for the perturbed
    pair the energy-norm distance ``||d(u - v)||(t)`` with the integrated
    Strichartz-type weight ``I(t) = int_0^t (||du||_{L^8}^2 + ||dv||_{L^8}^2)``.
    """
    cfg = config.replace(t_end=steps * config.time_step, diag_gauge=False, diag_elliptic=False,
                         diag_norms=False, output_dir=None)
    grid = cfg.grid()
    metric = build_metric(grid, cfg.profile())
    s_a = initial_state(cfg, grid)
    s_b = s_a.copy()
    pert = _profile_state(perturbation, *_bump_shape(cfg.replace(data_family="small-bump"),
                                                     grid, None), grid)
    s_c = MapState.from_arrays(s_a.u + (pert.u - _base(grid)), s_a.udot + pert.udot, 0.0, grid)
    dt = cfg.time_step
    w = np.full(grid.shape, grid.cell_volume)

    def l8(st):
        return analysis.lp_norm(analysis.pointwise_magnitude(differential(st, grid), grid), 8, w)

    ts, dist, integ = [0.0], [evolve.energy_norm_difference(s_a, s_c, metric)], [0.0]
    acc = 0.0
    prev_w = l8(s_a) ** 2 + l8(s_c) ** 2
    for k in range(1, steps + 1):
        s_a = evolve.step(s_a, metric, dt, cfg.integrator, True, k)
        s_b = evolve.step(s_b, metric, dt, cfg.integrator, True, k)
        s_c = evolve.step(s_c, metric, dt, cfg.integrator, True, k)
        cur_w = l8(s_a) ** 2 + l8(s_c) ** 2
        acc += 0.5 * dt * (prev_w + cur_w)
        prev_w = cur_w
        ts.append(k * dt)
        dist.append(evolve.energy_norm_difference(s_a, s_c, metric))
        integ.append(acc)
    twin = float(max(np.max(np.abs(s_a.u - s_b.u)), np.max(np.abs(s_a.udot - s_b.udot))))
    return {"twin_difference": twin, "t": np.array(ts), "distance": np.array(dist),
            "weight": np.array(integ)}


def _base(grid):
    b = np.zeros((4,) + grid.shape)
    b[0] = 1.0
    return b


def gronwall_constant(t, distance, weight, floor=1e-12):
    """Smallest ``C`` with ``distance(t) <= distance(0) exp(C weight(t))`` on the samples."""
    d0 = distance[0]
    ok = weight > floor
    if not np.any(ok):
        return 0.0
    vals = np.log(np.maximum(distance[ok], 1e-300) / d0) / weight[ok]
    return float(max(0.0, np.max(vals)))


def h2_growth_constant(rows):
    """Smallest ``C`` with ``Dq(t) <= Dq(0) exp(C (int ||q||_{L^8}^2 + t))`` over recorded rows."""
    t = np.array([r["t"] for r in rows])
    dq = np.array([r["Dq_sq"] for r in rows])
    l8 = np.array([r["du_L8"] for r in rows])
    if dq[0] <= 0:
        return float("nan")
    integ = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(t) * (l8[1:] ** 2 + l8[:-1] ** 2))])
    weight = integ + t
    ok = weight > 0
    vals = np.log(dq[ok] / dq[0]) / weight[ok]
    return float(max(0.0, np.max(vals))) if vals.size else 0.0
