"""Heterogeneous restricted additive Schwarz co-simulation of an EMT and a TS subdomain.

Each subdomain solves its own unknowns for one macro step given the values of
its interface variables, which are owned by the other subdomain:

* an EMT subdomain marches ``m`` micro steps; its interface input is either
  the DP coordinates computed by a TS neighbour (turned into waveforms by
  :func:`ts_to_emt`) or raw samples from an EMT neighbour;
* a TS subdomain takes one dynamic-phasor step; its interface input is the DP
  value of the candidate sliding history of an EMT neighbour, or DP
  coordinates of a TS neighbour.

The interface inputs are the unknowns of the fixed-point iteration. Because
every operation is affine, consecutive iterate differences obey
``e^{k+1} = P e^k`` and Aitken's formula yields the fixed point directly.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as sla

from .aitken import (
    EigenvalueOne,
    ErrorOperator,
    InterfaceTrace,
    NonConstructible,
    accelerate,
    fit_operator,
)
from .dae import DPConfig, Trajectory, discretize, dp_expand, recombine, steady_state
from .netlist import LinearDAE
from .partition import LocalOperators, Partition, build_local_operators, fan_out
from .translate import SlidingHistory, emt_to_ts, new_history, push_history, ts_to_emt, window_sizes

log = logging.getLogger(__name__)

ACCELS = ("none", "aitken")
TARGETS = ("ts_interface", "full_interface")
RECOMPUTE = ("first_step", "every_step")
INIT_MODES = ("emt_steady", "ts_interpolated")


class CosimError(RuntimeError):
    pass


@dataclass(frozen=True)
class CosimConfig:
    dt_emt: float
    dt_ts: float
    t_end: float
    alpha: int = 0
    tol: float = 1e-10
    k_max: int = 100
    accel: str = "aitken"
    accel_target: str = "ts_interface"
    recompute_operator: str = "first_step"
    init_mode: str = "emt_steady"
    harmonics: tuple[int, ...] = (0, 1)

    def __post_init__(self):
        if not (self.dt_emt > 0 and self.dt_ts > 0 and self.t_end >= 0):
            raise ValueError("steps must be positive and t_end nonnegative")
        for name, allowed in (
            ("accel", ACCELS),
            ("accel_target", TARGETS),
            ("recompute_operator", RECOMPUTE),
            ("init_mode", INIT_MODES),
        ):
            if getattr(self, name) not in allowed:
                raise ValueError(f"{name} must be one of {allowed}, got {getattr(self, name)!r}")
        if self.k_max < 1:
            raise ValueError("k_max must be at least 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        m = self.dt_ts / self.dt_emt
        if abs(m - round(m)) > 1e-6 * m or round(m) < 1:
            raise ValueError(f"dt_ts/dt_emt = {m:g} is not a positive integer")
        if not 0 <= self.alpha <= round(m):
            raise ValueError(f"alpha must lie in [0, m={round(m)}]")
        n = self.t_end / self.dt_ts
        if abs(n - round(n)) > 1e-9 * max(1.0, n):
            raise ValueError(f"dt_ts={self.dt_ts} does not divide t_end={self.t_end}")

    @property
    def m(self) -> int:
        return int(round(self.dt_ts / self.dt_emt))

    @property
    def n_macro(self) -> int:
        return int(round(self.t_end / self.dt_ts))


# ---------------------------------------------------------------------------
# subdomains


@dataclass
class SubState:
    """Committed values of one subdomain at the current macro time."""

    z: np.ndarray  # EMT: local unknowns at T^N; TS: local DP coordinates w^N
    ze: np.ndarray  # interface value at T^N (EMT: samples, TS: DP coordinates)
    w_prev_e: np.ndarray | None = None  # EMT next to TS: committed DP of the interface
    hist: SlidingHistory | None = None  # TS next to EMT: sliding history of the interface


class Subdomain:
    def __init__(self, index: int, name: str, ops: LocalOperators, other: LocalOperators, eng: "Engine"):
        self.index = index
        self.name = name
        self.ops = ops
        self.model = ops.model
        self.other_model = other.model
        self.eng = eng
        cw = eng.dp.coords_per_var
        # position of our interface variables inside the other subdomain's solution
        if other.model == "ts":
            self.pick = np.searchsorted(other.rows, fan_out(ops.interface, cw))
        else:
            self.pick = np.searchsorted(other.variables, ops.interface)
        self.n_ie_vars = len(ops.interface)

    @property
    def dp_input(self) -> bool:
        return self.other_model == "ts" or self.model == "ts"

    def input_width(self) -> int:
        if self.dp_input:
            return self.n_ie_vars * self.eng.dp.coords_per_var
        return self.n_ie_vars * self.eng.m

    def frame(self, T: float) -> np.ndarray:
        """Rotation taking the input's linear dynamics to the time origin."""
        if self.dp_input:
            return self.eng.dp.rotation(self.n_ie_vars, T)
        return np.eye(self.input_width())

    def initial_input(self, st: SubState) -> np.ndarray:
        if self.model == "emt" and self.other_model == "ts":
            return st.w_prev_e.copy()
        if self.model == "emt":
            return np.tile(st.ze, self.eng.m)
        return st.ze.copy()

    def boundary_samples(self, st: SubState, u: np.ndarray, N: int) -> np.ndarray:
        """Interface waveform (m, n_ie) seen by an EMT subdomain."""
        if self.other_model == "ts":
            return ts_to_emt(st.w_prev_e, u, self.eng.cfg.alpha, self.eng.micro_times(N), self.eng.dp)
        return np.asarray(u).reshape(self.eng.m, self.n_ie_vars)

    def solve(self, st: SubState, u: np.ndarray, N: int) -> np.ndarray:
        ops, eng = self.ops, self.eng
        if self.model == "ts":
            g = eng.ts_source
            return ops.step(st.z, st.ze, u, g)
        ze = self.boundary_samples(st, u, N) if ops.n_ie else np.zeros((eng.m, 0))
        out = np.empty((eng.m, ops.n_i))
        z, zp = st.z, st.ze
        source = ops.system.source
        for l in range(eng.m):
            z = ops.step(z, zp, ze[l], source((N * eng.m + l + 1) * eng.cfg.dt_emt))
            out[l] = z
            zp = ze[l]
        return out

    def consume(self, st: SubState, other_out: np.ndarray) -> np.ndarray:
        """Interface input of this subdomain from the other's solve output."""
        if self.other_model == "ts":
            return other_out[self.pick]
        samples = other_out[:, self.pick]
        if self.model == "emt":
            return samples.reshape(-1)
        return emt_to_ts(push_history(st.hist, samples), self.eng.dp)

    def commit(self, st: SubState, u: np.ndarray, out: np.ndarray, other_out: np.ndarray | None, N: int) -> SubState:
        if self.model == "ts":
            new = replace(st, z=out, ze=np.asarray(u, dtype=float).copy())
            if self.other_model == "emt" and other_out is not None:
                new.hist = push_history(st.hist, other_out[:, self.pick])
            return new
        if not self.ops.n_ie:
            return replace(st, z=out[-1].copy())
        ze = self.boundary_samples(st, u, N)
        new = replace(st, z=out[-1].copy(), ze=ze[-1].copy())
        if self.other_model == "ts":
            new.w_prev_e = np.asarray(u, dtype=float).copy()
        return new


# ---------------------------------------------------------------------------
# engine and state


class Engine:
    """Immutable setup shared by every macro step: local operators and subdomains."""

    def __init__(self, dae: LinearDAE, partition: Partition, cfg: CosimConfig):
        if partition.n_subsets not in (1, 2):
            raise CosimError("co-simulation supports one or two subsets")
        self.dae = dae
        self.partition = partition
        self.cfg = cfg
        self.dp = DPConfig(dae.omega0, tuple(cfg.harmonics))
        self.m = cfg.m
        models = set(partition.models)
        if "emt" in models and "ts" in models:
            self.m, self.m_tilde = window_sizes(cfg.dt_emt, cfg.dt_ts, dae.omega0)
        else:
            self.m_tilde = int(round(2 * math.pi / dae.omega0 / cfg.dt_emt))
        systems = {}
        if "emt" in models:
            systems["emt"] = discretize(dae, cfg.dt_emt)
        if "ts" in models:
            systems["ts"] = discretize(dp_expand(dae, self.dp), self.m * cfg.dt_emt)
            self.ts_source = systems["ts"].source(0.0)
        self.ops = build_local_operators(partition, systems, self.dp)
        counts = {mdl: partition.models.count(mdl) for mdl in models}
        names = [mdl if counts[mdl] == 1 else f"{mdl}{i}" for i, mdl in enumerate(partition.models)]
        if len(self.ops) == 1:
            self.subs = [Subdomain(0, names[0], self.ops[0], self.ops[0], self)]
        else:
            self.subs = [
                Subdomain(i, names[i], self.ops[i], self.ops[1 - i], self) for i in range(2)
            ]
        # the staggered sweep starts from the EMT subdomain's input
        self.lead = next((i for i, s in enumerate(self.subs) if s.model == "emt"), 0)

    def micro_times(self, N: int) -> np.ndarray:
        return (N * self.m + np.arange(1, self.m + 1)) * self.cfg.dt_emt

    def macro_time(self, N: int) -> float:
        return N * self.m * self.cfg.dt_emt


@dataclass
class CosimState:
    N: int
    subs: list[SubState]
    operator: ErrorOperator | None = None  # reference-frame operator (T = 0)
    trace: InterfaceTrace | None = None
    outputs: list | None = None  # solve outputs committed by the last macro step

    def copy(self) -> "CosimState":
        return CosimState(self.N, list(self.subs), self.operator)


def _history_times(m_tilde: int, dt: float) -> np.ndarray:
    return (np.arange(m_tilde) - m_tilde + 1) * dt


def init_cosim(dae: LinearDAE, partition: Partition, cfg: CosimConfig, engine: Engine | None = None):
    """Engine plus the state at T^0 built from the phasor steady state over one period."""
    eng = engine or Engine(dae, partition, cfg)
    Z = steady_state(dae)
    t_hist = _history_times(eng.m_tilde, cfg.dt_emt)
    if cfg.init_mode == "emt_steady":
        full = np.real(np.outer(np.exp(1j * dae.omega0 * t_hist), Z))
    else:
        # coarse grid covering the window, ending at T^0 = 0
        n_back = int(math.ceil((eng.m_tilde * cfg.dt_emt) / cfg.dt_ts - 1e-9))
        t_coarse = np.arange(-n_back, 1) * cfg.dt_ts
        coarse = np.real(np.outer(np.exp(1j * dae.omega0 * t_coarse), Z))
        full = np.column_stack([np.interp(t_hist, t_coarse, coarse[:, v]) for v in range(dae.n)])
    def dp_of(vars_idx):
        h = new_history(full[:, vars_idx], eng.m, cfg.dt_emt)
        return emt_to_ts(h, eng.dp)

    states = []
    for sub in eng.subs:
        ops = sub.ops
        if sub.model == "ts":
            z = dp_of(ops.variables)
            ze = dp_of(ops.interface)
            st = SubState(z, ze)
            if sub.other_model == "emt" and len(eng.subs) == 2:
                st.hist = new_history(full[:, ops.interface], eng.m, cfg.dt_emt)
        else:
            z = full[-1, ops.variables].copy()
            ze = full[-1, ops.interface].copy()
            st = SubState(z, ze)
            if sub.other_model == "ts" and len(eng.subs) == 2:
                st.w_prev_e = dp_of(ops.interface)
        states.append(st)
    return eng, CosimState(0, states)


# ---------------------------------------------------------------------------
# sweeps


def ras_sweep(eng: Engine, state: CosimState, inputs: list[np.ndarray]):
    """One additive (Jacobi) sweep: both subdomains read iterate-k inputs only.

    Returns the new inputs and the two solve outputs.
    """
    N = state.N
    outs = [sub.solve(st, u, N) for sub, st, u in zip(eng.subs, state.subs, inputs)]
    new = [eng.subs[0].consume(state.subs[0], outs[1]), eng.subs[1].consume(state.subs[1], outs[0])]
    return new, outs


def staggered_sweep(eng: Engine, state: CosimState, u_lead: np.ndarray):
    """Lead subdomain solves from ``u_lead``; the other solves from that output.

    Returns the lead's next input and ``(outputs, inputs)`` of both solves.
    """
    a = eng.lead
    b = 1 - a
    N = state.N
    out_a = eng.subs[a].solve(state.subs[a], u_lead, N)
    u_b = eng.subs[b].consume(state.subs[b], out_a)
    out_b = eng.subs[b].solve(state.subs[b], u_b, N)
    u_next = eng.subs[a].consume(state.subs[a], out_b)
    outs = [None, None]
    ins = [None, None]
    outs[a], outs[b] = out_a, out_b
    ins[a], ins[b] = u_lead, u_b
    return u_next, (outs, ins)


def _rel_change(new: np.ndarray, old: np.ndarray, scale: float = 1.0) -> float:
    """Max-norm change relative to a per-step scale (the committed interface value)."""
    if new.size == 0:
        return 0.0
    return float(np.max(np.abs(new - old)) / scale)


@dataclass
class StepReport:
    N: int
    sweeps: int
    converged: bool
    accelerated: bool
    operator_built: bool
    residual: float
    log: list[tuple[int, int, str, float]] = field(default_factory=list)


class _Iteration:
    """Fixed-point map on the chosen interface vector for one macro step."""

    def __init__(self, eng: Engine, state: CosimState, target: str):
        self.eng, self.state, self.target = eng, state, target
        self.staggered = target == "ts_interface"
        a = eng.lead
        if self.staggered:
            self.u0 = eng.subs[a].initial_input(state.subs[a])
            self.parts = [(eng.subs[1 - a].name, slice(0, self.u0.size))]
        else:
            ins = [s.initial_input(st) for s, st in zip(eng.subs, state.subs)]
            self.split = ins[0].size
            self.u0 = np.concatenate(ins)
            # input i is produced by subdomain 1 - i
            self.parts = [
                (eng.subs[1].name, slice(0, self.split)),
                (eng.subs[0].name, slice(self.split, self.u0.size)),
            ]

        self.scale = max(1.0, float(np.max(np.abs(self.u0), initial=0.0)))

    def frame(self) -> np.ndarray:
        T = self.eng.macro_time(self.state.N)
        if self.staggered:
            return self.eng.subs[self.eng.lead].frame(T)
        return sla.block_diag(*(s.frame(T) for s in self.eng.subs))

    def __call__(self, u: np.ndarray):
        """Next iterate and the (outputs, inputs) that produced it."""
        if self.staggered:
            return staggered_sweep(self.eng, self.state, u)
        ins = [u[: self.split], u[self.split:]]
        new, outs = ras_sweep(self.eng, self.state, ins)
        return np.concatenate(new), (outs, ins)


def macro_step(eng: Engine, state: CosimState, P: ErrorOperator | None = None):
    """Advance one macro step; returns the new state and a :class:`StepReport`."""
    cfg = eng.cfg
    N = state.N
    if len(eng.subs) == 1:
        sub, st = eng.subs[0], state.subs[0]
        out = sub.solve(st, np.zeros(0), N)
        new = state.copy()
        new.subs = [sub.commit(st, np.zeros(0), out, None, N)]
        new.N = N + 1
        new.outputs = [out]
        return new, StepReport(N, 1, True, False, False, 0.0)

    it = _Iteration(eng, state, cfg.accel_target)
    report = StepReport(N, 0, False, False, False, math.nan)
    trace = InterfaceTrace(cfg.accel_target)
    trace.append(it.u0)
    u = it.u0
    P = P if P is not None else state.operator
    P_ref = P

    def record(u_new, u_old):
        k = report.sweeps
        for name, sl in it.parts:
            report.log.append((N, k, name, _rel_change(u_new[sl], u_old[sl], it.scale)))

    result = None
    if u.size == 0:
        # nothing flows back to the lead subdomain: one sweep is exact
        u_new, produced = it(u)
        report.sweeps, report.converged, report.residual = 1, True, 0.0
        result = (u, produced)
    elif cfg.accel == "aitken":
        # a reduced operator only spans the previous step's error directions
        need = P is None or cfg.recompute_operator == "every_step" or P.rank is not None
        n_sweeps = u.size + 1 if need else 1
        for _ in range(n_sweeps):
            u_new, _ = it(u)
            report.sweeps += 1
            record(u_new, u)
            trace.append(u_new)
            u = u_new
        R = it.frame()
        try:
            if need:
                P_now = fit_operator(trace, N)
                report.operator_built = True
                P_ref = replace(P_now, P=R @ P_now.P @ R.T, _eig=None)
            else:
                P_now = ErrorOperator(R.T @ P.P @ R, P.built_at, rank=P.rank)
            z_prev, z_last = trace.iterates[-2], trace.iterates[-1]
            while True:
                z_inf = accelerate(P_now, z_last, z_prev)
                u_final, produced = it(z_inf)
                report.sweeps += 1
                record(u_final, z_inf)
                report.residual = _rel_change(u_final, z_inf, it.scale)
                report.accelerated = True
                result = (z_inf, produced)
                report.converged = report.residual < max(cfg.tol, 1e-8)
                if report.converged or report.sweeps >= cfg.k_max or not np.isfinite(report.residual):
                    break
                if not need:
                    log.info("macro step %d: reused operator left residual %.3g; rebuilding", N, report.residual)
                    new, rep = macro_step(eng, replace(state, operator=None), None)
                    rep.sweeps += report.sweeps
                    rep.log[:0] = report.log
                    return new, rep
                # modes outside the fitted span: extrapolate again from the newest pair
                z_prev, z_last = z_inf, u_final
        except (NonConstructible, EigenvalueOne) as exc:
            log.warning("macro step %d: acceleration unavailable (%s); plain iteration", N, exc)
            report.accelerated = False
            report.operator_built = False
            P_ref = None
            result = None

    if result is None:
        # plain fixed point from the latest iterate
        produced = None
        u_prev = u
        while report.sweeps < cfg.k_max or produced is None:
            u_new, produced = it(u_prev)
            report.sweeps += 1
            record(u_new, u_prev)
            trace.append(u_new)
            err = _rel_change(u_new, u_prev, it.scale)
            report.residual = err
            if err < cfg.tol or not np.all(np.isfinite(u_new)):
                report.converged = bool(np.isfinite(err))
                result = (u_prev, produced)
                break
            result = (u_prev, produced)
            u_prev = u_new
        if not report.converged:
            log.warning("macro step %d: no convergence after %d sweeps", N, report.sweeps)

    _u, (outs, ins) = result
    new = state.copy()
    new.subs = [
        sub.commit(st, ins[i], outs[i], outs[1 - i], N)
        for i, (sub, st) in enumerate(zip(eng.subs, state.subs))
    ]
    new.N = N + 1
    new.operator = P_ref
    new.trace = trace
    new.outputs = outs
    return new, report


# ---------------------------------------------------------------------------
# driver


@dataclass
class CosimResult:
    trajectories: dict[str, Trajectory]
    assembled: Trajectory
    log: list[tuple[int, int, str, float]]
    reports: list[StepReport]
    operator: ErrorOperator | None
    first_trace: InterfaceTrace | None

    @property
    def summary(self) -> dict:
        return {
            "steps": len(self.reports),
            "sweeps_per_step": [r.sweeps for r in self.reports],
            "operator_builds": sum(r.operator_built for r in self.reports),
            "nonconverged_steps": [r.N for r in self.reports if not r.converged],
        }

    def write_log(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("N,k,subdomain,linf_error\n")
            for N, k, name, err in self.log:
                fh.write(f"{N},{k},{name},{err:.17g}\n")


def _assembled_row(eng: Engine, state: CosimState, N: int, outs) -> np.ndarray:
    """Micro-step values of all variables, each taken from its owning subdomain."""
    own = eng.partition.owner()
    rows = np.empty((eng.m, eng.dae.n))
    cw = eng.dp.coords_per_var
    for i, sub in enumerate(eng.subs):
        mine = np.flatnonzero(own == i)
        loc = np.searchsorted(sub.ops.variables, mine)
        if sub.model == "emt":
            rows[:, mine] = outs[i][:, loc]
        else:
            st = state.subs[i]
            prev = st.z.reshape(-1, cw)[loc].reshape(-1)
            nxt = outs[i].reshape(-1, cw)[loc].reshape(-1)
            rows[:, mine] = ts_to_emt(prev, nxt, eng.cfg.alpha, eng.micro_times(N), eng.dp)
    return rows


def run(dae: LinearDAE, partition: Partition, cfg: CosimConfig) -> CosimResult:
    eng, state = init_cosim(dae, partition, cfg)
    micro = any(s.model == "emt" for s in eng.subs)
    names = [s.name for s in eng.subs]
    cw = eng.dp.coords_per_var
    series = {nm: [st.z.copy()] for nm, st in zip(names, state.subs)}
    times = {nm: [0.0] for nm in names}
    t0_full = np.empty(dae.n)
    own = partition.owner()
    for i, sub in enumerate(eng.subs):
        mine = np.flatnonzero(own == i)
        loc = np.searchsorted(sub.ops.variables, mine)
        if sub.model == "emt":
            t0_full[mine] = state.subs[i].z[loc]
        else:
            t0_full[mine] = recombine(state.subs[i].z.reshape(-1, cw)[loc].reshape(-1), 0.0, eng.dp)
    asm_rows = [t0_full[None, :]]
    asm_times = [np.array([0.0])]
    reports = []
    all_log = []
    first_trace = None
    operator = None

    for N in range(cfg.n_macro):
        prev = state
        state, rep = macro_step(eng, state, state.operator)
        reports.append(rep)
        all_log.extend(rep.log)
        if first_trace is None:
            first_trace = state.trace
        if operator is None and state.operator is not None:
            operator = state.operator
        for nm, sub, out in zip(names, eng.subs, state.outputs):
            if sub.model == "emt":
                series[nm].extend(out)
                times[nm].extend(eng.micro_times(N))
            else:
                series[nm].append(out)
                times[nm].append(eng.macro_time(N + 1))
        if micro:
            asm_rows.append(_assembled_row(eng, prev, N, state.outputs))
            asm_times.append(eng.micro_times(N))
        else:
            full = np.empty(dae.n)
            for i, sub in enumerate(eng.subs):
                mine = np.flatnonzero(own == i)
                loc = np.searchsorted(sub.ops.variables, mine)
                full[mine] = recombine(state.subs[i].z.reshape(-1, cw)[loc].reshape(-1), eng.macro_time(N + 1), eng.dp)
            asm_rows.append(full[None, :])
            asm_times.append(np.array([eng.macro_time(N + 1)]))

    trajs = {}
    for nm, sub in zip(names, eng.subs):
        labs = [dae.labels[v] for v in sub.ops.variables]
        if sub.model == "ts":
            labs = [f"{lab}.{c}" for lab in labs for c in eng.dp.coord_names()]
        trajs[nm] = Trajectory(np.array(times[nm]), np.array(series[nm]), labs)
    assembled = Trajectory(np.concatenate(asm_times), np.vstack(asm_rows), list(dae.labels))
    return CosimResult(trajs, assembled, all_log, reports, operator, first_trace)


def interface_trace(
    dae: LinearDAE,
    partition: Partition,
    cfg: CosimConfig,
    sweeps: int | None = None,
    step: int = 0,
    u_start: np.ndarray | None = None,
) -> InterfaceTrace:
    """Plain-iteration interface iterates of macro step ``step``.

    Earlier steps are advanced with ``cfg`` as given. The iteration starts from
    ``u_start`` or the usual initial guess. ``sweeps`` defaults to ``n_Gamma + 1``,
    the number needed to fit the error operator.
    """
    eng, state = init_cosim(dae, partition, cfg)
    for _ in range(step):
        state, _rep = macro_step(eng, state)
    if len(eng.subs) < 2:
        raise CosimError("a single subset has no interface")
    it = _Iteration(eng, state, cfg.accel_target)
    u = it.u0 if u_start is None else np.asarray(u_start, dtype=float).reshape(it.u0.shape)
    trace = InterfaceTrace(cfg.accel_target, [u])
    for _ in range(u.size + 1 if sweeps is None else sweeps):
        u, _ = it(u)
        if not np.all(np.isfinite(u)):
            raise NonConstructible("interface iterates overflowed")
        trace.append(u)
    return trace


def error_operator(dae: LinearDAE, partition: Partition, cfg: CosimConfig, step: int = 0) -> ErrorOperator:
    """Error operator fitted from the first ``n_Gamma + 1`` sweeps of macro step ``step``."""
    return fit_operator(interface_trace(dae, partition, cfg, step=step), step)
