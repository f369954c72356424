"""Command-line driver: monolithic runs, co-simulation, spectra, sweeps, comparisons.

Exit codes: 0 success, 2 usage or configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .aitken import EigenvalueOne, NonConstructible
from .cosim import CosimConfig, CosimError, error_operator, run
from .dae import DPConfig, SingularSystemError, Trajectory, monolithic_simulate, reconstruct_ts
from .netlist import LinearDAE, NetlistError, SingularDAEError, assemble_dae, parse_netlist
from .partition import Partition, PartitionError, load_partition
from .translate import alpha_steps

log = logging.getLogger("hybridras")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3

DEFAULTS = {
    "tol": 1e-10,
    "k_max": 100,
    "harmonics": "0,1",
    "alpha": "0",
    "accel": "aitken",
    "accel_target": "ts_interface",
    "recompute_operator": "first_step",
    "init_mode": "emt_steady",
    "out_dir": ".",
}

# every key accepted in a config file
KEYS = {
    "netlist", "partition", "out_dir", "dt_emt", "dt_ts", "dt", "t_end", "alpha", "harmonics",
    "tol", "k_max", "accel", "accel_target", "recompute_operator", "init_mode", "model",
    "seed_note", "alphas", "dt_ts_list",
}


class ConfigError(ValueError):
    pass


class NumericalFailure(RuntimeError):
    pass


def read_config(path: str | Path) -> dict[str, str]:
    """Flat ``key = value`` file; ``#`` starts a comment."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    out: dict[str, str] = {}
    for lineno, raw in enumerate(p.read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{p}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in KEYS:
            raise ConfigError(f"{p}:{lineno}: unknown key {key!r}")
        out[key] = value
    return out


@dataclass
class RunConfig:
    values: dict[str, str] = field(default_factory=dict)

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> "RunConfig":
        merged = dict(DEFAULTS)
        if getattr(args, "config", None):
            merged.update(read_config(args.config))
        for key, value in vars(args).items():
            if key in KEYS and value is not None:
                merged[key] = str(value)
        return cls(merged)

    def get(self, key: str, default=None):
        return self.values.get(key, default)

    def require(self, key: str) -> str:
        if self.values.get(key) in (None, ""):
            raise ConfigError(f"missing required setting {key!r}")
        return self.values[key]

    def number(self, key: str) -> float:
        raw = self.require(key)
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"{key}: not a number: {raw!r}") from None

    def harmonics(self) -> tuple[int, ...]:
        try:
            return tuple(int(h) for h in self.require("harmonics").split(","))
        except ValueError:
            raise ConfigError("harmonics must be a comma-separated integer list") from None

    def alpha(self, m: int, raw: str | None = None) -> int:
        """Smoothing length in micro steps; a trailing ``%`` means a share of ``m``."""
        raw = (raw if raw is not None else self.require("alpha")).strip()
        try:
            if raw.endswith("%"):
                return alpha_steps(float(raw[:-1]), m)
            return int(raw)
        except ValueError as exc:
            raise ConfigError(f"alpha: {exc}") from None

    def cosim(self, dt_ts: float | None = None, t_end: float | None = None, alpha: str | None = None) -> CosimConfig:
        dt_emt = self.number("dt_emt")
        dt_ts = self.number("dt_ts") if dt_ts is None else dt_ts
        t_end = self.number("t_end") if t_end is None else t_end
        m = max(1, int(round(dt_ts / dt_emt)))
        try:
            return CosimConfig(
                dt_emt=dt_emt,
                dt_ts=dt_ts,
                t_end=t_end,
                alpha=self.alpha(m, alpha),
                tol=self.number("tol"),
                k_max=int(self.number("k_max")),
                accel=self.require("accel"),
                accel_target=self.require("accel_target"),
                recompute_operator=self.require("recompute_operator"),
                init_mode=self.require("init_mode"),
                harmonics=self.harmonics(),
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def echo(self) -> list[str]:
        return [f"# {k} = {self.values[k]}" for k in sorted(self.values)]


def _read_text(path: str, what: str) -> str:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"{what} file not found: {p}")
    return p.read_text()


def load_dae(cfg: RunConfig) -> LinearDAE:
    return assemble_dae(parse_netlist(_read_text(cfg.require("netlist"), "netlist")))


def load_split(cfg: RunConfig, dae: LinearDAE) -> Partition:
    return load_partition(_read_text(cfg.require("partition"), "partition"), dae)


def out_dir(cfg: RunConfig) -> Path:
    d = Path(cfg.require("out_dir"))
    d.mkdir(parents=True, exist_ok=True)
    return d


def _check_finite(*arrays) -> None:
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NumericalFailure("non-finite values in the solution")


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(cfg: RunConfig) -> int:
    dae = load_dae(cfg)
    model = cfg.get("model", "emt")
    if model not in ("emt", "ts"):
        raise ConfigError(f"model must be emt or ts, got {model!r}")
    dt = cfg.number("dt") if cfg.get("dt") else cfg.number("dt_emt" if model == "emt" else "dt_ts")
    t_end = cfg.number("t_end")
    dp = DPConfig(dae.omega0, cfg.harmonics())
    try:
        traj = monolithic_simulate(dae, model, dt, t_end, dp)
    except ValueError as exc:
        if isinstance(exc, SingularDAEError):
            raise
        raise ConfigError(str(exc)) from None
    _check_finite(traj.states)
    d = out_dir(cfg)
    traj.to_csv(d / f"{model}.csv")
    if model == "ts":
        wave = reconstruct_ts(traj, traj.times, dp, dt)
        Trajectory(traj.times, wave, list(dae.labels)).to_csv(d / "ts_waveform.csv")
    print(f"{model}: {len(traj.times)} rows -> {d / (model + '.csv')}")
    return EXIT_OK


def cmd_cosim(cfg: RunConfig) -> int:
    dae = load_dae(cfg)
    part = load_split(cfg, dae)
    res = run(dae, part, cfg.cosim())
    d = out_dir(cfg)
    for name, traj in res.trajectories.items():
        traj.to_csv(d / f"{name}.csv")
    res.assembled.to_csv(d / "assembled.csv")
    res.write_log(d / "convergence.csv")
    summary = dict(res.summary)
    if res.operator is not None:
        lam = res.operator.dominant_eigenvalue
        summary["dominant_eigenvalue"] = [lam.real, lam.imag]
    if cfg.get("seed_note"):
        summary["seed_note"] = cfg.get("seed_note")
    (d / "summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n")
    bad = summary["nonconverged_steps"]
    print(f"cosim: {summary['steps']} macro steps, {sum(summary['sweeps_per_step'])} sweeps, "
          f"{len(bad)} non-converged")
    # outputs are kept for inspection even when the iteration blew up
    _check_finite(res.assembled.states)
    return EXIT_OK


def _spectrum(dae, part, ccfg: CosimConfig) -> np.ndarray:
    op = error_operator(dae, part, ccfg)
    lam = np.linalg.eigvals(op.P)
    if not np.all(np.isfinite(lam)):
        raise NumericalFailure("non-finite eigenvalues")
    dom = op.dominant_eigenvalue
    # dominant first (conjugate with Im >= 0), then by decreasing modulus
    rest = sorted(lam, key=lambda z: (-abs(z), -z.imag))
    rest.remove(min(rest, key=lambda z: abs(z - dom)))
    return np.array([dom, *rest])


def _write_eigs(path: Path, header: list[str], lam: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        for line in header:
            fh.write(line + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["re_lambda", "im_lambda", "abs_lambda"])
        for z in lam:
            w.writerow([f"{z.real:.17g}", f"{z.imag:.17g}", f"{abs(z):.17g}"])


def cmd_spectrum(cfg: RunConfig) -> int:
    dae = load_dae(cfg)
    part = load_split(cfg, dae)
    dt_ts = cfg.number("dt_ts")
    ccfg = cfg.cosim(t_end=dt_ts)
    lam = _spectrum(dae, part, ccfg)
    d = out_dir(cfg)
    _write_eigs(d / "spectrum.csv", cfg.echo() + [f"# alpha_steps = {ccfg.alpha}"], lam)
    z = lam[0]
    print(f"dominant eigenvalue {z.real:+.6f}{z.imag:+.6f}i  |lambda| = {abs(z):.6f}")
    return EXIT_OK


def _float_list(raw: str, key: str) -> list[float]:
    try:
        vals = [float(x.strip().rstrip("%")) for x in raw.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"{key}: expected comma-separated numbers") from None
    if not vals:
        raise ConfigError(f"{key}: empty list")
    return vals


def cmd_sweep(cfg: RunConfig) -> int:
    dae = load_dae(cfg)
    part = load_split(cfg, dae)
    alphas = _float_list(cfg.get("alphas", "0,25,50,75"), "alphas")
    dts = _float_list(cfg.get("dt_ts_list", "2e-2,1.5e-2,1e-2,2e-3"), "dt_ts_list")
    d = out_dir(cfg)
    cells = []
    warnings = 0
    for pct in alphas:
        row = []
        for dt_ts in dts:
            note = ""
            try:
                ccfg = cfg.cosim(dt_ts=dt_ts, t_end=dt_ts, alpha=f"{pct}%")
                z = _spectrum(dae, part, ccfg)[0]
            except (NonConstructible, NumericalFailure, SingularSystemError, np.linalg.LinAlgError) as exc:
                z, note = complex(math.nan, math.nan), f"{type(exc).__name__}: {exc}"
                warnings += 1
            row.append(z)
            cells.append((pct, dt_ts, z, note))
        print(" ".join(f"{z.real:+.4f}{z.imag:+.4f}i" for z in row) + f"   alpha={pct:g}%")
    with open(d / "sweep.csv", "w", newline="") as fh:
        for line in cfg.echo():
            fh.write(line + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["alpha_percent", "dt_ts", "re_lambda", "im_lambda", "abs_lambda", "note"])
        for pct, dt_ts, z, note in cells:
            w.writerow([f"{pct:g}", f"{dt_ts:.17g}", f"{z.real:.17g}", f"{z.imag:.17g}", f"{abs(z):.17g}", note])
    with open(d / "sweep_matrix.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["alpha_percent \\ dt_ts", *(f"{x:g}" for x in dts)])
        for i, pct in enumerate(alphas):
            zs = [c[2] for c in cells[i * len(dts):(i + 1) * len(dts)]]
            w.writerow([f"{pct:g}", *(f"{z.real:.6g}{z.imag:+.6g}j" for z in zs)])
    if warnings:
        print(f"sweep: {warnings} cell(s) failed, recorded as NaN", file=sys.stderr)
    return EXIT_OK


def compare_trajectories(run_traj: Trajectory, ref: Trajectory, variables: list[str]) -> list[tuple[str, float, float]]:
    """Per-variable (linf, l2) errors on the run's time grid.

    Each run time is matched to the nearest reference time; matches farther than
    half the run's step are dropped.
    """
    missing = [v for v in variables if v not in run_traj.labels or v not in ref.labels]
    if missing:
        raise ConfigError(f"variables not found in both files: {missing}")
    lo, hi = max(run_traj.times[0], ref.times[0]), min(run_traj.times[-1], ref.times[-1])
    if lo > hi:
        raise ConfigError("time ranges do not overlap")
    t = run_traj.times
    step = np.min(np.diff(t)) if len(t) > 1 else np.inf
    j = np.clip(np.searchsorted(ref.times, t), 0, len(ref.times) - 1)
    jm = np.clip(j - 1, 0, len(ref.times) - 1)
    j = np.where(np.abs(ref.times[jm] - t) <= np.abs(ref.times[j] - t), jm, j)
    keep = np.abs(ref.times[j] - t) <= step / 2 + 1e-12 * max(1.0, abs(t[-1]))
    if not keep.any():
        raise ConfigError("no common time points")
    out = []
    for v in variables:
        diff = run_traj.column(v)[keep] - ref.column(v)[j[keep]]
        out.append((v, float(np.max(np.abs(diff))), float(np.sqrt(np.mean(diff ** 2)))))
    return out


def cmd_compare(cfg: RunConfig, run_csv: str, ref_csv: str, variables: list[str] | None) -> int:
    for p in (run_csv, ref_csv):
        if not Path(p).is_file():
            raise ConfigError(f"file not found: {p}")
    try:
        a, b = Trajectory.from_csv(run_csv), Trajectory.from_csv(ref_csv)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    names = variables or [lab for lab in a.labels if lab in b.labels]
    if not names:
        raise ConfigError("no shared variables")
    rows = compare_trajectories(a, b, names)
    d = out_dir(cfg)
    with open(d / "compare.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["variable", "linf", "l2"])
        for v, linf, l2 in rows:
            w.writerow([v, f"{linf:.17g}", f"{l2:.17g}"])
    for v, linf, l2 in rows:
        print(f"{v:>10s}  linf {linf:.6e}  l2 {l2:.6e}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--netlist")
    p.add_argument("--partition")
    p.add_argument("--config", help="flat 'key = value' file; flags override it")
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--dt-emt", dest="dt_emt", type=float)
    p.add_argument("--dt-ts", dest="dt_ts", type=float)
    p.add_argument("--t-end", dest="t_end", type=float)
    p.add_argument("--alpha", help="micro steps, or a percentage of m such as 25%%")
    p.add_argument("--harmonics", help="comma-separated harmonic orders, default 0,1")
    p.add_argument("--tol", type=float)
    p.add_argument("--k-max", dest="k_max", type=int)
    p.add_argument("--accel", choices=("none", "aitken"))
    p.add_argument("--accel-target", dest="accel_target", choices=("ts_interface", "full_interface"))
    p.add_argument("--recompute-operator", dest="recompute_operator", choices=("first_step", "every_step"))
    p.add_argument("--init-mode", dest="init_mode", choices=("emt_steady", "ts_interpolated"))
    p.add_argument("--seed-note", dest="seed_note", help="free text echoed into outputs (runs are deterministic)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    ap = argparse.ArgumentParser(prog="hybridras", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    s = sub.add_parser("simulate", parents=[common], help="monolithic EMT or TS run")
    s.add_argument("--model", choices=("emt", "ts"))
    s.add_argument("--dt", type=float, help="step of the chosen model")
    sub.add_parser("cosim", parents=[common], help="heterogeneous co-simulation")
    sub.add_parser("spectrum", parents=[common], help="error operator eigenvalues at the first macro step")
    s = sub.add_parser("sweep", parents=[common], help="dominant eigenvalue over alpha x dt_ts")
    s.add_argument("--alphas", help="percentages, default 0,25,50,75")
    s.add_argument("--dt-ts-list", dest="dt_ts_list", help="default 2e-2,1.5e-2,1e-2,2e-3")
    s = sub.add_parser("compare", parents=[common], help="per-variable errors between two CSV runs")
    s.add_argument("run_csv")
    s.add_argument("reference_csv")
    s.add_argument("--variables", help="comma-separated labels; default all shared")
    return ap


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(message)s")
    try:
        cfg = RunConfig.from_args(args)
        if args.command == "simulate":
            return cmd_simulate(cfg)
        if args.command == "cosim":
            return cmd_cosim(cfg)
        if args.command == "spectrum":
            return cmd_spectrum(cfg)
        if args.command == "sweep":
            return cmd_sweep(cfg)
        variables = [v.strip() for v in args.variables.split(",")] if args.variables else None
        return cmd_compare(cfg, args.run_csv, args.reference_csv, variables)
    except (SingularDAEError, SingularSystemError, NonConstructible, EigenvalueOne, NumericalFailure,
            CosimError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, NetlistError, PartitionError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
