"""Backward-Euler discretisation, dynamic-phasor expansion and monolithic solvers."""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as sla

from .netlist import LinearDAE


class SingularSystemError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class DPConfig:
    omega0: float = 2.0 * math.pi * 50.0
    harmonics: tuple[int, ...] = (0, 1)

    def __post_init__(self):
        h = tuple(self.harmonics)
        if list(h) != sorted(set(h)) or any(k < 0 for k in h):
            raise ValueError(f"harmonics must be sorted, distinct and nonnegative: {h}")
        object.__setattr__(self, "harmonics", h)

    @property
    def coords_per_var(self) -> int:
        return 2 * len(self.harmonics) - (1 if 0 in self.harmonics else 0)

    def coord_names(self) -> list[str]:
        names = []
        for k in self.harmonics:
            names.append(f"re{k}")
            if k != 0:
                names.append(f"im{k}")
        return names

    def to_complex(self, coords: np.ndarray) -> np.ndarray:
        """(..., n_var * cw) real coordinates -> (..., n_var, |I|) complex coefficients."""
        cw = self.coords_per_var
        c = np.asarray(coords).reshape(*np.shape(coords)[:-1], -1, cw)
        out = np.empty(c.shape[:-1] + (len(self.harmonics),), dtype=complex)
        j = 0
        for h, k in enumerate(self.harmonics):
            if k == 0:
                out[..., h] = c[..., j]
                j += 1
            else:
                out[..., h] = c[..., j] + 1j * c[..., j + 1]
                j += 2
        return out

    def from_complex(self, coeffs: np.ndarray) -> np.ndarray:
        """Inverse of :meth:`to_complex`; harmonic-0 imaginary parts are dropped."""
        coeffs = np.asarray(coeffs)
        parts = []
        for h, k in enumerate(self.harmonics):
            parts.append(coeffs[..., h].real)
            if k != 0:
                parts.append(coeffs[..., h].imag)
        return np.stack(parts, axis=-1).reshape(*coeffs.shape[:-2], -1)

    def rotation(self, n_var: int, tau: float) -> np.ndarray:
        """Real matrix multiplying each harmonic k by e^{j k w0 tau}."""
        blk = []
        for k in self.harmonics:
            if k == 0:
                blk.append(np.ones((1, 1)))
            else:
                c, s = math.cos(k * self.omega0 * tau), math.sin(k * self.omega0 * tau)
                blk.append(np.array([[c, -s], [s, c]]))
        one = sla.block_diag(*blk)
        return np.kron(np.eye(n_var), one)


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    labels: list[str]

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states, dtype=float)
        if self.states.shape[0] != self.times.shape[0]:
            raise ValueError("row count must equal time count")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")

    def column(self, label: str) -> np.ndarray:
        return self.states[:, self.labels.index(label)]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", *self.labels])
            for t, row in zip(self.times, self.states):
                w.writerow([f"{t:.17g}", *(f"{x:.17g}" for x in row)])

    @classmethod
    def from_csv(cls, path) -> "Trajectory":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        if not header or header[0] != "t":
            raise ValueError(f"{path}: first column must be 't'")
        data = np.array([[float(x) for x in r] for r in body], dtype=float).reshape(len(body), len(header))
        return cls(data[:, 0], data[:, 1:], header[1:])


class DiscreteSystem:
    """Backward-Euler matrix ``A_tilde = E + S A`` with ``S = dt`` on differential rows.

    One step solves ``A_tilde z1 = E z0 + S G(t1)``.
    """

    def __init__(self, mass: np.ndarray, A: np.ndarray, dt: float, source: Callable[[float], np.ndarray]):
        if not dt > 0:
            raise ValueError("dt must be positive")
        self.mass = mass
        self.A = A
        self.dt = dt
        self.source = source
        diff = np.any(mass != 0.0, axis=1)
        self.row_scale = np.where(diff, dt, 1.0)
        self.A_tilde = mass + self.row_scale[:, None] * A
        self._lu = lu_factor_checked(self.A_tilde)

    @property
    def n(self) -> int:
        return self.A_tilde.shape[0]

    def rhs(self, z_n: np.ndarray, g_next: np.ndarray) -> np.ndarray:
        return self.mass @ z_n + self.row_scale * g_next

    def solve(self, b: np.ndarray) -> np.ndarray:
        return sla.lu_solve(self._lu, b)


def lu_factor_checked(M: np.ndarray):
    rows = np.abs(M).max(axis=1)
    if np.any(rows == 0):
        raise SingularSystemError("singular backward-Euler matrix")
    with warnings.catch_warnings():
        # exact zero pivots are reported below as SingularSystemError
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu, piv = sla.lu_factor(M, check_finite=True)
        # rows carry very different units (1/Zs next to dt/C), so judge pivots after equilibration
        lu_s, _ = sla.lu_factor(M / rows[:, None])
    if np.min(np.abs(np.diag(lu_s))) <= 1e-13:
        raise SingularSystemError("singular backward-Euler matrix")
    return lu, piv


def discretize(dae: LinearDAE, dt: float) -> DiscreteSystem:
    return DiscreteSystem(dae.mass, dae.A_mat, dt, dae.source)


def emt_step(sys: DiscreteSystem, z_n: np.ndarray, g_next: np.ndarray) -> np.ndarray:
    return sys.solve(sys.rhs(z_n, g_next))


# ---------------------------------------------------------------------------
# dynamic phasors


def dp_expand(dae: LinearDAE, cfg: DPConfig) -> LinearDAE:
    """Real DAE over the dynamic-phasor coordinates of every unknown.

    Coordinates are variable-major, ``(re h0, re h1, im h1, ...)`` per unknown.
    For harmonic k the complex row reads ``E X' + (A + j k w0 E) X = G_k``.
    The source contributes the nominal coefficient ``E/2`` on harmonic 1 only,
    so perturbation windows are invisible to the phasor model.
    """
    n, cw = dae.n, cfg.coords_per_var
    N = n * cw
    E = np.zeros((N, N))
    A = np.zeros((N, N))
    g = np.zeros(N)
    off = 0
    for k in cfg.harmonics:
        w = k * cfg.omega0
        if k == 0:
            sel = np.arange(n) * cw + off
            E[np.ix_(sel, sel)] = dae.mass
            A[np.ix_(sel, sel)] = dae.A_mat
            off += 1
            continue
        re = np.arange(n) * cw + off
        im = re + 1
        E[np.ix_(re, re)] = dae.mass
        E[np.ix_(im, im)] = dae.mass
        A[np.ix_(re, re)] = dae.A_mat
        A[np.ix_(im, im)] = dae.A_mat
        A[np.ix_(re, im)] = -w * dae.mass
        A[np.ix_(im, re)] = w * dae.mass
        if k == 1:
            for row, amp in dae.source_rows.items():
                g[re[row]] = amp / 2.0
        off += 2

    labels = [f"{lab}.{c}" for lab in dae.labels for c in cfg.coord_names()]
    return LinearDAE(E, A, labels, lambda t: g.copy(), {}, cfg.omega0, dae.circuit)


def steady_state(dae: LinearDAE, omega0: float | None = None) -> np.ndarray:
    """Complex phasor Z with z(t) = Re(Z e^{j w0 t}) for the nominal source."""
    w = dae.omega0 if omega0 is None else omega0
    M = 1j * w * dae.mass + dae.A_mat
    try:
        lu = lu_factor_checked(M)
    except SingularSystemError:
        raise SingularSystemError("phasor matrix singular (resonance at w0?)") from None
    return sla.lu_solve(lu, dae.source_phasor())


def discrete_steady_state(dae: LinearDAE, dt: float, omega0: float | None = None) -> np.ndarray:
    """Periodic solution of the backward-Euler recursion, z_n = Re(Z e^{j w0 t_n})."""
    w = dae.omega0 if omega0 is None else omega0
    diff = np.any(dae.mass != 0.0, axis=1)
    s = (1.0 - np.exp(-1j * w * dt)) / dt
    M = np.where(diff[:, None], s * dae.mass + dae.A_mat, dae.A_mat)
    return np.linalg.solve(M, dae.source_phasor())


def dp_steady_coords(Z: np.ndarray, cfg: DPConfig) -> np.ndarray:
    """Dynamic-phasor coordinates of the sinusoid Re(Z e^{j w0 t})."""
    coeffs = np.zeros((len(Z), len(cfg.harmonics)), dtype=complex)
    if 1 in cfg.harmonics:
        coeffs[:, cfg.harmonics.index(1)] = Z / 2.0
    return cfg.from_complex(coeffs)


def recombine(coords: np.ndarray, t, cfg: DPConfig) -> np.ndarray:
    """Waveform h0 + sum_k 2 Re(h_k e^{j k w0 t}); ``t`` scalar or 1-d array."""
    coeffs = cfg.to_complex(coords)
    t = np.asarray(t, dtype=float)
    ks = np.array(cfg.harmonics)
    phase = np.exp(1j * cfg.omega0 * np.multiply.outer(t, ks))  # (..., |I|)
    weight = np.where(ks == 0, 1.0, 2.0)
    if t.ndim == 0:
        return np.real(coeffs @ (weight * phase))
    return np.real(np.einsum("vh,th->tv", coeffs, weight * phase)) if coeffs.ndim == 2 else np.real(
        np.einsum("tvh,th->tv", coeffs, weight * phase)
    )


def _grid(dt: float, t_end: float) -> int:
    steps = t_end / dt
    n = int(round(steps))
    if abs(steps - n) > 1e-9 * max(1.0, steps):
        raise ValueError(f"dt={dt} does not divide t_end={t_end}")
    return n


def monolithic_simulate(
    dae: LinearDAE,
    model: str,
    dt: float,
    t_end: float,
    cfg: DPConfig | None = None,
    z0: np.ndarray | None = None,
) -> Trajectory:
    """March the whole circuit with one model; starts from the phasor steady state."""
    n_steps = _grid(dt, t_end)
    cfg = cfg or DPConfig(dae.omega0)
    if model == "emt":
        system = dae
        if z0 is None:
            z0 = np.real(steady_state(dae))
    elif model == "ts":
        system = dp_expand(dae, cfg)
        if z0 is None:
            z0 = dp_steady_coords(steady_state(dae), cfg)
    else:
        raise ValueError(f"unknown model {model!r}")
    sys = discretize(system, dt)
    out = np.empty((n_steps + 1, system.n))
    out[0] = z0
    for k in range(1, n_steps + 1):
        out[k] = emt_step(sys, out[k - 1], system.source(k * dt))
    return Trajectory(np.arange(n_steps + 1) * dt, out, list(system.labels))


def reconstruct_ts(traj: Trajectory, times: Sequence[float], cfg: DPConfig, dt_ts: float) -> np.ndarray:
    """Waveforms of a phasor trajectory at ``times``; each time uses the coefficients
    of the macro step that ends at or after it (no smoothing)."""
    times = np.asarray(times, dtype=float)
    idx = np.clip(np.ceil(times / dt_ts - 1e-9).astype(int), 0, len(traj.times) - 1)
    coords = traj.states[idx]
    return recombine(coords, times, cfg) if coords.ndim == 1 else _recombine_rows(coords, times, cfg)


def _recombine_rows(coords: np.ndarray, times: np.ndarray, cfg: DPConfig) -> np.ndarray:
    coeffs = cfg.to_complex(coords)  # (t, v, h)
    ks = np.array(cfg.harmonics)
    phase = np.exp(1j * cfg.omega0 * np.multiply.outer(times, ks)) * np.where(ks == 0, 1.0, 2.0)
    return np.real(np.einsum("tvh,th->tv", coeffs, phase))
