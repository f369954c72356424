"""EMT <-> dynamic-phasor translation operators.

EMT -> TS: DFT of a one-period sliding history of interface samples, with a
phase compensation that refers the coefficients to absolute time.
TS -> EMT: harmonic recombination, optionally with a linear blend of the
previous and next coefficient sets over the first ``alpha`` micro steps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .dae import DPConfig, recombine


@dataclass(frozen=True)
class SlidingHistory:
    """One fundamental period of interface samples, oldest first.

    Sample ``j`` of the buffer was taken at ``(shift_count*m - m_tilde + j + 1) * dt_emt``,
    so the newest sample sits at the current macro time ``shift_count * m * dt_emt``.
    """

    samples: np.ndarray  # (m_tilde, n_ie)
    shift_count: int
    m: int
    dt_emt: float

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.ndim == 1:
            s = s[:, None]
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)
        if self.m < 1 or self.m > s.shape[0]:
            raise ValueError(f"m={self.m} incompatible with history length {s.shape[0]}")

    @property
    def m_tilde(self) -> int:
        return self.samples.shape[0]

    @property
    def M(self) -> float:
        return self.m_tilde / self.m

    @property
    def n_ie(self) -> int:
        return self.samples.shape[1]

    def sample_times(self) -> np.ndarray:
        first = self.shift_count * self.m - self.m_tilde + 1
        return (first + np.arange(self.m_tilde)) * self.dt_emt

    @property
    def active(self) -> np.ndarray:
        return self.samples[-self.m:]

    @property
    def frozen(self) -> np.ndarray:
        return self.samples[: self.m_tilde - self.m]


def window_sizes(dt_emt: float, dt_ts: float, omega0: float) -> tuple[int, int]:
    """(m, m_tilde) for the given steps; both must be integers."""
    m = dt_ts / dt_emt
    mt = 2.0 * math.pi / omega0 / dt_emt
    if abs(m - round(m)) > 1e-6 * m or round(m) < 1:
        raise ValueError(f"dt_ts/dt_emt = {m} is not a positive integer")
    if abs(mt - round(mt)) > 1e-6 * mt:
        raise ValueError(f"T0/dt_emt = {mt} is not an integer")
    if round(m) > round(mt):
        raise ValueError("dt_ts longer than one fundamental period")
    return int(round(m)), int(round(mt))


def new_history(samples: np.ndarray, m: int, dt_emt: float, shift_count: int = 0) -> SlidingHistory:
    return SlidingHistory(np.array(samples, dtype=float), shift_count, m, dt_emt)


def push_history(hist: SlidingHistory, new_samples: np.ndarray) -> SlidingHistory:
    new = np.asarray(new_samples, dtype=float)
    if new.ndim == 1 and hist.n_ie == 1:
        new = new[:, None]
    if new.shape != (hist.m, hist.n_ie):
        raise ValueError(f"expected {hist.m} samples of width {hist.n_ie}, got shape {new.shape}")
    buf = np.concatenate([hist.samples[hist.m:], new])
    return replace(hist, samples=buf, shift_count=hist.shift_count + 1)


def with_active(hist: SlidingHistory, active: np.ndarray) -> SlidingHistory:
    """Candidate history: frozen part kept, newest ``m`` slots replaced."""
    buf = np.concatenate([hist.frozen, np.asarray(active, dtype=float).reshape(hist.m, hist.n_ie)])
    return replace(hist, samples=buf)


def emt_to_ts(hist: SlidingHistory, cfg: DPConfig, compensate: bool = True) -> np.ndarray:
    """DP coordinates (variable-major) of the history window.

    ``X_k = fft(x)[k] / m_tilde`` taken relative to the first window sample,
    then rotated to absolute time so periodic signals give the same value for
    every window position.
    """
    mt = hist.m_tilde
    if max(cfg.harmonics) * 2 >= mt:
        raise ValueError("harmonic set exceeds the Nyquist limit of the history")
    spec = np.fft.fft(hist.samples, axis=0) / mt  # (mt, n_ie)
    ks = np.array(cfg.harmonics)
    X = spec[ks].T  # (n_ie, |I|)
    if compensate:
        t_first = (hist.shift_count * hist.m - mt + 1) * hist.dt_emt
        X = X * np.exp(-1j * ks * cfg.omega0 * t_first)
    return cfg.from_complex(X)


def alpha_steps(percent: float, m: int) -> int:
    """Smoothing length in micro steps from a percentage of ``m`` (rounded down)."""
    if not 0 <= percent <= 100:
        raise ValueError("alpha percentage must lie in [0, 100]")
    return int(math.floor(percent * m / 100.0 + 1e-9))


def smoothing_weights(alpha: int, m: int) -> np.ndarray:
    """Weight of ``w_prev`` at micro steps 1..m (``w_next`` gets one minus it)."""
    if not 0 <= alpha <= m:
        raise ValueError(f"alpha={alpha} outside [0, {m}]")
    w = np.zeros(m)
    if alpha >= 2:
        j = np.arange(1, alpha + 1)
        w[:alpha] = (alpha - j) / (alpha - 1)
    return w


def ts_to_emt(
    w_prev: np.ndarray,
    w_next: np.ndarray,
    alpha: int,
    t_grid: np.ndarray,
    cfg: DPConfig,
) -> np.ndarray:
    """Waveform samples ``(m, n_ie)`` on ``t_grid`` from two DP coordinate sets."""
    t_grid = np.asarray(t_grid, dtype=float)
    lam = smoothing_weights(alpha, len(t_grid))
    coords = lam[:, None] * np.asarray(w_prev)[None, :] + (1.0 - lam)[:, None] * np.asarray(w_next)[None, :]
    return _recombine_each(coords, t_grid, cfg)


def _recombine_each(coords: np.ndarray, times: np.ndarray, cfg: DPConfig) -> np.ndarray:
    coeffs = cfg.to_complex(coords)  # (m, n_ie, |I|)
    ks = np.array(cfg.harmonics)
    phase = np.exp(1j * cfg.omega0 * np.multiply.outer(times, ks)) * np.where(ks == 0, 1.0, 2.0)
    return np.real(np.einsum("tvh,th->tv", coeffs, phase))


def round_trip_check(signal: np.ndarray, cfg: DPConfig, dt_emt: float, m: int = 1, shift_count: int = 0) -> float:
    """Max error of recombining the DP coefficients of a one-period history."""
    hist = new_history(signal, m, dt_emt, shift_count)
    w = emt_to_ts(hist, cfg)
    back = ts_to_emt(w, w, 0, hist.sample_times(), cfg)
    return float(np.max(np.abs(back - hist.samples)))


__all__ = [
    "SlidingHistory",
    "window_sizes",
    "new_history",
    "push_history",
    "with_active",
    "emt_to_ts",
    "alpha_steps",
    "smoothing_weights",
    "ts_to_emt",
    "round_trip_check",
    "recombine",
]
