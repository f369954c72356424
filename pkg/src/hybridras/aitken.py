"""Numerical error operator of a linear fixed-point iteration and Aitken extrapolation."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)


class NonConstructible(np.linalg.LinAlgError):
    """The difference matrix is singular or too ill-conditioned to invert."""


class EigenvalueOne(np.linalg.LinAlgError):
    """``I - P`` is singular: the iteration has no isolated fixed point."""


COND_LIMIT = 1e12


@dataclass
class InterfaceTrace:
    target: str = "ts_interface"
    iterates: list[np.ndarray] = field(default_factory=list)

    def append(self, u: np.ndarray) -> None:
        u = np.array(u, dtype=float).reshape(-1)
        if self.iterates and u.shape != self.iterates[0].shape:
            raise ValueError("interface iterates must share one width")
        self.iterates.append(u)

    @property
    def n_gamma(self) -> int:
        return self.iterates[0].size if self.iterates else 0

    def __len__(self) -> int:
        return len(self.iterates)

    def differences(self) -> np.ndarray:
        """Columns ``e^1, e^2, ...`` with ``e^k = u^k - u^{k-1}``."""
        if len(self.iterates) < 2:
            raise ValueError("need at least two iterates to form a difference")
        return np.diff(np.stack(self.iterates, axis=1), axis=1)


@dataclass
class ErrorOperator:
    P: np.ndarray
    built_at: int = 0
    residual: float = 0.0
    rank: int | None = None  # dimension of the fitted subspace when reduced
    _eig: tuple | None = field(default=None, repr=False)

    @property
    def n_gamma(self) -> int:
        return self.P.shape[0]

    def eigen(self) -> tuple[float, complex]:
        if self._eig is None:
            self._eig = spectral_radius(self)
        return self._eig

    @property
    def spectral_radius(self) -> float:
        return self.eigen()[0]

    @property
    def dominant_eigenvalue(self) -> complex:
        return self.eigen()[1]


def build_error_operator(trace: InterfaceTrace, built_at: int = 0) -> ErrorOperator:
    """``P = [e^{n+1} .. e^2] [e^n .. e^1]^{-1}`` from the first ``n + 1`` differences."""
    n = trace.n_gamma
    if len(trace) < n + 2:
        raise ValueError(f"need {n + 2} iterates for a {n}x{n} operator, have {len(trace)}")
    e = trace.differences()
    # newest first, as in the bracket order; any consistent order gives the same P
    D0 = e[:, n - 1::-1]
    D1 = e[:, n:0:-1]
    scale = np.abs(D0).max()
    if scale == 0.0 or not np.isfinite(scale):
        raise NonConstructible("difference matrix is zero")
    cond = np.linalg.cond(D0)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise NonConstructible(f"difference matrix condition number {cond:.3g} exceeds {COND_LIMIT:.0e}")
    # P D0 = D1  <=>  D0^T P^T = D1^T
    P = np.linalg.solve(D0.T, D1.T).T
    residual = float(np.abs(P @ D0 - D1).max())
    return ErrorOperator(P, built_at, residual)


def build_reduced_operator(trace: InterfaceTrace, built_at: int = 0, rtol: float = 1e-10) -> ErrorOperator:
    """Least-squares operator on the span of the recorded differences.

    When the error dynamics excite fewer than ``n_Gamma`` directions (or the
    fast modes die out below round-off within the trace) the square difference
    matrix is singular. That span is invariant under the iteration, so fitting
    ``P`` on it through a truncated pseudo-inverse keeps the exact eigenvalues
    of the excited modes and Aitken's formula stays exact for errors in it.
    """
    if len(trace) < 3:
        raise ValueError("need at least three iterates")
    e = trace.differences()
    D0, D1 = e[:, :-1], e[:, 1:]
    if not np.all(np.isfinite(e)):
        raise NonConstructible("non-finite interface differences")
    U, s, Vt = np.linalg.svd(D0, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        raise NonConstructible("difference matrix is zero")
    r = int(np.sum(s > rtol * s[0]))
    P = (D1 @ Vt[:r].T / s[:r]) @ U[:, :r].T
    residual = float(np.abs(P @ D0 - D1).max())
    return ErrorOperator(P, built_at, residual, rank=r)


def fit_operator(trace: InterfaceTrace, built_at: int = 0) -> ErrorOperator:
    """Square fit when the differences span the interface space, reduced fit otherwise."""
    try:
        return build_error_operator(trace, built_at)
    except NonConstructible as exc:
        P = build_reduced_operator(trace, built_at)
        log.info("step %d: %s; using rank-%d operator", built_at, exc, P.rank)
        return P


def accelerate(P: ErrorOperator | np.ndarray, z_k: np.ndarray, z_km1: np.ndarray) -> np.ndarray:
    """Fixed point ``(I - P)^{-1} (z_k - P z_{k-1})`` of an affine iteration."""
    Pm = P.P if isinstance(P, ErrorOperator) else np.atleast_2d(np.asarray(P, dtype=float))
    z_k = np.asarray(z_k, dtype=float).reshape(-1)
    z_km1 = np.asarray(z_km1, dtype=float).reshape(-1)
    K = np.eye(Pm.shape[0]) - Pm
    s = np.linalg.svd(K, compute_uv=False)
    if s[-1] <= 1e-12 * max(1.0, s[0]):
        raise EigenvalueOne("1 is an eigenvalue of the error operator")
    return np.linalg.solve(K, z_k - Pm @ z_km1)


def spectral_radius(P: ErrorOperator | np.ndarray) -> tuple[float, complex]:
    """(|lambda|max, dominant lambda); of a conjugate pair the one with Im >= 0 is returned."""
    Pm = P.P if isinstance(P, ErrorOperator) else np.atleast_2d(np.asarray(P, dtype=float))
    lam = np.linalg.eigvals(Pm)
    r = np.abs(lam).max()
    close = lam[np.abs(lam) >= r * (1 - 1e-9)]
    best = max(close, key=lambda z: (z.imag >= -1e-14 * max(r, 1e-300), z.real))
    return float(r), complex(best)
