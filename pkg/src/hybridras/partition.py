"""Overlapping variable partitions of the discrete DAE graph and local operators."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np
import scipy.linalg as sla

from .dae import DiscreteSystem, DPConfig, SingularSystemError, lu_factor_checked
from .netlist import LinearDAE

MODELS = ("emt", "ts")


class PartitionError(ValueError):
    pass


@dataclass(frozen=True)
class Partition:
    """Subsets ``W_i^p`` with their model tags, cores ``W_i^0`` and interfaces ``W_{i,e}^p``.

    All index arrays are sorted global variable indices.
    """

    subsets: tuple[np.ndarray, ...]
    models: tuple[str, ...]
    cores: tuple[np.ndarray, ...]
    interfaces: tuple[np.ndarray, ...]
    overlap: int = 0
    labels: tuple[str, ...] = ()

    @property
    def n_subsets(self) -> int:
        return len(self.subsets)

    def names(self, idx: Sequence[int]) -> list[str]:
        return [self.labels[k] for k in idx]

    def owner(self) -> np.ndarray:
        """Subset index owning each variable (from the disjoint cores)."""
        own = np.full(len(self.labels), -1)
        for i, core in enumerate(self.cores):
            own[core] = i
        return own


def adjacency(dae: LinearDAE) -> np.ndarray:
    """Boolean pattern of the discrete matrix ``E + S A`` (independent of the step)."""
    return (dae.mass != 0.0) | (dae.A_mat != 0.0)


def _neighbors(adj: np.ndarray, subset: np.ndarray) -> np.ndarray:
    """Variables coupled into the rows of ``subset`` but outside it."""
    mask = np.zeros(adj.shape[0], dtype=bool)
    mask[subset] = True
    cols = np.any(adj[mask], axis=0)
    return np.flatnonzero(cols & ~mask)


def partition_from_spec(dae: LinearDAE, spec: Mapping[str, tuple[int, str]]) -> Partition:
    """Overlap-0 partition from ``label -> (subset index, model)``."""
    labels = list(dae.labels)
    unknown = sorted(set(spec) - set(labels))
    if unknown:
        raise PartitionError(f"unknown variables in partition: {unknown}")
    missing = [lab for lab in labels if lab not in spec]
    if missing:
        raise PartitionError(f"variables not assigned to any subset: {missing}")
    n_sub = max(s for s, _ in spec.values()) + 1
    models: list[str | None] = [None] * n_sub
    members: list[list[int]] = [[] for _ in range(n_sub)]
    for lab, (s, model) in spec.items():
        if model not in MODELS:
            raise PartitionError(f"{lab}: unknown model {model!r}")
        if s < 0:
            raise PartitionError(f"{lab}: negative subset index")
        if models[s] not in (None, model):
            raise PartitionError(f"subset {s} mixes models {models[s]} and {model}")
        models[s] = model
        members[s].append(labels.index(lab))
    if any(not m for m in members):
        raise PartitionError("subset indices must be contiguous from 0")
    cores = tuple(np.array(sorted(m)) for m in members)
    return _with_overlap(cores, tuple(models), adjacency(dae), 0, tuple(labels))


def _with_overlap(cores, models, adj, p, labels) -> Partition:
    subsets = []
    for core in cores:
        w = core
        for _ in range(p):
            w = np.union1d(w, _neighbors(adj, w))
        subsets.append(w)
    interfaces = tuple(_neighbors(adj, w) for w in subsets)
    return Partition(tuple(subsets), models, cores, interfaces, p, labels)


def expand_overlap(partition: Partition, dae: LinearDAE, p: int) -> Partition:
    if p < 0:
        raise PartitionError("overlap must be nonnegative")
    return _with_overlap(partition.cores, partition.models, adjacency(dae), p, partition.labels)


def parse_partition(text: str) -> tuple[dict[str, tuple[int, str]], int]:
    """Partition file -> (``label -> (subset, model)``, overlap)."""
    spec: dict[str, tuple[int, str]] = {}
    overlap = 0
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        if tok[0] == "overlap":
            if len(tok) != 2 or not tok[1].isdigit():
                raise PartitionError(f"line {lineno}: expected 'overlap <p>'")
            overlap = int(tok[1])
            continue
        if len(tok) != 3 or not tok[1].isdigit():
            raise PartitionError(f"line {lineno}: expected '<variable> <subset> <emt|ts>'")
        if tok[0] in spec:
            raise PartitionError(f"line {lineno}: variable {tok[0]!r} assigned twice")
        spec[tok[0]] = (int(tok[1]), tok[2])
    return spec, overlap


def load_partition(text: str, dae: LinearDAE) -> Partition:
    spec, p = parse_partition(text)
    part = partition_from_spec(dae, spec)
    return expand_overlap(part, dae, p) if p else part


# ---------------------------------------------------------------------------
# local operators


def fan_out(idx: np.ndarray, width: int) -> np.ndarray:
    """Scalar variable indices -> their contiguous DP coordinate indices."""
    idx = np.asarray(idx, dtype=int)
    return (idx[:, None] * width + np.arange(width)[None, :]).reshape(-1)


@dataclass
class LocalOperators:
    """Restricted blocks of one subset's discrete matrix.

    ``rows``/``ext`` index the model's own coordinate space (DP coordinates
    for TS subsets). ``A_i = At[rows, rows]``, ``E_ie = At[rows, ext]`` and the
    mass blocks feed the previous-step term.
    """

    model: str
    variables: np.ndarray
    interface: np.ndarray
    rows: np.ndarray
    ext: np.ndarray
    A_i: np.ndarray
    E_ie: np.ndarray
    mass_i: np.ndarray
    mass_ie: np.ndarray
    row_scale: np.ndarray
    system: DiscreteSystem
    lu: tuple = field(repr=False, default=None)

    @property
    def n_i(self) -> int:
        return len(self.rows)

    @property
    def n_ie(self) -> int:
        return len(self.ext)

    def solve(self, b: np.ndarray) -> np.ndarray:
        return sla.lu_solve(self.lu, b)

    def rhs(self, w_prev, ze_prev, ze_next, g_next) -> np.ndarray:
        """Right-hand side of one local step given interface values at both ends."""
        b = self.mass_i @ w_prev + self.row_scale * g_next[self.rows]
        if self.n_ie:
            b = b + (self.mass_ie @ ze_prev - self.E_ie @ ze_next)
        return b

    def step(self, w_prev, ze_prev, ze_next, g_next) -> np.ndarray:
        return self.solve(self.rhs(w_prev, ze_prev, ze_next, g_next))

    def window_matrix(self, m: int) -> np.ndarray:
        """Block-bidiagonal matrix of ``m`` chained steps (diagonal A_i, subdiagonal -E_ii)."""
        n = self.n_i
        H = np.zeros((m * n, m * n))
        for l in range(m):
            H[l * n:(l + 1) * n, l * n:(l + 1) * n] = self.A_i
            if l:
                H[l * n:(l + 1) * n, (l - 1) * n:l * n] = -self.mass_i
        return H


def build_local_operators(
    partition: Partition, systems: Mapping[str, DiscreteSystem], cfg: DPConfig | None = None
) -> list[LocalOperators]:
    """One :class:`LocalOperators` per subset; ``systems`` maps model -> discrete system."""
    out = []
    cw = (cfg or DPConfig()).coords_per_var
    for i, (w, we, model) in enumerate(zip(partition.subsets, partition.interfaces, partition.models)):
        if model not in systems:
            raise PartitionError(f"no discrete system supplied for model {model!r}")
        sys = systems[model]
        width = cw if model == "ts" else 1
        rows, ext = fan_out(w, width), fan_out(we, width)
        A_i = sys.A_tilde[np.ix_(rows, rows)]
        try:
            lu = lu_factor_checked(A_i)
        except SingularSystemError:
            raise SingularSystemError(f"local matrix of subset {i} is singular") from None
        out.append(
            LocalOperators(
                model,
                w,
                we,
                rows,
                ext,
                A_i,
                sys.A_tilde[np.ix_(rows, ext)],
                sys.mass[np.ix_(rows, rows)],
                sys.mass[np.ix_(rows, ext)],
                sys.row_scale[rows],
                sys,
                lu,
            )
        )
    return out
