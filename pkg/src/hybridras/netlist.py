"""Netlist parsing and assembly of the linear circuit DAE.

The assembled system has the form ``E z' + A z = G(t)`` with one current
unknown per component. Every equation is matched to one unknown so that the
graph of the discrete matrix can be partitioned by variable:

* the ground row ``v_g = 0`` is matched to the ground potential,
* a component's branch law is matched to that component's current,
* the current equality (or KCL row) of a node is matched to the node potential.

Differential rows are normalised so that ``E`` holds only 0/+1/-1 entries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

KINDS = {"R": "resistor", "L": "inductor", "C": "capacitor", "V": "voltage_source"}


class NetlistError(ValueError):
    """Malformed or inconsistent netlist text."""


class SingularDAEError(ValueError):
    """The assembled DAE is over/under-constrained or has a singular pencil."""


@dataclass(frozen=True)
class Perturbation:
    t_start: float
    t_end: float
    factor: float

    def active(self, t: float) -> bool:
        return self.t_start <= t < self.t_end


@dataclass(frozen=True)
class Component:
    kind: str
    name: str
    node_plus: str
    node_minus: str
    value: float
    frequency: Optional[float] = None
    series_impedance: Optional[float] = None
    perturbation: Optional[Perturbation] = None

    @property
    def letter(self) -> str:
        return {v: k for k, v in KINDS.items()}[self.kind]


@dataclass(frozen=True)
class Circuit:
    components: tuple[Component, ...]
    nodes: tuple[str, ...]
    ground: str
    freed_equations: frozenset[str] = field(default_factory=frozenset)

    def component(self, name: str) -> Component:
        for c in self.components:
            if c.name == name:
                return c
        raise KeyError(name)

    @property
    def sources(self) -> list[Component]:
        return [c for c in self.components if c.kind == "voltage_source"]

    @property
    def omega0(self) -> float:
        freqs = {c.frequency for c in self.sources}
        if len(freqs) > 1:
            raise NetlistError(f"sources with different frequencies: {sorted(freqs)}")
        return 2.0 * math.pi * (freqs.pop() if freqs else 50.0)

    @property
    def labels(self) -> list[str]:
        return [f"v{n}" for n in self.nodes] + [f"i_{c.name}" for c in self.components]


@dataclass
class LinearDAE:
    """``mass @ z' + A_mat @ z = source(t)``.

    ``mass`` plays the role of the differential selector: its nonzero columns
    are the differential unknowns and its nonzero rows the differential rows.
    """

    mass: np.ndarray
    A_mat: np.ndarray
    labels: list[str]
    source: Callable[[float], np.ndarray]
    source_rows: dict[int, float] = field(default_factory=dict)
    omega0: float = 2.0 * math.pi * 50.0
    circuit: Optional[Circuit] = None

    @property
    def n(self) -> int:
        return self.A_mat.shape[0]

    @property
    def diff_mask(self) -> np.ndarray:
        return np.any(self.mass != 0.0, axis=0)

    @property
    def diff_rows(self) -> np.ndarray:
        return np.any(self.mass != 0.0, axis=1)

    @property
    def n1(self) -> int:
        return int(self.diff_mask.sum())

    @property
    def n2(self) -> int:
        return self.n - self.n1

    @property
    def I_d(self) -> np.ndarray:
        """0/1 diagonal selector of the differential unknowns."""
        return np.diag(self.diff_mask.astype(float))

    def index(self, label: str) -> int:
        return self.labels.index(label)

    def source_phasor(self) -> np.ndarray:
        """Complex amplitude of the nominal source: G(t) = Re(g e^{j w0 t})."""
        g = np.zeros(self.n, dtype=complex)
        for row, amp in self.source_rows.items():
            g[row] = amp
        return g


# ---------------------------------------------------------------------------
# parsing


def _number(tok: str, lineno: int) -> float:
    try:
        return float(tok)
    except ValueError:
        raise NetlistError(f"line {lineno}: not a number: {tok!r}") from None


def parse_netlist(text: str) -> Circuit:
    components: list[Component] = []
    names: set[str] = set()
    ground = None
    freed: set[str] = set()
    order: list[str] = []

    def see(node: str) -> None:
        if node not in order:
            order.append(node)

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        head = tok[0]
        if head == "ground":
            if len(tok) != 2:
                raise NetlistError(f"line {lineno}: expected 'ground <node>'")
            if ground is not None:
                raise NetlistError(f"line {lineno}: ground declared twice")
            ground = tok[1]
            see(ground)
            continue
        if head == "free":
            if len(tok) != 2:
                raise NetlistError(f"line {lineno}: expected 'free <id>'")
            freed.add(tok[1])
            continue
        if head not in KINDS:
            raise NetlistError(f"line {lineno}: unknown record kind {head!r}")
        if head == "V":
            if len(tok) not in (7, 11) or (len(tok) == 11 and tok[7] != "perturb"):
                raise NetlistError(
                    f"line {lineno}: expected 'V name n+ n- amplitude freq Zs [perturb t0 t1 factor]'"
                )
        elif len(tok) != 5:
            raise NetlistError(f"line {lineno}: expected '{head} name n+ n- value'")
        name, n_plus, n_minus = tok[1], tok[2], tok[3]
        if name in names:
            raise NetlistError(f"line {lineno}: duplicate component name {name!r}")
        if n_plus == n_minus:
            raise NetlistError(f"line {lineno}: component {name!r} shorts node {n_plus!r}")
        value = _number(tok[4], lineno)
        kw = {}
        if head == "V":
            kw["frequency"] = _number(tok[5], lineno)
            kw["series_impedance"] = _number(tok[6], lineno)
            if kw["series_impedance"] <= 0 or kw["frequency"] <= 0:
                raise NetlistError(f"line {lineno}: Zs and frequency must be positive")
            if len(tok) == 11:
                t0, t1, factor = (_number(t, lineno) for t in tok[8:11])
                if t1 <= t0:
                    raise NetlistError(f"line {lineno}: empty perturbation window")
                kw["perturbation"] = Perturbation(t0, t1, factor)
        elif value <= 0:
            raise NetlistError(f"line {lineno}: {name} value must be positive")
        names.add(name)
        see(n_plus)
        see(n_minus)
        components.append(Component(KINDS[head], name, n_plus, n_minus, value, **kw))

    if ground is None:
        raise NetlistError("missing 'ground <node>' directive")
    degree = {n: 0 for n in order}
    for c in components:
        degree[c.node_plus] += 1
        degree[c.node_minus] += 1
    if degree[ground] == 0:
        raise NetlistError(f"ground node {ground!r} is not connected")
    for node, d in degree.items():
        if d == 1:
            attached = next(c for c in components if node in (c.node_plus, c.node_minus))
            if attached.kind != "voltage_source":
                raise NetlistError(f"dangling node {node!r}")
    circuit = Circuit(tuple(components), tuple(order), ground, frozenset(freed))
    known = {eq_id for eq_id, _node, _terms in _current_equations(circuit)}
    unknown = freed - known
    if unknown:
        raise NetlistError(f"free directive names unknown equations: {sorted(unknown)}")
    return circuit


def serialize_netlist(circuit: Circuit) -> str:
    lines = [f"ground {circuit.ground}"]
    for c in circuit.components:
        rec = f"{c.letter} {c.name} {c.node_plus} {c.node_minus} {c.value!r}"
        if c.kind == "voltage_source":
            rec += f" {c.frequency!r} {c.series_impedance!r}"
            if c.perturbation is not None:
                p = c.perturbation
                rec += f" perturb {p.t_start!r} {p.t_end!r} {p.factor!r}"
        lines.append(rec)
    lines += [f"free {eq}" for eq in sorted(circuit.freed_equations)]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# assembly


def _current_equations(circuit: Circuit):
    """Yield ``(id, node, {component_index: coefficient})`` per node.

    Degree-2 nodes give a pairwise current equality ``i_a -/+ i_b = 0``
    (sign from the relative orientation); higher-degree nodes give a KCL row.
    A branch current flows from ``node_plus`` to ``node_minus`` through its
    component.
    """
    comps = circuit.components
    for node in circuit.nodes:
        at = [k for k, c in enumerate(comps) if node in (c.node_plus, c.node_minus)]
        # +1 when the current arrives at the node, -1 when it leaves
        arrive = {k: (1.0 if comps[k].node_minus == node else -1.0) for k in at}
        if len(at) == 2:
            a, b = at
            yield f"{comps[a].name}-{comps[b].name}", node, {a: 1.0, b: arrive[a] * arrive[b]}
        elif len(at) > 2:
            yield f"kcl-{node}", node, arrive


def assemble_dae(circuit: Circuit) -> LinearDAE:
    nodes = list(circuit.nodes)
    comps = circuit.components
    n_nodes = len(nodes)
    n = n_nodes + len(comps)
    vidx = {node: k for k, node in enumerate(nodes)}
    iidx = {c.name: n_nodes + k for k, c in enumerate(comps)}

    mass = np.zeros((n, n))
    A = np.zeros((n, n))
    source_rows: dict[int, float] = {}
    omega0 = circuit.omega0

    g = vidx[circuit.ground]
    A[g, g] = 1.0

    for c in comps:
        r = iidx[c.name]
        p, m = vidx[c.node_plus], vidx[c.node_minus]
        if c.kind == "resistor":
            A[r, p], A[r, m], A[r, r] = 1.0, -1.0, -c.value
        elif c.kind == "inductor":
            # di/dt - (v+ - v-)/L = 0
            mass[r, r] = 1.0
            A[r, p], A[r, m] = -1.0 / c.value, 1.0 / c.value
        elif c.kind == "capacitor":
            # d(v+ - v-)/dt - i/C = 0
            mass[r, p], mass[r, m] = 1.0, -1.0
            A[r, r] = -1.0 / c.value
        else:
            A[r, p], A[r, m], A[r, r] = 1.0, -1.0, -c.series_impedance
            source_rows[r] = c.value

    # a two-component loop yields the same equality at both nodes; free drops one copy
    kept, dropped = [], set()
    for eq in _current_equations(circuit):
        if eq[0] in circuit.freed_equations and eq[0] not in dropped:
            dropped.add(eq[0])
            continue
        kept.append(eq)
    n_eq = 1 + len(comps) + len(kept)
    if n_eq != n:
        raise SingularDAEError(
            f"{n_eq} equations for {n} unknowns; adjust 'free' directives"
        )
    free_rows = [vidx[node] for node in nodes if node != circuit.ground]
    pending = []
    for eq_id, node, terms in kept:
        if node != circuit.ground and vidx[node] in free_rows:
            free_rows.remove(vidx[node])
            row = vidx[node]
            for k, coef in terms.items():
                A[row, n_nodes + k] = coef
        else:
            pending.append(terms)
    for terms, row in zip(pending, free_rows):
        for k, coef in terms.items():
            A[row, n_nodes + k] = coef

    _check_pencil(mass, A)

    labels = circuit.labels

    def source(t: float) -> np.ndarray:
        return evaluate_source(circuit, t)

    return LinearDAE(mass, A, labels, source, source_rows, omega0, circuit)


def _check_pencil(mass: np.ndarray, A: np.ndarray) -> None:
    """Reject DAEs whose pencil ``s E + A`` is singular.

    Probed at a few positive step sizes on the backward-Euler scaling; a
    regular pencil is singular at finitely many points only.
    """
    diff = np.any(mass != 0.0, axis=1)
    for h in (1.3e-4, 7.1e-3, 0.37):
        M = mass + np.where(diff[:, None], h, 1.0) * A
        s = np.linalg.svd(M, compute_uv=False)
        if s[-1] > 1e-12 * s[0]:
            return
    raise SingularDAEError("singular DAE pencil: over/under-constrained netlist")


def evaluate_source(circuit: Circuit, t: float) -> np.ndarray:
    """Source vector G(t); perturbation windows are half-open."""
    n_nodes = len(circuit.nodes)
    out = np.zeros(n_nodes + len(circuit.components))
    for k, c in enumerate(circuit.components):
        if c.kind != "voltage_source":
            continue
        amp = c.value
        if c.perturbation is not None and c.perturbation.active(t):
            amp *= c.perturbation.factor
        out[n_nodes + k] = amp * math.cos(2.0 * math.pi * c.frequency * t)
    return out
