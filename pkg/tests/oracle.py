"""Independent reference solvers used by the tests.

Nodal analysis with backward-Euler companion models: every branch becomes a
conductance in parallel with a history current source, node voltages are solved
from KCL with the ground row removed, and branch currents are recovered
afterwards. Nothing here imports the package.
"""

from __future__ import annotations

import math

import numpy as np


def loop_branches(L1=0.7, L2=0.7, C1=1e-6, C2=1e-6, R1=77.0, R2=77.0):
    """(kind, name, node+, node-, value) of the seven-node loop, source excluded."""
    return [
        ("L", "L1", "3", "2", L1),
        ("R", "R1", "4", "3", R1),
        ("C", "C1", "5", "4", C1),
        ("R", "R2", "6", "5", R2),
        ("L", "L2", "7", "6", L2),
        ("C", "C2", "1", "7", C2),
    ]


class CompanionCircuit:
    """Series-impedance voltage source E cos(w t) from node ``sp`` to ``sm`` plus R/L/C branches."""

    def __init__(self, branches, E=220.0, Zs=1e-6, f0=50.0, sp="2", sm="1", ground="1", amplitude=None):
        self.branches = list(branches)
        self.E, self.Zs, self.w = E, Zs, 2 * math.pi * f0
        self.sp, self.sm, self.ground = sp, sm, ground
        self.amplitude = amplitude or (lambda t: E)
        nodes = []
        for _, _, a, b, _ in [("V", "E", sp, sm, 0.0)] + self.branches:
            for x in (a, b):
                if x not in nodes:
                    nodes.append(x)
        self.nodes = nodes
        self.free = [x for x in nodes if x != ground]

    def _col(self, node):
        return None if node == self.ground else self.free.index(node)

    def _stamp(self, Y, a, b, g):
        ia, ib = self._col(a), self._col(b)
        if ia is not None:
            Y[ia, ia] += g
        if ib is not None:
            Y[ib, ib] += g
        if ia is not None and ib is not None:
            Y[ia, ib] -= g
            Y[ib, ia] -= g

    def _inject(self, J, a, b, cur):
        # a current ``cur`` leaving node a through the branch and arriving at b
        ia, ib = self._col(a), self._col(b)
        if ia is not None:
            J[ia] -= cur
        if ib is not None:
            J[ib] += cur

    def phasor(self):
        """Complex node voltages and branch currents of the sinusoidal steady state."""
        n = len(self.free)
        Y = np.zeros((n, n), dtype=complex)
        J = np.zeros(n, dtype=complex)
        adm = {}
        for kind, name, a, b, val in self.branches:
            y = {"R": 1 / val, "L": 1 / (1j * self.w * val), "C": 1j * self.w * val}[kind]
            adm[name] = y
            self._stamp(Y, a, b, y)
        self._stamp(Y, self.sp, self.sm, 1 / self.Zs)
        # i_E = (u - E)/Zs: constant part -E/Zs leaves sp
        self._inject(J, self.sp, self.sm, -self.E / self.Zs)
        V = self._voltages(np.linalg.solve(Y, J))
        cur = {name: adm[name] * (V[a] - V[b]) for _, name, a, b, _ in self.branches}
        cur["E"] = self._source_current(cur)
        return V, cur

    def _source_current(self, cur):
        # KCL at the source's + node; dividing by the tiny Zs would amplify round-off
        total = 0.0
        for _, name, a, b, _ in self.branches:
            if a == self.sp:
                total -= cur[name]
            elif b == self.sp:
                total += cur[name]
        return total

    def _voltages(self, x):
        V = {self.ground: 0.0 * x[0] if len(x) else 0.0}
        for k, node in enumerate(self.free):
            V[node] = x[k]
        return V

    def simulate(self, dt, n_steps):
        """Backward-Euler march from the real part of the phasor steady state.

        Returns (times, {label: samples}) with labels ``v<node>`` and ``i_<name>``.
        """
        V0, I0 = self.phasor()
        hist_u = {name: (V0[a] - V0[b]).real for kind, name, a, b, _ in self.branches if kind == "C"}
        hist_i = {name: I0[name].real for kind, name, *_ in self.branches if kind == "L"}
        n = len(self.free)
        out = {f"v{x}": [V0[x].real] for x in self.nodes}
        out.update({f"i_{name}": [I0[name].real] for name in ["E"] + [b[1] for b in self.branches]})
        G = {}
        for kind, name, a, b, val in self.branches:
            G[name] = {"R": 1 / val, "L": dt / val, "C": val / dt}[kind]
        Y = np.zeros((n, n))
        for kind, name, a, b, val in self.branches:
            self._stamp(Y, a, b, G[name])
        self._stamp(Y, self.sp, self.sm, 1 / self.Zs)
        for step in range(1, n_steps + 1):
            t = step * dt
            J = np.zeros(n)
            # branch current = G*u + offset
            offset = {}
            for kind, name, a, b, val in self.branches:
                if kind == "L":
                    offset[name] = hist_i[name]
                elif kind == "C":
                    offset[name] = -G[name] * hist_u[name]
                else:
                    offset[name] = 0.0
                self._inject(J, a, b, offset[name])
            e_t = self.amplitude(t) * math.cos(self.w * t)
            self._inject(J, self.sp, self.sm, -e_t / self.Zs)
            V = self._voltages(np.linalg.solve(Y, J))
            cur = {}
            for kind, name, a, b, val in self.branches:
                u = V[a] - V[b]
                cur[name] = G[name] * u + offset[name]
                out[f"i_{name}"].append(cur[name])
                if kind == "L":
                    hist_i[name] = cur[name]
                elif kind == "C":
                    hist_u[name] = u
            out["i_E"].append(self._source_current(cur))
            for x in self.nodes:
                out[f"v{x}"].append(V[x])
        return np.arange(n_steps + 1) * dt, {k: np.array(v) for k, v in out.items()}


def scalar_rc_step(v_n, dt, R, C, E_next):
    """Capacitor voltage after one backward-Euler step of an ideal-source RC loop."""
    a = dt / (R * C)
    return (v_n + a * E_next) / (1 + a)


def bfs_closure(adj: np.ndarray, seed, p: int) -> set[int]:
    """Set grown ``p`` times by adding every column coupled into its rows."""
    cur = set(int(i) for i in seed)
    for _ in range(p):
        cur |= {j for i in cur for j in np.flatnonzero(adj[i])}
    return cur
