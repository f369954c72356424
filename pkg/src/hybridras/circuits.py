"""The single-loop RLC benchmark circuit and its two-way split."""

from __future__ import annotations

from typing import Optional

# paper-style current names -> component current labels
CURRENT_ALIASES = {
    "i12": "i_E",
    "i23": "i_L1",
    "i34": "i_R1",
    "i45": "i_C1",
    "i56": "i_R2",
    "i67": "i_L2",
    "i71": "i_C2",
}

# core set of the subdomain holding the source (v1, v2, i12, i71, v3, v7, i23, i34)
SOURCE_SIDE = ["v1", "v2", "i_E", "i_C2", "v3", "v7", "i_L1", "i_R1"]
FAR_SIDE = ["v4", "i_L2", "v5", "v6", "i_R2", "i_C1"]


def rlc_netlist(
    L1: float = 0.7,
    L2: float = 0.7,
    C1: float = 1e-6,
    C2: float = 1e-6,
    R1: float = 77.0,
    R2: float = 77.0,
    E: float = 220.0,
    Zs: float = 1e-6,
    f0: float = 50.0,
    perturbation: Optional[tuple[float, float, float]] = None,
) -> str:
    """Netlist text of the 7-node loop E-L1-R1-C1-R2-L2-C2 grounded at node 1."""
    src = f"V E 2 1 {E!r} {f0!r} {Zs!r}"
    if perturbation is not None:
        t0, t1, factor = perturbation
        src += f" perturb {t0!r} {t1!r} {factor!r}"
    return "\n".join(
        [
            "# single-loop RLC benchmark",
            "ground 1",
            src,
            f"L L1 3 2 {L1!r}",
            f"R R1 4 3 {R1!r}",
            f"C C1 5 4 {C1!r}",
            f"R R2 6 5 {R2!r}",
            f"L L2 7 6 {L2!r}",
            f"C C2 1 7 {C2!r}",
            "# the loop's seven current equalities have rank six",
            "free E-C2",
            "",
        ]
    )


def rlc_partition(source_model: str = "emt", overlap: int = 0) -> str:
    """Partition file text: the source side gets ``source_model``, the far side the other."""
    other = {"emt": "ts", "ts": "emt"}[source_model]
    lines = [f"overlap {overlap}"]
    lines += [f"{v} 0 {source_model}" for v in SOURCE_SIDE]
    lines += [f"{v} 1 {other}" for v in FAR_SIDE]
    return "\n".join(lines) + "\n"
