"""Heterogeneous EMT / dynamic-phasor co-simulation of linear circuits."""

from .netlist import parse_netlist, assemble_dae, evaluate_source, serialize_netlist
from .dae import DPConfig, Trajectory, discretize, emt_step, dp_expand, steady_state, monolithic_simulate
from .partition import Partition, load_partition, expand_overlap
from .translate import emt_to_ts, ts_to_emt, new_history, push_history
from .aitken import InterfaceTrace, ErrorOperator, build_error_operator, fit_operator, accelerate, spectral_radius
from .cosim import CosimConfig, run, error_operator, interface_trace
from .circuits import rlc_netlist, rlc_partition

__all__ = [
    "parse_netlist",
    "assemble_dae",
    "evaluate_source",
    "serialize_netlist",
    "DPConfig",
    "Trajectory",
    "discretize",
    "emt_step",
    "dp_expand",
    "steady_state",
    "monolithic_simulate",
    "Partition",
    "load_partition",
    "expand_overlap",
    "emt_to_ts",
    "ts_to_emt",
    "new_history",
    "push_history",
    "InterfaceTrace",
    "ErrorOperator",
    "build_error_operator",
    "fit_operator",
    "accelerate",
    "spectral_radius",
    "CosimConfig",
    "run",
    "error_operator",
    "interface_trace",
    "rlc_netlist",
    "rlc_partition",
]
