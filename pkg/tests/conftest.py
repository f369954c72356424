import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from hybridras import assemble_dae, load_partition, parse_netlist, rlc_netlist, rlc_partition  # noqa: E402

DATA = Path(__file__).resolve().parent.parent / "data"

# R=7, L=0.07, C=1e-6: fast circuit used for the eigenvalue grid
FAST_L = dict(R1=7.0, R2=7.0, L1=0.07, L2=0.07, C1=1e-6, C2=1e-6)
# unequal capacitors with a 1 ms doubling of the source amplitude at 20 ms
PERTURBED = dict(R1=7.0, R2=7.0, L1=0.07, L2=0.07, C1=1e-5, C2=1e-7, perturbation=(0.02, 0.021, 2.0))


# slow inductors: the overlap-free phasor-source split converges at this setting
SLOW_L = dict(R1=7.0, R2=7.0, L1=0.5, L2=0.5, C1=1e-6, C2=1e-6)


def rlc_dae(**kw):
    return assemble_dae(parse_netlist(rlc_netlist(**kw)))


def split(dae, source_model="emt", overlap=0):
    return load_partition(rlc_partition(source_model, overlap), dae)


@pytest.fixture(scope="session")
def base_dae():
    return rlc_dae()


@pytest.fixture(scope="session")
def fast_dae():
    return rlc_dae(**FAST_L)


@pytest.fixture(scope="session")
def slow_dae():
    return rlc_dae(**SLOW_L)
