import numpy as np
import pytest

from hybridras import DPConfig, discretize, dp_expand, expand_overlap, load_partition, rlc_partition
from hybridras.circuits import FAR_SIDE, SOURCE_SIDE
from hybridras.partition import PartitionError, adjacency, build_local_operators, parse_partition
from oracle import bfs_closure


def names(part, idx):
    return set(part.names(idx))


def systems(dae, dt_emt=2e-5, dt_ts=2e-3):
    cfg = DPConfig(dae.omega0)
    return {"emt": discretize(dae, dt_emt), "ts": discretize(dp_expand(dae, cfg), dt_ts)}, cfg


def test_two_way_split_accepted(base_dae):
    part = load_partition(rlc_partition("emt", 0), base_dae)
    assert names(part, part.cores[0]) == set(SOURCE_SIDE)
    assert names(part, part.cores[1]) == set(FAR_SIDE)
    assert part.models == ("emt", "ts")


def test_direct_neighbours_at_zero_overlap(base_dae):
    part = load_partition(rlc_partition("emt", 0), base_dae)
    adj = adjacency(base_dae)
    for core, ext in zip(part.cores, part.interfaces):
        assert set(ext) == bfs_closure(adj, core, 1) - set(core)
    assert names(part, part.interfaces[0]) == {"v4", "i_L2"}
    assert names(part, part.interfaces[1]) == {"v7", "i_R1"}


def test_overlap_one_sets(base_dae):
    part = load_partition(rlc_partition("emt", 1), base_dae)
    assert names(part, part.subsets[1]) == {"v4", "v5", "v6", "v7", "i_R1", "i_C1", "i_R2", "i_L2"}
    assert names(part, part.subsets[0]) == set(SOURCE_SIDE) | {"v4", "i_L2"}


@pytest.mark.parametrize("p", [0, 1, 2, 3, 4])
def test_overlap_matches_closure(base_dae, p):
    part = load_partition(rlc_partition("ts", p), base_dae)
    adj = adjacency(base_dae)
    for core, w, ext in zip(part.cores, part.subsets, part.interfaces):
        assert set(w) == bfs_closure(adj, core, p)
        assert set(ext) == bfs_closure(adj, w, 1) - set(w)


def test_large_overlap_covers_everything(base_dae):
    part = expand_overlap(load_partition(rlc_partition("emt", 0), base_dae), base_dae, 14)
    for w, ext in zip(part.subsets, part.interfaces):
        assert len(w) == 14 and len(ext) == 0


def test_single_subset(base_dae):
    part = load_partition("\n".join(f"{lab} 0 emt" for lab in base_dae.labels), base_dae)
    sys_map, cfg = systems(base_dae)
    (ops,) = build_local_operators(part, sys_map, cfg)
    assert ops.n_ie == 0 and ops.E_ie.shape == (14, 0)
    np.testing.assert_array_equal(ops.A_i, sys_map["emt"].A_tilde)


def test_interface_widths(base_dae):
    part = load_partition(rlc_partition("emt", 0), base_dae)
    sys_map, cfg = systems(base_dae)
    emt, ts = build_local_operators(part, sys_map, cfg)
    assert emt.n_ie == 2
    assert ts.n_ie == 6
    assert ts.n_i == 3 * len(FAR_SIDE)


def test_local_step_reproduces_global_step(base_dae):
    # feeding a subset its true interface values must return the global solution
    part = load_partition(rlc_partition("emt", 1).replace(" ts", " emt"), base_dae)
    sys_map, cfg = systems(base_dae)
    sys = sys_map["emt"]
    ops = build_local_operators(part, sys_map, cfg)[1]
    rng = np.random.default_rng(0)
    z0 = rng.normal(size=14)
    g = base_dae.source(2e-5)
    z1 = sys.solve(sys.rhs(z0, g))
    w = ops.step(z0[ops.variables], z0[ops.interface], z1[ops.interface], g)
    np.testing.assert_allclose(w, z1[ops.variables], rtol=1e-12, atol=1e-12)


class TestErrors:
    def test_missing_variable(self, base_dae):
        text = rlc_partition("emt", 0).replace("i_C1 1 ts\n", "")
        with pytest.raises(PartitionError, match="i_C1"):
            load_partition(text, base_dae)

    def test_unknown_variable(self, base_dae):
        with pytest.raises(PartitionError):
            load_partition(rlc_partition("emt", 0) + "v99 0 emt\n", base_dae)

    def test_mixed_models(self, base_dae):
        text = rlc_partition("emt", 0).replace("v1 0 emt", "v1 0 ts")
        with pytest.raises(PartitionError, match="mixes"):
            load_partition(text, base_dae)

    @pytest.mark.parametrize("line", ["v1 zero emt", "v1 0", "overlap x", "overlap -1"])
    def test_bad_lines(self, line):
        with pytest.raises(PartitionError):
            parse_partition(line)

    def test_duplicate_assignment(self):
        with pytest.raises(PartitionError):
            parse_partition("v1 0 emt\nv1 1 ts\n")

    def test_gap_in_subset_indices(self, base_dae):
        text = rlc_partition("emt", 0).replace(" 1 ts", " 2 ts")
        with pytest.raises(PartitionError):
            load_partition(text, base_dae)

    def test_negative_overlap(self, base_dae):
        with pytest.raises(PartitionError):
            expand_overlap(load_partition(rlc_partition("emt", 0), base_dae), base_dae, -1)
