import numpy as np
import pytest

from conftest import random_log
from hmod import _pykernels, kernels

ckernels = pytest.importorskip("hmod._ckernels")


def test_backend_selected():
    assert kernels.BACKEND in ("cython", "python")


@pytest.mark.parametrize("seed", range(20))
def test_od_counts_parity(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 10))
    o = rng.integers(0, n, size=300)
    d = rng.integers(0, n, size=300)
    assert np.array_equal(ckernels.od_counts(o, d, n), _pykernels.od_counts(o, d, n))


@pytest.mark.parametrize("seed", range(10))
def test_demand_walks_parity(seed):
    rng = np.random.default_rng(seed)
    n = 7
    demand = rng.poisson(1.5, size=(n, n)).astype(float)
    anchors = np.arange(n)
    u = rng.random((n, 4, 5))
    assert np.array_equal(ckernels.demand_walks(demand, anchors, u, 0.01),
                          _pykernels.demand_walks(demand, anchors, u, 0.01))


@pytest.mark.parametrize("seed", range(10))
def test_decay_walks_parity(seed):
    rng = np.random.default_rng(seed)
    log = random_log(rng, n_nodes=6, n_events=300)
    fwd, rev = log.adjacency("forward"), log.adjacency("reverse")
    anchors = np.arange(6)
    u = rng.random((6, 4, 4))
    args = (fwd[0], fwd[1], fwd[2], rev[0], rev[1], rev[2], anchors, 80.0, 30.0, 5.0, u)
    c_nodes, c_times, c_len = ckernels.decay_walks(*args)
    p_nodes, p_times, p_len = _pykernels.decay_walks(*args)
    assert np.array_equal(c_nodes, p_nodes)
    assert np.array_equal(c_times, p_times)
    assert np.array_equal(c_len, p_len)


def test_decay_walk_bounces_on_single_edge():
    from hmod.trips import make_log

    # Only 0 -> 1 at t=1. First hop must be strictly earlier than t=5; later
    # hops may reuse the same timestamp, so the forward walk bounces 1,0,1.
    # Node 0 has no in-edges: the reverse walk never starts.
    log = make_log([(0, 1, 1.0)], 2)
    fwd, rev = log.adjacency("forward"), log.adjacency("reverse")
    u = np.full((1, 2, 3), 0.5)
    for impl in (ckernels, _pykernels):
        nodes, times, lengths = impl.decay_walks(fwd[0], fwd[1], fwd[2], rev[0], rev[1], rev[2],
                                                 np.array([0]), 5.0, 10.0, 1.0, u)
        assert nodes[0, 0].tolist() == [1, 0, 1]
        assert lengths[0].tolist() == [3, 0]
        assert nodes[0, 1].tolist() == [0, 0, 0]


def test_decay_walk_padding_repeats_last_node():
    from hmod.trips import make_log

    # Anchor 1 at t=2 has no earlier out-edge, so its forward walk is empty
    # and padded with the anchor itself.
    log = make_log([(0, 1, 1.0), (1, 2, 3.0)], 3)
    fwd, rev = log.adjacency("forward"), log.adjacency("reverse")
    u = np.full((1, 2, 4), 0.5)
    for impl in (ckernels, _pykernels):
        nodes, times, lengths = impl.decay_walks(fwd[0], fwd[1], fwd[2], rev[0], rev[1], rev[2],
                                                 np.array([1]), 2.0, 10.0, 1.0, u)
        assert lengths[0].tolist() == [0, 4]
        assert nodes[0, 0].tolist() == [1, 1, 1, 1]
        assert nodes[0, 1].tolist() == [0, 1, 0, 1]
