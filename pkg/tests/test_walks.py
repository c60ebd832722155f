import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from conftest import check_param_grads, random_log
from hmod import autodiff as ad
from hmod import kernels, walks
from hmod.trips import make_log

D = 4


def walk_params(seed=0, d=D):
    params = ad.ParamSet(seed=seed)
    walks.init_walk_params(params, d)
    return params


def batch(nodes, lengths=None, level=1):
    nodes = np.asarray(nodes, dtype=np.int64)
    if lengths is None:
        lengths = np.full(nodes.shape[:2], nodes.shape[2], dtype=np.int64)
    return walks.WalkBatch(np.arange(nodes.shape[0]), nodes, np.asarray(lengths), level, 0.0)


class TestStepDistributions:
    def test_zero_row_is_uniform(self):
        p = walks.demand_step_distribution(np.zeros((5, 5)), 2, walks.FORWARD, 0.01)
        assert np.allclose(p, 0.2, atol=1e-15)

    def test_one_hot_row_concentrates(self):
        y = np.zeros((4, 4))
        y[1, 3] = 1.0
        p = walks.demand_step_distribution(y, 1, walks.FORWARD, 1e-9)
        assert p[3] > 1 - 1e-8

    def test_reverse_uses_column(self):
        y = np.arange(9.0).reshape(3, 3)
        p = walks.demand_step_distribution(y, 1, walks.REVERSE, 0.0)
        assert np.allclose(p, y[:, 1] / y[:, 1].sum())

    def test_decay_ratio_e_to_one(self):
        s, g = 7.0, 3.0
        log = make_log([(0, 1, 100.0 - g - s), (0, 2, 100.0 - g)], 3)
        nbr, _, p = walks.decay_step_distribution(log, 0, walks.FORWARD, 100.0, 50.0, s)
        assert nbr.tolist() == [1, 2]
        assert p[1] / p[0] == pytest.approx(math.e, rel=1e-12)

    def test_first_step_strict_later_inclusive(self, small_log):
        strict, _, _ = walks.decay_step_distribution(small_log, 0, walks.FORWARD, 2.0, 10.0, 1.0)
        incl, _, _ = walks.decay_step_distribution(small_log, 0, walks.FORWARD, 2.0, 10.0, 1.0, inclusive=True)
        assert len(strict) == 1 and len(incl) == 2

    def test_no_candidates(self, small_log):
        assert walks.sample_step(1, walks.REVERSE, 0, 1.0, np.random.default_rng(0), log=small_log,
                                 horizon=10.0, timescale=1.0) is None


def total_variation(counts, probs):
    return 0.5 * float(np.abs(counts / counts.sum() - probs).sum())


class TestMonteCarlo:
    DRAWS = 100_000

    def test_demand_frequencies(self):
        rng = np.random.default_rng(11)
        y = rng.poisson(2.0, size=(6, 6)).astype(float)
        y[2] = 0.0
        y[2, 4] = 3.0
        u = rng.random((self.DRAWS, 2, 1))
        out = kernels.demand_walks(y, np.full(self.DRAWS, 2), u, 0.01)
        probs = walks.demand_step_distribution(y, 2, walks.FORWARD, 0.01)
        counts = np.bincount(out[:, 0, 0], minlength=6).astype(float)
        assert total_variation(counts, probs) < 0.01
        chi2 = stats.chisquare(counts, probs * self.DRAWS)
        assert chi2.pvalue > 0.01

    def test_decay_frequencies(self):
        rng = np.random.default_rng(12)
        log = make_log([(0, int(d), float(t)) for d, t in zip(rng.integers(1, 5, 30), rng.uniform(0, 50, 30))], 5)
        fwd, rev = log.adjacency("forward"), log.adjacency("reverse")
        u = rng.random((self.DRAWS, 2, 1))
        nodes, times, _ = kernels.decay_walks(fwd[0], fwd[1], fwd[2], rev[0], rev[1], rev[2],
                                              np.zeros(self.DRAWS, dtype=np.int64), 50.0, 40.0, 10.0, u)
        nbr, cand_t, probs = walks.decay_step_distribution(log, 0, walks.FORWARD, 50.0, 40.0, 10.0)
        # compare over distinct edge times (ties share a node only by chance)
        keys = {float(t): i for i, t in enumerate(cand_t)}
        counts = np.bincount([keys[float(t)] for t in times[:, 0, 0]], minlength=len(cand_t)).astype(float)
        assert total_variation(counts, probs) < 0.01


class TestSampleWalks:
    def test_single_edge_forced_support(self):
        log = make_log([(0, 1, 1.0)], 2)
        u = np.random.default_rng(0).random((2, 2, 4))
        wb = walks.sample_walks([0], 0, 5.0, 1, 4, uniforms=u, log=log, horizon=10.0, timescale=1.0)
        assert wb.nodes[0, 0].tolist() == [1, 0, 1, 0]
        assert wb.lengths[0].tolist() == [4, 0]

    def test_omega_one(self):
        y = np.ones((3, 3))
        u = np.random.default_rng(1).random((3, 4, 1))
        wb = walks.sample_walks(np.arange(3), 1, 0.0, 2, 1, uniforms=u, demand=y)
        assert wb.nodes.shape == (3, 4, 1)
        for s in wb.samples():
            assert len(s.nodes) == 1 and s.roles == (walks.walk_roles(s.parity, 1))

    def test_deterministic_for_seed(self):
        log = random_log(np.random.default_rng(2), n_nodes=6, n_events=200)
        u1 = walks.walk_uniforms(7, 3, 0, 6, 4, 4)
        u2 = walks.walk_uniforms(7, 3, 0, 6, 4, 4)
        a = walks.sample_walks(np.arange(6), 0, 90.0, 2, 4, uniforms=u1, log=log, horizon=60.0, timescale=5.0)
        b = walks.sample_walks(np.arange(6), 0, 90.0, 2, 4, uniforms=u2, log=log, horizon=60.0, timescale=5.0)
        assert np.array_equal(a.nodes, b.nodes)

    def test_anchor_stream_independent_of_anchor_set(self):
        y = np.random.default_rng(3).poisson(1.0, size=(5, 5)).astype(float)
        u = walks.walk_uniforms(0, 1, 2, 5, 4, 3)
        full = walks.sample_walks(np.arange(5), 2, 0.0, 2, 3, uniforms=u, demand=y)
        part = walks.sample_walks([3], 2, 0.0, 2, 3, uniforms=u, demand=y)
        assert np.array_equal(full.nodes[3], part.nodes[0])

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**31), st.integers(1, 6))
    def test_roles_alternate(self, seed, length):
        rng = np.random.default_rng(seed)
        log = random_log(rng, n_nodes=5, n_events=100)
        u = rng.random((5, 4, length))
        wb = walks.sample_walks(np.arange(5), 0, 100.0, 2, length, uniforms=u, log=log,
                                horizon=100.0, timescale=10.0)
        for s in wb.samples():
            assert all(a != b for a, b in zip(s.roles, s.roles[1:]))
            assert s.roles[0] == (walks.DESTINATION if s.parity == 0 else walks.ORIGIN)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**31))
    def test_decay_steps_respect_time(self, seed):
        rng = np.random.default_rng(seed)
        log = random_log(rng, n_nodes=4, n_events=80)
        u = rng.random((4, 4, 5))
        fwd, rev = log.adjacency("forward"), log.adjacency("reverse")
        _, times, lengths = kernels.decay_walks(fwd[0], fwd[1], fwd[2], rev[0], rev[1], rev[2],
                                                np.arange(4), 60.0, 30.0, 5.0, u)
        for a in range(4):
            for w in range(4):
                n = lengths[a, w]
                if n:
                    assert 60.0 - 30.0 <= times[a, w, 0] < 60.0
                    assert np.all(np.diff(times[a, w, :n]) <= 0)


class TestIntraWalk:
    def test_zero_memory(self):
        emb = walks.intra_walk_embed(batch([[[0, 1], [1, 0]]]), np.zeros((2, D)), walk_params())
        assert not emb.data.any()

    def test_omega_one_even_walk_is_half_projection(self):
        params = walk_params()
        mem = np.random.default_rng(0).normal(size=(3, D))
        emb = walks.intra_walk_embed(batch([[[2], [1]]]), mem, params).data
        assert np.allclose(emb[0, 0], mem[2] @ params["walk.W_O"].data / 2, atol=1e-14)
        assert np.allclose(emb[0, 1], mem[1] @ params["walk.W_D"].data / 2, atol=1e-14)

    def test_two_node_toy(self):
        params = walk_params(seed=1)
        wo, wd = params["walk.W_O"].data, params["walk.W_D"].data
        mem = np.array([[1.0, 0, 0, 0], [0, 2.0, 0, -1.0]])
        emb = walks.intra_walk_embed(batch([[[1, 0, 1], [0, 1, 0]]]), mem, params).data
        even = (mem[1] @ wo + mem[0] @ wd + mem[1] @ wo) / 6
        odd = (mem[0] @ wd + mem[1] @ wo + mem[0] @ wd) / 6
        assert np.allclose(emb[0, 0], even, atol=1e-14)
        assert np.allclose(emb[0, 1], odd, atol=1e-14)


class TestAttention:
    def test_identical_embeddings(self):
        e = np.tile(np.random.default_rng(0).normal(size=D), (1, 4, 1))
        z, beta = walks.inter_walk_attend(e, walk_params())
        assert np.allclose(beta.data, 0.25, atol=1e-15)
        assert np.allclose(z.data[0], e[0, 0], atol=1e-14)

    def test_single_walk(self):
        e = np.random.default_rng(1).normal(size=(1, 1, D))
        z, _ = walks.inter_walk_attend(e, walk_params())
        assert np.allclose(z.data, e[:, 0], atol=1e-15)

    def test_score_shift_invariance(self):
        rng = np.random.default_rng(2)
        e = rng.normal(size=(1, 4, D))
        params = walk_params()
        alpha = walks.attention_scores(ad.Tensor(e), params).data
        z, _ = walks.inter_walk_attend(e, params)
        shifted = ad.softmax(alpha + 123.0).data
        assert np.max(np.abs((shifted[..., None] * e).sum(axis=1) - z.data)) < 1e-9

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**31), st.integers(1, 8))
    def test_beta_is_distribution(self, seed, n_walks):
        e = np.random.default_rng(seed).normal(scale=3.0, size=(2, n_walks, D))
        _, beta = walks.inter_walk_attend(e, walk_params(seed % 7))
        assert np.all(beta.data >= 0)
        assert np.allclose(beta.data.sum(axis=-1), 1.0, atol=1e-9)


class TestEmbedNodes:
    def test_isolated_node_embeds_to_zero(self):
        log = make_log([(0, 1, 1.0)], 3)
        u = np.random.default_rng(0).random((3, 4, 4))
        wb = walks.sample_walks(np.arange(3), 0, 5.0, 2, 4, uniforms=u, log=log, horizon=10.0, timescale=1.0)
        mem = np.random.default_rng(1).normal(size=(3, D))
        z = walks.embed_nodes(wb, mem, walk_params()).data
        assert not z[2].any()
        assert z[0].any() and z[1].any()

    def test_gradient_wrt_role_weights(self):
        rng = np.random.default_rng(3)
        log = random_log(rng, n_nodes=4, n_events=60)
        u = rng.random((4, 4, 3))
        wb = walks.sample_walks(np.arange(4), 0, 100.0, 2, 3, uniforms=u, log=log, horizon=100.0, timescale=10.0)
        mem = rng.normal(size=(4, D))
        params = walk_params(seed=4)
        err = check_param_grads(lambda: ad.sum(ad.tanh(walks.embed_nodes(wb, mem, params))), params,
                                ["walk.W_O", "walk.W_D", "walk.W_a", "walk.a"])
        assert err < 1e-4
