"""Graphs, weight schemes, schedules, mixing decay, serialization."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import binident as bi
from reference import (
    reference_backward_product,
    reference_strongly_connected,
)


# ---------------------------------------------------------------------------
# digraph basics

def test_self_loops_are_mandatory():
    with pytest.raises(ValueError):
        bi.Digraph(2, frozenset({(1, 1), (1, 2)}))  # (2,2) missing


def test_endpoints_must_be_in_range():
    with pytest.raises(ValueError):
        bi.Digraph(2, frozenset({(1, 1), (2, 2), (3, 1)}))


def test_from_undirected_pairs_adds_both_directions_and_loops():
    g = bi.from_undirected_pairs(3, [(1, 2)])
    assert g.edges == frozenset({(1, 1), (2, 2), (3, 3), (1, 2), (2, 1)})
    assert g.is_symmetric


def test_complete_and_ring_shapes():
    assert len(bi.complete_graph(4).edges) == 16
    ring = bi.ring_graph(5)
    assert ring.is_symmetric
    assert ring.in_neighbors(1) == (1, 2, 5)


def test_union_merges_edge_sets():
    a = bi.from_undirected_pairs(3, [(1, 2)])
    b = bi.from_undirected_pairs(3, [(2, 3)])
    assert a.union(b).edges == a.edges | b.edges


# ---------------------------------------------------------------------------
# poisson sampling

def test_poisson_p_zero_gives_only_self_loops():
    g = bi.generate_poisson_graph(5, 0.0, np.random.default_rng(0))
    assert g.edges == frozenset((i, i) for i in range(1, 6))


def test_poisson_p_one_gives_complete_digraph():
    g = bi.generate_poisson_graph(4, 1.0, np.random.default_rng(0))
    assert len(g.edges) == 16


def test_poisson_rejects_bad_probability():
    with pytest.raises(ValueError):
        bi.generate_poisson_graph(4, 1.5, np.random.default_rng(0))
    with pytest.raises(ValueError):
        bi.generate_poisson_graph(4, -0.1, np.random.default_rng(0))


def test_poisson_deterministic_per_seed():
    a = bi.generate_poisson_graph(30, 0.2, np.random.default_rng(42))
    b = bi.generate_poisson_graph(30, 0.2, np.random.default_rng(42))
    c = bi.generate_poisson_graph(30, 0.2, np.random.default_rng(43))
    assert a.edges == b.edges
    assert a.edges != c.edges


def test_poisson_samples_symmetric_pairs():
    g = bi.generate_poisson_graph(50, 0.1, np.random.default_rng(7))
    assert g.is_symmetric


def test_poisson_edge_count_matches_expectation():
    # mean over seeds of non-self directed edges; n=100, p=0.06 -> 594
    counts = []
    for seed in range(100):
        g = bi.generate_poisson_graph(100, 0.06, np.random.default_rng(seed))
        counts.append(len(g.edges) - 100)
    assert abs(np.mean(counts) - 594.0) < 10.0


@given(st.integers(1, 12), st.floats(0.0, 1.0), st.integers(0, 2**32 - 1))
@settings(max_examples=40, deadline=None)
def test_poisson_always_has_self_loops(n, p, seed):
    g = bi.generate_poisson_graph(n, p, np.random.default_rng(seed))
    assert all((i, i) in g.edges for i in range(1, n + 1))


# ---------------------------------------------------------------------------
# weight schemes

def test_metropolis_two_agent_complete_is_half_everywhere():
    wm = bi.metropolis_weights(bi.complete_graph(2))
    assert np.array_equal(wm.w, np.full((2, 2), 0.5))


def test_metropolis_star_hand_values():
    g = bi.from_undirected_pairs(4, [(1, 2), (1, 3), (1, 4)])
    wm = bi.metropolis_weights(g)
    assert np.array_equal(wm.w[0], [0.25, 0.25, 0.25, 0.25])
    assert np.array_equal(wm.w[1], [0.25, 0.75, 0.0, 0.0])
    assert bi.is_doubly_stochastic(wm.w, tol=1e-12)


def test_metropolis_single_agent():
    wm = bi.metropolis_weights(bi.complete_graph(1))
    assert np.array_equal(wm.w, [[1.0]])


def test_metropolis_rejects_asymmetric_graph():
    g = bi.from_directed_pairs(3, [(1, 2), (2, 3), (3, 1)])
    with pytest.raises(ValueError):
        bi.metropolis_weights(g)


@given(st.integers(2, 20), st.floats(0.05, 0.9), st.integers(0, 2**32 - 1))
@settings(max_examples=40, deadline=None)
def test_metropolis_doubly_stochastic_on_random_graphs(n, p, seed):
    g = bi.generate_poisson_graph(n, p, np.random.default_rng(seed))
    wm = bi.metropolis_weights(g)
    assert bi.is_doubly_stochastic(wm.w, tol=1e-12)


def test_degree_weights_regular_graph_is_doubly_stochastic():
    wm, ds = bi.degree_weights(bi.complete_graph(2))
    assert ds
    assert np.array_equal(wm.w, np.full((2, 2), 0.5))


def test_degree_weights_path_graph_column_sums():
    g = bi.from_undirected_pairs(3, [(1, 2), (2, 3)])
    wm, ds = bi.degree_weights(g)
    assert not ds
    assert np.allclose(wm.w.sum(axis=1), 1.0)
    assert np.allclose(wm.w.sum(axis=0), [5 / 6, 4 / 3, 5 / 6])


def test_degree_weights_single_agent():
    wm, ds = bi.degree_weights(bi.complete_graph(1))
    assert ds
    assert np.array_equal(wm.w, [[1.0]])


def test_is_doubly_stochastic_cases():
    assert bi.is_doubly_stochastic(np.array([[0.5, 0.5], [0.5, 0.5]]), tol=1e-12)
    assert not bi.is_doubly_stochastic(np.array([[1.0, 0.0], [1.0, 0.0]]), tol=1e-12)
    assert not bi.is_doubly_stochastic(np.array([[1.5, -0.5], [-0.5, 1.5]]), tol=1e-12)
    g = bi.generate_poisson_graph(100, 0.06, np.random.default_rng(3))
    assert bi.is_doubly_stochastic(bi.metropolis_weights(g).w, tol=1e-12)


def test_weight_matrix_support_must_match_graph():
    g = bi.complete_graph(2)
    with pytest.raises(ValueError):
        bi.WeightMatrix(g, np.array([[1.0, 0.0], [0.0, 1.0]]))  # zeros on edges


# ---------------------------------------------------------------------------
# schedules and validation

def test_static_schedule_indexing():
    g = bi.complete_graph(3)
    sched = bi.TopologySchedule.static(g, bi.metropolis_weights(g))
    assert sched[1][0] is g and sched[10**9][0] is g
    assert sched.period == 1


def test_periodic_schedule_cycles():
    sched = bi.partitioned_ring_schedule(4, 2)
    assert sched.period == 2
    assert sched[1][0].edges == sched[3][0].edges
    assert sched[2][0].edges == sched[4][0].edges
    assert sched[1][0].edges != sched[2][0].edges


def test_schedule_index_starts_at_one():
    g = bi.complete_graph(2)
    sched = bi.TopologySchedule.static(g, bi.metropolis_weights(g))
    with pytest.raises(IndexError):
        sched[0]


def test_validate_c4_static_complete_passes():
    g = bi.complete_graph(4)
    sched = bi.TopologySchedule.static(g, bi.metropolis_weights(g))
    report = bi.validate_c4(sched, kappa=0.1)
    assert report.passed
    assert "ok" in report.summary()


def test_validate_c4_detects_isolated_agent():
    g = bi.from_undirected_pairs(3, [(1, 2)])  # agent 3 alone
    sched = bi.TopologySchedule.static(g, bi.metropolis_weights(g))
    report = bi.validate_c4(sched)
    assert not report.connectivity_ok
    assert not report.passed


def test_validate_c4_periodic_window():
    sched = bi.partitioned_ring_schedule(3, 2)
    assert bi.validate_c4(sched, kappa=0.25).passed
    narrow = bi.TopologySchedule.periodic(tuple(sched.pairs), B=1)
    assert not bi.validate_c4(narrow, kappa=0.25).passed


def test_validate_c4_kappa_floor():
    g = bi.complete_graph(3)
    sched = bi.TopologySchedule.static(g, bi.metropolis_weights(g))
    assert not bi.validate_c4(sched, kappa=0.9).entry_floor_ok


def test_validate_c4_agrees_with_bfs_oracle():
    rng = np.random.default_rng(5)
    for _ in range(20):
        g = bi.generate_poisson_graph(8, 0.25, rng)
        sched = bi.TopologySchedule.static(g, bi.metropolis_weights(g))
        report = bi.validate_c4(sched)
        assert report.connectivity_ok == reference_strongly_connected(8, g.edges)


def test_partitioned_ring_needs_valid_period():
    with pytest.raises(ValueError):
        bi.partitioned_ring_schedule(4, 5)


# ---------------------------------------------------------------------------
# backward products and mixing decay

def _static(n_or_graph, weight_fn=bi.metropolis_weights):
    g = bi.complete_graph(n_or_graph) if isinstance(n_or_graph, int) else n_or_graph
    return bi.TopologySchedule.static(g, weight_fn(g))


def test_instant_averaging_has_zero_deviation():
    # metropolis on the complete graph gives exactly 1/n everywhere
    sched = _static(4)
    assert np.array_equal(sched[1][1].w, np.full((4, 4), 0.25))
    assert bi.backward_product_deviation(sched, 5, 1) == 0.0


def test_empty_product_is_identity_projector_norm():
    sched = _static(3)
    assert bi.backward_product_deviation(sched, 0, 1) == pytest.approx(1.0, abs=1e-12)


def test_deviation_rejects_bad_window():
    with pytest.raises(ValueError):
        bi.backward_product_deviation(_static(3), 0, 2)


def test_backward_product_matches_loop_oracle():
    sched = bi.partitioned_ring_schedule(4, 2)
    mats = [sched[t][1].w.tolist() for t in range(1, 6)]
    prod = np.array(reference_backward_product(mats))
    want = float(np.linalg.norm(prod - np.full((4, 4), 0.25), 2))
    got = bi.backward_product_deviation(sched, 5, 1)
    assert got == pytest.approx(want, rel=1e-12)


def test_static_ring_log_deviation_is_affine():
    sched = _static(bi.ring_graph(10))
    devs = bi.deviation_profile(sched, 1, 50)
    assert np.all(np.diff(devs) < 0)  # strictly mixing
    fit = bi.fit_geometric_envelope(devs)
    assert fit.r_squared > 0.99
    assert 0.0 < fit.rho < 1.0
    assert np.all(fit.envelope(np.arange(devs.size)) >= devs * (1 - 1e-12))


def test_fit_needs_two_resolvable_points():
    with pytest.raises(ValueError):
        bi.fit_geometric_envelope(np.array([1e-15, 1e-16, 1e-18]))


# ---------------------------------------------------------------------------
# serialization

def test_schedule_round_trip(tmp_path):
    sched = bi.partitioned_ring_schedule(4, 2)
    path = tmp_path / "sched.txt"
    bi.dump_schedule(sched, path)
    back = bi.load_schedule(path)
    assert back.mode == sched.mode and back.B == sched.B
    for t in range(1, 3):
        assert back[t][0].edges == sched[t][0].edges
        assert np.array_equal(back[t][1].w, sched[t][1].w)
    # dumping the loaded schedule reproduces the file byte for byte
    again = tmp_path / "again.txt"
    bi.dump_schedule(back, again)
    assert path.read_bytes() == again.read_bytes()


def test_golden_schedule_file(datadir):
    back = bi.load_schedule(datadir / "ring4_period2.schedule")
    fresh = bi.partitioned_ring_schedule(4, 2)
    assert back.B == 2
    for t in range(1, 3):
        assert back[t][0].edges == fresh[t][0].edges
        assert np.array_equal(back[t][1].w, fresh[t][1].w)


def test_regenerated_schedule_refuses_dump(tmp_path):
    def factory(k):
        g = bi.generate_poisson_graph(4, 0.5, np.random.default_rng(k))
        return g, bi.metropolis_weights(g)

    sched = bi.TopologySchedule.regenerated(factory, B=3)
    with pytest.raises(ValueError):
        bi.dump_schedule(sched, tmp_path / "no.txt")
    fixed = sched.materialize(4)
    bi.dump_schedule(fixed, tmp_path / "yes.txt")
    back = bi.load_schedule(tmp_path / "yes.txt")
    assert np.array_equal(back[2][1].w, fixed[2][1].w)


def test_load_rejects_malformed_files(tmp_path):
    bad = tmp_path / "bad.txt"
    bad.write_text("3 1\n")
    with pytest.raises(ValueError):
        bi.load_schedule(bad)
    bad.write_text("")
    with pytest.raises(ValueError):
        bi.load_schedule(bad)
