import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from src.dag import (Dag, Path, categorize_vertices, dag_stats, passing_probs, prune_for_export,
                     select_by_mass, validate)
from src.errors import NormalizationError, StructureError
from tests import oracle
from tests.oracle import D1_TOKEN_PROBS, D1_TRANSITIONS, chain_dag, random_dag


class TestValidate:
    def test_d1_is_valid(self, d1):
        validate(d1)

    def test_mass_below_diagonal_is_structure_error(self):
        transitions = np.array(D1_TRANSITIONS)
        transitions[1, 0] = 0.1
        with pytest.raises(StructureError, match=r"E\[2\]\[1\]"):
            validate(Dag.from_probs(D1_TOKEN_PROBS, transitions))

    def test_zero_token_row_is_normalization_error(self):
        token_probs = np.array(D1_TOKEN_PROBS)
        token_probs[2] = 0.0
        with pytest.raises(NormalizationError, match="row 3"):
            validate(Dag.from_probs(token_probs, D1_TRANSITIONS))

    def test_transition_row_not_summing_to_one(self):
        transitions = np.array(D1_TRANSITIONS)
        transitions[0, 1] = 0.4
        with pytest.raises(NormalizationError, match="transitions row 1"):
            validate(Dag.from_probs(D1_TOKEN_PROBS, transitions))

    def test_shape_mismatch(self):
        with pytest.raises(StructureError):
            validate(Dag.from_probs(D1_TOKEN_PROBS, np.zeros((3, 3))))

    def test_single_vertex_graph(self):
        validate(Dag.from_probs([[0.5, 0.5]], [[0.0]]))


class TestPath:
    def test_one_based(self):
        assert Path((0, 2, 3)).one_based() == (1, 3, 4)

    @pytest.mark.parametrize("vertices", [(1, 2), (0, 2, 2), (0, 3, 1), ()])
    def test_rejects_invalid(self, vertices):
        with pytest.raises(StructureError):
            Path(vertices)


class TestPassingProbs:
    def test_d1(self, d1):
        assert passing_probs(d1).tolist() == pytest.approx([1.0, 0.5, 0.575, 1.0], abs=1e-9)

    def test_chain_is_all_ones(self):
        dag = chain_dag(np.full((5, 3), 1 / 3))
        assert passing_probs(dag).tolist() == pytest.approx([1.0] * 5, abs=1e-12)

    @settings(max_examples=500, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), size=st.integers(1, 8))
    def test_matches_walk_enumeration(self, seed, size):
        dag = random_dag(np.random.default_rng(seed), size, 3)
        r = passing_probs(dag).numpy()
        np.testing.assert_allclose(r, oracle.passing(dag), atol=1e-9)
        assert r[0] == pytest.approx(1.0) and r[-1] == pytest.approx(1.0, abs=1e-9)

    def test_extra_incoming_edge_never_lowers_passing(self, d1):
        before = passing_probs(d1)
        raw = d1.transitions.clone()
        raw[0, 2] += 0.2
        after = passing_probs(Dag(d1.log_token_probs, raw.log()))
        assert float(after[2]) >= float(before[2])


class TestSelectByMass:
    def test_float_sum_reaches_target(self):
        assert [v for v, _ in select_by_mass([(1, 0.5), (2, 0.3), (3, 0.2)], 0.8)] == [1, 2]

    def test_keeps_both_edges_when_first_is_short(self):
        assert [v for v, _ in select_by_mass([(2, 0.45), (1, 0.55)], 0.9)] == [1, 2]

    def test_ties_prefer_smaller_index(self):
        assert select_by_mass([(3, 0.5), (2, 0.5)], 0.5) == [(2, 0.5)]


class TestPruneForExport:
    def test_drops_rare_vertex(self, d1):
        view = prune_for_export(d1, min_passing=0.55, edge_mass=0.9)
        assert view.vertices == (0, 2, 3)
        assert all(u in view.vertices and v in view.vertices for u, v, _ in view.edges)

    def test_no_thresholds_is_identity(self, d1):
        view = prune_for_export(d1, min_passing=0.0, edge_mass=1.0)
        assert view.vertices == (0, 1, 2, 3)
        assert {(u, v) for u, v, _ in view.edges} == {(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)}

    def test_cumulative_edge_threshold(self, d1):
        view = prune_for_export(d1, min_passing=0.0, edge_mass=0.9)
        assert {(u, v) for u, v, _ in view.edges if u == 1} == {(1, 2), (1, 3)}

    def test_endpoints_always_kept(self, d1):
        assert prune_for_export(d1, min_passing=1.0, edge_mass=0.5).vertices == (0, 3)

    @given(seed=st.integers(0, 2**32 - 1), size=st.integers(2, 8),
           min_passing=st.floats(0.0, 1.0), edge_mass=st.floats(0.05, 1.0))
    def test_idempotent(self, seed, size, min_passing, edge_mass):
        dag = random_dag(np.random.default_rng(seed), size, 3)
        once = prune_for_export(dag, min_passing, edge_mass)
        twice = prune_for_export(once, min_passing, edge_mass)
        assert twice.vertices == once.vertices
        assert twice.edges == once.edges


class TestDagStats:
    def test_d1_root_out_degree(self, d1):
        stats = dag_stats(d1, passing_floor=0.2, edge_mass=0.8, merge_same_token=False)
        # root keeps {2, 3}; vertex 2 keeps {3, 4}; vertex 3 keeps {4}; terminal counts 0
        assert stats.out_degree_hist == {2: 2, 1: 1, 0: 1}
        assert stats.max_token_probs.tolist() == pytest.approx([0.9, 0.7, 0.6, 0.9])

    def test_floor_one_counts_only_endpoints(self, d1):
        stats = dag_stats(d1, passing_floor=1.0, edge_mass=0.8, merge_same_token=False)
        assert sum(stats.out_degree_hist.values()) == 2

    def test_merge_same_token_successors(self):
        token_probs = [[0.9, 0.1], [0.2, 0.8], [0.3, 0.7], [0.5, 0.5]]
        transitions = np.zeros((4, 4))
        transitions[0, 1:3] = [0.5, 0.5]
        transitions[1, 2:4] = [0.5, 0.5]
        transitions[2, 3] = 1.0
        dag = Dag.from_probs(token_probs, transitions)
        merged = dag_stats(dag, passing_floor=0.9, edge_mass=0.8, merge_same_token=True)
        plain = dag_stats(dag, passing_floor=0.9, edge_mass=0.8, merge_same_token=False)
        assert plain.out_degree_hist[2] == 1
        assert merged.out_degree_hist.get(2, 0) == 0
        assert merged.out_degree_hist[1] == 1

    def test_categories(self):
        token_probs = [[0.9] + [0.02] * 5, [1 / 6] * 6, [0.9] + [0.02] * 5, [0.02] * 5 + [0.9]]
        transitions = np.zeros((4, 4))
        transitions[0, 1:] = [0.1, 0.3, 0.6]
        transitions[1, 2:] = [0.5, 0.5]
        transitions[2, 3] = 1.0
        stats = dag_stats(Dag.from_probs(token_probs, transitions), 0.2, 0.8, merge_same_token=False)
        counts = categorize_vertices(stats)
        assert counts["frequent"] == 2
        assert counts["confident"] == 1
        assert counts["unused"] == 1
        assert counts["total"] == 4


def test_from_probs_uses_float64_logs(d1):
    assert d1.log_token_probs.dtype == torch.float64
    assert d1.log_transitions[3, 0] == float("-inf")
