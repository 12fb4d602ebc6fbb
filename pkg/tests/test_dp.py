import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from src.dag import Dag
from src.dp import (backward_dp, batch_best_paths, batch_dag_loss, forward_dp, logsumexp, loss_grad,
                    loss_marginal, loss_max, posteriors, smooth_log_probs)
from src.errors import DegenerateError, LengthError, VocabError
from tests import oracle
from tests.oracle import A, B, END, chain_dag, random_dag

Y = [A, B, END]


def random_case(seed: int, max_size: int = 8, max_len: int = 6, max_vocab: int = 5):
    rng = np.random.default_rng(seed)
    size = int(rng.integers(2, max_size + 1))
    vocab = int(rng.integers(2, max_vocab + 1))
    length = int(rng.integers(2, min(size, max_len) + 1))
    dag = random_dag(rng, size, vocab)
    target = [int(t) for t in rng.integers(0, vocab, size=length)]
    return dag, target


class TestD1:
    def test_marginal_loss(self, d1):
        assert float(loss_marginal(d1, Y).loss) == pytest.approx(-math.log(0.273375), abs=1e-12)
        assert float(loss_marginal(d1, Y).loss) == pytest.approx(1.29697, abs=1e-4)

    def test_max_loss_and_path(self, d1):
        result = loss_max(d1, Y)
        assert result.best_path.one_based() == (1, 3, 4)
        assert float(result.loss) == pytest.approx(-math.log(0.1458), abs=1e-12)

    def test_backward_table(self, d1):
        b = backward_dp(d1, Y).exp()
        assert float(b[1, 1]) == pytest.approx(0.405, abs=1e-12)
        assert float(b[1, 2]) == pytest.approx(0.9, abs=1e-12)
        assert float(b[2, 3]) == 1.0

    def test_posteriors(self, d1):
        gamma = posteriors(d1, Y).gamma
        assert float(gamma[1, 1]) == pytest.approx(7 / 15, abs=1e-9)
        assert float(gamma[1, 2]) == pytest.approx(8 / 15, abs=1e-9)
        assert float(gamma[0, 0]) == pytest.approx(1.0, abs=1e-12)
        assert float(gamma[2, 3]) == pytest.approx(1.0, abs=1e-12)

    def test_transition_gradient(self, d1):
        grad = loss_grad(d1, Y)
        assert float(grad.d_log_transitions[0, 1]) == pytest.approx(-7 / 15, abs=1e-9)

    def test_length_errors(self, d1):
        with pytest.raises(LengthError):
            loss_marginal(d1, [A, B, B, B, END])
        with pytest.raises(LengthError):
            loss_marginal(d1, [A])
        with pytest.raises(LengthError):
            loss_marginal(d1, [])

    def test_vocab_error(self, d1):
        with pytest.raises(VocabError):
            loss_marginal(d1, [A, 7, END])

    def test_unreachable_target_is_degenerate(self):
        token_probs = [[1.0, 0.0], [0.0, 1.0], [0.0, 1.0]]
        transitions = [[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.0, 0.0]]
        dag = Dag.from_probs(token_probs, transitions)
        with pytest.raises(DegenerateError):
            posteriors(dag, [1, 1, 1])
        with pytest.raises(DegenerateError):
            loss_max(dag, [1, 1, 1])


class TestChain:
    def test_forced_path_loss(self, rng):
        probs = rng.dirichlet(np.ones(4), size=5)
        dag = chain_dag(probs)
        target = [0, 3, 1, 1, 2]
        expected = -sum(math.log(probs[i, y]) for i, y in enumerate(target))
        assert float(loss_marginal(dag, target).loss) == pytest.approx(expected, rel=1e-12)
        assert loss_max(dag, target).best_path.vertices == (0, 1, 2, 3, 4)

    def test_single_vertex(self):
        dag = Dag.from_probs([[0.25, 0.75]], [[0.0]])
        assert float(loss_marginal(dag, [1]).loss) == pytest.approx(-math.log(0.75))


class TestOracle:
    @settings(max_examples=500, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_losses_match_enumeration(self, seed):
        dag, target = random_case(seed)
        total = oracle.likelihood(dag, target)
        best_prob, best_path = oracle.best(dag, target)
        if total == 0.0:
            with pytest.raises(DegenerateError):
                loss_max(dag, target)
            return
        assert float(loss_marginal(dag, target).loss) == pytest.approx(-math.log(total), rel=1e-9)
        result = loss_max(dag, target)
        assert float(result.loss) == pytest.approx(-math.log(best_prob), rel=1e-9)
        assert result.best_path.vertices == best_path
        assert float(result.loss) >= float(loss_marginal(dag, target).loss) - 1e-12

    @settings(max_examples=500, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_posteriors_match_enumeration(self, seed):
        dag, target = random_case(seed)
        if oracle.likelihood(dag, target) == 0.0:
            return
        post = posteriors(dag, target)
        np.testing.assert_allclose(post.gamma.numpy(), oracle.gamma(dag, target), atol=1e-9)
        np.testing.assert_allclose(post.gamma.sum(dim=1).numpy(), 1.0, atol=1e-9)
        np.testing.assert_allclose(post.xi.sum(dim=1).numpy(), post.gamma[1:].numpy(), atol=1e-9)

    @given(seed=st.integers(0, 2**32 - 1))
    def test_forward_backward_consistency(self, seed):
        dag, target = random_case(seed)
        if oracle.likelihood(dag, target) == 0.0:
            return
        f = forward_dp(dag, target)
        b = backward_dp(dag, target)
        per_position = torch.logsumexp(f.f + b, dim=1)
        np.testing.assert_allclose(per_position.numpy(), float(f.log_likelihood), rtol=1e-9)


class TestGradients:
    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_analytic_gradient_matches_finite_differences(self, seed):
        dag, target = random_case(seed, max_size=6, max_len=5, max_vocab=4)
        if oracle.likelihood(dag, target) == 0.0:
            return
        grad = loss_grad(dag, target)
        log_p = dag.log_token_probs.numpy()
        log_e = dag.log_transitions.numpy()

        def loss_p(x):
            return float(loss_marginal(Dag(torch.from_numpy(x), dag.log_transitions), target).loss)

        def loss_e(x):
            return float(loss_marginal(Dag(dag.log_token_probs, torch.from_numpy(x)), target).loss)

        for analytic, numeric in ((grad.d_log_token_probs.numpy(), oracle.finite_difference(loss_p, log_p)),
                                  (grad.d_log_transitions.numpy(), oracle.finite_difference(loss_e, log_e))):
            mask = np.abs(analytic) > 1e-8
            np.testing.assert_allclose(numeric[mask], analytic[mask], rtol=1e-5, atol=1e-7)

    def test_autograd_agrees_with_analytic(self, d1):
        log_p = d1.log_token_probs.clone().requires_grad_(True)
        log_e = d1.log_transitions.clone().requires_grad_(True)
        loss_marginal(Dag(log_p, log_e), Y).loss.backward()
        grad = loss_grad(d1, Y)
        np.testing.assert_allclose(log_p.grad.numpy(), grad.d_log_token_probs.numpy(), atol=1e-12)
        finite = torch.isfinite(d1.log_transitions)
        np.testing.assert_allclose(log_e.grad[finite].numpy(), grad.d_log_transitions[finite].numpy(), atol=1e-12)
        assert torch.isfinite(log_e.grad).all()

    def test_tokens_absent_from_target_get_no_gradient(self, d1):
        grad = loss_grad(d1, [A, A, END])
        assert torch.all(grad.d_log_token_probs[:, B] == 0)


def insert_rare_vertex(dag: Dag, position: int, eps: float) -> Dag:
    """Copy of ``dag`` with a vertex before ``position`` that every earlier vertex enters with mass ``eps``."""
    token_probs, transitions = dag.token_probs.numpy(), dag.transitions.numpy()
    size, vocab = token_probs.shape
    old = [u if u < position else u + 1 for u in range(size)]
    new_p = np.full((size + 1, vocab), 1.0 / vocab)
    new_e = np.zeros((size + 1, size + 1))
    for u in range(size):
        new_p[old[u]] = token_probs[u]
        for v in range(u + 1, size):
            new_e[old[u], old[v]] = (1.0 - eps) * transitions[u, v] if u < position else transitions[u, v]
        if u < position:
            new_e[old[u], position] = eps
    new_e[position, position + 1:] = 1.0 / (size - position)
    return Dag.from_probs(new_p, new_e)


class TestRareVertices:
    def test_d1(self, d1):
        extended = insert_rare_vertex(d1, 2, 1e-9)
        assert extended.graph_size == 5
        assert abs(float(loss_marginal(extended, Y).loss) - float(loss_marginal(d1, Y).loss)) < 1e-6

    @settings(max_examples=200, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), data=st.data())
    def test_loss_barely_moves(self, seed, data):
        dag, target = random_case(seed, max_size=7)
        position = data.draw(st.integers(1, dag.graph_size - 1))
        before = float(loss_marginal(dag, target).loss)
        eps = 1e-8 * min(1.0, math.exp(-before))
        after = float(loss_marginal(insert_rare_vertex(dag, position, eps), target).loss)
        if math.isfinite(before):
            assert abs(after - before) < 1e-6
        else:
            assert after == before


def test_logsumexp_all_masked_has_finite_gradient():
    x = torch.full((3,), float("-inf"), dtype=torch.float64, requires_grad=True)
    out = logsumexp(x, dim=0)
    out.backward()
    assert out.item() == float("-inf")
    assert torch.isfinite(x.grad).all()


def test_smoothing_keeps_rows_normalized(d1):
    smoothed = smooth_log_probs(d1.log_token_probs, 0.1)
    np.testing.assert_allclose(smoothed.exp().sum(dim=1).numpy(), 1.0, atol=1e-12)
    assert float(smoothed.exp()[0, A]) == pytest.approx(0.9 * 0.9 + 0.1 / 3)
    assert smooth_log_probs(d1.log_token_probs, 0.0) is d1.log_token_probs


class TestBatched:
    def _batch(self, seed):
        rng = np.random.default_rng(seed)
        cases = []
        for _ in range(4):
            size = int(rng.integers(2, 7))
            length = int(rng.integers(2, size + 1))
            cases.append((random_dag(rng, size, 4, sparsity=0.0), [int(t) for t in rng.integers(0, 4, size=length)]))
        max_size = max(d.graph_size for d, _ in cases)
        max_len = max(len(t) for _, t in cases)
        log_p = torch.full((4, max_size, 4), -math.log(4), dtype=torch.float64)
        log_e = torch.zeros((4, max_size, max_size), dtype=torch.float64)
        targets = torch.zeros((4, max_len), dtype=torch.long)
        for b, (dag, target) in enumerate(cases):
            size = dag.graph_size
            log_p[b, :size] = dag.log_token_probs
            log_e[b, :size, :size] = dag.log_transitions
            targets[b, :len(target)] = torch.as_tensor(target)
        lengths = torch.as_tensor([len(t) for _, t in cases])
        sizes = torch.as_tensor([d.graph_size for d, _ in cases])
        return cases, log_p, log_e, targets, lengths, sizes

    @given(seed=st.integers(0, 2**32 - 1))
    def test_sum_matches_single_instance(self, seed):
        cases, log_p, log_e, targets, lengths, sizes = self._batch(seed)
        losses = batch_dag_loss(log_p, log_e, targets, lengths, sizes, reduction="sum")
        for b, (dag, target) in enumerate(cases):
            assert float(losses[b]) == pytest.approx(float(loss_marginal(dag, target).loss), rel=1e-9)

    @given(seed=st.integers(0, 2**32 - 1))
    def test_max_and_paths_match_viterbi(self, seed):
        cases, log_p, log_e, targets, lengths, sizes = self._batch(seed)
        losses = batch_dag_loss(log_p, log_e, targets, lengths, sizes, reduction="max")
        paths = batch_best_paths(log_p, log_e, targets, lengths, sizes)
        for b, (dag, target) in enumerate(cases):
            single = loss_max(dag, target)
            assert float(losses[b]) == pytest.approx(float(single.loss), rel=1e-9)
            assert paths[b].vertices == single.best_path.vertices

    def test_oversized_target_gives_no_path(self, d1):
        log_p = d1.log_token_probs.unsqueeze(0)
        log_e = d1.log_transitions.unsqueeze(0)
        targets = torch.as_tensor([[A, B, B, B, END]])
        assert batch_best_paths(log_p, log_e, targets, torch.as_tensor([5]), torch.as_tensor([4])) == [None]

    def test_gradient_flows(self, d1):
        log_p = d1.log_token_probs.clone().unsqueeze(0).requires_grad_(True)
        losses = batch_dag_loss(log_p, d1.log_transitions.unsqueeze(0), torch.as_tensor([Y]),
                                torch.as_tensor([3]), torch.as_tensor([4]))
        losses.sum().backward()
        assert torch.isfinite(log_p.grad).all()
