import numpy as np
import pytest

from lte.agents import AgentConfig, AgentMeta, init_agent
from lte.autodiff import new_rng
from lte.errors import ContractError
from lte.game import Dataset, DatasetManifest, enumerate_symbols, onehot_symbol
from lte.metrics import (
    EvalSettings,
    avg_agent_entropy,
    avg_population_convergence,
    evaluate_population,
    jaccard_of_sets,
    jaccard_similarity,
    message_match_stats,
    pearson,
    topographic_similarity,
    topographic_similarity_from_vectors,
    unique_message_count,
)

CFG = AgentConfig(feature_size=32, hidden_size=16, embed_size=16)


from tests_support import ScriptedSender


def scripted(*rows):
    return ScriptedSender(np.array(rows))


class TestPearson:
    def test_perfect_positive(self):
        assert pearson([1, 2, 3], [2, 4, 6]) == pytest.approx(1.0)

    def test_perfect_negative(self):
        x = np.arange(10.0)
        assert pearson(x, -x) == pytest.approx(-1.0)

    def test_independent_near_zero(self):
        rng = new_rng(0)
        assert abs(pearson(rng.standard_normal(10_000), rng.standard_normal(10_000))) < 0.05

    def test_zero_variance_signals_none(self):
        assert pearson([1.0, 1.0, 1.0], [1.0, 2.0, 3.0]) is None

    def test_length_mismatch(self):
        with pytest.raises(ContractError):
            pearson([1.0], [1.0, 2.0])


class TestJaccard:
    def test_identical_sets(self):
        assert jaccard_of_sets(frozenset({1, 2}), frozenset({1, 2})) == 1.0

    def test_disjoint_sets(self):
        assert jaccard_of_sets(frozenset({1, 2}), frozenset({3, 4})) == 0.0

    def test_partial_overlap(self):
        assert jaccard_of_sets(frozenset({1, 2}), frozenset({2, 3})) == pytest.approx(1 / 3)

    def test_two_empty_sets_identical(self):
        assert jaccard_of_sets(frozenset(), frozenset()) == 1.0

    def test_sender_level_hand_cases(self):
        feats = np.zeros((1, 32))
        bound = 4
        pairs = {
            (scripted([1, 2, bound, bound, bound]), scripted([2, 1, bound, bound, bound])): 1.0,
            (scripted([1, 2, bound, bound, bound]), scripted([3, 0, bound, bound, bound])): 0.0,
            (scripted([1, 2, bound, bound, bound]), scripted([2, 3, bound, bound, bound])): 1 / 3,
        }
        for (a, b), expected in pairs.items():
            got = jaccard_similarity([a, b], feats, samples_per_input=3, rng=new_rng(0))
            assert got == pytest.approx(expected)

    def test_needs_two_senders(self):
        with pytest.raises(ContractError):
            jaccard_similarity([scripted([4, 4, 4, 4, 4])], np.zeros((1, 32)), 1, new_rng(0))


class TestMatchStats:
    def test_all_identical(self):
        s = [scripted([1, 2, 4, 4, 4]) for _ in range(4)]
        match, unique = message_match_stats(s, np.zeros((3, 32)))
        assert match == 1.0
        assert unique == pytest.approx(1 / 4)

    def test_all_distinct(self):
        s = [scripted([i, i, 4, 4, 4]) for i in range(4)]
        match, unique = message_match_stats(s, np.zeros((3, 32)))
        assert match == 0.0
        assert unique == 1.0

    def test_a_a_b_case(self):
        s = [scripted([1, 1, 4, 4, 4]), scripted([1, 1, 4, 4, 4]), scripted([2, 2, 4, 4, 4])]
        match, unique = message_match_stats(s, np.zeros((5, 32)))
        assert match == pytest.approx(1 / 3)
        assert unique == pytest.approx(2 / 3)


class TestUniqueMessages:
    def test_constant_sender(self):
        assert unique_message_count(scripted([1, 2, 3, 4, 4]), np.zeros((20, 32))) == 1

    def test_distinct_message_per_class(self):
        # enumerate all two-token messages: 5*5 = 25 >= 25 inputs
        rows = [[a, b, 4, 4, 4] for a in range(5) for b in range(5)]
        assert unique_message_count(ScriptedSender(np.array(rows)), np.zeros((25, 32))) == 25

    def test_modular_sender(self):
        rows = [[i % 7, 4, 4, 4, 4] for i in range(40)]
        assert unique_message_count(ScriptedSender(np.array(rows)), np.zeros((40, 32))) == 7

    def test_full_symbol_space_reference(self):
        # a sender with one message per symbolic class hits the 162 reference
        rows = [[i % 5, (i // 5) % 5, (i // 25) % 5, (i // 125) % 5, 0] for i in range(162)]
        assert unique_message_count(ScriptedSender(np.array(rows)), np.zeros((162, 32))) == 162


class TestTopographicSimilarity:
    def test_identity_language_is_one(self):
        # message vectors equal symbol one-hots padded with zeros: cosines match exactly
        syms = enumerate_symbols()
        sym_vecs = np.stack([onehot_symbol(s) for s in syms])
        msg_vecs = np.hstack([sym_vecs, np.zeros((162, 11))])
        rho, degenerate = topographic_similarity_from_vectors(sym_vecs, msg_vecs, new_rng(1), pairs=5000)
        assert not degenerate
        assert rho == pytest.approx(1.0, abs=1e-6)

    def test_constant_language_degenerate(self):
        ds = Dataset(DatasetManifest.from_seed(0, z=32, split_sizes={"train": 10, "validation": 10, "test": 10}))
        sender = scripted([1, 2, 4, 4, 4])
        rho, degenerate = topographic_similarity(sender, new_rng(2), 5000, ds.centroids, ds.symbols)
        assert degenerate and rho == 0.0

    def test_random_language_near_zero(self):
        rng = new_rng(3)
        rows = rng.integers(0, 4, size=(162, 5))  # uniform 5-token messages, no bound
        sender = ScriptedSender(rows)
        ds = Dataset(DatasetManifest.from_seed(0, z=32, split_sizes={"train": 10, "validation": 10, "test": 10}))
        rho, degenerate = topographic_similarity(sender, new_rng(4), 5000, ds.centroids, ds.symbols)
        assert not degenerate
        assert abs(rho) < 0.1

    def test_vocabulary_permutation_invariance(self):
        rng = new_rng(5)
        rows = rng.integers(0, 5, size=(162, 5))
        perm = np.array([3, 0, 4, 1, 2])
        ds = Dataset(DatasetManifest.from_seed(0, z=32, split_sizes={"train": 10, "validation": 10, "test": 10}))
        a, _ = topographic_similarity(ScriptedSender(rows), new_rng(6), 4000, ds.centroids, ds.symbols)
        b, _ = topographic_similarity(ScriptedSender(perm[rows]), new_rng(6), 4000, ds.centroids, ds.symbols)
        assert a == pytest.approx(b, abs=1e-12)


class TestConvergence:
    def meta(self, agent_id, losses):
        return AgentMeta(agent_id=agent_id, kind="sender", age=len(losses), loss_history=list(losses))

    def test_constant_histories(self):
        metas = [self.meta(i, [0.7, 0.7]) for i in range(3)]
        assert avg_population_convergence(metas, 2) == pytest.approx(0.7)

    def test_two_agent_hand_case(self):
        metas = [self.meta(0, [1.0, 1.0]), self.meta(1, [3.0, 1.0])]
        assert avg_population_convergence(metas, 2) == pytest.approx(1.5)

    def test_single_agent_equals_fitness(self):
        from lte.population import fitness

        m = self.meta(0, [0.9, 0.4, 0.2])
        assert avg_population_convergence([m], 3) == pytest.approx(fitness(m, 3))


class TestEntropy:
    def test_uniform_sender(self):
        sender = init_agent("sender", "lstm", CFG, new_rng(7))
        for t in sender.params.values():
            t.data[:] = 0.0
        feats = new_rng(8).standard_normal((10, 32))
        assert avg_agent_entropy([sender], feats, new_rng(9)) == pytest.approx(np.log(5.0), abs=1e-12)

    def test_bounded_for_random_senders(self):
        feats = new_rng(10).standard_normal((10, 32))
        for seed in range(5):
            sender = init_agent("sender", "lstm", CFG, new_rng(seed))
            ent = avg_agent_entropy([sender], feats, new_rng(11))
            assert 0.0 <= ent <= np.log(5.0) + 1e-12


class TestEvaluatePopulation:
    def test_snapshot_finite_and_deterministic(self):
        ds = Dataset(DatasetManifest.from_seed(3, z=32, split_sizes={"train": 400, "validation": 200, "test": 100}))
        rng = new_rng(12)
        senders = [init_agent("sender", "lstm", CFG, new_rng(20 + i), agent_id=i) for i in range(3)]
        receivers = [init_agent("receiver", "lstm", CFG, new_rng(30 + i), agent_id=i) for i in range(3)]
        for agent in senders + receivers:
            agent.record_batch(1.0)
        settings = EvalSettings(eval_batches=2, eval_batch_size=64, jaccard_samples=2, topo_pairs=500)
        a = evaluate_population(senders, receivers, ds, settings, new_rng(40), 10, "cu-random", 0)
        b = evaluate_population(senders, receivers, ds, settings, new_rng(40), 10, "cu-random", 0)
        assert a == b
        for col in ("accuracy", "loss", "avg_entropy", "avg_convergence", "jaccard",
                    "match_rate", "unique_proportion", "unique_messages", "topo_sim"):
            assert np.isfinite(getattr(a, col)), col
        assert 0.0 <= a.jaccard <= 1.0
        assert 0.0 <= a.match_rate <= 1.0
        assert 0.0 <= a.unique_proportion <= 1.0
        assert -1.0 <= a.topo_sim <= 1.0

    def test_sender_permutation_leaves_message_metrics_unchanged(self):
        ds = Dataset(DatasetManifest.from_seed(3, z=32, split_sizes={"train": 60, "validation": 60, "test": 60}))
        senders = [init_agent("sender", "lstm", CFG, new_rng(50 + i), agent_id=i) for i in range(3)]
        feats = ds.centroids
        a = message_match_stats(senders, feats)
        b = message_match_stats(senders[::-1], feats)
        assert a == pytest.approx(b)
        ja = jaccard_similarity(senders, feats[:20], 2, new_rng(60))
        jb = jaccard_similarity(senders[::-1], feats[:20], 2, new_rng(60))
        assert ja == pytest.approx(jb, abs=1e-15)
        ea = avg_agent_entropy(senders, feats[:20], new_rng(61))
        eb = avg_agent_entropy(senders[::-1], feats[:20], new_rng(61))
        assert ea == pytest.approx(eb, abs=1e-15)
