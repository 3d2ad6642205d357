import json

import numpy as np
import pytest

from lte.agents import AgentMeta
from lte.autodiff import new_rng
from lte.errors import ConfigError, ContractError
from lte.game import Dataset, DatasetManifest
from lte.genome import edit_distance, parse_genotype
from lte.population import (
    CullingPolicy,
    LteConfig,
    Population,
    best_index,
    cull,
    fitness,
    lte_run,
    sample_pair_indices,
    select_replacement_indices,
)

TINY_DATA = DatasetManifest.from_seed(1, z=16, split_sizes={"train": 400, "validation": 200, "test": 100})


def tiny_config(**overrides):
    base = dict(
        population_size=2,
        culling_rate=0.5,
        culling_interval=5,
        iterations=10,
        batch_size=8,
        feature_size=16,
        hidden_size=8,
        embed_size=8,
        eval_batches=1,
        eval_batch_size=16,
        jaccard_samples=1,
        topo_pairs=200,
        seed=0,
    )
    base.update(overrides)
    return LteConfig(**base)


def meta(agent_id, losses, kind="sender"):
    return AgentMeta(agent_id=agent_id, kind=kind, age=len(losses), loss_history=list(losses))


class TestFitness:
    def test_constant_history(self):
        assert fitness(meta(0, [1.0, 1.0, 1.0]), 3) == 1.0

    def test_average_of_first_two(self):
        assert fitness(meta(0, [2.0, 1.0, 0.5]), 2) == pytest.approx(1.5)

    def test_truncation_ignores_later_losses(self):
        m = meta(0, [2.0, 1.0])
        before = fitness(m, 2)
        for extra in (100.0, 0.0, 55.5):
            m.loss_history.append(extra)
            m.age += 1
            assert fitness(m, 2) == before

    def test_matches_bruteforce_average(self):
        rng = new_rng(0)
        for _ in range(100):
            losses = rng.random(int(rng.integers(1, 30))).tolist()
            t = int(rng.integers(1, len(losses) + 1))
            assert fitness(meta(0, losses), t) == pytest.approx(sum(losses[:t]) / t)

    def test_zero_age_rejected(self):
        with pytest.raises(ContractError):
            fitness(meta(0, []), 0)


class TestSelectReplacementIndices:
    def test_quarter_of_sixteen_is_four(self):
        metas = [meta(i, [1.0]) for i in range(16)]
        for policy in CullingPolicy:
            picked = select_replacement_indices(metas, policy, 0.25, new_rng(1))
            assert len(picked) == 4

    def test_cu_age_selects_oldest(self):
        ages = [9, 8, 3, 5, 14, 2, 11, 1]
        metas = [meta(i, [1.0] * a) for i, a in enumerate(ages)]
        picked = select_replacement_indices(metas, CullingPolicy.CU_AGE, 0.5, new_rng(2))
        assert sorted(picked) == sorted(np.argsort(ages)[-4:].tolist())

    def test_cu_best_matches_bruteforce_sort(self):
        rng = new_rng(3)
        for _ in range(50):
            n = int(rng.integers(4, 17))
            metas = [meta(i, rng.random(int(rng.integers(2, 10))).tolist()) for i in range(n)]
            youngest = min(m.age for m in metas)
            picked = select_replacement_indices(metas, CullingPolicy.CU_BEST, 0.25, rng)
            k = int(0.25 * n)
            oracle = sorted(range(n), key=lambda i: (-fitness(metas[i], youngest), i))[:k]
            assert sorted(picked) == sorted(oracle)

    def test_co_evolution_never_selects_best(self):
        rng = new_rng(4)
        for _ in range(200):
            n = int(rng.integers(2, 9))
            metas = [meta(i, rng.random(3).tolist()) for i in range(n)]
            picked = select_replacement_indices(metas, CullingPolicy.CO_EVOLUTION, 0.5, rng)
            assert best_index(metas, 3) not in picked

    def test_co_evolution_all_tied_still_protects_best(self):
        metas = [meta(i, [1.0, 1.0]) for i in range(4)]
        picked = select_replacement_indices(metas, CullingPolicy.CO_EVOLUTION, 0.5, new_rng(5))
        assert best_index(metas, 2) == 0  # all tied: lowest id wins
        assert 0 not in picked

    def test_cu_random_uniformish(self):
        metas = [meta(i, [1.0]) for i in range(8)]
        counts = np.zeros(8)
        rng = new_rng(6)
        for _ in range(4000):
            for i in select_replacement_indices(metas, CullingPolicy.CU_RANDOM, 0.25, rng):
                counts[i] += 1
        freq = counts / 4000
        assert np.abs(freq - 0.25).max() < 0.03


class TestCull:
    def build_population(self, cfg, trained_batches=2):
        from lte.population import _initial_population

        pop = _initial_population(cfg, new_rng(cfg.seed))
        for agent in pop.senders + pop.receivers:
            for b in range(trained_batches):
                agent.record_batch(1.0 - 0.1 * b - 0.01 * agent.meta.agent_id)
        return pop

    def test_population_size_invariant_and_new_agents_age_zero(self):
        cfg = tiny_config(population_size=4, culling_rate=0.25)
        pop = self.build_population(cfg)
        report = cull(pop, cfg, new_rng(9))
        assert len(pop.senders) == len(pop.receivers) == 4
        assert len(report) == 2  # one replacement per role
        for rep in report:
            agent = pop.role(rep.role)[rep.agent_id]
            assert agent.meta.age == 0
            assert agent.meta.loss_history == []

    def test_co_evolution_children_one_edit_from_best(self):
        cfg = tiny_config(population_size=4, culling_rate=0.5, policy=CullingPolicy.CO_EVOLUTION)
        pop = self.build_population(cfg)
        bests = {
            role: pop.role(role)[best_index([a.meta for a in pop.role(role)], 2)].meta.genotype
            for role in ("sender", "receiver")
        }
        report = cull(pop, cfg, new_rng(10))
        assert report  # two per role
        for rep in report:
            assert rep.genotype is not None
            assert edit_distance(bests[rep.role], rep.genotype) == 1
            assert pop.role(rep.role)[rep.agent_id].meta.genotype == rep.genotype

    def test_cu_random_reproducible(self):
        cfg = tiny_config(population_size=4, culling_rate=0.25)
        a = cull(self.build_population(cfg), cfg, new_rng(11))
        b = cull(self.build_population(cfg), cfg, new_rng(11))
        assert [(r.role, r.agent_id) for r in a] == [(r.role, r.agent_id) for r in b]


class TestLteRun:
    def test_snapshot_and_cull_schedule(self):
        ds = Dataset(TINY_DATA)
        cfg = tiny_config(iterations=10, culling_interval=5)
        result = lte_run(cfg, ds)
        assert [r.iteration for r in result.records] == [5, 10]
        # one replacement per role per cull with rate 0.5 over 2 agents
        assert len(result.replacements) == 2 * 2 * 1

    def test_pair_sampling_uniform(self):
        rng = new_rng(12)
        counts_s = np.zeros(4)
        counts_r = np.zeros(4)
        for _ in range(100_000):
            s, r = sample_pair_indices(rng, 4)
            counts_s[s] += 1
            counts_r[r] += 1
        assert np.abs(counts_s / 100_000 - 0.25).max() < 0.02
        assert np.abs(counts_r / 100_000 - 0.25).max() < 0.02

    def test_all_policies_complete_with_finite_metrics(self):
        ds = Dataset(TINY_DATA)
        for policy in CullingPolicy:
            cfg = tiny_config(iterations=20, culling_interval=10, policy=policy, seed=3)
            result = lte_run(cfg, ds)
            assert len(result.records) == 2
            for record in result.records:
                for col in ("accuracy", "loss", "avg_entropy", "jaccard", "match_rate",
                            "unique_proportion", "unique_messages", "topo_sim"):
                    assert np.isfinite(getattr(record, col)), (policy, col)

    def test_run_writes_layout(self, tmp_path):
        ds = Dataset(TINY_DATA)
        cfg = tiny_config(iterations=10, culling_interval=5, policy=CullingPolicy.CO_EVOLUTION, seed=5)
        lte_run(cfg, ds, out_dir=tmp_path)
        assert (tmp_path / "checkpoints" / "iter_0000005" / "sender_0.ckpt").exists()
        assert (tmp_path / "checkpoints" / "final" / "receiver_1.ckpt").exists()
        lines = (tmp_path / "genotypes.jsonl").read_text().strip().splitlines()
        assert lines
        for line in lines:
            row = json.loads(line)
            assert row["role"] in ("sender", "receiver")
            parse_genotype(json.dumps(row["genotype"]))

    def test_invalid_config_rejected(self):
        with pytest.raises(ConfigError):
            tiny_config(culling_rate=1.0).validate()
        with pytest.raises(ConfigError):
            tiny_config(population_size=2, culling_rate=0.25).validate()  # culls nobody

    def test_deterministic_records(self):
        ds = Dataset(TINY_DATA)
        cfg = tiny_config(iterations=10, culling_interval=5, seed=7)
        a = lte_run(cfg, ds)
        b = lte_run(cfg, ds)
        assert a.records == b.records
