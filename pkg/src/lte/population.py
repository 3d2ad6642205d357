"""Population training loop with periodic culling.

Each iteration trains one uniformly sampled (sender, receiver) pair on one
batch. Every `culling_interval` iterations the population is evaluated and
then culled: the cultural policies replace agents with fresh LSTM learners
(picked at random, by age, or by worst fitness), while co-evolution
replaces the worst learners with fresh-weight mutations of the best
agent's cell genotype, per role.

Fitness is an agent's mean loss over its first T batches, where T is the
age of the population's youngest agent; lower is better (a faster
learner), so culling removes the highest values.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from .agents import AgentConfig, AgentMeta, Receiver, Sender, init_agent, save_checkpoint
from .autodiff import RandomStream, new_rng
from .errors import ConfigError, ContractError, NumericError
from .game import Dataset, Trainer, play_batch, sample_batch
from .genome import Genotype, initial_genotype, mutate_genotype, serialize_genotype
from .metrics import EvalSettings, MetricsRecord, evaluate_population

# seed-stream tags so every RNG purpose is independent of the others
_STREAM_WEIGHTS, _STREAM_LOOP, _STREAM_CULL, _STREAM_METRICS = 1, 2, 3, 4


class CullingPolicy(str, Enum):
    CU_RANDOM = "cu-random"
    CU_AGE = "cu-age"
    CU_BEST = "cu-best"
    CO_EVOLUTION = "co-evolution"


@dataclass
class LteConfig:
    population_size: int = 4
    culling_rate: float = 0.25
    culling_interval: int = 200
    iterations: int = 4000
    batch_size: int = 128
    vocab_size: int = 4
    max_len: int = 5
    distractors: int = 3
    feature_size: int = 64
    hidden_size: int = 64
    embed_size: int = 64
    tau: float = 1.2
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    reset_optimizer_per_batch: bool = True
    sender_feedback: bool = True
    node_cap: int = 8
    policy: CullingPolicy = CullingPolicy.CU_RANDOM
    seed: int = 0
    eval_batches: int = 4
    eval_batch_size: int = 256
    jaccard_samples: int = 10
    topo_pairs: int = 5000

    def validate(self) -> None:
        if self.population_size < 1:
            raise ConfigError("population_size must be >= 1")
        if not 0.0 <= self.culling_rate < 1.0:
            raise ConfigError(f"culling_rate must lie in [0, 1), got {self.culling_rate}")
        if self.culling_rate > 0 and self.replacements_per_role() < 1:
            raise ConfigError(
                f"culling_rate {self.culling_rate} with population {self.population_size} culls nobody"
            )
        for name in ("culling_interval", "iterations", "batch_size", "vocab_size",
                     "max_len", "distractors", "feature_size", "hidden_size", "embed_size"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.tau <= 0:
            raise ConfigError("tau must be positive")

    def replacements_per_role(self) -> int:
        return math.floor(self.culling_rate * self.population_size)

    def agent_config(self) -> AgentConfig:
        return AgentConfig(
            feature_size=self.feature_size,
            hidden_size=self.hidden_size,
            embed_size=self.embed_size,
            vocab_size=self.vocab_size,
            max_len=self.max_len,
            sender_feedback=self.sender_feedback,
        )

    def eval_settings(self) -> EvalSettings:
        return EvalSettings(
            distractors=self.distractors,
            tau=self.tau,
            eval_batches=self.eval_batches,
            eval_batch_size=self.eval_batch_size,
            jaccard_samples=self.jaccard_samples,
            topo_pairs=self.topo_pairs,
        )

    def trainer(self) -> Trainer:
        return Trainer(lr=self.lr, beta1=self.beta1, beta2=self.beta2, eps=self.eps,
                       reset_per_batch=self.reset_optimizer_per_batch)


@dataclass
class Population:
    senders: list[Sender]
    receivers: list[Receiver]

    def role(self, name: str):
        return self.senders if name == "sender" else self.receivers


def fitness(meta: AgentMeta, youngest_age: int) -> float:
    """Mean of the agent's first `youngest_age` losses (lower = faster learner)."""
    if youngest_age < 1:
        raise ContractError("no culling before any training: youngest age is 0")
    if meta.age < youngest_age:
        raise ContractError(
            f"agent {meta.agent_id} has age {meta.age} < youngest age {youngest_age}"
        )
    window = meta.loss_history[:youngest_age]
    return sum(window) / youngest_age


def best_index(metas: list[AgentMeta], youngest_age: int) -> int:
    """Index of the fittest agent; ties break toward the lower id."""
    scored = [(fitness(m, youngest_age), m.agent_id, i) for i, m in enumerate(metas)]
    return min(scored)[2]


def select_replacement_indices(
    metas: list[AgentMeta],
    policy: CullingPolicy,
    culling_rate: float,
    rng: RandomStream,
) -> list[int]:
    """Indices of the agents to replace in one role, k = floor(rate * N).

    cu-random picks uniformly, cu-age the oldest, cu-best and co-evolution
    the worst learners (highest fitness cost). Ties break toward the lower
    id; co-evolution never selects the current best agent.
    """
    n = len(metas)
    k = math.floor(culling_rate * n)
    if k == 0:
        return []
    if policy is CullingPolicy.CU_RANDOM:
        return sorted(int(i) for i in rng.choice(n, size=k, replace=False))
    if policy is CullingPolicy.CU_AGE:
        ranked = sorted(range(n), key=lambda i: (-metas[i].age, metas[i].agent_id))
        return sorted(ranked[:k])
    youngest = min(m.age for m in metas)
    candidates = list(range(n))
    if policy is CullingPolicy.CO_EVOLUTION:
        candidates.remove(best_index(metas, youngest))
    ranked = sorted(candidates, key=lambda i: (-fitness(metas[i], youngest), metas[i].agent_id))
    return sorted(ranked[:k])


@dataclass
class Replacement:
    role: str
    agent_id: int
    genotype: Genotype | None  # None means a fresh LSTM


def cull(population: Population, cfg: LteConfig, rng: RandomStream) -> list[Replacement]:
    """Replace the selected agents in both roles; population size is unchanged."""
    report: list[Replacement] = []
    agent_cfg = cfg.agent_config()
    for role in ("sender", "receiver"):
        agents = population.role(role)
        metas = [a.meta for a in agents]
        selected = select_replacement_indices(metas, cfg.policy, cfg.culling_rate, rng)
        if cfg.policy is CullingPolicy.CO_EVOLUTION and selected:
            parent = metas[best_index(metas, min(m.age for m in metas))].genotype
        for i in selected:
            if cfg.policy is CullingPolicy.CO_EVOLUTION:
                child = mutate_genotype(parent, rng)
                agents[i] = init_agent(role, child, agent_cfg, rng, agent_id=i)
                report.append(Replacement(role, i, child))
            else:
                agents[i] = init_agent(role, "lstm", agent_cfg, rng, agent_id=i)
                report.append(Replacement(role, i, None))
    return report


def _initial_population(cfg: LteConfig, rng: RandomStream) -> Population:
    agent_cfg = cfg.agent_config()

    def build(role):
        agents = []
        for i in range(cfg.population_size):
            if cfg.policy is CullingPolicy.CO_EVOLUTION:
                arch = initial_genotype(rng, node_cap=cfg.node_cap)
            else:
                arch = "lstm"
            agents.append(init_agent(role, arch, agent_cfg, rng, agent_id=i))
        return agents

    return Population(senders=build("sender"), receivers=build("receiver"))


@dataclass
class RunResult:
    config: LteConfig
    records: list[MetricsRecord]
    population: Population
    replacements: list[tuple[int, Replacement]]  # (iteration, replacement)


def config_dict(cfg: LteConfig) -> dict:
    payload = dataclasses.asdict(cfg)
    payload["policy"] = cfg.policy.value
    return payload


def _write_snapshot(out_dir: Path, iteration: int, population: Population,
                    cfg: LteConfig, dataset: Dataset) -> None:
    snap = out_dir / "checkpoints" / (f"iter_{iteration:07d}" if iteration >= 0 else "final")
    snap.mkdir(parents=True, exist_ok=True)
    for role in ("sender", "receiver"):
        for agent in population.role(role):
            save_checkpoint(agent, snap / f"{role}_{agent.meta.agent_id}.ckpt")
    meta = {
        "iteration": iteration if iteration >= 0 else cfg.iterations,
        "setup": cfg.policy.value,
        "seed": cfg.seed,
        "lte": config_dict(cfg),
        "dataset": dataset.manifest.to_json_dict(),
    }
    (snap / "snapshot.json").write_text(json.dumps(meta, indent=2) + "\n")


def metric_rng(seed: int, iteration: int) -> RandomStream:
    """The snapshot stream; reconstructable from (seed, iteration) alone."""
    return new_rng(seed, _STREAM_METRICS, iteration)


def sample_pair_indices(rng: RandomStream, n: int) -> tuple[int, int]:
    """One uniformly chosen (sender, receiver) slot pair."""
    return int(rng.integers(n)), int(rng.integers(n))


def lte_run(cfg: LteConfig, dataset: Dataset, out_dir=None) -> RunResult:
    """Run the full training schedule; snapshots happen strictly before culls."""
    cfg.validate()
    weights_rng = new_rng(cfg.seed, _STREAM_WEIGHTS)
    loop_rng = new_rng(cfg.seed, _STREAM_LOOP)
    cull_rng = new_rng(cfg.seed, _STREAM_CULL)
    population = _initial_population(cfg, weights_rng)
    trainer = cfg.trainer()
    out_path = Path(out_dir) if out_dir is not None else None

    records: list[MetricsRecord] = []
    replacements: list[tuple[int, Replacement]] = []
    for i in range(1, cfg.iterations + 1):
        s_idx, r_idx = sample_pair_indices(loop_rng, cfg.population_size)
        sender = population.senders[s_idx]
        receiver = population.receivers[r_idx]
        batch = sample_batch(dataset, cfg.distractors, cfg.batch_size, loop_rng)
        try:
            play_batch(sender, receiver, batch, tau=cfg.tau, mode="train", rng=loop_rng, trainer=trainer)
        except NumericError as e:
            raise NumericError(
                f"iteration {i} (sender {sender.meta.agent_id}, receiver {receiver.meta.agent_id}): {e}"
            ) from e
        if i % cfg.culling_interval == 0:
            records.append(
                evaluate_population(
                    population.senders, population.receivers, dataset, cfg.eval_settings(),
                    metric_rng(cfg.seed, i), iteration=i, setup=cfg.policy.value, seed=cfg.seed,
                )
            )
            if out_path is not None:
                _write_snapshot(out_path, i, population, cfg, dataset)
            if cfg.culling_rate > 0:
                for rep in cull(population, cfg, cull_rng):
                    replacements.append((i, rep))

    if out_path is not None:
        _write_snapshot(out_path, -1, population, cfg, dataset)
        if cfg.policy is CullingPolicy.CO_EVOLUTION:
            with open(out_path / "genotypes.jsonl", "w") as fh:
                for iteration, rep in replacements:
                    fh.write(json.dumps({
                        "iteration": iteration,
                        "role": rep.role,
                        "agent_id": rep.agent_id,
                        "genotype": json.loads(serialize_genotype(rep.genotype)),
                    }) + "\n")
    return RunResult(cfg, records, population, replacements)
