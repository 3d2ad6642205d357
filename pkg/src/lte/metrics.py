"""Evaluation battery for sender/receiver populations.

Message-level metrics are computed over the 162 noiseless class centroids.
All decoding is greedy (argmax per step) so metrics depend only on the RNG
seed and the frozen agents, except token-set similarity which follows the
sampled-message protocol (a configurable number of samples per input).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .agents import Message, Receiver, Sender
from .autodiff import RandomStream
from .errors import ContractError
from .game import Dataset, onehot_message, onehot_symbol, play_batch, sample_batch


@dataclass
class MetricsRecord:
    iteration: int
    setup: str
    seed: int
    accuracy: float
    loss: float
    avg_entropy: float
    avg_convergence: float
    jaccard: float
    match_rate: float
    unique_proportion: float
    unique_messages: float
    topo_sim: float

    COLUMNS = (
        "iteration",
        "setup",
        "seed",
        "accuracy",
        "loss",
        "avg_entropy",
        "avg_convergence",
        "jaccard",
        "match_rate",
        "unique_proportion",
        "unique_messages",
        "topo_sim",
    )

    def as_row(self) -> list:
        return [getattr(self, c) for c in self.COLUMNS]


def pearson(x, y) -> float | None:
    """Sample Pearson correlation; None when either side has zero variance."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1 or len(x) < 2:
        raise ContractError(f"pearson needs two equal-length vectors of >= 2 values, got {x.shape} and {y.shape}")
    xc = x - x.mean()
    yc = y - y.mean()
    sx = float(np.sqrt((xc * xc).sum()))
    sy = float(np.sqrt((yc * yc).sum()))
    if sx == 0.0 or sy == 0.0:
        return None
    return float((xc * yc).sum() / (sx * sy))


def jaccard_of_sets(a: frozenset, b: frozenset) -> float:
    """Set Jaccard; two empty sets count as identical."""
    if not a and not b:
        return 1.0
    return len(a & b) / len(a | b)


def decode_messages(sender: Sender, features: np.ndarray, mode: str = "greedy",
                    rng: RandomStream | None = None, tau: float = 1.2) -> list[Message]:
    return sender.generate(features, mode=mode, tau=tau, rng=rng).messages


def _by_id(senders):
    # canonical order, so caller-side permutations cannot shift RNG draws
    return sorted(senders, key=lambda s: s.meta.agent_id)


def jaccard_similarity(
    senders: list[Sender],
    eval_features: np.ndarray,
    samples_per_input: int,
    rng: RandomStream,
    tau: float = 1.2,
) -> float:
    """Mean token-set Jaccard over sender pairs, inputs, and sampled messages."""
    if len(senders) < 2:
        raise ContractError("token-set similarity needs at least two senders")
    senders = _by_id(senders)
    # sets[s][k][i]: sender s, sample k, input i
    sets = [
        [[m.token_set() for m in decode_messages(s, eval_features, "eval", rng, tau)]
         for _ in range(samples_per_input)]
        for s in senders
    ]
    n_inputs = eval_features.shape[0]
    total, count = 0.0, 0
    for a in range(len(senders)):
        for b in range(a + 1, len(senders)):
            for k in range(samples_per_input):
                row_a, row_b = sets[a][k], sets[b][k]
                total += sum(jaccard_of_sets(row_a[i], row_b[i]) for i in range(n_inputs))
                count += n_inputs
    return total / count


def message_match_stats(senders: list[Sender], eval_features: np.ndarray, tau: float = 1.2) -> tuple[float, float]:
    """(match_rate, unique_proportion) of greedy messages across senders.

    match_rate is the fraction of unordered sender pairs emitting identical
    sequences for the same input; unique_proportion is the number of
    distinct messages divided by the number of senders. Both averaged over
    inputs.
    """
    if len(senders) < 2:
        raise ContractError("match statistics need at least two senders")
    keys = [[m.key() for m in decode_messages(s, eval_features, "greedy", tau=tau)] for s in _by_id(senders)]
    n_senders, n_inputs = len(senders), eval_features.shape[0]
    n_pairs = n_senders * (n_senders - 1) // 2
    match_total, unique_total = 0.0, 0.0
    for i in range(n_inputs):
        per_input = [keys[s][i] for s in range(n_senders)]
        matches = sum(
            per_input[a] == per_input[b]
            for a in range(n_senders)
            for b in range(a + 1, n_senders)
        )
        match_total += matches / n_pairs
        unique_total += len(set(per_input)) / n_senders
    return match_total / n_inputs, unique_total / n_inputs


def unique_message_count(sender: Sender, eval_features: np.ndarray, tau: float = 1.2) -> int:
    """Distinct greedy messages over the evaluation inputs."""
    return len({m.key() for m in decode_messages(sender, eval_features, "greedy", tau=tau)})


def topographic_similarity_from_vectors(
    sym_vecs: np.ndarray,
    msg_vecs: np.ndarray,
    rng: RandomStream,
    pairs: int = 5000,
) -> tuple[float, bool]:
    """Pearson rho between meaning-space and message-space cosine similarities.

    Samples `pairs` distinct index pairs. Returns (rho, degenerate); a
    language with zero variance on either side reports rho 0, degenerate.
    """
    n = sym_vecs.shape[0]
    if n < 2:
        raise ContractError("topographic similarity needs >= 2 distinct inputs")

    def unit(rows):
        return rows / np.linalg.norm(rows, axis=1, keepdims=True)

    su, mu = unit(sym_vecs), unit(msg_vecs)
    i = rng.integers(0, n, size=pairs)
    j = rng.integers(0, n - 1, size=pairs)
    j = np.where(j >= i, j + 1, j)  # distinct pair without rejection
    x = np.einsum("pk,pk->p", su[i], su[j])
    y = np.einsum("pk,pk->p", mu[i], mu[j])
    rho = pearson(x, y)
    if rho is None:
        return 0.0, True
    return rho, False


def topographic_similarity(
    sender: Sender,
    rng: RandomStream,
    pairs: int = 5000,
    eval_features: np.ndarray | None = None,
    symbols=None,
    tau: float = 1.2,
) -> tuple[float, bool]:
    """Topographic similarity of one sender's greedy language."""
    sym_vecs = np.stack([onehot_symbol(s) for s in symbols])
    msgs = decode_messages(sender, eval_features, "greedy", tau=tau)
    msg_vecs = np.stack([onehot_message(m) for m in msgs])
    return topographic_similarity_from_vectors(sym_vecs, msg_vecs, rng, pairs)


def avg_agent_entropy(senders: list[Sender], eval_features: np.ndarray,
                      rng: RandomStream, tau: float = 1.2) -> float:
    """Mean per-step generation entropy (nats) over senders and inputs."""
    if not senders:
        raise ContractError("need at least one sender")
    return float(np.mean([
        s.generate(eval_features, mode="eval", tau=tau, rng=rng).entropy for s in _by_id(senders)
    ]))


def avg_population_convergence(metas, youngest_age: int) -> float:
    """Mean fitness over agents of both roles at the population's youngest age."""
    from .population import fitness

    if youngest_age < 1:
        raise ContractError("population convergence needs every agent trained at least once")
    return float(np.mean([fitness(meta, youngest_age) for meta in metas]))


@dataclass
class EvalSettings:
    distractors: int = 3
    tau: float = 1.2
    eval_batches: int = 4
    eval_batch_size: int = 256
    jaccard_samples: int = 10
    topo_pairs: int = 5000


def evaluate_population(
    senders: list[Sender],
    receivers: list[Receiver],
    dataset: Dataset,
    settings: EvalSettings,
    rng: RandomStream,
    iteration: int = 0,
    setup: str = "",
    seed: int = 0,
) -> MetricsRecord:
    """Full metrics snapshot over frozen agents; deterministic given `rng`."""
    senders = _by_id(senders)
    receivers = _by_id(receivers)
    accs, losses = [], []
    for _ in range(settings.eval_batches):
        s = senders[rng.integers(len(senders))]
        r = receivers[rng.integers(len(receivers))]
        batch = sample_batch(dataset, settings.distractors, settings.eval_batch_size, rng, split="validation")
        res = play_batch(s, r, batch, tau=settings.tau, mode="eval", rng=rng)
        accs.append(res.accuracy)
        losses.append(res.loss)

    centroids = dataset.centroids
    entropy = avg_agent_entropy(senders, centroids, rng, settings.tau)
    metas = [a.meta for a in senders] + [a.meta for a in receivers]
    youngest = min(m.age for m in metas)
    convergence = (
        avg_population_convergence(metas, youngest) if youngest >= 1 else float("nan")
    )
    jac = jaccard_similarity(senders, centroids, settings.jaccard_samples, rng, settings.tau)
    match_rate, unique_prop = message_match_stats(senders, centroids, settings.tau)
    uniques = float(np.mean([unique_message_count(s, centroids, settings.tau) for s in senders]))
    topo = float(np.mean([
        topographic_similarity(s, rng, settings.topo_pairs, centroids, dataset.symbols, settings.tau)[0]
        for s in senders
    ]))
    return MetricsRecord(
        iteration=iteration,
        setup=setup,
        seed=seed,
        accuracy=float(np.mean(accs)),
        loss=float(np.mean(losses)),
        avg_entropy=entropy,
        avg_convergence=convergence,
        jaccard=jac,
        match_rate=match_rate,
        unique_proportion=unique_prop,
        unique_messages=uniques,
        topo_sim=topo,
    )
