"""Shapes meaning space and the referential game round.

Symbols are (shape, colour, size, row, col) tuples; 3*3*2*9 = 162 classes.
Instead of CNN image features, each instance is a fixed seeded random
projection of the symbol's one-hot encoding plus per-instance Gaussian
noise, so one symbol maps to many feature vectors.
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from . import autodiff as ad
from .agents import Message, Receiver, Sender
from .autodiff import AdamState, RandomStream, Tape, Tensor, adam_step, backward, cross_entropy, new_rng
from .errors import ConfigError, ContractError

SHAPES = ("circle", "square", "triangle")
COLOURS = ("red", "green", "blue")
SIZES = ("small", "big")
GRID_POSITIONS = (0, 1, 2)

SYMBOL_DIM = 3 + 3 + 2 + 3 + 3  # shape + colour + size + row + col one-hots
N_SYMBOLS = len(SHAPES) * len(COLOURS) * len(SIZES) * len(GRID_POSITIONS) ** 2

SPLITS = ("train", "validation", "test")


@dataclass(frozen=True)
class SymbolicDescription:
    shape: str
    colour: str
    size: str
    row: int
    col: int


def enumerate_symbols() -> list[SymbolicDescription]:
    """All 162 symbols in lexicographic (shape, colour, size, row, col) order."""
    return [
        SymbolicDescription(sh, co, si, r, c)
        for sh, co, si, r, c in product(SHAPES, COLOURS, SIZES, GRID_POSITIONS, GRID_POSITIONS)
    ]


def onehot_symbol(sym: SymbolicDescription) -> np.ndarray:
    """14-dim concatenated one-hots; exactly five ones."""
    vec = np.zeros(SYMBOL_DIM)
    vec[SHAPES.index(sym.shape)] = 1.0
    vec[3 + COLOURS.index(sym.colour)] = 1.0
    vec[6 + SIZES.index(sym.size)] = 1.0
    vec[8 + sym.row] = 1.0
    vec[11 + sym.col] = 1.0
    return vec


def onehot_message(msg: Message) -> np.ndarray:
    """Per-position one-hot concatenation; padding encodes the bound token."""
    n = msg.vocab_size + 1
    vec = np.zeros(len(msg.tokens) * n)
    for t, token in enumerate(msg.tokens):
        vec[t * n + int(token)] = 1.0
    return vec


def make_projection(seed: int, z: int) -> np.ndarray:
    """Fixed (z, 14) projection, entries iid normal scaled by 1/sqrt(14)."""
    rng = new_rng(seed)
    return rng.standard_normal((z, SYMBOL_DIM)) / np.sqrt(SYMBOL_DIM)


def featurize(
    sym: SymbolicDescription,
    instance_rng: RandomStream,
    projection: np.ndarray,
    sigma: float = 0.1,
) -> np.ndarray:
    """z-dim feature vector: projected one-hot plus per-instance noise."""
    return projection @ onehot_symbol(sym) + sigma * instance_rng.standard_normal(projection.shape[0])


@dataclass(frozen=True)
class DatasetManifest:
    """Everything needed to regenerate a dataset bit-identically."""

    projection_seed: int
    z: int
    sigma: float
    split_sizes: dict[str, int]
    instance_seeds: dict[str, int]

    @classmethod
    def from_seed(cls, seed: int, z: int = 64, sigma: float = 0.1, split_sizes: dict | None = None):
        sizes = dict(split_sizes or {"train": 8000, "validation": 1000, "test": 4000})
        gen = new_rng(seed, 7)
        projection_seed = int(gen.integers(2**62))
        instance_seeds = {name: int(gen.integers(2**62)) for name in SPLITS}
        return cls(projection_seed, z, sigma, sizes, instance_seeds)

    def to_json_dict(self) -> dict:
        return {
            "projection_seed": self.projection_seed,
            "z": self.z,
            "sigma": self.sigma,
            "split_sizes": dict(self.split_sizes),
            "instance_seeds": dict(self.instance_seeds),
        }

    @classmethod
    def from_json_dict(cls, payload: dict) -> "DatasetManifest":
        return cls(
            projection_seed=int(payload["projection_seed"]),
            z=int(payload["z"]),
            sigma=float(payload["sigma"]),
            split_sizes={k: int(v) for k, v in payload["split_sizes"].items()},
            instance_seeds={k: int(v) for k, v in payload["instance_seeds"].items()},
        )


@dataclass
class Instance:
    sym: SymbolicDescription
    features: np.ndarray


@dataclass
class Split:
    features: np.ndarray  # (n, z)
    class_idx: np.ndarray  # (n,) indices into enumerate_symbols()

    def __len__(self):
        return len(self.class_idx)


class Dataset:
    """Immutable after construction; regenerated exactly from its manifest."""

    def __init__(self, manifest: DatasetManifest):
        self.manifest = manifest
        self.symbols = enumerate_symbols()
        self.projection = make_projection(manifest.projection_seed, manifest.z)
        onehots = np.stack([onehot_symbol(s) for s in self.symbols])
        self.centroids = onehots @ self.projection.T  # (162, z), noiseless features
        self.splits: dict[str, Split] = {}
        for name in SPLITS:
            size = manifest.split_sizes.get(name, 0)
            rng = new_rng(manifest.instance_seeds[name])
            class_idx = rng.integers(0, N_SYMBOLS, size=size)
            noise = rng.standard_normal((size, manifest.z))
            self.splits[name] = Split(self.centroids[class_idx] + manifest.sigma * noise, class_idx)

    def split(self, name: str) -> Split:
        if name not in self.splits:
            raise ConfigError(f"unknown split {name!r}")
        return self.splits[name]

    def instance(self, split_name: str, i: int) -> Instance:
        split = self.split(split_name)
        return Instance(self.symbols[split.class_idx[i]], split.features[i])


@dataclass
class GameBatch:
    target_features: np.ndarray  # (b, z)
    candidates: np.ndarray  # (b, n+1, z)
    target_index: np.ndarray  # (b,)
    target_class: np.ndarray  # (b,)


def sample_round(dataset: Dataset, n: int, rng: RandomStream, split: str = "train"):
    """One round: uniform target, n distractors of other classes, shuffled position."""
    if n < 1:
        raise ConfigError(f"need at least one distractor, got n={n}")
    sp = dataset.split(split)
    if n + 1 > N_SYMBOLS:
        raise ConfigError(f"{n + 1} candidates exceed the {N_SYMBOLS} symbol classes")
    if len(sp) < n + 1:
        raise ConfigError(f"split {split!r} has only {len(sp)} instances for {n + 1} candidates")
    t = int(rng.integers(len(sp)))
    target_class = sp.class_idx[t]
    chosen = {t}
    distractors: list[int] = []
    while len(distractors) < n:
        j = int(rng.integers(len(sp)))
        if j in chosen or sp.class_idx[j] == target_class:
            continue
        chosen.add(j)
        distractors.append(j)
    position = int(rng.integers(n + 1))
    order = distractors[:position] + [t] + distractors[position:]
    candidates = [dataset.instance(split, j) for j in order]
    return dataset.instance(split, t), candidates, position


def sample_batch(dataset: Dataset, n: int, batch_size: int, rng: RandomStream, split: str = "train") -> GameBatch:
    """Vectorized batch of rounds with the same sampling contract as sample_round."""
    sp = dataset.split(split)
    if n + 1 > N_SYMBOLS:
        raise ConfigError(f"{n + 1} candidates exceed the {N_SYMBOLS} symbol classes")
    z = dataset.manifest.z
    cands = np.empty((batch_size, n + 1, z))
    target_index = np.empty(batch_size, dtype=np.int64)
    target_class = np.empty(batch_size, dtype=np.int64)
    targets = np.empty((batch_size, z))
    for b in range(batch_size):
        t = int(rng.integers(len(sp)))
        cls = sp.class_idx[t]
        chosen = {t}
        picked: list[int] = []
        while len(picked) < n:
            j = int(rng.integers(len(sp)))
            if j in chosen or sp.class_idx[j] == cls:
                continue
            chosen.add(j)
            picked.append(j)
        pos = int(rng.integers(n + 1))
        order = picked[:pos] + [t] + picked[pos:]
        cands[b] = sp.features[order]
        targets[b] = sp.features[t]
        target_index[b] = pos
        target_class[b] = cls
    return GameBatch(targets, cands, target_index, target_class)


@dataclass
class Trainer:
    """Adam settings shared by both agents of a training pair.

    With reset_per_batch (the default) every batch starts from a fresh
    optimizer state; otherwise state persists per agent object.
    """

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    reset_per_batch: bool = True
    _states: "weakref.WeakKeyDictionary" = field(default_factory=weakref.WeakKeyDictionary, repr=False)

    def state_for(self, agent) -> AdamState:
        if self.reset_per_batch:
            return AdamState(lr=self.lr, beta1=self.beta1, beta2=self.beta2, eps=self.eps)
        state = self._states.get(agent)
        if state is None:
            state = self._states[agent] = AdamState(lr=self.lr, beta1=self.beta1, beta2=self.beta2, eps=self.eps)
        return state


@dataclass
class PlayResult:
    loss: float
    accuracy: float
    messages: list[Message]
    entropy: float


def play_batch(
    sender: Sender,
    receiver: Receiver,
    batch: GameBatch,
    tau: float = 1.2,
    mode: str = "train",
    rng: RandomStream | None = None,
    trainer: Trainer | None = None,
    freeze_sender: bool = False,
) -> PlayResult:
    """Play one batch of rounds; train mode backpropagates and Adam-steps both agents."""
    if mode not in ("train", "eval"):
        raise ContractError(f"unknown game mode {mode!r}")
    if mode == "train":
        trainer = trainer or Trainer()
        if freeze_sender:
            gen = sender.generate(batch.target_features, "eval", tau, rng)
            with Tape() as tape:
                scores = receiver.score_tokens(gen.tokens, batch.candidates)
                loss = cross_entropy(scores, batch.target_index)
            backward(tape, loss)
        else:
            with Tape() as tape:
                gen = sender.generate(batch.target_features, "train", tau, rng)
                scores = receiver.score_steps(gen.step_outputs, batch.candidates)
                loss = cross_entropy(scores, batch.target_index)
            backward(tape, loss)
            adam_step(sender.parameters(), sender.grads(), trainer.state_for(sender))
            sender.zero_grad()
            sender.record_batch(loss.item())
        adam_step(receiver.parameters(), receiver.grads(), trainer.state_for(receiver))
        receiver.zero_grad()
        receiver.record_batch(loss.item())
    else:
        gen = sender.generate(batch.target_features, "eval", tau, rng)
        scores = receiver.score_tokens(gen.tokens, batch.candidates)
        loss = cross_entropy(scores, batch.target_index)

    accuracy = float(np.mean(scores.data.argmax(axis=1) == batch.target_index))
    return PlayResult(loss.item(), accuracy, gen.messages, gen.entropy)
