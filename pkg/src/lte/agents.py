"""Sender and receiver agents for the referential game.

A sender maps a feature vector to a token sequence (hard one-hot samples in
training via the straight-through estimator, categorical samples during
evaluation, argmax for greedy decoding). A receiver embeds the sequence,
runs its recurrent cell, and scores candidate feature vectors by dot
product. Both carry age and per-batch loss history for fitness ranking.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import RandomStream, Tensor
from .cell import CellSpec, cell_step, compile_cell, init_cell_params, init_cell_state
from .errors import CheckpointFormatError, ContractError, DimensionError, NumericError
from .genome import Genotype, parse_genotype, serialize_genotype

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class AgentConfig:
    feature_size: int = 64
    hidden_size: int = 64
    embed_size: int = 64
    vocab_size: int = 4  # usable tokens; index vocab_size is the bound token
    max_len: int = 5
    sender_feedback: bool = True  # feed previous token's embedding into each step

    @property
    def bound_token(self) -> int:
        return self.vocab_size

    @property
    def n_tokens(self) -> int:
        return self.vocab_size + 1


@dataclass
class Message:
    """Token sequence; positions after the first bound token repeat it."""

    tokens: np.ndarray  # (max_len,) integer tokens
    vocab_size: int
    soft: np.ndarray | None = None  # (max_len, vocab_size+1) per-step distributions

    @property
    def bound_token(self) -> int:
        return self.vocab_size

    def length(self) -> int:
        """Steps generated, counting the terminating bound token."""
        hits = np.flatnonzero(self.tokens == self.bound_token)
        return int(hits[0]) + 1 if hits.size else len(self.tokens)

    def content_tokens(self) -> np.ndarray:
        """Tokens before the first bound token."""
        hits = np.flatnonzero(self.tokens == self.bound_token)
        end = int(hits[0]) if hits.size else len(self.tokens)
        return self.tokens[:end]

    def token_set(self) -> frozenset[int]:
        return frozenset(int(t) for t in self.content_tokens())

    def key(self) -> tuple[int, ...]:
        return tuple(int(t) for t in self.tokens)


@dataclass
class AgentMeta:
    agent_id: int
    kind: str  # "sender" | "receiver"
    age: int = 0
    loss_history: list[float] = field(default_factory=list)
    genotype: Genotype | None = None


@dataclass
class GenerationResult:
    messages: list[Message]
    step_outputs: list[Tensor]  # per-step (b, V+1) rows; graph-connected in train/soft
    distributions: np.ndarray  # (b, max_len, V+1)
    entropy: float  # mean per-step entropy in nats, padding excluded
    tokens: np.ndarray  # (b, max_len)


def _linear_init(rng: RandomStream, fan_in: int, shape) -> Tensor:
    a = fan_in**-0.5
    return Tensor(rng.uniform(-a, a, size=shape), requires_grad=True)


class _Agent:
    def __init__(self, cfg: AgentConfig, cell_spec: CellSpec, meta: AgentMeta):
        self.cfg = cfg
        self.cell_spec = cell_spec
        self.meta = meta
        self.params: dict[str, Tensor] = {}

    @property
    def arch(self) -> str:
        return self.cell_spec.kind

    def parameters(self) -> dict[str, Tensor]:
        return self.params

    def manifest(self) -> list[tuple[str, tuple[int, ...]]]:
        return [(name, t.shape) for name, t in self.params.items()]

    def zero_grad(self) -> None:
        for t in self.params.values():
            t.zero_grad()

    def grads(self) -> dict[str, np.ndarray | None]:
        return {name: t.grad for name, t in self.params.items()}

    def record_batch(self, loss: float) -> None:
        if not math.isfinite(loss):
            raise NumericError(f"non-finite loss {loss!r} for agent {self.meta.agent_id}")
        self.meta.age += 1
        self.meta.loss_history.append(float(loss))

    def param_checksum(self) -> str:
        digest = hashlib.sha256()
        for name in self.params:
            digest.update(np.ascontiguousarray(self.params[name].data).tobytes())
        return digest.hexdigest()


class Sender(_Agent):
    def __init__(self, cfg: AgentConfig, cell_spec: CellSpec, rng: RandomStream, meta: AgentMeta):
        super().__init__(cfg, cell_spec, meta)
        z, h, e, n = cfg.feature_size, cfg.hidden_size, cfg.embed_size, cfg.n_tokens
        self.params["input_proj.w"] = _linear_init(rng, z, (z, h))
        self.params["input_proj.b"] = _linear_init(rng, z, (h,))
        self.params.update(init_cell_params(cell_spec, rng))
        self.params["vocab_proj.w"] = _linear_init(rng, h, (h, n))
        self.params["vocab_proj.b"] = _linear_init(rng, h, (n,))
        self.params["embed.w"] = _linear_init(rng, n, (n, e))
        self.params["embed.sos"] = _linear_init(rng, n, (e,))

    def generate(
        self,
        features: np.ndarray,
        mode: str = "train",
        tau: float = 1.2,
        rng: RandomStream | None = None,
    ) -> GenerationResult:
        """Roll out up to max_len tokens for each feature row.

        Modes: "train" emits straight-through one-hots, "eval" samples the
        categorical at each step, "greedy" takes the argmax, and "soft" is a
        fully relaxed rollout (no stopping) used for gradient verification.
        """
        if mode not in ("train", "eval", "greedy", "soft"):
            raise ContractError(f"unknown generation mode {mode!r}")
        if mode != "greedy" and rng is None:
            raise ContractError(f"mode {mode!r} needs a random stream")
        if tau <= 0:
            raise ContractError(f"tau must be positive, got {tau}")
        cfg = self.cfg
        feats = np.asarray(features, dtype=ad.DTYPE)
        if feats.ndim != 2 or feats.shape[1] != cfg.feature_size:
            raise DimensionError(f"features shape {feats.shape}, expected (b, {cfg.feature_size})")
        b = feats.shape[0]
        bound = cfg.bound_token
        n = cfg.n_tokens

        h = Tensor(feats) @ self.params["input_proj.w"] + self.params["input_proj.b"]
        state = init_cell_state(self.cell_spec, b)
        if cfg.sender_feedback:
            x = Tensor(np.zeros((b, cfg.embed_size))) + self.params["embed.sos"]
        else:
            x = Tensor(np.zeros((b, cfg.embed_size)))

        alive = np.ones(b, dtype=bool)
        tokens = np.full((b, cfg.max_len), bound, dtype=np.int64)
        dists = np.zeros((b, cfg.max_len, n))
        dists[:, :, bound] = 1.0  # padded steps read as the bound token
        pad_row = np.zeros(n)
        pad_row[bound] = 1.0
        ent_sum, ent_count = 0.0, 0
        step_outputs: list[Tensor] = []

        for t in range(cfg.max_len):
            h, state = cell_step(self.cell_spec, self.params, x, h, state)
            logits = h @ self.params["vocab_proj.w"] + self.params["vocab_proj.b"]
            probs = ad._softmax_data(logits.data)
            dists[alive, t, :] = probs[alive]
            p = probs[alive]
            ent_sum += float(-(p * np.log(np.where(p > 0, p, 1.0))).sum())
            ent_count += int(alive.sum())

            if mode == "train":
                st = ad.gumbel_softmax_st(logits, tau, rng)
                hard = st.data.argmax(axis=1)
                if alive.all():
                    out_t = st
                else:
                    mask = Tensor(alive[:, None].astype(ad.DTYPE))
                    out_t = st * mask + Tensor(np.outer(~alive, pad_row))
            elif mode == "soft":
                noisy = logits + Tensor(ad.sample_gumbel(logits.shape, rng))
                out_t = ad.softmax(noisy * (1.0 / tau))
                hard = out_t.data.argmax(axis=1)
            else:
                if mode == "eval":
                    cdf = np.cumsum(probs, axis=1)
                    u = rng.random((b, 1))
                    hard = (u > cdf[:, :-1]).sum(axis=1)
                else:
                    hard = logits.data.argmax(axis=1)
                onehots = np.zeros((b, n))
                onehots[np.arange(b), np.where(alive, hard, bound)] = 1.0
                out_t = Tensor(onehots)

            tokens[alive, t] = hard[alive]
            step_outputs.append(out_t)
            if cfg.sender_feedback:
                x = out_t @ self.params["embed.w"]
            if mode != "soft":
                alive = alive & (tokens[:, t] != bound)

        messages = [Message(tokens[i].copy(), cfg.vocab_size, soft=dists[i].copy()) for i in range(b)]
        entropy = ent_sum / max(ent_count, 1)
        return GenerationResult(messages, step_outputs, dists, entropy, tokens)


class Receiver(_Agent):
    def __init__(self, cfg: AgentConfig, cell_spec: CellSpec, rng: RandomStream, meta: AgentMeta):
        super().__init__(cfg, cell_spec, meta)
        z, h, e, n = cfg.feature_size, cfg.hidden_size, cfg.embed_size, cfg.n_tokens
        self.params["embed.w"] = _linear_init(rng, n, (n, e))
        self.params.update(init_cell_params(cell_spec, rng))
        self.params["output_proj.w"] = _linear_init(rng, h, (h, z))
        self.params["output_proj.b"] = _linear_init(rng, h, (z,))

    def forward_steps(self, step_inputs: list[Tensor]) -> Tensor:
        """Run the cell over per-step token rows; map final hidden to features."""
        b = step_inputs[0].shape[0]
        h = Tensor(np.zeros((b, self.cfg.hidden_size)))
        state = init_cell_state(self.cell_spec, b)
        for x_t in step_inputs:
            emb = x_t @ self.params["embed.w"]
            h, state = cell_step(self.cell_spec, self.params, emb, h, state)
        return h @ self.params["output_proj.w"] + self.params["output_proj.b"]

    def score_steps(self, step_inputs: list[Tensor], candidates: np.ndarray) -> Tensor:
        """Scores (b, c) for constant candidate features of shape (b, c, z)."""
        return ad.candidate_scores(self.forward_steps(step_inputs), candidates)

    def score_tokens(self, tokens: np.ndarray, candidates: np.ndarray) -> Tensor:
        """Hard-token scoring; tokens index the embedding via one-hot rows."""
        tokens = np.asarray(tokens, dtype=np.int64)
        n = self.cfg.n_tokens
        b, length = tokens.shape
        steps = []
        for t in range(length):
            onehots = np.zeros((b, n))
            onehots[np.arange(b), tokens[:, t]] = 1.0
            steps.append(Tensor(onehots))
        return self.score_steps(steps, candidates)


def receiver_score(receiver: Receiver, message: Message, candidates, mode: str = "eval") -> np.ndarray:
    """Score one message against (c, z) candidate rows.

    Train mode multiplies the message's soft rows into the embedding;
    eval mode indexes it with the hard tokens.
    """
    cands = np.asarray(candidates, dtype=ad.DTYPE)
    if cands.ndim != 2 or cands.shape[1] != receiver.cfg.feature_size:
        raise DimensionError(f"candidates shape {cands.shape}, expected (c, {receiver.cfg.feature_size})")
    if mode == "train":
        if message.soft is None:
            raise ContractError("train-mode scoring needs a message with soft rows")
        steps = [Tensor(message.soft[t][None, :]) for t in range(len(message.tokens))]
        scores = receiver.score_steps(steps, cands[None, :, :])
    else:
        scores = receiver.score_tokens(message.tokens[None, :], cands[None, :, :])
    return scores.data[0]


def init_agent(
    kind: str,
    arch: str | Genotype,
    cfg: AgentConfig,
    rng: RandomStream,
    agent_id: int = 0,
) -> Sender | Receiver:
    """Fresh agent with age 0 and empty loss history."""
    if kind not in ("sender", "receiver"):
        raise ContractError(f"unknown agent kind {kind!r}")
    genotype = None if arch == "lstm" else arch
    if genotype is None:
        spec = CellSpec("lstm", cfg.embed_size, cfg.hidden_size)
    else:
        spec = CellSpec("genotype", cfg.embed_size, cfg.hidden_size, genotype=genotype)
    meta = AgentMeta(agent_id=agent_id, kind=kind, genotype=genotype)
    cls = Sender if kind == "sender" else Receiver
    return cls(cfg, spec, rng, meta)


def record_batch(agent: _Agent, loss: float) -> None:
    agent.record_batch(loss)


def save_checkpoint(agent: Sender | Receiver, path) -> None:
    """Write JSON header line plus little-endian float64 arrays in manifest order."""
    meta, cfg = agent.meta, agent.cfg
    header = {
        "format_version": CHECKPOINT_VERSION,
        "id": meta.agent_id,
        "kind": meta.kind,
        "arch": agent.arch,
        "genotype": serialize_genotype(meta.genotype) if meta.genotype is not None else None,
        "age": meta.age,
        "loss_history": meta.loss_history,
        "config": {
            "feature_size": cfg.feature_size,
            "hidden_size": cfg.hidden_size,
            "embed_size": cfg.embed_size,
            "vocab_size": cfg.vocab_size,
            "max_len": cfg.max_len,
            "sender_feedback": cfg.sender_feedback,
        },
        "manifest": [[name, list(shape)] for name, shape in agent.manifest()],
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, separators=(",", ":")).encode("utf-8"))
        fh.write(b"\n")
        for name in agent.params:
            fh.write(np.ascontiguousarray(agent.params[name].data, dtype="<f8").tobytes())


def load_checkpoint(path) -> Sender | Receiver:
    with open(path, "rb") as fh:
        raw = fh.read()
    sep = raw.find(b"\n")
    if sep < 0:
        raise CheckpointFormatError(f"{path}: missing header line")
    try:
        header = json.loads(raw[:sep].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointFormatError(f"{path}: unreadable header ({e})") from e
    if header.get("format_version") != CHECKPOINT_VERSION:
        raise CheckpointFormatError(
            f"{path}: format_version {header.get('format_version')!r}, expected {CHECKPOINT_VERSION}"
        )
    cfg = AgentConfig(**header["config"])
    genotype = parse_genotype(header["genotype"]) if header.get("genotype") else None
    arch = "lstm" if genotype is None else genotype
    rng = ad.new_rng(0)  # placeholder weights, overwritten below
    agent = init_agent(header["kind"], arch, cfg, rng, agent_id=header["id"])
    agent.meta.age = int(header["age"])
    agent.meta.loss_history = [float(v) for v in header["loss_history"]]

    manifest = [(name, tuple(shape)) for name, shape in header["manifest"]]
    expected = [(name, t.shape) for name, t in agent.params.items()]
    if manifest != expected:
        raise CheckpointFormatError(f"{path}: manifest does not match architecture")
    blob = raw[sep + 1 :]
    total = sum(int(np.prod(shape)) for _, shape in manifest)
    if len(blob) != total * 8:
        raise CheckpointFormatError(f"{path}: binary section has {len(blob)} bytes, expected {total * 8}")
    offset = 0
    for name, shape in manifest:
        count = int(np.prod(shape))
        values = np.frombuffer(blob, dtype="<f8", count=count, offset=offset * 8)
        agent.params[name].data = values.reshape(shape).astype(ad.DTYPE)
        offset += count
    return agent
