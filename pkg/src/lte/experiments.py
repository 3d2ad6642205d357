"""Experiment configuration, run orchestration, and persistence.

A config resolves in three layers: profile defaults ("desk" for minutes-scale
runs, "paper" for the full-scale setup), then the JSON config file, then
explicit CLI overrides. Unknown keys are rejected. Runs write per-setup/seed
directories plus a combined metrics.csv and a mean/std aggregate across
seeds; identical config and seeds reproduce the CSV byte for byte.
"""

from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .agents import Receiver, Sender, init_agent, load_checkpoint
from .autodiff import new_rng
from .errors import CheckpointFormatError, ConfigError
from .game import Dataset, DatasetManifest, play_batch, sample_batch
from .genome import parse_genotype
from .metrics import MetricsRecord, evaluate_population
from .population import CullingPolicy, LteConfig, lte_run, metric_rng

PROFILES = {
    "desk": {
        "population_size": 4,
        "batch_size": 128,
        "culling_interval": 200,
        "iterations": 4000,
        "feature_size": 64,
        "split_sizes": {"train": 8000, "validation": 1000, "test": 4000},
        "jaccard_samples": 10,
    },
    "paper": {
        "population_size": 16,
        "batch_size": 1024,
        "culling_interval": 5000,
        "iterations": 500_000,
        "feature_size": 512,
        "split_sizes": {"train": 80_000, "validation": 8000, "test": 40_000},
        "jaccard_samples": 200,
    },
}

_LTE_KEYS = {f.name for f in fields(LteConfig)} - {"policy", "seed"}


@dataclass
class FrozenSpec:
    sender_checkpoint: str | None = None
    receiver_arch: str = "lstm"  # "lstm" or a genotype JSON path
    repetitions: int = 10
    max_batches: int = 2500
    pretrain_batches: int = 1500

    KEYS = ("sender_checkpoint", "receiver_arch", "repetitions", "max_batches", "pretrain_batches")


@dataclass
class ExperimentConfig:
    profile: str = "desk"
    lte: LteConfig = field(default_factory=LteConfig)
    setups: list[CullingPolicy] = field(default_factory=lambda: [CullingPolicy.CU_RANDOM])
    seeds: list[int] = field(default_factory=lambda: [0])
    sigma: float = 0.1
    split_sizes: dict[str, int] = field(default_factory=lambda: dict(PROFILES["desk"]["split_sizes"]))
    dataset_seed: int = 0
    frozen: FrozenSpec = field(default_factory=FrozenSpec)

    def dataset_manifest(self) -> DatasetManifest:
        return DatasetManifest.from_seed(
            self.dataset_seed, z=self.lte.feature_size, sigma=self.sigma, split_sizes=self.split_sizes
        )

    def run_config(self, setup: CullingPolicy, seed: int) -> LteConfig:
        cfg = LteConfig(**{f.name: getattr(self.lte, f.name) for f in fields(LteConfig)})
        cfg.policy = setup
        cfg.seed = seed
        return cfg

    def to_json_dict(self) -> dict:
        payload = {f.name: getattr(self.lte, f.name) for f in fields(LteConfig) if f.name not in ("policy", "seed")}
        payload.update(
            profile=self.profile,
            setups=[s.value for s in self.setups],
            seeds=list(self.seeds),
            sigma=self.sigma,
            split_sizes=dict(self.split_sizes),
            dataset_seed=self.dataset_seed,
            frozen={k: getattr(self.frozen, k) for k in FrozenSpec.KEYS},
        )
        return payload


def _coerce(key: str, value, expected):
    if expected is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{key}: expected a boolean, got {value!r}")
        return value
    if expected is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key}: expected an integer, got {value!r}")
        return value
    if expected is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key}: expected a number, got {value!r}")
        return float(value)
    return value


def parse_config(path=None, overrides: dict | None = None) -> ExperimentConfig:
    """Resolve profile defaults, then file values, then overrides."""
    file_values: dict = {}
    if path is not None:
        try:
            file_values = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file {path} is not valid JSON: {e}") from None
        if not isinstance(file_values, dict):
            raise ConfigError(f"config file {path} must hold a JSON object")

    merged = dict(file_values)
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key == "frozen" and isinstance(merged.get(key), dict) and isinstance(value, dict):
            merged[key] = {**merged[key], **value}
        else:
            merged[key] = value

    profile = merged.pop("profile", "desk")
    if profile not in PROFILES:
        raise ConfigError(f"profile: must be one of {sorted(PROFILES)}, got {profile!r}")
    cfg = ExperimentConfig(profile=profile)
    for key, value in PROFILES[profile].items():
        if key == "split_sizes":
            cfg.split_sizes = dict(value)
        else:
            setattr(cfg.lte, key, value)

    lte_types = {f.name: f.type for f in fields(LteConfig)}
    for key, value in merged.items():
        if key in _LTE_KEYS:
            current = getattr(cfg.lte, key)
            setattr(cfg.lte, key, _coerce(key, value, type(current)))
        elif key == "setups" or key == "setup":
            raw = value if isinstance(value, list) else [value]
            try:
                cfg.setups = [CullingPolicy(v) for v in raw]
            except ValueError:
                raise ConfigError(
                    f"{key}: must be drawn from {[p.value for p in CullingPolicy]}, got {raw!r}"
                ) from None
        elif key == "seeds":
            if not isinstance(value, list) or not value or not all(
                isinstance(v, int) and not isinstance(v, bool) for v in value
            ):
                raise ConfigError(f"seeds: expected a non-empty list of integers, got {value!r}")
            cfg.seeds = list(value)
        elif key == "sigma":
            cfg.sigma = _coerce(key, value, float)
            if cfg.sigma < 0:
                raise ConfigError(f"sigma: must be non-negative, got {cfg.sigma}")
        elif key == "split_sizes":
            if not isinstance(value, dict) or set(value) - {"train", "validation", "test"}:
                raise ConfigError(f"split_sizes: expected train/validation/test sizes, got {value!r}")
            cfg.split_sizes.update({k: _coerce(f"split_sizes.{k}", v, int) for k, v in value.items()})
        elif key == "dataset_seed":
            cfg.dataset_seed = _coerce(key, value, int)
        elif key == "frozen":
            if not isinstance(value, dict):
                raise ConfigError(f"frozen: expected an object, got {value!r}")
            for fk, fv in value.items():
                if fk not in FrozenSpec.KEYS:
                    raise ConfigError(f"frozen.{fk}: unknown key")
                setattr(cfg.frozen, fk, fv)
        else:
            raise ConfigError(f"unknown config key {key!r}")

    cfg.lte.validate()
    del lte_types
    return cfg


def format_value(v) -> str:
    """Deterministic CSV cell: 17 significant digits for floats."""
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def write_metrics_csv(records: list[MetricsRecord], path) -> None:
    """Fixed 12-column schema, '\\n' line endings, 17 significant digits."""
    with open(path, "w", newline="") as fh:
        fh.write(",".join(MetricsRecord.COLUMNS) + "\n")
        for record in records:
            fh.write(",".join(format_value(v) for v in record.as_row()) + "\n")


def read_metrics_csv(path) -> list[MetricsRecord]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != list(MetricsRecord.COLUMNS):
            raise ConfigError(f"{path}: unexpected metrics header {reader.fieldnames}")
        out = []
        for row in reader:
            out.append(MetricsRecord(
                iteration=int(row["iteration"]),
                setup=row["setup"],
                seed=int(row["seed"]),
                **{k: float(row[k]) for k in MetricsRecord.COLUMNS[3:]},
            ))
    return out


def write_aggregate_csv(records: list[MetricsRecord], path) -> None:
    """Mean and standard deviation across seeds per (setup, iteration)."""
    metric_cols = MetricsRecord.COLUMNS[3:]
    groups: dict[tuple, list[MetricsRecord]] = {}
    for r in records:
        groups.setdefault((r.setup, r.iteration), []).append(r)
    header = ["setup", "iteration", "n_seeds"]
    for col in metric_cols:
        header += [f"{col}_mean", f"{col}_std"]
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for (setup, iteration) in sorted(groups, key=lambda k: (k[0], k[1])):
            rows = groups[(setup, iteration)]
            cells = [setup, str(iteration), str(len(rows))]
            for col in metric_cols:
                values = np.array([getattr(r, col) for r in rows], dtype=float)
                cells += [format_value(float(values.mean())), format_value(float(values.std()))]
            fh.write(",".join(cells) + "\n")


def worker_count() -> int:
    raw = os.environ.get("LTE_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"LTE_THREADS must be an integer, got {raw!r}") from None


def cmd_run(cfg: ExperimentConfig, out_dir) -> Path:
    """Run every (setup, seed) cell and write the combined and aggregate CSVs."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(cfg.to_json_dict(), indent=2, sort_keys=True) + "\n")
    dataset = Dataset(cfg.dataset_manifest())

    cells = [(setup, seed) for setup in cfg.setups for seed in cfg.seeds]

    def one(cell):
        setup, seed = cell
        run_dir = out / f"{setup.value}_seed{seed}"
        run_dir.mkdir(parents=True, exist_ok=True)
        run_cfg = cfg.run_config(setup, seed)
        result = lte_run(run_cfg, dataset, out_dir=run_dir)
        write_metrics_csv(result.records, run_dir / "metrics.csv")
        return result.records

    workers = worker_count()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            all_records = list(pool.map(one, cells))
    else:
        all_records = [one(cell) for cell in cells]

    combined = [r for records in all_records for r in records]
    combined.sort(key=lambda r: (r.setup, r.seed, r.iteration))
    write_metrics_csv(combined, out / "metrics.csv")
    write_aggregate_csv(combined, out / "metrics_aggregate.csv")
    return out


def train_pair(
    sender: Sender,
    receiver: Receiver,
    dataset: Dataset,
    cfg: LteConfig,
    batches: int,
    rng,
    freeze_sender: bool = False,
    stop_accuracy: float | None = None,
    stop_window: int = 20,
) -> list[tuple[int, float, float]]:
    """Train one pair for up to `batches` batches; returns (batch, accuracy, loss) rows.

    With `stop_accuracy`, training ends early once the rolling mean of the
    last `stop_window` batch accuracies reaches the target.
    """
    trainer = cfg.trainer()
    curve = []
    recent: list[float] = []
    for b in range(1, batches + 1):
        batch = sample_batch(dataset, cfg.distractors, cfg.batch_size, rng)
        res = play_batch(sender, receiver, batch, tau=cfg.tau, mode="train",
                         rng=rng, trainer=trainer, freeze_sender=freeze_sender)
        curve.append((b, res.accuracy, res.loss))
        if stop_accuracy is not None:
            recent.append(res.accuracy)
            if len(recent) > stop_window:
                recent.pop(0)
            if len(recent) == stop_window and sum(recent) / stop_window >= stop_accuracy:
                break
    return curve


def batches_to_accuracy(curve, target: float, window: int = 20) -> float:
    """First batch where the rolling accuracy mean reaches `target`; inf if never."""
    acc = np.array([row[1] for row in curve], dtype=float)
    if len(acc) < window:
        return float("inf")
    means = np.convolve(acc, np.full(window, 1.0 / window), mode="valid")
    hits = np.flatnonzero(means >= target)
    return float(hits[0] + window) if hits.size else float("inf")


def write_curve(path, curve) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("batch,accuracy,loss\n")
        for b, acc, loss in curve:
            fh.write(f"{b},{format_value(acc)},{format_value(loss)}\n")


def read_curve(path) -> list[tuple[int, float, float]]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        return [(int(r["batch"]), float(r["accuracy"]), float(r["loss"])) for r in reader]


def _fresh_like(ckpt_agent, kind: str, cfg: LteConfig, rng, agent_id=0):
    arch = "lstm" if ckpt_agent.arch == "lstm" else ckpt_agent.meta.genotype
    return init_agent(kind, arch, cfg.agent_config(), rng, agent_id=agent_id)


def _receiver_arch(spec: FrozenSpec):
    if spec.receiver_arch == "lstm":
        return "lstm"
    try:
        return parse_genotype(Path(spec.receiver_arch).read_text())
    except FileNotFoundError:
        raise ConfigError(f"receiver genotype file not found: {spec.receiver_arch}") from None


def cmd_frozen(cfg: ExperimentConfig, out_dir) -> Path:
    """Frozen-sender transfer plus its two baselines, `repetitions` runs each.

    Arms (family "co" when the checkpointed sender is an evolved cell,
    "cu" otherwise):
      frozen-<fam>              frozen checkpointed sender, fresh receiver
      <fam>-baseline            fresh sender and receiver, trained jointly
      <fam>-baseline-pretrained sender trained from scratch in a single
                                pair, then frozen against a fresh receiver
    """
    spec = cfg.frozen
    if not spec.sender_checkpoint:
        raise ConfigError("frozen.sender_checkpoint is required")
    try:
        frozen_sender = load_checkpoint(spec.sender_checkpoint)
    except FileNotFoundError:
        raise ConfigError(f"sender checkpoint not found: {spec.sender_checkpoint}") from None
    if frozen_sender.meta.kind != "sender":
        raise ConfigError(f"{spec.sender_checkpoint} holds a {frozen_sender.meta.kind}, not a sender")
    run_cfg = cfg.run_config(cfg.setups[0], cfg.seeds[0])
    if frozen_sender.cfg != run_cfg.agent_config():
        raise ConfigError(
            f"checkpoint agent config {frozen_sender.cfg} does not match the experiment config"
        )

    receiver_arch = _receiver_arch(spec)
    family = "co" if frozen_sender.arch == "genotype" else "cu"
    dataset = Dataset(cfg.dataset_manifest())
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(cfg.to_json_dict(), indent=2, sort_keys=True) + "\n")

    frozen_before = frozen_sender.param_checksum()
    arms: dict[str, list[str]] = {}

    def run_arm(arm: str, rep: int, build):
        rng = new_rng(cfg.seeds[0], 500, rep)
        sender, receiver, freeze = build(rng)
        curve = train_pair(sender, receiver, dataset, run_cfg, spec.max_batches, rng, freeze_sender=freeze)
        arm_dir = out / arm
        arm_dir.mkdir(exist_ok=True)
        path = arm_dir / f"rep_{rep}.csv"
        write_curve(path, curve)
        arms.setdefault(arm, []).append(str(path.relative_to(out)))

    for rep in range(spec.repetitions):
        def frozen_arm(rng):
            receiver = init_agent("receiver", receiver_arch, run_cfg.agent_config(), rng)
            return frozen_sender, receiver, True

        def baseline_arm(rng):
            sender = _fresh_like(frozen_sender, "sender", run_cfg, rng)
            receiver = init_agent("receiver", receiver_arch, run_cfg.agent_config(), rng)
            return sender, receiver, False

        def pretrained_arm(rng):
            sender = _fresh_like(frozen_sender, "sender", run_cfg, rng)
            helper = init_agent("receiver", receiver_arch, run_cfg.agent_config(), rng)
            train_pair(sender, helper, dataset, run_cfg, spec.pretrain_batches, rng)
            receiver = init_agent("receiver", receiver_arch, run_cfg.agent_config(), rng)
            return sender, receiver, True

        run_arm(f"frozen-{family}", rep, frozen_arm)
        run_arm(f"{family}-baseline", rep, baseline_arm)
        run_arm(f"{family}-baseline-pretrained", rep, pretrained_arm)

    if frozen_sender.param_checksum() != frozen_before:
        raise AssertionError("frozen sender parameters changed during transfer training")
    (out / "arms.json").write_text(json.dumps(arms, indent=2, sort_keys=True) + "\n")
    return out


def cmd_eval(ckpt_dir) -> MetricsRecord:
    """Recompute the metrics snapshot for a checkpoint directory."""
    snap = Path(ckpt_dir)
    meta_path = snap / "snapshot.json"
    if not meta_path.exists():
        raise CheckpointFormatError(f"{snap}: missing snapshot.json")
    meta = json.loads(meta_path.read_text())
    for key in ("iteration", "setup", "seed", "lte", "dataset"):
        if key not in meta:
            raise CheckpointFormatError(f"{snap}: snapshot.json lacks {key!r}")
    run_cfg = LteConfig(**{**meta["lte"], "policy": CullingPolicy(meta["lte"]["policy"])})
    dataset = Dataset(DatasetManifest.from_json_dict(meta["dataset"]))

    senders, receivers = [], []
    for path in sorted(snap.glob("*.ckpt")):
        agent = load_checkpoint(path)
        (senders if agent.meta.kind == "sender" else receivers).append(agent)
    if not senders or not receivers:
        raise CheckpointFormatError(f"{snap}: no agent checkpoints found")
    return evaluate_population(
        senders, receivers, dataset, run_cfg.eval_settings(),
        metric_rng(meta["seed"], meta["iteration"]),
        iteration=meta["iteration"], setup=meta["setup"], seed=meta["seed"],
    )
