"""Command-line entry points: lte run / frozen / eval."""

from __future__ import annotations

import sys

import click

from .errors import CheckpointFormatError, ConfigError, LteError, NumericError, ParseError
from .experiments import cmd_eval, cmd_frozen, cmd_run, format_value, parse_config
from .metrics import MetricsRecord
from .population import CullingPolicy

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

_SETUPS = [p.value for p in CullingPolicy]


def _run_guarded(fn):
    try:
        fn()
    except (ConfigError, ParseError) as e:
        click.echo(f"config error: {e}", err=True)
        sys.exit(EXIT_CONFIG)
    except (NumericError, CheckpointFormatError, LteError, OSError) as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(EXIT_RUNTIME)
    sys.exit(EXIT_OK)


@click.group()
def main():
    """Referential-game population trainer with cultural/architectural evolution."""


@main.command()
@click.option("--config", "config_path", type=click.Path(), default=None, help="JSON config file.")
@click.option("--profile", type=click.Choice(["paper", "desk"]), default=None, help="Preset scale.")
@click.option("--setup", "setups", multiple=True, type=click.Choice(_SETUPS), help="Culling policy (repeatable).")
@click.option("--seed", "seeds", multiple=True, type=int, help="Random seed (repeatable).")
@click.option("--iterations", type=int, default=None, help="Override total training iterations.")
@click.option("--out", "out_dir", required=True, type=click.Path(), help="Output directory.")
def run(config_path, profile, setups, seeds, iterations, out_dir):
    """Train populations for every configured setup and seed."""

    def go():
        overrides = {
            "profile": profile,
            "setups": list(setups) or None,
            "seeds": list(seeds) or None,
            "iterations": iterations,
        }
        cfg = parse_config(config_path, overrides)
        out = cmd_run(cfg, out_dir)
        click.echo(f"wrote {out / 'metrics.csv'}")

    _run_guarded(go)


@main.command()
@click.option("--config", "config_path", type=click.Path(), default=None, help="JSON config file.")
@click.option("--profile", type=click.Choice(["paper", "desk"]), default=None, help="Preset scale.")
@click.option("--sender", "sender_ckpt", required=True, type=click.Path(), help="Frozen sender checkpoint.")
@click.option("--receiver-arch", default="lstm", help="'lstm' or a genotype JSON file.")
@click.option("--reps", type=int, default=None, help="Repetitions per arm.")
@click.option("--out", "out_dir", required=True, type=click.Path(), help="Output directory.")
def frozen(config_path, profile, sender_ckpt, receiver_arch, reps, out_dir):
    """Frozen-sender transfer experiment with from-scratch baselines."""

    def go():
        frozen_overrides = {"sender_checkpoint": sender_ckpt, "receiver_arch": receiver_arch}
        if reps is not None:
            frozen_overrides["repetitions"] = reps
        cfg = parse_config(config_path, {"profile": profile, "frozen": frozen_overrides})
        out = cmd_frozen(cfg, out_dir)
        click.echo(f"wrote curves under {out}")

    _run_guarded(go)


@main.command()
@click.option("--ckpt", "ckpt_dir", required=True, type=click.Path(), help="Checkpoint snapshot directory.")
def eval(ckpt_dir):
    """Recompute the metrics snapshot for saved checkpoints."""

    def go():
        record = cmd_eval(ckpt_dir)
        click.echo(",".join(MetricsRecord.COLUMNS))
        click.echo(",".join(format_value(v) for v in record.as_row()))

    _run_guarded(go)


if __name__ == "__main__":
    main()
