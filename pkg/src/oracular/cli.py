"""``oracular`` command line: analyze, sweep, motifs, compare, train, generate."""

from __future__ import annotations

import csv
import io
import logging
import os
import statistics
import sys
from concurrent.futures import ProcessPoolExecutor
from functools import partial
from pathlib import Path

import click

from .analysis import REFERENCE_NOTE, REFERENCE_SECONDS, REFERENCE_TABLE, analyze_file, load_roll, midi_files, score_file
from .config import ConfigError, read_config, resolve
from .features import chroma_from_piano_roll
from .midi_io import MidiError, write_midi
from .oracle import build_oracle, find_motifs, sweep_threshold

log = logging.getLogger("oracular")

LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}


def configure_logging() -> None:
    name = os.environ.get("ORACULAR_LOG", "warn").strip().lower()
    if name not in LOG_LEVELS:
        raise click.UsageError(f"ORACULAR_LOG must be one of {', '.join(LOG_LEVELS)}, got {name!r}")
    logging.basicConfig(level=LOG_LEVELS[name], format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    logging.getLogger().setLevel(LOG_LEVELS[name])


def emit(text: str, out: str | None) -> None:
    if out is None:
        click.echo(text, nl=False)
    else:
        Path(out).write_text(text)


def run_config(config_path, **flags):
    try:
        file_values = read_config(config_path) if config_path else {}
        return resolve(file_values, flags)
    except (ConfigError, OSError) as exc:
        raise click.ClickException(str(exc)) from exc


def guarded(fn, *args, **kwargs):
    """Run ``fn`` turning input errors into a clean nonzero exit."""
    try:
        return fn(*args, **kwargs)
    except (OSError, MidiError, ValueError) as exc:
        raise click.ClickException(f"{type(exc).__name__}: {exc}") from exc


config_option = click.option("--config", "config_path", type=click.Path(dir_okay=False), help="key=value run config file.")
hop_option = click.option("--hop", type=click.IntRange(min=1), default=None, help="Steps per chroma frame [1].")
out_option = click.option("--out", type=click.Path(dir_okay=False), default=None, help="Write here instead of stdout.")


@click.group()
def main() -> None:
    """Symbolic music analysis with a variable Markov oracle, plus a numpy CVRNN."""
    configure_logging()


@main.command()
@click.argument("midi_path", type=click.Path(dir_okay=False))
@hop_option
@click.option("--min-len", "min_motif_len", type=click.IntRange(min=1), default=None, help="Shortest motif [4].")
@config_option
@out_option
def analyze(midi_path, hop, min_motif_len, config_path, out):
    """Sweep thresholds, pick the max-IR one, and report IR and motifs as JSON."""
    cfg = run_config(config_path, hop=hop, min_motif_len=min_motif_len)
    report = guarded(analyze_file, midi_path, cfg.hop, cfg.min_motif_len)
    emit(report.to_json(), out)


@main.command()
@click.argument("midi_path", type=click.Path(dir_okay=False))
@hop_option
@config_option
@out_option
def sweep(midi_path, hop, config_path, out):
    """Total IR for every candidate threshold, as CSV (theta,total_ir)."""
    cfg = run_config(config_path, hop=hop)
    result = guarded(lambda: sweep_threshold(chroma_from_piano_roll(load_roll(midi_path), cfg.hop)))
    emit(result.curve_csv(), out)


@main.command()
@click.argument("midi_path", type=click.Path(dir_okay=False))
@hop_option
@click.option("--min-len", "min_motif_len", type=click.IntRange(min=1), default=None, help="Shortest motif [4].")
@click.option("--format", "fmt", type=click.Choice(["json", "csv"]), default="json", show_default=True)
@config_option
@out_option
def motifs(midi_path, hop, min_motif_len, fmt, config_path, out):
    """List repeated patterns as (pattern_index, end_frame, length) at the best threshold."""
    cfg = run_config(config_path, hop=hop, min_motif_len=min_motif_len)

    def run():
        chroma = chroma_from_piano_roll(load_roll(midi_path), cfg.hop)
        theta = sweep_threshold(chroma).theta_star
        return find_motifs(build_oracle(chroma, theta), cfg.min_motif_len)

    found = guarded(run)
    emit(found.to_csv() if fmt == "csv" else found.to_json(), out)


COMPARE_HEADER = [
    "label", "bars", "files", "skipped", "mean_total_ir", "std_total_ir", "seconds_per_file",
    "reference_8_bars", "reference_16_bars", "reference_32_bars", "note",
]


def _fmt(value) -> str:
    return "n/a" if value is None else repr(float(value))


def compare_rows(dirs: list[str], bars: int, hop: int = 1, jobs: int = 1, timing: bool = True) -> list[list[str]]:
    rows = []
    score = partial(score_file, hop=hop, bars=bars)
    pool = ProcessPoolExecutor(jobs) if jobs > 1 else None
    try:
        for d in dirs:
            files = midi_files(d) if Path(d).is_dir() else []
            scores = list(pool.map(score, files)) if pool else [score(f) for f in files]
            good = [s for s in scores if s.error is None]
            for s in scores:
                if s.error is not None:
                    log.warning("skipping %s", s.error)
            if not good:
                if not files:
                    log.warning("%s: no MIDI files", d)
                rows.append([d, str(bars), "0", str(len(scores)), "n/a", "n/a", "n/a", "", "", "", "no analyzable files"])
                continue
            totals = [s.total_ir for s in good]
            std = statistics.stdev(totals) if len(totals) > 1 else 0.0
            seconds = statistics.fmean(s.seconds for s in good) if timing else None
            rows.append([
                d, str(bars), str(len(good)), str(len(scores) - len(good)),
                _fmt(statistics.fmean(totals)), _fmt(std), _fmt(seconds), "", "", "", "",
            ])
    finally:
        if pool:
            pool.shutdown()
    for name, ref in REFERENCE_TABLE.items():
        rows.append([
            f"paper-reported ({name})", str(bars), "", "", _fmt(ref[bars]), "", _fmt(REFERENCE_SECONDS[bars]),
            *(_fmt(ref[b]) for b in (8, 16, 32)), REFERENCE_NOTE,
        ])
    return rows


@main.command()
@click.option("--dirs", required=True, help="Comma-separated directories of MIDI files.")
@click.option("--bars", type=click.Choice(["8", "16", "32"]), default="8", show_default=True)
@hop_option
@click.option("--jobs", type=click.IntRange(min=1), default=1, show_default=True, help="Parallel analysis workers.")
@click.option("--timing/--no-timing", default=True, show_default=True, help="Fill the seconds_per_file column.")
@config_option
@out_option
def compare(dirs, bars, hop, jobs, timing, config_path, out):
    """Mean and std of total IR per directory, files cut to a fixed bar length, as CSV."""
    cfg = run_config(config_path, hop=hop)
    rows = compare_rows([d for d in dirs.split(",") if d], int(bars), cfg.hop, jobs, timing)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COMPARE_HEADER)
    w.writerows(rows)
    emit(buf.getvalue(), out)


@main.command()
@click.option("--data-dir", default=None, type=click.Path(file_okay=False), help="Directory of training MIDI files.")
@click.option("--epochs", type=click.IntRange(min=1), default=None, help="[200]")
@click.option("--learning-rate", type=float, default=None, help="[0.001]")
@click.option("--z-dim", type=click.IntRange(min=1), default=None, help="[64]")
@click.option("--dropout-p", type=float, default=None, help="[0.3]")
@click.option("--seed", type=int, default=None, help="[0]")
@click.option("--enc-hidden", type=click.IntRange(min=1), default=256, show_default=True)
@click.option("--dec-hidden", type=click.IntRange(min=1), default=512, show_default=True)
@click.option("--candidate-bias", type=click.Choice(["b_r", "b_h"]), default="b_r", show_default=True)
@config_option
@click.option("--checkpoint", "checkpoint_path", required=True, type=click.Path(dir_okay=False))
@click.option("--loss-csv", type=click.Path(dir_okay=False), default=None, help="[<checkpoint>.loss.csv]")
def train(data_dir, epochs, learning_rate, z_dim, dropout_p, seed, enc_hidden, dec_hidden, candidate_bias,
          config_path, checkpoint_path, loss_csv):
    """Train the CVRNN on every MIDI file in a directory."""
    from .cvrnn import ModelConfig, TrainingConfig, save
    from .cvrnn import train as fit
    from .cvrnn.train import history_csv

    cfg = run_config(config_path, data_dir=data_dir, epochs=epochs, learning_rate=learning_rate,
                     z_dim=z_dim, dropout_p=dropout_p, seed=seed)
    if cfg.data_dir is None:
        raise click.UsageError("--data-dir (or data_dir in --config) is required")
    if not Path(cfg.data_dir).is_dir():
        raise click.ClickException(f"data_dir {cfg.data_dir} is not a directory")

    corpus, unreadable = [], 0
    for path in midi_files(cfg.data_dir):
        try:
            corpus.append(load_roll(path))
        except (OSError, MidiError) as exc:
            unreadable += 1
            log.warning("skipping unreadable %s: %s", path, exc)
    model = ModelConfig(enc_hidden=enc_hidden, dec_hidden=dec_hidden, z_dim=cfg.z_dim, candidate_bias=candidate_bias)
    training = guarded(TrainingConfig, learning_rate=cfg.learning_rate, dropout_p=cfg.dropout_p,
                       epochs=cfg.epochs, rng_seed=cfg.seed, model=model)
    params, history = guarded(fit, corpus, training)

    save(checkpoint_path, params, training)
    loss_path = loss_csv or f"{checkpoint_path}.loss.csv"
    Path(loss_path).write_text(history_csv(history))
    last = history[-1]
    click.echo(f"songs: {len(corpus)} used, {unreadable} unreadable skipped")
    click.echo(f"final loss: total={last.total:.6f} kl={last.kl:.6f} reconstruction={last.reconstruction:.6f}")
    click.echo(f"checkpoint: {checkpoint_path}")
    click.echo(f"loss history: {loss_path}")


@main.command()
@click.argument("checkpoint_path", type=click.Path(dir_okay=False))
@click.option("--bars", type=float, default=8, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--binarize", type=click.Choice(["threshold", "bernoulli"]), default="threshold", show_default=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False))
def generate(checkpoint_path, bars, seed, binarize, out):
    """Sample a piano-roll from a trained checkpoint and write it as MIDI."""
    from .cvrnn import generate as sample
    from .cvrnn import load

    params, training = guarded(load, checkpoint_path)
    roll = guarded(sample, params, training.model, bars, seed, binarize)
    write_midi(roll, out)
    click.echo(out)


if __name__ == "__main__":
    main()
