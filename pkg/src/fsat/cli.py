"""Command-line front door: ``fsat <subcommand> [config.yaml] --out DIR``.

Exit codes: 0 success, 1 I/O failure, 2 invalid configuration or input,
3 numerical failure during training or attacks.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from contextlib import nullcontext
from pathlib import Path

from ._accel import set_threads
from .attack import attack_grid
from .audio_io import Waveform, gen_synthetic_corpus, load_manifest, write_wav
from .config import RunConfig, load_config
from .errors import ConfigError, FsatError
from .evaluation import (corruption_sweep, evaluate, highpass_sweep, score_histogram_export,
                         write_reports)
from .train import TrainHistory, load_checkpoint, save_checkpoint, train

log = logging.getLogger("fsat")

CHECKPOINT_NAME = "model.ckpt"
CONFIG_ECHO = "effective_config.yaml"


def _manifest(cfg: RunConfig, args):
    path = Path(args.manifest) if args.manifest else cfg.manifest
    if path is None:
        raise ConfigError("no manifest given (data.manifest in the config or --manifest)")
    if not path.is_file():
        raise ConfigError(f"manifest not found: {path}")
    return load_manifest(path, check_files=True)


def _clips(cfg, args, split):
    clips = _manifest(cfg, args).split(split).load_clips(cfg.synth.sample_rate_hz)
    if not clips:
        raise ConfigError(f"manifest has no {split} clips")
    return clips


def _checkpoint_path(cfg, args):
    path = Path(args.checkpoint) if args.checkpoint else cfg.eval.checkpoint
    if path is None:
        raise ConfigError("no checkpoint given (eval.checkpoint in the config or --checkpoint)")
    if not path.is_file():
        raise ConfigError(f"checkpoint not found: {path}")
    return path


def _params(cfg, args):
    return load_checkpoint(_checkpoint_path(cfg, args), precision=cfg.train.precision,
                           allow_widen=True)[0]


def _emit(reports, out, stem):
    write_reports(reports, out, stem)
    score_histogram_export(reports, out / f"{stem}_histograms.json")
    for r in reports:
        print(f"{r.condition}: real {_fmt(r.acc_real)} fake {_fmt(r.acc_fake)} avg {_fmt(r.acc_avg)}")


def _fmt(acc):
    return "n/a" if acc is None else f"{acc:.3f}"


def cmd_gen_data(cfg: RunConfig, args, out: Path):
    manifest = gen_synthetic_corpus(cfg.synth, out)
    path = out / "manifest.tsv"
    log.info("wrote %d clips", len(manifest))
    print(path)
    return 0


def cmd_train(cfg: RunConfig, args, out: Path):
    clips = _clips(cfg, args, "train")
    ckpt = out / CHECKPOINT_NAME
    params = history = opt_state = None
    if args.resume:
        if ckpt.is_file():
            params, history, opt_state = load_checkpoint(ckpt, precision=cfg.train.precision)
            if history.gamma != cfg.train.gamma:
                raise ConfigError(f"checkpoint was trained with gamma={history.gamma}, "
                                  f"config asks for {cfg.train.gamma}")
            log.info("resuming after epoch %d", len(history))
        else:
            log.warning("--resume given but %s does not exist; starting fresh", ckpt)
    if params is None and cfg.init_checkpoint is not None:
        if not cfg.init_checkpoint.is_file():
            raise ConfigError(f"train.init_checkpoint not found: {cfg.init_checkpoint}")
        params = load_checkpoint(cfg.init_checkpoint, precision=cfg.train.precision,
                                 allow_widen=True)[0]
        log.info("starting from the weights in %s", cfg.init_checkpoint)

    every = cfg.train.checkpoint_every
    latest = {"state": opt_state}

    def on_epoch(p, h: TrainHistory, state):
        latest["state"] = state
        if every and len(h) % every == 0:
            save_checkpoint(p, h, ckpt, state)

    params, history = train(clips, cfg.train, params, history, opt_state, on_epoch=on_epoch)
    save_checkpoint(params, history, ckpt, latest["state"])
    with open(out / "history.jsonl", "w", encoding="utf-8", newline="\n") as fh:
        for rec in history.records:
            fh.write(json.dumps(rec.to_dict(with_time=False), sort_keys=True) + "\n")
    print(ckpt)
    return 0


def cmd_eval(cfg: RunConfig, args, out: Path):
    params = _params(cfg, args)
    clips = _clips(cfg, args, cfg.eval.split)
    _emit([evaluate(params, clips, cfg.eval.threshold)], out, "report")
    return 0


def cmd_attack(cfg: RunConfig, args, out: Path):
    params = _params(cfg, args)
    clips = _clips(cfg, args, cfg.eval.split)
    if not cfg.eval.attacks:
        raise ConfigError("no attacks configured (eval.attacks or eval.standard_grid)")
    needed = {e.source for e in cfg.eval.attacks} - {"A"}
    surrogates = {}
    for source in sorted(needed):
        path = cfg.eval.surrogates.get(source)
        if path is None or not path.is_file():
            raise ConfigError(f"attack source {source!r} needs a surrogate checkpoint in eval.surrogates")
        surrogates[source] = load_checkpoint(path, precision=params.precision, allow_widen=True)[0]
    rows = attack_grid(params, clips, cfg.eval.attacks, surrogates, cfg.eval.threshold)
    _emit([r["report"] for r in rows], out, "attack")
    with open(out / "attack_rows.jsonl", "w", encoding="utf-8", newline="\n") as fh:
        for r in rows:
            c = r["config"]
            fh.write(json.dumps({
                "condition": r["condition"], "source": r["source"], "domain": c.domain.value,
                "band": None if c.band is None else [c.band.f_l, c.band.f_u],
                "epsilon": c.epsilon, "alpha": c.alpha, "iterations": c.iterations,
                "restarts": c.restarts, "acc_real": r["acc_real"], "acc_fake": r["acc_fake"],
                "n_errors": r["n_errors"],
            }, sort_keys=True) + "\n")
    return 0


def cmd_corrupt(cfg: RunConfig, args, out: Path):
    params = _params(cfg, args)
    clips = _clips(cfg, args, cfg.eval.split)
    if not cfg.eval.corruptions:
        raise ConfigError("eval.corruptions is empty")
    sr = cfg.synth.sample_rate_hz

    def dump(kind, magnitude, Xc):
        folder = out / "wavs" / f"{kind.value}@{magnitude:g}"
        folder.mkdir(parents=True, exist_ok=True)
        for clip, x in zip(clips, Xc):
            write_wav(Waveform(x, sr), folder / f"{clip.source_id}_{clip.label.name.lower()}.wav")

    reports = corruption_sweep(params, clips, cfg.eval.corruptions, cfg.eval.threshold,
                               cfg.eval.seed, on_corrupted=dump if cfg.eval.write_wavs else None)
    _emit(reports, out, "corrupt")
    return 0


def cmd_sweep_highpass(cfg: RunConfig, args, out: Path):
    params = _params(cfg, args)
    clips = _clips(cfg, args, cfg.eval.split)
    rows = highpass_sweep(params, clips, cfg.eval.highpass_cutoffs, cfg.eval.threshold)
    _emit([r for _, r in rows], out, "highpass")
    return 0


COMMANDS = {
    "gen-data": (cmd_gen_data, "generate the synthetic real/fake corpus"),
    "train": (cmd_train, "train a detector (baseline, RandAugment or F-SAT)"),
    "eval": (cmd_eval, "clean accuracy report"),
    "attack": (cmd_attack, "accuracy under adversarial attacks"),
    "corrupt": (cmd_corrupt, "accuracy under fixed corruptions, plus corrupted WAVs"),
    "sweep-highpass": (cmd_sweep_highpass, "accuracy after brickwall high-pass filtering"),
}


def build_parser():
    parser = argparse.ArgumentParser(prog="fsat", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config", nargs="?", help="YAML run config (defaults apply when omitted)")
        p.add_argument("--out", required=True, help="directory for every output of this run")
        p.add_argument("--seed", type=int, help="override the config's top-level seed")
        p.add_argument("--threads", type=int, help="cap worker threads; 1 gives bit-exact reruns")
        p.add_argument("--manifest", help="dataset manifest (overrides data.manifest)")
        p.add_argument("--checkpoint", help="model checkpoint (overrides eval.checkpoint)")
        p.add_argument("--resume", action="store_true", help="train: continue from OUT/model.ckpt")
        p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        cfg = load_config(args.config, seed=args.seed)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        cfg.dump(out / CONFIG_ECHO)
        limit = set_threads(args.threads) if args.threads is not None else nullcontext()
        with limit:
            return COMMANDS[args.command][0](cfg, args, out)
    except FsatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
