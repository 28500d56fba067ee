"""Command-line entry point: gen-data, train, upsample, eval, schedule."""
from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import tensor as T
from .checkpoint import CheckpointError, load_checkpoint
from .config import ConfigError, load_config, parse_override
from .dsp import AudioSignal, synth_corpus
from .metrics import evaluate, spectrogram_png
from .wav import read_wav, write_wav

MANIFEST = "manifest.tsv"
RESOLVED = "config.resolved.yaml"


class CommandError(RuntimeError):
    pass


def _claim(paths, overwrite):
    """Refuse to clobber existing outputs unless --overwrite was given."""
    taken = [p for p in paths if os.path.exists(p)]
    if taken and not overwrite:
        raise CommandError(f"output already exists (use --overwrite): {taken[0]}")


def _write_resolved(cfg, out):
    with open(os.path.join(out, RESOLVED), "w") as fh:
        fh.write(cfg.to_yaml())


def read_manifest(corpus_dir, split=None):
    path = os.path.join(corpus_dir, MANIFEST)
    if not os.path.exists(path):
        raise CommandError(f"no corpus manifest at {path}")
    rows = []
    with open(path) as fh:
        header = fh.readline().rstrip("\n").split("\t")
        for line in fh:
            row = dict(zip(header, line.rstrip("\n").split("\t")))
            if split is None or row["split"] == split:
                rows.append(row)
    return rows


def load_split(corpus_dir, split):
    rows = read_manifest(corpus_dir, split)
    return [read_wav(os.path.join(corpus_dir, row["file"])) for row in rows], rows


# ---------------------------------------------------------------- commands

def cmd_gen_data(cfg, args):
    out = args.out
    names = [os.path.join("train", f"utt_{i:04d}.wav") for i in range(cfg.data.n_train)]
    names += [os.path.join("test", f"utt_{i:04d}.wav") for i in range(cfg.data.n_test)]
    _claim([os.path.join(out, n) for n in names] + [os.path.join(out, MANIFEST)], args.overwrite)
    for sub in ("train", "test"):
        os.makedirs(os.path.join(out, sub), exist_ok=True)
    rng = T.Rng(cfg.seed)
    signals = synth_corpus(cfg.data.corpus_spec(cfg.data.n_train + cfg.data.n_test), rng)
    lines = ["file\tsplit\tn_samples\tduration\tsample_rate"]
    for name, y in zip(names, signals):
        write_wav(os.path.join(out, name), y, cfg.data.encoding)
        lines.append(f"{name}\t{name.split(os.sep)[0]}\t{len(y)}\t{y.duration:.6f}\t{y.sample_rate}")
    with open(os.path.join(out, MANIFEST), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    _write_resolved(cfg, out)
    print(f"wrote {len(signals)} utterances to {out}")


def cmd_train(cfg, args):
    from .train import LOG_COLUMNS, train

    out = args.out
    corpus_dir = args.corpus or cfg.data.corpus_dir
    signals, _ = load_split(corpus_dir, "train")
    if not signals:
        raise CommandError(f"corpus {corpus_dir} has no training utterances")
    log_path = os.path.join(out, "loss_log.tsv")
    _claim([log_path, os.path.join(out, "final.ckpt")], args.overwrite)
    os.makedirs(out, exist_ok=True)
    _write_resolved(cfg, out)
    with open(log_path, "w") as fh:
        fh.write("\t".join(LOG_COLUMNS) + "\n")
        _, step = train(cfg, signals, out, resume=args.resume, log_fh=fh)
    print(f"trained to step {step}; checkpoint at {os.path.join(out, 'final.ckpt')}")


def _load_model(cfg, path):
    if not path or not os.path.exists(path):
        raise CommandError(f"checkpoint not found: {path}")
    ck = load_checkpoint(path, expect_config=cfg.model_config())
    ck.model.target_rate = ck.meta.get("target_rate")
    return ck


def cmd_upsample(cfg, args):
    from .diffusion import sample

    ck = _load_model(cfg, args.checkpoint)
    y_d = read_wav(args.input)
    r = cfg.upscale_ratio
    target = ck.model.target_rate
    if target is not None and y_d.sample_rate * r != target:
        raise CommandError(f"input rate {y_d.sample_rate} Hz x r={r} != model rate {target} Hz")
    stem = os.path.splitext(os.path.basename(args.input))[0]
    out_wav = os.path.join(args.out, f"{stem}_x{r}.wav")
    outputs = [out_wav]
    if args.spectrogram:
        outputs += [os.path.join(args.out, f"{stem}_input.png"),
                    os.path.join(args.out, f"{stem}_x{r}.png")]
    _claim(outputs, args.overwrite)
    os.makedirs(args.out, exist_ok=True)
    y_hat = sample(ck.model, y_d, cfg.infer_schedule(), r, T.Rng(cfg.seed))
    write_wav(out_wav, y_hat, cfg.data.encoding)
    if args.spectrogram:
        spectrogram_png(y_d, outputs[1])
        spectrogram_png(y_hat, outputs[2])
    _write_resolved(cfg, args.out)
    print(f"wrote {out_wav} ({len(y_hat)} samples at {y_hat.sample_rate} Hz, "
          f"{ck.model.n_forward} model evaluations)")
    return ck.model


def cmd_eval(cfg, args):
    ck = _load_model(cfg, args.checkpoint)
    corpus_dir = args.corpus or cfg.data.corpus_dir
    signals, rows = load_split(corpus_dir, "test")
    if not signals:
        raise CommandError(f"corpus {corpus_dir} has no test utterances")
    table = os.path.join(args.out, "eval_report.tsv")
    js = os.path.join(args.out, "eval_report.json")
    _claim([table, js], args.overwrite)
    os.makedirs(args.out, exist_ok=True)
    names = [os.path.splitext(row["file"])[0].replace(os.sep, "/") for row in rows]
    report = evaluate(ck.model, signals, cfg.infer_schedule(), cfg.upscale_ratio,
                      T.Rng(cfg.seed), names=names)
    with open(table, "w") as fh:
        fh.write(report.to_table())
    with open(js, "w") as fh:
        fh.write(report.to_json())
    if cfg.eval.spectrograms:
        _write_spectrograms(ck.model, cfg, signals, names, args.out)
    _write_resolved(cfg, args.out)
    print(report.to_table(), end="")
    return report


def _write_spectrograms(model, cfg, signals, names, out):
    from .diffusion import sample
    from .dsp import downsample, linear_upsample
    from .metrics import prepare_reference

    spec_dir = os.path.join(out, "spectrograms")
    os.makedirs(spec_dir, exist_ok=True)
    r = cfg.upscale_ratio
    rng = T.Rng(cfg.seed)
    for name, y in zip(names, signals):
        ref = prepare_reference(y, r)
        y_d = downsample(ref, r)
        stem = name.replace("/", "_")
        spectrogram_png(ref, os.path.join(spec_dir, f"{stem}_reference.png"))
        spectrogram_png(linear_upsample(y_d, r), os.path.join(spec_dir, f"{stem}_linear.png"))
        spectrogram_png(sample(model, y_d, cfg.infer_schedule(), r, rng),
                        os.path.join(spec_dir, f"{stem}_model.png"))


def schedule_report(schedule):
    lines = [f"schedule: {schedule.name}", f"T: {schedule.T}",
             f"beta range: [{schedule.betas.min():.6g}, {schedule.betas.max():.6g}]",
             "t\tbeta\tsqrt_alpha_bar\tsigma"]
    for t in range(1, schedule.T + 1):
        lines.append(f"{t}\t{schedule.betas[t - 1]:.6g}\t{schedule.sqrt_alpha_bar(t):.6f}\t"
                     f"{schedule.sigmas[t - 1]:.6g}")
    flag = "pass" if schedule.passes_half_rule else "warn"
    lines.append(f"sqrt_alpha_bar_T: {schedule.final_noise_level:.6f}")
    lines.append(f"half_rule: {flag}")
    return "\n".join(lines) + "\n"


def cmd_schedule(cfg, args):
    from .config import _schedule

    if args.betas:
        spec = [float(b) for b in args.betas.split(",")]
    else:
        spec = args.preset or cfg.schedule.train
    print(schedule_report(_schedule(spec)), end="")


# ---------------------------------------------------------------- parser

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run config")
    common.add_argument("--preset", dest="run_preset", default="desk", choices=["desk", "paper"],
                        help="base settings the config file is layered on")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--overwrite", action="store_true")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config value, e.g. train.steps=100")

    parser = argparse.ArgumentParser(prog="nuwave", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("gen-data", parents=[common], help="write a synthetic WAV corpus")
    p = sub.add_parser("train", parents=[common], help="train a model")
    p.add_argument("--corpus", help="corpus directory (default: data.corpus_dir)")
    p.add_argument("--resume", help="checkpoint to continue from")
    p = sub.add_parser("upsample", parents=[common], help="super-resolve one WAV file")
    p.add_argument("--input", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--spectrogram", action="store_true")
    p = sub.add_parser("eval", parents=[common], help="SNR/LSD against linear interpolation")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus")
    p = sub.add_parser("schedule", parents=[common], help="print noise-schedule diagnostics")
    p.add_argument("--schedule", dest="preset", help="schedule preset name")
    p.add_argument("--betas", help="comma-separated betas")
    return parser


COMMANDS = {"gen-data": cmd_gen_data, "train": cmd_train, "upsample": cmd_upsample,
            "eval": cmd_eval, "schedule": cmd_schedule}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        overrides = [parse_override(s) for s in args.set]
        if args.seed is not None:
            overrides.append({"seed": args.seed})
        cfg = load_config(args.config, args.run_preset, overrides)
        COMMANDS[args.command](cfg, args)
    except (CommandError, ConfigError, CheckpointError, ValueError, OSError) as exc:
        print(f"nuwave {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
