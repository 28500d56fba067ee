"""Train the desk model and track held-out LSD against linear interpolation.

    python3 scripts/desk_experiment.py --steps 6000 --eval-every 1000 --out runs/desk

Writes loss_log.tsv, lsd_curve.tsv and checkpoints under --out.
"""
import argparse
import os
import time

import numpy as np

from nuwave import tensor as T
from nuwave.config import load_config, parse_override
from nuwave.dsp import synth_corpus
from nuwave.metrics import evaluate
from nuwave.train import LOG_COLUMNS, train


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=6000)
    ap.add_argument("--eval-every", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="runs/desk")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    args = ap.parse_args()

    overrides = [parse_override(s) for s in args.set]
    overrides += [{"seed": args.seed, "train": {"steps": args.steps,
                                                "checkpoint_every": args.eval_every}}]
    cfg = load_config(overrides=overrides)
    os.makedirs(args.out, exist_ok=True)
    rng = T.Rng(cfg.seed)
    signals = synth_corpus(cfg.data.corpus_spec(cfg.data.n_train + cfg.data.n_test), rng)
    train_set, test_set = signals[:cfg.data.n_train], signals[cfg.data.n_train:]

    recent = []
    curve = open(os.path.join(args.out, "lsd_curve.tsv"), "w")
    curve.write("step\tmedian_loss\tlsd_model\tlsd_linear\tsnr_model\tsnr_linear\n")
    t0 = time.perf_counter()

    def on_step(step, value, model):
        recent.append(value)
        if step % args.eval_every:
            return
        report = evaluate(model, test_set, cfg.infer_schedule(), cfg.upscale_ratio,
                          T.Rng(cfg.seed + 1))
        row = (step, float(np.median(recent[-args.eval_every:])), report.mean("lsd_model"),
               report.mean("lsd_linear"), report.mean("snr_model"), report.mean("snr_linear"))
        curve.write("\t".join(f"{v:.6f}" if isinstance(v, float) else str(v) for v in row) + "\n")
        curve.flush()
        print(f"step {step:6d}  {time.perf_counter() - t0:7.0f}s  loss {row[1]:+.3f}  "
              f"LSD {row[2]:.3f} (linear {row[3]:.3f}, ratio {row[2] / row[3]:.3f})", flush=True)

    with curve, open(os.path.join(args.out, "loss_log.tsv"), "w") as log:
        log.write("\t".join(LOG_COLUMNS) + "\n")
        train(cfg, train_set, args.out, log_fh=log, on_step=on_step)


if __name__ == "__main__":
    main()
