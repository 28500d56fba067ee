"""Patch-sampling training loop with periodic, resumable checkpoints."""
from __future__ import annotations

import os
import time

import numpy as np

from . import tensor as T
from .checkpoint import ConfigMismatchError, load_checkpoint, save_checkpoint
from .diffusion import check_training_schedule, train_step
from .dsp import extract_patch, patch_length, trim_silence
from .model import NuWaveNetwork

LOG_COLUMNS = ("step", "loss", "wall_time")


def _to_stored_precision(model, opt):
    # keeps an uninterrupted run identical to one resumed from the checkpoint
    for p in model.parameters():
        p.data = p.data.astype(np.float32).astype(np.float64)
    for arrs in (opt.first_moment, opt.second_moment):
        for i, a in enumerate(arrs):
            arrs[i] = a.astype(np.float32).astype(np.float64)


def prepare_training_corpus(signals, r, base):
    """Trim each signal; keep those long enough for one patch."""
    need = patch_length(r, base)
    out = [y for y in (trim_silence(s) for s in signals) if len(y) >= need]
    if not out:
        raise ValueError(f"no training signal is at least {need} samples long after trimming")
    return out


def train(cfg, signals, out_dir, *, resume=None, log_fh=None, on_step=None):
    """Run ``cfg.train.steps`` optimizer steps; returns the final (model, step).

    ``on_step(step, loss, model)`` is called after every update.
    """
    r = cfg.upscale_ratio
    mcfg = cfg.model_config()
    schedule = check_training_schedule(cfg.train_schedule())
    corpus = prepare_training_corpus(signals, r, cfg.train.patch_base)
    rate = corpus[0].sample_rate
    ckpt_dir = os.path.join(out_dir, "checkpoints")
    os.makedirs(ckpt_dir, exist_ok=True)

    if resume is not None:
        ck = load_checkpoint(resume, expect_config=mcfg)
        if ck.optimizer is None or "rng_state" not in ck.meta:
            raise ConfigMismatchError("resume checkpoint lacks optimizer or rng state")
        if ck.meta.get("target_rate") != rate:
            raise ConfigMismatchError(
                f"checkpoint trained at {ck.meta.get('target_rate')} Hz, corpus is {rate} Hz")
        model, opt, step = ck.model, ck.optimizer, ck.step
        rng = T.Rng.from_state(ck.meta["rng_state"])
    else:
        rng = T.Rng(cfg.seed)
        model = NuWaveNetwork(mcfg, rng)
        opt = T.AdamState.for_params(model.parameters(), lr=cfg.optim.lr, beta1=cfg.optim.beta1,
                                     beta2=cfg.optim.beta2, eps=cfg.optim.eps)
        step = 0

    def checkpoint(at):
        _to_stored_precision(model, opt)
        meta = {"rng_state": rng.get_state(), "target_rate": rate,
                "train_schedule": schedule.name, "seed": cfg.seed}
        path = os.path.join(ckpt_dir, f"step_{at:07d}.ckpt")
        data = save_checkpoint(model, path, step=at, optimizer=opt, meta=meta)
        with open(os.path.join(out_dir, "final.ckpt"), "wb") as fh:
            fh.write(data)
        return path

    t0 = time.perf_counter()
    while step < cfg.train.steps:
        y = corpus[rng.integers(0, len(corpus))]
        patch = extract_patch(y, r, rng, base=cfg.train.patch_base)
        value = train_step(model, patch, r, schedule, opt, rng)
        step += 1
        if log_fh is not None:
            log_fh.write(f"{step}\t{value:.8f}\t{time.perf_counter() - t0:.3f}\n")
        if on_step is not None:
            on_step(step, value, model)
        if step % cfg.train.checkpoint_every == 0 or step == cfg.train.steps:
            checkpoint(step)
    return model, step
