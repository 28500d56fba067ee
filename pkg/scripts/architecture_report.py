"""Parameter counts, receptive fields and schedule diagnostics for the model presets.

    python3 scripts/architecture_report.py
"""
from collections import Counter

from nuwave import diffusion as D
from nuwave import tensor as T
from nuwave.model import (MODEL_PRESETS, NuWaveNetwork, conditioner_receptive_radius,
                          main_receptive_radius)


def group(name):
    return name.split(".")[2] if name.startswith("layers.") else name.split(".")[0]


def main():
    for preset, make in MODEL_PRESETS.items():
        cfg = make(2)
        model = NuWaveNetwork(cfg, T.Rng(0))
        counts = Counter()
        for name, p in model.named_parameters():
            counts[group(name)] += p.data.size
        main_r, cond_r = main_receptive_radius(cfg), conditioner_receptive_radius(cfg)
        print(f"{preset}: {cfg.n_layers} layers x {cfg.channels} channels, "
              f"{model.n_parameters():,} parameters")
        for g, n in sorted(counts.items(), key=lambda kv: -kv[1]):
            print(f"  {g:12s} {n:>10,}")
        print(f"  receptive radius: main {main_r}, conditioner {cond_r} "
              f"(ratio {cond_r / main_r:.2f})")
    for name in D.PRESETS:
        s = D.schedule_preset(name)
        flag = "pass" if s.passes_half_rule else "warn"
        print(f"{name}: T={s.T}, sqrt_alpha_bar_T={s.final_noise_level:.6f} ({flag})")


if __name__ == "__main__":
    main()
