"""Train the toy recogniser and compare perturbation methods under the same L2 budget."""

import numpy as np

from aipgame.aip import attack_config, craft
from aipgame.classifier import accuracy, predict
from aipgame.harness import ExperimentConfig, build_toy, payoff_entry
from aipgame.processing import apply_proc
from aipgame.tensor import l2_norm

cfg = ExperimentConfig()
model, test = build_toy(cfg)
print(f"16x16 toy recogniser, clean test accuracy {accuracy(model, test):.2f}")
print(f"budget ||t|| <= {cfg.budget:.2f}, the per-pixel equivalent of 1000 on 224x224x3 inputs\n")

x, y = test.images[0], int(test.labels[0])
for token in ("fgs", "fgv", "bi", "ga", "df", "gaman"):
    t = craft(model, x, y, attack_config(token, eps=cfg.budget))
    after = predict(model, x + t)
    saved = predict(model, apply_proc(x + t, x.shape))
    print(f"{token:6s} norm {l2_norm(t):6.2f}  predicts {after} (true {y}), after Proc {saved}")

# Over the whole test set: DeepFool stops right at the boundary, so rounding often undoes it.
print()
for token in ("ga", "df", "gaman"):
    rates = [payoff_entry(model, test, token, r, cfg.seed, cfg.attack_overrides()) for r in ("none", "proc")]
    print(f"{token:6s} recognised {rates[0]:.2f} unprocessed, {rates[1]:.2f} after Proc")
print("\nlargest pixel change for GAMAN:", np.abs(craft(model, x, y, attack_config("gaman", eps=cfg.budget))).max().round(1))
