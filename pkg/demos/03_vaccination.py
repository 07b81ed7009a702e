"""Blur partially undoes a perturbation; crafting through the blur (vaccination) resists it."""

from aipgame.harness import ExperimentConfig, build_toy, payoff_entry

cfg = ExperimentConfig()
model, test = build_toy(cfg)
budget = 0.7 * cfg.budget

print(f"budget {budget:.1f}; rows are user strategies, columns recogniser processing\n")
print(f"{'':12s}" + "".join(f"{r:>8s}" for r in ("proc", "b", "tnbc")))
for user in ("gaman", "gaman/b", "gaman/tnbc"):
    rates = [payoff_entry(model, test, user, r, cfg.seed, cfg.attack_overrides(budget)) for r in ("proc", "b", "tnbc")]
    print(f"{user:12s}" + "".join(f"{v:8.2f}" for v in rates))
