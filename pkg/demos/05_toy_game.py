"""Measure a payoff table on the toy pipeline and solve it like the published ones.

Takes about half a minute.
"""

import json
from dataclasses import replace

from aipgame.harness import ExperimentConfig, build_payoff_table, run_game_analysis

cfg = ExperimentConfig(
    users=("gaman", "gaman/t", "gaman/n", "gaman/b", "gaman/c", "gaman/tnbc"),
    recognisers=("proc", "t", "n", "b", "c", "tnbc"),
)
cfg = replace(cfg, eps=0.7 * cfg.budget)
P = build_payoff_table(cfg)
print(P.to_csv())
report = run_game_analysis(P)
print(json.dumps({k: report[k] for k in ("deterministic", "mixed")}, indent=2))
