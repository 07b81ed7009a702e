"""Solve the shipped payoff tables and walk through the GoogleNet game.

Entries are recognition rates: the recogniser wants them high, the user low.
"""

import json

from aipgame.game import solve_deterministic, solve_minimax
from aipgame.harness import PUBLISHED_NETWORKS, load_published_table, run_game_analysis

for net in PUBLISHED_NETWORKS:
    P = load_published_table(net)
    sol = solve_minimax(P)
    mix = ", ".join(f"{k} {v:.2f}" for k, v in sol.theta_u.support().items())
    print(f"{net:10s} user plays ({mix}); recognition rate at most {sol.value:.3f}")

# One network in detail.
P = load_published_table("googlenet")
row, bound = solve_deterministic(P)
print(f"\nPure strategies only: {P.row_labels[row]} caps recognition at {bound:.3f}.")

report = run_game_analysis(P)
print("Randomising lowers the cap to", round(report["mixed"]["value"], 4))
print("Recogniser's optimal mix:", {k: round(v, 3) for k, v in report["mixed"]["theta_r"].items() if v > 0})

# If the user never heard of noise, they plan against the other five columns.
hidden = report["limited_knowledge"]["n"]
print(f"\nWithout knowing about N the user expects {hidden['apparent']:.3f} but faces {hidden['realized']:.3f}.")

print("\nFull report:")
print(json.dumps(report["best_responses"], indent=2))
