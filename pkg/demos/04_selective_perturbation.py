"""Fool one recogniser while another still identifies the image."""

from aipgame.harness import ExperimentConfig, build_selective_setup, run_selective

cfg = ExperimentConfig()
setup = build_selective_setup(cfg, n_malicious=1, n_benign=1)
report = run_selective(cfg, setup, tuple(k * cfg.budget for k in (0.5, 1, 2, 4)))

print("clean:", report["clean"])
for row in report["budgets"]:
    print(f"eps {row['eps']:7.2f}   malicious recognises {row['malicious']:.2f}   benign recognises {row['benign']:.2f}")
