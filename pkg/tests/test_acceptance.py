"""Acceptance suite: one test per criterion, each printing a single PASS/FAIL line.

Run alone with ``python3 -m pytest tests/test_acceptance.py`` or
``python3 tests/test_acceptance.py``.
"""

import sys
import time
from dataclasses import replace
from decimal import ROUND_HALF_UP, Decimal

import numpy as np
import pytest
from conftest import random_model
from helpers import central_difference, relative_error

from aipgame.aip import (
    METHODS,
    VACCINATION_SUFFIXES,
    SelectiveConfig,
    VaccinationSpec,
    attack_config,
    craft,
    craft_iterative,
    craft_selective,
    craft_single_step,
    vaccinated_grad,
)
from aipgame.classifier import DEEPFOOL, MARGIN, SCORE, SOFTMAX_LOG, accuracy, input_grad, loss_value
from aipgame.game import PayoffMatrix, oracle_minimax_small, solve_minimax, verify_saddle
from aipgame.harness import (
    PUBLISHED_NETWORKS,
    build_selective_setup,
    load_published_optima,
    load_published_table,
    payoff_entry,
    run_game_analysis,
    run_selective,
    verify_paper,
)
from aipgame.processing import ProcessingStrategy
from aipgame.tensor import SeededRng, l2_norm


@pytest.fixture
def report(capsys):
    def emit(number, name, passed, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if passed else 'FAIL'}] criterion {number} {name}: {detail}")

    return emit


def printed(value, places):
    """Round half-up to the printed precision after removing float noise."""
    snapped = Decimal(repr(round(value, 12)))
    return float(snapped.quantize(Decimal(1).scaleb(-places), rounding=ROUND_HALF_UP))


# 1 -------------------------------------------------------------------------------


def test_criterion_1_published_optima(report):
    start = time.perf_counter()
    results = verify_paper()
    elapsed = time.perf_counter() - start
    expected = load_published_optima()
    checks = []
    for r in results:
        want = expected[r["network"]]
        checks.append(
            set(r["theta_u"]) == set(want["theta_u"])
            and all(abs(r["theta_u"][k] - w) <= 0.01 for k, w in want["theta_u"].items())
            and abs(r["value"] - want["bound"]) <= 0.002
            and r["passed"]
        )
    ok = all(checks) and elapsed < 1.0
    detail = ", ".join(f"{r['network']} v={r['value']:.4f}" for r in results) + f"; {elapsed:.3f}s"
    report(1, "published game optima", ok, detail)
    assert all(checks), results
    assert elapsed < 1.0


# 2 -------------------------------------------------------------------------------


def test_criterion_2_googlenet_scenarios(report):
    r = run_game_analysis(load_published_table("googlenet"))
    det = r["deterministic"]
    theta_r = r["mixed"]["theta_r"]
    b_resp = r["best_responses"]["pure"]["b"]
    u_resp = r["best_responses"]["uniform"]
    n_out = r["limited_knowledge"]["n"]
    checks = {
        "deterministic": det["row"] == "/b" and printed(det["guarantee"], 3) == 0.086,
        "theta_r": abs(theta_r["n"] - 0.52) <= 0.01
        and abs(theta_r["b"] - 0.48) <= 0.01
        and sum(w for k, w in theta_r.items() if k not in ("n", "b")) <= 1e-9,
        "pure B response": b_resp["row"] == "/b" and printed(b_resp["rate"], 3) == 0.058,
        "uniform response": u_resp["row"] == "/b" and printed(u_resp["rate"], 3) == 0.034,
        "N withheld": printed(n_out["apparent"], 3) == 0.058 and printed(n_out["realized"], 3) == 0.086,
    }
    detail = (
        f"det ({det['row']}, {det['guarantee']:.3f}), theta_r (N {theta_r['n']:.3f}, B {theta_r['b']:.3f}), "
        f"B-resp ({b_resp['row']}, {b_resp['rate']:.3f}), uniform ({u_resp['row']}, {u_resp['rate']:.4f}), "
        f"N withheld ({n_out['apparent']:.3f}, {n_out['realized']:.3f})"
    )
    report(2, "scenario numbers", all(checks.values()), detail)
    assert all(checks.values()), checks


# 3 -------------------------------------------------------------------------------


def test_criterion_3_solver_soundness(report):
    start = time.perf_counter()
    saddle = {}
    for net in PUBLISHED_NETWORKS:
        P = load_published_table(net)
        saddle[net] = verify_saddle(P, solve_minimax(P), tol=1e-7)
    rng = np.random.default_rng(3)
    gaps = []
    for _ in range(60):
        m, n = rng.integers(1, 5, size=2)
        P = PayoffMatrix([f"u{i}" for i in range(m)], [f"r{j}" for j in range(n)], rng.uniform(0, 1, (m, n)))
        gaps.append(abs(solve_minimax(P).value - oracle_minimax_small(P).value))
    elapsed = time.perf_counter() - start
    ok = all(s[0] for s in saddle.values()) and max(gaps) <= 1e-6 and elapsed < 5.0
    worst = max(s[1] for s in saddle.values())
    report(3, "solver soundness", ok, f"max saddle violation {worst:.1e}, max oracle gap {max(gaps):.1e} over {len(gaps)} matrices; {elapsed:.2f}s")
    assert ok


# 4 -------------------------------------------------------------------------------


def test_criterion_4_gradients(report):
    start = time.perf_counter()
    shape = (4, 4, 1)
    worst = {}
    for kind in ("linear", "mlp"):
        for loss in (SOFTMAX_LOG, SCORE, MARGIN, DEEPFOOL):
            errs = []
            for point in range(100):
                model = random_model(kind, shape, seed=point % 10)
                x = np.random.default_rng(1000 + point).uniform(20, 235, shape)
                y = point % model.class_count
                fd = central_difference(lambda z: loss_value(model, z, y, loss), x)
                errs.append(relative_error(input_grad(model, x, loss, y), fd))
            worst[f"{kind}/{loss.variant}"] = max(errs)
    blur_errs = []
    vacc = VaccinationSpec(("b",), samples_per_iter=5, through_proc=False)
    for point in range(100):
        model = random_model("mlp" if point % 2 else "linear", shape, seed=point % 10)
        x = np.random.default_rng(2000 + point).uniform(20, 235, shape)
        y = point % model.class_count
        g = vaccinated_grad(model, x, y, MARGIN, vacc, SeededRng(point))
        draws = SeededRng(point)
        ops = [ProcessingStrategy("b").draw(shape, draws, through_proc=False) for _ in range(5)]
        fd = central_difference(lambda z: np.mean([loss_value(model, op.apply(z), y, MARGIN) for op in ops]), x)
        blur_errs.append(relative_error(g, fd))
    elapsed = time.perf_counter() - start
    ok = max(worst.values()) < 1e-4 and max(blur_errs) < 1e-3 and elapsed < 30.0
    report(4, "gradient correctness", ok, f"worst plain rel err {max(worst.values()):.1e}, blur-vaccinated {max(blur_errs):.1e}; {elapsed:.1f}s")
    assert max(worst.values()) < 1e-4, worst
    assert max(blur_errs) < 1e-3
    assert elapsed < 30.0


# 5 -------------------------------------------------------------------------------


def test_criterion_5_attack_efficacy(report, toy, toy_cfg):
    start = time.perf_counter()
    model, data = toy
    over = toy_cfg.attack_overrides()
    clean = accuracy(model, data)
    rate = {(u, r): payoff_entry(model, data, u, r, toy_cfg.seed, over) for u in ("ga", "gaman", "df") for r in ("none", "proc")}
    elapsed = time.perf_counter() - start
    ok = (
        clean >= 0.90
        and rate["gaman", "none"] <= 0.05
        and rate["ga", "none"] <= 0.05
        and rate["df", "proc"] > rate["gaman", "proc"]
        and elapsed < 300
    )
    detail = (
        f"clean {clean:.2f}; no defence GA {rate['ga', 'none']:.2f}, GAMAN {rate['gaman', 'none']:.2f}; "
        f"post-Proc DF {rate['df', 'proc']:.2f} vs GAMAN {rate['gaman', 'proc']:.2f}; {elapsed:.1f}s"
    )
    report(5, "attack efficacy", ok, detail)
    assert ok, rate


# 6 -------------------------------------------------------------------------------


def test_criterion_6_vaccination(report, toy, toy_cfg):
    start = time.perf_counter()
    model, data = toy
    rows = []
    for fraction in (1.0, 0.7, 0.5):
        over = toy_cfg.attack_overrides(fraction * toy_cfg.budget)
        plain = payoff_entry(model, data, "gaman", "b", toy_cfg.seed, over)
        vacc = payoff_entry(model, data, "gaman/b", "b", toy_cfg.seed, over)
        rows.append((fraction, plain, vacc))
    elapsed = time.perf_counter() - start
    ok = all(v < p for _, p, v in rows) and elapsed < 300
    detail = "; ".join(f"{f:.1f}x eps post-B GAMAN {p:.2f} vs /B {v:.2f}" for f, p, v in rows) + f"; {elapsed:.1f}s"
    report(6, "vaccination", ok, detail)
    assert ok, rows


# 7 -------------------------------------------------------------------------------


def test_criterion_7_selective(report, toy_cfg):
    start = time.perf_counter()
    setup = build_selective_setup(toy_cfg)
    budgets = tuple(k * toy_cfg.budget for k in (1, 2, 4))
    result = run_selective(toy_cfg, setup, budgets)["budgets"]
    elapsed = time.perf_counter() - start
    m = [b["malicious"] for b in result]
    bn = [b["benign"] for b in result]
    selective = any(mi <= 0.20 and bi >= 0.80 for mi, bi in zip(m, bn))
    monotone = all(b <= a for a, b in zip(m, m[1:]))
    ok = selective and monotone and elapsed < 300
    detail = ", ".join(f"{k}x eps M {mi:.2f} B {bi:.2f}" for k, mi, bi in zip((1, 2, 4), m, bn)) + f"; {elapsed:.1f}s"
    report(7, "selective attack", ok, detail)
    assert ok, result


# 8 -------------------------------------------------------------------------------


def _random_run(run, rng):
    shape = [(5, 5, 1), (6, 6, 1), (4, 6, 3)][run % 3]
    kind = "mlp" if rng.random() < 0.5 else "linear"
    model = random_model(kind, shape, seed=run)
    x = rng.uniform(0, 255, shape)
    edge = rng.random(shape) < 0.3
    x[edge] = rng.choice([0.0, 255.0], size=int(edge.sum()))
    y = int(rng.integers(model.class_count))
    eps = float(10 ** rng.uniform(-1, 2.7))
    gamma = float(10 ** rng.uniform(-1, 5))
    iters = int(rng.integers(1, 9))
    base = str(rng.choice(sorted(METHODS)))
    token = base
    if base != "df" and rng.random() < 0.4:
        token = f"{base}/{rng.choice(VACCINATION_SUFFIXES)}"
    cfg = attack_config(token, eps=eps, gamma=gamma, max_iters=iters, grayscale_source=bool(rng.random() < 0.2))
    trace = []
    if run % 10 == 0 and base != "df":
        other = random_model("linear", shape, seed=run + 1)
        sel = SelectiveConfig([(model, 1.0)], [(other, float(rng.uniform(0.2, 2)))])
        t = craft_selective(sel, x, y, cfg, rng=SeededRng(run), trace=trace)
    else:
        t = craft(model, x, y, cfg, rng=SeededRng(run), trace=trace)
    bad = 0
    for step in trace + [t]:
        bad += l2_norm(step) > eps * (1 + 1e-9)
        bad += bool(np.any(x + step < 0) or np.any(x + step > 255))
    return bad, len(trace)


def _reductions(seed):
    rng = np.random.default_rng(seed)
    shape = (6, 6, 1)
    model = random_model("mlp" if seed % 2 else "linear", shape, seed=seed)
    x = rng.uniform(0, 255, shape)
    y = int(rng.integers(model.class_count))
    eps, gamma = float(rng.uniform(1, 200)), float(10 ** rng.uniform(0, 4))
    failures = []
    for token in ("ga", "bi", "ga-s", "bi-s", "gaman", "gaman/b", "ga/tnbc"):
        cfg = attack_config(token, eps=eps, gamma=gamma, max_iters=1)
        a = craft_iterative(model, x, y, cfg, rng=SeededRng(seed))
        b = craft_single_step(model, x, y, cfg, rng=SeededRng(seed))
        if not np.array_equal(a, b):
            failures.append(("K=1", token))
    for token in ("ga", "gaman", "bi-s", "gaman/n"):
        cfg = attack_config(token, eps=eps, gamma=gamma, max_iters=5)
        a = craft_selective(SelectiveConfig([(model, 1.0)]), x, y, cfg, rng=SeededRng(seed))
        b = craft_iterative(model, x, y, cfg, rng=SeededRng(seed))
        if not np.array_equal(a, b):
            failures.append(("selective", token))
    for token in ("ga", "gaman", "fgs", "fgman"):
        plain = attack_config(token, eps=eps, gamma=gamma, max_iters=5)
        noop = replace(plain, vaccination=VaccinationSpec(("none",)))
        if not np.array_equal(craft(model, x, y, plain), craft(model, x, y, noop, rng=SeededRng(seed))):
            failures.append(("noop", token))
    return failures


def test_criterion_8_budget_invariants(report):
    start = time.perf_counter()
    rng = np.random.default_rng(8)
    violations, iterates = 0, 0
    for run in range(1000):
        bad, n = _random_run(run, rng)
        violations += bad
        iterates += n
    failures = [f for seed in range(40) for f in _reductions(seed)]
    elapsed = time.perf_counter() - start
    ok = violations == 0 and not failures
    report(8, "budget invariants", ok, f"1000 runs, {iterates} iterates, {violations} violations; {len(failures)} reduction mismatches over 40 instances; {elapsed:.1f}s")
    assert violations == 0
    assert not failures, failures


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
