"""Experiment orchestration: payoff tables, game analyses, published-table replay, budget sweeps and selective AIPs."""

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from importlib import resources

import numpy as np

from .aip import SelectiveConfig, attack_config, craft, craft_selective, scaled_eps
from .classifier import ModelSpec, TrainConfig, accuracy, generate_synthetic_dataset, predict, train
from .errors import FixtureError, InvalidArgument
from .game import (
    MixedStrategy,
    PayoffMatrix,
    best_response_user,
    restrict,
    solve_deterministic,
    solve_minimax,
    verify_saddle,
)
from .processing import STRATEGY_TOKENS, apply_proc, ensemble_scores, strategy
from .tensor import SeededRng, mix_seed

PUBLISHED_NETWORKS = ("alexnet", "vgg", "googlenet", "resnet")
PUBLISHED_USER_LABELS = ("gaman", "/t", "/n", "/b", "/c", "/tnbc")
PUBLISHED_RECOGNISER_LABELS = ("proc", "t", "n", "b", "c", "tnbc")
WEIGHT_TOL = 0.01
BOUND_TOL = 0.002
# canonical digests of the shipped tables; see table_digest
PUBLISHED_TABLE_DIGESTS = {
    "alexnet": "cfe8bf808df04bd9f824e74773988ab10b0d8acd5efa5ccf69014704549d0e44",
    "vgg": "dacbda3f3db0de47114829262e5cf684640dc24ec9e4347d04370667313e4560",
    "googlenet": "ffcf737741324cbdeb466ffde466e666d4f4538812e162a1cd97a2c8aabf724f",
    "resnet": "72cf18ffd8632274f3269578e4b819d6faeecca33218d308786383ec93a821ab",
}


@dataclass(frozen=True)
class ExperimentConfig:
    class_count: int = 10
    per_class_train: int = 20
    per_class_test: int = 10
    height: int = 16
    width: int = 16
    noise_sigma: float = 8.0
    amplitude: float = 3.0
    model: ModelSpec = ModelSpec("linear")
    training: TrainConfig = TrainConfig()
    users: tuple = ("none", "gaman", "gaman/t", "gaman/n", "gaman/b", "gaman/c", "gaman/tnbc")
    recognisers: tuple = ("none", "proc", "t", "n", "b", "c", "tnbc")
    eps: float = None
    eps_schedule: tuple = ()
    gamma: float = None
    iters: int = None
    seed: int = 0
    trials: int = 1
    workers: int = 1

    def __post_init__(self):
        if not self.users or not self.recognisers:
            raise InvalidArgument("strategy lists must be nonempty")
        if self.trials < 1:
            raise InvalidArgument("trials must be positive")

    @property
    def image_shape(self):
        return (self.height, self.width, 1)

    @property
    def budget(self):
        return self.eps if self.eps is not None else scaled_eps(self.image_shape)

    def attack_overrides(self, eps=None):
        out = {"eps": self.budget if eps is None else eps}
        if self.gamma is not None:
            out["gamma"] = self.gamma
        if self.iters is not None:
            out["max_iters"] = self.iters
        return out


def make_dataset(cfg, split, per_class=None):
    return generate_synthetic_dataset(
        cfg.class_count,
        per_class or (cfg.per_class_test if split == "test" else cfg.per_class_train),
        cfg.height,
        cfg.width,
        cfg.noise_sigma,
        cfg.seed,
        split=split,
        amplitude=cfg.amplitude,
    )


def build_toy(cfg=ExperimentConfig(), split="train"):
    """Train the toy recogniser on ``split``; returns (model, test set)."""
    model = train(cfg.model, make_dataset(cfg, split), cfg.training)
    return model, make_dataset(cfg, "test")


# -- payoffs -------------------------------------------------------------------


def _check_tokens(u_token, r_token):
    if r_token not in STRATEGY_TOKENS:
        raise InvalidArgument(f"unknown recogniser strategy {r_token!r}")
    if u_token != "none":
        attack_config(u_token)


def _perturb(model, x, y, u_token, seed, index, overrides):
    if u_token == "none" or overrides.get("eps", 1.0) == 0:
        return np.zeros_like(x)
    cfg = attack_config(u_token, **overrides)
    return craft(model, x, y, cfg, rng=SeededRng(mix_seed(seed, index, u_token)))


def _recognised(model, x_adv, y, r_token, seed, index, trials):
    strat = strategy(r_token)
    hits = 0
    for trial in range(trials):
        rng = SeededRng(mix_seed(seed, index, r_token, trial))
        hits += int(np.argmax(ensemble_scores(model, x_adv, strat, rng))) == y
    return hits / trials


def _map(fn, n, workers):
    if workers <= 1:
        return [fn(i) for i in range(n)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(n)))


def payoff_entry(model, dataset, u_token, r_token, seed=0, overrides=None, trials=1, workers=1):
    """Recognition rate of ``model`` on ``dataset`` when the user plays ``u_token`` and the recogniser ``r_token``."""
    _check_tokens(u_token, r_token)
    if len(dataset) == 0:
        raise InvalidArgument("empty dataset")
    overrides = overrides or {}

    def one(i):
        x, y = dataset.images[i], int(dataset.labels[i])
        t = _perturb(model, x, y, u_token, seed, i, overrides)
        return _recognised(model, x + t, y, r_token, seed, i, trials)

    return float(np.mean(_map(one, len(dataset), workers)))


def build_payoff_table(cfg, model=None, dataset=None):
    """Cross product of user and recogniser strategies; each perturbation is crafted once per row."""
    if model is None or dataset is None:
        model, dataset = build_toy(cfg)
    for u in cfg.users:
        for r in cfg.recognisers:
            _check_tokens(u, r)
    overrides = cfg.attack_overrides()
    rows = []
    for u in cfg.users:

        def one(i, u=u):
            x, y = dataset.images[i], int(dataset.labels[i])
            x_adv = x + _perturb(model, x, y, u, cfg.seed, i, overrides)
            return [_recognised(model, x_adv, y, r, cfg.seed, i, cfg.trials) for r in cfg.recognisers]

        rows.append(np.mean(_map(one, len(dataset), cfg.workers), axis=0))
    return PayoffMatrix(cfg.users, cfg.recognisers, np.array(rows))


# -- game analysis ----------------------------------------------------------------


def run_game_analysis(P):
    """Deterministic and mixed optima, best responses and the limited-knowledge sweep, as a JSON-ready dict."""
    det_row, det_bound = solve_deterministic(P)
    sol = solve_minimax(P)
    ok, violation = verify_saddle(P, sol)
    pure = {}
    for j, col in enumerate(P.col_labels):
        i, rate = best_response_user(P, MixedStrategy.pure(P.col_labels, j))
        pure[col] = {"row": P.row_labels[i], "rate": rate}
    i, rate = best_response_user(P, MixedStrategy.uniform(P.col_labels))
    limited = {}
    if P.shape[1] > 1:
        for col in P.col_labels:
            known = [c for c in P.col_labels if c != col]
            sub = restrict(P, None, known)
            row, apparent = solve_deterministic(sub)
            sub_sol = solve_minimax(sub)
            limited[col] = {
                "row": sub.row_labels[row],
                "apparent": apparent,
                "realized": float(P.entries[row].max()),
                "mixed_apparent": sub_sol.value,
                "mixed_realized": float((sub_sol.theta_u.weights @ P.entries).max()),
            }
    return {
        "deterministic": {"row": P.row_labels[det_row], "guarantee": det_bound},
        "mixed": {**sol.to_dict(), "saddle_ok": bool(ok), "saddle_violation": violation},
        "best_responses": {"pure": pure, "uniform": {"row": P.row_labels[i], "rate": rate}},
        "limited_knowledge": limited,
    }


# -- published tables-------------------------------------------------------------------


def _fixture_text(name, fixture_dir=None):
    try:
        if fixture_dir is not None:
            from pathlib import Path

            return (Path(fixture_dir) / name).read_text()
        return resources.files("aipgame").joinpath("data").joinpath(name).read_text()
    except (OSError, FileNotFoundError) as exc:
        raise FixtureError(f"fixture {name} unavailable: {exc}") from exc


def load_published_table(network, fixture_dir=None):
    if network not in PUBLISHED_NETWORKS:
        raise InvalidArgument(f"unknown network {network!r}")
    try:
        P = PayoffMatrix.from_csv_text(_fixture_text(f"{network}.csv", fixture_dir))
    except (ValueError, InvalidArgument) as exc:
        raise FixtureError(f"corrupt fixture for {network}: {exc}") from exc
    if P.row_labels != PUBLISHED_USER_LABELS or P.col_labels != PUBLISHED_RECOGNISER_LABELS:
        raise FixtureError(f"fixture for {network} has unexpected labels")
    return P


def table_digest(P):
    """SHA-256 over labels and entries rounded to 1e-6, insensitive to CSV formatting."""
    h = hashlib.sha256()
    h.update("|".join(P.row_labels + ("#",) + P.col_labels).encode())
    h.update(np.round(P.entries * 1e6).astype("<i8").tobytes())
    return h.hexdigest()


def load_published_optima(fixture_dir=None):
    try:
        return json.loads(_fixture_text("optima.json", fixture_dir))
    except json.JSONDecodeError as exc:
        raise FixtureError(f"corrupt optima fixture: {exc}") from exc


def verify_paper(fixture_dir=None, networks=PUBLISHED_NETWORKS):
    """Solve each embedded payoff table and compare with the published optimal user strategies and bounds."""
    optima = load_published_optima(fixture_dir)
    results = []
    for net in networks:
        P = load_published_table(net, fixture_dir)
        sol = solve_minimax(P)
        saddle_ok, violation = verify_saddle(P, sol)
        expected = optima[net]
        weight_err = max(abs(sol.theta_u.weight(label) - expected["theta_u"].get(label, 0.0)) for label in P.row_labels)
        bound_err = abs(sol.value - expected["bound"])
        fixture_ok = table_digest(P) == PUBLISHED_TABLE_DIGESTS[net]
        optimum_ok = bool(saddle_ok and weight_err <= WEIGHT_TOL and bound_err <= BOUND_TOL)
        results.append(
            {
                "network": net,
                "passed": fixture_ok and optimum_ok,
                "fixture_ok": fixture_ok,
                "optimum_ok": optimum_ok,
                "theta_u": sol.theta_u.support(),
                "value": sol.value,
                "expected_theta_u": expected["theta_u"],
                "expected_bound": expected["bound"],
                "weight_error": weight_err,
                "bound_error": bound_err,
                "saddle_violation": violation,
            }
        )
    return results


# -- sweeps and selective AIPs ----------------------------------------------------------


def sweep_epsilon(cfg, methods, schedule, model=None, dataset=None):
    """Post-Proc recognition rate for every (method, eps); rows are (method, eps, rate)."""
    if not schedule:
        raise InvalidArgument("eps schedule must be nonempty")
    if model is None or dataset is None:
        model, dataset = build_toy(cfg)
    rows = []
    for method in methods:
        for eps in schedule:
            rate = payoff_entry(
                model, dataset, method, "proc", cfg.seed, cfg.attack_overrides(eps), cfg.trials, cfg.workers
            )
            rows.append((method, float(eps), rate))
    return rows


def sweep_to_csv(rows):
    lines = ["method,eps,rate"] + [f"{m},{e!r},{r!r}" for m, e, r in rows]
    return "\n".join(lines) + "\n"


@dataclass
class SelectiveSetup:
    malicious: list
    benign: list
    dataset: object
    method: str = "gaman"
    lambdas: dict = field(default_factory=dict)


def build_selective_setup(cfg=ExperimentConfig(), n_malicious=1, n_benign=1):
    """Independently trained toy recognisers, each on its own training split and seed."""
    models = []
    for k in range(n_malicious + n_benign):
        training = replace(cfg.training, seed=mix_seed(cfg.training.seed, "selective", k) % 2**32)
        models.append(train(cfg.model, make_dataset(cfg, f"train-{k}"), training))
    return SelectiveSetup(models[:n_malicious], models[n_malicious:], make_dataset(cfg, "test"))


def _post_proc_rate(model, images, labels):
    hits = [predict(model, apply_proc(x, x.shape)) == y for x, y in zip(images, labels)]
    return float(np.mean(hits))


def run_selective(cfg, setup=None, schedule=None):
    """Recognition rates after Proc, averaged over the malicious and benign groups, per budget."""
    setup = setup or build_selective_setup(cfg)
    schedule = schedule or cfg.eps_schedule or (cfg.budget,)
    data = setup.dataset
    sel = SelectiveConfig([(m, 1.0) for m in setup.malicious], [(m, 1.0) for m in setup.benign])

    def group_rate(models, images):
        if not models:
            return None
        return float(np.mean([_post_proc_rate(m, images, data.labels) for m in models]))

    report = {
        "method": setup.method,
        "clean": {"malicious": group_rate(setup.malicious, data.images), "benign": group_rate(setup.benign, data.images)},
        "budgets": [],
    }
    for eps in schedule:
        attack = attack_config(setup.method, **cfg.attack_overrides(eps))

        def one(i):
            x, y = data.images[i], int(data.labels[i])
            return x + craft_selective(sel, x, y, attack, rng=SeededRng(mix_seed(cfg.seed, i, "selective")))

        adv = np.array(_map(one, len(data), cfg.workers))
        report["budgets"].append(
            {"eps": float(eps), "malicious": group_rate(setup.malicious, adv), "benign": group_rate(setup.benign, adv)}
        )
    return report


def clean_accuracy(cfg=ExperimentConfig()):
    model, test = build_toy(cfg)
    return accuracy(model, test)
