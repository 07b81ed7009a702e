"""Command-line entry point.

Exit status: 0 on success, 2 on invalid input, 3 when an embedded fixture
does not reproduce its expected optimum.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import harness
from .aip import attack_config, craft, scaled_eps
from .classifier import ModelSpec, TrainConfig, generate_synthetic_dataset, load_dataset, load_model, save_dataset, save_model, train
from .errors import FixtureError
from .game import PayoffMatrix
from .tensor import read_image, read_tensor, write_pgm, write_tensor

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_FIXTURE = 3


def _csv_list(text):
    return tuple(s.strip() for s in text.split(",") if s.strip())


def _floats(text):
    return tuple(float(s) for s in _csv_list(text))


def _emit(text, out):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _experiment(args, **extra):
    return harness.ExperimentConfig(
        seed=args.seed,
        eps=args.eps,
        gamma=args.gamma,
        iters=args.iters,
        trials=getattr(args, "trials", 1),
        workers=getattr(args, "workers", 1),
        **extra,
    )


def _require_out(args):
    if not args.out:
        raise ValueError(f"{args.command} needs --out")


def cmd_synth(args):
    _require_out(args)
    data = generate_synthetic_dataset(
        args.classes, args.per_class, args.height, args.width, args.noise, args.seed, split=args.split
    )
    save_dataset(args.out, data)
    print(json.dumps({"samples": len(data), "classes": data.class_count, "out": args.out}))


def cmd_train(args):
    _require_out(args)
    data = load_dataset(args.data)
    cfg = TrainConfig(learning_rate=args.lr, epochs=args.epochs, batch_size=args.batch, seed=args.seed)
    model = train(ModelSpec(args.kind, args.hidden), data, cfg)
    save_model(args.out, model)
    print(json.dumps({"kind": model.kind, "classes": model.class_count, "out": args.out}))


def _read_any(path):
    return read_image(path) if str(path).lower().endswith(".pgm") else read_tensor(path)


def cmd_attack(args):
    _require_out(args)
    model = load_model(args.model)
    x = _read_any(args.image)
    if x.ndim == 2:
        x = x[:, :, None]
    overrides = {"eps": args.eps if args.eps is not None else scaled_eps(x.shape), "seed": args.seed}
    if args.gamma is not None:
        overrides["gamma"] = args.gamma
    if args.iters is not None:
        overrides["max_iters"] = args.iters
    cfg = attack_config(args.method, **overrides)
    t = craft(model, x, args.label, cfg)
    x_adv = x + t
    write_tensor(args.out, x_adv)
    if args.pgm:
        write_pgm(args.pgm, x_adv)
    print(json.dumps({"method": args.method, "eps": cfg.eps, "norm": float(np.linalg.norm(t)), "out": args.out}))


def _toy_inputs(args, cfg):
    if args.model and args.data:
        return load_model(args.model), load_dataset(args.data)
    if args.model or args.data:
        raise ValueError("--model and --data must be given together")
    return harness.build_toy(cfg)


def cmd_payoff(args):
    cfg = _experiment(args, users=_csv_list(args.users), recognisers=_csv_list(args.recognisers))
    model, data = _toy_inputs(args, cfg)
    _emit(harness.build_payoff_table(cfg, model, data).to_csv(), args.out)


def cmd_solve(args):
    P = PayoffMatrix.from_csv(args.table)
    _emit(json.dumps(harness.run_game_analysis(P), indent=2) + "\n", args.out)


def cmd_verify_paper(args):
    results = harness.verify_paper(args.fixtures)
    for r in results:
        status = "PASS" if r["passed"] else "FAIL"
        weights = ", ".join(f"{k}:{v:.2f}" for k, v in r["theta_u"].items())
        print(f"{status} {r['network']}: ({weights}) bound {r['value']:.4f}")
    if args.out:
        Path(args.out).write_text(json.dumps(results, indent=2) + "\n")
    return EXIT_OK if all(r["passed"] for r in results) else EXIT_FIXTURE


def cmd_sweep(args):
    cfg = _experiment(args)
    model, data = _toy_inputs(args, cfg)
    schedule = _floats(args.schedule) if args.schedule else tuple(m * cfg.budget for m in (0.0, 0.5, 1.0, 2.0))
    rows = harness.sweep_epsilon(cfg, _csv_list(args.methods), schedule, model, data)
    _emit(harness.sweep_to_csv(rows), args.out)


def cmd_selective(args):
    cfg = _experiment(args)
    schedule = _floats(args.schedule) if args.schedule else (cfg.budget, 2 * cfg.budget)
    setup = harness.build_selective_setup(cfg, args.malicious, args.benign)
    report = harness.run_selective(cfg, setup, schedule)
    _emit(json.dumps(report, indent=2) + "\n", args.out)


def _global_flags(suppress):
    # subcommands re-declare the flags with SUPPRESS so values given before the subcommand survive
    p = argparse.ArgumentParser(add_help=False)
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--seed", type=int, default=d(0))
    p.add_argument("--eps", type=float, default=d(None), help="L2 budget (default: scaled to the input size)")
    p.add_argument("--gamma", type=float, default=d(None), help="step size")
    p.add_argument("--iters", type=int, default=d(None), help="ascent iterations")
    p.add_argument("--out", default=d(None), help="output path (stdout if omitted, where applicable)")
    return p


def build_parser():
    common = _global_flags(suppress=False)
    sub_common = _global_flags(suppress=True)

    parser = argparse.ArgumentParser(prog="aipgame", description=__doc__.splitlines()[0], parents=[common])
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_text):
        p = sub.add_parser(name, parents=[sub_common], help=help_text)
        p.set_defaults(func=fn)
        return p

    p = add("synth", cmd_synth, "generate a synthetic dataset directory")
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--per-class", type=int, default=20)
    p.add_argument("--height", type=int, default=16)
    p.add_argument("--width", type=int, default=16)
    p.add_argument("--noise", type=float, default=8.0)
    p.add_argument("--split", default="train")

    p = add("train", cmd_train, "train a recogniser on a dataset directory")
    p.add_argument("--data", required=True)
    p.add_argument("--kind", choices=("linear", "mlp"), default="linear")
    p.add_argument("--hidden", type=int, default=64)
    p.add_argument("--epochs", type=int, default=60)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--batch", type=int, default=20)

    p = add("attack", cmd_attack, "perturb one image")
    p.add_argument("--model", required=True)
    p.add_argument("--image", required=True, help="PGM or TNSR input")
    p.add_argument("--label", type=int, required=True)
    p.add_argument("--method", default="gaman")
    p.add_argument("--pgm", default=None, help="also write the perturbed image as PGM")

    for name, fn, text in (
        ("payoff", cmd_payoff, "build a payoff table on the toy pipeline"),
        ("sweep", cmd_sweep, "post-Proc accuracy against the L2 budget"),
    ):
        p = add(name, fn, text)
        p.add_argument("--model", default=None)
        p.add_argument("--data", default=None)
        p.add_argument("--trials", type=int, default=1)
        p.add_argument("--workers", type=int, default=1)
    sub.choices["payoff"].add_argument("--users", default="none,gaman,gaman/t,gaman/n,gaman/b,gaman/c,gaman/tnbc")
    sub.choices["payoff"].add_argument("--recognisers", default="none,proc,t,n,b,c,tnbc")
    sub.choices["sweep"].add_argument("--methods", default="fgv,fgs,ga,bi,df,gaman")
    sub.choices["sweep"].add_argument("--schedule", default=None, help="comma-separated budgets")

    p = add("solve", cmd_solve, "analyse a payoff table CSV")
    p.add_argument("--table", required=True)

    p = add("verify-paper", cmd_verify_paper, "solve the embedded published payoff tables")
    p.add_argument("--fixtures", default=None, help="directory overriding the shipped fixtures")

    p = add("selective", cmd_selective, "attack some recognisers while sparing others")
    p.add_argument("--malicious", type=int, default=1)
    p.add_argument("--benign", type=int, default=1)
    p.add_argument("--schedule", default=None)
    p.add_argument("--workers", type=int, default=1)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    try:
        code = args.func(args)
    except FixtureError as exc:
        print(f"fixture error: {exc}", file=sys.stderr)
        return EXIT_FIXTURE
    except (ValueError, ArithmeticError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK if code is None else code


if __name__ == "__main__":
    sys.exit(main())
