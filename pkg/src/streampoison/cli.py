"""Command-line front end.

Subcommands: `semi` (threshold sweep judged on the final model), `fully`
(live-stream sweep judged on online error), `regime` (print the verdict and
threshold boundaries for a geometry), `verify` (run the verification
suites), and `gen` (write a synthetic dataset to CSV). Runs are
deterministic given --seed/--seeds; a JSON file passed via --config
overrides built-in defaults, and explicit flags override both. Output paths
default into $STREAMPOISON_OUTDIR (falling back to the working directory).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import __version__
from .defenses import fit_centroid_stats
from .errors import StreamPoisonError
from .harness import (
    SWEEP_DEFENSES,
    emit_plot,
    emit_results,
    plot_boundaries,
    run_fully_online,
    run_semi_online,
)
from .regimes import classify_centroid, classify_norm_ball, classify_slab, regime_boundaries
from .tasks import gen_basis_indices, gen_gaussian_task, gen_sign_task, load_csv_dataset
from .verification import run_suites

_ATTACK_CHOICES = ("simplistic", "greedy", "semi_online_wk", "concentrated")


def _floats(text: str) -> list[float]:
    return [float(p) for p in text.split(",") if p.strip()]


def _ints(text: str) -> list[int]:
    return [int(p) for p in text.split(",") if p.strip()]


def _vector(text: str) -> np.ndarray:
    return np.asarray(_floats(text), dtype=np.float64)


def _outdir() -> str:
    return os.environ.get("STREAMPOISON_OUTDIR", ".")


def _dataset_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dataset", help="CSV file with features and a label column")
    p.add_argument("--label-column", default="label",
                   help="label column name or 0-based index (default: label)")
    p.add_argument("--split", default="0.2,0.6,0.2",
                   help="init,train,test sizes as fractions or counts")
    p.add_argument("--dim", type=int, default=2, help="synthetic task dimension")
    p.add_argument("--mean-sep", type=float, default=6.0, help="synthetic class separation")
    p.add_argument("--noise", type=float, default=1.0, help="synthetic noise scale")
    p.add_argument("--n", type=int, default=1000, help="synthetic sample count")
    p.add_argument("--data-seed", type=int, default=0, help="seed for synthetic data / shuffling")


def _load_bundle(args):
    split = [int(s) if float(s) == int(float(s)) and float(s) > 1 else float(s)
             for s in args.split.split(",")]
    if args.dataset:
        label = args.label_column
        if isinstance(label, str) and label.lstrip("-").isdigit():
            label = int(label)
        return load_csv_dataset(args.dataset, label, split, seed=args.data_seed)
    return gen_gaussian_task(args.dim, args.mean_sep, args.noise, args.n,
                             seed=args.data_seed, split_sizes=split)


def _apply_config(args: argparse.Namespace, argv: list[str]) -> argparse.Namespace:
    """Overlay --config JSON values onto defaults the user did not override."""
    if not getattr(args, "config", None):
        return args
    with open(args.config) as fh:
        overrides = json.load(fh)
    aliases = {"budget": ("-K",), "horizon": ("-T",)}

    def was_explicit(dest: str) -> bool:
        flag = "--" + dest.replace("_", "-")
        if any(a == flag or a.startswith(flag + "=") for a in argv):
            return True
        return any(a in argv for a in aliases.get(dest, ()))

    for key, value in overrides.items():
        dest = key.replace("-", "_")
        if hasattr(args, dest) and not was_explicit(dest):
            setattr(args, dest, value)
    return args


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="streampoison",
        description="Poisoning attacks and filtering defenses for streaming logistic regression.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    semi = sub.add_parser("semi", help="threshold sweep judged on the final model")
    _dataset_flags(semi)
    semi.add_argument("--defense", required=True, choices=SWEEP_DEFENSES)
    semi.add_argument("--attack", action="append", choices=_ATTACK_CHOICES,
                      help="repeatable; default: simplistic")
    semi.add_argument("--tau-grid", default="10,20,30,40,50,60,70,80,90,100",
                      help="threshold percentiles over clean train scores")
    semi.add_argument("-K", "--budget", type=int, default=100, help="insertions per attack")
    semi.add_argument("--eta", type=float, default=0.01, help="learner step size")
    semi.add_argument("--seeds", default="0", help="comma-separated attack seeds")
    semi.add_argument("--norm-cap", type=float, help="feature norm cap (default: max train norm)")
    semi.add_argument("--tolerance", type=float, default=1e-3)
    semi.add_argument("--format", choices=("csv", "json"), default="csv")
    semi.add_argument("--out", help="results file (default: <outdir>/semi_<defense>.<fmt>)")
    semi.add_argument("--plot", help="SVG file (default: <outdir>/semi_<defense>.svg)")
    semi.add_argument("--no-plot", action="store_true")
    semi.add_argument("--config", help="JSON file of flag defaults")

    fully = sub.add_parser("fully", help="live-stream sweep judged on online error")
    _dataset_flags(fully)
    fully.add_argument("--defense", required=True, choices=SWEEP_DEFENSES)
    fully.add_argument("--attack", action="append",
                       choices=tuple(a for a in _ATTACK_CHOICES if a != "concentrated"),
                       help="repeatable; default: simplistic")
    fully.add_argument("--retention-grid", default="0.3,0.5,0.7,0.9,1.0",
                       help="clean retention fractions for calibration")
    fully.add_argument("--budget-fraction", type=float, default=0.1,
                       help="share of the horizon given to the attacker")
    fully.add_argument("-T", "--horizon", type=int, default=1000)
    fully.add_argument("--eta", type=float, default=0.01)
    fully.add_argument("--seeds", default=",".join(str(i) for i in range(10)))
    fully.add_argument("--norm-cap", type=float)
    fully.add_argument("--tolerance", type=float, default=1e-3)
    fully.add_argument("--format", choices=("csv", "json"), default="csv")
    fully.add_argument("--out")
    fully.add_argument("--plot")
    fully.add_argument("--no-plot", action="store_true")
    fully.add_argument("--config", help="JSON file of flag defaults")

    regime = sub.add_parser("regime", help="print verdicts and threshold boundaries")
    regime.add_argument("--defense", required=True, choices=SWEEP_DEFENSES)
    regime.add_argument("--mu-plus", help="positive centroid, comma-separated")
    regime.add_argument("--mu-minus", help="negative centroid, comma-separated")
    regime.add_argument("--tau", type=float, help="defense threshold")
    regime.add_argument("--target", required=True, help="target model, comma-separated")
    regime.add_argument("--theta0", help="initial model (default: zero)")
    regime.add_argument("--theta-clean", help="clean reference model (default: theta0)")
    regime.add_argument("--radius", type=float, default=10.0, help="feature norm cap")
    regime.add_argument("--eta", type=float, default=1.0)
    regime.add_argument("--json", action="store_true", help="emit the verdict as JSON")

    verify = sub.add_parser("verify", help="run the verification suites")
    verify.add_argument("--quick", action="store_true",
                        help="smaller statistical scales (smoke test)")

    gen = sub.add_parser("gen", help="write a synthetic dataset to CSV")
    gen.add_argument("--kind", choices=("gaussian", "sign", "basis"), default="gaussian")
    gen.add_argument("--n", type=int, default=1000)
    gen.add_argument("--dim", type=int, default=2)
    gen.add_argument("--mean-sep", type=float, default=6.0)
    gen.add_argument("--noise", type=float, default=1.0)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", help="CSV path (default: <outdir>/<kind>.csv)")
    return parser


def _cmd_semi(args) -> int:
    bundle = _load_bundle(args)
    attacks = tuple(args.attack) if args.attack else ("simplistic",)
    records = run_semi_online(
        bundle, args.defense, attacks=attacks, tau_percentiles=_floats(args.tau_grid),
        budget=args.budget, learning_rate=args.eta, seeds=_ints(str(args.seeds)),
        norm_cap=args.norm_cap, tolerance=args.tolerance)
    config = {"command": "semi", "dataset": bundle.name, "defense": args.defense,
              "attacks": list(attacks), "tau_grid": _floats(args.tau_grid),
              "K": args.budget, "eta": args.eta, "seeds": _ints(str(args.seeds))}
    out = args.out or os.path.join(_outdir(), f"semi_{args.defense}.{args.format}")
    emit_results(records, args.format, out, config=config)
    print(f"wrote {len(records)} records to {out}")
    if not args.no_plot:
        plot = args.plot or os.path.join(_outdir(), f"semi_{args.defense}.svg")
        bounds = plot_boundaries(bundle, args.defense, learning_rate=args.eta)
        emit_plot(records, plot, x="tau", y="cos_to_target", boundaries=bounds,
                  title=f"{bundle.name}: {args.defense} defense")
        print(f"wrote plot to {plot}")
    return 0


def _cmd_fully(args) -> int:
    bundle = _load_bundle(args)
    attacks = tuple(args.attack) if args.attack else ("simplistic",)
    records = run_fully_online(
        bundle, args.defense, attacks=attacks, retention_grid=_floats(args.retention_grid),
        budget_fraction=args.budget_fraction, horizon=args.horizon,
        seeds=_ints(str(args.seeds)), norm_cap=args.norm_cap, learning_rate=args.eta,
        tolerance=args.tolerance)
    config = {"command": "fully", "dataset": bundle.name, "defense": args.defense,
              "attacks": list(attacks), "retention_grid": _floats(args.retention_grid),
              "budget_fraction": args.budget_fraction, "T": args.horizon,
              "eta": args.eta, "seeds": _ints(str(args.seeds))}
    out = args.out or os.path.join(_outdir(), f"fully_{args.defense}.{args.format}")
    emit_results(records, args.format, out, config=config)
    print(f"wrote {len(records)} records to {out}")
    if not args.no_plot:
        plot = args.plot or os.path.join(_outdir(), f"fully_{args.defense}.svg")
        emit_plot(records, plot, x="retention", y="online_error",
                  baseline=records[0].offline_optimal_error,
                  title=f"{bundle.name}: {args.defense} defense")
        print(f"wrote plot to {plot}")
    return 0


def _cmd_regime(args) -> int:
    target = _vector(args.target)
    theta0 = _vector(args.theta0) if args.theta0 else np.zeros_like(target)
    theta_clean = _vector(args.theta_clean) if args.theta_clean else theta0.copy()
    stats = None
    if args.defense == "l2":
        verdict = classify_norm_ball(args.radius, args.eta, theta0, target, theta_clean)
    else:
        if not (args.mu_plus and args.mu_minus and args.tau is not None):
            print("error: centroid/slab regimes need --mu-plus, --mu-minus, and --tau",
                  file=sys.stderr)
            return 2
        X = np.stack([_vector(args.mu_plus), _vector(args.mu_minus)])
        stats = fit_centroid_stats(X, np.array([1, -1], dtype=np.int64))
        classify = classify_centroid if args.defense == "centroid" else classify_slab
        verdict = classify(stats, args.tau, theta0, target, theta_clean,
                           learning_rate=args.eta, radius=args.radius)
    tau_easy, tau_hard = regime_boundaries(args.defense, stats, theta0, target, theta_clean)
    if args.json:
        print(json.dumps({"verdict": verdict.to_config(),
                          "tau_easy": tau_easy, "tau_hard": tau_hard}, indent=1))
        return 0
    print(f"verdict: {verdict.kind}")
    if verdict.constant is not None:
        print(f"insertion-rate constant: {verdict.constant:.6g}")
    if verdict.segment is not None:
        print(f"feasible segment: radius {verdict.segment.radius:.6g} along "
              f"{verdict.segment.direction.tolist()}")
    if verdict.witness is not None:
        print(f"halfspace witness: normal {verdict.witness.normal.tolist()} "
              f"excludes {verdict.witness.excluded_direction.tolist()}")
    if verdict.note:
        print(f"note: {verdict.note}")
    print(f"threshold boundaries: easy above {tau_easy}, "
          f"hard at or below {tau_hard if tau_hard is not None else 'n/a'}")
    return 0


def _cmd_verify(args) -> int:
    results = run_suites(quick=args.quick)
    for res in results:
        print(res.report())
    failed = [r.name for r in results if not r.ok]
    if failed:
        print(f"FAILED: {', '.join(failed)}", file=sys.stderr)
        return 1
    print("all verification suites passed")
    return 0


def _cmd_gen(args) -> int:
    out = args.out or os.path.join(_outdir(), f"{args.kind}.csv")
    rng = np.random.default_rng(args.seed)
    if args.kind == "gaussian":
        v = rng.normal(size=args.dim)
        v /= np.linalg.norm(v)
        y = (rng.integers(0, 2, size=args.n) * 2 - 1).astype(np.int64)
        X = y[:, None] * (args.mean_sep / 2.0) * v + args.noise * rng.normal(size=(args.n, args.dim))
    elif args.kind == "sign":
        stream = gen_sign_task(args.n, seed=rng)
        X, y = stream.X, stream.y
    else:
        indices, signs = gen_basis_indices(args.dim, args.n, seed=rng)
        X = np.zeros((args.n, args.dim))
        X[np.arange(args.n), indices] = signs
        y = signs
    with open(out, "w") as fh:
        dim = X.shape[1]
        fh.write(",".join([f"f{i}" for i in range(dim)] + ["label"]) + "\n")
        for row, label in zip(X, y):
            fh.write(",".join(repr(float(v)) for v in row) + f",{int(label)}\n")
    print(f"wrote {args.n} examples to {out}")
    return 0


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = _build_parser()
    args = parser.parse_args(argv)
    if hasattr(args, "config"):
        args = _apply_config(args, argv)
    handlers = {"semi": _cmd_semi, "fully": _cmd_fully, "regime": _cmd_regime,
                "verify": _cmd_verify, "gen": _cmd_gen}
    try:
        return handlers[args.command](args)
    except StreamPoisonError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
