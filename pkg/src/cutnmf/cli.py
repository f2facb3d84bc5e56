"""Command line entry point: ``cutnmf {converge,evaluate,report,gen-synthetic}``.

Any long flag can also be set in a ``--config`` file, one ``name = value``
per line (``#`` starts a comment, list values are space separated).
Command line flags take precedence over the file.
"""
from __future__ import annotations

import argparse
import logging
import shlex
import sys
from pathlib import Path

from .baselines import KnnConfig, RegNmfConfig
from .data import (DatasetSpec, SyntheticSpec, generate_synthetic, write_csv,
                   write_ground_truth)
from .harness import (ALGORITHMS, ExperimentConfig, render_report, run_accuracy_study,
                      run_convergence_study)
from .nnls import NnlsOptions
from .ratings import RatingScale

FORMATS = ("movielens_100k", "movielens_1m", "movielens_10m", "generic_csv")


def read_config_file(path) -> list[str]:
    """Turn ``name = value`` lines into ``--name value`` arguments."""
    args = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SystemExit(f"{path}:{lineno}: expected 'name = value'")
        name, value = (s.strip() for s in line.split("=", 1))
        args.append("--" + name.replace("_", "-"))
        args.extend(shlex.split(value))
    return args


def _shared(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="file of 'name = value' defaults")
    p.add_argument("--dataset", type=Path, help="ratings file")
    p.add_argument("--format", choices=FORMATS, default="movielens_100k")
    p.add_argument("--k", type=int, nargs="+", default=[10], help="ranks to sweep")
    p.add_argument("--jmax", type=int, default=2000,
                   help="outer iteration budget (the published runs used 80000)")
    p.add_argument("--tol", type=float, default=1e-7)
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--out", type=Path, default=Path("runs"))
    p.add_argument("--trace-every", type=int, default=10)
    p.add_argument("--inner-sweeps", type=int, default=2)
    p.add_argument("--coord-tol", type=float, default=1e-9)
    p.add_argument("--cyclic", action="store_true",
                   help="cyclic instead of greedy coordinate selection")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cutnmf", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    conv = sub.add_parser("converge", help="fit all observed ratings, trace convergence")
    _shared(conv)

    ev = sub.add_parser("evaluate", help="train/test accuracy study")
    _shared(ev)
    ev.add_argument("--split", type=float, default=0.8, help="training fraction")
    ev.add_argument("--algo", nargs="+", choices=ALGORITHMS, default=["cutnmf"])
    ev.add_argument("--eval-sets", nargs="+", choices=("omega80", "theta20"),
                    default=["omega80", "theta20"])
    ev.add_argument("--neighbors", type=int, default=40)
    ev.add_argument("--min-overlap", type=int, default=3)
    ev.add_argument("--nmf-iterations", type=int, default=200)
    ev.add_argument("--rnmf-lambda", type=float, default=0.05)
    ev.add_argument("--rnmf-lr", type=float, default=0.005)
    ev.add_argument("--rnmf-epochs", type=int, default=50)

    rep = sub.add_parser("report", help="merge results.csv files into a summary")
    rep.add_argument("results", nargs="+", type=Path)
    rep.add_argument("--out", type=Path, default=Path("runs"))

    gen = sub.add_parser("gen-synthetic", help="write a planted low-rank dataset")
    gen.add_argument("--config", type=Path)
    gen.add_argument("--n-users", type=int, default=1000)
    gen.add_argument("--n-items", type=int, default=5000)
    gen.add_argument("--rank", type=int, default=20)
    gen.add_argument("--observed", type=int, default=500_000)
    gen.add_argument("--v-max", type=int, default=5)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", type=Path, default=Path("runs/synthetic"))
    return parser


def parse_args(argv=None) -> argparse.Namespace:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        # file values go first so that explicit flags override them
        args = parser.parse_args([argv[0], *read_config_file(args.config), *argv[1:]])
    return args


def _experiment(args, **extra) -> ExperimentConfig:
    if args.dataset is None:
        raise SystemExit("--dataset is required")
    return ExperimentConfig(
        dataset=DatasetSpec(args.format, args.dataset, RatingScale()),
        k_list=tuple(args.k), j_max=args.jmax, tol=args.tol, seed=args.seed,
        output=args.out, trace_every=args.trace_every,
        nnls=NnlsOptions(args.inner_sweeps, args.coord_tol, not args.cyclic),
        **extra)


def main(argv=None) -> int:
    args = parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False)
                        else logging.WARNING, format="%(asctime)s %(message)s")
    if args.command == "converge":
        run_convergence_study(_experiment(args))
    elif args.command == "evaluate":
        cfg = _experiment(
            args, algorithms=tuple(args.algo), split=args.split,
            eval_sets=tuple(args.eval_sets),
            knn=KnnConfig(args.neighbors, args.min_overlap),
            nmf_iterations=args.nmf_iterations,
            rnmf=RegNmfConfig(lam=args.rnmf_lambda, learning_rate=args.rnmf_lr,
                              epochs=args.rnmf_epochs))
        run_accuracy_study(cfg)
    elif args.command == "report":
        render_report(args.results, args.out)
    elif args.command == "gen-synthetic":
        spec = SyntheticSpec(args.n_users, args.n_items, args.rank, args.observed,
                             args.seed, RatingScale(v_max=args.v_max))
        ratings, truth = generate_synthetic(spec)
        args.out.mkdir(parents=True, exist_ok=True)
        write_csv(ratings, args.out / "ratings.csv")
        write_ground_truth(truth, args.out / "truth.csv")
    return 0


if __name__ == "__main__":
    sys.exit(main())
