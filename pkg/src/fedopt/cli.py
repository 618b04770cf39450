"""Command-line front end: ``fedopt {generate,partition,train,compare,stats}``.

Exit codes: 0 success, 1 usage or input error, 2 numerical failure.
Every command also takes ``--config FILE`` (flat key=value, keys named like
the long flags); explicit flags win over the file.
"""
from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

import numpy as np

from . import harness
from .errors import DomainError, NumericalError, SearchError, SvmlightParseError
from .io import fmt_float, load_svmlight, read_config, write_svmlight, write_traces
from .model import Dataset
from .partition import (Partition, PartitionKind, PartitionSpec, compute_stats, make_partition,
                        partition_reshuffled, read_partition, write_partition)

DEFAULT_DATA_SEED = 42
COMPARE_ALGOS = "gd,fsvrg,fsvrgr"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


def _bool(text: str) -> bool:
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {text!r}")


def _add_data_flags(p):
    p.add_argument("--data", help="training set (svmlight); default: bundled synthetic instance")
    p.add_argument("--test", help="test set (svmlight), used for classification error")
    p.add_argument("--dim", type=int, help="feature dimension (default: largest index seen)")
    p.add_argument("--loss", choices=("logistic", "quadratic"), default="logistic")
    p.add_argument("--lambda", dest="lam", type=float, help="L2 weight (default 1/n)")
    p.add_argument("--partition", help="partition file, one line of example indices per node")
    p.add_argument("--kind", choices=[k.value for k in PartitionKind], default="clustered",
                   help="how to partition when no --partition file is given")
    p.add_argument("--nodes", type=int, help="number of nodes (default: number of groups)")
    p.add_argument("--exponent", type=float, default=1.0, help="power-law size exponent")
    p.add_argument("--partition-seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fedopt", description="Federated optimization simulator.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write a synthetic clustered dataset")
    g.add_argument("--config")
    g.add_argument("--spec", help="key=value file with synthetic-data fields (n, d, groups, ...)")
    g.add_argument("--preset", choices=("benchmark", "small"), default="small")
    g.add_argument("--seed", type=int)
    g.add_argument("--out", help="output directory (required)")

    p = sub.add_parser("partition", help="split a dataset over nodes")
    p.add_argument("--config")
    _add_data_flags(p)
    p.add_argument("--out", help="partition file (default stdout)")

    t = sub.add_parser("train", help="run one algorithm and write its trace")
    t.add_argument("--config")
    _add_data_flags(t)
    t.add_argument("--algo", choices=harness.ALGORITHMS, default="fsvrg")
    t.add_argument("--rounds", type=int, default=30)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--h", type=float, help="stepsize (default depends on --algo)")
    t.add_argument("--m", type=int, help="local steps for svrg, fsvrg-naive, dane's svrg solver")
    t.add_argument("--eta", type=float, default=1.0)
    t.add_argument("--mu", type=float, default=0.0)
    t.add_argument("--local-solver", choices=("exact", "svrg"), default="exact")
    t.add_argument("--sigma", type=float)
    t.add_argument("--no-scaling", dest="scaling", action="store_false",
                   help="FSVRG without the S_k and A scalings")
    t.add_argument("--passes", type=int, default=1)
    t.add_argument("--eval-every", type=int, default=1)
    t.add_argument("--workers", type=int, default=1)
    t.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    t.add_argument("--out", help="trace file (default stdout)")

    c = sub.add_parser("compare", help="run several algorithms on one instance, merged trace")
    c.add_argument("--config")
    _add_data_flags(c)
    c.add_argument("--algos", default=COMPARE_ALGOS,
                   help="comma list; 'fsvrgr' is fsvrg on a reshuffled copy of the partition")
    c.add_argument("--rounds", type=int, default=30)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--tune", type=_bool, default=True, help="grid-search each stepsize")
    c.add_argument("--workers", type=int, default=1)
    c.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    c.add_argument("--out", help="merged trace file (default stdout)")

    s = sub.add_parser("stats", help="per-feature sparsity statistics of a partition")
    s.add_argument("--config")
    _add_data_flags(s)
    s.add_argument("--out", help="per-feature CSV (feature, count, omega, a)")
    return parser


def _config_path(argv):
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if tok.startswith("--config="):
            return tok.split("=", 1)[1]
    return None


def _parse(parser, argv):
    argv = list(sys.argv[1:] if argv is None else argv)
    path = _config_path(argv)
    if path and argv and argv[0] in COMMANDS:
        sub = parser._subparsers._group_actions[0].choices[argv[0]]
        cfg = read_config(path)
        cfg["lam"] = cfg.pop("lambda", cfg.get("lam"))
        if cfg["lam"] is None:
            del cfg["lam"]
        dests = {a.dest: a for a in sub._actions}
        unknown = sorted(set(cfg) - set(dests) - {"config"})
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(unknown)}")
        for key, value in cfg.items():
            if isinstance(dests.get(key), argparse._StoreFalseAction):
                cfg[key] = _bool(value)
        sub.set_defaults(**cfg)
    return parser.parse_args(argv)


# -- data loading ------------------------------------------------------------------

def _default_instance(args) -> tuple[Dataset, Dataset]:
    spec = harness.small_benchmark_spec(DEFAULT_DATA_SEED)
    if args.loss == "quadratic":
        spec = dataclasses.replace(spec, label_model="ridge")
    return harness.generate_synthetic(spec)


def load_problem(args) -> tuple[Dataset, Dataset | None, Partition]:
    if args.data:
        train = load_svmlight(args.data, args.dim, args.loss)
        train = train.with_lambda(1.0 / train.n)
        test = load_svmlight(args.test, train.dim, args.loss) if args.test else None
    else:
        if args.test:
            raise UsageError("--test needs --data")
        train, test = _default_instance(args)
    if args.lam is not None:
        train = train.with_lambda(args.lam)
    if test is not None:
        test = test.with_lambda(train.lam)
    return train, test, _partition(args, train)


def _partition(args, train: Dataset) -> Partition:
    if args.partition:
        with open(args.partition, encoding="utf-8") as fh:
            part = read_partition(fh)
        if part.n != train.n:
            raise DomainError(f"partition covers {part.n} examples, dataset has {train.n}")
        return part
    K = args.nodes
    if K is None:
        if train.groups is None:
            raise UsageError("--nodes is required when the data carries no group ids")
        K = int(np.unique(train.groups).size)
    return make_partition(train, PartitionSpec(args.kind, K, args.exponent, args.partition_seed))


def _emit(text: str, out):
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


# -- commands ----------------------------------------------------------------------

def _synthetic_spec(args) -> harness.SyntheticSpec:
    spec = harness.benchmark_spec() if args.preset == "benchmark" else harness.small_benchmark_spec()
    if args.spec:
        fields = {f.name: f for f in dataclasses.fields(harness.SyntheticSpec)}
        updates = {}
        for key, value in read_config(args.spec).items():
            if key not in fields:
                raise UsageError(f"unknown synthetic-spec field {key!r}")
            updates[key] = _coerce(key, value, getattr(spec, key))
        spec = dataclasses.replace(spec, **updates)
    if args.seed is not None:
        spec = dataclasses.replace(spec, seed=args.seed)
    return spec


def _coerce(key, value, current):
    if value.lower() in ("none", ""):
        return None
    if key == "label_model":
        return value
    try:
        if isinstance(current, int) and not isinstance(current, bool) or key in ("min_group", "max_group"):
            return int(value)
        return float(value)
    except ValueError:
        raise UsageError(f"bad value for {key}: {value!r}") from None


def cmd_generate(args) -> int:
    if not args.out:
        raise UsageError("generate needs --out")
    spec = _synthetic_spec(args)
    train, test = harness.generate_synthetic(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, ds in (("train.svm", train), ("test.svm", test)):
        with open(out / name, "w", encoding="utf-8") as fh:
            write_svmlight(ds, fh)
    part = make_partition(train, PartitionSpec(PartitionKind.CLUSTERED, spec.groups))
    with open(out / "partition.txt", "w", encoding="utf-8") as fh:
        write_partition(part, fh)
    lines = [f"{f.name} = {getattr(spec, f.name)}" for f in dataclasses.fields(spec)]
    (out / "spec.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote {train.n} train / {test.n} test points, d={train.dim}, "
          f"{spec.groups} groups to {out}", file=sys.stderr)
    return 0


def cmd_partition(args) -> int:
    train, _, part = load_problem(args)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            write_partition(part, fh)
    else:
        write_partition(part, sys.stdout)
    return 0


def _config(args, train, test, part, algorithm, **kw) -> harness.ExperimentConfig:
    return harness.ExperimentConfig(dataset=train, algorithm=algorithm, rounds=args.rounds,
                                    partition=part, test=test, seed=args.seed,
                                    workers=args.workers, **kw)


def cmd_train(args) -> int:
    train, test, part = load_problem(args)
    cfg = _config(args, train, test, part, args.algo, h=args.h, m=args.m, eta=args.eta,
                  mu=args.mu, local_solver=args.local_solver, sigma=args.sigma,
                  use_scaling=args.scaling, passes=args.passes, eval_every=args.eval_every)
    trace = harness.run_experiment(cfg)
    _emit(write_traces([(None, trace)], args.format), args.out)
    fin = trace.final
    print(f"{args.algo}: round {fin.round} objective {fin.objective:.10g} gap {fin.gap:.3e}",
          file=sys.stderr)
    return 0


def cmd_compare(args) -> int:
    train, test, part = load_problem(args)
    names = [a.strip() for a in args.algos.split(",") if a.strip()]
    if not names:
        raise UsageError("--algos is empty")
    results = []
    for name in names:
        algo, p = name, part
        if name == "fsvrgr":
            algo, p = "fsvrg", partition_reshuffled(train, part, args.seed + 1)
        if algo not in harness.ALGORITHMS:
            raise UsageError(f"unknown algorithm {name!r}")
        cfg = _config(args, train, test, p, algo)
        if args.tune:
            h, trace = harness.grid_search_stepsize(cfg, harness.default_grid(algo, train, p))
        else:
            trace = harness.run_experiment(cfg)
            h = None
        results.append((name, trace))
        print(f"{name}: h={h!r} final gap {trace.final.gap:.3e}", file=sys.stderr)
    _emit(write_traces(results, args.format), args.out)
    return 0


def cmd_stats(args) -> int:
    train, _, part = load_problem(args)
    st = compute_stats(train, part)
    omega, counts = np.unique(st.omega, return_counts=True)
    lines = ["omega,features"] + [f"{o},{c}" for o, c in zip(omega.tolist(), counts.tolist())]
    sys.stdout.write("\n".join(lines) + "\n")
    if args.out:
        rows = ["feature,count,omega,a"]
        rows += [f"{j},{int(st.global_count[j])},{int(st.omega[j])},{fmt_float(st.a[j])}"
                 for j in range(st.dim)]
        Path(args.out).write_text("\n".join(rows) + "\n", encoding="utf-8")
    return 0


COMMANDS = {"generate": cmd_generate, "partition": cmd_partition, "train": cmd_train,
            "compare": cmd_compare, "stats": cmd_stats}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _parse(parser, argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return 0 if exc.code in (None, 0) else 1
    except (NumericalError, SearchError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DomainError, SvmlightParseError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
