"""Command-line entry point: ``openal run|synth|score|report``."""

import argparse
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor

from . import engine, ftss
from . import pool as poolmod
from .config import ConfigError, apply_overrides, dump_config, load_config, load_synth_spec
from .strategies import STRATEGIES

log = logging.getLogger("openal")


class CliError(Exception):
    pass


def _threads():
    raw = os.environ.get("OPENAL_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise CliError(f"OPENAL_THREADS must be an integer, got {raw!r}") from None


def _ensure_dir(path):
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise CliError(f"cannot create output directory {path}: {exc.strerror}") from None
    if not os.access(path, os.W_OK):
        raise CliError(f"output directory {path} is not writable")


def cmd_run(args):
    cfg = apply_overrides(load_config(args.config), seed=args.seed, strategy=args.strategy)
    flags = {k: True for k in ("disable_sw", "disable_st", "disable_miss", "only_miss") if getattr(args, k)}
    if flags:
        cfg = engine.with_overrides(cfg, **flags).validate()
    _ensure_dir(args.out)
    with open(os.path.join(args.out, "effective.cfg"), "w") as fh:
        fh.write(dump_config(cfg))
    diag = os.path.join(args.out, "diagnostics") if args.verbose >= 2 else None

    seeds = [int(s) for s in cfg.seeds]
    results, failed = {}, {}
    workers = min(_threads(), len(seeds))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            futures = {s: ex.submit(engine.run_seed, cfg, s, None, diag) for s in seeds}
            for s, fut in futures.items():
                try:
                    results[s] = fut.result()
                except Exception as exc:  # report and keep the other seeds
                    failed[s] = exc
    else:
        base = engine.load_source(cfg)
        for s in seeds:
            try:
                results[s] = engine.run_seed(cfg, s, base.copy(), diag)
            except Exception as exc:
                failed[s] = exc

    for s in seeds:
        if s in results:
            engine.write_jsonl(results[s], os.path.join(args.out, f"run_seed{s}.jsonl"))
    if results:
        rows = engine.aggregate(results[s] for s in seeds if s in results)
        engine.write_aggregate_csv(rows, os.path.join(args.out, "aggregate.csv"))
        for r in rows:
            log.info("%s round %d: precision %.3f recall %.3f accuracy %.3f",
                     r["strategy"], r["round"], r["precision_mean"], r["recall_mean"], r["accuracy_mean"])
    if failed:
        for s, exc in failed.items():
            print(f"openal: seed {s} failed: {exc}", file=sys.stderr)
        return 1
    return 0


def cmd_synth(args):
    spec = load_synth_spec(args.spec)
    pool = poolmod.synth_pool(spec)
    out_dir = os.path.dirname(os.path.abspath(args.out))
    _ensure_dir(out_dir)
    if args.out.endswith(".csv"):
        poolmod.write_csv(pool, args.out)
    else:
        poolmod.write_binary(pool, args.out)
    log.info("wrote %d samples (d=%d) to %s", len(pool), pool.dim, args.out)
    return 0


def _read_ids(path):
    with open(path) as fh:
        return [int(tok) for tok in fh.read().replace(",", " ").split()]


def cmd_score(args):
    targets = tuple(int(x) for x in args.targets.split(","))
    pool = poolmod.load_pool(args.pool, targets)
    oracle = engine.OracleView(pool)
    if args.labeled:
        engine.oracle_annotate(pool, oracle, _read_ids(args.labeled))
    lt, ln, U = pool.labeled_target(), pool.queried_nontarget(), pool.unlabeled()
    if len(lt) == 0:
        raise CliError("score needs at least one labeled target sample in --labeled")
    t_clusters = ftss.target_clusters(pool.features[lt], pool.fine[lt])
    w_clusters = ftss.nontarget_clusters(pool.features[ln], args.clusters, args.seed)
    table = ftss.score_table(pool.ids[U], pool.features[U], t_clusters, w_clusters)
    out_dir = os.path.dirname(os.path.abspath(args.out))
    _ensure_dir(out_dir)
    table.to_csv(args.out)
    log.info("scored %d unlabeled samples against %d target / %d non-target clusters",
             len(U), len(t_clusters), len(w_clusters))
    return 0


def _collect_jsonl(paths):
    files = []
    for p in paths:
        if os.path.isdir(p):
            files.extend(os.path.join(p, f) for f in sorted(os.listdir(p)) if f.endswith(".jsonl"))
        elif os.path.isfile(p):
            files.append(p)
        else:
            raise CliError(f"no such run file or directory: {p}")
    if not files:
        raise CliError("no .jsonl run files found")
    return files


def cmd_report(args):
    runs = [engine.read_jsonl(f) for f in _collect_jsonl(args.runs)]
    _ensure_dir(args.out)
    rows = engine.aggregate(runs)
    engine.write_aggregate_csv(rows, os.path.join(args.out, "aggregate.csv"))
    with open(os.path.join(args.out, "curves.csv"), "w") as fh:
        fh.write("strategy,seed,round,precision,recall,accuracy\n")
        for reports in runs:
            for r in reports:
                fh.write(f"{r.strategy},{r.seed},{r.round},{r.precision!r},{r.recall!r},{r.test_accuracy!r}\n")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="openal", description="Open-set active learning experiments.")
    p.add_argument("-v", "--verbose", action="count", default=0,
                   help="-v for progress, -vv also dumps per-round score tables")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment from a config file")
    r.add_argument("--config", required=True)
    r.add_argument("--seed", type=int, help="run only this seed")
    r.add_argument("--strategy", choices=STRATEGIES)
    r.add_argument("--out", default="results")
    for flag in ("disable-sw", "disable-st", "disable-miss", "only-miss"):
        r.add_argument(f"--{flag}", action="store_true", help="openal ablation")
    r.add_argument("-v", "--verbose", action="count", default=0, dest="verbose_sub")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("synth", help="write a synthetic pool (OALF, or CSV for *.csv)")
    s.add_argument("--spec", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    sc = sub.add_parser("score", help="one-shot FTSS score table for a pool")
    sc.add_argument("--pool", required=True)
    sc.add_argument("--targets", required=True, help="comma-separated target class labels")
    sc.add_argument("--labeled", help="file of already-annotated sample ids")
    sc.add_argument("--clusters", type=int, default=9)
    sc.add_argument("--seed", type=int, default=0)
    sc.add_argument("--out", required=True)
    sc.set_defaults(func=cmd_score)

    rp = sub.add_parser("report", help="aggregate JSON-lines runs into CSV tables")
    rp.add_argument("runs", nargs="+", help="run .jsonl files or directories")
    rp.add_argument("--out", required=True)
    rp.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    args.verbose = args.verbose + getattr(args, "verbose_sub", 0)
    level = logging.WARNING if args.verbose == 0 else logging.INFO if args.verbose == 1 else logging.DEBUG
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (CliError, ConfigError, poolmod.PoolError, ValueError) as exc:
        print(f"openal: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"openal: {exc.filename or ''}: {exc.strerror}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
