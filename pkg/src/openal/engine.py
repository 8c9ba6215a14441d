"""Experiment loop: seed labeling, query rounds, simulated annotation, metrics."""

import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import pool as poolmod
from .probe import ProbeConfig, accuracy, train_probe, untrained
from .strategies import (
    STRATEGIES,
    OpenALFlags,
    certainty_select,
    coreset_select,
    openal_select,
    random_select,
    uncertainty_select,
)

log = logging.getLogger(__name__)

# stream tags for per-seed random generators
_SPLIT, _SEED_LABEL, _STRATEGY, _KMEANS = 1, 2, 3, 4


@dataclass
class ExperimentConfig:
    strategy: str = "openal"
    disable_sw: bool = False
    disable_st: bool = False
    disable_miss: bool = False
    only_miss: bool = False
    rounds: int = 7
    seed_fraction: float = 0.01
    budget_fraction: float = 0.05
    candidate_multiplier: int = 2
    W: int = 9
    test_fraction: float = 0.2
    train_after_seed: bool = True
    seeds: tuple = (0, 1, 2, 3)
    probe: ProbeConfig = field(default_factory=ProbeConfig)
    # pool source: "synth", "csv" or "binary"
    source: str = "synth"
    path: str = ""
    target_classes: tuple = (0, 1, 2)
    synth_classes: int = 9
    synth_count: int = 1000
    synth_dim: int = 32
    synth_scale: float = 1.0
    synth_separation: float = 4.0
    synth_seed: int = 0

    def validate(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}; choose from {', '.join(STRATEGIES)}")
        for name in ("seed_fraction", "budget_fraction", "test_fraction"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must be in (0, 1), got {v}")
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        if self.W < 1:
            raise ValueError("W must be >= 1")
        if self.candidate_multiplier < 1:
            raise ValueError("candidate_multiplier must be >= 1")
        if not self.seeds:
            raise ValueError("at least one seed is required")
        if not self.target_classes:
            raise ValueError("target_classes must not be empty")
        if self.source not in ("synth", "csv", "binary"):
            raise ValueError(f"unknown pool source {self.source!r}")
        if self.source != "synth" and not self.path:
            raise ValueError(f"pool source {self.source} needs a path")
        return self

    def flags(self):
        return OpenALFlags(
            self.disable_sw, self.disable_st, self.disable_miss, self.only_miss,
            self.candidate_multiplier, self.W,
        )

    def label(self):
        return self.flags().label() if self.strategy == "openal" else self.strategy


@dataclass
class RoundReport:
    round: int
    strategy: str
    seed: int
    k: int
    l: int
    precision: float
    recall: float
    test_accuracy: float
    class_ratios: list
    labeled_counts: list
    n_labeled_target: int = 0
    n_queried_nontarget: int = 0
    n_unlabeled: int = 0
    seed_target: int = 0
    seed_nontarget: int = 0
    fallback: str = ""
    truncated: bool = False

    def to_json(self):
        return json.dumps(asdict(self), sort_keys=True)


class OracleView:
    """Simulated expert: target/non-target flag for any id, fine label for targets only."""

    def __init__(self, pool):
        self._pool = pool
        self._fine = {c: k for k, c in enumerate(pool.target_classes)}

    def is_target(self, sid):
        pos = self._pool.positions([sid])[0]
        return int(self._pool._labels[pos]) in self._fine

    def fine_label(self, sid):
        pos = self._pool.positions([sid])[0]
        lab = int(self._pool._labels[pos])
        if lab not in self._fine:
            raise PermissionError(f"sample {sid} is non-target; no fine label is given")
        return self._fine[lab]

    def count_targets(self):
        return int(np.isin(self._pool._labels, list(self._fine)).sum())

    def fine_labels(self, ids):
        return np.array([self.fine_label(i) for i in ids], dtype=np.int64)


def fraction_count(fraction, n):
    """ceil(fraction * n) with a guard against 0.01 * 10000 = 100.00000000000001."""
    return max(1, int(math.ceil(fraction * n - 1e-9)))


def oracle_annotate(pool, oracle, ids):
    """Annotate every id; returns (k_m, l_m). Re-annotation is an error."""
    ids = np.asarray(ids, dtype=np.int64)
    if len(np.unique(ids)) != len(ids):
        raise poolmod.PoolError("selection contains duplicate ids")
    positions = pool.positions(ids)
    if np.any(pool.state[positions] != poolmod.UNLABELED):
        raise poolmod.PoolError("selection contains already-annotated samples")
    k = l = 0
    for sid, pos in zip(ids, positions):
        if oracle.is_target(sid):
            pool.mark_target(pos, oracle.fine_label(sid))
            k += 1
        else:
            pool.mark_nontarget(pos)
            l += 1
    pool.check_partition()
    return k, l


def seed_label(pool, oracle, fraction, seed):
    """Annotate a uniform random ceil(fraction * n) sample as the initial labeled set."""
    if len(pool) == 0:
        raise ValueError("cannot seed-label an empty pool")
    n_seed = min(fraction_count(fraction, len(pool)), len(pool))
    rng = np.random.default_rng(seed)
    ids = np.sort(rng.choice(pool.ids, size=n_seed, replace=False))
    return oracle_annotate(pool, oracle, ids)


def compute_metrics(history, n_target, model=None, test_features=None, test_labels=None,
                    labeled_fine=None, n_classes=None):
    """Query metrics for the latest round in ``history`` (a list of (k_j, l_j)).

    precision_m = k_m / (k_m + l_m); recall_m = sum_{j<=m} k_j / n_target.
    """
    if n_target <= 0:
        raise ValueError("n_target must be positive")
    k, l = history[-1]
    precision = k / (k + l) if k + l else 0.0
    recall = sum(kj for kj, _ in history) / n_target
    acc = float("nan")
    if model is not None and test_labels is not None and len(test_labels):
        acc = accuracy(model, test_features, test_labels)
    counts, ratios = [], []
    if labeled_fine is not None:
        K = n_classes if n_classes is not None else int(np.max(labeled_fine, initial=-1)) + 1
        counts = np.bincount(np.asarray(labeled_fine, dtype=np.int64), minlength=K).tolist()
        total = sum(counts)
        ratios = [c / total if total else 0.0 for c in counts]
    return RoundReport(
        round=len(history), strategy="", seed=0, k=int(k), l=int(l),
        precision=float(precision), recall=float(recall), test_accuracy=acc,
        class_ratios=ratios, labeled_counts=counts,
    )


def load_source(cfg):
    targets = tuple(cfg.target_classes)
    if cfg.source == "synth":
        spec = poolmod.make_synth_spec(
            cfg.synth_classes, cfg.synth_count, cfg.synth_dim, targets,
            cfg.synth_scale, cfg.synth_separation, cfg.synth_seed,
        )
        return poolmod.synth_pool(spec)
    if cfg.source == "csv":
        return poolmod.load_csv(cfg.path, targets)
    return poolmod.load_binary(cfg.path, targets)


def _fit(pool, cfg):
    lt = pool.labeled_target()
    K = pool.target_class_count
    if len(lt) == 0:
        return untrained(K, pool.dim)
    return train_probe(pool.features[lt], pool.fine[lt], K, cfg.probe)


def _select(pool, model, budget, cfg, seed, m):
    """Dispatch to the configured strategy; returns (selection, fallback note)."""
    U = pool.unlabeled()
    name = cfg.strategy
    if name == "random":
        return random_select(pool.ids[U], budget, [seed, _STRATEGY, m], m), ""
    if name == "uncertainty":
        return uncertainty_select(pool.ids[U], pool.features[U], model, budget, m), ""
    if name == "certainty":
        return certainty_select(pool.ids[U], pool.features[U], model, budget, m), ""
    if name == "coreset":
        labeled = pool.state != poolmod.UNLABELED
        return coreset_select(pool.ids[U], pool.features[U], pool.features[labeled], budget, m), ""
    flags = cfg.flags()
    needs_targets = not (flags.only_miss or flags.disable_st)
    if needs_targets and len(pool.labeled_target()) == 0:
        sel = random_select(pool.ids[U], budget, [seed, _STRATEGY, m], m)
        sel.strategy = flags.label()
        return sel, "random:no-labeled-targets"
    kseed = int(np.random.SeedSequence([seed, _KMEANS, m]).generate_state(1)[0])
    return openal_select(pool, model, budget, flags, kseed, m), ""


def run_seed(cfg, seed, base_pool=None, diagnostics_dir=None):
    """One full experiment for one seed. Returns the list of per-round reports."""
    cfg.validate()
    base = load_source(cfg) if base_pool is None else base_pool
    train, test = poolmod.split_test(base, cfg.test_fraction, [seed, _SPLIT])
    oracle = OracleView(train)
    n_target = oracle.count_targets()
    test_y = OracleView(test).fine_labels(test.ids)
    K = train.target_class_count

    seed_k, seed_l = seed_label(train, oracle, cfg.seed_fraction, [seed, _SEED_LABEL])
    budget = fraction_count(cfg.budget_fraction, len(train))
    model = _fit(train, cfg) if cfg.train_after_seed else untrained(K, train.dim)
    label = cfg.label()
    log.info("seed %d: %s, n=%d, n_target=%d, budget=%d, seed set %d+%d",
             seed, label, len(train), n_target, budget, seed_k, seed_l)

    history, reports = [], []
    for m in range(1, cfg.rounds + 1):
        U = train.unlabeled()
        if len(U) == 0:
            if reports:
                reports[-1].truncated = True
            log.warning("seed %d: unlabeled pool exhausted before round %d", seed, m)
            break
        want = min(budget, len(U))
        sel, fallback = _select(train, model, want, cfg, seed, m)
        k, l = oracle_annotate(train, oracle, sel.ids)
        if k + l != want:
            raise RuntimeError(f"round {m}: queried {k + l} samples, budget was {want}")
        history.append((k, l))
        model = _fit(train, cfg)
        lt = train.labeled_target()
        rep = compute_metrics(history, n_target, model, test.features, test_y, train.fine[lt], K)
        rep.strategy, rep.seed, rep.fallback = label, int(seed), fallback
        rep.n_labeled_target = int(len(lt))
        rep.n_queried_nontarget = int(len(train.queried_nontarget()))
        rep.n_unlabeled = int(len(train.unlabeled()))
        rep.seed_target, rep.seed_nontarget = int(seed_k), int(seed_l)
        reports.append(rep)
        if diagnostics_dir:
            _dump_diagnostics(diagnostics_dir, seed, m, sel)
        log.debug("seed %d round %d: k=%d l=%d precision=%.3f recall=%.3f acc=%.3f",
                  seed, m, k, l, rep.precision, rep.recall, rep.test_accuracy)
    return reports


def _dump_diagnostics(directory, seed, m, sel):
    os.makedirs(directory, exist_ok=True)
    table = sel.diagnostics.get("scores")
    if table is not None:
        table.to_csv(os.path.join(directory, f"scores_seed{seed}_round{m}.csv"))
    with open(os.path.join(directory, f"selection_seed{seed}_round{m}.txt"), "w") as fh:
        fh.write("\n".join(str(int(i)) for i in sel.ids) + "\n")


def _run_one(args):
    cfg, seed, diagnostics_dir = args
    return run_seed(cfg, seed, diagnostics_dir=diagnostics_dir)


def run_experiment(cfg, workers=1, diagnostics_dir=None):
    """Run every seed in ``cfg.seeds``; returns ({seed: reports}, aggregate rows)."""
    cfg.validate()
    seeds = [int(s) for s in cfg.seeds]
    if workers > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(seeds))) as ex:
            results = list(ex.map(_run_one, [(cfg, s, diagnostics_dir) for s in seeds]))
    else:
        base = load_source(cfg)
        results = [run_seed(cfg, s, base.copy(), diagnostics_dir) for s in seeds]
    by_seed = dict(zip(seeds, results))
    return by_seed, aggregate(by_seed.values())


def aggregate(runs):
    """Per (strategy, round) mean and sample std across runs (std 0 for one run)."""
    groups = {}
    for reports in runs:
        for r in reports:
            groups.setdefault((r.strategy, r.round), []).append(r)
    rows = []
    for (strategy, m), reps in sorted(groups.items()):
        row = {"strategy": strategy, "round": m}
        for key, attr in (("precision", "precision"), ("recall", "recall"), ("accuracy", "test_accuracy")):
            vals = np.array([getattr(r, attr) for r in reps], dtype=np.float64)
            row[f"{key}_mean"] = float(vals.mean())
            row[f"{key}_std"] = float(vals.std(ddof=1)) if len(vals) > 1 else 0.0
        rows.append(row)
    return rows


AGGREGATE_COLUMNS = (
    "strategy", "round", "precision_mean", "precision_std", "recall_mean",
    "recall_std", "accuracy_mean", "accuracy_std",
)


def write_jsonl(reports, path):
    with open(path, "w") as fh:
        for r in reports:
            fh.write(r.to_json() + "\n")


def read_jsonl(path):
    out = []
    with open(path) as fh:
        for line in fh:
            if line.strip():
                out.append(RoundReport(**json.loads(line)))
    return out


def write_aggregate_csv(rows, path):
    with open(path, "w") as fh:
        fh.write(",".join(AGGREGATE_COLUMNS) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(row[c]) for c in AGGREGATE_COLUMNS) + "\n")


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def with_overrides(cfg, **kw):
    return replace(cfg, **{k: v for k, v in kw.items() if v is not None})
